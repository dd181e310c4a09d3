#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "ciao/labels.hpp"
#include "ciao/tensor.hpp"
#include "json.hpp"

namespace ciao {

inline constexpr std::size_t kImageSize = 32;
inline constexpr std::size_t kMultiLabelWidth = 8;

struct Region {
  int x0 = 0, y0 = 0, x1 = static_cast<int>(kImageSize), y1 = static_cast<int>(kImageSize);
  bool contains(std::size_t x, std::size_t y) const {
    return static_cast<int>(x) >= x0 && static_cast<int>(x) < x1 && static_cast<int>(y) >= y0 &&
           static_cast<int>(y) < y1;
  }
};

struct SynthSpec {
  int n_identities = 6;
  int n_expressions = 7;
  int samples_per_cell = 8;
  double noise_std = 0.1;
  std::uint64_t seed = 1;
  LabelKind scheme = LabelKind::categorical;

  double identity_strength = 0.35;
  double expression_strength = 0.15;
  // Expression patterns are centred inside this box (pixel coordinates, [x0,x1) x [y0,y1)).
  Region expression_region{};

  double train_fraction = 0.7;
  bool identity_disjoint = false;
  std::optional<std::uint64_t> split_seed;

  void validate() const {
    if (n_identities < 2) throw ValidationError("n_identities must be >= 2");
    if (n_expressions < 2) throw ValidationError("n_expressions must be >= 2");
    if (samples_per_cell < 1) throw ValidationError("samples_per_cell must be >= 1");
    if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be >= 0");
    if (!(identity_strength >= 0.0) || !(expression_strength >= 0.0))
      throw ValidationError("pattern strengths must be >= 0");
    const auto& r = expression_region;
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > static_cast<int>(kImageSize) || r.y1 > static_cast<int>(kImageSize) ||
        r.x0 >= r.x1 || r.y0 >= r.y1)
      throw ValidationError("expression_region must be a non-empty box inside the 32x32 image");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train_fraction must be in (0,1)");
  }
};

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.n_identities = j.value("n_identities", s.n_identities);
    s.n_expressions = j.value("n_expressions", s.n_expressions);
    s.samples_per_cell = j.value("samples_per_cell", s.samples_per_cell);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.seed = j.value("seed", s.seed);
    if (j.contains("scheme")) s.scheme = parse_label_kind(j.at("scheme").get<std::string>());
    s.identity_strength = j.value("identity_strength", s.identity_strength);
    s.expression_strength = j.value("expression_strength", s.expression_strength);
    if (j.contains("expression_region")) {
      auto r = j.at("expression_region").get<std::array<int, 4>>();
      s.expression_region = {r[0], r[1], r[2], r[3]};
    }
    s.train_fraction = j.value("train_fraction", s.train_fraction);
    s.identity_disjoint = j.value("identity_disjoint", s.identity_disjoint);
    if (j.contains("split_seed")) s.split_seed = j.at("split_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  friend bool operator==(const Split&, const Split&) = default;
};

struct Dataset {
  Tensor images;  // [N, 1, 32, 32], values in [0, 1]
  std::vector<LabelScheme> labels;
  std::vector<int> identities;
  LabelKind kind = LabelKind::categorical;
  std::size_t num_classes = 0;
  Split split;
  std::vector<std::array<float, 2>> av_grid;  // per expression (arousal, valence), dimensional only

  std::size_t size() const { return labels.size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Images with identity labels only; the input type of proxy pretraining.
struct IdentityDataset {
  Tensor images;
  std::vector<int> identities;
  std::size_t num_identities = 0;
};

inline IdentityDataset identity_view(const Dataset& ds) {
  std::set<int> ids(ds.identities.begin(), ds.identities.end());
  // Identity ids are remapped to 0..K-1 in sorted order.
  std::vector<int> sorted(ids.begin(), ids.end());
  IdentityDataset out{ds.images, {}, sorted.size()};
  out.identities.reserve(ds.identities.size());
  for (int id : ds.identities)
    out.identities.push_back(static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), id) - sorted.begin()));
  return out;
}

namespace detail {

inline void add_blob(std::vector<double>& img, double cx, double cy, double sigma, double amp) {
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t y = 0; y < kImageSize; ++y)
    for (std::size_t x = 0; x < kImageSize; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      img[y * kImageSize + x] += amp * std::exp(-(dx * dx + dy * dy) * inv);
    }
}

inline std::size_t class_count(const SynthSpec& s) {
  return s.scheme == LabelKind::multilabel ? kMultiLabelWidth : static_cast<std::size_t>(s.n_expressions);
}

}  // namespace detail

inline Split split_indices(std::size_t n, const std::vector<int>& identities, double fraction, bool identity_disjoint,
                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("split fraction must be in (0,1)");
  std::mt19937_64 rng(seed);
  Split s;
  if (identity_disjoint) {
    std::vector<int> ids(identities.begin(), identities.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) throw ValidationError("identity-disjoint split needs at least 2 identities");
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size()))), 1, ids.size() - 1);
    std::set<int> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    for (std::size_t i = 0; i < n; ++i) (train_ids.count(identities[i]) ? s.train : s.val).push_back(i);
  } else {
    if (n < 2) throw ValidationError("split needs at least 2 samples");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n - 1);
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
  }
  return s;
}

/// `fraction` is the share assigned to the training split (of samples, or of
/// identities when identity_disjoint).
inline Dataset split_train_val(Dataset ds, double fraction, bool identity_disjoint, std::uint64_t seed) {
  ds.split = split_indices(ds.size(), ds.identities, fraction, identity_disjoint, seed);
  return ds;
}

/// Deterministic synthetic faces: identity template + expression pattern + noise.
/// Images depend only on the geometry fields and the seed, never on the label
/// scheme, so one seed yields the same images under every scheme.
inline Dataset generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n_id = static_cast<std::size_t>(spec.n_identities);
  const std::size_t n_ex = static_cast<std::size_t>(spec.n_expressions);
  const std::size_t per = static_cast<std::size_t>(spec.samples_per_cell);
  const std::size_t px = kImageSize * kImageSize;

  std::mt19937_64 pattern_rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](std::mt19937_64& r, double lo, double hi) { return lo + (hi - lo) * unit(r); };

  std::vector<std::vector<double>> templates(n_id, std::vector<double>(px, 0.5));
  for (auto& tpl : templates) {
    for (int m = 0; m < 6; ++m) {
      const double amp = uniform(pattern_rng, -1.0, 1.0) * spec.identity_strength;
      detail::add_blob(tpl, uniform(pattern_rng, 0, kImageSize), uniform(pattern_rng, 0, kImageSize),
                       uniform(pattern_rng, 3.0, 7.0), amp);
    }
    const double fx = uniform(pattern_rng, 0.2, 0.8), fy = uniform(pattern_rng, 0.2, 0.8);
    const double phase = uniform(pattern_rng, 0.0, 6.283185307179586);
    const double amp = 0.25 * spec.identity_strength;
    for (std::size_t y = 0; y < kImageSize; ++y)
      for (std::size_t x = 0; x < kImageSize; ++x)
        tpl[y * kImageSize + x] += amp * std::sin(fx * static_cast<double>(x) + fy * static_cast<double>(y) + phase);
  }

  const auto& r = spec.expression_region;
  std::vector<std::vector<double>> expressions(n_ex, std::vector<double>(px, 0.0));
  for (auto& ex : expressions) {
    for (int m = 0; m < 2; ++m) {
      const double sign = unit(pattern_rng) < 0.5 ? -1.0 : 1.0;
      detail::add_blob(ex, uniform(pattern_rng, r.x0, r.x1), uniform(pattern_rng, r.y0, r.y1),
                       uniform(pattern_rng, 2.0, 3.5), sign * spec.expression_strength);
    }
  }

  Dataset ds;
  ds.kind = spec.scheme;
  ds.num_classes = detail::class_count(spec);
  const std::size_t n = n_id * n_ex * per;
  std::vector<float> pixels;
  pixels.reserve(n * px);
  std::mt19937_64 noise_rng(spec.seed ^ 0x5851F42D4C957F2DULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t id = 0; id < n_id; ++id)
    for (std::size_t e = 0; e < n_ex; ++e)
      for (std::size_t s = 0; s < per; ++s) {
        for (std::size_t p = 0; p < px; ++p) {
          double v = templates[id][p] + expressions[e][p];
          if (spec.noise_std > 0.0) v += spec.noise_std * noise(noise_rng);
          pixels.push_back(static_cast<float>(std::clamp(v, 0.0, 1.0)));
        }
        ds.identities.push_back(static_cast<int>(id));
      }
  ds.images = Tensor({n, 1, kImageSize, kImageSize}, std::move(pixels));

  // Labels draw from their own stream so the scheme never perturbs the images.
  std::mt19937_64 label_rng(spec.seed ^ 0x2545F4914F6CDD1DULL);
  std::vector<std::array<double, kMultiLabelWidth>> attributes(n_ex);
  for (auto& a : attributes)
    for (auto& v : a) v = unit(label_rng);
  if (spec.scheme == LabelKind::dimensional) {
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_ex))));
    for (std::size_t e = 0; e < n_ex; ++e) {
      const double row = static_cast<double>(e / side), col = static_cast<double>(e % side);
      const double step = side > 1 ? 1.6 / static_cast<double>(side - 1) : 0.0;
      ds.av_grid.push_back({static_cast<float>(-0.8 + step * row), static_cast<float>(-0.8 + step * col)});
    }
  }
  std::exponential_distribution<double> gamma1(1.0);
  std::normal_distribution<double> jitter(0.0, 0.05);
  ds.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t e = (i / per) % n_ex;
    switch (spec.scheme) {
      case LabelKind::categorical: ds.labels.emplace_back(Categorical{static_cast<int>(e)}); break;
      case LabelKind::distribution: {
        std::vector<double> d(n_ex);
        double total = 0.0;
        for (auto& v : d) total += (v = gamma1(label_rng));
        std::vector<float> probs(n_ex);
        double fsum = 0.0;
        for (std::size_t j = 0; j < n_ex; ++j) {
          probs[j] = static_cast<float>(0.3 * d[j] / total + (j == e ? 0.7 : 0.0));
          fsum += probs[j];
        }
        for (auto& p : probs) p = static_cast<float>(p / fsum);
        ds.labels.emplace_back(Distribution{std::move(probs)});
        break;
      }
      case LabelKind::multilabel: {
        std::vector<std::uint8_t> flags(kMultiLabelWidth);
        for (std::size_t j = 0; j < kMultiLabelWidth; ++j)
          flags[j] = attributes[e][j] + uniform(label_rng, -0.15, 0.15) > 0.5 ? 1 : 0;
        ds.labels.emplace_back(MultiLabelBinary{std::move(flags)});
        break;
      }
      case LabelKind::dimensional: {
        const auto a = std::clamp(static_cast<double>(ds.av_grid[e][0]) + jitter(label_rng), -1.0, 1.0);
        const auto v = std::clamp(static_cast<double>(ds.av_grid[e][1]) + jitter(label_rng), -1.0, 1.0);
        ds.labels.emplace_back(Dimensional{static_cast<float>(a), static_cast<float>(v)});
        break;
      }
    }
  }
  ds.split = split_indices(n, ds.identities, spec.train_fraction, spec.identity_disjoint,
                           spec.split_seed.value_or(spec.seed));
  return ds;
}

inline nlohmann::json label_to_json(const LabelScheme& label) {
  return std::visit(
      [](const auto& l) -> nlohmann::json {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Categorical>) return l.class_id;
        else if constexpr (std::is_same_v<L, Distribution>) return l.probs;
        else if constexpr (std::is_same_v<L, MultiLabelBinary>) return std::vector<int>(l.flags.begin(), l.flags.end());
        else return nlohmann::json::array({l.arousal, l.valence});
      },
      label);
}

inline LabelScheme label_from_json(const nlohmann::json& j, LabelKind kind) {
  switch (kind) {
    case LabelKind::categorical: return Categorical{j.get<int>()};
    case LabelKind::distribution: return Distribution{j.get<std::vector<float>>()};
    case LabelKind::multilabel: {
      auto v = j.get<std::vector<int>>();
      return MultiLabelBinary{std::vector<std::uint8_t>(v.begin(), v.end())};
    }
    case LabelKind::dimensional: {
      auto v = j.get<std::vector<float>>();
      if (v.size() != 2) throw ValidationError("dimensional label must be [arousal, valence]");
      return Dimensional{v[0], v[1]};
    }
  }
  throw ValidationError("unknown label kind");
}

inline nlohmann::json labels_json(const Dataset& ds) {
  nlohmann::json j;
  j["scheme"] = std::string(to_string(ds.kind));
  j["num_classes"] = ds.num_classes;
  auto& labels = j["labels"] = nlohmann::json::array();
  for (const auto& l : ds.labels) labels.push_back(label_to_json(l));
  j["identities"] = ds.identities;
  j["split"] = {{"train", ds.split.train}, {"val", ds.split.val}};
  if (!ds.av_grid.empty()) j["av_grid"] = ds.av_grid;
  return j;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor(dir / "images.tnsr", ds.images);
  write_file_bytes(dir / "labels.json", labels_json(ds).dump(2) + "\n");
}

/// Reads only labels.json; cheap metadata access.
inline nlohmann::json read_labels_json(const std::filesystem::path& dir) {
  const auto path = dir / "labels.json";
  if (!std::filesystem::exists(path)) throw ValidationError("missing " + path.string());
  try {
    return nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "images.tnsr")) throw ValidationError("missing " + (dir / "images.tnsr").string());
  const nlohmann::json j = read_labels_json(dir);
  Dataset ds;
  ds.images = load_tensor(dir / "images.tnsr");
  const auto& s = ds.images.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != kImageSize || s[3] != kImageSize)
    throw FormatError("images.tnsr must be [N,1,32,32], got " + shape_str(s));
  const std::size_t n = s[0];
  try {
    ds.kind = parse_label_kind(j.at("scheme").get<std::string>());
    ds.num_classes = j.at("num_classes").get<std::size_t>();
    const auto& labels = j.at("labels");
    if (labels.size() != n)
      throw FormatError("labels.json has " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                        " images");
    for (const auto& l : labels) {
      ds.labels.push_back(label_from_json(l, ds.kind));
      validate_label(ds.labels.back(), ds.num_classes);
    }
    ds.identities = j.at("identities").get<std::vector<int>>();
    if (ds.identities.size() != n)
      throw FormatError("labels.json has " + std::to_string(ds.identities.size()) + " identities for " +
                        std::to_string(n) + " images");
    if (j.contains("split")) {
      ds.split.train = j.at("split").at("train").get<std::vector<std::size_t>>();
      ds.split.val = j.at("split").at("val").get<std::vector<std::size_t>>();
      for (auto idx : ds.split.train)
        if (idx >= n) throw FormatError("split index out of range");
      for (auto idx : ds.split.val)
        if (idx >= n) throw FormatError("split index out of range");
    }
    if (j.contains("av_grid")) ds.av_grid = j.at("av_grid").get<std::vector<std::array<float, 2>>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("labels.json: ") + e.what());
  }
  return ds;
}

}  // namespace ciao
