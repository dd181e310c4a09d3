#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ciao/labels.hpp"
#include "ciao/mask.hpp"

namespace ciao {

enum class Scheme { dl, lc, full };

/// Freezing scheme plus whether the inhibitory mask is attached.
struct TrainScheme {
  Scheme scheme = Scheme::dl;
  bool ciao = false;

  std::string label() const {
    std::string s = scheme == Scheme::dl ? "DL" : scheme == Scheme::lc ? "LC" : "Full";
    return ciao ? s + "+CIAO" : s;
  }
  friend bool operator==(const TrainScheme&, const TrainScheme&) = default;
};

inline std::string to_string(Scheme s) { return s == Scheme::dl ? "DL" : s == Scheme::lc ? "LC" : "Full"; }

inline Scheme parse_scheme(std::string_view s) {
  if (s == "DL" || s == "dl") return Scheme::dl;
  if (s == "LC" || s == "lc") return Scheme::lc;
  if (s == "Full" || s == "full") return Scheme::full;
  throw ValidationError("unknown training scheme '" + std::string(s) + "' (expected DL, LC or Full)");
}

struct DenseLayer {
  Param weight;  // [F, O]
  Param bias;    // [O]
};

inline constexpr std::size_t kHiddenUnits = 64;

/// Encoder, optional inhibitory mask and a decision head
/// (dense -> relu -> dense with a scheme-specific output width).
struct Model {
  Encoder encoder;
  std::optional<InhibitoryMask> mask;
  DenseLayer hidden;
  DenseLayer output;
  TrainScheme scheme;
  LabelKind kind = LabelKind::categorical;
  std::size_t num_classes = 0;

  std::vector<Param*> head_params() { return {&hidden.weight, &hidden.bias, &output.weight, &output.bias}; }

  std::vector<Param*> params() {
    std::vector<Param*> out = encoder.params();
    if (mask)
      for (auto* p : mask->params()) out.push_back(p);
    for (auto* p : head_params()) out.push_back(p);
    return out;
  }

  std::set<std::string> trainable_names() {
    std::set<std::string> names;
    for (auto* p : params())
      if (p->trainable) names.insert(p->name);
    return names;
  }
};

inline void apply_scheme(Model& m) {
  switch (m.scheme.scheme) {
    case Scheme::dl: m.encoder.freeze(); break;
    case Scheme::lc: m.encoder.unfreeze_last_conv(); break;
    case Scheme::full: m.encoder.unfreeze_all(); break;
  }
  for (auto* p : m.head_params()) p->trainable = true;
  if (m.mask)
    for (auto* p : m.mask->params()) p->trainable = true;
}

inline DenseLayer make_dense(const std::string& name, std::size_t fin, std::size_t fout, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fin)));
  Tensor w({fin, fout});
  for (auto& v : w.data()) v = static_cast<float>(dist(rng));
  return {Param(name + ".w", std::move(w)), Param(name + ".b", Tensor({fout}))};
}

inline Model build_model(Encoder encoder, TrainScheme scheme, LabelKind kind, std::size_t num_classes,
                         std::uint64_t seed) {
  if (kind != LabelKind::dimensional && num_classes < 2)
    throw ValidationError("decision head needs at least 2 classes");
  Model m;
  m.encoder = std::move(encoder);
  m.scheme = scheme;
  m.kind = kind;
  m.num_classes = num_classes;
  if (scheme.ciao) m.mask = init_from_layer(m.encoder.last_conv());
  std::mt19937_64 rng(seed);
  m.hidden = make_dense("head.hidden", m.encoder.config().feature_size(), kHiddenUnits, rng);
  m.output = make_dense("head.output", kHiddenUnits, head_width(kind, num_classes), rng);
  apply_scheme(m);
  return m;
}

inline std::size_t count_trainable_params(Model& m) {
  std::size_t n = 0;
  for (auto* p : m.params())
    if (p->trainable) n += p->size();
  return n;
}

/// Any subset may be provided; missing stages are computed from the earlier ones.
struct BatchInputs {
  std::optional<Tensor> images;
  std::optional<Tensor> last_conv_input;
  std::optional<Tensor> last_conv_output;
};

struct ModelVars {
  Var last_conv_input;
  Var last_conv_output;  // u
  Var representation;    // M with a mask, otherwise u
  Var flat;
  Var predictions;       // logits, or linear outputs for dimensional
};

inline ModelVars forward(Graph& g, Model& m, const BatchInputs& in) {
  ModelVars v;
  const bool need_input = m.mask.has_value() || !in.last_conv_output;
  if (need_input) {
    if (in.last_conv_input) v.last_conv_input = g.constant(*in.last_conv_input);
    else if (in.images) v.last_conv_input = m.encoder.prefix(g, g.constant(*in.images));
    else throw ValidationError("forward: no images or cached encoder features given");
  }
  if (in.last_conv_output) v.last_conv_output = g.constant(*in.last_conv_output);
  else v.last_conv_output = m.encoder.last_block(g, v.last_conv_input);
  v.representation = m.mask ? mask_forward(g, *m.mask, v.last_conv_input, v.last_conv_output) : v.last_conv_output;
  v.flat = flatten(v.representation);
  Var h = relu(dense(v.flat, g.param(m.hidden.weight), g.param(m.hidden.bias)));
  v.predictions = dense(h, g.param(m.output.weight), g.param(m.output.bias));
  return v;
}

// ---------------------------------------------------------------------------
// Model directory: model.json, encoder/, mask/ (when attached), head/*.tnsr

inline void save_model(const Model& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "head");
  save_encoder(m.encoder, dir / "encoder");
  if (m.mask) save_mask(*m.mask, dir / "mask");
  save_tensor(dir / "head" / "hidden_w.tnsr", m.hidden.weight.value);
  save_tensor(dir / "head" / "hidden_b.tnsr", m.hidden.bias.value);
  save_tensor(dir / "head" / "output_w.tnsr", m.output.weight.value);
  save_tensor(dir / "head" / "output_b.tnsr", m.output.bias.value);
  nlohmann::json j = {{"scheme", to_string(m.scheme.scheme)},
                      {"ciao", m.scheme.ciao},
                      {"label_scheme", std::string(to_string(m.kind))},
                      {"num_classes", m.num_classes},
                      {"hidden", kHiddenUnits}};
  write_file_bytes(dir / "model.json", j.dump(2) + "\n");
}

inline Model load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "model.json")) throw ValidationError("missing " + (dir / "model.json").string());
  nlohmann::json j;
  Model m;
  try {
    j = nlohmann::json::parse(read_file_bytes(dir / "model.json"));
    m.scheme = {parse_scheme(j.at("scheme").get<std::string>()), j.at("ciao").get<bool>()};
    m.kind = parse_label_kind(j.at("label_scheme").get<std::string>());
    m.num_classes = j.at("num_classes").get<std::size_t>();
    if (j.value("hidden", kHiddenUnits) != kHiddenUnits) throw FormatError("unsupported hidden layer width");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "model.json").string() + ": " + e.what());
  }
  m.encoder = load_encoder(dir / "encoder");
  if (m.scheme.ciao) {
    m.mask = load_mask(dir / "mask");
    check_mask_fits(*m.mask, m.encoder);
  }
  auto load_checked = [&](const char* file, const Shape& expect) {
    const auto path = dir / "head" / file;
    Tensor t = load_tensor(path);
    if (t.shape() != expect)
      throw FormatError(path.string() + ": shape " + shape_str(t.shape()) + ", expected " + shape_str(expect));
    return t;
  };
  const std::size_t f = m.encoder.config().feature_size(), o = head_width(m.kind, m.num_classes);
  m.hidden = {Param("head.hidden.w", load_checked("hidden_w.tnsr", {f, kHiddenUnits})),
              Param("head.hidden.b", load_checked("hidden_b.tnsr", {kHiddenUnits}))};
  m.output = {Param("head.output.w", load_checked("output_w.tnsr", {kHiddenUnits, o})),
              Param("head.output.b", load_checked("output_b.tnsr", {o}))};
  apply_scheme(m);
  return m;
}

}  // namespace ciao
