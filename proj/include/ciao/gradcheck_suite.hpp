#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ciao/gradcheck.hpp"
#include "ciao/losses.hpp"
#include "ciao/mask.hpp"

namespace ciao {

/// One named check, worst case over all seeds.
struct SuiteCheck {
  std::string module;
  std::string name;
  double max_rel_error = 0.0;
  int seeds = 0;
  bool pass = true;
};

struct SuiteOptions {
  int seeds = 10;
  GradCheckOptions check{};  // h = 1e-3, abs floor 1e-6, tolerance 1e-3
};

namespace detail {

using PD = BasicParam<double>;
using GD = BasicGraph<double>;
using VD = BasicVar<double>;

inline TensorD random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(s));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// Projects a tensor output onto fixed random weights so any op yields a scalar.
inline VD project(GD& g, VD out, const TensorD& weights) { return sum(mul(out, g.constant(weights))); }

// Distance of a conv block's pre-activations from the relu and maxpool kinks: the
// smallest |x| and the smallest gap between the two largest active values of a
// pooling window. Central differences are only meaningful when it exceeds the step.
inline double block_margin(const TensorD& pre) {
  double m = INFINITY;
  for (double v : pre.data()) m = std::min(m, std::abs(v));
  const std::size_t planes = pre.dim(0) * pre.dim(1), h = pre.dim(2), w = pre.dim(3);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < h; y += 2)
      for (std::size_t x = 0; x < w; x += 2) {
        std::array<double, 4> win;
        for (std::size_t k = 0; k < 4; ++k) win[k] = std::max(0.0, pre[(p * h + y + k / 2) * w + x + k % 2]);
        std::sort(win.begin(), win.end());
        if (win[3] > 0.0) m = std::min(m, win[3] - win[2]);
      }
  return m;
}

inline TensorD conv_value(const TensorD& x, const PD& w, const PD& b, std::size_t stride, std::size_t pad) {
  GD g(GradMode::none);
  return conv2d(g.constant(x), g.constant(w.value), g.constant(b.value), stride, pad).value();
}

inline TensorD block_value(const TensorD& pre) {
  GD g(GradMode::none);
  return maxpool2x2(relu(g.constant(pre))).value();
}

// Fragments with relu/maxpool are redrawn until every kink is this many steps away.
inline constexpr double kKinkSteps = 4.0;

inline void record(std::vector<SuiteCheck>& out, const std::string& module, const std::string& name,
                   const GradCheckReport& r, double tol) {
  for (auto& c : out)
    if (c.module == module && c.name == name) {
      c.max_rel_error = std::max(c.max_rel_error, r.max_rel_error);
      c.seeds += 1;
      c.pass = c.max_rel_error < tol;
      return;
    }
  out.push_back({module, name, r.max_rel_error, 1, r.max_rel_error < tol});
}

inline void encoder_checks(std::vector<SuiteCheck>& out, std::uint64_t seed, const GradCheckOptions& opt) {
  std::mt19937_64 rng(seed);
  {
    PD x("x", random_tensor({2, 2, 5, 5}, rng)), w("w", random_tensor({3, 2, 3, 3}, rng)), b("b", random_tensor({3}, rng));
    const TensorD r = random_tensor({2, 3, 5, 5}, rng);
    auto rep = grad_check<double>([&](GD& g) { return project(g, conv2d(g.param(x), g.param(w), g.param(b), 1, 1), r); },
                                  {&x, &w, &b}, opt);
    record(out, "encoder", "conv2d", rep, opt.tolerance);
  }
  {
    PD x("x", random_tensor({2, 1, 6, 6}, rng)), w("w", random_tensor({2, 1, 3, 3}, rng)), b("b", random_tensor({2}, rng));
    const TensorD r = random_tensor({2, 2, 2, 2}, rng);
    auto rep = grad_check<double>([&](GD& g) { return project(g, conv2d(g.param(x), g.param(w), g.param(b), 2, 0), r); },
                                  {&x, &w, &b}, opt);
    record(out, "encoder", "conv2d_stride2", rep, opt.tolerance);
  }
  {
    PD x("x", random_tensor({4, 6}, rng)), w("w", random_tensor({6, 3}, rng)), b("b", random_tensor({3}, rng));
    const TensorD r = random_tensor({4, 3}, rng);
    auto rep = grad_check<double>([&](GD& g) { return project(g, dense(g.param(x), g.param(w), g.param(b)), r); },
                                  {&x, &w, &b}, opt);
    record(out, "encoder", "dense", rep, opt.tolerance);
  }
  {
    PD x("x", random_tensor({2, 3, 4, 4}, rng));
    while (block_margin(x.value) < kKinkSteps * opt.step) x.value = random_tensor({2, 3, 4, 4}, rng);
    const TensorD r = random_tensor({2, 3, 2, 2}, rng);
    auto rep = grad_check<double>([&](GD& g) { return project(g, maxpool2x2(relu(g.param(x))), r); }, {&x}, opt);
    record(out, "encoder", "relu_maxpool", rep, opt.tolerance);
  }
  {
    PD x("x", random_tensor({3, 5}, rng));
    const TensorD r = random_tensor({3, 5}, rng);
    auto rep = grad_check<double>([&](GD& g) { return project(g, l2_normalize_rows(g.param(x), 1e-12), r); }, {&x}, opt);
    record(out, "encoder", "l2_normalize", rep, opt.tolerance);
  }
  {
    EncoderConfig cfg;
    cfg.height = cfg.width = 8;
    cfg.blocks = {2, 3};
    BasicEncoder<double> enc(cfg, seed);
    TensorD images;
    for (bool clear = false; !clear;) {
      for (auto& l : enc.layers()) {
        l.weight.value = random_tensor(l.weight.value.shape(), rng, -0.6, 0.6);
        l.bias.value = random_tensor(l.bias.value.shape(), rng, -0.1, 0.2);
      }
      images = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
      clear = true;
      TensorD x = images;
      for (const auto& l : enc.layers()) {
        const TensorD pre = conv_value(x, l.weight, l.bias, l.stride, l.padding);
        clear = clear && block_margin(pre) >= kKinkSteps * opt.step;
        x = block_value(pre);
      }
    }
    const TensorD r = random_tensor({2, 3 * 2 * 2}, rng);
    auto rep = grad_check<double>([&](GD& g) { return project(g, enc.forward(g, g.constant(images)).flat, r); },
                                  enc.params(), opt);
    record(out, "encoder", "encoder_stack", rep, opt.tolerance);
  }
}

inline void mask_checks(std::vector<SuiteCheck>& out, std::uint64_t seed, const GradCheckOptions& opt) {
  std::mt19937_64 rng(seed);
  ConvLayer<double> layer;
  BasicMask<double> mask;
  PD input;
  for (bool clear = false; !clear;) {
    layer = {PD("layer.w", random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5)), PD("layer.b", random_tensor({3}, rng, 0.0, 0.2)),
             1, 1};
    mask = init_from_layer(layer);
    // Move away from the copy-init point so I differs from u.
    for (auto& v : mask.weight.value.data()) v += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
    mask.integration.value = random_tensor({3}, rng, 0.5, 1.5);
    input = PD("last_conv_input", random_tensor({2, 2, 4, 4}, rng));
    const double margin = kKinkSteps * opt.step;
    clear = block_margin(conv_value(input.value, layer.weight, layer.bias, 1, 1)) >= margin &&
            block_margin(conv_value(input.value, mask.weight, mask.bias, 1, 1)) >= margin;
  }
  const TensorD r = random_tensor({2, 3, 2, 2}, rng);
  auto fragment = [&](GD& g) {
    VD x = g.param(input);
    VD u = conv_block(x, g.param(layer.weight), g.param(layer.bias), layer.stride, layer.padding);
    return project(g, mask_forward(g, mask, x, u), r);
  };
  auto rep = grad_check<double>(fragment, {&mask.weight, &mask.bias, &mask.integration}, opt);
  record(out, "mask", "mask_params", rep, opt.tolerance);
  // Last conv re-training also differentiates through u and the shared input.
  rep = grad_check<double>(fragment, {&layer.weight, &layer.bias, &input}, opt);
  record(out, "mask", "mask_inputs", rep, opt.tolerance);

  PD u("u", random_tensor({2, 3, 2, 2}, rng)), inhib("I", random_tensor({2, 3, 2, 2}, rng, 0.0, 1.0)),
      a("a", random_tensor({3}, rng, 0.5, 1.5));
  rep = grad_check<double>([&](GD& g) { return project(g, inhibit(g.param(u), g.param(inhib), g.param(a), 1e-4), r); },
                           {&u, &inhib, &a}, opt);
  record(out, "mask", "inhibit", rep, opt.tolerance);
}

inline std::vector<ContrastiveKey> random_keys(std::size_t n, int classes, std::mt19937_64& rng) {
  std::vector<ContrastiveKey> keys(n);
  std::uniform_int_distribution<int> d(0, classes - 1);
  for (auto& k : keys) k.parts = {d(rng)};
  return keys;
}

inline void loss_checks(std::vector<SuiteCheck>& out, std::uint64_t seed, const GradCheckOptions& opt) {
  std::mt19937_64 rng(seed);
  for (bool normalize : {true, false}) {
    PD z("z", random_tensor({6, 4}, rng));
    if (!normalize)
      for (auto& v : z.value.data()) v *= 0.5;
    auto keys = random_keys(6, 3, rng);
    ContrastiveConfig cc;
    cc.normalize_embeddings = normalize;
    cc.temperature = normalize ? 0.1 : 0.5;
    auto rep = grad_check<double>([&](GD& g) { return supcon_loss(g.param(z), std::span<const ContrastiveKey>(keys), cc); },
                                  {&z}, opt);
    record(out, "losses", normalize ? "supcon" : "supcon_raw", rep, opt.tolerance);
  }

  const std::size_t b = 5, k = 4;
  PD logits("logits", random_tensor({b, k}, rng, -2.0, 2.0));
  auto check_task = [&](const char* name, LabelKind kind, std::vector<LabelScheme> labels) {
    PD& p = logits;
    auto rep = grad_check<double>([&](GD& g) {
      VD preds = g.param(p);
      if (kind == LabelKind::dimensional) preds = reshape(preds, Shape{b * 2, 2});
      return task_loss(preds, std::span<const LabelScheme>(labels), kind);
    }, {&p}, opt);
    record(out, "losses", name, rep, opt.tolerance);
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<LabelScheme> cat, dist, multi, dim;
  for (std::size_t i = 0; i < b; ++i) {
    cat.emplace_back(Categorical{static_cast<int>(rng() % k)});
    std::vector<float> probs(k);
    float total = 0;
    for (auto& q : probs) total += (q = static_cast<float>(unit(rng) + 0.05));
    for (auto& q : probs) q /= total;
    dist.emplace_back(Distribution{probs});
    std::vector<std::uint8_t> flags(k);
    for (auto& f : flags) f = unit(rng) < 0.5;
    multi.emplace_back(MultiLabelBinary{flags});
  }
  for (std::size_t i = 0; i < b * 2; ++i)
    dim.emplace_back(Dimensional{static_cast<float>(unit(rng) * 2 - 1), static_cast<float>(unit(rng) * 2 - 1)});
  check_task("cross_entropy", LabelKind::categorical, cat);
  check_task("distribution_cross_entropy", LabelKind::distribution, dist);
  check_task("binary_cross_entropy", LabelKind::multilabel, multi);
  check_task("mean_squared_error", LabelKind::dimensional, dim);
}

}  // namespace detail

inline bool is_suite_module(const std::string& m) {
  return m == "all" || m == "encoder" || m == "mask" || m == "losses";
}

/// Finite-difference checks of every differentiable op, repeated over seeds 0..seeds-1.
inline std::vector<SuiteCheck> run_gradcheck_suite(const std::string& module, const SuiteOptions& opt = {}) {
  if (!is_suite_module(module)) throw ValidationError("unknown gradcheck module '" + module + "' (all|mask|losses|encoder)");
  if (opt.seeds < 1) throw ValidationError("gradcheck needs at least one seed");
  std::vector<SuiteCheck> out;
  for (int s = 0; s < opt.seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    if (module == "all" || module == "encoder") detail::encoder_checks(out, seed, opt.check);
    if (module == "all" || module == "mask") detail::mask_checks(out, seed, opt.check);
    if (module == "all" || module == "losses") detail::loss_checks(out, seed, opt.check);
  }
  return out;
}

}  // namespace ciao
