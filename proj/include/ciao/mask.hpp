#pragma once

#include <cmath>
#include <filesystem>

#include "ciao/encoder.hpp"

namespace ciao {

/// M = u / d with d = a[c] + I. Where |d| < eps the denominator is replaced by
/// eps * sign(d), sign(0) = +1, and treated as a constant in the backward pass.
/// u, I: [B, C, h, w]; a: [C].
template <class T>
BasicVar<T> inhibit(BasicVar<T> u, BasicVar<T> inhib, BasicVar<T> integration, double eps) {
  const auto& us = u.shape();
  detail::require(us.size() == 4, "inhibit: u must be rank 4, got " + shape_str(us));
  detail::require(inhib.shape() == us, "inhibit: inhibitory activation " + shape_str(inhib.shape()) +
                                           " does not match u " + shape_str(us));
  detail::require(integration.shape() == Shape{us[1]}, "inhibit: integration " + shape_str(integration.shape()) +
                                                           " needs one entry per channel of " + shape_str(us));
  const std::size_t batch = us[0], channels = us[1], plane = us[2] * us[3];
  const auto& uv = u.value();
  const auto& iv = inhib.value();
  const auto& av = integration.value();
  BasicTensor<T> out(us);
  std::vector<double> denom(uv.size());
  std::vector<std::uint8_t> clamped(uv.size(), 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t i = (b * channels + c) * plane + p;
        double d = static_cast<double>(av[c]) + static_cast<double>(iv[i]);
        if (std::abs(d) < eps) {
          d = d < 0.0 ? -eps : eps;
          clamped[i] = 1;
        }
        denom[i] = d;
        out[i] = static_cast<T>(static_cast<double>(uv[i]) / d);
      }

  const std::size_t ui = u.id(), ii = inhib.id(), ai = integration.id();
  return u.graph().record(
      std::move(out), {ui, ii, ai},
      [=, denom = std::move(denom), clamped = std::move(clamped)](BasicGraph<T>& g, std::size_t self) {
        const auto& go = g.grad(self);
        const auto& u_val = g.value(ui);
        if (g.requires_grad(ui)) {
          auto& gu = g.grad_mut(ui);
          for (std::size_t i = 0; i < go.size(); ++i) gu[i] += static_cast<T>(go[i] / denom[i]);
        }
        const bool need_i = g.requires_grad(ii), need_a = g.requires_grad(ai);
        if (!need_i && !need_a) return;
        std::vector<double> ga(channels, 0.0);
        T* gi = need_i ? g.grad_mut(ii).raw() : nullptr;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < plane; ++p) {
              const std::size_t i = (b * channels + c) * plane + p;
              if (clamped[i]) continue;
              const double dd = -static_cast<double>(go[i]) * u_val[i] / (denom[i] * denom[i]);
              if (gi) gi[i] += static_cast<T>(dd);
              ga[c] += dd;
            }
        if (need_a) {
          auto& gav = g.grad_mut(ai);
          for (std::size_t c = 0; c < channels; ++c) gav[c] += static_cast<T>(ga[c]);
        }
      });
}

/// Inhibitory mask over the encoder's last conv block: a parallel copy of the
/// block (weights, bias) whose activation I divides the block output u together
/// with a per-channel integration term a.
template <class T>
struct BasicMask {
  BasicParam<T> weight;       // same shape as the wrapped conv weights
  BasicParam<T> bias;         // [Cout]
  BasicParam<T> integration;  // [Cout], one a per output channel
  double eps = 1e-4;
  std::size_t stride = 1;
  std::size_t padding = 1;

  std::vector<BasicParam<T>*> params() { return {&weight, &bias, &integration}; }
  Shape wrapped_shape() const { return weight.value.shape(); }
};

using InhibitoryMask = BasicMask<float>;

/// Copies the layer's weights and bias; integration starts at 1.
template <class T>
BasicMask<T> init_from_layer(const ConvLayer<T>& layer, double eps = 1e-4) {
  const auto& ws = layer.weight.value.shape();
  if (ws.size() != 4) throw ValidationError("mask can only wrap a 2-D convolution, got weights " + shape_str(ws));
  if (layer.bias.value.shape() != Shape{ws[0]})
    throw ValidationError("mask: wrapped layer bias " + shape_str(layer.bias.value.shape()) + " does not match weights");
  if (!(eps > 0.0)) throw ValidationError("mask eps must be positive");
  BasicMask<T> m;
  m.weight = BasicParam<T>("mask.w", layer.weight.value);
  m.bias = BasicParam<T>("mask.b", layer.bias.value);
  m.integration = BasicParam<T>("mask.a", BasicTensor<T>({ws[0]}, T{1}));
  m.eps = eps;
  m.stride = layer.stride;
  m.padding = layer.padding;
  return m;
}

/// I = block(last_conv_input; mask weights), M = u / (a + I).
template <class T>
BasicVar<T> mask_forward(BasicGraph<T>& g, BasicMask<T>& mask, BasicVar<T> last_conv_input, BasicVar<T> u) {
  BasicVar<T> inhib = conv_block(last_conv_input, g.param(mask.weight), g.param(mask.bias), mask.stride, mask.padding);
  detail::require(inhib.shape() == u.shape(), "mask_forward: inhibitory activation " + shape_str(inhib.shape()) +
                                                  " does not match u " + shape_str(u.shape()));
  return inhibit(u, inhib, g.param(mask.integration), mask.eps);
}

template <class T>
std::size_t mask_param_count(const BasicMask<T>& mask) {
  return mask.weight.size() + mask.bias.size() + mask.integration.size();
}

inline void save_mask(const InhibitoryMask& mask, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor(dir / "mask_w.tnsr", mask.weight.value);
  save_tensor(dir / "mask_b.tnsr", mask.bias.value);
  save_tensor(dir / "mask_a.tnsr", mask.integration.value);
  nlohmann::json meta = {{"wrapped_layer_shape", mask.wrapped_shape()},
                         {"eps", mask.eps},
                         {"stride", mask.stride},
                         {"padding", mask.padding}};
  write_file_bytes(dir / "meta.json", meta.dump(2) + "\n");
}

inline InhibitoryMask load_mask(const std::filesystem::path& dir) {
  nlohmann::json meta;
  Shape shape;
  InhibitoryMask m;
  try {
    meta = nlohmann::json::parse(read_file_bytes(dir / "meta.json"));
    shape = meta.at("wrapped_layer_shape").get<Shape>();
    m.eps = meta.at("eps").get<double>();
    m.stride = meta.value("stride", std::size_t{1});
    m.padding = meta.value("padding", std::size_t{1});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "meta.json").string() + ": " + e.what());
  }
  if (shape.size() != 4) throw FormatError("mask meta: wrapped_layer_shape must be rank 4");
  auto load_checked = [&](const char* file, const Shape& expect) {
    Tensor t = load_tensor(dir / file);
    if (t.shape() != expect)
      throw FormatError((dir / file).string() + ": shape " + shape_str(t.shape()) + ", expected " + shape_str(expect));
    return t;
  };
  m.weight = Param("mask.w", load_checked("mask_w.tnsr", shape));
  m.bias = Param("mask.b", load_checked("mask_b.tnsr", {shape[0]}));
  m.integration = Param("mask.a", load_checked("mask_a.tnsr", {shape[0]}));
  return m;
}

/// Throws unless the mask fits the encoder's last conv layer.
inline void check_mask_fits(const InhibitoryMask& mask, const Encoder& encoder) {
  if (mask.wrapped_shape() != encoder.last_conv().weight.value.shape()) {
    throw ValidationError("mask wraps a " + shape_str(mask.wrapped_shape()) + " layer but the encoder's last conv is " +
                          shape_str(encoder.last_conv().weight.value.shape()));
  }
}

}  // namespace ciao
