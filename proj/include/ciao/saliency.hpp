#pragma once

#include <algorithm>
#include <string>

#include "ciao/model.hpp"

namespace ciao {

/// Gradient x activation map over the representation fed to the decision head:
/// relu(sum_c mean_xy(dS/dA_c) * A_c) for the top output S, min-max scaled to [0,1].
/// A flat map (including an all-zero gradient) yields zeros.
inline Tensor saliency(Model& m, const Tensor& image) {
  Tensor batch = image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image;
  if (batch.rank() != 4 || batch.dim(0) != 1) throw ShapeError("saliency takes a single image, got " + shape_str(image.shape()));
  m.encoder.check_input(batch.shape());

  Graph g(GradMode::all);
  BatchInputs in;
  in.images = std::move(batch);
  ModelVars v = forward(g, m, in);
  const Tensor& preds = v.predictions.value();
  const std::size_t k = preds.dim(1);
  Tensor onehot({1, k});
  onehot[static_cast<std::size_t>(std::max_element(preds.raw(), preds.raw() + k) - preds.raw())] = 1.0f;
  g.backward(sum(mul(v.predictions, g.constant(onehot))));
  for (auto* p : m.params()) p->zero_grad();

  const Tensor& act = v.representation.value();
  const Tensor& grad = v.representation.grad();
  const std::size_t c_count = act.dim(1), h = act.dim(2), w = act.dim(3), plane = h * w;
  std::vector<double> heat(plane, 0.0);
  for (std::size_t c = 0; c < c_count; ++c) {
    double weight = 0.0;
    for (std::size_t p = 0; p < plane; ++p) weight += grad[c * plane + p];
    weight /= static_cast<double>(plane);
    for (std::size_t p = 0; p < plane; ++p) heat[p] += weight * act[c * plane + p];
  }
  for (auto& x : heat) x = std::max(x, 0.0);
  const auto [lo, hi] = std::minmax_element(heat.begin(), heat.end());
  const double range = *hi - *lo;
  Tensor out({h, w});
  if (range > 0.0)
    for (std::size_t p = 0; p < plane; ++p) out[p] = static_cast<float>((heat[p] - *lo) / range);
  return out;
}

inline Tensor upscale_nearest(const Tensor& map, std::size_t out_h, std::size_t out_w) {
  if (map.rank() != 2) throw ShapeError("upscale_nearest: expected a 2-D map");
  const std::size_t h = map.dim(0), w = map.dim(1);
  Tensor out({out_h, out_w});
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) out[y * out_w + x] = map[(y * h / out_h) * w + x * w / out_w];
  return out;
}

/// Binary 8-bit PGM (P5) from a map with values in [0,1].
inline std::string encode_pgm(const Tensor& map) {
  if (map.rank() != 2) throw ShapeError("encode_pgm: expected a 2-D map");
  std::string out = "P5\n" + std::to_string(map.dim(1)) + " " + std::to_string(map.dim(0)) + "\n255\n";
  for (float v : map.data()) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))));
  return out;
}

}  // namespace ciao
