#pragma once

// Slow, direct reference implementations shared by the unit tests and the
// acceptance binary. None of them call into the library's kernels.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ciao/ciao.hpp"

namespace ciao::oracle {

// Direct cross-correlation.
inline Tensor conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  Tensor out({B, O, OH, OW});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double acc = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < KH; ++ky)
              for (std::size_t kx = 0; kx < KW; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                acc += static_cast<double>(x.at(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix))) *
                       w.at(o, c, ky, kx);
              }
          out.at(n, o, oy, ox) = static_cast<float>(acc);
        }
  return out;
}

// maxpool2x2(relu(conv(x))).
inline Tensor block(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const Tensor c = conv(x, w, b, stride, pad);
  Tensor out({c.dim(0), c.dim(1), c.dim(2) / 2, c.dim(3) / 2});
  for (std::size_t n = 0; n < out.dim(0); ++n)
    for (std::size_t o = 0; o < out.dim(1); ++o)
      for (std::size_t y = 0; y < out.dim(2); ++y)
        for (std::size_t xx = 0; xx < out.dim(3); ++xx) {
          float best = 0.0f;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) best = std::max(best, c.at(n, o, 2 * y + dy, 2 * xx + dx));
          out.at(n, o, y, xx) = best;
        }
  return out;
}

inline double inhibit(double u, double a, double inhib, double eps) {
  double d = a + inhib;
  if (std::abs(d) < eps) d = d < 0 ? -eps : eps;
  return u / d;
}

// M = u / (a[c] + I) cell by cell, with I computed by the loop block above.
inline Tensor mask(const Tensor& input, const Tensor& u, const InhibitoryMask& m) {
  const Tensor inhib = block(input, m.weight.value, m.bias.value, m.stride, m.padding);
  Tensor out(u.shape());
  const std::size_t channels = u.dim(1), plane = u.dim(2) * u.dim(3);
  for (std::size_t i = 0; i < u.size(); ++i)
    out[i] = static_cast<float>(inhibit(u[i], m.integration.value[(i / plane) % channels], inhib[i], m.eps));
  return out;
}

// Sum over anchors of -1/|P(i)| sum_p log(exp(s_ip) / sum_{a != i} exp(s_ia)).
inline double supcon(const std::vector<std::vector<double>>& z, const std::vector<int>& keys, double t,
                     bool normalize = true) {
  std::vector<std::vector<double>> e = z;
  if (normalize)
    for (auto& row : e) {
      double n = 0;
      for (double v : row) n += v * v;
      n = std::max(std::sqrt(n), 1e-12);
      for (double& v : row) v /= n;
    }
  auto sim = [&](std::size_t i, std::size_t j) {
    double d = 0;
    for (std::size_t k = 0; k < e[i].size(); ++k) d += e[i][k] * e[j][k];
    return std::exp(d / t);
  };
  double total = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    double denom = 0;
    for (std::size_t a = 0; a < e.size(); ++a)
      if (a != i) denom += sim(i, a);
    double li = 0;
    int positives = 0;
    for (std::size_t p = 0; p < e.size(); ++p)
      if (p != i && keys[p] == keys[i]) {
        li -= std::log(sim(i, p) / denom);
        ++positives;
      }
    if (positives) total += li / positives;
  }
  return total;
}

inline double ccc(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
  double vx = 0, vy = 0, cov = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx) / n;
    vy += (y[i] - my) * (y[i] - my) / n;
    cov += (x[i] - mx) * (y[i] - my) / n;
  }
  return 2 * cov / (vx + vy + (mx - my) * (mx - my));
}

// Mean over classes of F1 from a per-class confusion count, 0/0 -> 0.
inline double macro_f1(const BitRows& pred, const BitRows& truth, std::size_t k) {
  double sum = 0;
  for (std::size_t c = 0; c < k; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i][c] && truth[i][c]) ++tp;
      if (pred[i][c] && !truth[i][c]) ++fp;
      if (!pred[i][c] && truth[i][c]) ++fn;
    }
    if (2 * tp + fp + fn) sum += 2.0 * tp / (2 * tp + fp + fn);
  }
  return sum / static_cast<double>(k);
}

}  // namespace ciao::oracle
