#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ciao/autodiff.hpp"

// Differentiable operations. Reductions accumulate in double.

namespace ciao {

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// cols[k][p], k = (ci, ky, kx), p = (oy, ox)
template <class T>
void im2col(const T* x, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow, T* cols) {
  const std::size_t p_count = oh * ow;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        T* row = cols + ((ci * kh + ky) * kw + kx) * p_count;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                ix < static_cast<std::ptrdiff_t>(w);
            row[oy * ow + ox] = inside ? x[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] : T{0};
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const double* cols, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow, T* dx) {
  const std::size_t p_count = oh * ow;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const double* row = cols + ((ci * kh + ky) * kw + kx) * p_count;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dx[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                static_cast<T>(row[oy * ow + ox]);
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation, NCHW input, weights [Cout, Cin, kh, kw], bias [Cout].
template <class T>
BasicVar<T> conv2d(BasicVar<T> x, BasicVar<T> weights, BasicVar<T> bias, std::size_t stride, std::size_t pad) {
  const auto& xs = x.shape();
  const auto& ws = weights.shape();
  detail::require(xs.size() == 4, "conv2d: input must be rank 4 [B,C,H,W], got " + shape_str(xs));
  detail::require(ws.size() == 4, "conv2d: weights must be rank 4 [Cout,Cin,kh,kw], got " + shape_str(ws));
  detail::require(stride > 0, "conv2d: stride must be positive");
  detail::require(xs[1] == ws[1], "conv2d: input has " + std::to_string(xs[1]) + " channels, weights expect " +
                                      std::to_string(ws[1]));
  detail::require(bias.shape() == Shape{ws[0]}, "conv2d: bias shape " + shape_str(bias.shape()) +
                                                    " does not match Cout=" + std::to_string(ws[0]));
  detail::require(xs[2] + 2 * pad >= ws[2] && xs[3] + 2 * pad >= ws[3],
                  "conv2d: kernel " + shape_str(ws) + " does not fit padded input " + shape_str(xs));

  const std::size_t batch = xs[0], cin = xs[1], h = xs[2], w = xs[3];
  const std::size_t cout = ws[0], kh = ws[2], kw = ws[3];
  const std::size_t oh = detail::conv_out_dim(h, kh, stride, pad);
  const std::size_t ow = detail::conv_out_dim(w, kw, stride, pad);
  const std::size_t k_count = cin * kh * kw, p_count = oh * ow;

  BasicTensor<T> out({batch, cout, oh, ow});
  {
    const T* wd = weights.value().raw();
    const T* bd = bias.value().raw();
    std::vector<T> cols(k_count * p_count);
    std::vector<double> acc(p_count);
    for (std::size_t b = 0; b < batch; ++b) {
      detail::im2col(x.value().raw() + b * cin * h * w, cin, h, w, kh, kw, stride, pad, oh, ow, cols.data());
      for (std::size_t co = 0; co < cout; ++co) {
        std::fill(acc.begin(), acc.end(), static_cast<double>(bd[co]));
        const T* wrow = wd + co * k_count;
        for (std::size_t k = 0; k < k_count; ++k) {
          const double wk = wrow[k];
          const T* crow = cols.data() + k * p_count;
          for (std::size_t p = 0; p < p_count; ++p) acc[p] += wk * crow[p];
        }
        T* o = out.raw() + (b * cout + co) * p_count;
        for (std::size_t p = 0; p < p_count; ++p) o[p] = static_cast<T>(acc[p]);
      }
    }
  }

  const std::size_t xi = x.id(), wi = weights.id(), bi = bias.id();
  return x.graph().record(std::move(out), {xi, wi, bi}, [=](BasicGraph<T>& g, std::size_t self) {
    const T* gout = g.grad(self).raw();
    const T* xd = g.value(xi).raw();
    const T* wd = g.value(wi).raw();
    const bool need_x = g.requires_grad(xi), need_w = g.requires_grad(wi), need_b = g.requires_grad(bi);
    std::vector<T> cols(k_count * p_count);
    std::vector<double> dw(need_w ? cout * k_count : 0, 0.0);
    std::vector<double> db(need_b ? cout : 0, 0.0);
    std::vector<double> dcols(need_x ? k_count * p_count : 0);
    T* dx = need_x ? g.grad_mut(xi).raw() : nullptr;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* gb = gout + b * cout * p_count;
      if (need_w) detail::im2col(xd + b * cin * h * w, cin, h, w, kh, kw, stride, pad, oh, ow, cols.data());
      for (std::size_t co = 0; co < cout; ++co) {
        const T* grow = gb + co * p_count;
        if (need_b) {
          double s = 0.0;
          for (std::size_t p = 0; p < p_count; ++p) s += grow[p];
          db[co] += s;
        }
        if (need_w) {
          double* dwrow = dw.data() + co * k_count;
          for (std::size_t k = 0; k < k_count; ++k) {
            const T* crow = cols.data() + k * p_count;
            double s = 0.0;
            for (std::size_t p = 0; p < p_count; ++p) s += static_cast<double>(grow[p]) * crow[p];
            dwrow[k] += s;
          }
        }
      }
      if (need_x) {
        std::fill(dcols.begin(), dcols.end(), 0.0);
        for (std::size_t co = 0; co < cout; ++co) {
          const T* grow = gb + co * p_count;
          const T* wrow = wd + co * k_count;
          for (std::size_t k = 0; k < k_count; ++k) {
            const double wk = wrow[k];
            double* drow = dcols.data() + k * p_count;
            for (std::size_t p = 0; p < p_count; ++p) drow[p] += wk * grow[p];
          }
        }
        detail::col2im_add(dcols.data(), cin, h, w, kh, kw, stride, pad, oh, ow, dx + b * cin * h * w);
      }
    }
    if (need_w) {
      T* gw = g.grad_mut(wi).raw();
      for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += static_cast<T>(dw[i]);
    }
    if (need_b) {
      T* gbias = g.grad_mut(bi).raw();
      for (std::size_t i = 0; i < db.size(); ++i) gbias[i] += static_cast<T>(db[i]);
    }
  });
}

/// Affine map: input [B,F] x weights [F,O] + bias [O].
template <class T>
BasicVar<T> dense(BasicVar<T> x, BasicVar<T> weights, BasicVar<T> bias) {
  const auto& xs = x.shape();
  const auto& ws = weights.shape();
  detail::require(xs.size() == 2, "dense: input must be rank 2 [B,F], got " + shape_str(xs));
  detail::require(ws.size() == 2, "dense: weights must be rank 2 [F,O], got " + shape_str(ws));
  detail::require(xs[1] == ws[0], "dense: input has " + std::to_string(xs[1]) + " features, weights expect " +
                                      std::to_string(ws[0]));
  detail::require(bias.shape() == Shape{ws[1]}, "dense: bias shape " + shape_str(bias.shape()) +
                                                    " does not match O=" + std::to_string(ws[1]));
  const std::size_t batch = xs[0], fin = xs[1], fout = ws[1];
  BasicTensor<T> out({batch, fout});
  {
    const T* xd = x.value().raw();
    const T* wd = weights.value().raw();
    const T* bd = bias.value().raw();
    std::vector<double> acc(fout);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < fout; ++o) acc[o] = bd[o];
      for (std::size_t f = 0; f < fin; ++f) {
        const double xv = xd[b * fin + f];
        const T* wrow = wd + f * fout;
        for (std::size_t o = 0; o < fout; ++o) acc[o] += xv * wrow[o];
      }
      for (std::size_t o = 0; o < fout; ++o) out[b * fout + o] = static_cast<T>(acc[o]);
    }
  }
  const std::size_t xi = x.id(), wi = weights.id(), bi = bias.id();
  return x.graph().record(std::move(out), {xi, wi, bi}, [=](BasicGraph<T>& g, std::size_t self) {
    const T* gout = g.grad(self).raw();
    const T* xd = g.value(xi).raw();
    const T* wd = g.value(wi).raw();
    if (g.requires_grad(wi)) {
      std::vector<double> dw(fin * fout, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t f = 0; f < fin; ++f) {
          const double xv = xd[b * fin + f];
          double* row = dw.data() + f * fout;
          for (std::size_t o = 0; o < fout; ++o) row[o] += xv * gout[b * fout + o];
        }
      }
      T* gw = g.grad_mut(wi).raw();
      for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += static_cast<T>(dw[i]);
    }
    if (g.requires_grad(bi)) {
      T* gb = g.grad_mut(bi).raw();
      for (std::size_t o = 0; o < fout; ++o) {
        double s = 0.0;
        for (std::size_t b = 0; b < batch; ++b) s += gout[b * fout + o];
        gb[o] += static_cast<T>(s);
      }
    }
    if (g.requires_grad(xi)) {
      T* gx = g.grad_mut(xi).raw();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t f = 0; f < fin; ++f) {
          const T* wrow = wd + f * fout;
          double s = 0.0;
          for (std::size_t o = 0; o < fout; ++o) s += static_cast<double>(wrow[o]) * gout[b * fout + o];
          gx[b * fin + f] += static_cast<T>(s);
        }
      }
    }
  });
}

template <class T>
BasicVar<T> relu(BasicVar<T> x) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  const std::size_t xi = x.id();
  return x.graph().record(std::move(out), {xi}, [xi](BasicGraph<T>& g, std::size_t self) {
    const auto& xv = g.value(xi);
    const auto& go = g.grad(self);
    auto& gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > T{0}) gx[i] += go[i];
  });
}

/// 2x2 max pooling, stride 2. Ties go to the first element in row-major window order.
template <class T>
BasicVar<T> maxpool2x2(BasicVar<T> x) {
  const auto& xs = x.shape();
  detail::require(xs.size() == 4, "maxpool2x2: input must be rank 4, got " + shape_str(xs));
  detail::require(xs[2] % 2 == 0 && xs[3] % 2 == 0, "maxpool2x2: spatial dims must be even, got " + shape_str(xs));
  const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3], oh = h / 2, ow = w / 2;
  BasicTensor<T> out({xs[0], xs[1], oh, ow});
  std::vector<std::size_t> argmax(out.size());
  const T* xd = x.value().raw();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (pl * h + 2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (pl * h + 2 * oy + dy) * w + 2 * ox + dx;
            if (xd[idx] > xd[best]) best = idx;
          }
        const std::size_t o = (pl * oh + oy) * ow + ox;
        out[o] = xd[best];
        argmax[o] = best;
      }
    }
  }
  const std::size_t xi = x.id();
  return x.graph().record(std::move(out), {xi}, [xi, argmax = std::move(argmax)](BasicGraph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    auto& gx = g.grad_mut(xi);
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += go[o];
  });
}

template <class T>
BasicVar<T> reshape(BasicVar<T> x, Shape shape) {
  BasicTensor<T> out = x.value().reshaped(std::move(shape));
  const std::size_t xi = x.id();
  return x.graph().record(std::move(out), {xi}, [xi](BasicGraph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    auto& gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
  });
}

/// [B, ...] -> [B, F]
template <class T>
BasicVar<T> flatten(BasicVar<T> x) {
  const auto& xs = x.shape();
  detail::require(!xs.empty(), "flatten: input must have a batch axis");
  return reshape(x, Shape{xs[0], x.value().size() / xs[0]});
}

/// Divides each row by max(||row||_2, eps).
template <class T>
BasicVar<T> l2_normalize_rows(BasicVar<T> x, double eps = 1e-12) {
  const auto& xs = x.shape();
  detail::require(xs.size() == 2, "l2_normalize_rows: input must be rank 2, got " + shape_str(xs));
  const std::size_t rows = xs[0], cols = xs[1];
  BasicTensor<T> out(xs);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = x.value()[r * cols + c];
      s += v * v;
    }
    norms[r] = std::max(std::sqrt(s), eps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = static_cast<T>(x.value()[r * cols + c] / norms[r]);
  }
  const std::size_t xi = x.id();
  return x.graph().record(std::move(out), {xi}, [=](BasicGraph<T>& g, std::size_t self) {
    const auto& xv = g.value(xi);
    const auto& go = g.grad(self);
    auto& gx = g.grad_mut(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      const double n = norms[r];
      const bool clamped = n <= eps;
      double ydotg = 0.0;
      if (!clamped)
        for (std::size_t c = 0; c < cols; ++c) ydotg += (xv[r * cols + c] / n) * go[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        const double y = xv[i] / n;
        gx[i] += static_cast<T>(clamped ? go[i] / n : (go[i] - y * ydotg) / n);
      }
    }
  });
}

template <class T>
BasicVar<T> add(BasicVar<T> a, BasicVar<T> b) {
  detail::require(a.shape() == b.shape(),
                  "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.graph().record(std::move(out), {ai, bi}, [ai, bi](BasicGraph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    for (std::size_t id : {ai, bi}) {
      if (!g.requires_grad(id)) continue;
      auto& gx = g.grad_mut(id);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
  });
}

/// Elementwise product.
template <class T>
BasicVar<T> mul(BasicVar<T> a, BasicVar<T> b) {
  detail::require(a.shape() == b.shape(),
                  "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.graph().record(std::move(out), {ai, bi}, [ai, bi](BasicGraph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    if (g.requires_grad(ai)) {
      const auto& bv = g.value(bi);
      auto& ga = g.grad_mut(ai);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
    }
    if (g.requires_grad(bi)) {
      const auto& av = g.value(ai);
      auto& gb = g.grad_mut(bi);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
    }
  });
}

template <class T>
BasicVar<T> scale(BasicVar<T> x, double s) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.data()) v = static_cast<T>(v * s);
  const std::size_t xi = x.id();
  return x.graph().record(std::move(out), {xi}, [xi, s](BasicGraph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    auto& gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += static_cast<T>(go[i] * s);
  });
}

/// Sum of all elements, rank-0 result.
template <class T>
BasicVar<T> sum(BasicVar<T> x) {
  double s = 0.0;
  for (T v : x.value().data()) s += v;
  const std::size_t xi = x.id();
  return x.graph().record(BasicTensor<T>::scalar(static_cast<T>(s)), {xi}, [xi](BasicGraph<T>& g, std::size_t self) {
    const T go = g.grad(self)[0];
    auto& gx = g.grad_mut(xi);
    for (auto& v : gx.data()) v += go;
  });
}

}  // namespace ciao
