#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ciao/labels.hpp"
#include "ciao/ops.hpp"

namespace ciao {

struct ContrastiveConfig {
  double temperature = 0.1;
  bool normalize_embeddings = true;
  int av_bins = 7;

  void validate() const {
    if (!(temperature > 0.0)) throw ValidationError("contrastive temperature must be positive");
    if (av_bins < 2) throw ValidationError("contrastive av_bins must be >= 2");
  }
};

/// Discrete identity used to form positive pairs. Equal keys are positives.
struct ContrastiveKey {
  std::vector<int> parts;
  friend bool operator==(const ContrastiveKey&, const ContrastiveKey&) = default;
};

inline int av_bin(float v, int bins) {
  const int b = static_cast<int>(std::floor((static_cast<double>(v) + 1.0) / 2.0 * bins));
  return std::clamp(b, 0, bins - 1);
}

inline ContrastiveKey contrastive_key(const LabelScheme& label, const ContrastiveConfig& cfg) {
  return std::visit(
      [&](const auto& l) -> ContrastiveKey {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Categorical>) {
          return {{l.class_id}};
        } else if constexpr (std::is_same_v<L, Distribution>) {
          const auto it = std::max_element(l.probs.begin(), l.probs.end());
          return {{static_cast<int>(it - l.probs.begin())}};
        } else if constexpr (std::is_same_v<L, MultiLabelBinary>) {
          return {std::vector<int>(l.flags.begin(), l.flags.end())};
        } else {
          return {{av_bin(l.arousal, cfg.av_bins), av_bin(l.valence, cfg.av_bins)}};
        }
      },
      label);
}

/// c[i][j] = exp(z_i . z_j / t)
template <class T>
BasicTensor<T> pairwise_exps(const BasicTensor<T>& z, double t) {
  if (z.rank() != 2 || z.dim(0) < 2) throw ShapeError("pairwise_exps: need [N>=2, F] embeddings, got " + shape_str(z.shape()));
  const std::size_t n = z.dim(0), f = z.dim(1);
  BasicTensor<T> c({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < f; ++k) dot += static_cast<double>(z[i * f + k]) * z[j * f + k];
      c[i * n + j] = static_cast<T>(std::exp(dot / t));
    }
  return c;
}

/// Supervised contrastive loss over already-prepared embeddings. For each anchor i
/// with positives P(i): L_i = -1/|P(i)| sum_p log(c_ip / sum_{a!=i} c_ia); anchors
/// without positives contribute 0. Returns sum_i L_i.
template <class T>
BasicVar<T> supcon_from_embeddings(BasicVar<T> z, std::span<const ContrastiveKey> keys, double t) {
  const auto& zs = z.shape();
  detail::require(zs.size() == 2 && zs[0] >= 2, "supcon_loss: need [N>=2, F] embeddings, got " + shape_str(zs));
  detail::require(keys.size() == zs[0], "supcon_loss: " + std::to_string(keys.size()) + " keys for " +
                                            std::to_string(zs[0]) + " embeddings");
  const std::size_t n = zs[0], f = zs[1];
  const auto& zv = z.value();

  // coef[i][a] = dL/ds_ia where s_ia = z_i . z_a / t
  std::vector<double> coef(n * n, 0.0);
  double total = 0.0;
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t positives = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && keys[j] == keys[i]) ++positives;
    if (positives == 0) continue;
    double smax = -INFINITY;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < f; ++k) dot += static_cast<double>(zv[i * f + k]) * zv[a * f + k];
      s[a] = dot / t;
      smax = std::max(smax, s[a]);
    }
    double denom = 0.0;
    for (std::size_t a = 0; a < n; ++a)
      if (a != i) denom += std::exp(s[a] - smax);
    const double log_denom = smax + std::log(denom);
    double li = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      const bool pos = keys[a] == keys[i];
      if (pos) li -= s[a] - log_denom;
      coef[i * n + a] = std::exp(s[a] - log_denom) - (pos ? 1.0 / static_cast<double>(positives) : 0.0);
    }
    total += li / static_cast<double>(positives);
  }

  const std::size_t zi = z.id();
  return z.graph().record(BasicTensor<T>::scalar(static_cast<T>(total)), {zi},
                          [=, coef = std::move(coef)](BasicGraph<T>& g, std::size_t self) {
                            const double go = g.grad(self)[0];
                            const auto& zval = g.value(zi);
                            auto& gz = g.grad_mut(zi);
                            std::vector<double> acc(n * f, 0.0);
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t a = 0; a < n; ++a) {
                                const double c = coef[i * n + a];
                                if (c == 0.0) continue;
                                for (std::size_t k = 0; k < f; ++k) {
                                  acc[i * f + k] += c * zval[a * f + k];
                                  acc[a * f + k] += c * zval[i * f + k];
                                }
                              }
                            for (std::size_t i = 0; i < acc.size(); ++i) gz[i] += static_cast<T>(go * acc[i] / t);
                          });
}

template <class T>
BasicVar<T> supcon_loss(BasicVar<T> z, std::span<const ContrastiveKey> keys, const ContrastiveConfig& cfg) {
  cfg.validate();
  if (cfg.normalize_embeddings) z = l2_normalize_rows(z, 1e-12);
  return supcon_from_embeddings(z, keys, cfg.temperature);
}

/// Mean softmax cross-entropy of logits [B,k] against target distributions [B,k].
template <class T>
BasicVar<T> softmax_cross_entropy(BasicVar<T> logits, const BasicTensor<T>& targets) {
  const auto& ls = logits.shape();
  detail::require(ls.size() == 2 && targets.shape() == ls,
                  "softmax_cross_entropy: logits " + shape_str(ls) + " vs targets " + shape_str(targets.shape()));
  const std::size_t b = ls[0], k = ls[1];
  const auto& x = logits.value();
  std::vector<double> probs(b * k);
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    double m = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) m = std::max(m, static_cast<double>(x[r * k + j]));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(x[r * k + j] - m);
    const double lz = m + std::log(z);
    for (std::size_t j = 0; j < k; ++j) {
      probs[r * k + j] = std::exp(x[r * k + j] - lz);
      total -= static_cast<double>(targets[r * k + j]) * (x[r * k + j] - lz);
    }
  }
  const std::size_t li = logits.id();
  return logits.graph().record(
      BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(b))), {li},
      [=, probs = std::move(probs)](BasicGraph<T>& g, std::size_t self) {
        const double go = g.grad(self)[0] / static_cast<double>(b);
        auto& gx = g.grad_mut(li);
        for (std::size_t r = 0; r < b; ++r) {
          double tsum = 0.0;
          for (std::size_t j = 0; j < k; ++j) tsum += targets[r * k + j];
          for (std::size_t j = 0; j < k; ++j)
            gx[r * k + j] += static_cast<T>(go * (probs[r * k + j] * tsum - targets[r * k + j]));
        }
      });
}

/// Mean binary cross-entropy over all B*k sigmoid outputs, computed from logits.
template <class T>
BasicVar<T> bce_with_logits(BasicVar<T> logits, const BasicTensor<T>& targets) {
  detail::require(logits.shape().size() == 2 && targets.shape() == logits.shape(),
                  "bce_with_logits: logits " + shape_str(logits.shape()) + " vs targets " + shape_str(targets.shape()));
  const auto& x = logits.value();
  const std::size_t n = x.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    total += std::max(v, 0.0) - v * targets[i] + std::log1p(std::exp(-std::abs(v)));
  }
  const std::size_t li = logits.id();
  return logits.graph().record(BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(n))), {li},
                               [=](BasicGraph<T>& g, std::size_t self) {
                                 const double go = g.grad(self)[0] / static_cast<double>(n);
                                 const auto& xv = g.value(li);
                                 auto& gx = g.grad_mut(li);
                                 for (std::size_t i = 0; i < n; ++i) {
                                   const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(xv[i])));
                                   gx[i] += static_cast<T>(go * (sig - targets[i]));
                                 }
                               });
}

/// Mean squared error over all elements.
template <class T>
BasicVar<T> mse(BasicVar<T> pred, const BasicTensor<T>& targets) {
  detail::require(targets.shape() == pred.shape(),
                  "mse: predictions " + shape_str(pred.shape()) + " vs targets " + shape_str(targets.shape()));
  const auto& p = pred.value();
  const std::size_t n = p.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - targets[i];
    total += d * d;
  }
  const std::size_t pi = pred.id();
  return pred.graph().record(BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(n))), {pi},
                             [=](BasicGraph<T>& g, std::size_t self) {
                               const double go = g.grad(self)[0] / static_cast<double>(n);
                               const auto& pv = g.value(pi);
                               auto& gp = g.grad_mut(pi);
                               for (std::size_t i = 0; i < n; ++i)
                                 gp[i] += static_cast<T>(go * 2.0 * (static_cast<double>(pv[i]) - targets[i]));
                             });
}

/// Decision-layer loss for a batch of labels of one scheme.
template <class T>
BasicVar<T> task_loss(BasicVar<T> predictions, std::span<const LabelScheme> labels, LabelKind kind) {
  const auto& ps = predictions.shape();
  detail::require(ps.size() == 2 && ps[0] == labels.size(),
                  "task_loss: predictions " + shape_str(ps) + " for " + std::to_string(labels.size()) + " labels");
  const std::size_t b = ps[0], k = ps[1];
  if (kind == LabelKind::dimensional && k != 2) throw ShapeError("task_loss: dimensional head must have 2 outputs");
  BasicTensor<T> targets({b, k});
  for (std::size_t r = 0; r < b; ++r) {
    if (kind_of(labels[r]) != kind) throw ShapeError("task_loss: label scheme does not match head scheme");
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Categorical>) {
            if (l.class_id < 0 || static_cast<std::size_t>(l.class_id) >= k)
              throw ShapeError("task_loss: class id out of range for head width " + std::to_string(k));
            targets[r * k + static_cast<std::size_t>(l.class_id)] = T{1};
          } else if constexpr (std::is_same_v<L, Distribution>) {
            if (l.probs.size() != k) throw ShapeError("task_loss: distribution width does not match head");
            for (std::size_t j = 0; j < k; ++j) targets[r * k + j] = static_cast<T>(l.probs[j]);
          } else if constexpr (std::is_same_v<L, MultiLabelBinary>) {
            if (l.flags.size() != k) throw ShapeError("task_loss: flag count does not match head");
            for (std::size_t j = 0; j < k; ++j) targets[r * k + j] = static_cast<T>(l.flags[j]);
          } else {
            targets[r * k + 0] = static_cast<T>(l.arousal);
            targets[r * k + 1] = static_cast<T>(l.valence);
          }
        },
        labels[r]);
  }
  switch (kind) {
    case LabelKind::categorical:
    case LabelKind::distribution: return softmax_cross_entropy(predictions, targets);
    case LabelKind::multilabel: return bce_with_logits(predictions, targets);
    case LabelKind::dimensional: return mse(predictions, targets);
  }
  throw ShapeError("task_loss: unknown scheme");
}

/// L_all = L_CIAO + L_dm when the contrastive term is enabled, else L_dm.
template <class T>
BasicVar<T> total_loss(BasicVar<T> contrastive, BasicVar<T> task, bool ciao_enabled) {
  return ciao_enabled ? add(contrastive, task) : task;
}

}  // namespace ciao
