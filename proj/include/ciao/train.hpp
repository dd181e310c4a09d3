#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "ciao/data.hpp"
#include "ciao/losses.hpp"
#include "ciao/metrics.hpp"
#include "ciao/model.hpp"
#include "ciao/optim.hpp"

namespace ciao {

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  ContrastiveConfig contrastive;
  TrainScheme scheme;
  double multilabel_threshold = 0.5;

  void validate() const {
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (scheme.ciao && batch_size < 2) throw ValidationError("batch_size must be >= 2 when ciao is enabled");
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must be in [0,1)");
    if (!(multilabel_threshold > 0.0 && multilabel_threshold < 1.0))
      throw ValidationError("multilabel threshold must be in (0,1)");
    contrastive.validate();
  }
};

struct EpochLoss {
  int epoch = 0;
  double l_dm = 0.0;
  double l_ciao = 0.0;
  double l_all = 0.0;
};

struct RunReport {
  TrainScheme scheme;
  std::uint64_t seed = 0;
  std::vector<EpochLoss> epochs;
  MetricReport metrics;
  std::size_t trainable_params = 0;
  double wall_time = 0.0;  // seconds; kept out of the JSON so reports stay byte-stable
};

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"l_dm", e.l_dm}, {"l_ciao", e.l_ciao}, {"l_all", e.l_all}});
  return {{"scheme", to_string(r.scheme.scheme)},
          {"ciao", r.scheme.ciao},
          {"config", r.scheme.label()},
          {"seed", r.seed},
          {"epochs", epochs},
          {"metrics", to_json(r.metrics)},
          {"trainable_params", r.trainable_params}};
}

/// Model outputs for the given samples, computed without a tape.
inline Tensor predict(Model& m, const Tensor& images, std::span<const std::size_t> rows, std::size_t chunk = 64) {
  std::vector<float> out;
  std::size_t width = 0;
  for (std::size_t begin = 0; begin < rows.size(); begin += chunk) {
    const auto idx = rows.subspan(begin, std::min(chunk, rows.size() - begin));
    Graph g(GradMode::none);
    BatchInputs in;
    in.images = images.gather_rows(idx);
    const auto& p = forward(g, m, in).predictions.value();
    width = p.dim(1);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  if (rows.empty()) throw ValidationError("predict: no samples");
  return Tensor({rows.size(), width}, std::move(out));
}

inline int argmax_row(const Tensor& t, std::size_t r) {
  const std::size_t k = t.dim(1);
  const float* row = t.raw() + r * k;
  return static_cast<int>(std::max_element(row, row + k) - row);
}

inline int label_class(const LabelScheme& l) {
  if (const auto* c = std::get_if<Categorical>(&l)) return c->class_id;
  if (const auto* d = std::get_if<Distribution>(&l))
    return static_cast<int>(std::max_element(d->probs.begin(), d->probs.end()) - d->probs.begin());
  throw ValidationError("label has no class id");
}

/// Scheme-appropriate metrics from raw predictions.
inline MetricReport score(const Tensor& preds, std::span<const LabelScheme> labels, LabelKind kind,
                          std::size_t num_classes, double threshold = 0.5) {
  MetricReport r;
  const std::size_t n = labels.size();
  switch (kind) {
    case LabelKind::categorical:
    case LabelKind::distribution: {
      std::vector<int> p(n), t(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = argmax_row(preds, i);
        t[i] = label_class(labels[i]);
      }
      r.values["accuracy"] = accuracy(p, t);
      std::vector<double> hits(num_classes, 0), count(num_classes, 0);
      for (std::size_t i = 0; i < n; ++i) {
        count[static_cast<std::size_t>(t[i])] += 1;
        hits[static_cast<std::size_t>(t[i])] += p[i] == t[i];
      }
      auto& pc = r.per_class["recall"];
      for (std::size_t c = 0; c < num_classes; ++c) pc.push_back(count[c] > 0 ? hits[c] / count[c] : 0.0);
      break;
    }
    case LabelKind::multilabel: {
      // sigmoid(x) > threshold  <=>  x > logit(threshold)
      const double cut = std::log(threshold / (1.0 - threshold));
      BitRows p(n, std::vector<std::uint8_t>(num_classes)), t(n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < num_classes; ++c) p[i][c] = preds[i * num_classes + c] > cut;
        t[i] = std::get<MultiLabelBinary>(labels[i]).flags;
      }
      r.per_class["f1"] = per_class_f1(p, t, num_classes);
      r.values["macro_f1"] = macro_f1(p, t, num_classes);
      break;
    }
    case LabelKind::dimensional: {
      std::vector<double> pa(n), pv(n), ta(n), tv(n);
      double se = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& d = std::get<Dimensional>(labels[i]);
        pa[i] = preds[i * 2];
        pv[i] = preds[i * 2 + 1];
        ta[i] = d.arousal;
        tv[i] = d.valence;
        se += (pa[i] - ta[i]) * (pa[i] - ta[i]) + (pv[i] - tv[i]) * (pv[i] - tv[i]);
      }
      r.values["ccc_arousal"] = ccc(pa, ta);
      r.values["ccc_valence"] = ccc(pv, tv);
      r.values["mse"] = se / static_cast<double>(2 * n);
      break;
    }
  }
  return r;
}

inline std::vector<LabelScheme> gather_labels(const Dataset& ds, std::span<const std::size_t> rows) {
  std::vector<LabelScheme> out;
  out.reserve(rows.size());
  for (auto i : rows) out.push_back(ds.labels[i]);
  return out;
}

inline void check_compatible(const Model& m, const Dataset& ds) {
  m.encoder.check_input(ds.images.shape());
  if (m.kind != ds.kind)
    throw ValidationError("model was built for " + std::string(to_string(m.kind)) + " labels, dataset has " +
                          std::string(to_string(ds.kind)));
  if (m.num_classes != ds.num_classes) throw ValidationError("model and dataset disagree on the class count");
}

/// Metrics on the validation split (the whole dataset when no split is set).
inline MetricReport evaluate(Model& m, const Dataset& ds, double threshold = 0.5) {
  check_compatible(m, ds);
  std::vector<std::size_t> rows = ds.split.val;
  if (rows.empty()) {
    rows.resize(ds.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  const Tensor preds = predict(m, ds.images, rows);
  const auto labels = gather_labels(ds, rows);
  return score(preds, labels, ds.kind, ds.num_classes, threshold);
}

/// Trains the model's trainable params on the training split with
/// L_all = L_CIAO + L_dm (L_dm alone without a mask). Encoder stages that are
/// frozen are computed once up front and fed as constants.
inline RunReport train(Model& m, const Dataset& ds, const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  check_compatible(m, ds);
  if (ds.split.train.empty()) throw ValidationError("dataset has no training split");
  if (cfg.scheme != m.scheme) throw ValidationError("config scheme does not match the model");
  const bool ciao = m.mask.has_value();

  std::optional<EncodeResult> cache;
  const bool prefix_cached = m.encoder.prefix_frozen();
  const bool output_cached = prefix_cached && m.encoder.last_conv_frozen();
  if (prefix_cached) cache = encode(m.encoder, ds.images);

  std::vector<ContrastiveKey> keys;
  keys.reserve(ds.size());
  for (const auto& l : ds.labels) keys.push_back(contrastive_key(l, cfg.contrastive));

  Sgd sgd(m.params(), cfg.learning_rate, cfg.momentum);
  std::mt19937_64 rng(cfg.seed);
  RunReport report;
  report.scheme = m.scheme;
  report.seed = cfg.seed;
  report.trainable_params = count_trainable_params(m);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = ds.split.train;
    std::shuffle(order.begin(), order.end(), rng);
    EpochLoss el{epoch + 1, 0.0, 0.0, 0.0};
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + begin, std::min(cfg.batch_size, order.size() - begin));
      // A trailing single-sample batch cannot form contrastive pairs.
      if (ciao && idx.size() < 2) continue;
      BatchInputs in;
      if (prefix_cached) in.last_conv_input = cache->last_conv_input.gather_rows(idx);
      else in.images = ds.images.gather_rows(idx);
      if (output_cached) in.last_conv_output = cache->last_conv_output.gather_rows(idx);

      sgd.zero_grad();
      Graph g;
      ModelVars v = forward(g, m, in);
      const auto labels = gather_labels(ds, idx);
      Var l_dm = task_loss(v.predictions, labels, ds.kind);
      Var loss = l_dm;
      double l_ciao = 0.0;
      if (ciao) {
        std::vector<ContrastiveKey> batch_keys;
        for (auto i : idx) batch_keys.push_back(keys[i]);
        Var l_c = supcon_loss(v.flat, std::span<const ContrastiveKey>(batch_keys), cfg.contrastive);
        loss = total_loss(l_c, l_dm, true);
        l_ciao = l_c.value()[0];
      }
      const double l_all = loss.value()[0];
      if (!std::isfinite(l_all)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1));
      g.backward(loss);
      sgd.step();
      el.l_dm += l_dm.value()[0];
      el.l_ciao += l_ciao;
      el.l_all += l_all;
      ++steps;
    }
    if (steps) {
      el.l_dm /= static_cast<double>(steps);
      el.l_ciao /= static_cast<double>(steps);
      el.l_all /= static_cast<double>(steps);
    }
    report.epochs.push_back(el);
  }
  report.metrics = evaluate(m, ds, cfg.multilabel_threshold);
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace ciao
