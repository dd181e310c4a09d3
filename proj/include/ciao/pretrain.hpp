#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "ciao/data.hpp"
#include "ciao/encoder.hpp"
#include "ciao/losses.hpp"
#include "ciao/optim.hpp"

namespace ciao {

struct PretrainOptions {
  int epochs = 20;
  std::size_t batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  double heldout_fraction = 0.2;
};

/// Proxy world for a task spec: more identities and a different generator seed, so the
/// expression patterns seen during pretraining are unrelated nuisance.
inline SynthSpec proxy_spec(SynthSpec task) {
  task.seed += 1000;
  task.n_identities = 8;
  task.scheme = LabelKind::categorical;
  task.split_seed.reset();
  return task;
}

struct PretrainResult {
  Encoder encoder;
  double heldout_accuracy = 0.0;
  std::vector<double> epoch_losses;
};

/// Identity classification with a temporary linear head that is discarded
/// afterwards. The held-out split is per identity (stratified), chosen by seed.
inline PretrainResult pretrain_proxy(Encoder encoder, const IdentityDataset& data, const PretrainOptions& opt) {
  if (data.num_identities < 2) throw ValidationError("proxy dataset needs at least 2 identity classes");
  if (opt.epochs < 0) throw ValidationError("pretrain epochs must be >= 0");
  if (opt.batch_size < 1) throw ValidationError("pretrain batch size must be >= 1");
  encoder.check_input(data.images.shape());
  const std::size_t n = data.identities.size();
  const std::size_t k = data.num_identities;

  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> train_idx, held_idx;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (static_cast<std::size_t>(data.identities[i]) == c) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    const auto held = static_cast<std::size_t>(std::llround(opt.heldout_fraction * static_cast<double>(members.size())));
    for (std::size_t m = 0; m < members.size(); ++m) (m < held ? held_idx : train_idx).push_back(members[m]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(held_idx.begin(), held_idx.end());

  const std::size_t features = encoder.config().feature_size();
  std::normal_distribution<double> init(0.0, std::sqrt(1.0 / static_cast<double>(features)));
  Tensor hw({features, k});
  for (auto& v : hw.data()) v = static_cast<float>(init(rng));
  Param head_w("proxy.w", std::move(hw)), head_b("proxy.b", Tensor({k}));

  encoder.unfreeze_all();
  std::vector<Param*> params = encoder.params();
  params.push_back(&head_w);
  params.push_back(&head_b);
  Sgd sgd(params, opt.lr, opt.momentum);

  auto batch_labels = [&](std::span<const std::size_t> idx) {
    std::vector<LabelScheme> labels;
    for (auto i : idx) labels.emplace_back(Categorical{data.identities[i]});
    return labels;
  };

  PretrainResult result;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += opt.batch_size) {
      const std::span<const std::size_t> idx(order.data() + begin, std::min(opt.batch_size, order.size() - begin));
      sgd.zero_grad();
      Graph g;
      auto vars = encoder.forward(g, g.constant(data.images.gather_rows(idx)));
      auto logits = dense(vars.flat, g.param(head_w), g.param(head_b));
      auto labels = batch_labels(idx);
      auto loss = task_loss(logits, labels, LabelKind::categorical);
      if (!std::isfinite(loss.value()[0])) throw NumericError("non-finite loss during proxy pretraining");
      g.backward(loss);
      sgd.step();
      loss_sum += loss.value()[0];
      ++steps;
    }
    result.epoch_losses.push_back(steps ? loss_sum / static_cast<double>(steps) : 0.0);
  }
  encoder.freeze();

  if (!held_idx.empty()) {
    std::size_t hits = 0;
    for (std::size_t begin = 0; begin < held_idx.size(); begin += 64) {
      const std::span<const std::size_t> idx(held_idx.data() + begin, std::min<std::size_t>(64, held_idx.size() - begin));
      Graph g(GradMode::none);
      auto vars = encoder.forward(g, g.constant(data.images.gather_rows(idx)));
      auto logits = dense(vars.flat, g.param(head_w), g.param(head_b));
      const auto& lv = logits.value();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const float* row = lv.raw() + r * k;
        const auto pred = static_cast<int>(std::max_element(row, row + k) - row);
        hits += pred == data.identities[idx[r]];
      }
    }
    result.heldout_accuracy = static_cast<double>(hits) / static_cast<double>(held_idx.size());
  }
  result.encoder = std::move(encoder);
  return result;
}

}  // namespace ciao
