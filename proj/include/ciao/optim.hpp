#pragma once

#include <vector>

#include "ciao/autodiff.hpp"

namespace ciao {

/// SGD with heavy-ball momentum: v = mu*v + g; p -= lr*v. Only trainable params move.
class Sgd {
 public:
  Sgd(std::vector<Param*> params, double lr, double momentum = 0.9)
      : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    for (auto* p : params_) velocity_.emplace_back(p->size(), 0.0);
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Param& p = *params_[k];
      if (!p.trainable) continue;
      auto& vel = velocity_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        vel[i] = momentum_ * vel[i] + static_cast<double>(p.grad[i]);
        p.value[i] = static_cast<float>(static_cast<double>(p.value[i]) - lr_ * vel[i]);
      }
    }
  }

 private:
  std::vector<Param*> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_;
  double momentum_;
};

}  // namespace ciao
