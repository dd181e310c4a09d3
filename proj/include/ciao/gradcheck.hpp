#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ciao/autodiff.hpp"

namespace ciao {

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::vector<ParamCheck> params;
};

struct GradCheckOptions {
  double tolerance = 1e-3;
  double step = 1e-3;
  double abs_floor = 1e-6;
};

/// Relative error between analytic and numeric derivatives; differences below
/// the absolute floor count as exact.
inline double derivative_rel_error(double analytic, double numeric, double abs_floor) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_floor) return 0.0;
  return diff / std::max({std::abs(analytic), std::abs(numeric), abs_floor});
}

/// Compares the analytic gradient of every trainable param against central
/// differences. The fragment must build a scalar loss on the given graph.
template <class T>
GradCheckReport grad_check(const std::function<BasicVar<T>(BasicGraph<T>&)>& fragment,
                           const std::vector<BasicParam<T>*>& params, GradCheckOptions opt = {}) {
  auto eval = [&] {
    BasicGraph<T> g;
    BasicVar<T> loss = fragment(g);
    if (loss.value().size() != 1) throw GraphError("grad_check: fragment output is not scalar");
    return static_cast<double>(loss.value()[0]);
  };

  for (auto* p : params) p->zero_grad();
  {
    BasicGraph<T> g;
    BasicVar<T> loss = fragment(g);
    if (loss.value().size() != 1) throw GraphError("grad_check: fragment output is not scalar");
    g.backward(loss);
  }

  GradCheckReport report;
  for (auto* p : params) {
    if (!p->trainable) continue;
    ParamCheck pc{p->name, 0.0};
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T orig = p->value[i];
      p->value[i] = static_cast<T>(orig + opt.step);
      const double up = eval();
      p->value[i] = static_cast<T>(orig - opt.step);
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      pc.max_rel_error = std::max(pc.max_rel_error, derivative_rel_error(p->grad[i], numeric, opt.abs_floor));
    }
    report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
    report.params.push_back(std::move(pc));
  }
  report.pass = report.max_rel_error < opt.tolerance;
  return report;
}

}  // namespace ciao
