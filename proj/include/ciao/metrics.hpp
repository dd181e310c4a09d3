#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ciao/errors.hpp"
#include "json.hpp"

namespace ciao {

struct MetricReport {
  std::map<std::string, double> values;
  std::map<std::string, std::vector<double>> per_class;
};

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j = nlohmann::json::object();
  j["values"] = r.values;
  j["per_class"] = r.per_class;
  return j;
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.values = j.at("values").get<std::map<std::string, double>>();
  r.per_class = j.at("per_class").get<std::map<std::string, std::vector<double>>>();
  return r;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.empty()) throw ValidationError("accuracy: empty input");
  if (predicted.size() != truth.size()) throw ValidationError("accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

using BitRows = std::vector<std::vector<std::uint8_t>>;

/// Per-class F1 = 2PR/(P+R), with 0/0 taken as 0 for P, R and F1.
inline std::vector<double> per_class_f1(const BitRows& predicted, const BitRows& truth, std::size_t k) {
  if (predicted.empty()) throw ValidationError("macro_f1: empty input");
  if (predicted.size() != truth.size()) throw ValidationError("macro_f1: row count mismatch");
  std::vector<double> tp(k, 0), fp(k, 0), fn(k, 0);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].size() != k || truth[i].size() != k) throw ValidationError("macro_f1: row width mismatch");
    for (std::size_t c = 0; c < k; ++c) {
      const bool p = predicted[i][c] != 0, t = truth[i][c] != 0;
      tp[c] += p && t;
      fp[c] += p && !t;
      fn[c] += !p && t;
    }
  }
  std::vector<double> f1(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const double prec = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    const double rec = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    f1[c] = prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  return f1;
}

inline double macro_f1(const BitRows& predicted, const BitRows& truth, std::size_t k) {
  const auto f1 = per_class_f1(predicted, truth, k);
  double s = 0.0;
  for (double v : f1) s += v;
  return k ? s / static_cast<double>(k) : 0.0;
}

/// Concordance correlation coefficient in covariance form, population moments.
inline double ccc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("ccc: length mismatch");
  if (x.size() < 2) throw ValidationError("ccc: need at least 2 samples");
  const double n = static_cast<double>(x.size());
  // Means are offsets from the first sample so a constant input has exactly zero deviations.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] - x[0];
    my += y[i] - y[0];
  }
  mx = x[0] + mx / n;
  my = y[0] + my / n;
  double vx = 0, vy = 0, cov = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cov += (x[i] - mx) * (y[i] - my);
  }
  vx /= n;
  vy /= n;
  cov /= n;
  const double denom = vx + vy + (mx - my) * (mx - my);
  return denom > 0 ? 2.0 * cov / denom : 0.0;
}

}  // namespace ciao
