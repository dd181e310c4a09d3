#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>
#include <vector>

#include "ciao/config.hpp"

namespace ciao {

inline const std::array<TrainScheme, 6> kGridSchemes = {
    TrainScheme{Scheme::full, false}, TrainScheme{Scheme::full, true}, TrainScheme{Scheme::lc, false},
    TrainScheme{Scheme::lc, true},    TrainScheme{Scheme::dl, false},  TrainScheme{Scheme::dl, true}};

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
  std::vector<double> values;
};

struct GridCell {
  TrainScheme scheme;
  std::size_t trainable_params = 0;
  std::map<std::string, MetricStats> metrics;
  std::vector<RunReport> runs;
};

struct GridReport {
  int repeats = 0;
  std::uint64_t base_seed = 0;
  std::vector<GridCell> cells;

  const GridCell& cell(TrainScheme s) const {
    for (const auto& c : cells)
      if (c.scheme == s) return c;
    throw ValidationError("grid has no cell " + s.label());
  }
};

inline MetricStats summarize(std::vector<double> values) {
  MetricStats s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  s.values = std::move(values);
  return s;
}

/// Trains every scheme `repeats` times with seeds base_seed + run_index. Runs are
/// independent and may execute on `jobs` threads; results do not depend on `jobs`.
inline GridReport run_grid(const Encoder& encoder, const Dataset& ds, const TrainConfig& base, int repeats,
                           int jobs = 1, std::span<const TrainScheme> schemes = kGridSchemes) {
  if (repeats < 1) throw ValidationError("repeats must be >= 1");
  struct Task {
    std::size_t cell;
    int run;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < schemes.size(); ++c)
    for (int r = 0; r < repeats; ++r) tasks.push_back({c, r});
  for (const auto& s : schemes) {
    TrainConfig cfg = base;
    cfg.scheme = s;
    cfg.validate();
  }

  std::vector<RunReport> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
      try {
        TrainConfig cfg = base;
        cfg.scheme = schemes[tasks[t].cell];
        cfg.seed = base.seed + static_cast<std::uint64_t>(tasks[t].run);
        Model m = build_model(encoder, cfg.scheme, ds.kind, ds.num_classes, cfg.seed);
        results[t] = train(m, ds, cfg);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(tasks.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  GridReport g;
  g.repeats = repeats;
  g.base_seed = base.seed;
  for (std::size_t c = 0; c < schemes.size(); ++c) {
    GridCell cell;
    cell.scheme = schemes[c];
    std::map<std::string, std::vector<double>> values;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      if (tasks[t].cell != c) continue;
      for (const auto& [name, v] : results[t].metrics.values) values[name].push_back(v);
      cell.trainable_params = results[t].trainable_params;
      cell.runs.push_back(std::move(results[t]));
    }
    for (auto& [name, v] : values) cell.metrics[name] = summarize(std::move(v));
    g.cells.push_back(std::move(cell));
  }
  return g;
}

inline nlohmann::json to_json(const GridReport& g) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : g.cells) {
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [name, s] : c.metrics) metrics[name] = {{"mean", s.mean}, {"std", s.std}, {"values", s.values}};
    cells.push_back({{"scheme", to_string(c.scheme.scheme)},
                     {"ciao", c.scheme.ciao},
                     {"config", c.scheme.label()},
                     {"trainable_params", c.trainable_params},
                     {"metrics", metrics}});
  }
  return {{"repeats", g.repeats}, {"base_seed", g.base_seed}, {"cells", cells}};
}

/// One block per metric: rows Full/LC/DL, columns without / with CIAO.
inline std::string format_table(const GridReport& g) {
  std::map<std::string, bool> names;
  for (const auto& c : g.cells)
    for (const auto& [n, s] : c.metrics) names[n] = true;
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (const auto& [name, unused] : names) {
    os << name << " (mean +- std over " << g.repeats << " runs)\n";
    os << std::left << std::setw(8) << "scheme" << std::setw(22) << "-" << "CIAO" << "\n";
    for (Scheme s : {Scheme::full, Scheme::lc, Scheme::dl}) {
      os << std::left << std::setw(8) << to_string(s);
      for (bool ciao : {false, true}) {
        std::ostringstream cellText;
        cellText << std::fixed << std::setprecision(4);
        bool found = false;
        for (const auto& c : g.cells) {
          if (!(c.scheme == TrainScheme{s, ciao})) continue;
          auto it = c.metrics.find(name);
          if (it == c.metrics.end()) continue;
          cellText << it->second.mean << " +- " << it->second.std;
          found = true;
        }
        os << std::setw(22) << (found ? cellText.str() : std::string("n/a"));
      }
      os << "\n";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace ciao
