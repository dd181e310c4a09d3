#pragma once

#include <filesystem>
#include <string>

#include "ciao/train.hpp"

namespace ciao {

/// Experiment config file. Relative directories resolve against the config's folder.
struct ExperimentConfig {
  TrainConfig train;
  int repeats = 10;
  std::filesystem::path dataset_dir;
  std::filesystem::path encoder_dir;

  void validate() const {
    train.validate();
    if (repeats < 1) throw ValidationError("repeats must be >= 1");
  }
};

inline ContrastiveConfig contrastive_from_json(const nlohmann::json& j) {
  ContrastiveConfig c;
  c.temperature = j.value("temperature", c.temperature);
  c.normalize_embeddings = j.value("normalize", c.normalize_embeddings);
  c.av_bins = j.value("av_bins", c.av_bins);
  return c;
}

inline nlohmann::json to_json(const ContrastiveConfig& c) {
  return {{"temperature", c.temperature}, {"normalize", c.normalize_embeddings}, {"av_bins", c.av_bins}};
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig e;
  auto& t = e.train;
  try {
    if (j.contains("scheme")) t.scheme.scheme = parse_scheme(j.at("scheme").get<std::string>());
    t.scheme.ciao = j.value("ciao", t.scheme.ciao);
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.learning_rate = j.value("lr", t.learning_rate);
    t.momentum = j.value("momentum", t.momentum);
    t.seed = j.value("seed", t.seed);
    t.multilabel_threshold = j.value("multilabel_threshold", t.multilabel_threshold);
    if (j.contains("contrastive")) t.contrastive = contrastive_from_json(j.at("contrastive"));
    e.repeats = j.value("repeats", e.repeats);
    auto resolve = [&](const char* key) -> std::filesystem::path {
      if (!j.contains(key)) return {};
      std::filesystem::path p = j.at(key).get<std::string>();
      return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    e.dataset_dir = resolve("dataset_dir");
    e.encoder_dir = resolve("encoder_dir");
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("experiment config: ") + ex.what());
  }
  e.validate();
  return e;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(path.string() + ": " + ex.what());
  }
  return experiment_from_json(j, path.parent_path());
}

}  // namespace ciao
