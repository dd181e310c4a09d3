// ciao: data synthesis, proxy pretraining, training, grids, evaluation,
// gradient checks, parameter accounting and saliency dumps.
//
// Exit codes: 0 success, 1 invalid input, 2 runtime or numeric failure.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ciao/ciao.hpp"

namespace fs = std::filesystem;
using namespace ciao;

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) { write_file_bytes(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("missing file " + path.string());
  try {
    return nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void require_dir(const fs::path& dir, const char* what) {
  if (dir.empty()) throw ValidationError(std::string(what) + " directory not set");
  if (!fs::is_directory(dir)) throw ValidationError(std::string(what) + " directory not found: " + dir.string());
}

std::string group_digits(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string file_label(const TrainScheme& s) { return to_string(s.scheme) + (s.ciao ? "_ciao" : ""); }

void print_metrics(const MetricReport& m) {
  for (const auto& [name, v] : m.values) std::cout << "  " << name << " = " << std::fixed << std::setprecision(4) << v << "\n";
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::string out;
  bool proxy = false;
};

int cmd_synth(const SynthArgs& a) {
  SynthSpec spec = a.spec.empty() ? SynthSpec{} : synth_spec_from_json(read_json(a.spec));
  if (a.proxy) spec = proxy_spec(spec);
  const Dataset ds = generate(spec);
  save_dataset(ds, a.out);
  std::cout << "N=" << ds.size() << " scheme=" << to_string(ds.kind) << " classes=" << ds.num_classes
            << " train=" << ds.split.train.size() << " val=" << ds.split.val.size() << "\n";
  return 0;
}

struct PretrainArgs {
  std::string encoder_config;
  std::string data;
  std::string out;
  PretrainOptions opt;
};

int cmd_pretrain(const PretrainArgs& a) {
  const EncoderConfig cfg = a.encoder_config.empty() ? EncoderConfig{} : encoder_config_from_json(read_json(a.encoder_config));
  require_dir(a.data, "data");
  const IdentityDataset proxy = identity_view(load_dataset(a.data));
  if (proxy.num_identities < 2) throw ValidationError("proxy dataset needs at least 2 identity classes");
  Encoder enc(cfg, a.opt.seed);
  enc.check_input(proxy.images.shape());
  PretrainResult r = pretrain_proxy(std::move(enc), proxy, a.opt);
  save_encoder(r.encoder, a.out);
  write_json(fs::path(a.out) / "pretrain.json",
             {{"heldout_accuracy", r.heldout_accuracy}, {"epoch_losses", r.epoch_losses}, {"seed", a.opt.seed}});
  std::cout << "pretrained " << r.epoch_losses.size() << " epochs, held-out identity accuracy " << std::fixed
            << std::setprecision(4) << r.heldout_accuracy << "\n";
  return 0;
}

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::string> scheme;
  std::optional<bool> ciao;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<int> repeats;
};

ExperimentConfig load_with_overrides(const std::string& path, const RunOverrides& o) {
  ExperimentConfig e = load_experiment(path);
  if (o.seed) e.train.seed = *o.seed;
  if (o.epochs) e.train.epochs = *o.epochs;
  if (o.scheme) e.train.scheme.scheme = parse_scheme(*o.scheme);
  if (o.ciao) e.train.scheme.ciao = *o.ciao;
  if (o.batch_size) e.train.batch_size = *o.batch_size;
  if (o.lr) e.train.learning_rate = *o.lr;
  if (o.repeats) e.repeats = *o.repeats;
  e.validate();
  return e;
}

struct Inputs {
  Encoder encoder;
  Dataset data;
};

Inputs load_inputs(const ExperimentConfig& e) {
  require_dir(e.encoder_dir, "encoder");
  require_dir(e.dataset_dir, "dataset");
  Inputs in{load_encoder(e.encoder_dir), load_dataset(e.dataset_dir)};
  in.encoder.check_input(in.data.images.shape());
  if (in.data.split.train.empty()) throw ValidationError("dataset has no training split");
  return in;
}

struct TrainArgs {
  std::string config;
  std::string out;
  RunOverrides over;
};

int cmd_train(const TrainArgs& a) {
  const ExperimentConfig e = load_with_overrides(a.config, a.over);
  Inputs in = load_inputs(e);
  Model m = build_model(std::move(in.encoder), e.train.scheme, in.data.kind, in.data.num_classes, e.train.seed);
  const RunReport r = train(m, in.data, e.train);
  save_model(m, fs::path(a.out) / "model");
  write_json(fs::path(a.out) / "report.json", to_json(r));
  std::cout << r.scheme.label() << " seed " << r.seed << ", " << group_digits(r.trainable_params)
            << " trainable params\n";
  print_metrics(r.metrics);
  return 0;
}

struct GridArgs {
  std::string config;
  std::string out;
  int jobs = 1;
  RunOverrides over;
};

int cmd_grid(const GridArgs& a) {
  if (a.jobs < 1) throw ValidationError("--jobs must be >= 1");
  const ExperimentConfig e = load_with_overrides(a.config, a.over);
  const Inputs in = load_inputs(e);
  const GridReport g = run_grid(in.encoder, in.data, e.train, e.repeats, a.jobs);
  const fs::path out(a.out);
  fs::create_directories(out / "runs");
  for (const auto& cell : g.cells)
    for (std::size_t r = 0; r < cell.runs.size(); ++r)
      write_json(out / "runs" / (file_label(cell.scheme) + "_run" + std::to_string(r) + ".json"), to_json(cell.runs[r]));
  write_json(out / "grid.json", to_json(g));
  const std::string table = format_table(g);
  write_file_bytes(out / "table.txt", table);
  std::cout << table;
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  double threshold = 0.5;
};

int cmd_eval(const EvalArgs& a) {
  require_dir(a.model, "model");
  require_dir(a.data, "data");
  Model m = load_model(a.model);
  const Dataset ds = load_dataset(a.data);
  const MetricReport r = evaluate(m, ds, a.threshold);
  std::cout << to_json(r).dump(2) << "\n";
  return 0;
}

struct GradcheckArgs {
  std::string module = "all";
  int seeds = 10;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  SuiteOptions opt;
  opt.seeds = a.seeds;
  const auto checks = run_gradcheck_suite(a.module, opt);
  bool ok = true;
  for (const auto& c : checks) {
    std::ostringstream err;
    err << std::scientific << std::setprecision(3) << c.max_rel_error;
    std::cout << std::left << std::setw(36) << (c.module + "/" + c.name) << " max_rel_error=" << err.str()
              << " seeds=" << c.seeds << (c.pass ? "  ok" : "  FAILED") << "\n";
    ok = ok && c.pass;
  }
  std::cout << (ok ? "all gradient checks passed" : "gradient check FAILED") << " (tolerance "
            << opt.check.tolerance << ")\n";
  return ok ? 0 : 2;
}

struct ParamsArgs {
  std::string config;
};

int cmd_params(const ParamsArgs& a) {
  EncoderConfig enc_cfg;
  LabelKind kind = LabelKind::categorical;
  std::size_t classes = static_cast<std::size_t>(SynthSpec{}.n_expressions);
  if (!a.config.empty()) {
    const ExperimentConfig e = load_experiment(a.config);
    if (!e.encoder_dir.empty()) enc_cfg = encoder_config_from_json(read_json(e.encoder_dir / "config.json"));
    if (!e.dataset_dir.empty()) {
      const auto j = read_labels_json(e.dataset_dir);
      kind = parse_label_kind(j.at("scheme").get<std::string>());
      classes = j.at("num_classes").get<std::size_t>();
    }
  }
  const Encoder enc(enc_cfg, 0);
  std::cout << std::left << std::setw(10) << "config" << std::right << std::setw(12) << "trainable" << "\n";
  std::size_t mask_count = 0;
  for (const auto& s : kGridSchemes) {
    Model m = build_model(enc, s, kind, classes, 0);
    if (m.mask) mask_count = mask_param_count(*m.mask);
    std::cout << std::left << std::setw(10) << s.label() << std::right << std::setw(12)
              << group_digits(count_trainable_params(m)) << "\n";
  }
  std::cout << "mask parameters: " << group_digits(mask_count) << "\n";
  return 0;
}

struct SaliencyArgs {
  std::string model;
  std::string data;
  std::size_t index = 0;
  std::string out;
};

int cmd_saliency(const SaliencyArgs& a) {
  require_dir(a.model, "model");
  require_dir(a.data, "data");
  Model m = load_model(a.model);
  const Dataset ds = load_dataset(a.data);
  check_compatible(m, ds);
  if (a.index >= ds.size())
    throw ValidationError("--index " + std::to_string(a.index) + " out of range for " + std::to_string(ds.size()) +
                          " samples");
  const Tensor map = saliency(m, ds.images.slice_rows(a.index, a.index + 1));
  write_file_bytes(a.out, encode_pgm(upscale_nearest(map, kImageSize, kImageSize)));
  std::cout << "wrote " << map.dim(0) << "x" << map.dim(1) << " map as " << kImageSize << "x" << kImageSize << " PGM to "
            << a.out << "\n";
  return 0;
}

void add_run_overrides(CLI::App* cmd, RunOverrides& o) {
  cmd->add_option("--seed", o.seed, "Base seed");
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--scheme", o.scheme, "DL, LC or Full");
  cmd->add_flag("--ciao,!--no-ciao", o.ciao, "Attach the inhibitory mask");
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size");
  cmd->add_option("--lr", o.lr, "Learning rate");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive inhibitory adaptation: training and experiment tool"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-data", "Generate a synthetic expression dataset");
  c_synth->add_option("--spec", synth.spec, "SynthSpec JSON (defaults when omitted)");
  c_synth->add_option("--out", synth.out, "Output dataset directory")->required();
  c_synth->add_flag("--proxy", synth.proxy, "Write the identity proxy world for this spec instead");

  PretrainArgs pre;
  auto* c_pre = app.add_subcommand("pretrain", "Pretrain an encoder on identity classification");
  c_pre->add_option("--encoder-config", pre.encoder_config, "Encoder config JSON (defaults when omitted)");
  c_pre->add_option("--data", pre.data, "Proxy dataset directory")->required();
  c_pre->add_option("--out", pre.out, "Output encoder directory")->required();
  c_pre->add_option("--epochs", pre.opt.epochs, "Pretraining epochs");
  c_pre->add_option("--seed", pre.opt.seed, "Init and shuffling seed");
  c_pre->add_option("--lr", pre.opt.lr, "Learning rate");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train one configuration");
  c_train->add_option("--config", tr.config, "Experiment config JSON")->required();
  c_train->add_option("--out", tr.out, "Output directory")->required();
  add_run_overrides(c_train, tr.over);

  GridArgs grid;
  auto* c_grid = app.add_subcommand("grid", "Train all six configurations over repeats");
  c_grid->add_option("--config", grid.config, "Experiment config JSON")->required();
  c_grid->add_option("--out", grid.out, "Output directory")->required();
  c_grid->add_option("--repeats", grid.over.repeats, "Runs per configuration");
  c_grid->add_option("--jobs", grid.jobs, "Worker threads");
  add_run_overrides(c_grid, grid.over);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Validation metrics of a saved model");
  c_eval->add_option("--model", ev.model, "Model directory")->required();
  c_eval->add_option("--data", ev.data, "Dataset directory")->required();
  c_eval->add_option("--threshold", ev.threshold, "Multi-label decision threshold");

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  c_gc->add_option("--module", gc.module, "all, mask, losses or encoder")
      ->check(CLI::IsMember({"all", "mask", "losses", "encoder"}));
  c_gc->add_option("--seeds", gc.seeds, "Seeds per check");

  ParamsArgs pa;
  auto* c_params = app.add_subcommand("params", "Trainable parameter counts for the six configurations");
  c_params->add_option("--config", pa.config, "Experiment config JSON (defaults when omitted)");

  SaliencyArgs sal;
  auto* c_sal = app.add_subcommand("saliency", "Gradient x activation heatmap as a binary PGM");
  c_sal->add_option("--model", sal.model, "Model directory")->required();
  c_sal->add_option("--data", sal.data, "Dataset directory")->required();
  c_sal->add_option("--index", sal.index, "Sample index")->required();
  c_sal->add_option("--out", sal.out, "Output .pgm path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_pre) return cmd_pretrain(pre);
    if (*c_train) return cmd_train(tr);
    if (*c_grid) return cmd_grid(grid);
    if (*c_eval) return cmd_eval(ev);
    if (*c_gc) return cmd_gradcheck(gc);
    if (*c_params) return cmd_params(pa);
    if (*c_sal) return cmd_saliency(sal);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
