#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "moclip/moclip.hpp"

namespace fs = std::filesystem;
using namespace moclip;

namespace {

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::optional<std::size_t> runs;
  std::string resume;
};

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig cfg;
  if (!g.config.empty()) cfg = load_config(g.config);
  if (g.seed) cfg.set_seed(*g.seed);
  if (g.runs) cfg.eval.runs = *g.runs;
  cfg.validate();
  return cfg;
}

std::string require_out(const GlobalOptions& g, const char* command) {
  if (g.out.empty()) throw ConfigError(std::string(command) + " needs --out");
  return g.out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write " + path);
  os << text;
}

void write_manifest(const std::string& path, RunManifest m, std::chrono::steady_clock::time_point start) {
  m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(path, to_json(m).dump(2) + "\n");
}

int gen_data(const GlobalOptions& g) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig cfg = resolve_config(g);
  const std::string out = require_out(g, "gen-data");
  const auto pairs = generate_dataset(cfg.dataset);
  save_dataset(out, pairs);
  const SplitSizes s = count_splits(pairs);
  std::cout << "pairs " << pairs.size() << ": train " << s.train << ", val " << s.val << ", test " << s.test << "\n";
  write_manifest(out + ".manifest.json", {"gen-data", to_json(cfg), cfg.dataset.seed, {out}}, start);
  return 0;
}

int train_cmd(const GlobalOptions& g, const std::string& data_path, std::string log_path,
              std::optional<std::size_t> stop_after) {
  const auto start = std::chrono::steady_clock::now();
  const std::string out = require_out(g, "train");
  if (log_path.empty()) log_path = out + ".log.jsonl";
  const auto dataset = load_dataset(data_path);

  std::optional<Trainer> trainer;
  RunConfig cfg = resolve_config(g);
  if (!g.resume.empty()) {
    trainer.emplace(Trainer::from_checkpoint(load_checkpoint(g.resume), dataset));
    cfg.train = trainer->config();
    std::cerr << "resuming at epoch " << trainer->epochs_done() + 1 << " of " << cfg.train.total_epochs << "\n";
  } else {
    trainer.emplace(cfg.train, dataset);
  }

  {
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw ConfigError("cannot write " + log_path);
    for (const auto& l : trainer->logs()) log << to_json(l).dump() << "\n";
  }
  std::size_t ran = 0;
  while (!trainer->finished() && (!stop_after || ran < *stop_after)) {
    const EpochLog l = trainer->run_epoch();
    ++ran;
    std::ofstream(log_path, std::ios::app) << to_json(l).dump() << "\n";
    save_checkpoint(trainer->to_checkpoint(), out);
    std::cerr << "epoch " << l.epoch << " phase " << l.phase << " total " << l.total << "\n";
  }
  if (ran == 0) save_checkpoint(trainer->to_checkpoint(), out);
  write_manifest(out + ".manifest.json", {"train", to_json(cfg), cfg.train.seed, {out, log_path}}, start);
  return 0;
}

int eval_cmd(const GlobalOptions& g, const std::string& checkpoint_path, const std::string& data_path) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig cfg = resolve_config(g);
  const MoClipModel model = load_model(load_checkpoint(checkpoint_path));
  const auto dataset = load_dataset(data_path);
  const MetricsReport report = evaluate(model, dataset, cfg.eval);
  const std::string text = to_json(report).dump(2) + "\n";
  if (g.out.empty()) {
    std::cout << text;
  } else {
    write_text(g.out, text);
    write_manifest(g.out + ".manifest.json", {"eval", to_json(cfg), cfg.eval.seed, {g.out}}, start);
  }
  const auto& top1 = report.summary.at("r_precision_top1");
  std::cerr << "top1 " << top1.mean << " +- " << top1.ci95 << " over " << top1.values.size() << " runs\n";
  return 0;
}

int ablate_cmd(const GlobalOptions& g, const std::string& data_path, const std::string& axis_name_arg,
               const std::vector<double>& values_arg) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig cfg = resolve_config(g);
  const AblationAxis axis = parse_axis(axis_name_arg);
  const auto values = values_arg.empty() ? default_axis_values(axis) : values_arg;
  const fs::path dir = require_out(g, "ablate");
  fs::create_directories(dir);
  const auto dataset = load_dataset(data_path);

  std::vector<std::string> artifacts;
  std::size_t index = 0;
  const auto cells = run_ablation(cfg, dataset, axis, values, [&](const AblationCell& c) {
    const std::string path = (dir / ("cell_" + std::to_string(index++) + ".ckpt")).string();
    save_checkpoint(c.checkpoint, path);
    artifacts.push_back(path);
    std::cerr << c.setting << ": top1 " << c.report.summary.at("r_precision_top1").mean << ", tether mse "
              << c.tether_mse << "\n";
  });
  const std::string table = (dir / "table.json").string();
  write_text(table, ablation_table(cells, axis).dump(2) + "\n");
  artifacts.insert(artifacts.begin(), table);
  auto echoed = to_json(cfg);
  echoed["axis"] = axis_name(axis);
  echoed["values"] = values;
  write_manifest((dir / "manifest.json").string(), {"ablate", echoed, cfg.train.seed, artifacts}, start);
  std::cout << ablation_table(cells, axis).dump(2) << "\n";
  return 0;
}

int inspect_cmd(const std::string& checkpoint_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  std::cout << "version " << ckpt.version << "\n";
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ckpt.config);
    if (meta.contains("vocab")) meta["vocab"] = std::to_string(meta["vocab"].size()) + " tokens";
    std::cout << "config " << meta.dump(2) << "\n";
  } catch (const nlohmann::json::exception&) {
    std::cout << "config (raw) " << ckpt.config << "\n";
  }
  std::size_t total = 0;
  std::cout << "tensors " << ckpt.tensors.size() << "\n";
  for (const auto& t : ckpt.tensors) {
    std::string dims;
    for (auto d : t.dims) dims += (dims.empty() ? "" : "x") + std::to_string(d);
    std::cout << "  " << std::left << std::setw(48) << t.name << (t.dtype == DType::f64 ? "f64" : "f32") << "  ["
              << dims << "]\n";
    total += t.count();
  }
  std::cout << "values " << total << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-text contrastive encoders: data generation, training, evaluation and ablations"};
  app.fallthrough();
  app.require_subcommand(1);
  app.footer("Config keys (flat `key = value` file passed with --config):\n" + config_help());

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Top-level seed (overrides the config file)");
  app.add_option("--config", g.config, "Flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output path (dataset, checkpoint, report or ablation directory)");
  app.add_option("--runs", g.runs, "Evaluation runs")->check(CLI::PositiveNumber);
  app.add_option("--resume", g.resume, "Checkpoint to resume training from")->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic motion-caption dataset");

  std::string data_path, log_path, checkpoint_path, axis = "lambda";
  std::optional<std::size_t> stop_after;
  std::vector<double> values;

  auto* tr = app.add_subcommand("train", "Train motion and text encoders");
  tr->add_option("--data", data_path, "Dataset file")->required()->check(CLI::ExistingFile);
  tr->add_option("--log", log_path, "Epoch log, one JSON object per line (default: <out>.log.jsonl)");
  tr->add_option("--stop-after", stop_after, "Stop after this many epochs; continue later with --resume");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint over seeded runs");
  ev->add_option("checkpoint", checkpoint_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_path, "Dataset file")->required()->check(CLI::ExistingFile);

  auto* ab = app.add_subcommand("ablate", "Sweep lambda or naive unfreeze epochs");
  ab->add_option("--data", data_path, "Dataset file")->required()->check(CLI::ExistingFile);
  ab->add_option("--axis", axis, "lambda or naive-unfreeze");
  ab->add_option("--values", values, "Custom axis values (comma separated)")->delimiter(',');

  auto* in = app.add_subcommand("inspect", "Print the tensor table and config of a checkpoint");
  in->add_option("checkpoint", checkpoint_path, "Checkpoint file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return gen_data(g);
    if (tr->parsed()) return train_cmd(g, data_path, log_path, stop_after);
    if (ev->parsed()) return eval_cmd(g, checkpoint_path, data_path);
    if (ab->parsed()) return ablate_cmd(g, data_path, axis, values);
    if (in->parsed()) return inspect_cmd(checkpoint_path);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const NotPsdError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DegenerateInputError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
