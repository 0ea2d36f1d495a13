#pragma once

#include <cmath>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "moclip/config.hpp"
#include "moclip/metrics.hpp"
#include "moclip/trainer.hpp"

namespace moclip {

enum class AblationAxis { lambda, naive_unfreeze };

inline AblationAxis parse_axis(const std::string& s) {
  if (s == "lambda") return AblationAxis::lambda;
  if (s == "naive-unfreeze") return AblationAxis::naive_unfreeze;
  throw ConfigError("unknown ablation axis '" + s + "'; accepted axes: lambda, naive-unfreeze");
}

inline const char* axis_name(AblationAxis a) { return a == AblationAxis::lambda ? "lambda" : "naive-unfreeze"; }

inline std::vector<double> default_axis_values(AblationAxis a) {
  if (a == AblationAxis::lambda) return {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  return {2, 5, 7, 10};
}

/// Mean squared difference between student and teacher projections of `captions`.
inline double tether_mse(const MoClipModel& model, const std::vector<std::string>& captions) {
  NoGradScope no_grad;
  const Tensor s = model.encode_student(captions).projected;
  const Tensor t = model.encode_teacher(captions).projected;
  const auto a = s.values();
  const auto b = t.values();
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return sq / static_cast<double>(a.size());
}

inline std::vector<std::string> split_captions(const std::vector<MotionTextPair>& dataset, Split split) {
  std::vector<std::string> out;
  for (const auto& p : dataset) {
    if (p.split == split) out.push_back(p.caption);
  }
  return out;
}

/// `value` is λ on the lambda axis and the number of trailing unfrozen epochs on the naive axis.
inline TrainConfig ablation_cell_config(const TrainConfig& base, AblationAxis axis, double value) {
  TrainConfig c = base;
  if (axis == AblationAxis::lambda) {
    c.lambda_distill = value;
  } else {
    if (value < 0.0 || value != std::floor(value)) {
      throw ConfigError("naive-unfreeze values must be whole epoch counts, got " + std::to_string(value));
    }
    const auto unfrozen = static_cast<std::size_t>(value);
    if (unfrozen > c.total_epochs) {
      throw ConfigError("cannot unfreeze the last " + std::to_string(unfrozen) + " epochs of a " +
                        std::to_string(c.total_epochs) + "-epoch run");
    }
    c.naive_mode = true;
    c.freeze_epochs = c.total_epochs - unfrozen;
  }
  return c;
}

inline std::string setting_label(AblationAxis axis, double value) {
  std::ostringstream os;
  if (axis == AblationAxis::lambda) {
    os << "lambda=" << value;
  } else {
    os << "naive, unfreeze last " << value;
  }
  return os.str();
}

struct AblationCell {
  std::string setting;
  double value = 0.0;
  TrainConfig train;
  MetricsReport report;
  double tether_mse = 0.0;
  Checkpoint checkpoint;
};

inline nlohmann::ordered_json to_json(const AblationCell& c, AblationAxis axis) {
  nlohmann::ordered_json j;
  j["setting"] = c.setting;
  j[axis == AblationAxis::lambda ? "lambda" : "unfreeze_epochs"] = c.value;
  j["top1"] = c.report.summary.at("r_precision_top1").mean;
  j["top2"] = c.report.summary.at("r_precision_top2").mean;
  j["top3"] = c.report.summary.at("r_precision_top3").mean;
  j["fid"] = c.report.summary.at("fid").mean;
  j["mm_dist"] = c.report.summary.at("mm_dist").mean;
  j["diversity"] = c.report.summary.at("diversity").mean;
  j["tether_mse"] = c.tether_mse;
  return j;
}

/// Trains and evaluates one cell per value, every cell from the same base seed.
inline std::vector<AblationCell> run_ablation(const RunConfig& base, const std::vector<MotionTextPair>& dataset,
                                              AblationAxis axis, const std::vector<double>& values,
                                              const std::function<void(const AblationCell&)>& on_cell = {}) {
  if (values.empty()) throw ConfigError("ablation needs at least one value");
  std::vector<TrainConfig> configs;
  for (double v : values) configs.push_back(ablation_cell_config(base.train, axis, v));
  const auto val_captions = split_captions(dataset, Split::val);
  std::vector<AblationCell> cells;
  for (std::size_t i = 0; i < values.size(); ++i) {
    Trainer trainer = train(configs[i], dataset);
    AblationCell cell;
    cell.setting = setting_label(axis, values[i]);
    cell.value = values[i];
    cell.train = configs[i];
    cell.report = evaluate(trainer.model(), dataset, base.eval);
    cell.tether_mse = val_captions.empty() ? 0.0 : tether_mse(trainer.model(), val_captions);
    cell.checkpoint = trainer.to_checkpoint();
    if (on_cell) on_cell(cell);
    cells.push_back(std::move(cell));
  }
  return cells;
}

inline nlohmann::ordered_json ablation_table(const std::vector<AblationCell>& cells, AblationAxis axis) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& c : cells) rows.push_back(to_json(c, axis));
  return rows;
}

}  // namespace moclip
