#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "moclip/dataset.hpp"
#include "moclip/errors.hpp"
#include "moclip/metrics.hpp"
#include "moclip/trainer.hpp"

namespace moclip {

/// Everything a run needs. `seed` feeds all three sections.
struct RunConfig {
  DatasetConfig dataset;
  TrainConfig train;
  EvalConfig eval;

  void set_seed(std::uint64_t s) {
    dataset.seed = s;
    train.seed = s;
    eval.seed = s;
  }

  void validate() const {
    dataset.validate();
    train.validate();
    eval.validate();
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

inline std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct ConfigKey {
  std::string name;
  std::string type;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

template <typename T>
ConfigKey uint_key(std::string name, std::string help, T RunConfig::*section, std::size_t T::*field) {
  return {name, "integer", std::move(help),
          [=](RunConfig& c, const std::string& v) { (c.*section).*field = parse_uint(name, v); },
          [=](const RunConfig& c) { return nlohmann::json((c.*section).*field); }};
}

inline ConfigKey model_uint(std::string name, std::string help, std::size_t ModelConfig::*field) {
  return {name, "integer", std::move(help),
          [=](RunConfig& c, const std::string& v) { c.train.model.*field = parse_uint(name, v); },
          [=](const RunConfig& c) { return nlohmann::json(c.train.model.*field); }};
}

inline ConfigKey model_bool(std::string name, std::string help, bool ModelConfig::*field) {
  return {name, "bool", std::move(help),
          [=](RunConfig& c, const std::string& v) { c.train.model.*field = parse_bool(name, v); },
          [=](const RunConfig& c) { return nlohmann::json(c.train.model.*field); }};
}

inline ConfigKey optim_real(std::string name, std::string help, double AdamWConfig::*field) {
  return {name, "number", std::move(help),
          [=](RunConfig& c, const std::string& v) { c.train.optim.*field = parse_real(name, v); },
          [=](const RunConfig& c) { return nlohmann::json(c.train.optim.*field); }};
}

}  // namespace detail

inline const std::vector<detail::ConfigKey>& config_keys() {
  using detail::ConfigKey;
  using detail::parse_bool;
  using detail::parse_real;
  using detail::parse_uint;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back({"seed", "integer", "top-level seed for data, training and evaluation",
                 [](RunConfig& c, const std::string& v) { c.set_seed(parse_uint("seed", v)); },
                 [](const RunConfig& c) { return nlohmann::json(c.train.seed); }});
    k.push_back({"classes", "list", "comma-separated motion classes",
                 [](RunConfig& c, const std::string& v) {
                   c.dataset.classes = detail::parse_list(v);
                   for (const auto& name : c.dataset.classes) detail::lookup_class(name);
                 },
                 [](const RunConfig& c) { return nlohmann::json(c.dataset.classes); }});
    k.push_back(detail::uint_key("samples_per_class", "sequences generated per class", &RunConfig::dataset,
                                 &DatasetConfig::samples_per_class));
    k.push_back(detail::uint_key("frames", "frames per sequence", &RunConfig::dataset, &DatasetConfig::frames));
    k.push_back({"mirror_augment", "bool", "add left/right mirrored copies of training pairs",
                 [](RunConfig& c, const std::string& v) { c.dataset.mirror_augment = parse_bool("mirror_augment", v); },
                 [](const RunConfig& c) { return nlohmann::json(c.dataset.mirror_augment); }});
    k.push_back({"train_ratio", "number", "fraction of pairs in the train split",
                 [](RunConfig& c, const std::string& v) { c.dataset.train_ratio = parse_real("train_ratio", v); },
                 [](const RunConfig& c) { return nlohmann::json(c.dataset.train_ratio); }});
    k.push_back({"val_ratio", "number", "fraction of pairs in the val split",
                 [](RunConfig& c, const std::string& v) { c.dataset.val_ratio = parse_real("val_ratio", v); },
                 [](const RunConfig& c) { return nlohmann::json(c.dataset.val_ratio); }});
    k.push_back({"test_ratio", "number", "fraction of pairs in the test split",
                 [](RunConfig& c, const std::string& v) { c.dataset.test_ratio = parse_real("test_ratio", v); },
                 [](const RunConfig& c) { return nlohmann::json(c.dataset.test_ratio); }});

    k.push_back(detail::uint_key("total_epochs", "training epochs", &RunConfig::train, &TrainConfig::total_epochs));
    k.push_back(detail::uint_key("freeze_epochs", "leading epochs with the text encoder frozen", &RunConfig::train,
                                 &TrainConfig::freeze_epochs));
    k.push_back(detail::uint_key("batch_size", "pairs per batch", &RunConfig::train, &TrainConfig::batch_size));
    k.push_back(detail::optim_real("lr", "AdamW learning rate", &AdamWConfig::lr));
    k.push_back(detail::optim_real("beta1", "AdamW first-moment decay", &AdamWConfig::beta1));
    k.push_back(detail::optim_real("beta2", "AdamW second-moment decay", &AdamWConfig::beta2));
    k.push_back(detail::optim_real("eps", "AdamW epsilon", &AdamWConfig::eps));
    k.push_back(detail::optim_real("weight_decay", "decoupled weight decay", &AdamWConfig::weight_decay));
    k.push_back({"lambda_distill", "number", "weight of the teacher tether loss",
                 [](RunConfig& c, const std::string& v) { c.train.lambda_distill = parse_real("lambda_distill", v); },
                 [](const RunConfig& c) { return nlohmann::json(c.train.lambda_distill); }});
    k.push_back({"clip_norm", "number", "global gradient-norm clip",
                 [](RunConfig& c, const std::string& v) { c.train.clip_norm = parse_real("clip_norm", v); },
                 [](const RunConfig& c) { return nlohmann::json(c.train.clip_norm); }});
    k.push_back({"naive_mode", "bool", "contrastive-only baseline without PE or cross-limb edges",
                 [](RunConfig& c, const std::string& v) { c.train.naive_mode = parse_bool("naive_mode", v); },
                 [](const RunConfig& c) { return nlohmann::json(c.train.naive_mode); }});

    k.push_back(detail::model_uint("embed_dim", "shared embedding width", &ModelConfig::embed_dim));
    k.push_back(detail::model_uint("feature_width", "transformer width", &ModelConfig::feature_width));
    k.push_back(detail::model_uint("heads", "attention heads", &ModelConfig::heads));
    k.push_back(detail::model_uint("spatial_layers", "joint-attention blocks", &ModelConfig::spatial_layers));
    k.push_back(detail::model_uint("temporal_layers", "frame-attention blocks", &ModelConfig::temporal_layers));
    k.push_back(detail::model_uint("text_layers", "text transformer blocks", &ModelConfig::text_layers));
    k.push_back(detail::model_uint("context_length", "max caption tokens incl. BOS/EOS", &ModelConfig::context_length));
    k.push_back(detail::model_uint("mlp_ratio", "MLP hidden width multiplier", &ModelConfig::mlp_ratio));
    k.push_back(detail::model_bool("positional_encoding", "temporal positional encodings", &ModelConfig::positional_encoding));
    k.push_back(detail::model_bool("cross_limb", "end-effector attention edges", &ModelConfig::cross_limb));
    k.push_back(detail::model_bool("dense_head", "learned projection in the contrastive head", &ModelConfig::dense_head));

    k.push_back(detail::uint_key("runs", "evaluation runs", &RunConfig::eval, &EvalConfig::runs));
    k.push_back(detail::uint_key("pool_size", "retrieval candidates per probe", &RunConfig::eval, &EvalConfig::pool_size));
    k.push_back(detail::uint_key("trials", "retrieval passes per run", &RunConfig::eval, &EvalConfig::trials));
    k.push_back(detail::uint_key("mm_captions", "captions used for multimodality", &RunConfig::eval,
                                 &EvalConfig::mm_captions));
    k.push_back({"eval_split", "string", "train, val, test or heldout (val and test)",
                 [](RunConfig& c, const std::string& v) { c.eval.split = v; },
                 [](const RunConfig& c) { return nlohmann::json(c.eval.split); }});
    return k;
  }();
  return keys;
}

inline std::string accepted_keys() {
  std::string out;
  for (const auto& k : config_keys()) out += (out.empty() ? "" : ", ") + k.name;
  return out;
}

/// One line per key, for --help.
inline std::string config_help() {
  std::string out;
  for (const auto& k : config_keys()) {
    std::string line = "  " + k.name + " (" + k.type + ")";
    line.resize(std::max<std::size_t>(line.size() + 1, 34), ' ');
    out += line + k.help + "\n";
  }
  return out;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& keys = config_keys();
  const auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return k.name == key; });
  if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'; accepted keys: " + accepted_keys());
  it->set(cfg, value);
}

/// Flat `key = value` lines; `#` starts a comment. Later lines override earlier ones.
inline RunConfig parse_config(std::string_view text, RunConfig cfg = {}) {
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
    }
    set_config_value(cfg, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path, RunConfig cfg = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), std::move(cfg));
}

inline nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& k : config_keys()) j[k.name] = k.get(cfg);
  return j;
}

}  // namespace moclip
