#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "moclip/errors.hpp"
#include "moclip/motion.hpp"
#include "moclip/rng.hpp"

namespace moclip {

enum class Split { train, val, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "' (expected train, val or test)");
}

struct MotionTextPair {
  MotionSequence motion;
  std::string caption;
  Split split = Split::train;
};

struct DatasetConfig {
  std::vector<std::string> classes = default_classes();
  std::size_t samples_per_class = 64;
  std::size_t frames = 24;
  std::uint64_t seed = 0;
  bool mirror_augment = false;
  double train_ratio = 0.80;
  double val_ratio = 0.15;
  double test_ratio = 0.05;

  void validate() const {
    if (classes.empty()) throw ConfigError("dataset: at least one class is required");
    for (const auto& c : classes) detail::lookup_class(c);
    if (samples_per_class < 1) throw ConfigError("dataset: samples_per_class must be >= 1");
    if (frames < 1) throw ConfigError("dataset: frames must be >= 1");
    for (double r : {train_ratio, val_ratio, test_ratio}) {
      if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("dataset: split ratios must be finite and non-negative");
    }
    if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
      throw ConfigError("dataset: split ratios must sum to 1");
    }
  }
};

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
};

/// Train is rounded to nearest, val floored, test takes the remainder.
inline SplitSizes split_sizes(std::size_t n, double train_ratio, double val_ratio) {
  SplitSizes s;
  s.train = std::min(n, static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_ratio)));
  s.val = std::min(n - s.train, static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_ratio)));
  s.test = n - s.train - s.val;
  return s;
}

inline std::vector<MotionTextPair> generate_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  const Skeleton& skeleton = toy_skeleton();
  std::vector<MotionTextPair> pairs;
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
    for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
      const std::uint64_t sample_seed = derive_seed(cfg.seed, "sample", c * cfg.samples_per_class + s);
      MotionTextPair p;
      p.motion = generate_motion(cfg.classes[c], skeleton, cfg.frames, sample_seed);
      p.caption = caption_for(cfg.classes[c], sample_seed);
      pairs.push_back(std::move(p));
    }
  }
  if (cfg.mirror_augment) {
    const std::size_t n = pairs.size();
    for (std::size_t i = 0; i < n; ++i) {
      MotionTextPair m;
      m.motion = mirror_motion(pairs[i].motion, skeleton);
      m.caption = mirror_text(pairs[i].caption);
      pairs.push_back(std::move(m));
    }
  }

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(cfg.seed, "split"));
  rng.shuffle(order);
  const SplitSizes sizes = split_sizes(pairs.size(), cfg.train_ratio, cfg.val_ratio);
  for (std::size_t k = 0; k < order.size(); ++k) {
    pairs[order[k]].split = k < sizes.train ? Split::train : (k < sizes.train + sizes.val ? Split::val : Split::test);
  }
  return pairs;
}

inline std::vector<MotionTextPair> select_split(const std::vector<MotionTextPair>& pairs, Split split) {
  std::vector<MotionTextPair> out;
  for (const auto& p : pairs) {
    if (p.split == split) out.push_back(p);
  }
  return out;
}

inline SplitSizes count_splits(const std::vector<MotionTextPair>& pairs) {
  SplitSizes s;
  for (const auto& p : pairs) {
    (p.split == Split::train ? s.train : p.split == Split::val ? s.val : s.test) += 1;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Line-delimited JSON file: one header object, then one record per pair.

inline constexpr int kDatasetFormatVersion = 1;

inline void write_dataset(std::ostream& os, const std::vector<MotionTextPair>& pairs,
                          const Skeleton& skeleton = toy_skeleton()) {
  nlohmann::ordered_json header;
  header["format"] = "moclip-dataset";
  header["version"] = kDatasetFormatVersion;
  header["skeleton"] = skeleton.name();
  os << header.dump() << '\n';
  for (const auto& p : pairs) {
    nlohmann::ordered_json rec;
    rec["class"] = p.motion.class_label;
    rec["caption"] = p.caption;
    rec["split"] = split_name(p.split);
    rec["seed"] = p.motion.seed;
    rec["T"] = p.motion.frames;
    rec["J"] = p.motion.joints;
    rec["positions"] = p.motion.positions;
    os << rec.dump() << '\n';
  }
}

inline void save_dataset(const std::string& path, const std::vector<MotionTextPair>& pairs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  write_dataset(os, pairs);
  if (!os) throw FormatError("failed writing '" + path + "'");
}

inline std::vector<MotionTextPair> read_dataset(std::istream& is, const Skeleton& skeleton = toy_skeleton()) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw FormatError("dataset: missing header line");
  ++line_no;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset: unparsable header: ") + e.what());
  }
  if (header.value("format", "") != "moclip-dataset") throw FormatError("dataset: not a moclip dataset file");
  if (header.value("version", -1) != kDatasetFormatVersion) {
    throw FormatError("dataset: unsupported format version " + header.value("version", nlohmann::json()).dump());
  }
  if (header.value("skeleton", "") != skeleton.name()) {
    throw FormatError("dataset: skeleton '" + header.value("skeleton", "") + "' does not match '" + skeleton.name() + "'");
  }

  std::vector<MotionTextPair> pairs;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      MotionTextPair p;
      p.motion.class_label = rec.at("class").get<std::string>();
      p.caption = rec.at("caption").get<std::string>();
      p.split = parse_split(rec.at("split").get<std::string>());
      p.motion.seed = rec.at("seed").get<std::uint64_t>();
      p.motion.frames = rec.at("T").get<std::size_t>();
      p.motion.joints = rec.at("J").get<std::size_t>();
      p.motion.positions = rec.at("positions").get<std::vector<double>>();
      if (p.caption.empty()) throw FormatError("empty caption");
      if (p.motion.joints != skeleton.joint_count()) throw FormatError("joint count does not match skeleton");
      if (p.motion.frames == 0 || p.motion.positions.size() != p.motion.frames * p.motion.joints * 3) {
        throw FormatError("positions length does not match T*J*3");
      }
      if (!p.motion.finite()) throw FormatError("non-finite position");
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (pairs.empty()) throw FormatError("dataset: no records");
  return pairs;
}

inline std::vector<MotionTextPair> load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open dataset '" + path + "'");
  return read_dataset(is);
}

}  // namespace moclip
