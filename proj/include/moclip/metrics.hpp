#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <json.hpp>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "moclip/dataset.hpp"
#include "moclip/errors.hpp"
#include "moclip/model.hpp"
#include "moclip/rng.hpp"

namespace moclip {

/// Feature sets are row-per-sample matrices.
using Features = Eigen::MatrixXd;

inline Features to_features(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("to_features: expected a matrix, got " + shape_str(t.shape()));
  Features f(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.at(i, j);
  }
  return f;
}

struct RPrecision {
  double top1 = 0.0;
  double top2 = 0.0;
  double top3 = 0.0;
};

/// 0-based rank of the ground-truth text for every (trial, probe), trial-major.
inline std::vector<std::size_t> retrieval_ranks(const Features& motion, const Features& text, std::size_t pool_size,
                                                std::size_t trials, std::uint64_t seed) {
  if (motion.rows() != text.rows() || motion.cols() != text.cols()) {
    throw DimensionError("r_precision: motion and text feature sets differ in shape");
  }
  const auto n = static_cast<std::size_t>(motion.rows());
  if (pool_size < 1) throw ConfigError("r_precision: pool_size must be >= 1");
  if (n < pool_size) {
    throw ConfigError("r_precision: " + std::to_string(n) + " samples, fewer than the pool size " +
                      std::to_string(pool_size));
  }
  if (trials < 1) throw ConfigError("r_precision: trials must be >= 1");
  std::vector<std::size_t> ranks;
  ranks.reserve(trials * n);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, "r_precision", trial));
    for (std::size_t i = 0; i < n; ++i) {
      const auto probe = motion.row(static_cast<Eigen::Index>(i));
      const double d_true = (probe - text.row(static_cast<Eigen::Index>(i))).norm();
      std::size_t rank = 0;
      for (std::size_t j : rng.sample_distinct(n, pool_size - 1, i)) {
        const double d = (probe - text.row(static_cast<Eigen::Index>(j))).norm();
        if (d < d_true || (d == d_true && j < i)) ++rank;
      }
      ranks.push_back(rank);
    }
  }
  return ranks;
}

inline RPrecision r_precision(const Features& motion, const Features& text, std::size_t pool_size = 32,
                              std::size_t trials = 1, std::uint64_t seed = 0) {
  const auto ranks = retrieval_ranks(motion, text, pool_size, trials, seed);
  RPrecision r;
  for (std::size_t k : ranks) {
    r.top1 += k < 1 ? 1.0 : 0.0;
    r.top2 += k < 2 ? 1.0 : 0.0;
    r.top3 += k < 3 ? 1.0 : 0.0;
  }
  const double inv = 1.0 / static_cast<double>(ranks.size());
  r.top1 *= inv;
  r.top2 *= inv;
  r.top3 *= inv;
  return r;
}

/// Square root of a symmetric PSD matrix through its eigendecomposition.
inline Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DimensionError("matrix_sqrt_psd: matrix is not square");
  const double scale = std::max(m.norm(), 1e-300);
  if ((m - m.transpose()).norm() > 1e-9 * std::max(1.0, scale)) {
    throw ContractError("matrix_sqrt_psd: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw NumericalError("matrix_sqrt_psd: eigendecomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues();
  const double roundoff = 8.0 * static_cast<double>(m.rows()) * std::numeric_limits<double>::epsilon() *
                          lambda.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < -1e-10 * scale) {
      throw NotPsdError("matrix_sqrt_psd: eigenvalue " + std::to_string(lambda(i)) + " is negative");
    }
    lambda(i) = lambda(i) <= roundoff ? 0.0 : std::sqrt(lambda(i));
  }
  const Eigen::MatrixXd& v = eig.eigenvectors();
  return v * lambda.asDiagonal() * v.transpose();
}

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Mean and unbiased covariance of the rows.
inline GaussianStats gaussian_stats(const Features& x) {
  if (x.rows() < 2) throw ConfigError("gaussian_stats: need at least 2 samples");
  GaussianStats s;
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  return s;
}

inline double fid_from_stats(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1, const Eigen::VectorXd& mu2,
                             const Eigen::MatrixXd& sigma2) {
  if (mu1.size() != mu2.size() || sigma1.rows() != mu1.size() || sigma2.rows() != mu2.size()) {
    throw DimensionError("fid_from_stats: dimension mismatch");
  }
  const Eigen::MatrixXd root1 = matrix_sqrt_psd(sigma1);
  Eigen::MatrixXd inner = root1 * sigma2 * root1;
  inner = 0.5 * (inner + inner.transpose()).eval();
  const Eigen::MatrixXd cross = matrix_sqrt_psd(inner);
  const double value = (mu1 - mu2).squaredNorm() + sigma1.trace() + sigma2.trace() - 2.0 * cross.trace();
  if (value < 0.0) {
    if (value >= -1e-8) return 0.0;
    throw NumericalError("fid: negative distance " + std::to_string(value));
  }
  return value;
}

inline double fid_from_stats(const GaussianStats& a, const GaussianStats& b) {
  return fid_from_stats(a.mean, a.cov, b.mean, b.cov);
}

inline double fid(const Features& a, const Features& b) {
  if (a.cols() != b.cols()) throw DimensionError("fid: feature widths differ");
  return fid_from_stats(gaussian_stats(a), gaussian_stats(b));
}

inline double mm_dist(const Features& motion, const Features& text) {
  if (motion.rows() != text.rows() || motion.cols() != text.cols()) {
    throw DimensionError("mm_dist: feature sets differ in shape");
  }
  if (motion.rows() == 0) throw ConfigError("mm_dist: empty feature set");
  return (motion - text).rowwise().norm().mean();
}

inline std::size_t default_pair_count(std::size_t n) { return std::min<std::size_t>(100, n / 2); }

inline double diversity(const Features& feats, std::size_t pair_count, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(feats.rows());
  if (pair_count < 1 || n < 2 * pair_count) {
    throw ConfigError("diversity: " + std::to_string(n) + " rows cannot form " + std::to_string(pair_count) +
                      " disjoint pairs");
  }
  Rng rng(derive_seed(seed, "diversity"));
  const auto rows = rng.sample_distinct(n, 2 * pair_count, n);
  double total = 0.0;
  for (std::size_t p = 0; p < pair_count; ++p) {
    total += (feats.row(static_cast<Eigen::Index>(rows[2 * p])) - feats.row(static_cast<Eigen::Index>(rows[2 * p + 1])))
                 .norm();
  }
  return total / static_cast<double>(pair_count);
}

inline constexpr std::size_t kMultimodalityGroup = 20;

inline double multimodality(const std::vector<Features>& groups) {
  if (groups.empty()) throw ConfigError("multimodality: no groups");
  double total = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& x = groups[g];
    if (static_cast<std::size_t>(x.rows()) != kMultimodalityGroup) {
      throw ConfigError("multimodality: group " + std::to_string(g) + " has " + std::to_string(x.rows()) +
                        " rows, expected 20");
    }
    double sum = 0.0;
    for (Eigen::Index p = 0; p < 10; ++p) sum += (x.row(2 * p) - x.row(2 * p + 1)).norm();
    total += sum / 10.0;
  }
  return total / static_cast<double>(groups.size());
}

// ---------------------------------------------------------------------------
// Evaluation driver

struct EvalConfig {
  std::size_t runs = 20;
  std::size_t pool_size = 32;
  std::size_t trials = 1;
  std::size_t mm_captions = 8;
  std::string split = "heldout";
  std::uint64_t seed = 0;

  void validate() const {
    if (runs < 1) throw ConfigError("eval runs must be >= 1");
    if (pool_size < 2) throw ConfigError("pool_size must be >= 2");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (mm_captions < 1) throw ConfigError("mm_captions must be >= 1");
    if (split != "heldout" && split != "train" && split != "val" && split != "test") {
      throw ConfigError("eval split '" + split + "' is not one of train, val, test, heldout");
    }
  }
};

/// Pairs of the named split; "heldout" is val and test together.
inline std::vector<const MotionTextPair*> eval_pairs(const std::vector<MotionTextPair>& dataset,
                                                     const std::string& split) {
  std::vector<const MotionTextPair*> out;
  for (const auto& p : dataset) {
    const bool take = split == "heldout" ? p.split != Split::train : p.split == parse_split(split);
    if (take) out.push_back(&p);
  }
  return out;
}

struct RunMetrics {
  double top1 = 0.0, top2 = 0.0, top3 = 0.0;
  double fid = 0.0, mm_dist = 0.0, diversity = 0.0, multimodality = 0.0;
};

struct MetricSummary {
  double mean = 0.0;
  double ci95 = 0.0;
  std::vector<double> values;
};

inline MetricSummary summarize(std::vector<double> values) {
  MetricSummary s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.ci95 = 1.96 * std::sqrt(sq / (n - 1.0)) / std::sqrt(n);
  }
  s.values = std::move(values);
  return s;
}

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"r_precision_top1", "r_precision_top2", "r_precision_top3", "fid",
                                                 "mm_dist",          "diversity",        "multimodality"};
  return names;
}

struct MetricsReport {
  std::vector<RunMetrics> runs;
  std::map<std::string, MetricSummary> summary;
  std::size_t samples = 0;
  std::size_t pool_size = 0;
  std::size_t mm_groups = 0;
  EvalConfig config;
};

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  for (const auto& name : metric_names()) {
    const auto& s = r.summary.at(name);
    j[name] = {{"mean", s.mean}, {"ci95", s.ci95}, {"runs", s.values.size()}, {"values", s.values}};
  }
  j["samples"] = r.samples;
  j["pool_size"] = r.pool_size;
  j["multimodality_groups"] = r.mm_groups;
  j["config"] = {{"runs", r.config.runs},
                 {"pool_size", r.config.pool_size},
                 {"trials", r.config.trials},
                 {"mm_captions", r.config.mm_captions},
                 {"split", r.config.split},
                 {"seed", r.config.seed}};
  return j;
}

/// Unit motion embeddings, encoded in chunks without recording.
inline Features encode_motion_features(const MoClipModel& model, const std::vector<const MotionSequence*>& motions,
                                       std::size_t chunk = 64) {
  NoGradScope no_grad;
  Features out(static_cast<Eigen::Index>(motions.size()), static_cast<Eigen::Index>(model.config.embed_dim));
  for (std::size_t start = 0; start < motions.size(); start += chunk) {
    const std::size_t end = std::min(motions.size(), start + chunk);
    const std::vector<const MotionSequence*> part(motions.begin() + static_cast<std::ptrdiff_t>(start),
                                                  motions.begin() + static_cast<std::ptrdiff_t>(end));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        to_features(model.encode_motions(part));
  }
  return out;
}

inline Features encode_text_features(const MoClipModel& model, const std::vector<std::string>& captions) {
  NoGradScope no_grad;
  return to_features(model.encode_student(captions).normalized);
}

/// Same class and style as `m`, new performance seed.
inline MotionSequence fresh_variant(const MotionSequence& m, std::uint64_t seed) {
  return generate_motion(m.class_label, toy_skeleton(), m.frames, seed, style_for_seed(m.seed));
}

/// Repeats the metric suite `runs` times with derived seeds.
inline MetricsReport evaluate(const MoClipModel& model, const std::vector<MotionTextPair>& dataset,
                              const EvalConfig& cfg) {
  cfg.validate();
  const auto pairs = eval_pairs(dataset, cfg.split);
  if (pairs.size() < cfg.pool_size) {
    throw ConfigError("evaluation split '" + cfg.split + "' has " + std::to_string(pairs.size()) +
                      " pairs, fewer than the retrieval pool of " + std::to_string(cfg.pool_size));
  }
  std::vector<const MotionSequence*> motions;
  std::vector<std::string> captions;
  for (const auto* p : pairs) {
    motions.push_back(&p->motion);
    captions.push_back(p->caption);
  }
  const Features real = encode_motion_features(model, motions);
  const Features text = encode_text_features(model, captions);
  const double matched = mm_dist(real, text);

  MetricsReport report;
  report.config = cfg;
  report.samples = pairs.size();
  report.pool_size = cfg.pool_size;
  report.mm_groups = std::min(cfg.mm_captions, pairs.size());
  for (std::size_t run = 0; run < cfg.runs; ++run) {
    const std::uint64_t run_seed = derive_seed(cfg.seed, "eval", run);
    RunMetrics m;
    const RPrecision rp = r_precision(real, text, cfg.pool_size, cfg.trials, run_seed);
    m.top1 = rp.top1;
    m.top2 = rp.top2;
    m.top3 = rp.top3;
    m.mm_dist = matched;

    std::vector<MotionSequence> variants;
    variants.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      variants.push_back(fresh_variant(pairs[i]->motion, derive_seed(run_seed, "variant", i)));
    }
    std::vector<const MotionSequence*> vp;
    for (const auto& v : variants) vp.push_back(&v);
    const Features generated = encode_motion_features(model, vp);
    m.fid = fid(real, generated);
    m.diversity = diversity(generated, default_pair_count(pairs.size()), run_seed);

    Rng pick(derive_seed(run_seed, "multimodality"));
    std::vector<Features> groups;
    for (std::size_t c : pick.sample_distinct(pairs.size(), report.mm_groups, pairs.size())) {
      std::vector<MotionSequence> group;
      for (std::size_t k = 0; k < kMultimodalityGroup; ++k) {
        group.push_back(fresh_variant(pairs[c]->motion, derive_seed(run_seed, "mm", c * kMultimodalityGroup + k)));
      }
      std::vector<const MotionSequence*> gp;
      for (const auto& g : group) gp.push_back(&g);
      groups.push_back(encode_motion_features(model, gp));
    }
    m.multimodality = multimodality(groups);
    report.runs.push_back(m);
  }

  auto collect = [&](double RunMetrics::*field) {
    std::vector<double> v;
    for (const auto& r : report.runs) v.push_back(r.*field);
    return summarize(std::move(v));
  };
  report.summary["r_precision_top1"] = collect(&RunMetrics::top1);
  report.summary["r_precision_top2"] = collect(&RunMetrics::top2);
  report.summary["r_precision_top3"] = collect(&RunMetrics::top3);
  report.summary["fid"] = collect(&RunMetrics::fid);
  report.summary["mm_dist"] = collect(&RunMetrics::mm_dist);
  report.summary["diversity"] = collect(&RunMetrics::diversity);
  report.summary["multimodality"] = collect(&RunMetrics::multimodality);
  return report;
}

}  // namespace moclip
