#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <Eigen/QR>

#include "support.hpp"

using namespace moclip;
using namespace moclip::testing;
using Catch::Matchers::WithinAbs;

namespace {

Features gaussian_rows(Eigen::Index n, Eigen::Index d, Rng& rng, double shift = 0.0) {
  Features f(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) f(i, j) = rng.normal() + shift;
  return f;
}

Features unit_rows(Eigen::Index n, Eigen::Index d, Rng& rng) {
  Features f = gaussian_rows(n, d, rng);
  f.rowwise().normalize();
  return f;
}

Eigen::MatrixXd random_rotation(Eigen::Index d, Rng& rng) {
  const Eigen::MatrixXd a = gaussian_rows(d, d, rng);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
}

double frobenius_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / b.norm(); }

MoClipModel random_model(const std::vector<MotionTextPair>& data, std::uint64_t seed) {
  std::vector<std::string> captions;
  for (const auto& p : data) captions.push_back(p.caption);
  return MoClipModel(tiny_model(), build_vocab(captions), seed);
}

}  // namespace

TEST_CASE("r-precision constructed cases", "[metrics][retrieval]") {
  Rng rng(1);
  const Features m = gaussian_rows(40, 8, rng);
  const RPrecision perfect = r_precision(m, m, 32, 3, 5);
  CHECK(perfect.top1 == 1.0);
  CHECK(perfect.top2 == 1.0);
  CHECK(perfect.top3 == 1.0);

  const std::size_t n = 32;
  const double step = 2.0 * std::numbers::pi / static_cast<double>(n);
  Features motion(n, 2), text(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = step * static_cast<double>(i);
    motion.row(static_cast<Eigen::Index>(i)) << std::cos(a), std::sin(a);
    text.row(static_cast<Eigen::Index>(i)) << std::cos(a + 0.6 * step), std::sin(a + 0.6 * step);
  }
  const RPrecision second = r_precision(motion, text, 32, 4, 9);
  CHECK(second.top1 == 0.0);
  CHECK(second.top2 == 1.0);
  CHECK(second.top3 == 1.0);

  CHECK_THROWS_AS(r_precision(gaussian_rows(20, 4, rng), gaussian_rows(20, 4, rng), 32), ConfigError);
  CHECK_THROWS_AS(r_precision(gaussian_rows(40, 4, rng), gaussian_rows(40, 5, rng), 32), DimensionError);
}

TEST_CASE("r-precision ties break toward the lower candidate index", "[metrics][retrieval]") {
  Features motion = Features::Zero(4, 2);
  Features text = Features::Zero(4, 2);
  const RPrecision r = r_precision(motion, text, 4, 1, 0);
  CHECK(r.top1 == 0.25);
  CHECK(r.top2 == 0.5);
  CHECK(r.top3 == 0.75);
}

TEST_CASE("r-precision on random embeddings sits at chance", "[metrics][retrieval]") {
  Rng rng(2);
  const Features m = unit_rows(256, 64, rng), t = unit_rows(256, 64, rng);
  const RPrecision r = r_precision(m, t, 32, 1000, 17);
  CHECK_THAT(r.top1, WithinAbs(1.0 / 32.0, 0.01));
  CHECK_THAT(r.top2, WithinAbs(2.0 / 32.0, 0.012));
  CHECK_THAT(r.top3, WithinAbs(3.0 / 32.0, 0.015));
}

TEST_CASE("r-precision stays ordered within the unit cube", "[metrics][retrieval]") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Features m = gaussian_rows(34, 3, rng);
    const Features t = m + 0.8 * gaussian_rows(34, 3, rng);
    const RPrecision r = r_precision(m, t, 32, 2, static_cast<std::uint64_t>(rep));
    CHECK(0.0 <= r.top1);
    CHECK(r.top1 <= r.top2);
    CHECK(r.top2 <= r.top3);
    CHECK(r.top3 <= 1.0);
  }
}

TEST_CASE("psd square root", "[metrics][sqrt]") {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(5, 5);
  CHECK(matrix_sqrt_psd(eye).isApprox(eye, 1e-14));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = 4;
  d(1, 1) = 9;
  const Eigen::MatrixXd s = matrix_sqrt_psd(d);
  CHECK_THAT(s(0, 0), WithinAbs(2.0, 1e-14));
  CHECK_THAT(s(1, 1), WithinAbs(3.0, 1e-14));
  CHECK_THAT(s(0, 1), WithinAbs(0.0, 1e-14));

  Rng rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd a = gaussian_rows(8, 8, rng);
    const Eigen::MatrixXd m = a * a.transpose();
    const Eigen::MatrixXd r = matrix_sqrt_psd(m);
    CHECK(frobenius_rel(r * r, m) < 1e-10);
  }
  const Eigen::MatrixXd a = gaussian_rows(8, 3, rng);
  const Eigen::MatrixXd low_rank = a * a.transpose();
  CHECK(frobenius_rel(matrix_sqrt_psd(low_rank) * matrix_sqrt_psd(low_rank), low_rank) < 1e-8);

  Eigen::MatrixXd asym = eye;
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(matrix_sqrt_psd(asym), ContractError);
  Eigen::MatrixXd neg = eye;
  neg(2, 2) = -0.5;
  CHECK_THROWS_AS(matrix_sqrt_psd(neg), NotPsdError);
  CHECK_THROWS_AS(matrix_sqrt_psd(Eigen::MatrixXd::Zero(2, 3)), DimensionError);
}

TEST_CASE("frechet distance oracles", "[metrics][fid]") {
  auto one = [](double v) { return Eigen::VectorXd::Constant(1, v); };
  auto var = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };
  CHECK_THAT(fid_from_stats(one(0), var(1), one(1), var(1)), WithinAbs(1.0, 1e-12));
  CHECK_THAT(fid_from_stats(one(0), var(1), one(0), var(4)), WithinAbs(1.0, 1e-12));

  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const double m1 = rng.uniform(-3, 3), m2 = rng.uniform(-3, 3);
    const double s1 = rng.uniform(0.1, 3), s2 = rng.uniform(0.1, 3);
    const double expected = (m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2);
    CHECK_THAT(fid_from_stats(one(m1), var(s1 * s1), one(m2), var(s2 * s2)), WithinAbs(expected, 1e-9));
  }

  for (int rep = 0; rep < 10; ++rep) {
    const Features x = gaussian_rows(50, 8, rng);
    const Features y = gaussian_rows(60, 8, rng, 0.3);
    CHECK(fid(x, x) <= 1e-8);
    CHECK(fid(x, y) >= 0.0);
    CHECK(std::abs(fid(x, y) - fid(y, x)) <= 1e-8);
  }

  const Features few = gaussian_rows(4, 8, rng);
  CHECK(fid(few, few) <= 1e-8);
  CHECK_THROWS_AS(fid(gaussian_rows(1, 3, rng), gaussian_rows(5, 3, rng)), ConfigError);
  CHECK_THROWS_AS(fid(gaussian_rows(5, 3, rng), gaussian_rows(5, 4, rng)), DimensionError);
}

TEST_CASE("covariance uses the unbiased estimator", "[metrics][fid]") {
  Features x(3, 1);
  x << 1, 2, 3;
  const GaussianStats s = gaussian_stats(x);
  CHECK(s.mean(0) == 2.0);
  CHECK_THAT(s.cov(0, 0), WithinAbs(1.0, 1e-15));
}

TEST_CASE("matched distance", "[metrics][mm_dist]") {
  Rng rng(6);
  const Features a = gaussian_rows(10, 4, rng);
  CHECK(mm_dist(a, a) == 0.0);
  Features shifted = a;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Eigen::VectorXd u = gaussian_rows(1, 4, rng).row(0).transpose().normalized();
    shifted.row(i) += u.transpose();
  }
  CHECK_THAT(mm_dist(a, shifted), WithinAbs(1.0, 1e-12));
  Features m = Features::Zero(2, 2), t(2, 2);
  t << 3, 0, 0, 5;
  CHECK(mm_dist(m, t) == 4.0);
  CHECK_THROWS_AS(mm_dist(a, gaussian_rows(9, 4, rng)), DimensionError);
}

TEST_CASE("diversity", "[metrics][diversity]") {
  const Features same = Features::Constant(30, 5, 0.7);
  CHECK(diversity(same, 10, 1) == 0.0);
  Features two(2, 3);
  two << 0, 0, 0, 0, 2, 0;
  CHECK(diversity(two, 1, 3) == 2.0);

  Rng rng(7);
  const Features x = gaussian_rows(250, 6, rng);
  CHECK(default_pair_count(250) == 100);
  CHECK(default_pair_count(30) == 15);
  CHECK(diversity(x, 100, 42) == diversity(x, 100, 42));
  CHECK(diversity(x, 100, 42) != diversity(x, 100, 43));
  CHECK_THROWS_AS(diversity(x, 126, 1), ConfigError);
}

TEST_CASE("multimodality", "[metrics][multimodality]") {
  CHECK(multimodality({Features::Constant(20, 4, 1.5)}) == 0.0);
  Features alt(20, 2);
  for (Eigen::Index i = 0; i < 20; ++i) alt.row(i) << (i % 2 == 0 ? 0.0 : 1.25), 0.0;
  CHECK_THAT(multimodality({alt}), WithinAbs(1.25, 1e-15));
  Features alt2 = alt * 2.0;
  CHECK_THAT(multimodality({alt, alt2}), WithinAbs((1.25 + 2.5) / 2.0, 1e-15));
  CHECK_THROWS_AS(multimodality({Features::Zero(19, 2)}), ConfigError);
  CHECK_THROWS_AS(multimodality({}), ConfigError);
}

TEST_CASE("distance metrics are rotation invariant", "[metrics][property]") {
  Rng rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::MatrixXd q = random_rotation(6, rng);
    const Features a = gaussian_rows(40, 6, rng), b = gaussian_rows(40, 6, rng);
    const Features g1 = gaussian_rows(20, 6, rng), g2 = gaussian_rows(20, 6, rng);
    CHECK(std::abs(mm_dist(a, b) - mm_dist(a * q, b * q)) <= 1e-9);
    CHECK(std::abs(diversity(a, 20, 5) - diversity(a * q, 20, 5)) <= 1e-9);
    CHECK(std::abs(multimodality({g1, g2}) - multimodality({g1 * q, g2 * q})) <= 1e-9);
    CHECK(std::abs(fid(a, b) - fid(a * q, b * q)) <= 1e-8);
  }
}

TEST_CASE("evaluation of an untrained model", "[metrics][evaluate]") {
  const auto data = generate_dataset(tiny_dataset_config());
  const MoClipModel model = random_model(data, 3);
  EvalConfig cfg;
  cfg.runs = 4;
  cfg.trials = 20;
  cfg.mm_captions = 2;
  cfg.split = "train";
  const MetricsReport report = evaluate(model, data, cfg);
  REQUIRE(report.runs.size() == 4);
  CHECK(report.samples == count_splits(data).train);
  CHECK(report.pool_size == 32);
  CHECK(report.mm_groups == 2);

  for (const auto& r : report.runs) {
    CHECK(r.top1 <= r.top2);
    CHECK(r.top2 <= r.top3);
    CHECK(r.fid >= 0.0);
    CHECK(r.mm_dist >= 0.0);
    CHECK(r.diversity >= 0.0);
    CHECK(r.multimodality >= 0.0);
  }
  const double p = 1.0 / 32.0;
  const double n = static_cast<double>(report.samples * cfg.trials * cfg.runs);
  const double se = std::sqrt(p * (1.0 - p) / n);
  CHECK(std::abs(report.summary.at("r_precision_top1").mean - p) <= 3.0 * se);

  const auto j = to_json(report);
  for (const auto& name : metric_names()) {
    REQUIRE(j.contains(name));
    CHECK(j[name].contains("mean"));
    CHECK(j[name].contains("ci95"));
    CHECK(j[name]["runs"] == 4);
  }
  CHECK(j["config"]["split"] == "train");

  cfg.runs = 1;
  cfg.trials = 1;
  const MetricsReport single = evaluate(model, data, cfg);
  CHECK(single.summary.at("fid").ci95 == 0.0);
  CHECK(evaluate(model, data, cfg).runs[0].fid == single.runs[0].fid);

  cfg.split = "test";
  CHECK_THROWS_AS(evaluate(model, data, cfg), ConfigError);
  cfg.split = "everything";
  CHECK_THROWS_AS(evaluate(model, data, cfg), ConfigError);
}

TEST_CASE("git blob hashes", "[manifest]") {
  CHECK(git_blob_hash({}) == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  const std::string hello = "hello\n";
  CHECK(git_blob_hash(std::vector<unsigned char>(hello.begin(), hello.end())) ==
        "ce013625030ba8dba906f756967f9e9ca394464a");
}
