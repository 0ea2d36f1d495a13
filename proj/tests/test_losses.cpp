#include <catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"

using namespace moclip;
using namespace moclip::testing;
using Catch::Matchers::WithinAbs;

namespace {

ContrastiveHead head_with_scale(double s) {
  ContrastiveHead h;
  h.log_scale.mutable_values()[0] = std::log(s);
  return h;
}

Tensor identical_rows(std::size_t n, std::size_t d) {
  std::vector<double> v(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * d] = 1.0;
  return Tensor({n, d}, v);
}

Tensor unit_rows(std::size_t n, std::size_t d, Rng& rng, bool grad = false) {
  NoGradScope off;
  Tensor t = l2_normalize_rows(random_tensor({n, d}, rng, false));
  return Tensor(t.shape(), t.vec(), grad);
}

}  // namespace

TEST_CASE("contrastive loss reference values", "[losses][contrastive]") {
  for (std::size_t n : {2u, 4u, 32u}) {
    const Tensor z = identical_rows(n, 8);
    CHECK_THAT(contrastive_loss(z, z, head_with_scale(3.7)).item(), WithinAbs(std::log(static_cast<double>(n)), 1e-9));
  }
  CHECK_THAT(contrastive_loss(identical_rows(4, 8), identical_rows(4, 8), ContrastiveHead{}).item(),
             WithinAbs(1.3862944, 1e-7));

  const Tensor eye = Tensor({2, 2}, {1, 0, 0, 1});
  CHECK_THAT(contrastive_loss(eye, eye, head_with_scale(1.0)).item(), WithinAbs(0.3132617, 1e-7));
  CHECK(contrastive_loss(eye, eye, head_with_scale(100.0)).item() < 1e-9);

  const Tensor one = Tensor({1, 3}, {0, 1, 0});
  CHECK(contrastive_loss(one, one, ContrastiveHead{}).item() == 0.0);
  CHECK_THROWS_AS(contrastive_loss(identical_rows(3, 4), identical_rows(2, 4), ContrastiveHead{}), DimensionError);
}

TEST_CASE("contrastive loss is symmetric in its batches", "[losses][contrastive]") {
  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const Tensor a = unit_rows(6, 8, rng), b = unit_rows(6, 8, rng);
    const ContrastiveHead h = head_with_scale(rng.uniform(1.0, 50.0));
    CHECK(std::abs(contrastive_loss(a, b, h).item() - contrastive_loss(b, a, h).item()) < 1e-12);
  }
}

TEST_CASE("moving motion rows toward their texts is a descent direction", "[losses][contrastive]") {
  Rng rng(22);
  for (double s : {10.0, 50.0, 100.0}) {
    for (int rep = 0; rep < 50; ++rep) {
      Tensor zm = unit_rows(5, 8, rng, true);
      const Tensor zt = unit_rows(5, 8, rng);
      ComputationTape tape;
      Tensor loss;
      {
        TapeScope scope(tape);
        loss = contrastive_loss(zm, zt, head_with_scale(s));
      }
      tape.backward(loss);
      double dot = 0.0;
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t k = 0; k < 8; ++k) dot += -zm.grad()[i * 8 + k] * (zt.at(i, k) - zm.at(i, k));
      CHECK(dot >= 0.0);
    }
  }
}

TEST_CASE("logit scale is clamped at 100", "[losses][head]") {
  ContrastiveHead h;
  CHECK_THAT(h.scale(), WithinAbs(1.0 / 0.07, 1e-12));
  h.log_scale.mutable_values()[0] = 7.0;
  h.clamp();
  CHECK_THAT(h.scale(), WithinAbs(100.0, 1e-9));
  const ContrastiveHead dense = ContrastiveHead::with_dense(4);
  REQUIRE(dense.dense);
  CHECK(dense.dense->at(2, 2) == 1.0);
  CHECK(dense.dense->at(2, 1) == 0.0);
}

TEST_CASE("distill loss reference values", "[losses][distill]") {
  const Tensor t = Tensor({2, 4}, {0.1, 0.2, 0.3, 0.4, -1, 2, 0, 1});
  CHECK(distill_loss(t, t.clone()).item() == 0.0);
  CHECK(distill_loss(Tensor({1, 4}, {3, 4, 0, 0}), Tensor::zeros({1, 4})).item() == 25.0);
  CHECK(distill_loss(Tensor({2, 3}, {1, 0, 0, 0, 1, 0}), Tensor::zeros({2, 3})).item() == 1.0);
  CHECK_THROWS_AS(distill_loss(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
}

TEST_CASE("alignment loss endpoints", "[losses][alignment]") {
  const Tensor a = Tensor({2, 2}, {1, 0, 0, 2});
  CHECK(alignment_loss(a, a).item() == 0.0);
  CHECK(alignment_loss(a, scale(a, -3.0)).item() == 2.0);
  CHECK(alignment_loss(a, Tensor({2, 2}, {0, 5, -1, 0})).item() == 1.0);
  CHECK_THROWS_AS(alignment_loss(a, Tensor({2, 2}, {0, 0, 1, 1})), DegenerateInputError);
}

TEST_CASE("losses are non-negative on random instances", "[losses]") {
  Rng rng(23);
  for (int rep = 0; rep < 25; ++rep) {
    const Tensor a = unit_rows(4, 8, rng), b = unit_rows(4, 8, rng);
    CHECK(contrastive_loss(a, b, head_with_scale(rng.uniform(0.5, 100))).item() >= 0.0);
    CHECK(distill_loss(random_tensor({4, 8}, rng, false), random_tensor({4, 8}, rng, false)).item() >= 0.0);
    const double al = alignment_loss(random_tensor({4, 8}, rng, false), random_tensor({4, 8}, rng, false)).item();
    CHECK(al >= 0.0);
    CHECK(al <= 2.0);
  }
}

TEST_CASE("total loss weighting", "[losses][total]") {
  const LossBreakdown b = total_loss(0.3, 0.5, 0.2, LossWeights{0.4});
  CHECK_THAT(b.total, WithinAbs(0.7, 1e-15));
  CHECK(b.contrastive == 0.3);
  CHECK(b.distill == 0.5);
  CHECK(b.alignment == 0.2);
  CHECK(total_loss(1.25, 9.0, 0.5, LossWeights{0.0}).total == 1.25 + 0.5);
  CHECK(total_loss(1.25, 0.0, 0.5, LossWeights{1.0}).total == total_loss(1.25, 0.0, 0.5, LossWeights{0.3}).total);

  const Tensor t = total_loss(Tensor::scalar(0.3), Tensor::scalar(0.5), Tensor::scalar(0.2), LossWeights{0.4});
  CHECK(std::abs(t.item() - (0.3 + 0.4 * 0.5 + 0.2)) < 1e-12);
  CHECK_THROWS_AS(total_loss(0.1, 0.1, 0.1, LossWeights{-1.0}), ConfigError);
}

TEST_CASE("loss gradients match finite differences", "[losses][gradcheck]") {
  Rng rng(24);
  Tensor pm = random_tensor({4, 8}, rng), pt = random_tensor({4, 8}, rng), teacher = random_tensor({4, 8}, rng, false);
  ContrastiveHead head = head_with_scale(5.0);
  auto zm = [&] { return l2_normalize_rows(pm); };
  auto zt = [&] { return l2_normalize_rows(pt); };

  CHECK(check_gradients([&] { return contrastive_loss(zm(), zt(), head); }, {pm, pt, head.log_scale}).max_rel < 1e-4);
  CHECK(check_gradients([&] { return distill_loss(pt, teacher); }, {pt}).max_rel < 1e-4);
  CHECK(check_gradients([&] { return alignment_loss(pm, pt); }, {pm, pt}).max_rel < 1e-4);
  const auto composite = [&] {
    return total_loss(contrastive_loss(zm(), zt(), head), distill_loss(pt, teacher), alignment_loss(zm(), zt()),
                      LossWeights{0.4});
  };
  CHECK(check_gradients(composite, {pm, pt, head.log_scale}).max_rel < 1e-4);

  ContrastiveHead dense = ContrastiveHead::with_dense(8);
  {
    auto v = dense.dense->mutable_values();
    for (double& x : v) x += rng.uniform(-0.1, 0.1);
  }
  CHECK(check_gradients([&] { return contrastive_loss(zm(), zt(), dense); }, {pm, pt, *dense.dense}).max_rel < 1e-4);
}
