#include <catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"

using namespace moclip;
using namespace moclip::testing;
using Catch::Matchers::WithinAbs;

namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v, bool grad = false) {
  return Tensor({r, c}, std::move(v), grad);
}

}  // namespace

TEST_CASE("matmul hand-computed products", "[autodiff][matmul]") {
  const Tensor eye = mat(2, 2, {1, 0, 0, 1});
  const Tensor b = mat(2, 2, {1, 2, 3, 4});
  CHECK(matmul(eye, b).vec() == std::vector<double>{1, 2, 3, 4});
  CHECK(matmul(mat(1, 2, {1, 2}), mat(2, 1, {3, 4})).vec() == std::vector<double>{11});
}

TEST_CASE("matmul shape mismatch names both shapes", "[autodiff][matmul]") {
  try {
    matmul(mat(2, 3, std::vector<double>(6, 1.0)), mat(2, 3, std::vector<double>(6, 1.0)));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("softmax rows", "[autodiff][softmax]") {
  SECTION("uniform row") {
    const auto y = softmax_rows(mat(1, 3, {0, 0, 0}));
    for (double v : y.values()) CHECK_THAT(v, WithinAbs(1.0 / 3.0, 1e-15));
  }
  SECTION("max-shift keeps large logits finite") {
    const auto y = softmax_rows(mat(1, 2, {1000, 0}));
    CHECK(y.valid());
    CHECK_THAT(y.vec()[0], WithinAbs(1.0, 1e-15));
    CHECK_THAT(y.vec()[1], WithinAbs(0.0, 1e-15));
  }
  SECTION("direct evaluation of [1,2,3]") {
    const auto y = softmax_rows(mat(1, 3, {1, 2, 3}));
    CHECK_THAT(y.vec()[0], WithinAbs(0.09003057, 5e-9));
    CHECK_THAT(y.vec()[1], WithinAbs(0.24472847, 5e-9));
    CHECK_THAT(y.vec()[2], WithinAbs(0.66524096, 5e-9));
  }
  SECTION("rows sum to one on random input") {
    Rng rng(11);
    const auto y = softmax_rows(random_tensor({7, 13}, rng, false, -30, 30));
    for (std::size_t r = 0; r < 7; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 13; ++c) s += y.at(r, c);
      CHECK_THAT(s, WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("cross entropy rows", "[autodiff][cross_entropy]") {
  for (std::size_t n : {2u, 4u, 8u, 32u}) {
    std::vector<std::size_t> targets(n);
    for (std::size_t i = 0; i < n; ++i) targets[i] = (i * 7) % n;
    const auto loss = cross_entropy_rows(Tensor::zeros({n, n}), targets);
    CHECK_THAT(loss.item(), WithinAbs(std::log(static_cast<double>(n)), 1e-9));
  }
  CHECK_THAT(cross_entropy_rows(Tensor::zeros({4, 4}), {3, 1, 0, 2}).item(), WithinAbs(1.3862944, 1e-7));
  CHECK(cross_entropy_rows(mat(2, 2, {100, 0, 0, 100}), {0, 1}).item() < 1e-9);
  CHECK_THAT(cross_entropy_rows(mat(2, 2, {1, 0, 0, 1}), {0, 1}).item(), WithinAbs(0.3132617, 1e-7));
  CHECK_THROWS_AS(cross_entropy_rows(Tensor::zeros({2, 2}), {0, 2}), IndexError);
}

TEST_CASE("l2 normalise rows", "[autodiff][normalize]") {
  const auto y = l2_normalize_rows(mat(1, 2, {3, 4}));
  CHECK_THAT(y.vec()[0], WithinAbs(0.6, 1e-15));
  CHECK_THAT(y.vec()[1], WithinAbs(0.8, 1e-15));
  const auto unit = l2_normalize_rows(mat(1, 3, {0, 1, 0}));
  CHECK_THAT(unit.vec()[1], WithinAbs(1.0, 1e-15));
  try {
    l2_normalize_rows(mat(2, 2, {1, 0, 0, 0}));
    FAIL("expected DegenerateInputError");
  } catch (const DegenerateInputError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("backward basics", "[autodiff][backward]") {
  SECTION("sum gives ones") {
    Tensor x = Tensor({2, 3}, std::vector<double>(6, 0.5), true);
    ComputationTape tape;
    Tensor loss;
    {
      TapeScope s(tape);
      loss = sum(x);
    }
    tape.backward(loss);
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SECTION("x squared at 3 gives 6") {
    Tensor x = Tensor::scalar(3.0, true);
    ComputationTape tape;
    Tensor loss;
    {
      TapeScope s(tape);
      loss = mul(x, x);
    }
    tape.backward(loss);
    CHECK(x.grad()[0] == 6.0);
  }
  SECTION("unreachable inputs receive zero") {
    Tensor x = Tensor::scalar(2.0, true);
    Tensor unused = Tensor::scalar(5.0, true);
    ComputationTape tape;
    Tensor loss;
    {
      TapeScope s(tape);
      Tensor side = mul(unused, unused);
      (void)side;
      loss = scale(x, 3.0);
    }
    tape.backward(loss);
    CHECK(x.grad()[0] == 3.0);
    REQUIRE(unused.has_grad());
    CHECK(unused.grad()[0] == 0.0);
  }
  SECTION("non-scalar loss is a contract error") {
    Tensor x = Tensor({2}, {1, 2}, true);
    ComputationTape tape;
    Tensor y;
    {
      TapeScope s(tape);
      y = scale(x, 2.0);
    }
    CHECK_THROWS_AS(tape.backward(y), ContractError);
  }
  SECTION("fan-out accumulates") {
    Tensor x = Tensor::scalar(1.5, true);
    ComputationTape tape;
    Tensor loss;
    {
      TapeScope s(tape);
      loss = add(add(x, x), x);
    }
    tape.backward(loss);
    CHECK(x.grad()[0] == 3.0);
  }
}

TEST_CASE("backward is bit-deterministic", "[autodiff][backward]") {
  auto run = [] {
    Rng rng(5);
    Tensor a = random_tensor({4, 8}, rng);
    Tensor b = random_tensor({8, 4}, rng);
    ComputationTape tape;
    Tensor loss;
    {
      TapeScope s(tape);
      loss = cross_entropy_rows(matmul(gelu(a), b), {0, 1, 2, 3});
    }
    tape.backward(loss);
    auto g = a.vec();
    g.assign(a.grad().begin(), a.grad().end());
    g.insert(g.end(), b.grad().begin(), b.grad().end());
    return g;
  };
  CHECK(run() == run());
}

TEST_CASE("masked attention fill", "[autodiff][mask]") {
  const AttentionMask causal = AttentionMask::causal(3);
  const auto p = softmax_rows(add_mask(Tensor::zeros({1, 3, 3}), causal));
  CHECK(p.vec()[1] <= 1e-30);
  CHECK(p.vec()[2] <= 1e-30);
  CHECK_THAT(p.vec()[3], WithinAbs(0.5, 1e-15));
}

TEST_CASE("every kernel matches central finite differences", "[autodiff][gradcheck]") {
  Rng rng(2024);
  constexpr double tol = 1e-6;
  auto check = [&](const std::function<Tensor()>& f, std::vector<Tensor> inputs) {
    const GradCheck r = check_gradients(f, std::move(inputs));
    CHECK(r.max_rel < tol);
    return r.max_rel;
  };

  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), w35 = random_tensor({3, 5}, rng, false);
  SECTION("matmul") { check([&] { return weighted_sum(matmul(a, b), w35); }, {a, b}); }
  SECTION("sum of product") { check([&] { return sum(matmul(a, b)); }, {a, b}); }

  Tensor g3 = random_tensor({2, 3, 4}, rng), h3 = random_tensor({2, 4, 5}, rng), k3 = random_tensor({2, 5, 4}, rng);
  Tensor w235 = random_tensor({2, 3, 5}, rng, false);
  SECTION("bmm") { check([&] { return weighted_sum(bmm(g3, h3), w235); }, {g3, h3}); }
  SECTION("bmm transposed") { check([&] { return weighted_sum(bmm(g3, k3, true), w235); }, {g3, k3}); }

  Tensor x = random_tensor({3, 4}, rng), y = random_tensor({3, 4}, rng), w34 = random_tensor({3, 4}, rng, false);
  Tensor w43 = random_tensor({4, 3}, rng, false);
  SECTION("transpose") { check([&] { return weighted_sum(transpose(x), w43); }, {x}); }
  SECTION("reshape") { check([&] { return weighted_sum(reshape(x, {4, 3}), w43); }, {x}); }
  SECTION("add sub mul") {
    check([&] { return weighted_sum(mul(sub(x, y), add(x, y)), w34); }, {x, y});
  }
  SECTION("scale exp") { check([&] { return weighted_sum(exp(scale(x, 0.7)), w34); }, {x}); }
  SECTION("gelu") { check([&] { return weighted_sum(gelu(scale(x, 3.0)), w34); }, {x}); }
  SECTION("mean") { check([&] { return mean(mul(x, y)); }, {x, y}); }

  Tensor row = random_tensor({4}, rng), s = random_tensor({1}, rng);
  SECTION("add_broadcast") { check([&] { return weighted_sum(add_broadcast(x, row), w34); }, {x, row}); }
  SECTION("mul_scalar") { check([&] { return weighted_sum(mul_scalar(x, s), w34); }, {x, s}); }

  Tensor t3 = random_tensor({2, 3, 4}, rng), w24 = random_tensor({2, 4}, rng, false);
  SECTION("mean_axis1") { check([&] { return weighted_sum(mean_axis1(t3), w24); }, {t3}); }
  SECTION("concat") {
    Tensor w64 = random_tensor({6, 4}, rng, false);
    check([&] { return weighted_sum(concat({x, y}), w64); }, {x, y});
  }
  SECTION("gather rows with repeats") {
    Tensor table = random_tensor({5, 4}, rng);
    check([&] { return weighted_sum(gather_rows(table, {4, 0, 4}), w34); }, {table});
  }
  SECTION("embedding") {
    Tensor table = random_tensor({6, 4}, rng);
    check([&] { return weighted_sum(embedding(table, {1, 5, 1}), w34); }, {table});
  }
  SECTION("split and merge heads") {
    Tensor hx = random_tensor({2, 3, 4}, rng), wh = random_tensor({4, 3, 2}, rng, false);
    check([&] { return weighted_sum(split_heads(hx, 2), wh); }, {hx});
    Tensor hm = random_tensor({4, 3, 2}, rng), wm = random_tensor({2, 3, 4}, rng, false);
    check([&] { return weighted_sum(merge_heads(hm, 2), wm); }, {hm});
  }
  SECTION("softmax rows") { check([&] { return weighted_sum(softmax_rows(scale(x, 2.0)), w34); }, {x}); }
  SECTION("masked softmax") {
    Tensor sc = random_tensor({2, 3, 3}, rng), w233 = random_tensor({2, 3, 3}, rng, false);
    const AttentionMask m = attention_mask(Skeleton("chain", {"a", "b", "c"}, {0, 0, 1}), false);
    check([&] { return weighted_sum(softmax_rows(add_mask(sc, m)), w233); }, {sc});
  }
  SECTION("layer norm") {
    Tensor gain = random_tensor({4}, rng), bias = random_tensor({4}, rng);
    check([&] { return weighted_sum(layer_norm(x, gain, bias), w34); }, {x, gain, bias});
  }
  SECTION("l2 normalise") { check([&] { return weighted_sum(l2_normalize_rows(x), w34); }, {x}); }
  SECTION("cosine rows") {
    Tensor w3 = random_tensor({3}, rng, false);
    check([&] { return weighted_sum(cosine_rows(x, y), w3); }, {x, y});
  }
  SECTION("cross entropy") {
    Tensor logits = random_tensor({4, 4}, rng);
    check([&] { return cross_entropy_rows(scale(logits, 3.0), {2, 0, 3, 1}); }, {logits});
  }
}
