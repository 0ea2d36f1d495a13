#include <catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"

using namespace moclip;
using namespace moclip::testing;

namespace {

double row_norm(const Tensor& t, std::size_t r) {
  double s = 0.0;
  for (std::size_t c = 0; c < t.dim(1); ++c) s += t.at(r, c) * t.at(r, c);
  return std::sqrt(s);
}

double l2_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.vec()[i] - b.vec()[i]) * (a.vec()[i] - b.vec()[i]);
  return std::sqrt(s);
}

MotionSequence permute_frames(const MotionSequence& m, const std::vector<std::size_t>& order) {
  MotionSequence out = m;
  for (std::size_t t = 0; t < m.frames; ++t)
    for (std::size_t j = 0; j < m.joints; ++j)
      for (std::size_t c = 0; c < 3; ++c) out.at(t, j, c) = m.at(order[t], j, c);
  return out;
}

TextEncoderConfig small_text(std::size_t vocab_size) {
  TextEncoderConfig c;
  c.vocab_size = vocab_size;
  c.context_length = 16;
  c.width = 16;
  c.heads = 2;
  c.layers = 2;
  c.embed_dim = 8;
  return c;
}

}  // namespace

TEST_CASE("vocabulary ids follow the sort rule", "[encoders][vocab]") {
  const Vocabulary v = build_vocab({"a person walks"});
  const std::vector<std::string> expected = {"<pad>", "<unk>", "<bos>", "<eos>", "a", "person", "walks"};
  CHECK(v.tokens() == expected);
  CHECK(v.id("a") == 4);
  CHECK(v.id("walks") == 6);
  CHECK(v.id("jumps") == Vocabulary::kUnk);
  CHECK(build_vocab({"b a", "C"}) == build_vocab({"b a", "C"}));
  CHECK(build_vocab({"B A"}).tokens().back() == "b");
  CHECK_THROWS_AS(build_vocab({}), ConfigError);
}

TEST_CASE("caption encoding frames and truncates", "[encoders][vocab]") {
  const Vocabulary v = build_vocab({"a person walks"});
  CHECK(v.encode("A person runs", 32) == std::vector<std::size_t>{2, 4, 5, 1, 3});
  const auto cut = v.encode("a a a a a a a a", 4);
  CHECK(cut == std::vector<std::size_t>{2, 4, 4, 3});
}

TEST_CASE("text encoder contracts", "[encoders][text]") {
  const Vocabulary vocab = build_vocab({"a person walks forward", "a person jumps high"});
  Rng rng(3);
  const TextEncoder student(small_text(vocab.size()), rng);
  const TextEncoder teacher = student.clone_teacher();
  const std::vector<std::string> captions = {"a person walks forward", "a person jumps", "walks walks walks",
                                             "an unseen sentence here"};
  const auto s = student.encode(vocab, captions);
  const auto t1 = teacher.encode(vocab, captions);
  const auto t2 = teacher.encode(vocab, captions);
  REQUIRE(s.normalized.dim(0) == 4);
  REQUIRE(s.normalized.dim(1) == 8);
  for (std::size_t r = 0; r < 4; ++r) CHECK(std::abs(row_norm(s.normalized, r) - 1.0) <= 1e-9);
  CHECK(t1.normalized.vec() == t2.normalized.vec());
  CHECK(s.normalized.vec() == t1.normalized.vec());
  CHECK(s.projected.vec() == t1.projected.vec());
  CHECK(teacher.frozen());
  CHECK_FALSE(student.frozen());
}

TEST_CASE("text encoder attention is causal", "[encoders][text]") {
  const Vocabulary vocab = build_vocab({"a b c d e"});
  Rng rng(9);
  const TextEncoder enc(small_text(vocab.size()), rng);
  AttentionProbe probe;
  enc.encode({vocab.encode("a b c d e", 16)}, &probe);
  REQUIRE_FALSE(probe.empty());
  for (const auto& w : probe) {
    const std::size_t L = w.dim(1);
    for (std::size_t g = 0; g < w.dim(0); ++g)
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = i + 1; j < L; ++j) CHECK(w.vec()[(g * L + i) * L + j] <= 1e-30);
  }
}

TEST_CASE("teacher stays frozen through updates and backward", "[encoders][teacher]") {
  const Vocabulary vocab = build_vocab({"a person walks", "a person jumps"});
  Rng rng(4);
  TextEncoder student(small_text(vocab.size()), rng);
  const TextEncoder teacher = student.clone_teacher();
  auto tp = teacher.params();
  set_requires_grad(tp, false);
  std::vector<std::vector<double>> before;
  for (const auto& [n, t] : tp) before.push_back(t.vec());

  student.set_trainable(true);
  auto sp = student.params();
  ComputationTape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    const auto s = student.encode(vocab, {"a person walks", "a person jumps"});
    const auto t = teacher.encode(vocab, {"a person walks", "a person jumps"});
    loss = add(distill_loss(s.projected, t.projected), sum(s.projected));
  }
  tape.backward(loss);
  for (const auto& [n, t] : tp) CHECK_FALSE(t.has_grad());
  AdamW opt;
  opt.step(sp);
  for (std::size_t i = 0; i < tp.size(); ++i) CHECK(tp[i].second.vec() == before[i]);
  CHECK(sp.front().second.vec() != tp.front().second.vec());
  CHECK_THROWS_AS(const_cast<TextEncoder&>(teacher).set_trainable(true), ContractError);
}

TEST_CASE("motion encoder contracts", "[encoders][motion]") {
  Rng rng(1);
  const MotionEncoder enc(MotionEncoderConfig{}, toy_skeleton(), rng);
  const auto walk = generate_motion("walk", toy_skeleton(), 24, 5);
  const auto clap = generate_motion("clap", toy_skeleton(), 24, 6);
  const Tensor z = enc.encode({&walk, &clap});
  REQUIRE(z.dim(1) == 64);
  CHECK(std::abs(row_norm(z, 0) - 1.0) <= 1e-9);
  CHECK(std::abs(row_norm(z, 1) - 1.0) <= 1e-9);

  MotionSequence wrong = walk;
  wrong.joints = 13;
  wrong.positions.resize(24 * 13 * 3);
  CHECK_THROWS_AS(enc.encode(wrong), DimensionError);
}

TEST_CASE("spatial attention never leaks outside the mask", "[encoders][motion][mask]") {
  for (bool cross : {false, true}) {
    MotionEncoderConfig cfg;
    cfg.cross_limb = cross;
    Rng rng(2);
    const MotionEncoder enc(cfg, toy_skeleton(), rng);
    const auto m = generate_motion("clap", toy_skeleton(), 6, 1);
    AttentionProbe spatial;
    enc.encode({&m}, &spatial);
    REQUIRE(spatial.size() == cfg.spatial_layers);
    const auto mask = attention_mask(toy_skeleton(), cross);
    double leaked = 0.0;
    for (const auto& w : spatial) {
      const std::size_t J = 14;
      for (std::size_t g = 0; g < w.dim(0); ++g)
        for (std::size_t i = 0; i < J; ++i)
          for (std::size_t j = 0; j < J; ++j)
            if (!mask(i, j)) leaked = std::max(leaked, w.vec()[(g * J + i) * J + j]);
    }
    CHECK(leaked <= 1e-30);
  }
}

TEST_CASE("frame order matters only with positional encodings", "[encoders][motion][pe]") {
  const auto walk = generate_motion("walk", toy_skeleton(), 24, 11);
  std::vector<std::size_t> order(24);
  for (std::size_t i = 0; i < 24; ++i) order[i] = i;
  Rng shuffler(77);
  shuffler.shuffle(order);
  std::vector<std::size_t> reversed(24);
  for (std::size_t i = 0; i < 24; ++i) reversed[i] = 23 - i;

  MotionEncoderConfig off;
  off.positional_encoding = false;
  Rng r1(8);
  const MotionEncoder enc_off(off, toy_skeleton(), r1);
  const auto shuffled = permute_frames(walk, order);
  CHECK(l2_distance(enc_off.encode(walk), enc_off.encode(shuffled)) <= 1e-9);

  Rng r2(8);
  const MotionEncoder enc_on(MotionEncoderConfig{}, toy_skeleton(), r2);
  CHECK(l2_distance(enc_on.encode(walk), enc_on.encode(permute_frames(walk, reversed))) > 1e-3);
}

TEST_CASE("encoder forward passes match finite differences", "[encoders][gradcheck]") {
  MotionEncoderConfig mc;
  mc.feature_width = 8;
  mc.heads = 2;
  mc.spatial_layers = 1;
  mc.temporal_layers = 1;
  mc.embed_dim = 8;
  Rng rng(12);
  MotionEncoder motion(mc, toy_skeleton(), rng);
  std::vector<MotionSequence> ms;
  for (const char* cls : {"walk", "clap", "kick_left", "spin"}) ms.push_back(generate_motion(cls, toy_skeleton(), 4, 3));
  std::vector<const MotionSequence*> batch;
  for (const auto& m : ms) batch.push_back(&m);
  const Tensor wm = random_tensor({4, 8}, rng, false);
  std::vector<Tensor> mparams;
  for (auto& [n, t] : motion.params()) mparams.push_back(t);
  for (auto& t : mparams) t.set_requires_grad(true);
  const auto rm = check_gradients([&] { return weighted_sum(motion.encode(batch), wm); }, mparams);
  CHECK(rm.max_rel < 1e-6);

  const Vocabulary vocab = build_vocab({"a person walks", "a person claps both hands", "someone spins"});
  TextEncoderConfig tc = small_text(vocab.size());
  tc.width = 8;
  tc.layers = 1;
  TextEncoder text(tc, rng);
  text.set_trainable(true);
  std::vector<Tensor> tparams;
  for (auto& [n, t] : text.params()) tparams.push_back(t);
  const std::vector<std::string> caps = {"a person walks", "a person claps both hands", "someone spins", "a person"};
  const auto rt = check_gradients([&] { return weighted_sum(text.encode(vocab, caps).normalized, wm); }, tparams);
  CHECK(rt.max_rel < 1e-6);
}
