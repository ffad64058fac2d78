#include <doctest.h>

#include <cmath>

#include "prophet/captioner.hpp"
#include "prophet/rng.hpp"
#include "oracles.hpp"

using namespace prophet;

using namespace oracle;

TEST_CASE("region feature mean") {
  const auto f = RegionFeatureSet::from_regions({{1.0, 2.0}, {3.0, -2.0}, {2.0, 3.0}});
  CHECK(f.count() == 3);
  CHECK(f.dim() == 2);
  CHECK(std::abs(f.mean[0] - 2.0) <= 1e-12);
  CHECK(std::abs(f.mean[1] - 1.0) <= 1e-12);
  CHECK_THROWS(RegionFeatureSet::from_regions({}));
  CHECK_THROWS(RegionFeatureSet::from_regions({{1.0}, {1.0, 2.0}}));
}

TEST_CASE("attend edge cases") {
  ModelParams p = init_params(tiny_dims(), 3);
  Rng rng(1);
  const auto one = random_features(rng, 4, 1);
  const Tensor query = Tensor::column({0.1, -0.2, 0.3});
  const Attention a1 = attend(query, one, p);
  CHECK(a1.alpha[0] == 1.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a1.context[i] == doctest::Approx(one.V(i, 0)).epsilon(1e-15));

  ModelParams flat = p;
  flat.W_h = Tensor::zeros(2, 3);
  flat.W_V = Tensor::zeros(2, 4);
  const auto three = random_features(rng, 4, 3);
  const Attention a3 = attend(query, three, flat);
  for (double v : a3.alpha.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  CHECK_THROWS_AS(attend(Tensor::column({1.0, 2.0}), three, p), ShapeError);
}

TEST_CASE("attend matches a scalar recomputation") {
  Rng rng(8);
  const ModelParams p = init_params(tiny_dims(), 17, 0.8);
  const auto f = random_features(rng, 4, 2);
  const Vec q = {0.4, -0.9, 0.2};
  const Attention a = attend(Tensor::column(q), f, p);
  const Vec oracle = attention_oracle(q, f, p);
  for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(a.alpha[k] - oracle[k]) <= 1e-12);
  for (std::size_t i = 0; i < 4; ++i) {
    const double c = oracle[0] * f.V(i, 0) + oracle[1] * f.V(i, 1);
    CHECK(std::abs(a.context[i] - c) <= 1e-12);
  }
}

TEST_CASE("attention is always on the simplex") {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const ModelParams p = init_params(tiny_dims(), 100 + trial, 3.0);
    const auto f = random_features(rng, 4, 1 + rng.below(6));
    Vec q(3);
    for (auto& v : q) v = rng.uniform(-5.0, 5.0);
    const Attention a = attend(Tensor::column(q), f, p);
    double total = 0.0;
    for (double v : a.alpha.data()) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("decode_step determinism and context override") {
  Rng rng(4);
  const ModelParams p = init_params(tiny_dims(), 5, 0.5);
  const auto f = random_features(rng, 4, 3);
  const DecoderState s0 = DecoderState::zeros(3);
  const StepOutput a = decode_step(3, s0, f, p);
  const StepOutput b = decode_step(3, s0, f, p);
  CHECK(a.logits.values() == b.logits.values());
  CHECK(a.state.h.values() == b.state.h.values());
  const StepOutput o = decode_step(3, s0, f, p, a.attention.context);
  CHECK(o.logits.values() == a.logits.values());
  CHECK_THROWS_AS(decode_step(6, s0, f, p), std::out_of_range);
}

TEST_CASE("teacher-forced rollout matches a hand-unrolled oracle") {
  Rng rng(12);
  const ModelParams p = init_params(tiny_dims(), 31, 0.6);
  const auto f = random_features(rng, 4, 2);
  const std::vector<TokenId> targets = {4, 3, kEos};
  const TeacherForcedRollout r = teacher_force(f, targets, p);
  REQUIRE(r.logits.size() == 3);

  ScalarState s{Vec(3, 0.0), Vec(3, 0.0)};
  TokenId prev = kBos;
  for (std::size_t t = 0; t < 3; ++t) {
    Vec input(3);
    for (std::size_t i = 0; i < 3; ++i) input[i] = p.W_e(prev, i);
    for (std::size_t i = 0; i < 4; ++i) input.push_back(f.mean[i]);
    s = lstm_oracle(p.dec, input, s);
    const Vec alpha = attention_oracle(s.h, f, p);
    Vec ctx(4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) ctx[i] = alpha[0] * f.V(i, 0) + alpha[1] * f.V(i, 1);
    const Vec z = logits_oracle(s.h, ctx, p);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(r.hidden[t][i] - s.h[i]) <= 1e-10);
    for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(r.alphas[t][k] - alpha[k]) <= 1e-10);
    for (std::size_t v = 0; v < 6; ++v) CHECK(std::abs(r.logits[t][v] - z[v]) <= 1e-10);
    prev = targets[t];
  }
}

TEST_CASE("sequence_nll") {
  const std::vector<Tensor> zeros(3, Tensor::zeros(4, 1));
  const std::vector<TokenId> targets = {0, 3, 1};
  CHECK(sequence_nll(zeros, targets).item() == doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-14));
  CHECK(std::abs(sequence_nll(zeros, targets).item() - 4.1589) < 1e-4);

  std::vector<Tensor> sharp;
  for (TokenId t : targets) {
    Tensor z = Tensor::zeros(4, 1);
    z(t, 0) = 1e4;
    sharp.push_back(z);
  }
  CHECK(sequence_nll(sharp, targets).item() < 1e-6);

  Rng rng(6);
  std::vector<Tensor> logits;
  double oracle = 0.0;
  for (TokenId t : targets) {
    Vec z(4);
    for (auto& v : z) v = rng.uniform(-3.0, 3.0);
    double lse = 0.0;
    for (double v : z) lse += std::exp(v);
    oracle += std::log(lse) - z[t];
    logits.push_back(Tensor::column(z));
  }
  CHECK(std::abs(sequence_nll(logits, targets).item() - oracle) <= 1e-10);
  CHECK(sequence_nll(logits, targets).item() >= 0.0);

  // PAD steps are skipped.
  const std::vector<TokenId> padded = {0, kPad, 1};
  CHECK(sequence_nll(zeros, padded).item() == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-14));

  CHECK_THROWS_AS(sequence_nll(std::vector<Tensor>{}, std::vector<TokenId>{}), std::invalid_argument);
}

TEST_CASE("greedy decoding") {
  Rng rng(10);
  const auto f = random_features(rng, 4, 2);
  ModelParams stop = init_params(tiny_dims(), 2);
  stop.b_p(kEos, 0) = 1e4;
  const GreedyResult empty = greedy_decode(f, stop, 10);
  CHECK(empty.tokens.empty());
  CHECK(empty.attention.empty());

  const ModelParams p = init_params(tiny_dims(), 44, 0.9);
  const GreedyResult g = greedy_decode(f, p, 6);
  const GreedyResult again = greedy_decode(f, p, 6);
  CHECK(g.tokens == again.tokens);
  CHECK(g.attention == again.attention);
  CHECK(g.tokens.size() <= 6);

  // Manual rollout through decode_step.
  DecoderState s = DecoderState::zeros(3);
  TokenId prev = kBos;
  std::vector<TokenId> manual;
  for (int t = 0; t < 6; ++t) {
    const StepOutput step = decode_step(prev, s, f, p);
    std::size_t best = 0;
    for (std::size_t i = 1; i < 6; ++i)
      if (step.logits[i] > step.logits[best]) best = i;
    if (best == kEos) break;
    manual.push_back(static_cast<TokenId>(best));
    CHECK(step.attention.alpha.values() == g.attention[manual.size() - 1]);
    s = step.state;
    prev = static_cast<TokenId>(best);
  }
  CHECK(manual == g.tokens);

  CHECK_THROWS_AS(greedy_decode(f, p, 0), std::invalid_argument);
}

TEST_CASE("greedy ties go to the lowest token id") {
  Rng rng(10);
  const auto f = random_features(rng, 4, 2);
  ModelParams p = init_params(tiny_dims(), 2);
  p.W_p = Tensor::zeros(6, 7);
  p.b_p = Tensor::column({0.0, 0.0, 0.0, 5.0, 5.0, 0.0});
  const GreedyResult g = greedy_decode(f, p, 3);
  CHECK(g.tokens == std::vector<TokenId>{3, 3, 3});
}

TEST_CASE("sequence_nll gradients through the decoder pass grad_check") {
  Rng rng(13);
  const ModelParams base = init_params(tiny_dims(), 77, 0.5);
  const auto f = random_features(rng, 4, 2);
  const std::vector<TokenId> targets = {4, 5, kEos};
  const auto names = ModelParams::names();
  for (std::size_t i = 0; i < ModelParams::kTensorCount; ++i) {
    const auto name = std::string(names[i]);
    if (name.rfind("fwd", 0) == 0 || name.rfind("bwd", 0) == 0 || name == "W_q") continue;
    const auto f_of = [&](const Tensor& x) {
      ModelParams p = base;
      *p.tensors()[i] = x;
      return sequence_nll(teacher_force(f, targets, p).logits, targets);
    };
    const auto r = grad_check(f_of, *base.tensors()[i], 1e-6, 1e-4);
    CHECK_MESSAGE(r.pass, name << " error " << r.max_relative_error);
  }
}

TEST_CASE("parameter shapes and validation") {
  const ModelDims d = tiny_dims();
  const ModelParams p = init_params(d, 1);
  CHECK(p.W_e.shape() == Shape{6, 3});
  CHECK(p.dec.Wi.shape() == Shape{3, 3 + 4 + 3});
  CHECK(p.w_alpha.shape() == Shape{1, 2});
  CHECK(p.W_h.shape() == Shape{2, 3});
  CHECK(p.W_V.shape() == Shape{2, 4});
  CHECK(p.W_p.shape() == Shape{6, 7});
  CHECK(p.fwd.Wi.shape() == Shape{3, 6});
  CHECK(p.W_q.shape() == Shape{3, 6});
  for (const Tensor* t : p.tensors())
    for (double v : t->data()) CHECK(std::abs(v) <= 0.08);
  CHECK(init_params(d, 1).W_p.values() == p.W_p.values());
  CHECK(init_params(d, 2).W_p.values() != p.W_p.values());

  ModelParams bad = p;
  bad.W_h = Tensor::zeros(3, 3);
  CHECK_THROWS(bad.validate());
  bad = p;
  bad.b_p(0, 0) = std::nan("");
  CHECK_THROWS(bad.validate());
}
