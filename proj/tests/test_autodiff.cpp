#include <doctest.h>

#include <cmath>
#include <random>

#include "prophet/autodiff.hpp"
#include "prophet/rng.hpp"

using namespace prophet;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor({r, c}, std::move(v));
}

Tensor random_simplex_row(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double total = 0.0;
  for (auto& x : v) total += (x = rng.uniform(0.1, 1.0));
  for (auto& x : v) x /= total;
  return Tensor::row(v);
}

}  // namespace

TEST_CASE("matmul agrees with a triple loop") {
  Rng rng(11);
  const Tensor a = random_tensor(rng, 3, 4);
  const Tensor b = random_tensor(rng, 4, 2);
  const Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{3, 2});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      CHECK(std::abs(c(i, j) - s) <= 1e-12);
    }
  }
}

TEST_CASE("row softmax basics") {
  const Tensor half = row_softmax(Tensor::row({0.0, 0.0}));
  CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-15));

  const Tensor x = Tensor::row({0.3, -1.2, 2.5});
  const Tensor shifted = Tensor::row({100.3, 98.8, 102.5});
  const Tensor a = row_softmax(x), b = row_softmax(shifted);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);

  // log-sum-exp oracle
  const double lse = std::log(std::exp(0.3) + std::exp(-1.2) + std::exp(2.5));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(a[i] - std::exp(x[i] - lse)) <= 1e-14);
}

TEST_CASE("softmax rows are simplex vectors") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor s = row_softmax(random_tensor(rng, 3, 7, -30.0, 30.0));
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(s(r, c) >= 0.0);
        total += s(r, c);
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("distances") {
  CHECK(l1_distance(Tensor::row({1, 0}), Tensor::row({0, 1})).item() == 2.0);
  CHECK(l2_squared_distance(Tensor::row({1, 0}), Tensor::row({0, 1})).item() == 2.0);
  CHECK(kl_divergence(Tensor::row({0.5, 0.5}), Tensor::row({0.5, 0.5})).item() == 0.0);
  // 0 log 0 = 0
  const double kl = kl_divergence(Tensor::row({0.0, 1.0}), Tensor::row({0.5, 0.5})).item();
  CHECK(kl == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(kl_divergence(Tensor::row({0.5, 0.5}), Tensor::row({1.0, 0.0})), std::domain_error);
}

TEST_CASE("shape errors name the primitive and both shapes") {
  try {
    matmul(Tensor::zeros(2, 3), Tensor::zeros(2, 3));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(add(Tensor::zeros(2, 1), Tensor::zeros(1, 2)), ShapeError);
  CHECK_THROWS_AS(add_broadcast_column(Tensor::zeros(2, 3), Tensor::zeros(3, 1)), ShapeError);
  CHECK_THROWS_AS(concat({Tensor::zeros(2, 1), Tensor::zeros(2, 2)}), ShapeError);
  CHECK_THROWS_AS(l1_distance(Tensor::row({1, 0}), Tensor::row({1, 0, 0})), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("backward on simple roots") {
  Tape tape;
  const Tensor w = tape.leaf(Tensor::row({1.0, 2.0}));
  const Tensor root = sum(mul(w, w));
  const Tensor g = tape.backward(root).of(w);
  CHECK(g[0] == 2.0);
  CHECK(g[1] == 4.0);

  Tape t2;
  const Tensor a = t2.leaf(Tensor::row({0.3, -0.7, 0.1}));
  const Tensor ga = t2.backward(l1_distance(a, a)).of(a);
  for (double v : ga.data()) CHECK(v == 0.0);

  Tape t3;
  const Tensor m = t3.leaf(Tensor::zeros(2, 2));
  CHECK_THROWS_AS(t3.backward(tanh(m)), ShapeError);
}

TEST_CASE("unreachable nodes get zero gradient") {
  Tape tape;
  const Tensor a = tape.leaf(Tensor::row({1.0, 2.0}));
  const Tensor b = tape.leaf(Tensor::row({3.0, 4.0}));
  const Tensor unused = tanh(b);
  const Gradients g = tape.backward(sum(a));
  const Tensor gb = g.of(b), gu = g.of(unused);
  for (double v : gb.data()) CHECK(v == 0.0);
  for (double v : gu.data()) CHECK(v == 0.0);
}

TEST_CASE("grad_check analytic cases") {
  const auto square = [](const Tensor& x) { return mul(x, x); };
  const auto r = grad_check(square, Tensor::scalar(3.0), 1e-5, 1e-8);
  CHECK(r.pass);
  CHECK(r.max_relative_error < 1e-8);

  const auto constant = [](const Tensor&) { return Tensor::scalar(4.0); };
  CHECK(grad_check(constant, Tensor::row({1.0, 2.0}), 1e-5, 1e-12).pass);

  const auto blowup = [](const Tensor& x) { return scale(x, std::nan("")); };
  CHECK_THROWS_AS(grad_check(blowup, Tensor::scalar(1.0), 1e-5, 1e-4), std::domain_error);
}

TEST_CASE("two-layer tanh network matches finite differences") {
  Rng rng(21);
  const Tensor W1 = random_tensor(rng, 5, 4);
  const Tensor b1 = random_tensor(rng, 5, 1);
  const Tensor w2 = random_tensor(rng, 1, 5);
  const Tensor x = random_tensor(rng, 4, 1);
  const auto net = [&](const Tensor& w) { return matmul(w2, tanh(add(matmul(w, x), b1))); };
  const auto r = grad_check(net, W1, 1e-5, 1e-6);
  CHECK(r.pass);
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("every primitive matches finite differences on random shapes") {
  Rng rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t m = 1 + rng.below(4), k = 1 + rng.below(4), n = 1 + rng.below(4);
    const Tensor A = random_tensor(rng, m, k), B = random_tensor(rng, k, n);
    const Tensor C = random_tensor(rng, m, k), v = random_tensor(rng, m, 1);
    const Tensor P = random_simplex_row(rng, n + 1), Q = random_simplex_row(rng, n + 1);
    const Tensor proj = random_tensor(rng, 1, m);
    // Reduce matrix outputs to a scalar through a fixed random projection.
    auto reduce = [&](const Tensor& t) {
      Rng local(static_cast<std::uint64_t>(t.rows() * 31 + t.cols()));
      return sum(mul(t, random_tensor(local, t.rows(), t.cols())));
    };
    const std::vector<std::function<Tensor(const Tensor&)>> cases = {
        [&](const Tensor& x) { return reduce(matmul(x, B)); },
        [&](const Tensor& x) { return reduce(matmul(C, transpose(x))); },
        [&](const Tensor& x) { return reduce(add(x, C)); },
        [&](const Tensor& x) { return reduce(add_broadcast_column(x, v)); },
        [&](const Tensor& x) { return reduce(add_broadcast_column(C, gather_row(transpose(x), 0))); },
        [&](const Tensor& x) { return reduce(mul(x, x)); },
        [&](const Tensor& x) { return reduce(tanh(x)); },
        [&](const Tensor& x) { return reduce(sigmoid(x)); },
        [&](const Tensor& x) { return reduce(concat({x, C})); },
        [&](const Tensor& x) { return reduce(row_softmax(x)); },
        [&](const Tensor& x) { return reduce(mean_rows(x)); },
        [&](const Tensor& x) { return l1_distance(row_softmax(x), row_softmax(C)); },
        [&](const Tensor& x) { return l2_squared_distance(x, C); },
        [&](const Tensor& x) { return kl_divergence(row_softmax(gather_row(x, 0)), row_softmax(gather_row(C, 0))); },
        [&](const Tensor& x) { return kl_divergence(row_softmax(gather_row(C, 0)), row_softmax(gather_row(x, 0))); },
        [&](const Tensor& x) { return pick_log_prob(x, (m * k) / 2); },
        [&](const Tensor& x) { return scale(sum(x), -2.5); },
        [&](const Tensor& x) { return reduce(transpose(x)); },
        [&](const Tensor& x) { return reduce(gather_row(x, m - 1)); },
        [&](const Tensor& x) { return reduce(matmul(proj, matmul(x, B))); },
    };
    for (const auto& f : cases) {
      const auto r = grad_check(f, A, 1e-6, 1e-4);
      CHECK_MESSAGE(r.pass, "trial " << trial << " worst " << r.max_relative_error);
      ++checked;
    }
    // KL gradient with respect to the first argument, on a simplex point.
    const auto kl_p = [&](const Tensor& x) { return kl_divergence(row_softmax(x), Q); };
    CHECK(grad_check(kl_p, P, 1e-6, 1e-4).pass);
    ++checked;
  }
  CHECK(checked >= 100);
}

TEST_CASE("tape replay is deterministic") {
  Rng a(9), b(9);
  const Tensor x1 = random_tensor(a, 4, 4), x2 = random_tensor(b, 4, 4);
  Tape t1, t2;
  const Tensor y1 = sum(row_softmax(tanh(matmul(t1.leaf(x1), x1))));
  const Tensor y2 = sum(row_softmax(tanh(matmul(t2.leaf(x2), x2))));
  CHECK(y1.item() == y2.item());
  CHECK(t1.backward(y1).raw(0)[3] == t2.backward(y2).raw(0)[3]);
}
