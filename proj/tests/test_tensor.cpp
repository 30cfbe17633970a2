#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gaitmae/nn_ops.hpp"
#include "gaitmae/rng.hpp"
#include "gaitmae/tensor.hpp"
#include "gradcheck.hpp"

using namespace gaitmae;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true,
                     double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal() * scale;
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

// Weighted sum with fixed random weights, so gradcheck sees a non-uniform
// upstream gradient.
Tensor weighted_sum(const Tensor& t, unsigned seed) {
  Rng rng(derive_seed(0xABCD, seed));
  std::vector<double> w(t.numel());
  for (auto& x : w) x = rng.normal();
  return sum_all(mul(t, Tensor::from_data(t.shape(), std::move(w))));
}

std::vector<double> naive_attention(const std::vector<double>& q,
                                    const std::vector<double>& k,
                                    const std::vector<double>& v, int B, int Nq, int Nk,
                                    int dh) {
  std::vector<double> out(q.size(), 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int b = 0; b < B; ++b)
    for (int r = 0; r < Nq; ++r) {
      std::vector<double> s(static_cast<std::size_t>(Nk));
      double mx = -1e300;
      for (int c = 0; c < Nk; ++c) {
        double dot = 0.0;
        for (int d = 0; d < dh; ++d)
          dot += q[(static_cast<std::size_t>(b) * Nq + r) * dh + d] *
                 k[(static_cast<std::size_t>(b) * Nk + c) * dh + d];
        s[static_cast<std::size_t>(c)] = dot * scale;
        mx = std::max(mx, s[static_cast<std::size_t>(c)]);
      }
      double den = 0.0;
      for (int c = 0; c < Nk; ++c) {
        s[static_cast<std::size_t>(c)] = std::exp(s[static_cast<std::size_t>(c)] - mx);
        den += s[static_cast<std::size_t>(c)];
      }
      for (int c = 0; c < Nk; ++c)
        for (int d = 0; d < dh; ++d)
          out[(static_cast<std::size_t>(b) * Nq + r) * dh + d] +=
              s[static_cast<std::size_t>(c)] / den *
              v[(static_cast<std::size_t>(b) * Nk + c) * dh + d];
    }
  return out;
}

}  // namespace

TEST_CASE("broadcast add/sub/mul match manual expansion") {
  Rng rng(11);
  Tensor a = random_tensor({2, 3, 4}, rng, false);
  Tensor b = random_tensor({3, 1}, rng, false);
  Tensor c = add(a, b);
  REQUIRE(c.shape() == Shape{2, 3, 4});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 4; ++k)
        REQUIRE(c.values()[static_cast<std::size_t>((i * 3 + j) * 4 + k)] ==
                a.values()[static_cast<std::size_t>((i * 3 + j) * 4 + k)] +
                    b.values()[static_cast<std::size_t>(j)]);

  Tensor s = Tensor::scalar(2.5);
  Tensor m = mul(a, s);
  for (std::size_t i = 0; i < a.numel(); ++i)
    REQUIRE(m.values()[i] == a.values()[i] * 2.5);

  REQUIRE_THROWS_AS(add(random_tensor({2, 3}, rng, false), random_tensor({4}, rng, false)),
                    std::invalid_argument);
}

TEST_CASE("matmul matches naive triple loop") {
  Rng rng(12);
  const int M = 5, K = 7, N = 3;
  Tensor a = random_tensor({M, K}, rng, false);
  Tensor b = random_tensor({K, N}, rng, false);
  Tensor c = matmul(a, b);
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < N; ++n) {
      double s = 0.0;
      for (int k = 0; k < K; ++k)
        s += a.values()[static_cast<std::size_t>(m * K + k)] *
             b.values()[static_cast<std::size_t>(k * N + n)];
      REQUIRE(c.values()[static_cast<std::size_t>(m * N + n)] == Catch::Approx(s).epsilon(1e-14));
    }

  // Batched x shared-right equals per-slice products.
  Tensor ab = random_tensor({4, M, K}, rng, false);
  Tensor cb = matmul(ab, b);
  REQUIRE(cb.shape() == Shape{4, M, N});
  for (int bi = 0; bi < 4; ++bi) {
    Tensor slice_a = slice(ab, 0, bi, 1);
    Tensor ci = matmul(reshape(slice_a, {M, K}), b);
    for (std::size_t i = 0; i < ci.numel(); ++i)
      REQUIRE(cb.values()[static_cast<std::size_t>(bi) * ci.numel() + i] == ci.values()[i]);
  }
}

TEST_CASE("reshape, permute, slice, concat, gather round trips") {
  Rng rng(13);
  Tensor a = random_tensor({2, 3, 4}, rng, false);

  Tensor r = reshape(a, {6, 4});
  REQUIRE(r.values() == a.values());

  Tensor p = permute(a, {2, 0, 1});
  REQUIRE(p.shape() == Shape{4, 2, 3});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 4; ++k)
        REQUIRE(p.values()[static_cast<std::size_t>((k * 2 + i) * 3 + j)] ==
                a.values()[static_cast<std::size_t>((i * 3 + j) * 4 + k)]);
  Tensor back = permute(p, {1, 2, 0});
  REQUIRE(back.values() == a.values());

  Tensor t = transpose(a, 1, 2);
  REQUIRE(t.shape() == Shape{2, 4, 3});

  Tensor s0 = slice(a, 1, 0, 1);
  Tensor s1 = slice(a, 1, 1, 2);
  Tensor cat = concat({s0, s1}, 1);
  REQUIRE(cat.values() == a.values());

  Tensor g = gather(a, 1, {2, 0, 2});
  REQUIRE(g.shape() == Shape{2, 3, 4});
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 4; ++k) {
      REQUIRE(g.values()[static_cast<std::size_t>((i * 3 + 0) * 4 + k)] ==
              a.values()[static_cast<std::size_t>((i * 3 + 2) * 4 + k)]);
      REQUIRE(g.values()[static_cast<std::size_t>((i * 3 + 1) * 4 + k)] ==
              a.values()[static_cast<std::size_t>((i * 3 + 0) * 4 + k)]);
    }
}

TEST_CASE("reductions match manual sums") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  REQUIRE(sum_all(a).item() == 21.0);
  REQUIRE(mean_all(a).item() == 3.5);

  Tensor s0 = sum_axis(a, 0);
  REQUIRE(s0.shape() == Shape{3});
  REQUIRE(s0.values() == std::vector<double>{5, 7, 9});
  Tensor s1 = sum_axis(a, 1, true);
  REQUIRE(s1.shape() == Shape{2, 1});
  REQUIRE(s1.values() == std::vector<double>{6, 15});
  REQUIRE(mean_axis(a, 1).values() == std::vector<double>{2, 5});

  Tensor m = max_axis(a, 1);
  REQUIRE(m.values() == std::vector<double>{3, 6});
}

TEST_CASE("max ties send gradient to the first attaining element") {
  Tensor a = Tensor::from_data({3}, {1.0, 3.0, 3.0}, true);
  Tensor m = max_axis(a, 0);
  backward(m);
  REQUIRE(a.grad() == std::vector<double>{0.0, 1.0, 0.0});
}

TEST_CASE("softmax rows are normalized and shift invariant") {
  Rng rng(14);
  Tensor a = random_tensor({3, 5}, rng, false, 2.0);
  Tensor y = softmax_lastdim(a);
  for (int r = 0; r < 3; ++r) {
    double s = 0.0;
    for (int k = 0; k < 5; ++k) s += y.values()[static_cast<std::size_t>(r * 5 + k)];
    REQUIRE(s == Catch::Approx(1.0).epsilon(1e-12));
  }
  Tensor shifted = softmax_lastdim(add_scalar(a, 7.5));
  for (std::size_t i = 0; i < y.numel(); ++i)
    REQUIRE(shifted.values()[i] == Catch::Approx(y.values()[i]).epsilon(1e-12));
}

TEST_CASE("layernorm normalizes rows and applies affine") {
  Rng rng(15);
  Tensor a = random_tensor({4, 8}, rng, false, 3.0);
  Tensor gamma = Tensor::full({8}, 1.0);
  Tensor beta = Tensor::zeros({8});
  Tensor y = layernorm(a, gamma, beta);
  for (int r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (int k = 0; k < 8; ++k) mean += y.values()[static_cast<std::size_t>(r * 8 + k)];
    mean /= 8;
    for (int k = 0; k < 8; ++k) {
      const double d = y.values()[static_cast<std::size_t>(r * 8 + k)] - mean;
      var += d * d;
    }
    var /= 8;
    REQUIRE(mean == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(var == Catch::Approx(1.0).epsilon(1e-6));
  }

  Tensor gamma2 = Tensor::full({8}, 2.0);
  Tensor beta2 = Tensor::full({8}, 0.5);
  Tensor y2 = layernorm(a, gamma2, beta2);
  for (std::size_t i = 0; i < y.numel(); ++i)
    REQUIRE(y2.values()[i] == Catch::Approx(2.0 * y.values()[i] + 0.5).epsilon(1e-12));
}

TEST_CASE("rope preserves pair norms and depends only on position plus offset") {
  Rng rng(16);
  const int P = 6, D = 8;
  Tensor x = random_tensor({2, P, D}, rng, false);
  Tensor y = rope_rotate(x);
  for (std::size_t b = 0; b < 2; ++b)
    for (int p = 0; p < P; ++p)
      for (int i = 0; i < D / 2; ++i) {
        const std::size_t at = (b * P + static_cast<std::size_t>(p)) * D +
                               static_cast<std::size_t>(2 * i);
        const double n0 = std::hypot(x.values()[at], x.values()[at + 1]);
        const double n1 = std::hypot(y.values()[at], y.values()[at + 1]);
        REQUIRE(n1 == Catch::Approx(n0).epsilon(1e-12));
      }

  // Row p with offset d matches row p+d with no offset when the content is
  // the same.
  const int shift = 3;
  Tensor xl = random_tensor({1, P + shift, D}, rng, false);
  Tensor xs = slice(xl, 1, shift, P);
  Tensor y_long = rope_rotate(xl);
  Tensor y_shift = rope_rotate(xs, static_cast<double>(shift));
  for (int p = 0; p < P; ++p)
    for (int d = 0; d < D; ++d)
      REQUIRE(y_shift.values()[static_cast<std::size_t>(p * D + d)] ==
              Catch::Approx(
                  y_long.values()[static_cast<std::size_t>((p + shift) * D + d)])
                  .epsilon(1e-12)
                  .margin(1e-12));

  // dim 2: the rotation angle is exactly p + offset.
  Tensor unit = Tensor::from_data({1, 4, 2}, {1, 0, 1, 0, 1, 0, 1, 0});
  Tensor rot = rope_rotate(unit, 0.25);
  for (int p = 0; p < 4; ++p) {
    REQUIRE(rot.values()[static_cast<std::size_t>(2 * p)] ==
            Catch::Approx(std::cos(p + 0.25)).epsilon(1e-12));
    REQUIRE(rot.values()[static_cast<std::size_t>(2 * p + 1)] ==
            Catch::Approx(std::sin(p + 0.25)).epsilon(1e-12));
  }
}

TEST_CASE("streaming attention matches the dense softmax oracle at every chunking") {
  Rng rng(17);
  const int B = 2, Nq = 7, Nk = 70, dh = 4;  // crosses the 64-wide key block
  Tensor q = random_tensor({B, Nq, dh}, rng, false);
  Tensor k = random_tensor({B, Nk, dh}, rng, false);
  Tensor v = random_tensor({B, Nk, dh}, rng, false);

  const auto oracle = naive_attention(q.values(), k.values(), v.values(), B, Nq, Nk, dh);
  Tensor full = attention(q, k, v);
  Tensor one = attention(q, k, v, 1);
  Tensor odd = attention(q, k, v, 3);
  for (std::size_t i = 0; i < oracle.size(); ++i)
    REQUIRE(full.values()[i] == Catch::Approx(oracle[i]).epsilon(1e-10).margin(1e-12));

  // Chunking only groups query rows, so results are bitwise identical.
  REQUIRE(one.values() == full.values());
  REQUIRE(odd.values() == full.values());
}

TEST_CASE("row_optimal_scale minimizes the residual and handles zero rows") {
  Tensor pred = Tensor::from_data({2, 3}, {1, 2, 2, 0, 0, 0});
  Tensor target = Tensor::from_data({2, 3}, {2, 4, 4, 1, 1, 1});
  Tensor s = row_optimal_scale(pred, target);
  REQUIRE(s.shape() == Shape{2});
  REQUIRE(s.values()[0] == Catch::Approx(2.0));
  REQUIRE(s.values()[1] == 1.0);  // zero-norm row pins the scale to 1

  // The fitted scale beats any nearby scale.
  auto residual = [&](double sc) {
    double r = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double d = sc * pred.values()[static_cast<std::size_t>(i)] -
                       target.values()[static_cast<std::size_t>(i)];
      r += d * d;
    }
    return r;
  };
  REQUIRE(residual(2.0) <= residual(1.9));
  REQUIRE(residual(2.0) <= residual(2.1));
}

TEST_CASE("backward accumulates into existing gradients") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor l1 = sum_all(mul(x, x));
  backward(l1);
  REQUIRE(x.grad() == std::vector<double>{2.0, 4.0});
  Tensor l2 = sum_all(mul(x, x));
  backward(l2);
  REQUIRE(x.grad() == std::vector<double>{4.0, 8.0});
  x.zero_grad();
  REQUIRE(x.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("NoGradGuard suppresses graph recording") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  {
    NoGradGuard ng;
    Tensor y = mul(x, x);
    REQUIRE_FALSE(y.requires_grad());
    REQUIRE(y.node()->parents.empty());
  }
  Tensor y = mul(x, x);
  REQUIRE(y.requires_grad());
}

TEST_CASE("backward of a diamond graph counts both paths") {
  Tensor x = Tensor::from_data({1}, {3.0}, true);
  Tensor a = mul(x, x);          // x^2
  Tensor b = add(a, x);          // x^2 + x
  Tensor loss = sum_all(mul(a, b));  // x^4 + x^3
  backward(loss);
  // d/dx (x^4 + x^3) = 4x^3 + 3x^2 = 135 at x=3
  REQUIRE(x.grad()[0] == Catch::Approx(135.0).epsilon(1e-12));
}

TEST_CASE("gradcheck: broadcast arithmetic") {
  Rng rng(21);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({3, 1}, rng);
  auto res = test_util::gradcheck({a, b}, [&] {
    return weighted_sum(add(mul(a, b), sub(a, b)), 1);
  });
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: matmul shared and batched") {
  Rng rng(22);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor w = random_tensor({4, 5}, rng);
  auto res = test_util::gradcheck({a, w}, [&] { return weighted_sum(matmul(a, w), 2); });
  REQUIRE(res.max_rel_err < 1e-6);

  Tensor b = random_tensor({2, 4, 5}, rng);
  auto res2 = test_util::gradcheck({a, b}, [&] { return weighted_sum(matmul(a, b), 3); });
  REQUIRE(res2.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: shape ops composite") {
  Rng rng(23);
  Tensor a = random_tensor({2, 3, 4}, rng);
  auto res = test_util::gradcheck({a}, [&] {
    Tensor p = permute(a, {1, 0, 2});
    Tensor r = reshape(p, {3, 8});
    Tensor s = slice(r, 1, 2, 5);
    Tensor c = concat({s, slice(r, 1, 0, 2)}, 1);
    Tensor g = gather(c, 0, {2, 2, 0});
    return weighted_sum(g, 4);
  });
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: reductions") {
  Rng rng(24);
  Tensor a = random_tensor({3, 4, 2}, rng);
  auto res = test_util::gradcheck({a}, [&] {
    Tensor s = sum_axis(a, 1);
    Tensor m = mean_axis(a, 0, true);
    return add(sum_all(mul(s, s)), weighted_sum(m, 5));
  });
  REQUIRE(res.max_rel_err < 1e-6);

  // distinct values keep the argmax stable under perturbation
  Tensor b = Tensor::from_data({2, 3}, {0.1, 2.0, -1.0, 5.0, 0.3, 0.7}, true);
  auto resm = test_util::gradcheck({b}, [&] { return weighted_sum(max_axis(b, 1), 6); });
  REQUIRE(resm.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: elementwise nonlinearities") {
  Rng rng(25);
  Tensor a = random_tensor({3, 4}, rng);
  auto res = test_util::gradcheck({a}, [&] {
    Tensor t = tanh_t(a);
    Tensor g = gelu(a);
    Tensor e = exp_t(mul_scalar(a, 0.3));
    return add(weighted_sum(t, 7), add(weighted_sum(g, 8), weighted_sum(e, 9)));
  });
  REQUIRE(res.max_rel_err < 1e-6);

  // strictly positive inputs for sqrt/pow, away from the relu kink
  std::vector<double> pos(12);
  Rng rng2(26);
  for (auto& x : pos) x = 0.5 + rng2.uniform();
  Tensor p = Tensor::from_data({3, 4}, std::move(pos), true);
  auto res2 = test_util::gradcheck({p}, [&] {
    return add(weighted_sum(sqrt_t(p), 10),
               add(weighted_sum(pow_scalar(p, 2.5), 11), weighted_sum(relu(p), 12)));
  });
  REQUIRE(res2.max_rel_err < 1e-6);
}

TEST_CASE("sqrt gradient is pinned to zero at zero") {
  Tensor x = Tensor::from_data({2}, {0.0, 4.0}, true);
  Tensor y = sum_all(sqrt_t(x));
  backward(y);
  REQUIRE(x.grad()[0] == 0.0);
  REQUIRE(x.grad()[1] == Catch::Approx(0.25));
}

TEST_CASE("gradcheck: softmax and layernorm") {
  Rng rng(27);
  Tensor a = random_tensor({4, 6}, rng);
  auto res = test_util::gradcheck({a}, [&] { return weighted_sum(softmax_lastdim(a), 13); });
  REQUIRE(res.max_rel_err < 1e-6);

  Tensor x = random_tensor({3, 5}, rng);
  Tensor gamma = random_tensor({5}, rng);
  Tensor beta = random_tensor({5}, rng);
  auto res2 = test_util::gradcheck({x, gamma, beta}, [&] {
    return weighted_sum(layernorm(x, gamma, beta), 14);
  });
  REQUIRE(res2.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: rope") {
  Rng rng(28);
  Tensor x = random_tensor({2, 5, 6}, rng);
  auto res = test_util::gradcheck({x}, [&] {
    return weighted_sum(rope_rotate(x, 0.7), 15);
  });
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: attention across a key-block boundary") {
  Rng rng(29);
  const int B = 1, Nq = 5, Nk = 70, dh = 3;
  Tensor q = random_tensor({B, Nq, dh}, rng, true, 0.7);
  Tensor k = random_tensor({B, Nk, dh}, rng, true, 0.7);
  Tensor v = random_tensor({B, Nk, dh}, rng, true, 0.7);
  auto res = test_util::gradcheck(
      {q, k, v}, [&] { return weighted_sum(attention(q, k, v, 2), 16); }, 1e-4, 3);
  REQUIRE(res.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck: row_optimal_scale in a scale-invariant residual") {
  Rng rng(30);
  Tensor pred = random_tensor({4, 6}, rng);
  Tensor target = random_tensor({4, 6}, rng);
  auto res = test_util::gradcheck({pred, target}, [&] {
    Tensor s = reshape(row_optimal_scale(pred, target), {4, 1});
    Tensor scaled = mul(pred, s);
    Tensor d = sub(scaled, target);
    return mean_all(mul(d, d));
  });
  REQUIRE(res.max_rel_err < 1e-5);
}

TEST_CASE("identical graphs give bitwise identical losses and gradients") {
  auto run = [] {
    Rng rng(31);
    Tensor x = random_tensor({3, 6}, rng);
    Tensor w = random_tensor({6, 6}, rng);
    Tensor h = gelu(matmul(x, w));
    Tensor y = softmax_lastdim(h);
    Tensor loss = mean_all(mul(y, y));
    backward(loss);
    std::vector<double> out = {loss.item()};
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  REQUIRE(run() == run());
}
