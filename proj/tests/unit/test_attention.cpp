#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "abc/attention.hpp"
#include "abc/errors.hpp"
#include "abc/rng.hpp"

using namespace abc;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

std::vector<std::size_t> random_perm(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  rng.shuffle(p);
  return p;
}

MhaParams identity_mha(std::size_t d) {
  MhaParams p;
  p.heads.push_back({Tensor::identity(d), Tensor::identity(d), Tensor::identity(d), CompatKind::multiplicative()});
  p.wo = Tensor::identity(d);
  return p;
}

}  // namespace

TEST(Compat, MultiplicativeScaledDot) {
  Tensor c = compat(Tensor{{1, 1, 0, 0}}, Tensor{{1, 0, 1, 0}}, CompatKind::multiplicative());
  EXPECT_DOUBLE_EQ(c(0, 0), 0.5);
}

TEST(Compat, AdditiveZeroWeights) {
  Rng rng(1);
  Tensor c = compat(random_tensor(3, 4, rng), random_tensor(5, 4, rng), CompatKind::additive(Tensor(1, 4)));
  EXPECT_EQ(c, Tensor(3, 5));
}

TEST(Compat, AdditiveTanhOddSymmetry) {
  Tensor c = compat(Tensor{{0.25, -0.25}}, Tensor{{0.25, -0.25}}, CompatKind::additive(Tensor{{2, 2}}));
  EXPECT_EQ(c(0, 0), 0.0);
}

TEST(Compat, WidthMismatch) {
  EXPECT_THROW(compat(Tensor(2, 3), Tensor(2, 4), CompatKind::multiplicative()), ShapeError);
}

TEST(Compat, AdditiveWeightWidthChecked) {
  EXPECT_THROW(compat(Tensor(2, 3), Tensor(2, 3), CompatKind::additive(Tensor(1, 2))), ConfigError);
}

TEST(Attention, SingletonReturnsValueRow) {
  Rng rng(2);
  Tensor v{{3.5, -1.0, 2.0}};
  for (auto kind : {CompatKind::multiplicative(), CompatKind::additive(random_tensor(1, 2, rng))}) {
    Tensor out = attention(random_tensor(4, 2, rng), random_tensor(1, 2, rng), v, kind);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out(i, c), v(0, c), 1e-15);
  }
}

TEST(Attention, IdenticalKeysAverageValues) {
  Tensor k{{0.3, 0.7}, {0.3, 0.7}};
  Tensor v{{1, 0}, {3, 2}};
  Rng rng(3);
  Tensor out = attention(random_tensor(3, 2, rng), k, v, CompatKind::multiplicative());
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(out(i, 0), 2.0, 1e-15);
    EXPECT_NEAR(out(i, 1), 1.0, 1e-15);
  }
}

TEST(Attention, EmptySetRejected) {
  EXPECT_THROW(attention(Tensor(2, 3), Tensor(0, 3), Tensor(0, 3), CompatKind::multiplicative()), Error);
}

TEST(Attention, KeyValueCountMismatch) {
  EXPECT_THROW(attention(Tensor(2, 3), Tensor(4, 3), Tensor(5, 3), CompatKind::multiplicative()), ShapeError);
}

TEST(Attention, OutputInsideValueHull) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.index(6), n = 1 + rng.index(8), d = 1 + rng.index(4), dv = 1 + rng.index(4);
    CompatKind kind =
        trial % 2 ? CompatKind::multiplicative() : CompatKind::additive(random_tensor(1, d, rng), Activation::Sigmoid);
    Tensor v = random_tensor(n, dv, rng);
    Tensor out = attention(random_tensor(m, d, rng), random_tensor(n, d, rng), v, kind);
    for (std::size_t c = 0; c < dv; ++c) {
      double lo = v(0, c), hi = v(0, c);
      for (std::size_t j = 0; j < n; ++j) lo = std::min(lo, v(j, c)), hi = std::max(hi, v(j, c));
      for (std::size_t i = 0; i < m; ++i) {
        EXPECT_GE(out(i, c), lo - 1e-12);
        EXPECT_LE(out(i, c), hi + 1e-12);
      }
    }
  }
}

TEST(Attention, ShiftInvariantRows) {
  // A constant added to every compat entry of a row leaves the weights unchanged.
  Tensor q{{1.0, 0.5}};
  Tensor k{{0.2, -1.0}, {0.4, 0.3}, {-0.7, 0.1}};
  Tensor w1 = attention_weights(q, k, CompatKind::additive(Tensor{{0.6, -0.4}}, Activation::Relu));
  Tensor q2{{1.0 + 10.0, 0.5 + 10.0}};
  Tensor k2{{0.2 - 10.0, -1.0 - 10.0}, {0.4 - 10.0, 0.3 - 10.0}, {-0.7 - 10.0, 0.1 - 10.0}};
  Tensor w2 = attention_weights(q2, k2, CompatKind::additive(Tensor{{0.6, -0.4}}, Activation::Relu));
  EXPECT_LE(max_abs_diff(w1, w2), 1e-12);
}

TEST(Mha, SingleIdentityHeadEqualsAttention) {
  Rng rng(5);
  Tensor q = random_tensor(3, 4, rng), k = random_tensor(5, 4, rng), v = random_tensor(5, 4, rng);
  EXPECT_LE(max_abs_diff(mha(q, k, v, identity_mha(4)), attention(q, k, v, CompatKind::multiplicative())), 1e-15);
}

TEST(Mha, OutputShape) {
  Rng rng(6);
  for (std::size_t h : {1u, 2u, 3u, 6u}) {
    MhaParams p = init_mha(6, h, CompatForm::Additive, Activation::Tanh, rng);
    Tensor out = mha(random_tensor(4, 6, rng), random_tensor(7, 6, rng), random_tensor(7, 6, rng), p);
    EXPECT_EQ(out.rows(), 4u);
    EXPECT_EQ(out.cols(), 6u);
  }
}

TEST(Mha, DivisibilityEnforced) {
  Rng rng(7);
  EXPECT_THROW(init_mha(6, 4, CompatForm::Multiplicative, Activation::Tanh, rng), ConfigError);
}

TEST(Mha, TwoHeadsMatchHandUnrolled) {
  Rng rng(8);
  for (CompatForm form : {CompatForm::Multiplicative, CompatForm::Additive}) {
    MhaParams p = init_mha(4, 2, form, Activation::Tanh, rng);
    Tensor q = random_tensor(3, 4, rng), k = random_tensor(5, 4, rng), v = random_tensor(5, 4, rng);
    Tensor cat(3, 4);
    for (std::size_t h = 0; h < 2; ++h) {
      const auto& head = p.heads[h];
      Tensor qh = matmul(q, head.wq), kh = matmul(k, head.wk), vh = matmul(v, head.wv);
      Tensor scores(3, 5);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < 2; ++c)
            s += form == CompatForm::Multiplicative ? qh(i, c) * kh(j, c) / std::sqrt(2.0)
                                                    : head.compat.w(0, c) * std::tanh(qh(i, c) + kh(j, c));
          scores(i, j) = s;
        }
      for (std::size_t i = 0; i < 3; ++i) {
        double mx = scores(i, 0), z = 0.0;
        for (std::size_t j = 1; j < 5; ++j) mx = std::max(mx, scores(i, j));
        for (std::size_t j = 0; j < 5; ++j) z += std::exp(scores(i, j) - mx);
        for (std::size_t c = 0; c < 2; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < 5; ++j) acc += std::exp(scores(i, j) - mx) / z * vh(j, c);
          cat(i, h * 2 + c) = acc;
        }
      }
    }
    EXPECT_LE(max_abs_diff(mha(q, k, v, p), matmul(cat, p.wo)), 1e-12);
  }
}

TEST(Mab, OutputShapeMatchesQueries) {
  Rng rng(9);
  MabParams p = init_mab(8, 4, CompatForm::Multiplicative, Activation::Tanh, rng);
  Tensor out = mab(random_tensor(3, 8, rng), random_tensor(6, 8, rng), random_tensor(6, 8, rng), p);
  EXPECT_EQ(out.rows(), 3u);
  EXPECT_EQ(out.cols(), 8u);
}

TEST(Mab, ResidualOnlyPath) {
  Rng rng(10);
  MabParams p = init_mab(4, 2, CompatForm::Additive, Activation::Tanh, rng);
  p.mha.wo.fill(0.0);
  p.ff2_w.fill(0.0);
  p.ff2_b.fill(0.0);
  Tensor q = random_tensor(5, 4, rng);
  Graph g(false);
  Var one = g.constant(Tensor(1, 4, 1.0)), zero = g.constant(Tensor(1, 4));
  Tensor expected = layer_norm(layer_norm(g.constant(q), one, zero, kLayerNormEps), one, zero, kLayerNormEps).value();
  EXPECT_LE(max_abs_diff(mab(q, random_tensor(3, 4, rng), random_tensor(3, 4, rng), p), expected), 1e-12);
}

TEST(Mab, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  for (CompatForm form : {CompatForm::Multiplicative, CompatForm::Additive}) {
    MabParams p = init_mab(4, 2, form, Activation::Tanh, rng);
    for (Tensor* t : {&p.ff1_b, &p.ff2_b, &p.ln1_bias, &p.ln2_bias})
      for (double& v : t->values()) v = 0.1 * rng.normal();
    const Tensor x = random_tensor(4, 4, rng);
    const Tensor w = random_tensor(4, 4, rng);
    std::vector<Tensor*> params;
    visit_parameters(p, "", [&](const std::string&, Tensor& t) { params.push_back(&t); });
    auto r = grad_check(
        [&](Graph& g) {
          Var xv = g.constant(x);
          return sum(hadamard(mab(xv, xv, xv, p), g.constant(w)));
        },
        params);
    EXPECT_LE(r.max_rel_error, 1e-4) << to_string(form);
  }
}

TEST(Sab, PermutationEquivariant) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    MabParams p = init_mab(8, 2, trial % 2 ? CompatForm::Additive : CompatForm::Multiplicative, Activation::Tanh, rng);
    const std::size_t n = 2 + rng.index(10);
    Tensor x = random_tensor(n, 8, rng);
    auto perm = random_perm(n, rng);
    EXPECT_LE(max_abs_diff(sab(permute_rows(x, perm), p), permute_rows(sab(x, p), perm)), 1e-9);
  }
}

TEST(Sab, SingletonSet) {
  Rng rng(13);
  MabParams p = init_mab(4, 2, CompatForm::Multiplicative, Activation::Tanh, rng);
  Tensor out = sab(random_tensor(1, 4, rng), p);
  EXPECT_EQ(out.rows(), 1u);
}

TEST(Sab, IdenticalRowsStayIdentical) {
  Rng rng(14);
  MabParams p = init_mab(4, 2, CompatForm::Additive, Activation::Tanh, rng);
  Tensor x = random_tensor(3, 4, rng);
  for (std::size_t c = 0; c < 4; ++c) x(2, c) = x(0, c);
  Tensor out = sab(x, p);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out(0, c), out(2, c));
}
