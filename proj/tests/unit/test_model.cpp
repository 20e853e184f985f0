#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "abc/checkpoint.hpp"
#include "abc/errors.hpp"
#include "abc/model.hpp"
#include "abc/rng.hpp"

using namespace abc;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

AbcConfig small_config(CompatForm form, std::size_t sabs = 2) {
  AbcConfig c;
  c.input_dim = 2;
  c.latent_dim = 8;
  c.heads = 2;
  c.sab_count = sabs;
  c.compat_embed = c.compat_sim = form;
  return c;
}

Tensor block_truth(const std::vector<int>& labels) {
  Tensor g(labels.size(), labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < labels.size(); ++j) g(i, j) = labels[i] == labels[j] ? 1.0 : 0.0;
  return g;
}

const CompatForm kForms[] = {CompatForm::Multiplicative, CompatForm::Additive};

}  // namespace

TEST(Config, HeadsMustDivideLatent) {
  AbcConfig c = small_config(CompatForm::Multiplicative);
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, NoAffineNeedsMatchingWidths) {
  AbcConfig c = small_config(CompatForm::Multiplicative);
  c.input_affine = false;
  EXPECT_THROW(c.validate(), ConfigError);
  c.input_dim = 8;
  EXPECT_NO_THROW(c.validate());
}

TEST(Embed, NoBlocksIsAffineOnly) {
  ModelParams p = init_model(small_config(CompatForm::Multiplicative, 0), 3);
  Rng rng(1);
  for (double& v : p.input_b.values()) v = rng.normal();
  Tensor x = random_tensor(7, 2, rng);
  Tensor want = matmul(x, p.input_w);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t c = 0; c < 8; ++c) want(i, c) += p.input_b(0, c);
  EXPECT_LE(max_abs_diff(embed(x, p), want), 1e-15);
}

TEST(Embed, ShapeForAnySetSize) {
  Rng rng(2);
  for (CompatForm f : kForms) {
    ModelParams p = init_model(small_config(f), 4);
    for (int t = 0; t < 10; ++t) {
      const std::size_t n = 1 + rng.index(64);
      Tensor z = embed(random_tensor(n, 2, rng), p);
      EXPECT_EQ(z.rows(), n);
      EXPECT_EQ(z.cols(), 8u);
    }
  }
}

TEST(Embed, WrongInputWidth) {
  ModelParams p = init_model(small_config(CompatForm::Multiplicative), 4);
  EXPECT_THROW(embed(Tensor(3, 5), p), ShapeError);
}

TEST(Embed, PermutationEquivariant) {
  Rng rng(3);
  for (CompatForm f : kForms) {
    ModelParams p = init_model(small_config(f), 5);
    for (int t = 0; t < 10; ++t) {
      const std::size_t n = 2 + rng.index(20);
      Tensor x = random_tensor(n, 2, rng);
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      EXPECT_LE(max_abs_diff(embed(permute_rows(x, perm), p), permute_rows(embed(x, p), perm)), 1e-9);
    }
  }
}

TEST(Similarity, OrthogonalIsHalf) {
  SimilarityMatrix s = similarity(Tensor{{1, 0}, {0, 1}}, CompatKind::multiplicative());
  EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(s(1, 0), 0.5);
}

TEST(Similarity, MultiplicativeIsSigmoidOfScaledDot) {
  Tensor z{{1, 2}, {0.5, -1}};
  SimilarityMatrix s = similarity(z, CompatKind::multiplicative());
  EXPECT_NEAR(s(0, 1), 1.0 / (1.0 + std::exp(1.5 / std::sqrt(2.0))), 1e-15);
  EXPECT_NEAR(s(0, 0), 1.0 / (1.0 + std::exp(-5.0 / std::sqrt(2.0))), 1e-15);
}

TEST(Similarity, AdditiveExactlySymmetric) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    Tensor z = random_tensor(6, 4, rng);
    SimilarityMatrix s = similarity(z, CompatKind::additive(random_tensor(1, 4, rng)));
    EXPECT_EQ(s.entries, s.entries.transposed());
    for (double v : s.entries.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Similarity, AdditiveHandValue) {
  Tensor z{{0.3, -0.2}, {0.1, 0.4}};
  Tensor w{{0.7, -1.1}};
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double c01 = 0.7 * std::tanh(0.4) - 1.1 * std::tanh(0.2);
  SimilarityMatrix s = similarity(z, CompatKind::additive(w));
  EXPECT_NEAR(s(0, 1), sig(c01), 1e-15);
}

TEST(Similarity, IdenticalRowsMatchDiagonal) {
  Rng rng(5);
  Tensor z = random_tensor(3, 4, rng);
  for (std::size_t c = 0; c < 4; ++c) z(1, c) = z(0, c);
  for (auto kind : {CompatKind::multiplicative(), CompatKind::additive(random_tensor(1, 4, rng))}) {
    SimilarityMatrix s = similarity(z, kind);
    EXPECT_EQ(s(0, 1), s(0, 0));
  }
}

TEST(Forward, PermutationEquivariant) {
  Rng rng(6);
  for (CompatForm f : kForms)
    for (int t = 0; t < 10; ++t) {
      ModelParams p = init_model(small_config(f), 100 + t);
      const std::size_t n = 2 + rng.index(20);
      Tensor x = random_tensor(n, 2, rng);
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      Tensor lhs = abc_forward(permute_rows(x, perm), p).entries;
      Tensor rhs = permute_symmetric(abc_forward(x, p).entries, perm);
      EXPECT_LE(max_abs_diff(lhs, rhs), 1e-9);
    }
}

TEST(Forward, SingleElement) {
  for (CompatForm f : kForms) {
    ModelParams p = init_model(small_config(f), 7);
    SimilarityMatrix s = abc_forward(Tensor{{0.4, -0.3}}, p);
    ASSERT_EQ(s.n(), 1u);
    EXPECT_GT(s(0, 0), 0.0);
    EXPECT_LT(s(0, 0), 1.0);
  }
}

TEST(Forward, UntrainedSmoke) {
  // Default scale: entries stay finite, inside (0, 1) and spread around mid-range.
  for (CompatForm f : kForms) {
    AbcConfig c;
    c.compat_embed = c.compat_sim = f;
    double total = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      ModelParams p = init_model(c, seed);
      Rng rng(seed + 1000);
      SimilarityMatrix s = abc_forward(random_tensor(20, 2, rng), p);
      for (double v : s.entries.values()) {
        ASSERT_TRUE(std::isfinite(v));
        ASSERT_GT(v, 0.0);
        ASSERT_LT(v, 1.0);
        total += v;
        ++count;
      }
    }
    const double mean = total / count;
    EXPECT_GT(mean, 0.2) << to_string(f);
    EXPECT_LT(mean, 0.8) << to_string(f);
  }
}

TEST(Bce, HalfEverywhereIsLn2) {
  Rng rng(8);
  for (int t = 0; t < 5; ++t) {
    std::vector<int> labels(6);
    for (int& l : labels) l = static_cast<int>(rng.index(3));
    SimilarityMatrix s{Tensor(6, 6, 0.5)};
    EXPECT_NEAR(bce_loss(s, block_truth(labels)), std::log(2.0), 1e-15);
  }
}

TEST(Bce, PerfectPredictionAtClampFloor) {
  Tensor g = block_truth({0, 0, 1, 2, 1});
  EXPECT_LE(bce_loss(SimilarityMatrix{g}, g), 2e-7);
}

TEST(Bce, HandEvaluatedMean) {
  SimilarityMatrix s{Tensor{{0.9, 0.1}, {0.1, 0.9}}};
  EXPECT_NEAR(bce_loss(s, Tensor::identity(2)), -std::log(0.9), 1e-12);
  EXPECT_NEAR(bce_loss(s, Tensor::identity(2)), 0.1054, 5e-5);
}

TEST(Bce, RejectsNonBinaryTruth) {
  SimilarityMatrix s{Tensor(2, 2, 0.5)};
  EXPECT_THROW(bce_loss(s, Tensor{{1, 0.5}, {0.5, 1}}), DataError);
  EXPECT_THROW(bce_loss(s, Tensor{{1, 1}, {0, 1}}), DataError);
  EXPECT_THROW(bce_loss(s, Tensor{{0, 0}, {0, 1}}), DataError);
  EXPECT_THROW(bce_loss(s, Tensor::identity(3)), ShapeError);
}

TEST(Pairwise, ThirdRowIndependence) {
  Rng rng(9);
  for (CompatForm f : kForms) {
    ModelParams p = init_model(small_config(f), 10);
    Tensor x = random_tensor(6, 2, rng);
    Tensor before = pairwise_forward(x, p).entries;
    Tensor edited = x;
    edited(4, 0) += 3.0;
    edited(4, 1) -= 2.0;
    Tensor after = pairwise_forward(edited, p).entries;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        if (i != 4 && j != 4) {
          EXPECT_LE(std::abs(before(i, j) - after(i, j)), 1e-12);
        }
    EXPECT_EQ(after, after.transposed());
  }
}

TEST(Pairwise, FullModelSeesContext) {
  Rng rng(11);
  for (CompatForm f : kForms) {
    ModelParams p = init_model(small_config(f), 12);
    Tensor x = random_tensor(6, 2, rng);
    Tensor edited = x;
    edited(4, 0) += 3.0;
    EXPECT_GT(std::abs(abc_forward(x, p)(0, 1) - abc_forward(edited, p)(0, 1)), 1e-6);
  }
}

TEST(Pairwise, IdenticalInputRows) {
  ModelParams p = init_model(small_config(CompatForm::Additive), 13);
  Tensor x{{0.1, 0.2}, {0.5, -0.3}, {0.1, 0.2}};
  Tensor s = pairwise_forward(x, p).entries;
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(s(0, c), s(2, c));
}

TEST(Gradient, FullModelMatchesFiniteDifferences) {
  for (CompatForm f : kForms)
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      AbcConfig c = small_config(f);
      c.latent_dim = 4;
      ModelParams p = init_model(c, seed);
      Rng rng(seed + 50);
      const Tensor x = random_tensor(5, 2, rng);
      const Tensor g = block_truth({0, 1, 0, 1, 1});
      auto r = grad_check([&](Graph& gr) { return bce_loss(abc_forward(gr.constant(x), p), g); }, parameter_list(p));
      EXPECT_LE(r.max_rel_error, 1e-4) << to_string(f) << " seed " << seed << " param " << r.worst_param << "["
                                       << r.worst_index << "] analytic " << r.analytic << " numeric " << r.numeric;
    }
}

// g·u against a central difference along u over all parameters at once. Unlike
// per-entry ratios this does not blow up on entries that happen to be near zero.
TEST(Gradient, FullModelDirectionalDerivatives) {
  constexpr double h = 1e-5;
  for (CompatForm f : kForms)
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      AbcConfig c = small_config(f);
      c.latent_dim = 4;
      ModelParams p = init_model(c, seed);
      Rng rng(seed + 50);
      const Tensor x = random_tensor(5, 2, rng);
      const Tensor g = block_truth({0, 1, 0, 1, 1});
      auto loss = [&](Graph& gr) { return bce_loss(abc_forward(gr.constant(x), p), g); };
      Graph gr;
      Var out = loss(gr);
      gr.backward(out);
      std::vector<Tensor> grads;
      for (Tensor* t : parameter_list(p)) grads.push_back(gr.grad_of(*t));
      for (int d = 0; d < 20; ++d) {
        std::vector<Tensor> dir;
        double analytic = 0.0;
        auto params = parameter_list(p);
        for (std::size_t i = 0; i < params.size(); ++i) {
          dir.push_back(*params[i]);
          for (std::size_t e = 0; e < dir[i].size(); ++e) {
            dir[i][e] = rng.normal();
            analytic += grads[i][e] * dir[i][e];
          }
        }
        auto shifted = [&](double s) {
          for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t e = 0; e < dir[i].size(); ++e) (*params[i])[e] += s * dir[i][e];
          Graph q(false);
          const double v = loss(q).value()(0, 0);
          for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t e = 0; e < dir[i].size(); ++e) (*params[i])[e] -= s * dir[i][e];
          return v;
        };
        const double numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        EXPECT_LE(std::abs(analytic - numeric) / std::max(1e-12, std::abs(analytic) + std::abs(numeric)), 1e-6)
            << to_string(f) << " seed " << seed << " direction " << d;
      }
    }
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const auto dir = std::filesystem::temp_directory_path() / "abc_model_test";
  std::filesystem::create_directories(dir);
  for (CompatForm f : kForms) {
    AbcConfig c = small_config(f);
    c.compat_sim = f == CompatForm::Additive ? CompatForm::Multiplicative : CompatForm::Additive;
    ModelParams p = init_model(c, 21);
    Rng rng(22);
    for (Tensor* t : parameter_list(p))
      for (double& v : t->values()) v += 1e-3 * rng.normal();
    save_model(dir / "m.json", p);
    ModelParams q = load_model(dir / "m.json");
    EXPECT_EQ(q.config, p.config);
    auto a = parameter_list(p);
    auto b = parameter_list(q);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  }
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ParameterCount) {
  ModelParams p = init_model(small_config(CompatForm::Additive), 1);
  std::size_t total = 0;
  for (Tensor* t : parameter_list(p)) total += t->size();
  EXPECT_EQ(p.parameter_count(), total);
}
