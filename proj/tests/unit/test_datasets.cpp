#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "abc/datasets.hpp"
#include "abc/errors.hpp"

using namespace abc;
using namespace abc::data;

namespace {

Pool pool_with_caps(const std::vector<std::size_t>& caps) {
  Pool p;
  std::size_t total = 0;
  for (std::size_t c : caps) total += c;
  p.x = Tensor(total, 1);
  std::size_t r = 0;
  for (std::size_t c = 0; c < caps.size(); ++c)
    for (std::size_t i = 0; i < caps[c]; ++i, ++r) {
      p.x(r, 0) = static_cast<double>(r);
      p.labels.push_back(static_cast<int>(c));
    }
  return p;
}

}  // namespace

TEST(Kernel, Examples) {
  const int a[] = {0, 1, 0};
  EXPECT_EQ(ground_truth_kernel(a), (Tensor{{1, 0, 1}, {0, 1, 0}, {1, 0, 1}}));
  const int same[] = {4, 4, 4};
  EXPECT_EQ(ground_truth_kernel(same), Tensor(3, 3, 1.0));
  const int distinct[] = {0, 1, 2, 3};
  EXPECT_EQ(ground_truth_kernel(distinct), Tensor::identity(4));
}

TEST(Instance, FromLabels) {
  Instance inst = Instance::from_labels(Tensor{{0}, {1}, {2}}, {7, 3, 7});
  EXPECT_EQ(inst.k_true, 2u);
  EXPECT_EQ(inst.kernel(0, 2), 1.0);
  EXPECT_THROW(Instance::from_labels(Tensor{{0}, {1}}, {1}), DataError);
  inst.k_true = 3;
  EXPECT_THROW(inst.validate(), DataError);
}

TEST(Circles, NoiselessPointsOnTheirCircle) {
  CirclesConfig c;
  c.seed = 3;
  Circles circ = gen_circles_geometry(c);
  const Instance& inst = circ.instance;
  ASSERT_EQ(inst.size(), 50u);
  EXPECT_EQ(inst.k_true, 4u);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& ctr = circ.centers[inst.labels[i]];
    const double r = std::hypot(inst.x(i, 0) - ctr[0], inst.x(i, 1) - ctr[1]);
    EXPECT_NEAR(r, circ.radii[inst.labels[i]], 1e-12);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_GE(circ.radii[k], 0.5);
    EXPECT_LE(circ.radii[k], 1.0);
    EXPECT_GE(circ.centers[k][0], -1.0);
    EXPECT_LE(circ.centers[k][1], 1.0);
  }
}

TEST(Circles, BalancedNonEmptyCounts) {
  CirclesConfig c;
  c.n_points = 10;
  c.seed = 5;
  Instance inst = gen_circles(c);
  std::map<int, int> counts;
  for (int l : inst.labels) ++counts[l];
  ASSERT_EQ(counts.size(), 4u);
  for (auto [l, n] : counts) {
    EXPECT_GE(n, 2);
    EXPECT_LE(n, 3);
  }
}

TEST(Circles, SingleCircle) {
  CirclesConfig c;
  c.n_circles = 1;
  Instance inst = gen_circles(c);
  for (int l : inst.labels) EXPECT_EQ(l, 0);
  EXPECT_EQ(inst.kernel, Tensor(50, 50, 1.0));
}

TEST(Circles, Deterministic) {
  CirclesConfig c;
  c.seed = 9;
  c.noise_sigma = 0.05;
  Instance a = gen_circles(c), b = gen_circles(c);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.labels, b.labels);
  c.seed = 10;
  EXPECT_NE(gen_circles(c).x, a.x);
}

TEST(Circles, InvalidConfig) {
  CirclesConfig c;
  c.n_points = 3;
  EXPECT_THROW(gen_circles(c), ConfigError);
  c = {};
  c.radius_lo = 0.0;
  EXPECT_THROW(gen_circles(c), ConfigError);
}

TEST(Composition, RespectsCapsAndTotal) {
  const std::size_t caps[] = {3, 1, 5};
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto n = sample_composition(7, caps, s);
    ASSERT_EQ(n.size(), 3u);
    EXPECT_EQ(n[0] + n[1] + n[2], 7u);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_GE(n[i], 1u);
      EXPECT_LE(n[i], caps[i]);
    }
  }
  EXPECT_TRUE(sample_composition(10, caps, 1).empty());
}

TEST(Composition, UniformOverFeasible) {
  // Caps {3,3} and total 4 have compositions (1,3), (2,2), (3,1).
  const std::size_t caps[] = {3, 3};
  std::map<std::size_t, int> counts;
  const int draws = 6000;
  for (int s = 0; s < draws; ++s) ++counts[sample_composition(4, caps, s)[0]];
  ASSERT_EQ(counts.size(), 3u);
  double chi2 = 0.0;
  for (auto [k, c] : counts) chi2 += std::pow(c - draws / 3.0, 2) / (draws / 3.0);
  EXPECT_GT(boost::math::cdf(boost::math::complement(boost::math::chi_squared(2), chi2)), 0.01);
}

TEST(GenInstance, LengthOne) {
  Pool p = gen_blob_pool(5, 4, 2, 0.1, 1);
  Instance inst = gen_instance(p, 1, 2);
  EXPECT_EQ(inst.k_true, 1u);
  EXPECT_EQ(inst.kernel, Tensor(1, 1, 1.0));
}

TEST(GenInstance, AllFeasibleCompositionsAppear) {
  Pool p = pool_with_caps({3, 3});
  std::set<std::pair<int, int>> seen;
  for (std::uint64_t s = 0; s < 400; ++s) {
    Instance inst = gen_instance(p, 4, s);
    EXPECT_EQ(inst.size(), 4u);
    // Drawn without replacement: the pool rows are all distinct.
    std::set<double> rows;
    for (std::size_t i = 0; i < 4; ++i) rows.insert(inst.x(i, 0));
    EXPECT_EQ(rows.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p.labels[static_cast<std::size_t>(inst.x(i, 0))], inst.labels[i]);
    if (inst.k_true == 2) {
      int a = 0;
      for (int l : inst.labels) a += l == 0;
      seen.insert({a, 4 - a});
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(inst.kernel(i, j), inst.labels[i] == inst.labels[j] ? 1.0 : 0.0);
    } else {
      // k = 1 cannot fit four examples in a class of three.
      ADD_FAILURE() << "infeasible k accepted";
    }
  }
  EXPECT_EQ(seen, (std::set<std::pair<int, int>>{{1, 3}, {2, 2}, {3, 1}}));
}

TEST(GenInstance, ClusterCountUniform) {
  Pool p = gen_blob_pool(20, 10, 2, 0.1, 3);
  const int draws = 10000;
  std::vector<int> counts(11, 0);
  for (int s = 0; s < draws; ++s) ++counts[gen_instance(p, 10, s).k_true];
  EXPECT_EQ(counts[0], 0);
  double chi2 = 0.0;
  for (int k = 1; k <= 10; ++k) chi2 += std::pow(counts[k] - draws / 10.0, 2) / (draws / 10.0);
  EXPECT_GT(boost::math::cdf(boost::math::complement(boost::math::chi_squared(9), chi2)), 0.01);
}

TEST(GenInstance, TooLong) {
  Pool p = gen_blob_pool(2, 3, 2, 0.1, 1);
  EXPECT_THROW(gen_instance(p, 7, 1), ConfigError);
}

TEST(BlobPool, ZeroSpreadAndSizes) {
  Pool p = gen_blob_pool(3, 5, 4, 0.0, 7);
  EXPECT_EQ(p.x.rows(), 15u);
  EXPECT_EQ(p.x.cols(), 4u);
  auto members = p.members();
  ASSERT_EQ(members.size(), 3u);
  for (const auto& m : members) {
    EXPECT_EQ(m.size(), 5u);
    for (std::size_t i : m)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(p.x(i, c), p.x(m[0], c));
  }
}

TEST(BlobPool, SeparatedClassesByDistance) {
  Pool p = gen_blob_pool(2, 20, 2, 0.01, 11);
  double within = 0.0, between = 1e300;
  for (std::size_t i = 0; i < p.x.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double d = std::hypot(p.x(i, 0) - p.x(j, 0), p.x(i, 1) - p.x(j, 1));
      if (p.labels[i] == p.labels[j]) within = std::max(within, d);
      else between = std::min(between, d);
    }
  EXPECT_LT(within, between);
}

TEST(Csv, RoundTripExact) {
  CirclesConfig c;
  c.noise_sigma = 0.1;
  std::vector<Instance> list;
  for (std::uint64_t s = 0; s < 3; ++s) {
    c.seed = s;
    list.push_back(gen_circles(c));
  }
  std::string text = instances_to_csv(list);
  EXPECT_EQ(text.substr(0, text.find('\n')), "instance_id,point_id,x0,x1,label");
  auto back = instances_from_csv(text);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].x, list[i].x);
    EXPECT_EQ(back[i].labels, list[i].labels);
  }
}

TEST(Csv, Files) {
  const auto dir = std::filesystem::temp_directory_path() / "abc_datasets_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  Pool p = gen_blob_pool(3, 4, 3, 0.2, 1);
  write_pool(dir / "pool.csv", p);
  Pool q = read_pool(dir / "pool.csv");
  EXPECT_EQ(q.x, p.x);
  EXPECT_EQ(q.labels, p.labels);
  std::vector<Instance> a{gen_instance(p, 5, 1)}, b{gen_instance(p, 6, 2)};
  std::filesystem::create_directories(dir / "inst");
  write_instances(dir / "inst" / "b.csv", b);
  write_instances(dir / "inst" / "a.csv", a);
  auto all = read_instance_dir(dir / "inst");
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].size(), 5u);
  EXPECT_EQ(all[1].size(), 6u);
  std::filesystem::remove_all(dir);
}

TEST(Csv, Malformed) {
  EXPECT_THROW(instances_from_csv(""), DataError);
  EXPECT_THROW(instances_from_csv("a,b,c\n"), DataError);
  EXPECT_THROW(instances_from_csv("instance_id,point_id,x0,label\n0,0,1.0\n"), DataError);
  EXPECT_THROW(instances_from_csv("instance_id,point_id,x0,label\n0,1,1.0,0\n"), DataError);
}
