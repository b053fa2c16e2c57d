#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"
#include "utterclust/representatives.hpp"

using namespace utterclust;
using namespace testsupport;

namespace {

using Subset = std::vector<std::size_t>;

void subsets(std::size_t m, std::size_t k, std::size_t start, Subset& cur, std::vector<Subset>& out) {
  if (cur.size() == k) {
    out.push_back(cur);
    return;
  }
  for (std::size_t i = start; i < m; ++i) {
    cur.push_back(i);
    subsets(m, k, i + 1, cur, out);
    cur.pop_back();
  }
}

std::map<Subset, double> exact_kdpp(const DppKernel& kernel, std::size_t k) {
  std::vector<Subset> all;
  Subset cur;
  subsets(kernel.size(), k, 0, cur, all);
  std::map<Subset, double> p;
  double z = 0.0;
  for (const auto& s : all) z += p[s] = std::max(0.0, kernel.minor_determinant(s));
  for (auto& [s, v] : p) v /= z;
  return p;
}

std::map<Subset, double> empirical(const DppKernel& kernel, std::size_t k, std::size_t draws, std::uint64_t seed0) {
  std::map<Subset, double> f;
  for (std::size_t t = 0; t < draws; ++t) {
    auto s = dpp_sample(kernel, k, seed0 + t);
    std::sort(s.rows.begin(), s.rows.end());
    f[s.rows] += 1.0 / static_cast<double>(draws);
  }
  return f;
}

double total_variation(const std::map<Subset, double>& p, const std::map<Subset, double>& q) {
  double tv = 0.0;
  for (const auto& [s, v] : p) tv += std::abs(v - (q.count(s) ? q.at(s) : 0.0));
  for (const auto& [s, v] : q)
    if (!p.count(s)) tv += v;
  return 0.5 * tv;
}

EmbeddedCorpus corpus_with_cosines() {
  // u0.u1 = 0.5, u2 orthogonal to both.
  RowMatrix x(3, 3);
  x << 1, 0, 0, 0.5, std::sqrt(0.75), 0, 0, 0, 1;
  return corpus_of(x, {4, 1, 1});
}

Cluster whole(const EmbeddedCorpus& c) {
  Cluster cl;
  for (std::size_t i = 0; i < c.size(); ++i) cl.member_ids.push_back(static_cast<record_id>(i));
  cl.size = c.size();
  return cl;
}

}  // namespace

TEST(Kernel, HandExample) {
  auto corpus = corpus_with_cosines();
  auto k = build_kernel(whole(corpus), corpus);
  Eigen::MatrixXd expect(3, 3);
  expect << 4, 1, 0, 1, 1, 0, 0, 0, 1;
  EXPECT_LE((k.matrix() - expect).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(k.minor_determinant({0, 1, 2}), 3.0, 1e-12);
}

TEST(Kernel, SingleMemberAndDuplicates) {
  RowMatrix x(1, 2);
  x << 0.3, 0.4;
  auto one = corpus_of(x, {5});
  auto k = build_kernel(whole(one), one);
  EXPECT_NEAR(k.matrix()(0, 0), 5.0, 1e-12);

  RowMatrix dup(2, 2);
  dup << 1, 1, 2, 2;
  auto two = corpus_of(dup);
  auto kd = build_kernel(whole(two), two);
  EXPECT_LE((kd.matrix() - Eigen::MatrixXd::Ones(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(kd.minor_determinant({0, 1}), 0.0, 1e-12);
}

TEST(KernelProperty, SymmetricPsdDiagonalIsFrequency) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 2 + rng() % 30, d = 2 + rng() % 20;
    auto x = random_unit_rows(m, d, rng);
    std::vector<std::uint64_t> f;
    for (std::size_t i = 0; i < m; ++i) f.push_back(1 + rng() % 9);
    auto corpus = corpus_of(x, f);
    auto k = build_kernel(whole(corpus), corpus);
    Eigen::MatrixXd km = k.matrix();
    EXPECT_LE((km - km.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    for (std::size_t i = 0; i < m; ++i) EXPECT_NEAR(km(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)), static_cast<double>(f[i]), 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(km);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
    // the dual path reproduces the primal spectrum
    auto spec = spectrum(k);
    Eigen::MatrixXd rebuilt = spec.vectors * spec.values.asDiagonal() * spec.vectors.transpose();
    EXPECT_LE((rebuilt - km).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Dpp, HandKernelProbabilities) {
  Eigen::MatrixXd km(3, 3);
  km << 4, 1, 0, 1, 1, 0, 0, 0, 1;
  auto kernel = DppKernel::from_matrix(km);
  auto p = exact_kdpp(kernel, 2);
  EXPECT_NEAR((p[{0, 1}]), 3.0 / 8, 1e-12);
  EXPECT_NEAR((p[{0, 2}]), 4.0 / 8, 1e-12);
  EXPECT_NEAR((p[{1, 2}]), 1.0 / 8, 1e-12);
  auto f = empirical(kernel, 2, 50000, 1);
  for (const auto& [s, v] : p) EXPECT_NEAR(f[s], v, 0.02);
}

TEST(Dpp, DiagonalKernelUniformPairs) {
  auto kernel = DppKernel::from_matrix(Eigen::MatrixXd::Identity(3, 3));
  auto f = empirical(kernel, 2, 30000, 100);
  ASSERT_EQ(f.size(), 3u);
  for (const auto& [s, v] : f) EXPECT_NEAR(v, 1.0 / 3, 0.02);
}

TEST(Dpp, DuplicatesNeverCoSampled) {
  // rows 0 and 1 share a direction; the pair has probability zero.
  RowMatrix e(4, 3);
  e << 1, 0, 0, 1, 0, 0, 0, 1, 0, 0.6, 0.8, 0;
  auto kernel = DppKernel::from_factor(e, {0, 1, 2, 3}, {1, 1, 1, 1});
  for (std::uint64_t s = 0; s < 5000; ++s) {
    auto sample = dpp_sample(kernel, 2, s);
    ASSERT_FALSE(sample.padded);
    auto rows = sample.rows;
    std::sort(rows.begin(), rows.end());
    EXPECT_NE(rows, (Subset{0, 1}));
    EXPECT_GT(kernel.minor_determinant(sample.rows), 1e-10);
  }
}

TEST(Dpp, EnumerableKernelsMatchDeterminants) {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 6; ++t) {
    const std::size_t m = 3 + static_cast<std::size_t>(t % 4);
    const std::size_t d = t % 2 ? 2 : 8;  // odd trials use the dual path
    RowMatrix e = random_unit_rows(m, d, rng);
    std::vector<std::uint64_t> f;
    for (std::size_t i = 0; i < m; ++i) {
      f.push_back(1 + rng() % 5);
      e.row(static_cast<Eigen::Index>(i)) *= std::sqrt(static_cast<double>(f.back()));
    }
    std::vector<record_id> ids(m);
    std::iota(ids.begin(), ids.end(), 0u);
    auto kernel = DppKernel::from_factor(e, ids, f);
    const std::size_t rank = std::min(m, d);
    for (std::size_t k = 1; k <= std::min<std::size_t>(rank, m - 1); ++k) {
      auto p = exact_kdpp(kernel, k);
      auto q = empirical(kernel, k, 20000, 1000 * static_cast<std::uint64_t>(t));
      EXPECT_LT(total_variation(p, q), 0.02) << "trial " << t << " k " << k;
    }
  }
}

TEST(Dpp, PaddingWhenRankDeficient) {
  RowMatrix e(4, 2);
  e << 1, 0, 2, 0, 3, 0, 1, 0;  // rank 1
  auto kernel = DppKernel::from_factor(e, {10, 11, 12, 13}, {1, 4, 9, 1});
  auto s = dpp_sample(kernel, 3, 5);
  EXPECT_TRUE(s.padded);
  ASSERT_EQ(s.rows.size(), 3u);
  std::set<std::size_t> distinct(s.rows.begin(), s.rows.end());
  EXPECT_EQ(distinct.size(), 3u);

  auto all = dpp_sample(kernel, 4, 0);
  EXPECT_FALSE(all.padded);
  EXPECT_EQ(all.rows.size(), 4u);
  auto more = dpp_sample(kernel, 9, 0);
  EXPECT_TRUE(more.padded);
  EXPECT_EQ(more.member_ids, (std::vector<record_id>{10, 11, 12, 13}));
  EXPECT_THROW(dpp_sample(kernel, 0, 0), usage_error);
}

TEST(Dpp, FrequencyBoost) {
  RowMatrix x(3, 2);
  x << 1, 0, 1, 0, 0, 1;
  auto corpus = corpus_of(x, {5, 2, 1});
  auto kernel = build_kernel(whole(corpus), corpus);
  std::size_t a = 0, b = 0;
  for (std::uint64_t s = 0; s < 20000; ++s) {
    auto rows = dpp_sample(kernel, 2, s).rows;
    a += std::count(rows.begin(), rows.end(), 0u);
    b += std::count(rows.begin(), rows.end(), 1u);
  }
  EXPECT_GT(a, b);
  // exact marginals: P{0,2} = 5/7, P{1,2} = 2/7
  EXPECT_NEAR(static_cast<double>(a) / 20000, 5.0 / 7, 0.02);
}

TEST(Dpp, DeterministicGivenSeed) {
  std::mt19937_64 rng(9);
  auto corpus = corpus_of(random_unit_rows(25, 10, rng));
  auto kernel = build_kernel(whole(corpus), corpus);
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(dpp_sample(kernel, 3, s).rows, dpp_sample(kernel, 3, s).rows);
}

TEST(Representatives, TopFrequencyCovidToy) {
  RowMatrix x = random_unit_rows(6, 4, *std::make_unique<std::mt19937_64>(1));
  auto corpus = corpus_of(x, {4, 3, 1, 1, 1, 1});
  auto reps = select_representatives(whole(corpus), corpus, {3, rep_method::top_frequency, 0});
  ASSERT_EQ(reps.records.size(), 3u);
  EXPECT_EQ(reps.records[0].id, 0u);
  EXPECT_EQ(reps.records[1].id, 1u);
  EXPECT_EQ(reps.records[2].id, 2u);
}

TEST(Representatives, ForcedWhenClusterHasK) {
  std::mt19937_64 rng(2);
  auto corpus = corpus_of(random_unit_rows(3, 4, rng), {1, 5, 2});
  for (auto m : {rep_method::dpp, rep_method::random, rep_method::top_frequency}) {
    auto reps = select_representatives(whole(corpus), corpus, {3, m, 7});
    ASSERT_EQ(reps.records.size(), 3u);
    EXPECT_EQ(reps.records[0].id, 1u);
    EXPECT_EQ(reps.records[1].id, 2u);
    EXPECT_EQ(reps.records[2].id, 0u);
    EXPECT_EQ(reps.method, m);
  }
  Cluster empty;
  EXPECT_THROW(select_representatives(empty, corpus, {}), data_error);
}

TEST(Representatives, SeededAndOrdered) {
  std::mt19937_64 rng(3);
  std::vector<std::uint64_t> f;
  for (int i = 0; i < 40; ++i) f.push_back(1 + rng() % 6);
  auto corpus = corpus_of(random_unit_rows(40, 12, rng), f);
  auto cluster = whole(corpus);
  for (auto m : {rep_method::dpp, rep_method::random}) {
    auto a = select_representatives(cluster, corpus, {4, m, 11});
    auto b = select_representatives(cluster, corpus, {4, m, 11});
    ASSERT_EQ(a.records.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.records[i].id, b.records[i].id);
    for (std::size_t i = 1; i < 4; ++i) {
      const auto& p = a.records[i - 1];
      const auto& q = a.records[i];
      EXPECT_TRUE(p.frequency > q.frequency || (p.frequency == q.frequency && p.id < q.id));
    }
  }
}

TEST(Representatives, RandomIsUniform) {
  std::mt19937_64 rng(4);
  auto corpus = corpus_of(random_unit_rows(5, 3, rng));
  auto cluster = whole(corpus);
  std::vector<double> hits(5, 0.0);
  for (std::uint64_t s = 0; s < 10000; ++s)
    for (const auto& r : select_representatives(cluster, corpus, {2, rep_method::random, s}).records) hits[r.id] += 1;
  for (double h : hits) EXPECT_NEAR(h / 10000, 0.4, 0.03);
}
