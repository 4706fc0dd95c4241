#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "syllabion/clusterer.hpp"
#include "syllabion/error.hpp"

using namespace syllabion;
using namespace syllabion::testing;

namespace {

double sq(const Matrix& x, std::size_t i, const Matrix& y, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < x.cols(); ++c) s += (x(i, c) - y(j, c)) * (x(i, c) - y(j, c));
  return s;
}

// Average linkage from scratch: cluster distance is the mean over member
// pairs; ties go to the pair with the lowest smallest members.
std::vector<std::size_t> naive_agglomerate(const Matrix& c, std::size_t clusters) {
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < c.rows(); ++i) groups.push_back({i});
  while (groups.size() > clusters) {
    std::size_t ba = 0, bb = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < groups.size(); ++a)
      for (std::size_t b = a + 1; b < groups.size(); ++b) {
        double total = 0.0;
        for (auto i : groups[a])
          for (auto j : groups[b]) total += std::sqrt(sq(c, i, c, j));
        const double avg = total / static_cast<double>(groups[a].size() * groups[b].size());
        if (avg < best) {
          best = avg;
          ba = a;
          bb = b;
        }
      }
    groups[ba].insert(groups[ba].end(), groups[bb].begin(), groups[bb].end());
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  std::vector<std::size_t> out(c.rows());
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (auto i : groups[g]) out[i] = g;
  return out;
}

Matrix blobs(const std::vector<std::vector<double>>& means, std::size_t per, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, sigma);
  Matrix x(means.size() * per, means[0].size());
  for (std::size_t b = 0; b < means.size(); ++b)
    for (std::size_t i = 0; i < per; ++i)
      for (std::size_t c = 0; c < means[b].size(); ++c) x(b * per + i, c) = means[b][c] + g(rng);
  return x;
}

}  // namespace

TEST(KMeans, KEqualsN) {
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(7, 3, rng);
  const auto r = kmeans(x, {7, 3});
  EXPECT_EQ(r.inertia, 0.0);
  std::vector<std::size_t> sorted = r.assignments;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::unique(sorted.begin(), sorted.end()), sorted.end());
  EXPECT_THROW(kmeans(x, {8, 3}), Error);
}

TEST(KMeans, TwoBlobs) {
  std::mt19937_64 rng(2);
  const Matrix x = blobs({{0, 0}, {5, 5}}, 200, 0.5, rng);
  const auto r = kmeans(x, {2, 11});
  std::vector<std::vector<double>> centers{{r.centers(0, 0), r.centers(0, 1)}, {r.centers(1, 0), r.centers(1, 1)}};
  std::sort(centers.begin(), centers.end());
  EXPECT_NEAR(centers[0][0], 0.0, 0.1);
  EXPECT_NEAR(centers[0][1], 0.0, 0.1);
  EXPECT_NEAR(centers[1][0], 5.0, 0.1);
  EXPECT_NEAR(centers[1][1], 5.0, 0.1);
}

TEST(KMeans, MatchesBruteForceOnSixPoints) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(6, 2, rng);
    KMeansConfig cfg{2, static_cast<std::uint64_t>(trial)};
    cfg.n_init = 50;
    const auto r = kmeans(x, cfg);
    EXPECT_NEAR(r.inertia, brute_force_inertia(x, 2), 1e-9);
  }
}

TEST(KMeans, InertiaNeverIncreasesAndIsDeterministic) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = random_matrix(120, 4, rng);
    KMeansConfig cfg{9, 17};
    cfg.rel_tol = 0.0;
    const auto r = kmeans(x, cfg);
    ASSERT_GE(r.inertia_history.size(), 2u);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] * (1.0 + 1e-12));
    EXPECT_NEAR(r.inertia, inertia(x, r.centers, r.assignments), 1e-9);
    const auto again = kmeans(x, cfg);
    EXPECT_EQ(again.centers, r.centers);
    EXPECT_EQ(again.assignments, r.assignments);
  }
}

TEST(KMeans, DuplicatePointsDoNotLeaveEmptyClusters) {
  Matrix x(10, 2);
  for (std::size_t i = 5; i < 10; ++i) x(i, 0) = 1.0;
  const auto r = kmeans(x, {4, 0});
  EXPECT_EQ(r.inertia, 0.0);
  EXPECT_TRUE(all_finite(r.centers));
}

TEST(Agglomerate, TrivialCounts) {
  std::mt19937_64 rng(5);
  const Matrix c = random_matrix(6, 3, rng);
  EXPECT_EQ(agglomerate(c, 6), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(agglomerate(c, 1), std::vector<std::size_t>(6, 0));
  EXPECT_THROW(agglomerate(c, 7), Error);
  EXPECT_THROW(agglomerate(c, 0), Error);
}

TEST(Agglomerate, FarPairs) {
  const Matrix c{{0, 0}, {10, 0}, {0.1, 0}, {10.2, 0}};
  EXPECT_EQ(agglomerate(c, 2), (std::vector<std::size_t>{0, 1, 0, 1}));
}

TEST(Agglomerate, TieMergesLowestPair) {
  const Matrix c{{0.0}, {1.0}, {2.0}, {3.0}};
  // Three adjacent pairs at distance 1; {0,1} merges first, then {2,3}
  // (distance 1 beats the averaged 1.5 and 2.5 involving the new cluster).
  EXPECT_EQ(agglomerate(c, 3), (std::vector<std::size_t>{0, 0, 1, 2}));
  EXPECT_EQ(agglomerate(c, 2), (std::vector<std::size_t>{0, 0, 1, 1}));
}

TEST(Agglomerate, MatchesNaiveAverageLinkage) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 5 + static_cast<std::size_t>(trial) % 20;
    const Matrix c = random_matrix(n, 3, rng);
    for (std::size_t k : {1u, 2u, 3u, 5u})
      if (k <= n) EXPECT_EQ(agglomerate(c, k), naive_agglomerate(c, k)) << n << "/" << k;
  }
}

TEST(Assign, NearestCenterAndTies) {
  Codebook cb;
  cb.centers = Matrix{{0, 0}, {10, 10}, {1, 0}, {5, 5}, {-1, 0}, {1, 0}};
  cb.center_to_unit = {0, 1, 2, 3, 4, 5};
  cb.num_units = 6;
  const Segmentation seg{{0, 3, 5, 9}};
  const auto tokens = assign_units(seg, Matrix{{5, 5}, {0.5, 0}, {1, 0}}, cb);
  ASSERT_EQ(tokens.size(), 3u);
  EXPECT_EQ(tokens[0], (UnitToken{0, 3, 3}));
  EXPECT_EQ(tokens[1].unit, 0u);  // equidistant to centers 0 and 2
  EXPECT_EQ(tokens[2].unit, 2u);  // identical centers 2 and 5
  EXPECT_EQ(tokens[2].end, 9u);
  EXPECT_EQ(assign_units(seg, Matrix{{5, 5}, {0.5, 0}, {1, 0}}, cb), tokens);
  EXPECT_THROW(assign_units(seg, Matrix{{5, 5, 1}, {0.5, 0, 1}, {1, 0, 1}}, cb), Error);
  EXPECT_THROW(assign_units(seg, Matrix{{5, 5}}, cb), Error);
}

TEST(Assign, MatchesNaiveScan) {
  std::mt19937_64 rng(7);
  const Matrix centers = random_matrix(12, 5, rng);
  const Matrix x = random_matrix(50, 5, rng);
  const auto nearest = nearest_centers(x, centers);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < centers.rows(); ++j)
      if (sq(x, i, centers, j) < sq(x, i, centers, best)) best = j;
    EXPECT_EQ(nearest[i], best);
  }
}

TEST(Codebook, PlantedUnitsArePure) {
  std::mt19937_64 rng(8);
  const std::size_t k2 = 8;
  const Matrix protos = syllabion::testing::unit_prototypes(k2, 16, rng, 0.3);
  std::normal_distribution<double> g(0.0, 0.05);
  Matrix x(k2 * 40, 16);
  std::vector<std::size_t> truth(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    truth[i] = i % k2;
    for (std::size_t c = 0; c < 16; ++c) x(i, c) = protos(truth[i], c) + g(rng);
  }
  ClustererConfig cfg;
  cfg.k_means = 4 * k2;
  cfg.k_units = k2;
  cfg.seed = 3;
  const auto cb = fit_codebook(x, cfg);
  cb.validate();
  const auto units = nearest_centers(x, cb.centers);
  std::map<std::size_t, std::map<std::size_t, std::size_t>> counts;
  for (std::size_t i = 0; i < x.rows(); ++i) ++counts[cb.center_to_unit[units[i]]][truth[i]];
  std::size_t majority = 0;
  for (const auto& [unit, by_proto] : counts) {
    std::size_t m = 0;
    for (const auto& [p, n] : by_proto) m = std::max(m, n);
    majority += m;
  }
  EXPECT_GE(static_cast<double>(majority) / static_cast<double>(x.rows()), 0.95);
  const auto again = fit_codebook(x, cfg);
  EXPECT_EQ(again.centers, cb.centers);
  EXPECT_EQ(again.center_to_unit, cb.center_to_unit);
}

TEST(Codebook, CountsAreCappedAndValidated) {
  std::mt19937_64 rng(9);
  const Matrix x = random_matrix(5, 2, rng);
  ClustererConfig cfg;
  cfg.k_means = 100;
  cfg.k_units = 50;
  const auto cb = fit_codebook(x, cfg);
  EXPECT_EQ(cb.centers.rows(), 5u);
  EXPECT_EQ(cb.num_units, 5u);
  cfg.k_units = 200;
  EXPECT_THROW(fit_codebook(x, cfg), Error);
  Codebook bad{Matrix{{0.0}}, {1}, 1};
  EXPECT_THROW(bad.validate(), Error);
}
