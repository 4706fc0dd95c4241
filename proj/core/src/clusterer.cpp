#include "syllabion/clusterer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "syllabion/error.hpp"

namespace syllabion {

namespace {

Matrix kmeans_pp(const Matrix& x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.rows();
  Matrix centers(k, x.cols());
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i), centers.row(0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);  // every point already coincides with a center
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(x.row(i), centers.row(c)));
  }
  return centers;
}

KMeansResult lloyd(const Matrix& x, Matrix centers, const KMeansConfig& cfg) {
  const std::size_t n = x.rows(), k = centers.rows(), d = x.cols();
  KMeansResult r;
  r.assignments = nearest_centers(x, centers);
  r.inertia = inertia(x, centers, r.assignments);
  r.inertia_history.push_back(r.inertia);
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[r.assignments[i]];
      auto row = sums.row(r.assignments[i]);
      for (std::size_t c = 0; c < d; ++c) row[c] += x(i, c);
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) continue;
      for (std::size_t c = 0; c < d; ++c) centers(j, c) = sums(j, c) / static_cast<double>(counts[j]);
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] != 0) continue;
      // Farthest point from its own center. Singletons sit at distance 0.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dist = squared_distance(x.row(i), centers.row(r.assignments[i]));
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      std::copy(x.row(far).begin(), x.row(far).end(), centers.row(j).begin());
      --counts[r.assignments[far]];
      r.assignments[far] = j;
      counts[j] = 1;
    }
    auto next_assign = nearest_centers(x, centers);
    const bool stable = next_assign == r.assignments;
    r.assignments = std::move(next_assign);
    const double next = inertia(x, centers, r.assignments);
    r.inertia_history.push_back(next);
    const double prev = r.inertia;
    r.inertia = next;
    if (stable || prev <= 0.0 || (prev - next) / prev < cfg.rel_tol) break;
  }
  r.centers = std::move(centers);
  return r;
}

}  // namespace

double inertia(const Matrix& x, const Matrix& centers, const std::vector<std::size_t>& assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) total += squared_distance(x.row(i), centers.row(assignments[i]));
  return total;
}

std::vector<std::size_t> nearest_centers(const Matrix& x, const Matrix& centers) {
  check(centers.rows() >= 1, "no centers");
  check(x.cols() == centers.cols(), "dimension mismatch: features have " + std::to_string(x.cols()) +
                                        " dims, centers have " + std::to_string(centers.cols()));
  std::vector<std::size_t> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centers.rows(); ++j) {
      const double d = squared_distance(x.row(i), centers.row(j));
      if (d < best) {
        best = d;
        out[i] = j;
      }
    }
  }
  return out;
}

KMeansResult kmeans(const Matrix& x, const KMeansConfig& cfg) {
  check(cfg.k >= 1, "kmeans: k must be >= 1");
  check(x.rows() >= cfg.k, "kmeans: " + std::to_string(x.rows()) + " points are fewer than k=" + std::to_string(cfg.k));
  check(all_finite(x), "kmeans: non-finite input");
  std::mt19937_64 rng(cfg.seed);
  KMeansResult best;
  for (std::size_t run = 0; run < std::max<std::size_t>(cfg.n_init, 1); ++run) {
    KMeansResult r = lloyd(x, kmeans_pp(x, cfg.k, rng), cfg);
    if (run == 0 || r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

std::vector<std::size_t> agglomerate(const Matrix& centers, std::size_t clusters) {
  const std::size_t n = centers.rows();
  check(clusters >= 1 && clusters <= n,
        "agglomerate: cluster count " + std::to_string(clusters) + " must lie in [1, " + std::to_string(n) + "]");
  // dist holds average pairwise Euclidean distance between active clusters.
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dist[i * n + j] = dist[j * n + i] = std::sqrt(squared_distance(centers.row(i), centers.row(j)));
  std::vector<std::size_t> size(n, 1), label(n);
  std::iota(label.begin(), label.end(), 0);
  std::vector<bool> active(n, true);
  // Row-min cache over higher-indexed active partners.
  std::vector<std::size_t> nn(n, n);
  auto refresh = [&](std::size_t i) {
    nn[i] = n;
    for (std::size_t j = i + 1; j < n; ++j)
      if (active[j] && (nn[i] == n || dist[i * n + j] < dist[i * n + nn[i]])) nn[i] = j;
  };
  for (std::size_t i = 0; i < n; ++i) refresh(i);
  for (std::size_t remaining = n; remaining > clusters; --remaining) {
    std::size_t a = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i] || nn[i] == n) continue;
      if (a == n || dist[i * n + nn[i]] < dist[a * n + nn[a]]) a = i;
    }
    const std::size_t b = nn[a];
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a || k == b) continue;
      const double merged = (static_cast<double>(size[a]) * dist[a * n + k] + static_cast<double>(size[b]) * dist[b * n + k]) /
                            static_cast<double>(size[a] + size[b]);
      dist[a * n + k] = dist[k * n + a] = merged;
    }
    size[a] += size[b];
    active[b] = false;
    for (std::size_t i = 0; i < n; ++i)
      if (label[i] == b) label[i] = a;
    for (std::size_t i = 0; i < n; ++i)
      if (active[i] && (i == a || nn[i] == a || nn[i] == b || (i < a && dist[i * n + a] <= dist[i * n + nn[i]])))
        refresh(i);
  }
  // Renumber by first appearance so unit ids are dense in [0, clusters).
  std::vector<std::size_t> dense(n, n), out(n);
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (dense[label[i]] == n) dense[label[i]] = next++;
    out[i] = dense[label[i]];
  }
  return out;
}

void Codebook::validate() const {
  check(center_to_unit.size() == centers.rows(), "codebook: map size differs from center count");
  check(num_units >= 1 && num_units <= centers.rows(), "codebook: unit count out of range");
  for (std::size_t u : center_to_unit) check(u < num_units, "codebook: unit id out of range");
}

void ClustererConfig::validate() const {
  check(k_means >= 1 && k_units >= 1, "clusterer: cluster counts must be >= 1");
  check(k_units <= k_means, "clusterer: k_units must not exceed k_means");
  check(max_iter >= 1 && n_init >= 1, "clusterer: max_iter and n_init must be >= 1");
}

Codebook fit_codebook(const Matrix& pooled, const ClustererConfig& cfg) {
  cfg.validate();
  check(pooled.rows() >= 1, "cluster: no segments to cluster");
  const std::size_t k1 = std::min(cfg.k_means, pooled.rows());
  const std::size_t k2 = std::min(cfg.k_units, k1);
  auto km = kmeans(pooled, {k1, cfg.seed, cfg.max_iter, cfg.rel_tol, cfg.n_init});
  auto map = agglomerate(km.centers, k2);
  return Codebook{std::move(km.centers), std::move(map), k2};
}

std::vector<UnitToken> assign_units(const Segmentation& seg, const Matrix& pooled, const Codebook& codebook) {
  check(pooled.rows() == seg.num_segments(), "assign_units: pooled rows differ from segment count");
  const auto nearest = nearest_centers(pooled, codebook.centers);
  std::vector<UnitToken> out;
  out.reserve(nearest.size());
  for (std::size_t k = 0; k < nearest.size(); ++k)
    out.push_back({seg.boundaries[k], seg.boundaries[k + 1], codebook.center_to_unit[nearest[k]]});
  return out;
}

}  // namespace syllabion
