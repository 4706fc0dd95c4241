#pragma once

#include <cstdint>
#include <vector>

#include "syllabion/matrix.hpp"
#include "syllabion/segmenter.hpp"

namespace syllabion {

struct KMeansConfig {
  std::size_t k = 256;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double rel_tol = 1e-4;
  std::size_t n_init = 1;  // restarts; the lowest final inertia wins
};

struct KMeansResult {
  Matrix centers;
  std::vector<std::size_t> assignments;
  double inertia = 0.0;
  // Inertia after each assignment step of the winning restart.
  std::vector<double> inertia_history;
};

// k-means++ seeding then Lloyd iterations. An emptied cluster is reseeded
// with the point farthest from its current center.
KMeansResult kmeans(const Matrix& x, const KMeansConfig& cfg);

// Sum of squared distances from each row to its assigned center.
double inertia(const Matrix& x, const Matrix& centers, const std::vector<std::size_t>& assignments);

// Nearest center per row; ties go to the lowest center index.
std::vector<std::size_t> nearest_centers(const Matrix& x, const Matrix& centers);

// Average-linkage agglomeration of unweighted centers down to `clusters`
// groups. Returns a map center -> unit id in [0, clusters), numbered by the
// lowest member index. Ties merge the lowest index pair.
std::vector<std::size_t> agglomerate(const Matrix& centers, std::size_t clusters);

struct Codebook {
  Matrix centers;
  std::vector<std::size_t> center_to_unit;
  std::size_t num_units = 0;

  void validate() const;
};

struct ClustererConfig {
  std::size_t k_means = 16384;
  std::size_t k_units = 4096;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double rel_tol = 1e-4;
  std::size_t n_init = 1;

  void validate() const;
};

// kmeans to k_means centers, then agglomerate to k_units. Both counts are
// capped at the number of rows.
Codebook fit_codebook(const Matrix& pooled, const ClustererConfig& cfg);

struct UnitToken {
  std::size_t start = 0;  // frame, inclusive
  std::size_t end = 0;    // frame, exclusive
  std::size_t unit = 0;
  bool operator==(const UnitToken&) const = default;
};

std::vector<UnitToken> assign_units(const Segmentation& seg, const Matrix& pooled, const Codebook& codebook);

}  // namespace syllabion
