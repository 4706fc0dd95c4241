#pragma once

#include <cstddef>
#include <vector>

#include "syllabion/matrix.hpp"

namespace syllabion {

// Dot-product similarities shifted by -min so every weight is >= 0.
struct SimilarityMatrix {
  Matrix weights;
  double nonneg_shift = 0.0;
};

SimilarityMatrix self_similarity(const Matrix& z);

// Frame boundaries b_0 = 0 < b_1 < ... < b_S = T; segment k is [b_k, b_{k+1}).
struct Segmentation {
  std::vector<std::size_t> boundaries;

  std::size_t num_segments() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }
  std::size_t num_frames() const { return boundaries.empty() ? 0 : boundaries.back(); }
  void validate(std::size_t frames) const;
  bool operator==(const Segmentation&) const = default;
};

// max(1, round-half-up(duration / second_per_syllable)).
std::size_t num_segments(double duration, double second_per_syllable = 0.2);

// Normalized-cut cost of segment [a, b): cut / vol, or 0 when vol is 0.
// Queries are O(1) after an O(T^2) prefix-sum build.
class NcutCost {
 public:
  explicit NcutCost(const Matrix& weights);
  double operator()(std::size_t a, std::size_t b) const;
  std::size_t frames() const { return t_; }

 private:
  std::size_t t_;
  std::vector<double> block_;  // (T+1)^2 inclusive-exclusive 2-D prefix sums
  std::vector<double> rows_;   // prefix sums of row totals
};

// Sum of per-segment costs, accumulated left to right.
double ncut_objective(const Matrix& weights, const Segmentation& seg);

struct MincutResult {
  Segmentation segmentation;
  double objective = 0.0;
};

// Exactly-S contiguous partition minimizing the summed normalized cut, in
// O(S T^2). Among equal optima the last boundary is the earliest possible,
// then the one before it, and so on.
MincutResult mincut_segment(const Matrix& weights, std::size_t segments);

// Repeatedly merges the adjacent pair whose mean features have the highest
// cosine similarity while it exceeds threshold. Ties go to the earlier pair.
Segmentation merge_adjacent(const Segmentation& seg, const Matrix& z, double threshold = 0.3);

// Row k is the mean of frames in segment k.
Matrix pool_segments(const Segmentation& seg, const Matrix& z);

std::vector<double> boundaries_to_seconds(const Segmentation& seg, double frame_rate);

struct SegmenterConfig {
  double second_per_syllable = 0.2;
  double merge_threshold = 0.3;

  void validate() const;
};

// self_similarity -> mincut with num_segments(duration) (capped at T) ->
// merge_adjacent.
Segmentation segment_features(const Matrix& z, double frame_rate, const SegmenterConfig& cfg = {});

}  // namespace syllabion
