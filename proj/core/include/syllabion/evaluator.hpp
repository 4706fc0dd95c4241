#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "syllabion/clusterer.hpp"
#include "syllabion/io.hpp"
#include "syllabion/matrix.hpp"

namespace syllabion {

// ------------------------------------------------------------------ boundaries

struct BoundaryScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double r_value = 0.0;
};

inline constexpr double kBoundaryTolerance = 0.05;  // seconds

// One-to-one greedy matching in order of increasing |ref - hyp|; pairs
// farther apart than tol never match. Returns the number of hits.
std::size_t match_boundaries(const std::vector<double>& ref, const std::vector<double>& hyp,
                             double tol = kBoundaryTolerance);

// OS = R / P - 1, r1 = sqrt((1 - R)^2 + OS^2), r2 = (-OS + R - 1) / sqrt(2),
// R-value = 1 - (|r1| + |r2|) / 2.
double r_value(double precision, double recall);
BoundaryScores scores_from_precision_recall(double precision, double recall);
// Empty hypothesis gives P = 0; empty reference gives R = 0.
BoundaryScores boundary_scores(std::size_t hits, std::size_t n_ref, std::size_t n_hyp);

// Sorted unique segment edges with the first and last dropped, since every
// segmentation shares the utterance start and end.
std::vector<double> interior_boundaries(std::vector<double> edges);
std::vector<double> reference_boundaries(const std::vector<AlignmentEntry>& alignments);

struct BoundaryCounts {
  std::size_t hits = 0, n_ref = 0, n_hyp = 0;
  BoundaryCounts& operator+=(const BoundaryCounts& o);
  BoundaryScores scores() const { return boundary_scores(hits, n_ref, n_hyp); }
};

BoundaryCounts count_boundaries(const std::vector<AlignmentEntry>& reference, const std::vector<double>& hyp_edges,
                                double tol = kBoundaryTolerance);

// ------------------------------------------------------------------ units

struct TimedSegment {
  double start = 0.0;
  double end = 0.0;
};

double temporal_iou(const TimedSegment& a, const TimedSegment& b);

// Maximum-weight assignment for a rectangular weight matrix (Hungarian
// method). Returns one (row, col) per matched row, sorted by row.
std::vector<std::pair<std::size_t, std::size_t>> max_weight_matching(const Matrix& weights);

// Matched (reference index, hypothesis index) pairs with IoU > 0.
std::vector<std::pair<std::size_t, std::size_t>> iou_match(const std::vector<TimedSegment>& ref,
                                                           const std::vector<TimedSegment>& hyp);

// n(s, u) over syllable labels s and unit ids u.
class JointCounts {
 public:
  void add(const std::string& label, std::size_t unit, double count = 1.0);
  JointCounts& operator+=(const JointCounts& other);
  double total() const;
  bool empty() const { return counts_.empty(); }
  // Rows are labels in sorted order, columns unit ids in sorted order.
  Matrix matrix() const;
  const std::map<std::string, std::map<std::size_t, double>>& cells() const { return counts_; }

 private:
  std::map<std::string, std::map<std::size_t, double>> counts_;
};

struct UnitQualityScores {
  double syllable_purity = 0.0;
  double cluster_purity = 0.0;
  double mutual_info = 0.0;  // nats
};

// counts: rows = syllables s, columns = units u.
// syllable purity = sum_u max_s p(s, u); cluster purity = sum_s max_u p(s, u).
UnitQualityScores unit_quality(const Matrix& counts);
UnitQualityScores unit_quality(const JointCounts& counts);

// Adds the IoU-matched (label, unit) pairs of one utterance.
void accumulate_joint(JointCounts& joint, const std::vector<AlignmentEntry>& reference,
                      const std::vector<UnitToken>& tokens, double frame_rate);

// ------------------------------------------------------------------ speakers

// I(X; Y) / H(X) with plug-in entropies in nats.
double speaker_nmi(const std::vector<std::size_t>& speakers, const std::vector<std::size_t>& categories);
double speaker_nmi(const std::vector<std::string>& speakers, const std::vector<std::size_t>& categories);

struct ProbeConfig {
  std::size_t epochs = 500;
  double learning_rate = 0.5;  // divided by the mean of |x|^2 + 1
};

// Multinomial logistic regression trained by full-batch gradient descent on
// the train rows; returns accuracy on the test rows.
double speaker_probe(const Matrix& train_x, const std::vector<std::size_t>& train_y, const Matrix& test_x,
                     const std::vector<std::size_t>& test_y, const ProbeConfig& cfg = {});

// Per-label alternating split so every label with >= 2 rows lands in both
// halves. Returns (train, test) row indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(const std::vector<std::size_t>& labels,
                                                                               double test_fraction,
                                                                               std::uint64_t seed);

// Dense ids in order of first appearance.
std::vector<std::size_t> encode_labels(const std::vector<std::string>& labels);

}  // namespace syllabion
