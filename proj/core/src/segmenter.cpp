#include "syllabion/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "syllabion/error.hpp"

namespace syllabion {

SimilarityMatrix self_similarity(const Matrix& z) {
  SimilarityMatrix s;
  s.weights = matmul_nt(z, z);
  if (s.weights.empty()) return s;
  const double lo = *std::min_element(s.weights.data().begin(), s.weights.data().end());
  s.nonneg_shift = -lo;
  for (double& v : s.weights.data()) v -= lo;
  return s;
}

void Segmentation::validate(std::size_t frames) const {
  check(boundaries.size() >= 2, "segmentation needs at least one segment");
  check(boundaries.front() == 0 && boundaries.back() == frames,
        "segmentation must span frames [0, " + std::to_string(frames) + ")");
  for (std::size_t k = 1; k < boundaries.size(); ++k)
    check(boundaries[k] > boundaries[k - 1], "segmentation boundaries must be strictly increasing");
}

std::size_t num_segments(double duration, double second_per_syllable) {
  check(duration > 0.0 && second_per_syllable > 0.0, "num_segments: duration and rate must be > 0");
  const double s = std::floor(duration / second_per_syllable + 0.5);
  return std::max<std::size_t>(1, static_cast<std::size_t>(s));
}

NcutCost::NcutCost(const Matrix& w) : t_(w.rows()), block_((t_ + 1) * (t_ + 1), 0.0), rows_(t_ + 1, 0.0) {
  check(w.rows() == w.cols(), "similarity matrix must be square");
  const std::size_t n = t_ + 1;
  for (std::size_t i = 0; i < t_; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < t_; ++j) {
      row += w(i, j);
      block_[(i + 1) * n + (j + 1)] = block_[i * n + (j + 1)] + row;
    }
    rows_[i + 1] = rows_[i] + row;
  }
}

double NcutCost::operator()(std::size_t a, std::size_t b) const {
  const std::size_t n = t_ + 1;
  const double vol = rows_[b] - rows_[a];
  const double within = block_[b * n + b] - block_[a * n + b] - block_[b * n + a] + block_[a * n + a];
  if (vol <= 0.0) return 0.0;
  return std::max(0.0, vol - within) / vol;
}

double ncut_objective(const Matrix& weights, const Segmentation& seg) {
  seg.validate(weights.rows());
  const NcutCost cost(weights);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < seg.boundaries.size(); ++k) total += cost(seg.boundaries[k], seg.boundaries[k + 1]);
  return total;
}

MincutResult mincut_segment(const Matrix& weights, std::size_t segments) {
  const std::size_t t = weights.rows();
  check(segments >= 1, "mincut: need at least one segment");
  check(segments <= t, "mincut: " + std::to_string(segments) + " segments exceed " + std::to_string(t) + " frames");
  const NcutCost cost(weights);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // best[s][b]: optimum for frames [0, b) in s segments; from[s][b]: start of the last segment.
  std::vector<std::vector<double>> best(segments + 1, std::vector<double>(t + 1, kInf));
  std::vector<std::vector<std::size_t>> from(segments + 1, std::vector<std::size_t>(t + 1, 0));
  best[0][0] = 0.0;
  for (std::size_t s = 1; s <= segments; ++s) {
    // At least (segments - s) frames must remain for the later segments.
    const std::size_t b_hi = t - (segments - s);
    for (std::size_t b = s; b <= b_hi; ++b) {
      for (std::size_t a = s - 1; a < b; ++a) {
        if (best[s - 1][a] == kInf) continue;
        const double v = best[s - 1][a] + cost(a, b);
        if (v < best[s][b]) {
          best[s][b] = v;
          from[s][b] = a;
        }
      }
    }
  }
  MincutResult r;
  r.objective = best[segments][t];
  r.segmentation.boundaries.assign(segments + 1, 0);
  std::size_t b = t;
  for (std::size_t s = segments; s >= 1; --s) {
    r.segmentation.boundaries[s] = b;
    b = from[s][b];
  }
  return r;
}

namespace {

std::vector<double> segment_mean(const Matrix& z, std::size_t a, std::size_t b) {
  std::vector<double> m(z.cols(), 0.0);
  for (std::size_t r = a; r < b; ++r)
    for (std::size_t c = 0; c < z.cols(); ++c) m[c] += z(r, c);
  for (double& v : m) v /= static_cast<double>(b - a);
  return m;
}

double cosine(const std::vector<double>& x, const std::vector<double>& y) {
  const double nx = std::sqrt(dot(x, x)), ny = std::sqrt(dot(y, y));
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return dot(x, y) / (nx * ny);
}

}  // namespace

Segmentation merge_adjacent(const Segmentation& seg, const Matrix& z, double threshold) {
  seg.validate(z.rows());
  std::vector<std::size_t> b = seg.boundaries;
  std::vector<std::vector<double>> means;
  for (std::size_t k = 0; k + 1 < b.size(); ++k) means.push_back(segment_mean(z, b[k], b[k + 1]));
  while (means.size() >= 2) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < means.size(); ++k) {
      const double sim = cosine(means[k], means[k + 1]);
      if (sim > best_sim) {
        best_sim = sim;
        best = k;
      }
    }
    if (!(best_sim > threshold)) break;
    b.erase(b.begin() + static_cast<std::ptrdiff_t>(best + 1));
    means.erase(means.begin() + static_cast<std::ptrdiff_t>(best + 1));
    means[best] = segment_mean(z, b[best], b[best + 1]);
  }
  return Segmentation{std::move(b)};
}

Matrix pool_segments(const Segmentation& seg, const Matrix& z) {
  seg.validate(z.rows());
  Matrix out(seg.num_segments(), z.cols());
  for (std::size_t k = 0; k < seg.num_segments(); ++k) {
    const auto m = segment_mean(z, seg.boundaries[k], seg.boundaries[k + 1]);
    std::copy(m.begin(), m.end(), out.row(k).begin());
  }
  return out;
}

std::vector<double> boundaries_to_seconds(const Segmentation& seg, double frame_rate) {
  check(frame_rate > 0.0, "frame_rate must be > 0");
  std::vector<double> out;
  out.reserve(seg.boundaries.size());
  for (std::size_t b : seg.boundaries) out.push_back(static_cast<double>(b) / frame_rate);
  return out;
}

void SegmenterConfig::validate() const {
  check(second_per_syllable > 0.0, "segmenter: second_per_syllable must be > 0");
  check(std::isfinite(merge_threshold), "segmenter: merge_threshold must be finite");
}

Segmentation segment_features(const Matrix& z, double frame_rate, const SegmenterConfig& cfg) {
  cfg.validate();
  check(z.rows() >= 1, "segment: empty feature matrix");
  check(frame_rate > 0.0, "frame_rate must be > 0");
  const double duration = static_cast<double>(z.rows()) / frame_rate;
  const std::size_t s = std::min(num_segments(duration, cfg.second_per_syllable), z.rows());
  const auto cut = mincut_segment(self_similarity(z).weights, s);
  return merge_adjacent(cut.segmentation, z, cfg.merge_threshold);
}

}  // namespace syllabion
