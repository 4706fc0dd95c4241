#include "syllabion/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include "syllabion/error.hpp"

namespace syllabion {

namespace {

// Absorbs decimal representation error at the tolerance edge.
constexpr double kToleranceSlack = 1e-9;

double plogp_sum(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

}  // namespace

// ------------------------------------------------------------------ boundaries

std::size_t match_boundaries(const std::vector<double>& ref, const std::vector<double>& hyp, double tol) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < ref.size(); ++i)
    for (std::size_t j = 0; j < hyp.size(); ++j) {
      const double d = std::abs(ref[i] - hyp[j]);
      if (d <= tol + kToleranceSlack) pairs.emplace_back(d, i, j);
    }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> ref_used(ref.size(), false), hyp_used(hyp.size(), false);
  std::size_t hits = 0;
  for (const auto& [d, i, j] : pairs) {
    if (ref_used[i] || hyp_used[j]) continue;
    ref_used[i] = hyp_used[j] = true;
    ++hits;
  }
  return hits;
}

double r_value(double precision, double recall) {
  if (precision <= 0.0) return 0.0;
  const double os = recall / precision - 1.0;
  const double r1 = std::sqrt((1.0 - recall) * (1.0 - recall) + os * os);
  const double r2 = (-os + recall - 1.0) / std::numbers::sqrt2;
  return 1.0 - (std::abs(r1) + std::abs(r2)) / 2.0;
}

BoundaryScores scores_from_precision_recall(double precision, double recall) {
  BoundaryScores s;
  s.precision = precision;
  s.recall = recall;
  s.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  s.r_value = r_value(precision, recall);
  return s;
}

BoundaryScores boundary_scores(std::size_t hits, std::size_t n_ref, std::size_t n_hyp) {
  check(hits <= n_ref && hits <= n_hyp, "boundary_scores: hits exceed boundary counts");
  const double p = n_hyp > 0 ? static_cast<double>(hits) / static_cast<double>(n_hyp) : 0.0;
  const double r = n_ref > 0 ? static_cast<double>(hits) / static_cast<double>(n_ref) : 0.0;
  return scores_from_precision_recall(p, r);
}

std::vector<double> interior_boundaries(std::vector<double> edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](double a, double b) { return std::abs(a - b) <= kToleranceSlack; }),
              edges.end());
  if (edges.size() <= 2) return {};
  return {edges.begin() + 1, edges.end() - 1};
}

std::vector<double> reference_boundaries(const std::vector<AlignmentEntry>& alignments) {
  std::vector<double> edges;
  for (const auto& a : alignments) {
    edges.push_back(a.start);
    edges.push_back(a.end);
  }
  return interior_boundaries(std::move(edges));
}

BoundaryCounts& BoundaryCounts::operator+=(const BoundaryCounts& o) {
  hits += o.hits;
  n_ref += o.n_ref;
  n_hyp += o.n_hyp;
  return *this;
}

BoundaryCounts count_boundaries(const std::vector<AlignmentEntry>& reference, const std::vector<double>& hyp_edges,
                                double tol) {
  const auto ref = reference_boundaries(reference);
  const auto hyp = interior_boundaries(hyp_edges);
  return {match_boundaries(ref, hyp, tol), ref.size(), hyp.size()};
}

// ------------------------------------------------------------------ units

double temporal_iou(const TimedSegment& a, const TimedSegment& b) {
  const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<std::pair<std::size_t, std::size_t>> max_weight_matching(const Matrix& weights) {
  if (weights.rows() == 0 || weights.cols() == 0) return {};
  const bool transposed = weights.rows() > weights.cols();
  const Matrix w = transposed ? weights.transpose() : weights;
  const std::size_t n = w.rows(), m = w.cols();
  // Shortest augmenting path with potentials, minimizing -w; 1-based with a
  // virtual column 0.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> col_owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    col_owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = col_owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = -w(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[col_owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      col_owner[j0] = col_owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t j = 1; j <= m; ++j) {
    if (col_owner[j] == 0) continue;
    const std::size_t r = col_owner[j] - 1, c = j - 1;
    out.emplace_back(transposed ? c : r, transposed ? r : c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> iou_match(const std::vector<TimedSegment>& ref,
                                                           const std::vector<TimedSegment>& hyp) {
  Matrix iou(ref.size(), hyp.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    for (std::size_t j = 0; j < hyp.size(); ++j) iou(i, j) = temporal_iou(ref[i], hyp[j]);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& [i, j] : max_weight_matching(iou))
    if (iou(i, j) > 0.0) out.emplace_back(i, j);
  return out;
}

void JointCounts::add(const std::string& label, std::size_t unit, double count) {
  check(count >= 0.0, "joint counts must be non-negative");
  counts_[label][unit] += count;
}

JointCounts& JointCounts::operator+=(const JointCounts& other) {
  for (const auto& [label, row] : other.counts_)
    for (const auto& [unit, c] : row) counts_[label][unit] += c;
  return *this;
}

double JointCounts::total() const {
  double t = 0.0;
  for (const auto& [label, row] : counts_)
    for (const auto& [unit, c] : row) t += c;
  return t;
}

Matrix JointCounts::matrix() const {
  std::map<std::size_t, std::size_t> col;
  for (const auto& [label, row] : counts_)
    for (const auto& [unit, c] : row) col.emplace(unit, 0);
  std::size_t next = 0;
  for (auto& [unit, idx] : col) idx = next++;
  Matrix m(counts_.size(), col.size());
  std::size_t r = 0;
  for (const auto& [label, row] : counts_) {
    for (const auto& [unit, c] : row) m(r, col.at(unit)) = c;
    ++r;
  }
  return m;
}

UnitQualityScores unit_quality(const Matrix& counts) {
  double total = 0.0;
  for (double c : counts.data()) {
    check(c >= 0.0, "unit_quality: negative count");
    total += c;
  }
  check(total > 0.0, "unit_quality: empty joint counts");
  const std::size_t ns = counts.rows(), nu = counts.cols();
  std::vector<double> ps(ns, 0.0), pu(nu, 0.0), col_max(nu, 0.0);
  UnitQualityScores q;
  for (std::size_t s = 0; s < ns; ++s) {
    double row_max = 0.0;
    for (std::size_t u = 0; u < nu; ++u) {
      const double p = counts(s, u) / total;
      ps[s] += p;
      pu[u] += p;
      row_max = std::max(row_max, p);
      col_max[u] = std::max(col_max[u], p);
    }
    q.cluster_purity += row_max;
  }
  for (double m : col_max) q.syllable_purity += m;
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t u = 0; u < nu; ++u) {
      const double p = counts(s, u) / total;
      if (p > 0.0) q.mutual_info += p * std::log(p / (ps[s] * pu[u]));
    }
  q.mutual_info = std::max(0.0, q.mutual_info);
  return q;
}

UnitQualityScores unit_quality(const JointCounts& counts) { return unit_quality(counts.matrix()); }

void accumulate_joint(JointCounts& joint, const std::vector<AlignmentEntry>& reference,
                      const std::vector<UnitToken>& tokens, double frame_rate) {
  check(frame_rate > 0.0, "frame_rate must be > 0");
  std::vector<TimedSegment> ref, hyp;
  for (const auto& a : reference) ref.push_back({a.start, a.end});
  for (const auto& t : tokens)
    hyp.push_back({static_cast<double>(t.start) / frame_rate, static_cast<double>(t.end) / frame_rate});
  for (const auto& [i, j] : iou_match(ref, hyp)) joint.add(reference[i].label, tokens[j].unit);
}

// ------------------------------------------------------------------ speakers

double speaker_nmi(const std::vector<std::size_t>& speakers, const std::vector<std::size_t>& categories) {
  check(speakers.size() == categories.size(), "speaker_nmi: length mismatch");
  check(!speakers.empty(), "speaker_nmi: no samples");
  std::map<std::size_t, double> px, py;
  std::map<std::pair<std::size_t, std::size_t>, double> pxy;
  const double inv = 1.0 / static_cast<double>(speakers.size());
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    px[speakers[i]] += inv;
    py[categories[i]] += inv;
    pxy[{speakers[i], categories[i]}] += inv;
  }
  check(px.size() >= 2, "speaker_nmi: need at least two speakers");
  std::vector<double> vx, vy, vxy;
  for (const auto& [k, p] : px) vx.push_back(p);
  for (const auto& [k, p] : py) vy.push_back(p);
  for (const auto& [k, p] : pxy) vxy.push_back(p);
  const double hx = plogp_sum(vx);
  const double mi = hx + plogp_sum(vy) - plogp_sum(vxy);
  return std::clamp(mi / hx, 0.0, 1.0);
}

double speaker_nmi(const std::vector<std::string>& speakers, const std::vector<std::size_t>& categories) {
  return speaker_nmi(encode_labels(speakers), categories);
}

std::vector<std::size_t> encode_labels(const std::vector<std::string>& labels) {
  std::map<std::string, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(ids.emplace(l, ids.size()).first->second);
  return out;
}

double speaker_probe(const Matrix& train_x, const std::vector<std::size_t>& train_y, const Matrix& test_x,
                     const std::vector<std::size_t>& test_y, const ProbeConfig& cfg) {
  check(train_x.rows() == train_y.size() && test_x.rows() == test_y.size(), "speaker_probe: label count mismatch");
  check(train_x.rows() >= 2 && test_x.rows() >= 1, "speaker_probe: degenerate train/test split");
  check(train_x.cols() == test_x.cols(), "speaker_probe: train and test dims differ");
  const std::size_t classes = 1 + std::max(*std::max_element(train_y.begin(), train_y.end()),
                                           *std::max_element(test_y.begin(), test_y.end()));
  check(std::set<std::size_t>(train_y.begin(), train_y.end()).size() >= 2,
        "speaker_probe: training split needs at least two speakers");
  const std::size_t n = train_x.rows(), d = train_x.cols();
  double mean_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_sq += dot(train_x.row(i), train_x.row(i)) + 1.0;
  mean_sq /= static_cast<double>(n);
  const double lr = cfg.learning_rate / mean_sq;

  Matrix w(d, classes), b(1, classes);
  auto logits = [&](const Matrix& x) {
    Matrix z = matmul(x, w);
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < classes; ++c) z(r, c) += b(0, c);
    return z;
  };
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Matrix g = logits(train_x);
    for (std::size_t r = 0; r < n; ++r) {
      auto row = g.row(r);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (double& v : row) z += (v = std::exp(v - mx));
      for (double& v : row) v /= z;
      row[train_y[r]] -= 1.0;
      for (double& v : row) v /= static_cast<double>(n);
    }
    w -= matmul_tn(train_x, g) * lr;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < classes; ++c) b(0, c) -= lr * g(r, c);
  }
  const Matrix z = logits(test_x);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto row = z.row(r);
    const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += pred == test_y[r];
  }
  return static_cast<double>(correct) / static_cast<double>(z.rows());
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(const std::vector<std::size_t>& labels,
                                                                               double test_fraction,
                                                                               std::uint64_t seed) {
  check(test_fraction > 0.0 && test_fraction < 1.0, "stratified_split: test_fraction must lie in (0, 1)");
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train, test;
  for (auto& [label, rows] : by_label) {
    std::shuffle(rows.begin(), rows.end(), rng);
    std::size_t n_test = 0;
    if (rows.size() >= 2)
      n_test = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(rows.size()))), 1,
          rows.size() - 1);
    test.insert(test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  check(!train.empty() && !test.empty(), "stratified_split: degenerate split");
  return {train, test};
}

}  // namespace syllabion
