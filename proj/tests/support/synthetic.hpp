#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "syllabion/io.hpp"
#include "syllabion/matrix.hpp"

namespace syllabion::testing {

// Asymmetric triangle glottal pulse (60% opening, 40% closing, so every
// harmonic is present), differentiated, through two resonators, with a 3 Hz
// vibrato of relative depth `vibrato`. Peak amplitude 0.5.
inline Waveform synthetic_voice(double f0, double seconds, double f1 = 700.0, double f2 = 1200.0,
                                double vibrato = 0.03, double sample_rate = 16000.0) {
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  std::vector<double> src(n), d(n, 0.0);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    phase += f0 * (1.0 + vibrato * std::sin(2.0 * std::numbers::pi * 3.0 * t)) / sample_rate;
    phase -= std::floor(phase);
    src[i] = (phase < 0.6 ? phase / 0.6 : (1.0 - phase) / 0.4) - 0.5;
  }
  for (std::size_t i = 1; i < n; ++i) d[i] = src[i] - src[i - 1];
  auto resonate = [&](const std::vector<double>& x, double fc, double bw) {
    const double r = std::exp(-std::numbers::pi * bw / sample_rate);
    const double c = 2.0 * r * std::cos(2.0 * std::numbers::pi * fc / sample_rate);
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      y[i] = x[i] + (i > 0 ? c * y[i - 1] : 0.0) - (i > 1 ? r * r * y[i - 2] : 0.0);
    return y;
  };
  const auto y = resonate(resonate(d, f1, 80.0), f2, 100.0);
  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::abs(v));
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = 0.5 * y[i] / peak;
  return w;
}

inline Waveform sine(double freq, double seconds, double amplitude = 0.5, double sample_rate = 16000.0) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(static_cast<std::size_t>(seconds * sample_rate));
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sample_rate);
  return w;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> g(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = g(rng);
  return m;
}

// Unit-norm rows with pairwise |cos| <= max_cos.
inline Matrix unit_prototypes(std::size_t k, std::size_t dim, std::mt19937_64& rng, double max_cos = 0.5) {
  Matrix p(k, dim);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < k;) {
    std::vector<double> v(dim);
    for (double& x : v) x = g(rng);
    const double n = std::sqrt(dot(v, v));
    for (double& x : v) x /= n;
    bool ok = true;
    for (std::size_t j = 0; j < i && ok; ++j) ok = std::abs(dot(v, p.row(j))) <= max_cos;
    if (!ok) continue;
    std::copy(v.begin(), v.end(), p.row(i).begin());
    ++i;
  }
  return p;
}

struct PlantedUtterance {
  Matrix features;
  std::vector<std::size_t> boundaries;  // 0, ..., T
  std::vector<std::size_t> labels;      // prototype per segment
};

// Piecewise-constant prototype rows plus N(0, sigma^2) noise. Adjacent
// segments use different prototypes.
inline PlantedUtterance planted_utterance(const Matrix& prototypes, std::size_t segments, std::size_t min_len,
                                          std::size_t max_len, double sigma, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len), proto(0, prototypes.rows() - 1);
  std::normal_distribution<double> noise(0.0, sigma);
  PlantedUtterance u;
  u.boundaries.push_back(0);
  for (std::size_t s = 0; s < segments; ++s) {
    std::size_t p = proto(rng);
    while (!u.labels.empty() && p == u.labels.back()) p = proto(rng);
    u.labels.push_back(p);
    u.boundaries.push_back(u.boundaries.back() + len(rng));
  }
  u.features = Matrix(u.boundaries.back(), prototypes.cols());
  for (std::size_t s = 0; s < segments; ++s)
    for (std::size_t t = u.boundaries[s]; t < u.boundaries[s + 1]; ++t)
      for (std::size_t c = 0; c < prototypes.cols(); ++c) u.features(t, c) = prototypes(u.labels[s], c) + noise(rng);
  return u;
}

inline std::vector<AlignmentEntry> alignments_from(const PlantedUtterance& u, double frame_rate) {
  std::vector<AlignmentEntry> out;
  for (std::size_t s = 0; s < u.labels.size(); ++s)
    out.push_back({static_cast<double>(u.boundaries[s]) / frame_rate, static_cast<double>(u.boundaries[s + 1]) / frame_rate,
                   "p" + std::to_string(u.labels[s])});
  return out;
}

}  // namespace syllabion::testing
