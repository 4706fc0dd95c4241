#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "syllabion/dsp.hpp"
#include "syllabion/error.hpp"

namespace syllabion {
namespace {

constexpr double kSincZeroCrossings = 16.0;
constexpr double kKaiserBeta = 8.6;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double kaiser(double x, double half_width) {
  const double r = x / half_width;
  if (std::abs(r) >= 1.0) return 0.0;
  static const double norm = std::cyl_bessel_i(0.0, kKaiserBeta);
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / norm;
}

std::vector<double> hann(std::size_t n) {
  // Periodic Hann: overlap-adds to exactly 1 at 50% overlap.
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

double sample_at(const std::vector<double>& x, long long i) {
  return (i >= 0 && i < static_cast<long long>(x.size())) ? x[static_cast<std::size_t>(i)] : 0.0;
}

}  // namespace

Waveform resample(const Waveform& w, double new_rate) {
  check(new_rate > 0.0, "resample: new_rate must be positive");
  const double ratio = new_rate / w.sample_rate;
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(w.size()) * ratio));
  Waveform out;
  out.sample_rate = new_rate;
  if (new_rate == w.sample_rate) {
    out.samples = w.samples;
    return out;
  }
  // Anti-aliasing cutoff relative to the input Nyquist frequency.
  const double cutoff = std::min(1.0, ratio);
  const double half_width = kSincZeroCrossings / cutoff;
  out.samples.resize(out_len);
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const auto lo = static_cast<long long>(std::ceil(t - half_width));
    const auto hi = static_cast<long long>(std::floor(t + half_width));
    double acc = 0.0;
    for (long long k = lo; k <= hi; ++k) {
      const double x = sample_at(w.samples, k);
      if (x == 0.0) continue;
      const double d = t - static_cast<double>(k);
      acc += x * cutoff * sinc(cutoff * d) * kaiser(d, half_width);
    }
    out.samples[n] = acc;
  }
  return out;
}

Waveform time_scale(const Waveform& w, double factor) {
  check(factor >= 0.5 && factor <= 2.0, "time_scale: factor out of range [0.5, 2.0]");
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(w.size()) * factor));
  Waveform out;
  out.sample_rate = w.sample_rate;
  if (factor == 1.0) {
    out.samples = w.samples;
    return out;
  }
  const auto frame = static_cast<std::size_t>(std::lround(0.030 * w.sample_rate));
  const std::size_t syn_hop = frame / 2;
  const auto tolerance = static_cast<long long>(std::lround(0.010 * w.sample_rate));
  const double ana_hop = static_cast<double>(syn_hop) / factor;
  const auto window = hann(frame);

  std::vector<double> y(out_len + frame, 0.0);
  std::vector<double> wsum(out_len + frame, 0.0);
  long long prev = 0;
  for (std::size_t k = 0; k * syn_hop < out_len; ++k) {
    long long pos = 0;
    if (k > 0) {
      // Pick the input offset whose frame best continues the previous grain.
      const long long natural = prev + static_cast<long long>(syn_hop);
      const auto nominal = static_cast<long long>(std::llround(static_cast<double>(k) * ana_hop));
      double best_score = -std::numeric_limits<double>::infinity();
      pos = nominal;
      for (long long delta = -tolerance; delta <= tolerance; ++delta) {
        const long long cand = nominal + delta;
        if (cand < 0) continue;
        double xy = 0.0, yy = 0.0;
        for (std::size_t i = 0; i < frame; i += 2) {
          const double a = sample_at(w.samples, natural + static_cast<long long>(i));
          const double b = sample_at(w.samples, cand + static_cast<long long>(i));
          xy += a * b;
          yy += b * b;
        }
        const double score = yy > 0.0 ? xy / std::sqrt(yy) : 0.0;
        if (score > best_score) {
          best_score = score;
          pos = cand;
        }
      }
    }
    const std::size_t at = k * syn_hop;
    for (std::size_t i = 0; i < frame; ++i) {
      y[at + i] += window[i] * sample_at(w.samples, pos + static_cast<long long>(i));
      wsum[at + i] += window[i];
    }
    prev = pos;
  }
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out.samples[i] = wsum[i] > 1e-3 ? y[i] / wsum[i] : y[i];
  return out;
}

}  // namespace syllabion
