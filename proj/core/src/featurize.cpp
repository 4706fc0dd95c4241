#include "syllabion/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "syllabion/error.hpp"
#include "syllabion/fft.hpp"

namespace syllabion {

void FeaturizerConfig::validate(double sample_rate) const {
  check(n_fft >= 2, "featurizer: n_fft must be >= 2");
  check(hop >= 1 && hop <= n_fft, "featurizer: hop must be in [1, n_fft]");
  check(n_mels >= 2, "featurizer: n_mels must be >= 2");
  check(fmin >= 0.0 && fmin < fmax, "featurizer: need 0 <= fmin < fmax");
  check(fmax <= sample_rate / 2.0 + 1e-9, "featurizer: fmax exceeds Nyquist");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(const FeaturizerConfig& cfg, double sample_rate) {
  cfg.validate(sample_rate);
  const std::size_t bins = cfg.n_fft / 2 + 1;
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));

  Matrix fb(cfg.n_mels, bins);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = sample_rate * static_cast<double>(k) / static_cast<double>(cfg.n_fft);
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      fb(m, k) = std::max(0.0, std::min(rise, fall));
    }
  }
  return fb;
}

FrameFeatures log_mel(const Waveform& w, const FeaturizerConfig& cfg) {
  cfg.validate(w.sample_rate);
  check(w.size() >= cfg.n_fft, "featurizer: input shorter than n_fft (" + std::to_string(w.size()) +
                                   " < " + std::to_string(cfg.n_fft) + " samples)");
  const std::size_t frames = 1 + (w.size() - cfg.n_fft) / cfg.hop;
  const std::size_t bins = cfg.n_fft / 2 + 1;
  const Matrix fb = mel_filterbank(cfg, w.sample_rate);

  std::vector<double> window(cfg.n_fft);
  for (std::size_t n = 0; n < cfg.n_fft; ++n)
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                     static_cast<double>(cfg.n_fft));

  FrameFeatures out{Matrix(frames, cfg.n_mels), w.sample_rate / static_cast<double>(cfg.hop)};
  std::vector<double> frame(cfg.n_fft);
  std::vector<double> power(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t off = t * cfg.hop;
    for (std::size_t n = 0; n < cfg.n_fft; ++n) frame[n] = w.samples[off + n] * window[n];
    const auto spec = dft_real(frame);
    for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(spec[k]);
    for (std::size_t m = 0; m < cfg.n_mels; ++m)
      out.data(t, m) = std::log(dot(fb.row(m), power) + kLogMelFloor);
  }
  return out;
}

}  // namespace syllabion
