#include <algorithm>
#include <cmath>

#include "syllabion/dsp.hpp"
#include "syllabion/error.hpp"

namespace syllabion {

PitchTrack estimate_pitch(const Waveform& w, const PitchConfig& cfg) {
  check(!w.samples.empty(), "estimate_pitch: empty waveform");
  check(w.sample_rate >= 8000.0, "estimate_pitch: sample_rate must be >= 8000 Hz");
  const double sr = w.sample_rate;
  const auto hop = static_cast<std::size_t>(std::lround(cfg.hop_seconds * sr));
  const auto win = static_cast<std::size_t>(std::lround(cfg.window_seconds * sr));
  const auto tau_min = static_cast<std::size_t>(std::floor(sr / cfg.max_f0));
  const auto tau_max = static_cast<std::size_t>(std::ceil(sr / cfg.min_f0));
  const std::size_t span = win + tau_max + 1;  // room for lag tau_max + 1
  const std::size_t n = w.size();
  const std::size_t frames = (n + hop - 1) / hop;

  PitchTrack track;
  track.hop = static_cast<double>(hop) / sr;
  track.values.assign(frames, 0.0);

  std::vector<double> seg(span);
  std::vector<double> diff(tau_max + 2);
  std::vector<double> cmnd(tau_max + 2);
  for (std::size_t f = 0; f < frames; ++f) {
    // Frame is centred on f * hop; samples outside the signal read as zero.
    const auto start = static_cast<long long>(f * hop) - static_cast<long long>(span / 2);
    double energy = 0.0;
    for (std::size_t i = 0; i < span; ++i) {
      const long long idx = start + static_cast<long long>(i);
      seg[i] = (idx >= 0 && idx < static_cast<long long>(n)) ? w.samples[static_cast<std::size_t>(idx)] : 0.0;
    }
    for (std::size_t i = 0; i < win; ++i) energy += seg[i] * seg[i];
    if (std::sqrt(energy / static_cast<double>(win)) < cfg.silence_rms) continue;

    for (std::size_t tau = 1; tau <= tau_max + 1; ++tau) {
      double d = 0.0;
      for (std::size_t j = 0; j < win; ++j) {
        const double delta = seg[j] - seg[j + tau];
        d += delta * delta;
      }
      diff[tau] = d;
    }
    double running = 0.0;
    for (std::size_t tau = 1; tau <= tau_max + 1; ++tau) {
      running += diff[tau];
      cmnd[tau] = running > 0.0 ? diff[tau] * static_cast<double>(tau) / running : 1.0;
    }

    std::size_t best = 0;
    for (std::size_t tau = std::max<std::size_t>(tau_min, 2); tau <= tau_max; ++tau) {
      if (cmnd[tau] < cfg.dip_threshold) {
        while (tau + 1 <= tau_max && cmnd[tau + 1] < cmnd[tau]) ++tau;
        best = tau;
        break;
      }
    }
    if (best == 0) {
      best = std::max<std::size_t>(tau_min, 2);
      for (std::size_t tau = best; tau <= tau_max; ++tau)
        if (cmnd[tau] < cmnd[best]) best = tau;
      if (cmnd[best] >= cfg.voicing_threshold) continue;
    }

    // Parabolic refinement on the raw difference function.
    double period = static_cast<double>(best);
    const double a = diff[best - 1], b = diff[best], c = diff[best + 1];
    const double denom = a - 2.0 * b + c;
    if (denom > 0.0) period += 0.5 * (a - c) / denom;
    const double f0 = sr / period;
    if (f0 >= cfg.min_f0 && f0 <= cfg.max_f0) track.values[f] = f0;
  }
  return track;
}

bool has_voiced_frames(const PitchTrack& pt) {
  return std::any_of(pt.values.begin(), pt.values.end(), [](double v) { return v > 0.0; });
}

double median_voiced_pitch(const PitchTrack& pt) {
  std::vector<double> voiced;
  for (double v : pt.values)
    if (v > 0.0) voiced.push_back(v);
  if (voiced.empty()) fail("unvoiced utterance");
  std::sort(voiced.begin(), voiced.end());
  const std::size_t m = voiced.size() / 2;
  return voiced.size() % 2 == 1 ? voiced[m] : 0.5 * (voiced[m - 1] + voiced[m]);
}

double mean_voiced_pitch(const PitchTrack& pt) {
  double sum = 0.0;
  std::size_t count = 0;
  for (double v : pt.values)
    if (v > 0.0) {
      sum += v;
      ++count;
    }
  if (count == 0) fail("unvoiced utterance");
  return sum / static_cast<double>(count);
}

void PerturbParams::validate() const {
  check(formant_shift_ratio >= 0.5 && formant_shift_ratio <= 2.0,
        "formant_shift_ratio must lie in [0.5, 2.0]");
  check(target_pitch_median > 0.0, "target_pitch_median must be positive");
  check(pitch_range_factor > 0.0, "pitch_range_factor must be positive");
}

PerturbParams decide_conversion(double pitch_stat, const ConversionConfig& cfg) {
  check(pitch_stat > 0.0, "decide_conversion: pitch statistic must be positive");
  return pitch_stat > cfg.threshold_hz ? cfg.female_to_male : cfg.male_to_female;
}

}  // namespace syllabion
