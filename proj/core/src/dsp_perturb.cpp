#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "syllabion/dsp.hpp"
#include "syllabion/error.hpp"

namespace syllabion {
namespace {

double rms(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

void fit_length(std::vector<double>& x, std::size_t n) { x.resize(n, 0.0); }

// Four-point Lagrange interpolation; zero outside the signal.
double cubic_at(const std::vector<double>& x, double pos) {
  const auto i = static_cast<long long>(std::floor(pos));
  const double f = pos - static_cast<double>(i);
  auto at = [&](long long k) {
    return (k >= 0 && k < static_cast<long long>(x.size())) ? x[static_cast<std::size_t>(k)] : 0.0;
  };
  return at(i - 1) * (-f * (f - 1.0) * (f - 2.0) / 6.0) +
         at(i) * ((f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0) +
         at(i + 1) * (-(f + 1.0) * f * (f - 2.0) / 2.0) +
         at(i + 2) * ((f + 1.0) * f * (f - 1.0) / 6.0);
}

struct PitchMark {
  double pos;
  double period;  // samples
  bool voiced;
};

double pitch_at(const PitchTrack& pt, double seconds) {
  if (pt.values.empty()) return 0.0;
  const auto idx = static_cast<long long>(std::llround(seconds / pt.hop));
  const auto clamped = std::clamp<long long>(idx, 0, static_cast<long long>(pt.values.size()) - 1);
  return pt.values[static_cast<std::size_t>(clamped)];
}

std::size_t strongest_in(const std::vector<double>& x, double from, double to) {
  const auto begin = static_cast<std::size_t>(std::clamp(from, 0.0, static_cast<double>(x.size() - 1)));
  const auto end = static_cast<std::size_t>(std::clamp(to, 0.0, static_cast<double>(x.size())));
  std::size_t best = begin;
  for (std::size_t i = begin; i < end; ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

// Parabolic sub-sample refinement of a local maximum.
double refine_peak(const std::vector<double>& x, std::size_t i) {
  if (i == 0 || i + 1 >= x.size()) return static_cast<double>(i);
  const double a = x[i - 1], b = x[i], c = x[i + 1];
  const double denom = a - 2.0 * b + c;
  if (denom >= 0.0) return static_cast<double>(i);
  return static_cast<double>(i) + 0.5 * (a - c) / denom;
}

// Pitch marks locked to the waveform maximum of every voiced period, at
// sub-sample precision, so successive grains share the same phase.
// Unvoiced stretches get a fixed 10 ms grid.
std::vector<PitchMark> analysis_marks(const Waveform& w, const PitchTrack& pt) {
  const double sr = w.sample_rate;
  const double unvoiced_period = 0.01 * sr;
  std::vector<PitchMark> marks;
  double t = 0.0;
  bool prev_voiced = false;
  while (t < static_cast<double>(w.size())) {
    const double f0 = pitch_at(pt, t / sr);
    const bool voiced = f0 > 0.0;
    const double period = voiced ? sr / f0 : unvoiced_period;
    if (voiced) {
      const double from = prev_voiced ? t - 0.25 * period : t;
      const double to = prev_voiced ? t + 0.25 * period : t + period;
      const double locked = refine_peak(w.samples, strongest_in(w.samples, from, to));
      if (!marks.empty() && locked <= marks.back().pos + 0.5 * period) {
        t += 0.25 * period;
        prev_voiced = false;
        continue;
      }
      t = locked;
    }
    marks.push_back({t, period, voiced});
    prev_voiced = voiced;
    t += period;
  }
  return marks;
}

}  // namespace

Waveform psola_repitch(const Waveform& w, const PitchTrack& pt,
                       const std::function<double(double, double)>& target_f0) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.size(), 0.0);
  if (w.samples.empty()) return out;
  const double sr = w.sample_rate;
  const auto marks = analysis_marks(w, pt);
  const auto n = static_cast<long long>(w.size());

  std::size_t nearest = 0;
  double ts = marks.front().pos;
  while (ts < static_cast<double>(n)) {
    while (nearest + 1 < marks.size() &&
           std::abs(marks[nearest + 1].pos - ts) <= std::abs(marks[nearest].pos - ts))
      ++nearest;
    const PitchMark& m = marks[nearest];
    // Grains land at fractional synthesis instants; integer rounding would
    // add a rounding-jitter periodicity on top of the target period.
    const double half = std::max(1.0, m.period);
    const auto first = static_cast<long long>(std::ceil(ts - half));
    const auto last = static_cast<long long>(std::floor(ts + half));
    for (long long dst = std::max<long long>(first, 0); dst <= std::min(last, n - 1); ++dst) {
      const double offset = static_cast<double>(dst) - ts;
      const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * offset / half);
      out.samples[static_cast<std::size_t>(dst)] +=
          win * cubic_at(w.samples, m.pos + offset);
    }
    double step = m.period;
    if (m.voiced) {
      const double f0 = sr / m.period;
      const double mapped = target_f0(ts / sr, f0);
      check(mapped > 0.0 && std::isfinite(mapped), "psola: target pitch must be positive");
      step = sr / mapped;
    }
    ts += step;
  }
  const double in_rms = rms(w.samples), out_rms = rms(out.samples);
  if (out_rms > 0.0)
    for (double& v : out.samples) v *= in_rms / out_rms;
  return out;
}

Waveform shift_pitch_and_formants(const Waveform& w, const PerturbParams& p, double measured_median,
                                  const PitchConfig& pitch_cfg) {
  p.validate();
  check(measured_median > 0.0, "shift_pitch_and_formants: measured median must be positive");
  const double rho = p.formant_shift_ratio;

  // Stage 1: scale every frequency by rho, then restore the duration.
  Waveform stage1 = w;
  if (rho != 1.0) {
    stage1 = resample(w, w.sample_rate / rho);
    stage1.sample_rate = w.sample_rate;
    stage1 = time_scale(stage1, std::clamp(static_cast<double>(w.size()) / static_cast<double>(stage1.size()), 0.5, 2.0));
    fit_length(stage1.samples, w.size());
  }

  // Stage 2: envelope-preserving pitch mapping around the shifted median.
  const PitchTrack pt = estimate_pitch(stage1, pitch_cfg);
  if (!has_voiced_frames(pt)) fail("unvoiced utterance");
  const double centre = measured_median * rho;
  const double target = p.target_pitch_median;
  const double range = p.pitch_range_factor;
  Waveform out = psola_repitch(stage1, pt, [=](double, double f0) {
    return target * std::pow(f0 / centre, range);
  });
  fit_length(out.samples, w.size());
  return out;
}

// ------------------------------------------------------------------ biquads

Biquad Biquad::peaking(double sample_rate, double center_hz, double q, double gain_db) {
  const double a = std::pow(10.0, gain_db / 40.0);
  const double w0 = 2.0 * std::numbers::pi * center_hz / sample_rate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha / a;
  return {(1.0 + alpha * a) / a0, -2.0 * cw / a0, (1.0 - alpha * a) / a0, -2.0 * cw / a0,
          (1.0 - alpha / a) / a0};
}

Biquad Biquad::low_shelf(double sample_rate, double corner_hz, double gain_db) {
  const double a = std::pow(10.0, gain_db / 40.0);
  const double w0 = 2.0 * std::numbers::pi * corner_hz / sample_rate;
  const double cw = std::cos(w0);
  const double k = 2.0 * std::sqrt(a) * std::sin(w0) / 2.0 * std::numbers::sqrt2;  // shelf slope 1
  const double a0 = (a + 1.0) + (a - 1.0) * cw + k;
  return {a * ((a + 1.0) - (a - 1.0) * cw + k) / a0, 2.0 * a * ((a - 1.0) - (a + 1.0) * cw) / a0,
          a * ((a + 1.0) - (a - 1.0) * cw - k) / a0, -2.0 * ((a - 1.0) + (a + 1.0) * cw) / a0,
          ((a + 1.0) + (a - 1.0) * cw - k) / a0};
}

Biquad Biquad::high_shelf(double sample_rate, double corner_hz, double gain_db) {
  const double a = std::pow(10.0, gain_db / 40.0);
  const double w0 = 2.0 * std::numbers::pi * corner_hz / sample_rate;
  const double cw = std::cos(w0);
  const double k = 2.0 * std::sqrt(a) * std::sin(w0) / 2.0 * std::numbers::sqrt2;
  const double a0 = (a + 1.0) - (a - 1.0) * cw + k;
  return {a * ((a + 1.0) + (a - 1.0) * cw + k) / a0, -2.0 * a * ((a - 1.0) + (a + 1.0) * cw) / a0,
          a * ((a + 1.0) + (a - 1.0) * cw - k) / a0, 2.0 * ((a - 1.0) - (a + 1.0) * cw) / a0,
          ((a + 1.0) - (a - 1.0) * cw - k) / a0};
}

std::vector<double> Biquad::apply(const std::vector<double>& x) const {
  std::vector<double> y(x.size());
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double out = b0 * x[i] + s1;
    s1 = b1 * x[i] - a1 * out + s2;
    s2 = b2 * x[i] - a2 * out;
    y[i] = out;
  }
  return y;
}

std::vector<Biquad> draw_shaping_filters(double sample_rate, const ShapingConfig& cfg,
                                         std::uint64_t seed) {
  check(cfg.gain_db >= 0.0, "shaping gain_db must be non-negative");
  check(cfg.peak_min_hz > 0.0 && cfg.peak_min_hz <= cfg.peak_max_hz, "invalid shaping peak range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> gain(-cfg.gain_db, cfg.gain_db);
  std::uniform_real_distribution<double> log_center(std::log(cfg.peak_min_hz), std::log(cfg.peak_max_hz));
  const double max_hz = 0.45 * sample_rate;

  std::vector<Biquad> filters;
  const double low_gain = gain(rng);
  const double high_gain = gain(rng);
  filters.push_back(Biquad::low_shelf(sample_rate, std::min(cfg.low_shelf_hz, max_hz), low_gain));
  filters.push_back(Biquad::high_shelf(sample_rate, std::min(cfg.high_shelf_hz, max_hz), high_gain));
  for (std::size_t i = 0; i < cfg.num_peaks; ++i) {
    const double centre = std::exp(log_center(rng));
    const double g = gain(rng);
    filters.push_back(Biquad::peaking(sample_rate, std::min(centre, max_hz), cfg.peak_q, g));
  }
  return filters;
}

Waveform random_frequency_shaping(const Waveform& w, std::uint64_t seed, const ShapingConfig& cfg) {
  Waveform out = w;
  for (const auto& f : draw_shaping_filters(w.sample_rate, cfg, seed)) out.samples = f.apply(out.samples);
  // Overlapping sections can stack beyond G dB; clamp the overall level change.
  const double in_rms = rms(w.samples), out_rms = rms(out.samples);
  if (in_rms > 0.0 && out_rms > 0.0) {
    const double limit = std::pow(10.0, cfg.gain_db / 20.0);
    const double ratio = out_rms / in_rms;
    const double clamped = std::clamp(ratio, 1.0 / limit, limit);
    if (clamped != ratio)
      for (double& v : out.samples) v *= clamped / ratio;
  }
  return out;
}

Waveform perturb_speaker(const Waveform& w, std::uint64_t seed, const PerturbConfig& cfg) {
  check(!w.samples.empty(), "perturb_speaker: empty waveform");
  const PitchTrack pt = estimate_pitch(w, cfg.pitch);
  if (!has_voiced_frames(pt)) return random_frequency_shaping(w, seed, cfg.shaping);
  const double stat = cfg.statistic == PitchStatistic::kMedian ? median_voiced_pitch(pt) : mean_voiced_pitch(pt);
  const PerturbParams params = decide_conversion(stat, cfg.conversion);
  Waveform shifted;
  try {
    shifted = shift_pitch_and_formants(w, params, stat, cfg.pitch);
  } catch (const Error&) {
    // The formant stage can wash out marginal voicing; fall back to shaping.
    shifted = w;
  }
  return random_frequency_shaping(shifted, seed, cfg.shaping);
}

}  // namespace syllabion
