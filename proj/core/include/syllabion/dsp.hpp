#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "syllabion/io.hpp"

namespace syllabion {

// ------------------------------------------------------------------ pitch

struct PitchTrack {
  std::vector<double> values;  // f0 in Hz per hop, 0 = unvoiced
  double hop = 0.01;           // seconds
};

struct PitchConfig {
  double min_f0 = 50.0;
  double max_f0 = 600.0;
  double hop_seconds = 0.01;
  double window_seconds = 0.025;
  // First dip of the cumulative-mean-normalized difference below this is taken as the period.
  double dip_threshold = 0.15;
  // Frames whose best normalized difference stays above this are unvoiced.
  double voicing_threshold = 0.35;
  double silence_rms = 1e-4;
};

// YIN-style autocorrelation pitch tracker, one estimate per hop.
PitchTrack estimate_pitch(const Waveform& w, const PitchConfig& cfg = {});

// Median over voiced frames (even counts average the two middle values).
// Throws "unvoiced utterance" when no frame is voiced.
double median_voiced_pitch(const PitchTrack& pt);
double mean_voiced_pitch(const PitchTrack& pt);
bool has_voiced_frames(const PitchTrack& pt);

// ------------------------------------------------------------------ conversion routing

struct PerturbParams {
  double formant_shift_ratio = 1.0;
  double target_pitch_median = 0.0;  // Hz
  double pitch_range_factor = 1.0;

  void validate() const;
  bool operator==(const PerturbParams&) const = default;
};

struct ConversionConfig {
  double threshold_hz = 155.0;
  PerturbParams male_to_female{1.1, 300.0, 1.2};
  PerturbParams female_to_male{1.0 / 1.1, 100.0, 1.0 / 1.2};
};

enum class PitchStatistic { kMedian, kMean };

// Strictly above the threshold -> female-to-male, otherwise male-to-female.
PerturbParams decide_conversion(double pitch_stat, const ConversionConfig& cfg = {});

// ------------------------------------------------------------------ signal primitives

// Windowed-sinc (Kaiser) resampling to new_rate. Output length is
// round(len * new_rate / old_rate).
Waveform resample(const Waveform& w, double new_rate);

// WSOLA time-scale modification. Output length is round(len * factor);
// factor must lie in [0.5, 2.0].
Waveform time_scale(const Waveform& w, double factor);

// TD-PSOLA: re-spaces pitch-synchronous grains so the voiced f0 at time t
// becomes target_f0(t, f0). The spectral envelope of each grain is kept.
// Output has the input length exactly.
Waveform psola_repitch(const Waveform& w, const PitchTrack& pt,
                       const std::function<double(double, double)>& target_f0);

// Formant shift by resample + time-scale, then pitch mapping by PSOLA so the
// output median f0 lands on p.target_pitch_median and log-f0 excursions
// around the median are scaled by p.pitch_range_factor.
Waveform shift_pitch_and_formants(const Waveform& w, const PerturbParams& p, double measured_median,
                                  const PitchConfig& pitch_cfg = {});

// ------------------------------------------------------------------ frequency shaping

// RBJ-cookbook biquad, normalized so a0 = 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;

  static Biquad peaking(double sample_rate, double center_hz, double q, double gain_db);
  static Biquad low_shelf(double sample_rate, double corner_hz, double gain_db);
  static Biquad high_shelf(double sample_rate, double corner_hz, double gain_db);

  // Transposed direct form II, zero initial state.
  std::vector<double> apply(const std::vector<double>& x) const;
};

struct ShapingConfig {
  double gain_db = 6.0;  // gains drawn uniformly in [-gain_db, +gain_db]
  double low_shelf_hz = 250.0;
  double high_shelf_hz = 4000.0;
  std::size_t num_peaks = 2;
  double peak_min_hz = 200.0;
  double peak_max_hz = 6000.0;
  double peak_q = 1.0;
};

// The random filter cascade realized for a given seed.
std::vector<Biquad> draw_shaping_filters(double sample_rate, const ShapingConfig& cfg,
                                         std::uint64_t seed);

// Applies the seeded cascade; the output RMS is held inside
// [rms * 10^(-G/20), rms * 10^(G/20)].
Waveform random_frequency_shaping(const Waveform& w, std::uint64_t seed,
                                  const ShapingConfig& cfg = {});

// ------------------------------------------------------------------ full perturbation

struct PerturbConfig {
  ConversionConfig conversion;
  ShapingConfig shaping;
  PitchConfig pitch;
  PitchStatistic statistic = PitchStatistic::kMedian;
};

// estimate_pitch -> decide_conversion -> shift_pitch_and_formants ->
// random_frequency_shaping. Unvoiced input gets shaping only.
Waveform perturb_speaker(const Waveform& w, std::uint64_t seed, const PerturbConfig& cfg = {});

}  // namespace syllabion
