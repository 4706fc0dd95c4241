#pragma once

#include "syllabion/io.hpp"
#include "syllabion/matrix.hpp"

namespace syllabion {

struct FeaturizerConfig {
  std::size_t n_fft = 400;
  std::size_t hop = 320;  // 20 ms at 16 kHz -> 50 frames/s
  std::size_t n_mels = 40;
  double fmin = 0.0;
  double fmax = 8000.0;

  void validate(double sample_rate) const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// n_mels x (n_fft/2 + 1) triangular filterbank on the HTK mel scale.
Matrix mel_filterbank(const FeaturizerConfig& cfg, double sample_rate);

// Hann-windowed power spectrum -> mel filterbank -> log(x + 1e-6).
// T = 1 + floor((len - n_fft) / hop), frame_rate = sample_rate / hop.
FrameFeatures log_mel(const Waveform& w, const FeaturizerConfig& cfg = {});

inline constexpr double kLogMelFloor = 1e-6;

}  // namespace syllabion
