#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "syllabion/matrix.hpp"

namespace syllabion {

// Mono audio with samples nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  // Throws if the sample rate is not positive or a sample is not finite.
  void validate() const;
};

// T x D frame-level representation at a fixed frame rate.
struct FrameFeatures {
  Matrix data;
  double frame_rate = 50.0;

  std::size_t num_frames() const { return data.rows(); }
  std::size_t dim() const { return data.cols(); }
  double duration() const { return static_cast<double>(data.rows()) / frame_rate; }
  void validate() const;
};

struct AlignmentEntry {
  double start = 0.0;  // seconds
  double end = 0.0;    // seconds
  std::string label;

  bool operator==(const AlignmentEntry&) const = default;
};

struct UtteranceRecord {
  std::string utterance_id;
  std::string speaker_id;
  std::optional<std::string> audio;
  std::optional<std::string> features;
  std::optional<std::vector<AlignmentEntry>> alignments;
  // Set when two reference entries overlap in time. Such entries are kept.
  bool overlapping_alignments = false;
};

enum class WavEncoding { kPcm16, kFloat32 };

Waveform read_wav(const std::filesystem::path& path);
void write_wav(const Waveform& w, const std::filesystem::path& path,
               WavEncoding encoding = WavEncoding::kPcm16);

// Raw STNS container: any rank >= 1, f32 payload.
struct StnsTensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> values;
};

inline constexpr std::uint32_t kStnsVersion = 1;
inline constexpr std::uint32_t kStnsDtypeF32 = 1;

StnsTensor read_stns(const std::filesystem::path& path);
void write_stns(const StnsTensor& t, const std::filesystem::path& path);

// Rank-2 tensors map to T x D; rank-1 tensors are read as T x 1. Values are
// widened from f32, so write_tensor(read_tensor(p)) reproduces p bit-exactly.
FrameFeatures read_tensor(const std::filesystem::path& path, double frame_rate = 50.0);
void write_tensor(const FrameFeatures& t, const std::filesystem::path& path);

StnsTensor to_stns(const Matrix& m);
Matrix from_stns(const StnsTensor& t);

// JSON-lines manifest. Relative audio/feature paths are resolved against the
// manifest's directory. Alignments come back sorted by start time.
std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);
std::vector<UtteranceRecord> parse_manifest(const std::string& text,
                                            const std::filesystem::path& base_dir = {});
void write_manifest(const std::vector<UtteranceRecord>& records,
                    const std::filesystem::path& path);

}  // namespace syllabion
