#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "syllabion/clusterer.hpp"
#include "syllabion/config.hpp"
#include "syllabion/evaluator.hpp"
#include "syllabion/io.hpp"
#include "syllabion/neural.hpp"
#include "syllabion/segmenter.hpp"

namespace syllabion {

// Stored features when present, otherwise log-mel features of the audio.
std::vector<FrameFeatures> load_features(const std::vector<UtteranceRecord>& records, const FeaturizerConfig& cfg,
                                         std::size_t workers = 1);

struct TrainedModel {
  EncoderConfig encoder;
  ParamStore params;  // student store
};

TrainedModel load_model(const std::filesystem::path& checkpoint_dir);

// Hidden states of one encoder layer for every utterance.
std::vector<FrameFeatures> encode_corpus(const TrainedModel& model, const std::vector<FrameFeatures>& features,
                                         std::size_t layer, std::size_t workers = 1);

struct SegmentedUtterance {
  Segmentation segmentation;
  Matrix pooled;
  double frame_rate = 50.0;
};

std::vector<SegmentedUtterance> segment_corpus(const std::vector<FrameFeatures>& features,
                                               const SegmenterConfig& cfg, std::size_t workers = 1);

// Re-pools stored segmentations over (possibly different) features.
std::vector<SegmentedUtterance> pool_corpus(const std::vector<FrameFeatures>& features,
                                            const std::vector<Segmentation>& segmentations);

Codebook fit_corpus_codebook(const std::vector<SegmentedUtterance>& segmented, const ClustererConfig& cfg);

std::vector<std::vector<UnitToken>> assign_corpus(const std::vector<SegmentedUtterance>& segmented,
                                                  const Codebook& codebook);

struct CorpusScores {
  BoundaryScores boundaries;
  UnitQualityScores units;
  std::size_t evaluated_utterances = 0;
};

// Only records carrying alignments are scored.
BoundaryCounts corpus_boundary_counts(const std::vector<UtteranceRecord>& records,
                                      const std::vector<SegmentedUtterance>& segmented, double tolerance);
JointCounts corpus_joint_counts(const std::vector<UtteranceRecord>& records,
                                const std::vector<SegmentedUtterance>& segmented,
                                const std::vector<std::vector<UnitToken>>& tokens);
CorpusScores evaluate_corpus(const std::vector<UtteranceRecord>& records,
                             const std::vector<SegmentedUtterance>& segmented,
                             const std::vector<std::vector<UnitToken>>& tokens, double tolerance);

// Column names of the report tables, in order.
const std::vector<std::string>& score_columns();
std::vector<double> score_values(const CorpusScores& s);
nlohmann::json scores_to_json(const CorpusScores& s);

struct SpeakerScores {
  double probe_accuracy = 0.0;
  double chance = 0.0;
  std::optional<double> unit_nmi;  // when unit tokens are available
};

// Probe on per-utterance mean features; NMI between utterance speaker and
// each token's unit.
SpeakerScores evaluate_speakers(const std::vector<UtteranceRecord>& records,
                                const std::vector<FrameFeatures>& features,
                                const std::vector<std::vector<UnitToken>>* tokens, const EvalConfig& cfg);

// Full run: features -> (train) -> encode -> segment -> cluster -> eval.
// Writes report.json, segments.jsonl and units.jsonl under paths.out_dir and
// returns the report. A failing stage is named in the error.
nlohmann::json run_pipeline(const Config& cfg, std::size_t workers = 1);

struct LayerSweepRow {
  std::size_t layer = 0;
  CorpusScores scores;
};

// Segment, cluster and score each layer's representations.
std::vector<LayerSweepRow> layer_sweep(const std::vector<std::size_t>& layers,
                                       const std::function<std::vector<FrameFeatures>(std::size_t)>& features_for_layer,
                                       const std::vector<UtteranceRecord>& records, const Config& cfg,
                                       std::size_t workers = 1);
void write_sweep_csv(const std::vector<LayerSweepRow>& rows, const std::filesystem::path& path);

// Min-max normalized similarity image (P5 PGM, maxval 255) at
// <prefix>.pgm and predicted/reference boundary frames at <prefix>.csv.
void plot_ssm(const Matrix& z, const Segmentation& predicted, const std::vector<std::size_t>& reference,
              const std::filesystem::path& prefix);

// JSON-lines segment and unit records.
void write_segments(const std::vector<UtteranceRecord>& records, const std::vector<SegmentedUtterance>& segmented,
                    const std::filesystem::path& path);
std::vector<Segmentation> read_segments(const std::vector<UtteranceRecord>& records,
                                        const std::filesystem::path& path);
void write_units(const std::vector<UtteranceRecord>& records, const std::vector<std::vector<UnitToken>>& tokens,
                 const std::filesystem::path& path);
std::vector<std::vector<UnitToken>> read_units(const std::vector<UtteranceRecord>& records,
                                               const std::filesystem::path& path);

void save_codebook(const Codebook& cb, const std::filesystem::path& dir);
Codebook load_codebook(const std::filesystem::path& dir);

}  // namespace syllabion
