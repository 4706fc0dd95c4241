#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "syllabion/checkpoint.hpp"
#include "syllabion/dsp.hpp"
#include "syllabion/featurize.hpp"
#include "syllabion/io.hpp"
#include "syllabion/neural.hpp"

namespace syllabion {

struct ByolConfig {
  double momentum = 0.999;
  std::size_t epochs = 15;
  double batch_seconds = 360.0;  // clean audio per batch
  // Empty: targets are teacher projections. Otherwise raw hidden states of
  // this teacher layer, and the predictor must output d_model.
  std::optional<std::size_t> target_layer;
  std::uint64_t seed = 0;
  MlpHeadConfig projector{2048, 256};
  MlpHeadConfig predictor{2048, 256};
  LrSchedule schedule;  // total_steps is filled in from the batch plan
  AdamWConfig adamw;

  void validate(const EncoderConfig& enc) const;
};

inline constexpr const char* kEncoderPrefix = "encoder";
inline constexpr const char* kProjectorPrefix = "projector";
inline constexpr const char* kPredictorPrefix = "predictor";

// Student: encoder + projector + predictor. Teacher: encoder + projector,
// all tensors non-trainable.
struct TrainState {
  EncoderConfig encoder;
  ByolConfig byol;
  ParamStore student;
  ParamStore teacher;
  AdamWState optimizer;
  long long step = 0;
};

// Student initialized from `seed`; tensors of `pretrained` whose names match
// non-reinitialized student tensors are copied in. Teacher is a copy.
TrainState init_train_state(const EncoderConfig& enc, const ByolConfig& cfg, long long total_steps,
                            const ParamStore* pretrained = nullptr);

// Frame-wise MSE of row-normalized outputs, averaged over rows.
// grad_student receives dL/d(student_out) when non-null.
double byol_loss(const Matrix& student_out, const Matrix& teacher_out, Matrix* grad_student = nullptr,
                 Matrix* grad_teacher = nullptr);
// Per-row loss values, each in [0, 4].
std::vector<double> byol_frame_losses(const Matrix& student_out, const Matrix& teacher_out);

// xi <- m * xi + (1 - m) * theta over every teacher tensor, buffers included.
void ema_update(ParamStore& teacher, const ParamStore& student, double momentum);

// Teacher targets for a batch of clean inputs, rows stacked in batch order.
Matrix teacher_targets(const TrainState& state, const std::vector<Matrix>& clean);

struct TrainPair {
  Matrix clean;      // T x input_dim
  Matrix perturbed;  // same shape
};

struct StepOptions {
  // Disabling the stop-gradient backpropagates the loss into the teacher and
  // reports its gradient; the teacher is still never updated by it.
  bool stop_gradient = true;
  bool apply_update = true;
};

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
  double teacher_grad_norm = 0.0;
  bool warmup = false;
};

StepResult train_step(TrainState& state, const std::vector<TrainPair>& batch, const StepOptions& opts = {});

// A corpus exposes durations up front so the full batch plan, and with it the
// LR schedule length, is known before training starts.
struct TrainingCorpus {
  std::vector<std::string> ids;
  std::vector<double> durations;  // seconds of clean audio
  // Loads example i for the given epoch; must be deterministic.
  std::function<TrainPair(std::size_t index, std::size_t epoch)> load;
};

// Manifest records with audio are featurized clean and after perturb_speaker
// (seed mixed from cfg seed, epoch and index); feature-only records train with
// identical clean and perturbed inputs.
TrainingCorpus corpus_from_manifest(const std::vector<UtteranceRecord>& records, const FeaturizerConfig& feat,
                                    const PerturbConfig& perturb, std::uint64_t seed);

// Per epoch: shuffled utterance order packed greedily into batches of at most
// batch_seconds (at least one utterance each).
std::vector<std::vector<std::vector<std::size_t>>> plan_batches(const std::vector<double>& durations,
                                                                double batch_seconds, std::size_t epochs,
                                                                std::uint64_t seed);

struct LossRecord {
  long long step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints/epoch_N and loss.csv
  std::size_t workers = 1;
  const ParamStore* pretrained = nullptr;
};

struct TrainResult {
  TrainState state;
  std::vector<LossRecord> log;
};

TrainResult run_training(const TrainingCorpus& corpus, const EncoderConfig& enc, const ByolConfig& cfg,
                         const TrainOptions& opts = {});

Checkpoint to_checkpoint(const TrainState& state);
// Encoder config and the student store saved by to_checkpoint.
std::pair<EncoderConfig, ParamStore> student_from_checkpoint(const Checkpoint& ckpt);

void write_loss_csv(const std::vector<LossRecord>& log, const std::filesystem::path& path);

nlohmann::json encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

}  // namespace syllabion
