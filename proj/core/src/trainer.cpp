#include "syllabion/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "syllabion/error.hpp"
#include "syllabion/parallel.hpp"

namespace syllabion {

namespace {

constexpr double kNormFloor = 1e-12;

bool is_predictor(const std::string& name) { return name.starts_with(std::string(kPredictorPrefix) + "."); }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::size_t target_depth(const TrainState& s) { return s.byol.target_layer.value_or(s.encoder.n_layers); }

struct TeacherPass {
  std::vector<Encoder::Cache> encoder;
  MlpHead::Cache projector;
};

Matrix teacher_forward(const TrainState& state, const std::vector<const Matrix*>& clean, TeacherPass* pass) {
  const Encoder enc = Encoder::bind(state.teacher, kEncoderPrefix, state.encoder);
  const std::size_t depth = target_depth(state);
  std::vector<Matrix> hidden;
  hidden.reserve(clean.size());
  for (const Matrix* x : clean) {
    auto cache = enc.forward(state.teacher, *x, depth);
    hidden.push_back(cache.layer_outputs.back());
    if (pass) pass->encoder.push_back(std::move(cache));
  }
  Matrix stacked = vstack(hidden);
  if (state.byol.target_layer) return stacked;
  const MlpHead proj = MlpHead::bind(state.teacher, kProjectorPrefix);
  return proj.forward(state.teacher, stacked, NormMode::kTrain, pass ? &pass->projector : nullptr);
}

}  // namespace

void ByolConfig::validate(const EncoderConfig& enc) const {
  check(momentum >= 0.0 && momentum <= 1.0, "byol: momentum must lie in [0, 1]");
  check(batch_seconds > 0.0, "byol: batch_seconds must be > 0");
  check(epochs >= 1, "byol: epochs must be >= 1");
  check(projector.hidden >= 1 && projector.out >= 1 && predictor.hidden >= 1 && predictor.out >= 1,
        "byol: head dims must be >= 1");
  if (target_layer) {
    check(*target_layer <= enc.n_layers, "byol: target_layer " + std::to_string(*target_layer) +
                                             " exceeds n_layers " + std::to_string(enc.n_layers));
    check(predictor.out == enc.d_model, "byol: predictor output " + std::to_string(predictor.out) +
                                            " must equal d_model " + std::to_string(enc.d_model) +
                                            " when targeting a layer");
  } else {
    check(predictor.out == projector.out, "byol: predictor output must equal projector output");
  }
}

TrainState init_train_state(const EncoderConfig& enc, const ByolConfig& cfg, long long total_steps,
                            const ParamStore* pretrained) {
  enc.validate();
  cfg.validate(enc);
  TrainState s;
  s.encoder = enc;
  s.byol = cfg;
  s.byol.schedule.total_steps = total_steps;
  s.byol.schedule.validate();
  std::mt19937_64 rng(cfg.seed);
  Encoder::create(s.student, kEncoderPrefix, enc, rng);
  const InitSpec head{0.0, true, true};
  MlpHead::create(s.student, kProjectorPrefix, enc.d_model, cfg.projector, rng, head);
  MlpHead::create(s.student, kPredictorPrefix, cfg.projector.out, cfg.predictor, rng, head);
  if (pretrained) {
    for (std::size_t i = 0; i < s.student.size(); ++i) {
      const Param& p = s.student[i];
      if (p.reinitialized) continue;
      const auto j = pretrained->find(p.name);
      if (!j) continue;
      const Matrix& src = pretrained->value(*j);
      check(src.rows() == p.value.rows() && src.cols() == p.value.cols(),
            "pretrained tensor '" + p.name + "' has the wrong shape");
      s.student.value(i) = src;
    }
  }
  s.teacher = s.student.filtered([](const std::string& n) { return !is_predictor(n); }, false);
  s.optimizer = make_adamw_state(s.student);
  return s;
}

std::vector<double> byol_frame_losses(const Matrix& student_out, const Matrix& teacher_out) {
  check(student_out.rows() == teacher_out.rows() && student_out.cols() == teacher_out.cols(),
        "byol_loss: shape mismatch");
  std::vector<double> out(student_out.rows());
  for (std::size_t r = 0; r < student_out.rows(); ++r) {
    const auto s = student_out.row(r), t = teacher_out.row(r);
    const double ns = std::max(std::sqrt(dot(s, s)), kNormFloor);
    const double nt = std::max(std::sqrt(dot(t, t)), kNormFloor);
    double l = 0.0;
    for (std::size_t c = 0; c < s.size(); ++c) {
      const double d = s[c] / ns - t[c] / nt;
      l += d * d;
    }
    out[r] = l;
  }
  return out;
}

double byol_loss(const Matrix& student_out, const Matrix& teacher_out, Matrix* grad_student,
                 Matrix* grad_teacher) {
  const auto frames = byol_frame_losses(student_out, teacher_out);
  check(!frames.empty(), "byol_loss: no frames");
  const double inv_t = 1.0 / static_cast<double>(frames.size());
  // d||a^ - b^||^2 / da = (2 / |a|) (cos * a^ - b^)
  auto grad = [&](const Matrix& a, const Matrix& b, Matrix& out) {
    out = Matrix(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const auto ar = a.row(r), br = b.row(r);
      const double na = std::max(std::sqrt(dot(ar, ar)), kNormFloor);
      const double nb = std::max(std::sqrt(dot(br, br)), kNormFloor);
      const double cos = dot(ar, br) / (na * nb);
      for (std::size_t c = 0; c < ar.size(); ++c)
        out(r, c) = inv_t * 2.0 / na * (cos * ar[c] / na - br[c] / nb);
    }
  };
  if (grad_student) grad(student_out, teacher_out, *grad_student);
  if (grad_teacher) grad(teacher_out, student_out, *grad_teacher);
  return std::accumulate(frames.begin(), frames.end(), 0.0) * inv_t;
}

void ema_update(ParamStore& teacher, const ParamStore& student, double momentum) {
  check(momentum >= 0.0 && momentum <= 1.0, "ema_update: momentum must lie in [0, 1]");
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const auto j = student.find(teacher[i].name);
    check(j.has_value(), "ema_update: student has no tensor '" + teacher[i].name + "'");
    const Matrix& theta = student.value(*j);
    Matrix& xi = teacher.value(i);
    check(theta.rows() == xi.rows() && theta.cols() == xi.cols(),
          "ema_update: shape mismatch for '" + teacher[i].name + "'");
    if (momentum == 1.0) continue;
    for (std::size_t k = 0; k < xi.size(); ++k) {
      double& x = xi.data()[k];
      const double y = theta.data()[k];
      if (x != y) x = momentum * x + (1.0 - momentum) * y;
    }
  }
}

Matrix teacher_targets(const TrainState& state, const std::vector<Matrix>& clean) {
  std::vector<const Matrix*> ptrs;
  for (const auto& m : clean) ptrs.push_back(&m);
  return teacher_forward(state, ptrs, nullptr);
}

StepResult train_step(TrainState& state, const std::vector<TrainPair>& batch, const StepOptions& opts) {
  check(!batch.empty(), "train_step: empty batch");
  std::vector<const Matrix*> clean;
  for (const auto& p : batch) {
    check(p.clean.rows() == p.perturbed.rows() && p.clean.cols() == p.perturbed.cols(),
          "train_step: clean and perturbed inputs differ in shape");
    clean.push_back(&p.clean);
  }
  StepResult result;
  const auto& sched = state.byol.schedule;
  result.warmup = static_cast<double>(state.step) < sched.warmup_steps();
  result.lr = lr_at(sched, std::min(state.step, sched.total_steps));

  const Encoder enc = Encoder::bind(state.student, kEncoderPrefix, state.encoder);
  const MlpHead proj = MlpHead::bind(state.student, kProjectorPrefix);
  const MlpHead pred = MlpHead::bind(state.student, kPredictorPrefix);

  std::vector<Encoder::Cache> enc_caches;
  std::vector<Matrix> hidden;
  for (const auto& p : batch) {
    enc_caches.push_back(enc.forward(state.student, p.perturbed));
    hidden.push_back(enc_caches.back().layer_outputs.back());
  }
  MlpHead::Cache proj_cache, pred_cache;
  const Matrix projected =
      proj.forward(state.student, vstack(hidden), NormMode::kTrain, &proj_cache, &state.student);
  const Matrix predicted = pred.forward(state.student, projected, NormMode::kTrain, &pred_cache, &state.student);

  TeacherPass teacher_pass;
  const Matrix targets = teacher_forward(state, clean, opts.stop_gradient ? nullptr : &teacher_pass);

  Matrix d_pred, d_target;
  result.loss = byol_loss(predicted, targets, &d_pred, opts.stop_gradient ? nullptr : &d_target);
  check(std::isfinite(result.loss), "train_step: non-finite loss at step " + std::to_string(state.step));

  Grads grads(state.student);
  const Matrix d_hidden = proj.backward(state.student, proj_cache,
                                        pred.backward(state.student, pred_cache, d_pred, &grads), &grads);
  std::size_t row = 0;
  for (std::size_t u = 0; u < batch.size(); ++u) {
    const std::size_t t = batch[u].perturbed.rows();
    std::vector<Matrix> layer_grads(state.encoder.n_layers + 1);
    layer_grads.back() = d_hidden.slice_rows(row, row + t);
    enc.backward(state.student, enc_caches[u], layer_grads, &grads);
    row += t;
  }

  Grads teacher_grads(state.teacher);
  if (!opts.stop_gradient) {
    const Encoder tenc = Encoder::bind(state.teacher, kEncoderPrefix, state.encoder);
    Matrix d_teacher_hidden = d_target;
    if (!state.byol.target_layer) {
      const MlpHead tproj = MlpHead::bind(state.teacher, kProjectorPrefix);
      d_teacher_hidden = tproj.backward(state.teacher, teacher_pass.projector, d_target, &teacher_grads);
    }
    row = 0;
    for (std::size_t u = 0; u < batch.size(); ++u) {
      const std::size_t t = batch[u].clean.rows();
      std::vector<Matrix> layer_grads(target_depth(state) + 1);
      layer_grads.back() = d_teacher_hidden.slice_rows(row, row + t);
      tenc.backward(state.teacher, teacher_pass.encoder[u], layer_grads, &teacher_grads);
      row += t;
    }
  }
  result.teacher_grad_norm = std::sqrt(teacher_grads.squared_norm());

  if (opts.apply_update) {
    std::function<bool(const Param&)> filter;
    if (result.warmup) filter = [](const Param& p) { return p.reinitialized; };
    adamw_step(state.student, grads, state.optimizer, result.lr, state.byol.adamw, filter);
    ema_update(state.teacher, state.student, state.byol.momentum);
    ++state.step;
  }
  return result;
}

TrainingCorpus corpus_from_manifest(const std::vector<UtteranceRecord>& records, const FeaturizerConfig& feat,
                                    const PerturbConfig& perturb, std::uint64_t seed) {
  TrainingCorpus corpus;
  for (const auto& r : records) {
    corpus.ids.push_back(r.utterance_id);
    if (r.audio)
      corpus.durations.push_back(read_wav(*r.audio).duration());
    else if (r.features)
      corpus.durations.push_back(read_tensor(*r.features).duration());
    else
      fail("utterance '" + r.utterance_id + "' has neither audio nor features");
  }
  corpus.load = [records, feat, perturb, seed](std::size_t i, std::size_t epoch) {
    const auto& r = records.at(i);
    if (!r.audio) {
      Matrix x = read_tensor(*r.features).data;
      return TrainPair{x, x};
    }
    const Waveform w = read_wav(*r.audio);
    return TrainPair{log_mel(w, feat).data, log_mel(perturb_speaker(w, mix_seed(seed, epoch, i), perturb), feat).data};
  };
  return corpus;
}

std::vector<std::vector<std::vector<std::size_t>>> plan_batches(const std::vector<double>& durations,
                                                                double batch_seconds, std::size_t epochs,
                                                                std::uint64_t seed) {
  check(batch_seconds > 0.0, "plan_batches: batch_seconds must be > 0");
  std::vector<std::vector<std::vector<std::size_t>>> plan(epochs);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<std::size_t> order(durations.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, e, 0x5eed));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> current;
    double filled = 0.0;
    for (std::size_t i : order) {
      if (!current.empty() && filled + durations[i] > batch_seconds) {
        plan[e].push_back(std::move(current));
        current.clear();
        filled = 0.0;
      }
      current.push_back(i);
      filled += durations[i];
    }
    if (!current.empty()) plan[e].push_back(std::move(current));
  }
  return plan;
}

nlohmann::json encoder_config_to_json(const EncoderConfig& cfg) {
  return {{"input_dim", cfg.input_dim}, {"n_layers", cfg.n_layers},           {"d_model", cfg.d_model},
          {"n_heads", cfg.n_heads},     {"d_ff", cfg.d_ff},                   {"reinit_last_n", cfg.reinit_last_n},
          {"freeze_input_projection", cfg.freeze_input_projection}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig cfg;
  try {
    cfg.input_dim = j.at("input_dim").get<std::size_t>();
    cfg.n_layers = j.at("n_layers").get<std::size_t>();
    cfg.d_model = j.at("d_model").get<std::size_t>();
    cfg.n_heads = j.at("n_heads").get<std::size_t>();
    cfg.d_ff = j.at("d_ff").get<std::size_t>();
    cfg.reinit_last_n = j.at("reinit_last_n").get<std::size_t>();
    cfg.freeze_input_projection = j.at("freeze_input_projection").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail("invalid encoder config: " + std::string(e.what()));
  }
  cfg.validate();
  return cfg;
}

Checkpoint to_checkpoint(const TrainState& state) {
  Checkpoint ckpt;
  ckpt.stores["student"] = state.student;
  ckpt.stores["teacher"] = state.teacher;
  ckpt.step = state.step;
  ckpt.meta["encoder"] = encoder_config_to_json(state.encoder);
  ckpt.meta["projector"] = {{"hidden", state.byol.projector.hidden}, {"out", state.byol.projector.out}};
  ckpt.meta["predictor"] = {{"hidden", state.byol.predictor.hidden}, {"out", state.byol.predictor.out}};
  ckpt.meta["momentum"] = state.byol.momentum;
  ckpt.meta["target_layer"] =
      state.byol.target_layer ? nlohmann::json(*state.byol.target_layer) : nlohmann::json("projector");
  return ckpt;
}

std::pair<EncoderConfig, ParamStore> student_from_checkpoint(const Checkpoint& ckpt) {
  check(ckpt.meta.contains("encoder"), "checkpoint has no encoder config");
  const auto it = ckpt.stores.find("student");
  check(it != ckpt.stores.end(), "checkpoint has no student parameters");
  return {encoder_config_from_json(ckpt.meta.at("encoder")), it->second};
}

void write_loss_csv(const std::vector<LossRecord>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  check(static_cast<bool>(out), "cannot write " + path.string());
  out.precision(10);
  out << "step,lr,loss\n";
  for (const auto& r : log) out << r.step << ',' << r.lr << ',' << r.loss << '\n';
  check(static_cast<bool>(out), "cannot write " + path.string());
}

TrainResult run_training(const TrainingCorpus& corpus, const EncoderConfig& enc, const ByolConfig& cfg,
                         const TrainOptions& opts) {
  check(!corpus.durations.empty(), "run_training: empty manifest");
  check(static_cast<bool>(corpus.load), "run_training: corpus has no loader");
  const auto plan = plan_batches(corpus.durations, cfg.batch_seconds, cfg.epochs, cfg.seed);
  long long total = 0;
  for (const auto& epoch : plan) total += static_cast<long long>(epoch.size());

  TrainResult result{init_train_state(enc, cfg, total, opts.pretrained), {}};
  result.log.reserve(static_cast<std::size_t>(total));
  for (std::size_t e = 0; e < plan.size(); ++e) {
    for (const auto& indices : plan[e]) {
      std::vector<TrainPair> batch(indices.size());
      parallel_for(indices.size(), opts.workers, [&](std::size_t k) { batch[k] = corpus.load(indices[k], e); });
      const long long step = result.state.step;
      const StepResult r = train_step(result.state, batch);
      result.log.push_back({step, r.lr, r.loss});
    }
    if (opts.out_dir)
      save_checkpoint(to_checkpoint(result.state), *opts.out_dir / "checkpoints" / ("epoch_" + std::to_string(e + 1)));
  }
  if (opts.out_dir) write_loss_csv(result.log, *opts.out_dir / "loss.csv");
  return result;
}

}  // namespace syllabion
