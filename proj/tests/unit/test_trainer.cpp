#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "synthetic.hpp"
#include "syllabion/checkpoint.hpp"
#include "syllabion/error.hpp"
#include "syllabion/trainer.hpp"

namespace fs = std::filesystem;
using namespace syllabion;
using syllabion::testing::random_matrix;

namespace {

EncoderConfig tiny_encoder(std::size_t input_dim = 6) { return {input_dim, 2, 16, 2, 32, 1, false}; }

ByolConfig tiny_byol() {
  ByolConfig cfg;
  cfg.projector = {24, 8};
  cfg.predictor = {24, 8};
  cfg.momentum = 0.99;
  cfg.seed = 5;
  return cfg;
}

std::vector<TrainPair> random_batch(std::mt19937_64& rng, std::size_t input_dim = 6) {
  std::vector<TrainPair> batch;
  for (std::size_t t : {7u, 5u}) batch.push_back({random_matrix(t, input_dim, rng), random_matrix(t, input_dim, rng)});
  return batch;
}

bool stores_equal(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || !(a.value(i) == b.value(i))) return false;
  return true;
}

}  // namespace

TEST(ByolLoss, ReferenceValues) {
  std::mt19937_64 rng(1);
  const Matrix a = random_matrix(5, 4, rng);
  EXPECT_NEAR(byol_loss(a, a), 0.0, 1e-15);
  EXPECT_NEAR(byol_loss(a, a * -3.0), 4.0, 1e-12);
  EXPECT_NEAR(byol_loss(Matrix{{1, 0}, {0, 2}}, Matrix{{0, 5}, {-1, 0}}), 2.0, 1e-15);
  EXPECT_THROW(byol_loss(a, random_matrix(5, 3, rng)), Error);
}

TEST(ByolLoss, FrameLossesAreBoundedAndMonotoneInCosine) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = random_matrix(6, 5, rng), b = random_matrix(6, 5, rng);
    for (double l : byol_frame_losses(a, b)) {
      EXPECT_GE(l, 0.0);
      EXPECT_LE(l, 4.0);
    }
  }
  // Rotate the student row towards the target: cosine rises, loss falls.
  const Matrix target{{1.0, 0.0}};
  double prev = 5.0;
  for (double angle = 3.1; angle >= 0.0; angle -= 0.1) {
    const double l = byol_loss(Matrix{{std::cos(angle), std::sin(angle)}}, target);
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(ByolLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  Matrix a = random_matrix(4, 3, rng);
  const Matrix b = random_matrix(4, 3, rng);
  Matrix ga, gb;
  byol_loss(a, b, &ga, &gb);
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double orig = a.data()[k];
    a.data()[k] = orig + 1e-6;
    const double lp = byol_loss(a, b);
    a.data()[k] = orig - 1e-6;
    const double lm = byol_loss(a, b);
    a.data()[k] = orig;
    EXPECT_NEAR(ga.data()[k], (lp - lm) / 2e-6, 1e-7);
  }
  Matrix bb = b;
  for (std::size_t k = 0; k < b.size(); ++k) {
    const double orig = bb.data()[k];
    bb.data()[k] = orig + 1e-6;
    const double lp = byol_loss(a, bb);
    bb.data()[k] = orig - 1e-6;
    const double lm = byol_loss(a, bb);
    bb.data()[k] = orig;
    EXPECT_NEAR(gb.data()[k], (lp - lm) / 2e-6, 1e-7);
  }
}

TEST(Ema, ReferenceValues) {
  ParamStore teacher, student;
  teacher.add({"w", Matrix{{1.0}}, false});
  student.add({"w", Matrix{{0.0}}});
  student.add({"predictor.x", Matrix{{9.0}}});
  ema_update(teacher, student, 0.999);
  EXPECT_DOUBLE_EQ(teacher.value("w")(0, 0), 0.999);
  EXPECT_FALSE(teacher.contains("predictor.x"));
  ema_update(teacher, student, 1.0);
  EXPECT_DOUBLE_EQ(teacher.value("w")(0, 0), 0.999);
  ema_update(teacher, student, 0.0);
  EXPECT_EQ(teacher.value("w")(0, 0), 0.0);
  ParamStore other;
  other.add({"v", Matrix{{0.0}}});
  EXPECT_THROW(ema_update(teacher, other, 0.5), Error);
}

TEST(Ema, ClosedFormOverManySteps) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  const double m = 0.99;
  ParamStore teacher, student;
  teacher.add({"w", Matrix{{2.5}}, false});
  student.add({"w", Matrix{{0.0}}});
  std::vector<double> thetas;
  for (int k = 0; k < 300; ++k) {
    thetas.push_back(g(rng));
    student.value("w")(0, 0) = thetas.back();
    ema_update(teacher, student, m);
  }
  const auto k = static_cast<double>(thetas.size());
  double expected = std::pow(m, k) * 2.5;
  for (std::size_t i = 0; i < thetas.size(); ++i)
    expected += (1.0 - m) * std::pow(m, k - static_cast<double>(i + 1)) * thetas[i];
  EXPECT_NEAR(teacher.value("w")(0, 0), expected, 1e-12);
}

TEST(TrainState, TeacherMirrorsStudentWithoutPredictor) {
  const auto s = init_train_state(tiny_encoder(), tiny_byol(), 10);
  for (const auto& p : s.teacher) {
    EXPECT_FALSE(p.name.starts_with("predictor."));
    EXPECT_FALSE(p.trainable);
    EXPECT_EQ(p.value, s.student.value(p.name));
  }
  EXPECT_TRUE(s.student.contains("predictor.fc2.weight"));
  EXPECT_EQ(s.teacher.size() + 8, s.student.size());
}

TEST(TrainState, PretrainedTensorsAreCopiedExceptReinitialized) {
  const auto a = init_train_state(tiny_encoder(), tiny_byol(), 10);
  auto cfg = tiny_byol();
  cfg.seed = 99;
  const auto b = init_train_state(tiny_encoder(), cfg, 10, &a.student);
  EXPECT_EQ(b.student.value("encoder.layers.0.attn.q.weight"), a.student.value("encoder.layers.0.attn.q.weight"));
  EXPECT_NE(b.student.value("encoder.layers.1.attn.q.weight"), a.student.value("encoder.layers.1.attn.q.weight"));
  EXPECT_NE(b.student.value("projector.fc1.weight"), a.student.value("projector.fc1.weight"));
}

TEST(TrainStep, MomentumOneKeepsTeacherBitIdentical) {
  auto cfg = tiny_byol();
  cfg.momentum = 1.0;
  auto s = init_train_state(tiny_encoder(), cfg, 100);
  const ParamStore before = s.teacher;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 5; ++i) {
    const auto r = train_step(s, random_batch(rng));
    EXPECT_TRUE(r.warmup || i >= 3);
  }
  EXPECT_TRUE(stores_equal(before, s.teacher));
  EXPECT_FALSE(stores_equal(before, s.student.filtered([](const std::string& n) { return !n.starts_with("predictor."); })));
}

TEST(TrainStep, StopGradient) {
  std::mt19937_64 rng(6);
  auto cfg = tiny_byol();
  cfg.momentum = 1.0;
  auto s = init_train_state(tiny_encoder(), cfg, 100);
  const auto batch = random_batch(rng);
  const ParamStore teacher = s.teacher;
  EXPECT_EQ(train_step(s, batch, {true, false}).teacher_grad_norm, 0.0);
  EXPECT_GT(train_step(s, batch, {false, false}).teacher_grad_norm, 0.0);
  const auto r = train_step(s, batch, {false, true});
  EXPECT_GT(r.teacher_grad_norm, 0.0);
  EXPECT_TRUE(stores_equal(teacher, s.teacher));
}

TEST(TrainStep, WarmupTouchesOnlyReinitializedTensors) {
  std::mt19937_64 rng(7);
  auto cfg = tiny_byol();
  cfg.schedule.warmup_frac = 0.5;
  auto s = init_train_state(tiny_encoder(), cfg, 4);
  const ParamStore before = s.student;
  ASSERT_TRUE(train_step(s, random_batch(rng)).warmup);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool changed = !(before.value(i) == s.student.value(i));
    if (before[i].buffer) continue;
    EXPECT_EQ(changed, before[i].reinitialized) << before[i].name;
  }
  train_step(s, random_batch(rng));
  EXPECT_FALSE(train_step(s, random_batch(rng)).warmup);
  EXPECT_NE(before.value("encoder.layers.0.ff.in.weight"), s.student.value("encoder.layers.0.ff.in.weight"));
}

TEST(TrainStep, FrozenInputProjectionNeverMoves) {
  std::mt19937_64 rng(8);
  auto enc = tiny_encoder();
  enc.freeze_input_projection = true;
  auto cfg = tiny_byol();
  cfg.schedule.warmup_frac = 0.0;
  auto s = init_train_state(enc, cfg, 10);
  const Matrix w = s.student.value("encoder.input_proj.weight");
  for (int i = 0; i < 4; ++i) train_step(s, random_batch(rng));
  EXPECT_EQ(w, s.student.value("encoder.input_proj.weight"));
  EXPECT_EQ(w, s.teacher.value("encoder.input_proj.weight"));
}

TEST(TeacherTargets, Shapes) {
  std::mt19937_64 rng(9);
  const std::vector<Matrix> clean{random_matrix(4, 6, rng), random_matrix(3, 6, rng)};
  auto cfg = tiny_byol();
  cfg.projector = {32, 256};
  cfg.predictor = {32, 256};
  EXPECT_EQ(teacher_targets(init_train_state(tiny_encoder(), cfg, 1), clean).cols(), 256u);

  const EncoderConfig wide{6, 3, 64, 4, 32, 1, false};
  cfg.target_layer = 2;
  cfg.predictor = {32, 64};
  const auto t = teacher_targets(init_train_state(wide, cfg, 1), clean);
  EXPECT_EQ(t.rows(), 7u);
  EXPECT_EQ(t.cols(), 64u);

  cfg.target_layer = 4;
  EXPECT_THROW(init_train_state(wide, cfg, 1), Error);
  cfg.target_layer = 2;
  cfg.predictor = {32, 256};
  EXPECT_THROW(init_train_state(wide, cfg, 1), Error);
}

TEST(TrainStep, OverfitsFixedBatchWithIdenticalInputs) {
  std::mt19937_64 rng(10);
  auto cfg = tiny_byol();
  cfg.projector = {16, 16};
  cfg.predictor = {16, 16};
  cfg.schedule.lr_max = 1e-3;
  cfg.schedule.lr_min = 1e-3;
  cfg.schedule.warmup_frac = 0.0;
  auto s = init_train_state(tiny_encoder(), cfg, 50);
  // Identity-like predictor: both linear maps start as the identity.
  Matrix eye(16, 16);
  for (std::size_t i = 0; i < 16; ++i) eye(i, i) = 1.0;
  s.student.value("predictor.fc1.weight") = eye;
  s.student.value("predictor.fc2.weight") = eye;
  std::vector<TrainPair> batch;
  for (std::size_t t : {9u, 6u}) {
    const Matrix x = random_matrix(t, 6, rng);
    batch.push_back({x, x});
  }
  std::vector<double> losses;
  for (int i = 0; i < 50; ++i) losses.push_back(train_step(s, batch).loss);
  EXPECT_LT(losses.front(), 1.0);
  EXPECT_LT(losses.back(), 0.5 * losses.front());
  for (double l : losses) EXPECT_TRUE(std::isfinite(l));
}

TEST(PlanBatches, PacksByDurationAndShuffles) {
  const std::vector<double> d{3, 3, 3, 3, 10, 1};
  const auto plan = plan_batches(d, 6.0, 3, 1);
  ASSERT_EQ(plan.size(), 3u);
  for (const auto& epoch : plan) {
    std::vector<int> seen(d.size(), 0);
    for (const auto& b : epoch) {
      ASSERT_FALSE(b.empty());
      double total = 0.0;
      for (auto i : b) {
        total += d[i];
        ++seen[i];
      }
      EXPECT_TRUE(total <= 6.0 || b.size() == 1);
    }
    for (int c : seen) EXPECT_EQ(c, 1);
  }
  EXPECT_EQ(plan, plan_batches(d, 6.0, 3, 1));
  EXPECT_THROW(plan_batches(d, 0.0, 1, 1), Error);
}

namespace {

TrainingCorpus random_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TrainPair> pairs;
  TrainingCorpus c;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = 5 + i % 4;
    const Matrix x = random_matrix(t, 6, rng);
    pairs.push_back({x, x + random_matrix(t, 6, rng, 0.1)});
    c.ids.push_back("u" + std::to_string(i));
    c.durations.push_back(static_cast<double>(t) / 50.0);
  }
  c.load = [pairs](std::size_t i, std::size_t) { return pairs[i]; };
  return c;
}

}  // namespace

TEST(RunTraining, BookkeepingCheckpointsAndDeterminism) {
  const auto dir = fs::temp_directory_path() / "syllabion_trainer_run";
  fs::remove_all(dir);
  auto cfg = tiny_byol();
  cfg.epochs = 2;
  cfg.batch_seconds = 0.5;
  const auto corpus = random_corpus(20, 3);
  const auto a = run_training(corpus, tiny_encoder(), cfg, {dir, 2, nullptr});
  const auto b = run_training(corpus, tiny_encoder(), cfg, {std::nullopt, 1, nullptr});
  EXPECT_EQ(static_cast<long long>(a.log.size()), a.state.step);
  EXPECT_EQ(a.state.byol.schedule.total_steps, a.state.step);
  EXPECT_TRUE(stores_equal(a.state.student, b.state.student));
  EXPECT_TRUE(stores_equal(a.state.teacher, b.state.teacher));
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].loss, b.log[i].loss);

  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "epoch_1" / "index.json"));
  const auto ckpt = load_checkpoint(dir / "checkpoints" / "epoch_2");
  EXPECT_EQ(ckpt.step, a.state.step);
  const auto [enc, student] = student_from_checkpoint(ckpt);
  EXPECT_EQ(enc.d_model, 16u);
  // f32 storage: every tensor survives to single precision.
  for (std::size_t i = 0; i < student.size(); ++i)
    for (std::size_t k = 0; k < student.value(i).size(); ++k)
      EXPECT_EQ(student.value(i).data()[k],
                static_cast<double>(static_cast<float>(a.state.student.value(student[i].name).data()[k])));

  std::ifstream csv(dir / "loss.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "step,lr,loss");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, a.log.size());

  TrainingCorpus empty;
  EXPECT_THROW(run_training(empty, tiny_encoder(), cfg), Error);
}
