#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "corpus.hpp"
#include "synthetic.hpp"
#include "syllabion/checkpoint.hpp"
#include "syllabion/error.hpp"
#include "syllabion/pipeline.hpp"
#include "syllabion/trainer.hpp"

namespace fs = std::filesystem;
using namespace syllabion;
using namespace syllabion::testing;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("syllabion_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Config small_config(const fs::path& manifest, const fs::path& out) {
  Config cfg;
  cfg.clusterer.k_means = 64;
  cfg.clusterer.k_units = 16;
  cfg.clusterer.n_init = 1;
  cfg.eval.tolerance = 0.04;
  cfg.paths.manifest = manifest.string();
  cfg.paths.out_dir = out.string();
  return cfg;
}

std::vector<FrameFeatures> as_features(const PlantedCorpus& c) {
  std::vector<FrameFeatures> out;
  for (const auto& u : c.utterances) out.push_back({u.features, 50.0});
  return out;
}

}  // namespace

TEST(Pipeline, ReportIsCompleteAndDeterministic) {
  const auto dir = fresh_dir("report");
  auto corpus = planted_corpus({});
  const auto manifest = write_corpus(corpus, dir);
  auto cfg = small_config(manifest, dir / "out1");
  const auto report = run_pipeline(cfg);
  ASSERT_TRUE(report["metrics"].is_object());
  for (const auto& col : score_columns()) EXPECT_TRUE(report["metrics"].contains(col)) << col;
  EXPECT_EQ(report["metrics"]["evaluated_utterances"], 20);
  EXPECT_GE(report["metrics"]["F1"].get<double>(), 90.0);
  EXPECT_EQ(report["layer"], "input");
  for (const char* f : {"report.json", "segments.jsonl", "units.jsonl", "codebook/codebook.json"})
    EXPECT_TRUE(fs::exists(dir / "out1" / f)) << f;

  cfg.paths.out_dir = (dir / "out2").string();
  EXPECT_EQ(run_pipeline(cfg, 3), report);
  for (const char* f : {"report.json", "segments.jsonl", "units.jsonl"})
    EXPECT_EQ(slurp(dir / "out1" / f), slurp(dir / "out2" / f)) << f;
}

TEST(Pipeline, FailuresNameTheStage) {
  const auto dir = fresh_dir("stage");
  auto corpus = planted_corpus({.utterances = 3});
  const auto manifest = write_corpus(corpus, dir);
  fs::remove(dir / "features" / "utt1.stns");
  auto cfg = small_config(manifest, dir / "out");
  try {
    run_pipeline(cfg);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage featurize"), std::string::npos) << e.what();
  }
  cfg.paths.manifest.clear();
  EXPECT_THROW(run_pipeline(cfg), Error);
}

TEST(Pipeline, LoadFeaturesPrefersStoredFeatures) {
  const auto dir = fresh_dir("load");
  write_wav(sine(200.0, 0.5), dir / "a.wav");
  write_tensor(FrameFeatures{Matrix{{1, 2}, {3, 4}}, 50.0}, dir / "a.stns");
  std::vector<UtteranceRecord> records(3);
  records[0] = {"both", "s", (dir / "a.wav").string(), (dir / "a.stns").string(), std::nullopt};
  records[1] = {"audio", "s", (dir / "a.wav").string(), std::nullopt, std::nullopt};
  records[2] = {"none", "s", std::nullopt, std::nullopt, std::nullopt};
  const auto f = load_features({records[0], records[1]}, {});
  EXPECT_EQ(f[0].data, (Matrix{{1, 2}, {3, 4}}));
  EXPECT_EQ(f[1].dim(), 40u);
  EXPECT_EQ(f[1].num_frames(), 24u);
  EXPECT_THROW(load_features({records[2]}, {}), Error);
}

TEST(Pipeline, SegmentsUnitsAndCodebookRoundTrip) {
  const auto dir = fresh_dir("roundtrip");
  auto corpus = planted_corpus({.utterances = 6});
  const auto features = as_features(corpus);
  const auto segmented = segment_corpus(features, {});
  ClustererConfig cc;
  cc.k_means = 12;
  cc.k_units = 5;
  const auto cb = fit_corpus_codebook(segmented, cc);
  const auto tokens = assign_corpus(segmented, cb);

  write_segments(corpus.records, segmented, dir / "s.jsonl");
  const auto segs = read_segments(corpus.records, dir / "s.jsonl");
  for (std::size_t i = 0; i < segs.size(); ++i) EXPECT_EQ(segs[i], segmented[i].segmentation);
  const auto repooled = pool_corpus(features, segs);
  for (std::size_t i = 0; i < segs.size(); ++i) EXPECT_EQ(repooled[i].pooled, segmented[i].pooled);

  write_units(corpus.records, tokens, dir / "u.jsonl");
  EXPECT_EQ(read_units(corpus.records, dir / "u.jsonl"), tokens);

  save_codebook(cb, dir / "cb");
  const auto back = load_codebook(dir / "cb");
  EXPECT_EQ(back.center_to_unit, cb.center_to_unit);
  EXPECT_EQ(back.num_units, cb.num_units);
  EXPECT_EQ(assign_corpus(segmented, back), tokens);

  auto missing = corpus.records;
  missing.push_back(missing.front());
  missing.back().utterance_id = "ghost";
  EXPECT_THROW(read_segments(missing, dir / "s.jsonl"), Error);
}

TEST(Pipeline, EncodeWithSavedModel) {
  const auto dir = fresh_dir("model");
  ByolConfig byol;
  byol.projector = {8, 4};
  byol.predictor = {8, 4};
  const EncoderConfig enc{16, 3, 8, 2, 16, 1, false};
  save_checkpoint(to_checkpoint(init_train_state(enc, byol, 1)), dir / "ckpt");
  const auto model = load_model(dir / "ckpt");
  EXPECT_EQ(model.encoder.n_layers, 3u);
  auto corpus = planted_corpus({.utterances = 2});
  const auto encoded = encode_corpus(model, as_features(corpus), 2);
  ASSERT_EQ(encoded.size(), 2u);
  EXPECT_EQ(encoded[0].num_frames(), corpus.utterances[0].features.rows());
  EXPECT_EQ(encoded[0].dim(), 8u);
  EXPECT_THROW(encode_corpus(model, as_features(corpus), 4), Error);
}

TEST(LayerSweep, RowsIdentityAndPlantedLayer) {
  const auto dir = fresh_dir("sweep");
  auto corpus = planted_corpus({});
  const auto planted = as_features(corpus);
  std::mt19937_64 rng(3);
  std::vector<FrameFeatures> noise;
  for (const auto& f : planted) noise.push_back({random_matrix(f.num_frames(), f.dim(), rng), 50.0});
  Config cfg = small_config("", dir);

  const auto same = layer_sweep({1, 2, 3, 4}, [&](std::size_t) { return planted; }, corpus.records, cfg);
  ASSERT_EQ(same.size(), 4u);
  for (const auto& row : same) EXPECT_EQ(score_values(row.scores), score_values(same[0].scores));

  const auto rows =
      layer_sweep({1, 2, 3, 4}, [&](std::size_t l) { return l == 2 ? planted : noise; }, corpus.records, cfg);
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].scores.boundaries.f1 > rows[best].scores.boundaries.f1) best = i;
  EXPECT_EQ(rows[best].layer, 2u);

  write_sweep_csv(rows, dir / "sweep.csv");
  std::ifstream in(dir / "sweep.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("layer,Precision,Recall,F1,R-value", 0), 0u);
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 4u);
}

TEST(Speakers, ProbeSeesAdditiveSpeakerOffsets) {
  auto corpus = planted_corpus({.utterances = 40});
  auto features = as_features(corpus);
  std::mt19937_64 rng(4);
  const Matrix offsets = random_matrix(4, 16, rng, 1.0);
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t t = 0; t < features[i].num_frames(); ++t)
      for (std::size_t c = 0; c < 16; ++c) features[i].data(t, c) += offsets(i % 4, c);
  const auto s = evaluate_speakers(corpus.records, features, nullptr, {});
  EXPECT_GE(s.probe_accuracy, 0.9);
  EXPECT_EQ(s.chance, 0.25);
  EXPECT_FALSE(s.unit_nmi.has_value());
}

TEST(PlotSsm, ShapeUniformAndPlantedBlocks) {
  const auto dir = fresh_dir("plot");
  auto read_pgm = [](const fs::path& p, std::size_t& w, std::size_t& h) {
    std::ifstream in(p, std::ios::binary);
    std::string magic;
    int maxval = 0;
    in >> magic >> w >> h >> maxval;
    in.get();
    EXPECT_EQ(magic, "P5");
    EXPECT_EQ(maxval, 255);
    std::string px(w * h, '\0');
    in.read(px.data(), static_cast<std::streamsize>(px.size()));
    EXPECT_EQ(static_cast<std::size_t>(in.gcount()), w * h);
    return px;
  };
  std::mt19937_64 rng(5);
  std::size_t w = 0, h = 0;
  plot_ssm(random_matrix(10, 3, rng), {{0, 10}}, {}, dir / "rand");
  read_pgm(dir / "rand.pgm", w, h);
  EXPECT_EQ(w, 10u);
  EXPECT_EQ(h, 10u);

  Matrix constant(6, 2);
  for (double& v : constant.data()) v = 0.7;
  plot_ssm(constant, {{0, 6}}, {}, dir / "const");
  const auto px = read_pgm(dir / "const.pgm", w, h);
  for (char c : px) EXPECT_EQ(c, px[0]);

  Matrix blocks(12, 2);
  for (std::size_t t = 0; t < 12; ++t) blocks(t, t < 7 ? 0 : 1) = 1.0;
  const auto seg = segment_features(blocks, 50.0, {.second_per_syllable = 0.12, .merge_threshold = 0.3});
  plot_ssm(blocks, seg, {0, 7, 12}, dir / "blocks");
  const auto img = read_pgm(dir / "blocks.pgm", w, h);
  EXPECT_EQ(static_cast<unsigned char>(img[0 * 12 + 1]), 255);
  EXPECT_EQ(static_cast<unsigned char>(img[0 * 12 + 8]), 0);
  const auto csv = slurp(dir / "blocks.csv");
  EXPECT_NE(csv.find("predicted,7\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("reference,7\n"), std::string::npos);
}
