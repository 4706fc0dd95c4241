#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "syllabion/config.hpp"
#include "syllabion/error.hpp"

namespace fs = std::filesystem;
using namespace syllabion;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, PublishedDefaults) {
  const Config c;
  EXPECT_EQ(c.dsp.conversion.threshold_hz, 155.0);
  EXPECT_EQ(c.dsp.conversion.male_to_female.formant_shift_ratio, 1.1);
  EXPECT_EQ(c.dsp.conversion.male_to_female.target_pitch_median, 300.0);
  EXPECT_EQ(c.dsp.conversion.male_to_female.pitch_range_factor, 1.2);
  EXPECT_EQ(c.dsp.conversion.female_to_male.formant_shift_ratio, 1.0 / 1.1);
  EXPECT_EQ(c.dsp.conversion.female_to_male.target_pitch_median, 100.0);
  EXPECT_EQ(c.dsp.conversion.female_to_male.pitch_range_factor, 1.0 / 1.2);
  EXPECT_EQ(c.segmenter.second_per_syllable, 0.2);
  EXPECT_EQ(c.segmenter.merge_threshold, 0.3);
  EXPECT_EQ(c.segment_layer, 8u);
  EXPECT_EQ(c.byol.momentum, 0.999);
  EXPECT_EQ(c.byol.epochs, 15u);
  EXPECT_EQ(c.byol.batch_seconds, 360.0);
  EXPECT_EQ(c.byol.projector.hidden, 2048u);
  EXPECT_EQ(c.byol.projector.out, 256u);
  EXPECT_EQ(c.byol.predictor.hidden, 2048u);
  EXPECT_EQ(c.byol.predictor.out, 256u);
  EXPECT_EQ(c.byol.schedule.lr_min, 1e-5);
  EXPECT_EQ(c.byol.schedule.lr_max, 1e-4);
  EXPECT_EQ(c.byol.schedule.warmup_frac, 0.03);
  EXPECT_EQ(c.byol.schedule.hold_frac, 0.47);
  EXPECT_EQ(c.encoder.n_layers, 12u);
  EXPECT_EQ(c.encoder.d_model, 768u);
  EXPECT_EQ(c.encoder.reinit_last_n, 3u);
  EXPECT_EQ(c.clusterer.k_means, 16384u);
  EXPECT_EQ(c.clusterer.k_units, 4096u);
  EXPECT_EQ(c.eval.tolerance, 0.05);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, JsonRoundTrip) {
  Config c;
  c.clusterer.k_means = 64;
  c.clusterer.k_units = 16;
  c.byol.target_layer = 4;
  c.byol.predictor.out = 768;
  c.paths.manifest = "m.jsonl";
  c.pitch_statistic = "mean";
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.clusterer.k_means, 64u);
  EXPECT_EQ(back.byol.target_layer, 4u);
  EXPECT_EQ(back.perturb_config().statistic, PitchStatistic::kMean);
  EXPECT_FALSE(config_from_json(config_to_json(Config{})).byol.target_layer.has_value());
}

TEST(Config, StrictParsing) {
  EXPECT_NE(error_of([] { config_from_json({{"segmenter", {{"bogus", 1}}}}); }).find("segmenter.bogus"),
            std::string::npos);
  EXPECT_THROW(config_from_json({{"nosuch", nlohmann::json::object()}}), Error);
  EXPECT_THROW(config_from_json({{"clusterer", {{"k_means", "many"}}}}), Error);
  EXPECT_THROW(config_from_json({{"segmenter", 3}}), Error);
  EXPECT_THROW(config_from_json(nlohmann::json::array()), Error);
  EXPECT_NO_THROW(config_from_json(nlohmann::json::object()));
}

TEST(Config, Overrides) {
  Config c;
  apply_override(c, "segmenter.merge_threshold=0.5");
  apply_override(c, "paths.out_dir=results");
  // Switching to a layer target needs two keys; only the final state is
  // validated.
  apply_override(c, "byol.target_layer=6");
  apply_override(c, "encoder.freeze_input_projection=true");
  EXPECT_THROW(c.validate(), Error);
  apply_override(c, "byol.predictor_out=768");
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.segmenter.merge_threshold, 0.5);
  EXPECT_EQ(c.paths.out_dir, "results");
  EXPECT_EQ(c.byol.target_layer, 6u);
  EXPECT_TRUE(c.encoder.freeze_input_projection);
  apply_override(c, "byol.target_layer=\"projector\"");
  EXPECT_FALSE(c.byol.target_layer.has_value());
  EXPECT_THROW(apply_override(c, "byol.target_layer=-2"), Error);
  EXPECT_THROW(apply_override(c, "segmenter.merge_threshold"), Error);
  EXPECT_THROW(apply_override(c, "merge_threshold=1"), Error);
  EXPECT_THROW(apply_override(c, "segmenter.nothing=1"), Error);
}

TEST(Config, Validation) {
  Config c;
  c.pitch_statistic = "mode";
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.segment_layer = 13;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.clusterer.k_units = c.clusterer.k_means + 1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.eval.probe_test_fraction = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, LoadOrderFileEnvOverrides) {
  const auto dir = fs::temp_directory_path() / "syllabion_config_test";
  fs::create_directories(dir);
  const auto file = dir / "a.json";
  std::ofstream(file) << R"({"segmenter": {"merge_threshold": 0.4}, "clusterer": {"k_means": 32, "k_units": 8}})";
  const auto env_file = dir / "b.json";
  std::ofstream(env_file) << R"({"clusterer": {"k_means": 12, "k_units": 3}})";

  EXPECT_EQ(load_config(file, {"byol.target_layer=6", "byol.predictor_out=768"}).byol.target_layer, 6u);
  EXPECT_THROW(load_config(file, {"byol.target_layer=6"}), Error);
  auto c = load_config(file, {"clusterer.k_units=4"});
  EXPECT_EQ(c.segmenter.merge_threshold, 0.4);
  EXPECT_EQ(c.clusterer.k_means, 32u);
  EXPECT_EQ(c.clusterer.k_units, 4u);

  ::setenv("SYLLABION_CONFIG", env_file.c_str(), 1);
  EXPECT_EQ(load_config(std::nullopt, {}).clusterer.k_means, 12u);
  EXPECT_EQ(load_config(file, {}).clusterer.k_means, 32u);
  ::unsetenv("SYLLABION_CONFIG");
  EXPECT_EQ(load_config(std::nullopt, {}).clusterer.k_means, 16384u);

  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_THROW(load_config(dir / "bad.json", {}), Error);
  EXPECT_THROW(load_config(dir / "missing.json", {}), Error);
}

TEST(Config, DescribeListsEveryKey) {
  const auto text = describe_config();
  const auto j = config_to_json(Config{});
  for (const auto& [section, body] : j.items())
    for (const auto& [key, value] : body.items())
      EXPECT_NE(text.find(section + "." + key), std::string::npos) << section << "." << key;
  EXPECT_NE(text.find("155"), std::string::npos);
}
