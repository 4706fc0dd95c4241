#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "syllabion/clusterer.hpp"
#include "syllabion/dsp.hpp"
#include "syllabion/evaluator.hpp"
#include "syllabion/featurize.hpp"
#include "syllabion/neural.hpp"
#include "syllabion/segmenter.hpp"
#include "syllabion/trainer.hpp"

namespace syllabion {

struct EvalConfig {
  double tolerance = kBoundaryTolerance;
  std::size_t probe_epochs = 500;
  double probe_learning_rate = 0.5;
  double probe_test_fraction = 0.3;
  std::uint64_t probe_seed = 0;
};

struct PathsConfig {
  std::string manifest;
  std::string out_dir = "out";
  std::string checkpoint;  // empty: segment the input features directly
};

// Every section of the JSON config file. Defaults are the full-scale values.
struct Config {
  PerturbConfig dsp;
  std::string pitch_statistic = "median";
  FeaturizerConfig featurizer;
  EncoderConfig encoder;
  ByolConfig byol;
  bool train_in_pipeline = false;
  SegmenterConfig segmenter;
  std::size_t segment_layer = 8;
  ClustererConfig clusterer;
  EvalConfig eval;
  PathsConfig paths;

  PerturbConfig perturb_config() const;
  void validate() const;
};

nlohmann::json config_to_json(const Config& cfg);
// Strict: unknown sections or keys and mistyped values are errors.
Config config_from_json(const nlohmann::json& j);

// `section.key=value`; the value is parsed as JSON, falling back to a plain
// string. Only the field's type is checked; call validate() once all
// overrides are in, since some keys must change together.
void apply_override(Config& cfg, const std::string& assignment);

// Defaults, then the file (explicit path, else $SYLLABION_CONFIG when set),
// then overrides in order. Validated after the last override.
Config load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides);

// One line per key: name, default, description, and whether the default
// follows the published setup.
std::string describe_config();

}  // namespace syllabion
