#include "syllabion/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "syllabion/error.hpp"

namespace syllabion {

namespace {

using nlohmann::json;

// f(section, key, value&, description, published_default)
template <class C, class F>
void visit_fields(C& c, F&& f) {
  f("dsp", "threshold_hz", c.dsp.conversion.threshold_hz, "pitch statistic above this routes female-to-male", true);
  f("dsp", "pitch_statistic", c.pitch_statistic, "utterance pitch statistic: median or mean", false);
  f("dsp", "m2f_formant_ratio", c.dsp.conversion.male_to_female.formant_shift_ratio, "male-to-female formant ratio", true);
  f("dsp", "m2f_pitch_median", c.dsp.conversion.male_to_female.target_pitch_median, "male-to-female target median f0 (Hz)", true);
  f("dsp", "m2f_pitch_range", c.dsp.conversion.male_to_female.pitch_range_factor, "male-to-female pitch range factor", true);
  f("dsp", "f2m_formant_ratio", c.dsp.conversion.female_to_male.formant_shift_ratio, "female-to-male formant ratio", true);
  f("dsp", "f2m_pitch_median", c.dsp.conversion.female_to_male.target_pitch_median, "female-to-male target median f0 (Hz)", true);
  f("dsp", "f2m_pitch_range", c.dsp.conversion.female_to_male.pitch_range_factor, "female-to-male pitch range factor", true);
  f("dsp", "shaping_gain_db", c.dsp.shaping.gain_db, "max |gain| of random shaping filters (dB)", false);
  f("dsp", "shaping_peaks", c.dsp.shaping.num_peaks, "number of random peaking filters", false);
  f("dsp", "pitch_min_hz", c.dsp.pitch.min_f0, "lowest f0 searched by the pitch tracker", false);
  f("dsp", "pitch_max_hz", c.dsp.pitch.max_f0, "highest f0 searched by the pitch tracker", false);

  f("featurizer", "n_fft", c.featurizer.n_fft, "analysis window in samples", false);
  f("featurizer", "hop", c.featurizer.hop, "hop in samples (320 at 16 kHz = 50 frames/s)", false);
  f("featurizer", "n_mels", c.featurizer.n_mels, "mel bands", false);
  f("featurizer", "fmin", c.featurizer.fmin, "lowest mel edge (Hz)", false);
  f("featurizer", "fmax", c.featurizer.fmax, "highest mel edge (Hz)", false);

  f("encoder", "input_dim", c.encoder.input_dim, "input feature dimension", false);
  f("encoder", "n_layers", c.encoder.n_layers, "transformer layers", true);
  f("encoder", "d_model", c.encoder.d_model, "hidden size", true);
  f("encoder", "n_heads", c.encoder.n_heads, "attention heads", true);
  f("encoder", "d_ff", c.encoder.d_ff, "feed-forward size", true);
  f("encoder", "reinit_last_n", c.encoder.reinit_last_n, "re-initialized final layers", true);
  f("encoder", "freeze_input_projection", c.encoder.freeze_input_projection, "keep the input projection fixed", false);

  f("byol", "momentum", c.byol.momentum, "teacher EMA momentum", true);
  f("byol", "epochs", c.byol.epochs, "training epochs", true);
  f("byol", "batch_seconds", c.byol.batch_seconds, "clean audio per batch (s)", true);
  f("byol", "target_layer", c.byol.target_layer, "\"projector\" or a teacher layer index", true);
  f("byol", "seed", c.byol.seed, "initialization, shuffling and perturbation seed", false);
  f("byol", "projector_hidden", c.byol.projector.hidden, "projector hidden size", true);
  f("byol", "projector_out", c.byol.projector.out, "projector output size", true);
  f("byol", "predictor_hidden", c.byol.predictor.hidden, "predictor hidden size", true);
  f("byol", "predictor_out", c.byol.predictor.out, "predictor output size", true);
  f("byol", "lr_min", c.byol.schedule.lr_min, "learning rate at start and end", true);
  f("byol", "lr_max", c.byol.schedule.lr_max, "peak learning rate", true);
  f("byol", "warmup_frac", c.byol.schedule.warmup_frac, "fraction of steps warming up", true);
  f("byol", "hold_frac", c.byol.schedule.hold_frac, "fraction of steps at peak", true);
  f("byol", "weight_decay", c.byol.adamw.weight_decay, "AdamW decoupled weight decay", false);
  f("byol", "train_in_pipeline", c.train_in_pipeline, "pipeline trains a model before segmenting", false);

  f("segmenter", "layer", c.segment_layer, "encoder layer used for segmentation", true);
  f("segmenter", "second_per_syllable", c.segmenter.second_per_syllable, "initial segment count = duration / this", true);
  f("segmenter", "merge_threshold", c.segmenter.merge_threshold, "cosine threshold for merging neighbours", true);

  f("clusterer", "k_means", c.clusterer.k_means, "k-means clusters", true);
  f("clusterer", "k_units", c.clusterer.k_units, "agglomerative units", true);
  f("clusterer", "seed", c.clusterer.seed, "k-means++ seed", false);
  f("clusterer", "max_iter", c.clusterer.max_iter, "Lloyd iteration cap", false);
  f("clusterer", "rel_tol", c.clusterer.rel_tol, "relative inertia improvement to stop", false);
  f("clusterer", "n_init", c.clusterer.n_init, "k-means restarts", false);

  f("eval", "tolerance", c.eval.tolerance, "boundary hit tolerance (s)", true);
  f("eval", "probe_epochs", c.eval.probe_epochs, "speaker probe gradient steps", false);
  f("eval", "probe_learning_rate", c.eval.probe_learning_rate, "speaker probe step size", false);
  f("eval", "probe_test_fraction", c.eval.probe_test_fraction, "held-out fraction per speaker", false);
  f("eval", "probe_seed", c.eval.probe_seed, "speaker split seed", false);

  f("paths", "manifest", c.paths.manifest, "JSON-lines manifest", false);
  f("paths", "out_dir", c.paths.out_dir, "output directory", false);
  f("paths", "checkpoint", c.paths.checkpoint, "trained checkpoint directory (optional)", false);
}

[[noreturn]] void type_error(const std::string& name, const char* expected) {
  fail("config key '" + name + "' expects " + expected);
}

json to_value(const std::optional<std::size_t>& v) { return v ? json(*v) : json("projector"); }
template <class T>
json to_value(const T& v) {
  return json(v);
}

void from_value(const json& j, const std::string& name, double& out) {
  if (!j.is_number()) type_error(name, "a number");
  out = j.get<double>();
}
void from_value(const json& j, const std::string& name, bool& out) {
  if (!j.is_boolean()) type_error(name, "true or false");
  out = j.get<bool>();
}
void from_value(const json& j, const std::string& name, std::string& out) {
  if (!j.is_string()) type_error(name, "a string");
  out = j.get<std::string>();
}
template <class T>
  requires std::is_unsigned_v<T>
void from_value(const json& j, const std::string& name, T& out) {
  if (!j.is_number_unsigned()) type_error(name, "a non-negative integer");
  out = j.get<T>();
}
void from_value(const json& j, const std::string& name, std::optional<std::size_t>& out) {
  if (j.is_string() && j.get<std::string>() == "projector")
    out.reset();
  else if (j.is_number_unsigned())
    out = j.get<std::size_t>();
  else
    type_error(name, "\"projector\" or a layer index");
}

void set_field(Config& cfg, const std::string& section, const std::string& key, const json& value) {
  bool found = false;
  visit_fields(cfg, [&](const char* s, const char* k, auto& field, const char*, bool) {
    if (found || section != s || key != k) return;
    from_value(value, section + "." + key, field);
    found = true;
  });
  if (!found) fail("unknown config key '" + section + "." + key + "'");
}

}  // namespace

PerturbConfig Config::perturb_config() const {
  PerturbConfig p = dsp;
  p.statistic = pitch_statistic == "mean" ? PitchStatistic::kMean : PitchStatistic::kMedian;
  return p;
}

void Config::validate() const {
  check(pitch_statistic == "median" || pitch_statistic == "mean", "dsp.pitch_statistic must be median or mean");
  check(dsp.conversion.threshold_hz > 0.0, "dsp.threshold_hz must be > 0");
  dsp.conversion.male_to_female.validate();
  dsp.conversion.female_to_male.validate();
  featurizer.validate(16000.0);
  encoder.validate();
  byol.validate(encoder);
  LrSchedule s = byol.schedule;
  s.total_steps = 1;
  s.validate();
  segmenter.validate();
  check(segment_layer <= encoder.n_layers, "segmenter.layer exceeds encoder.n_layers");
  clusterer.validate();
  check(eval.tolerance >= 0.0, "eval.tolerance must be >= 0");
  check(eval.probe_test_fraction > 0.0 && eval.probe_test_fraction < 1.0, "eval.probe_test_fraction must lie in (0, 1)");
}

nlohmann::json config_to_json(const Config& cfg) {
  json j = json::object();
  visit_fields(cfg, [&](const char* s, const char* k, const auto& field, const char*, bool) { j[s][k] = to_value(field); });
  return j;
}

namespace {

// Field assignment only; cross-field checks run once everything is set.
void merge_json(Config& cfg, const nlohmann::json& j) {
  check(j.is_object(), "config must be a JSON object");
  const json sections = config_to_json(Config{});
  for (const auto& [section, body] : j.items()) {
    check(sections.contains(section), "unknown config section '" + section + "'");
    check(body.is_object(), "config section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) set_field(cfg, section, key, value);
  }
}

}  // namespace

Config config_from_json(const nlohmann::json& j) {
  Config cfg;
  merge_json(cfg, j);
  cfg.validate();
  return cfg;
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  check(eq != std::string::npos, "override '" + assignment + "' must look like section.key=value");
  const std::string name = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  const auto dot = name.find('.');
  check(dot != std::string::npos, "override key '" + name + "' must look like section.key");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set_field(cfg, name.substr(0, dot), name.substr(dot + 1), value);
}

Config load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  std::optional<std::filesystem::path> source = path;
  if (!source) {
    if (const char* env = std::getenv("SYLLABION_CONFIG"); env && *env) source = env;
  }
  Config cfg;
  if (source) {
    std::ifstream in(*source);
    check(static_cast<bool>(in), "cannot open config " + source->string());
    json j = json::parse(in, nullptr, false);
    check(!j.is_discarded(), "config " + source->string() + " is not valid JSON");
    merge_json(cfg, j);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

std::string describe_config() {
  Config defaults;
  std::ostringstream out;
  visit_fields(defaults, [&](const char* s, const char* k, const auto& field, const char* help, bool published) {
    out << "  " << s << '.' << k << " = " << to_value(field).dump() << "  " << help;
    if (published) out << " [published setting]";
    out << '\n';
  });
  return out.str();
}

}  // namespace syllabion
