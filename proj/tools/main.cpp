#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "syllabion/checkpoint.hpp"
#include "syllabion/config.hpp"
#include "syllabion/dsp.hpp"
#include "syllabion/error.hpp"
#include "syllabion/evaluator.hpp"
#include "syllabion/featurize.hpp"
#include "syllabion/io.hpp"
#include "syllabion/pipeline.hpp"
#include "syllabion/trainer.hpp"

namespace fs = std::filesystem;
using namespace syllabion;

namespace {

constexpr const char* kErrorPrefix = "syllabion: error: ";

struct Common {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  std::optional<std::string> manifest;
  std::optional<std::string> checkpoint;
  std::size_t workers = 1;

  Config resolve() const {
    std::vector<std::string> all = overrides;
    if (out_dir) all.push_back("paths.out_dir=" + nlohmann::json(*out_dir).dump());
    if (manifest) all.push_back("paths.manifest=" + nlohmann::json(*manifest).dump());
    if (checkpoint) all.push_back("paths.checkpoint=" + nlohmann::json(*checkpoint).dump());
    std::optional<fs::path> path;
    if (config) path = *config;
    return load_config(path, all);
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file (default: $SYLLABION_CONFIG)");
  cmd->add_option("--set", c.overrides, "override a config key: section.key=value")->allow_extra_args(false);
  cmd->add_option("--out-dir", c.out_dir, "output directory (paths.out_dir)");
  cmd->add_option("--manifest", c.manifest, "JSON-lines manifest (paths.manifest)");
  cmd->add_option("--checkpoint", c.checkpoint, "trained checkpoint directory (paths.checkpoint)");
  cmd->add_option("--workers", c.workers, "worker threads; results do not depend on this")->check(CLI::PositiveNumber);
}

std::vector<UtteranceRecord> manifest_records(const Config& cfg) {
  check(!cfg.paths.manifest.empty(), "no manifest given (--manifest or paths.manifest)");
  auto records = read_manifest(cfg.paths.manifest);
  check(!records.empty(), "manifest " + cfg.paths.manifest + " is empty");
  return records;
}

// Input features, encoded at the configured layer when a checkpoint is set.
std::vector<FrameFeatures> representations(const Config& cfg, const std::vector<UtteranceRecord>& records,
                                           std::size_t workers) {
  auto features = load_features(records, cfg.featurizer, workers);
  if (cfg.paths.checkpoint.empty()) return features;
  return encode_corpus(load_model(cfg.paths.checkpoint), features, cfg.segment_layer, workers);
}

fs::path out_dir(const Config& cfg) {
  fs::path dir = cfg.paths.out_dir;
  fs::create_directories(dir);
  return dir;
}

void write_scores_csv(const std::vector<std::string>& cols, const std::vector<double>& values, const fs::path& path) {
  std::ostringstream text;
  text.precision(8);
  for (std::size_t i = 0; i < cols.size(); ++i) text << (i ? "," : "") << cols[i];
  text << '\n';
  for (std::size_t i = 0; i < values.size(); ++i) text << (i ? "," : "") << values[i];
  text << '\n';
  std::ofstream out(path);
  out << text.str();
  check(static_cast<bool>(out), "cannot write " + path.string());
  std::cout << text.str();
}

std::vector<std::size_t> parse_layers(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    check(pos == item.size() && !item.empty(), "invalid layer list '" + text + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised syllable discovery: speaker perturbation, BYOL fine-tuning, min-cut segmentation, "
               "unit clustering and evaluation."};
  app.require_subcommand(1);
  app.footer("Config keys (section.key = default):\n" + describe_config());
  Common c;

  auto* perturb = app.add_subcommand("perturb", "speaker-perturb one WAV file");
  std::string wav_in, wav_out;
  std::uint64_t seed = 0;
  perturb->add_option("--in", wav_in, "input WAV")->required();
  perturb->add_option("--out", wav_out, "output WAV (float32)")->required();
  perturb->add_option("--seed", seed, "shaping-filter seed");

  auto* featurize = app.add_subcommand("featurize", "log-mel features for every manifest row");
  auto* train = app.add_subcommand("train", "BYOL fine-tuning over the manifest");
  std::optional<std::string> pretrained;
  train->add_option("--pretrained", pretrained, "checkpoint whose encoder initializes the student");
  auto* segment = app.add_subcommand("segment", "min-cut segmentation -> segments.jsonl");
  auto* cluster = app.add_subcommand("cluster", "fit the k-means + agglomerative codebook");
  auto* assign = app.add_subcommand("assign", "assign units to segments -> units.jsonl");
  auto* eval_b = app.add_subcommand("eval-boundaries", "boundary precision/recall/F1/R-value");
  auto* eval_u = app.add_subcommand("eval-units", "boundary scores plus syllable/cluster purity and MI");
  auto* eval_s = app.add_subcommand("eval-speaker", "speaker probe accuracy and speaker NMI of units");
  auto* sweep = app.add_subcommand("layer-sweep", "segment, cluster and score several encoder layers");
  auto* plot = app.add_subcommand("plot-ssm", "self-similarity image and boundary CSV for one utterance");
  auto* pipeline = app.add_subcommand("pipeline", "featurize -> (train) -> segment -> cluster -> evaluate");

  std::string segments_path, units_path, codebook_dir, layers_text, utterance;
  double frame_rate = 50.0;
  for (auto* cmd : {perturb, featurize, train, segment, cluster, assign, eval_b, eval_u, eval_s, sweep, plot, pipeline})
    add_common(cmd, c);
  for (auto* cmd : {cluster, assign, eval_b, eval_u})
    cmd->add_option("--segments", segments_path, "segments.jsonl")->required();
  for (auto* cmd : {eval_u}) cmd->add_option("--units", units_path, "units.jsonl")->required();
  eval_s->add_option("--units", units_path, "units.jsonl (adds speaker NMI)");
  assign->add_option("--codebook", codebook_dir, "codebook directory")->required();
  for (auto* cmd : {eval_b, eval_u}) cmd->add_option("--frame-rate", frame_rate, "frames per second of the segmentation");
  sweep->add_option("--layers", layers_text, "comma-separated layers (default: all)");
  plot->add_option("--utterance", utterance, "utterance id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << kErrorPrefix << e.what() << '\n';
    return 2;
  }

  try {
    const Config cfg = c.resolve();
    if (perturb->parsed()) {
      const Waveform w = read_wav(wav_in);
      write_wav(perturb_speaker(w, seed, cfg.perturb_config()), wav_out, WavEncoding::kFloat32);
    } else if (featurize->parsed()) {
      auto records = manifest_records(cfg);
      const auto features = load_features(records, cfg.featurizer, c.workers);
      const fs::path dir = out_dir(cfg);
      fs::create_directories(dir / "features");
      for (std::size_t i = 0; i < records.size(); ++i) {
        const fs::path file = dir / "features" / (records[i].utterance_id + ".stns");
        write_tensor(features[i], file);
        records[i].features = fs::absolute(file).string();
      }
      write_manifest(records, dir / "manifest.jsonl");
    } else if (train->parsed()) {
      const auto records = manifest_records(cfg);
      std::optional<Checkpoint> init;
      if (pretrained) init = load_checkpoint(*pretrained);
      const ParamStore* pre = nullptr;
      std::optional<ParamStore> pre_store;
      if (init) {
        pre_store = student_from_checkpoint(*init).second;
        pre = &*pre_store;
      }
      const auto corpus = corpus_from_manifest(records, cfg.featurizer, cfg.perturb_config(), cfg.byol.seed);
      const auto result = run_training(corpus, cfg.encoder, cfg.byol, {out_dir(cfg), c.workers, pre});
      std::cout << "steps=" << result.log.size() << " first_loss=" << result.log.front().loss
                << " final_loss=" << result.log.back().loss << '\n';
    } else if (segment->parsed()) {
      const auto records = manifest_records(cfg);
      const auto segmented = segment_corpus(representations(cfg, records, c.workers), cfg.segmenter, c.workers);
      write_segments(records, segmented, out_dir(cfg) / "segments.jsonl");
    } else if (cluster->parsed()) {
      const auto records = manifest_records(cfg);
      const auto segmented = pool_corpus(representations(cfg, records, c.workers), read_segments(records, segments_path));
      save_codebook(fit_corpus_codebook(segmented, cfg.clusterer), out_dir(cfg) / "codebook");
    } else if (assign->parsed()) {
      const auto records = manifest_records(cfg);
      const auto segmented = pool_corpus(representations(cfg, records, c.workers), read_segments(records, segments_path));
      write_units(records, assign_corpus(segmented, load_codebook(codebook_dir)), out_dir(cfg) / "units.jsonl");
    } else if (eval_b->parsed() || eval_u->parsed()) {
      const auto records = manifest_records(cfg);
      std::vector<SegmentedUtterance> segmented;
      for (auto& s : read_segments(records, segments_path)) segmented.push_back({std::move(s), Matrix(), frame_rate});
      const auto counts = corpus_boundary_counts(records, segmented, cfg.eval.tolerance);
      check(counts.n_ref > 0, "no reference boundaries in the manifest");
      if (eval_b->parsed()) {
        const auto b = counts.scores();
        write_scores_csv({"Precision", "Recall", "F1", "R-value"},
                         {100 * b.precision, 100 * b.recall, 100 * b.f1, 100 * b.r_value},
                         out_dir(cfg) / "boundary_scores.csv");
      } else {
        CorpusScores s;
        s.boundaries = counts.scores();
        s.units = unit_quality(corpus_joint_counts(records, segmented, read_units(records, units_path)));
        write_scores_csv(score_columns(), score_values(s), out_dir(cfg) / "unit_scores.csv");
      }
    } else if (eval_s->parsed()) {
      const auto records = manifest_records(cfg);
      std::optional<std::vector<std::vector<UnitToken>>> tokens;
      if (!units_path.empty()) tokens = read_units(records, units_path);
      const auto s = evaluate_speakers(records, representations(cfg, records, c.workers), tokens ? &*tokens : nullptr,
                                       cfg.eval);
      nlohmann::json j{{"probe_accuracy", s.probe_accuracy}, {"chance", s.chance}};
      j["unit_speaker_nmi"] = s.unit_nmi ? nlohmann::json(*s.unit_nmi) : nlohmann::json(nullptr);
      std::ofstream(out_dir(cfg) / "speaker_scores.json") << j.dump(2) << '\n';
      std::cout << j.dump() << '\n';
    } else if (sweep->parsed()) {
      const auto records = manifest_records(cfg);
      check(!cfg.paths.checkpoint.empty(), "layer-sweep needs --checkpoint");
      const TrainedModel model = load_model(cfg.paths.checkpoint);
      const auto features = load_features(records, cfg.featurizer, c.workers);
      std::vector<std::size_t> layers;
      if (layers_text.empty())
        for (std::size_t l = 1; l <= model.encoder.n_layers; ++l) layers.push_back(l);
      else
        layers = parse_layers(layers_text);
      for (std::size_t l : layers)
        check(l <= model.encoder.n_layers, "layer " + std::to_string(l) + " exceeds the model depth");
      const auto rows = layer_sweep(
          layers, [&](std::size_t l) { return encode_corpus(model, features, l, c.workers); }, records, cfg, c.workers);
      write_sweep_csv(rows, out_dir(cfg) / "layer_sweep.csv");
    } else if (plot->parsed()) {
      auto records = manifest_records(cfg);
      const auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.utterance_id == utterance; });
      check(it != records.end(), "utterance '" + utterance + "' not in manifest");
      const std::vector<UtteranceRecord> one{*it};
      const FrameFeatures f = representations(cfg, one, 1).front();
      const Segmentation seg = segment_features(f.data, f.frame_rate, cfg.segmenter);
      std::vector<std::size_t> reference;
      if (it->alignments) {
        for (const auto& a : *it->alignments)
          for (double t : {a.start, a.end}) reference.push_back(static_cast<std::size_t>(std::lround(t * f.frame_rate)));
        std::sort(reference.begin(), reference.end());
        reference.erase(std::unique(reference.begin(), reference.end()), reference.end());
      }
      plot_ssm(f.data, seg, reference, out_dir(cfg) / ("ssm_" + utterance));
    } else if (pipeline->parsed()) {
      std::cout << run_pipeline(cfg, c.workers).dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << kErrorPrefix << msg << '\n';
    return 1;
  }
  return 0;
}
