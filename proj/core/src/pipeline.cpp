#include "syllabion/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "syllabion/checkpoint.hpp"
#include "syllabion/error.hpp"
#include "syllabion/featurize.hpp"
#include "syllabion/parallel.hpp"
#include "syllabion/trainer.hpp"

namespace syllabion {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  check(static_cast<bool>(out), "cannot write " + path.string());
  return out;
}

std::map<std::string, json> read_jsonl_by_id(const std::filesystem::path& path) {
  std::ifstream in(path);
  check(static_cast<bool>(in), "cannot open " + path.string());
  std::map<std::string, json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    check(!j.is_discarded() && j.is_object() && j.contains("utterance_id") && j["utterance_id"].is_string(),
          path.string() + ":" + std::to_string(line_no) + ": malformed record");
    std::string id = j["utterance_id"].get<std::string>();
    out[std::move(id)] = std::move(j);
  }
  return out;
}

const json& record_for(const std::map<std::string, json>& by_id, const std::string& id,
                       const std::filesystem::path& path) {
  const auto it = by_id.find(id);
  check(it != by_id.end(), path.string() + " has no record for utterance '" + id + "'");
  return it->second;
}

template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    fail("stage " + stage + ": " + e.what());
  }
}

}  // namespace

std::vector<FrameFeatures> load_features(const std::vector<UtteranceRecord>& records, const FeaturizerConfig& cfg,
                                         std::size_t workers) {
  std::vector<FrameFeatures> out(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const auto& r = records[i];
    if (r.features)
      out[i] = read_tensor(*r.features);
    else if (r.audio)
      out[i] = log_mel(read_wav(*r.audio), cfg);
    else
      fail("utterance '" + r.utterance_id + "' has neither audio nor features");
  });
  return out;
}

TrainedModel load_model(const std::filesystem::path& checkpoint_dir) {
  auto [enc, params] = student_from_checkpoint(load_checkpoint(checkpoint_dir));
  return TrainedModel{enc, std::move(params)};
}

std::vector<FrameFeatures> encode_corpus(const TrainedModel& model, const std::vector<FrameFeatures>& features,
                                         std::size_t layer, std::size_t workers) {
  std::vector<FrameFeatures> out(features.size());
  parallel_for(features.size(), workers, [&](std::size_t i) {
    out[i] = encoder_forward(model.params, kEncoderPrefix, model.encoder, features[i], layer);
  });
  return out;
}

std::vector<SegmentedUtterance> segment_corpus(const std::vector<FrameFeatures>& features,
                                               const SegmenterConfig& cfg, std::size_t workers) {
  std::vector<SegmentedUtterance> out(features.size());
  parallel_for(features.size(), workers, [&](std::size_t i) {
    const auto& f = features[i];
    Segmentation seg = segment_features(f.data, f.frame_rate, cfg);
    out[i] = SegmentedUtterance{seg, pool_segments(seg, f.data), f.frame_rate};
  });
  return out;
}

std::vector<SegmentedUtterance> pool_corpus(const std::vector<FrameFeatures>& features,
                                            const std::vector<Segmentation>& segmentations) {
  check(features.size() == segmentations.size(), "pool_corpus: feature and segmentation counts differ");
  std::vector<SegmentedUtterance> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i)
    out.push_back({segmentations[i], pool_segments(segmentations[i], features[i].data), features[i].frame_rate});
  return out;
}

Codebook fit_corpus_codebook(const std::vector<SegmentedUtterance>& segmented, const ClustererConfig& cfg) {
  std::vector<Matrix> pooled;
  pooled.reserve(segmented.size());
  for (const auto& s : segmented) pooled.push_back(s.pooled);
  return fit_codebook(vstack(pooled), cfg);
}

std::vector<std::vector<UnitToken>> assign_corpus(const std::vector<SegmentedUtterance>& segmented,
                                                  const Codebook& codebook) {
  std::vector<std::vector<UnitToken>> out;
  out.reserve(segmented.size());
  for (const auto& s : segmented) out.push_back(assign_units(s.segmentation, s.pooled, codebook));
  return out;
}

BoundaryCounts corpus_boundary_counts(const std::vector<UtteranceRecord>& records,
                                      const std::vector<SegmentedUtterance>& segmented, double tolerance) {
  check(records.size() == segmented.size(), "evaluation: record and segmentation counts differ");
  BoundaryCounts total;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].alignments) continue;
    total += count_boundaries(*records[i].alignments,
                              boundaries_to_seconds(segmented[i].segmentation, segmented[i].frame_rate), tolerance);
  }
  return total;
}

JointCounts corpus_joint_counts(const std::vector<UtteranceRecord>& records,
                                const std::vector<SegmentedUtterance>& segmented,
                                const std::vector<std::vector<UnitToken>>& tokens) {
  check(records.size() == segmented.size() && records.size() == tokens.size(),
        "evaluation: record, segmentation and token counts differ");
  JointCounts joint;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].alignments) accumulate_joint(joint, *records[i].alignments, tokens[i], segmented[i].frame_rate);
  return joint;
}

CorpusScores evaluate_corpus(const std::vector<UtteranceRecord>& records,
                             const std::vector<SegmentedUtterance>& segmented,
                             const std::vector<std::vector<UnitToken>>& tokens, double tolerance) {
  CorpusScores s;
  s.evaluated_utterances = static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.alignments.has_value(); }));
  check(s.evaluated_utterances > 0, "evaluation: no utterance carries reference alignments");
  s.boundaries = corpus_boundary_counts(records, segmented, tolerance).scores();
  const JointCounts joint = corpus_joint_counts(records, segmented, tokens);
  check(!joint.empty(), "evaluation: no reference segment overlaps a predicted segment");
  s.units = unit_quality(joint);
  return s;
}

const std::vector<std::string>& score_columns() {
  static const std::vector<std::string> cols{"Precision",      "Recall",         "F1", "R-value",
                                             "Syllable purity", "Cluster purity", "Mutual info. (nats)"};
  return cols;
}

// Percentages, except mutual information in nats.
std::vector<double> score_values(const CorpusScores& s) {
  return {100.0 * s.boundaries.precision,  100.0 * s.boundaries.recall,  100.0 * s.boundaries.f1,
          100.0 * s.boundaries.r_value,    100.0 * s.units.syllable_purity, 100.0 * s.units.cluster_purity,
          s.units.mutual_info};
}

nlohmann::json scores_to_json(const CorpusScores& s) {
  json j = json::object();
  const auto values = score_values(s);
  for (std::size_t i = 0; i < values.size(); ++i) j[score_columns()[i]] = values[i];
  j["evaluated_utterances"] = s.evaluated_utterances;
  return j;
}

SpeakerScores evaluate_speakers(const std::vector<UtteranceRecord>& records,
                                const std::vector<FrameFeatures>& features,
                                const std::vector<std::vector<UnitToken>>* tokens, const EvalConfig& cfg) {
  check(records.size() == features.size(), "speaker evaluation: record and feature counts differ");
  std::vector<std::string> names;
  for (const auto& r : records) names.push_back(r.speaker_id);
  const auto speakers = encode_labels(names);
  const std::size_t n_speakers = std::set<std::size_t>(speakers.begin(), speakers.end()).size();
  check(n_speakers >= 2, "speaker evaluation: need at least two speakers");

  Matrix means(features.size(), features.empty() ? 0 : features[0].dim());
  for (std::size_t i = 0; i < features.size(); ++i) {
    check(features[i].dim() == means.cols(), "speaker evaluation: feature dims differ");
    const Segmentation whole{{0, features[i].num_frames()}};
    const Matrix m = pool_segments(whole, features[i].data);
    std::copy(m.row(0).begin(), m.row(0).end(), means.row(i).begin());
  }
  const auto [train, test] = stratified_split(speakers, cfg.probe_test_fraction, cfg.probe_seed);
  auto pick = [&](const std::vector<std::size_t>& idx, Matrix& x, std::vector<std::size_t>& y) {
    x = Matrix(idx.size(), means.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::copy(means.row(idx[k]).begin(), means.row(idx[k]).end(), x.row(k).begin());
      y.push_back(speakers[idx[k]]);
    }
  };
  Matrix xtr, xte;
  std::vector<std::size_t> ytr, yte;
  pick(train, xtr, ytr);
  pick(test, xte, yte);
  SpeakerScores s;
  s.probe_accuracy = speaker_probe(xtr, ytr, xte, yte, {cfg.probe_epochs, cfg.probe_learning_rate});
  s.chance = 1.0 / static_cast<double>(n_speakers);
  if (tokens) {
    check(tokens->size() == records.size(), "speaker evaluation: token and record counts differ");
    std::vector<std::size_t> x, y;
    for (std::size_t i = 0; i < records.size(); ++i)
      for (const auto& t : (*tokens)[i]) {
        x.push_back(speakers[i]);
        y.push_back(t.unit);
      }
    s.unit_nmi = speaker_nmi(x, y);
  }
  return s;
}

nlohmann::json run_pipeline(const Config& cfg, std::size_t workers) {
  cfg.validate();
  check(!cfg.paths.manifest.empty(), "pipeline: paths.manifest is not set");
  const std::filesystem::path out_dir = cfg.paths.out_dir;
  const auto records = run_stage("load", [&] { return read_manifest(cfg.paths.manifest); });
  check(!records.empty(), "pipeline: empty manifest");
  auto features = run_stage("featurize", [&] { return load_features(records, cfg.featurizer, workers); });

  std::optional<TrainedModel> model;
  if (cfg.train_in_pipeline) {
    model = run_stage("train", [&] {
      const auto corpus = corpus_from_manifest(records, cfg.featurizer, cfg.perturb_config(), cfg.byol.seed);
      auto result = run_training(corpus, cfg.encoder, cfg.byol, {out_dir / "train", workers, nullptr});
      return TrainedModel{result.state.encoder, std::move(result.state.student)};
    });
  } else if (!cfg.paths.checkpoint.empty()) {
    model = run_stage("load-checkpoint", [&] { return load_model(cfg.paths.checkpoint); });
  }
  if (model)
    features = run_stage("encode", [&] { return encode_corpus(*model, features, cfg.segment_layer, workers); });

  const auto segmented = run_stage("segment", [&] { return segment_corpus(features, cfg.segmenter, workers); });
  const auto codebook = run_stage("cluster", [&] { return fit_corpus_codebook(segmented, cfg.clusterer); });
  const auto tokens = run_stage("assign", [&] { return assign_corpus(segmented, codebook); });

  json report;
  report["utterances"] = records.size();
  std::size_t n_segments = 0;
  for (const auto& s : segmented) n_segments += s.segmentation.num_segments();
  report["segments"] = n_segments;
  report["units"] = codebook.num_units;
  report["layer"] = model ? json(cfg.segment_layer) : json("input");
  const bool has_refs = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.alignments.has_value(); });
  report["metrics"] =
      has_refs ? run_stage("evaluate", [&] { return scores_to_json(evaluate_corpus(records, segmented, tokens, cfg.eval.tolerance)); })
               : json(nullptr);
  run_stage("write", [&] {
    std::filesystem::create_directories(out_dir);
    write_segments(records, segmented, out_dir / "segments.jsonl");
    write_units(records, tokens, out_dir / "units.jsonl");
    save_codebook(codebook, out_dir / "codebook");
    auto out = open_out(out_dir / "report.json");
    out << report.dump(2) << '\n';
    return 0;
  });
  return report;
}

std::vector<LayerSweepRow> layer_sweep(const std::vector<std::size_t>& layers,
                                       const std::function<std::vector<FrameFeatures>(std::size_t)>& features_for_layer,
                                       const std::vector<UtteranceRecord>& records, const Config& cfg,
                                       std::size_t workers) {
  std::vector<LayerSweepRow> rows;
  for (std::size_t layer : layers) {
    const auto features = features_for_layer(layer);
    check(features.size() == records.size(), "layer sweep: feature count differs from records");
    const auto segmented = segment_corpus(features, cfg.segmenter, workers);
    const auto codebook = fit_corpus_codebook(segmented, cfg.clusterer);
    rows.push_back({layer, evaluate_corpus(records, segmented, assign_corpus(segmented, codebook), cfg.eval.tolerance)});
  }
  return rows;
}

void write_sweep_csv(const std::vector<LayerSweepRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out.precision(8);
  out << "layer";
  for (const auto& c : score_columns()) out << ',' << c;
  out << '\n';
  for (const auto& r : rows) {
    out << r.layer;
    for (double v : score_values(r.scores)) out << ',' << v;
    out << '\n';
  }
  check(static_cast<bool>(out), "cannot write " + path.string());
}

void plot_ssm(const Matrix& z, const Segmentation& predicted, const std::vector<std::size_t>& reference,
              const std::filesystem::path& prefix) {
  check(z.rows() >= 1, "plot_ssm: empty features");
  const Matrix a = matmul_nt(z, z);
  const auto [lo, hi] = std::minmax_element(a.data().begin(), a.data().end());
  const double range = *hi - *lo;
  const std::size_t t = a.rows();
  std::string pixels(t * t, '\0');
  for (std::size_t i = 0; i < t * t; ++i) {
    const double v = range > 0.0 ? (a.data()[i] - *lo) / range : 0.0;
    pixels[i] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v)));
  }
  {
    auto out = open_out(prefix.string() + ".pgm");
    out << "P5\n" << t << ' ' << t << "\n255\n";
    out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    check(static_cast<bool>(out), "cannot write " + prefix.string() + ".pgm");
  }
  auto csv = open_out(prefix.string() + ".csv");
  csv << "kind,frame\n";
  for (std::size_t b : predicted.boundaries) csv << "predicted," << b << '\n';
  for (std::size_t b : reference) csv << "reference," << b << '\n';
  check(static_cast<bool>(csv), "cannot write " + prefix.string() + ".csv");
}

void write_segments(const std::vector<UtteranceRecord>& records, const std::vector<SegmentedUtterance>& segmented,
                    const std::filesystem::path& path) {
  check(records.size() == segmented.size(), "write_segments: count mismatch");
  auto out = open_out(path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& s = segmented[i];
    out << json{{"utterance_id", records[i].utterance_id},
                {"boundaries_frames", s.segmentation.boundaries},
                {"boundaries_seconds", boundaries_to_seconds(s.segmentation, s.frame_rate)}}
               .dump()
        << '\n';
  }
}

std::vector<Segmentation> read_segments(const std::vector<UtteranceRecord>& records,
                                        const std::filesystem::path& path) {
  const auto by_id = read_jsonl_by_id(path);
  std::vector<Segmentation> out;
  for (const auto& r : records) {
    const json& j = record_for(by_id, r.utterance_id, path);
    check(j.contains("boundaries_frames") && j["boundaries_frames"].is_array(),
          path.string() + ": record '" + r.utterance_id + "' lacks boundaries_frames");
    out.push_back(Segmentation{j["boundaries_frames"].get<std::vector<std::size_t>>()});
  }
  return out;
}

void write_units(const std::vector<UtteranceRecord>& records, const std::vector<std::vector<UnitToken>>& tokens,
                 const std::filesystem::path& path) {
  check(records.size() == tokens.size(), "write_units: count mismatch");
  auto out = open_out(path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    json list = json::array();
    for (const auto& t : tokens[i]) list.push_back({{"start", t.start}, {"end", t.end}, {"unit", t.unit}});
    out << json{{"utterance_id", records[i].utterance_id}, {"tokens", list}}.dump() << '\n';
  }
}

std::vector<std::vector<UnitToken>> read_units(const std::vector<UtteranceRecord>& records,
                                               const std::filesystem::path& path) {
  const auto by_id = read_jsonl_by_id(path);
  std::vector<std::vector<UnitToken>> out;
  for (const auto& r : records) {
    const json& j = record_for(by_id, r.utterance_id, path);
    std::vector<UnitToken> tokens;
    try {
      for (const auto& t : j.at("tokens"))
        tokens.push_back({t.at("start").get<std::size_t>(), t.at("end").get<std::size_t>(), t.at("unit").get<std::size_t>()});
    } catch (const json::exception& e) {
      fail(path.string() + ": malformed tokens for '" + r.utterance_id + "': " + e.what());
    }
    out.push_back(std::move(tokens));
  }
  return out;
}

void save_codebook(const Codebook& cb, const std::filesystem::path& dir) {
  cb.validate();
  std::filesystem::create_directories(dir);
  write_stns(to_stns(cb.centers), dir / "centers.stns");
  auto out = open_out(dir / "codebook.json");
  out << json{{"num_units", cb.num_units}, {"center_to_unit", cb.center_to_unit}}.dump(2) << '\n';
}

Codebook load_codebook(const std::filesystem::path& dir) {
  Codebook cb;
  cb.centers = from_stns(read_stns(dir / "centers.stns"));
  std::ifstream in(dir / "codebook.json");
  check(static_cast<bool>(in), "cannot open " + (dir / "codebook.json").string());
  const json j = json::parse(in, nullptr, false);
  try {
    check(!j.is_discarded(), "malformed codebook.json");
    cb.num_units = j.at("num_units").get<std::size_t>();
    cb.center_to_unit = j.at("center_to_unit").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    fail("malformed codebook.json: " + std::string(e.what()));
  }
  cb.validate();
  return cb;
}

}  // namespace syllabion
