#include "syllabion/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "syllabion/error.hpp"

namespace syllabion {
namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T load_le(const unsigned char* p) {
  T v{};
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(&v, p, sizeof(T));
  } else {
    unsigned char tmp[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) tmp[i] = p[sizeof(T) - 1 - i];
    std::memcpy(&v, tmp, sizeof(T));
  }
  return v;
}

template <typename T>
void store_le(std::vector<unsigned char>& out, T v) {
  unsigned char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  if constexpr (std::endian::native != std::endian::little) std::reverse(tmp, tmp + sizeof(T));
  out.insert(out.end(), tmp, tmp + sizeof(T));
}

void spit(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail("write failed for " + path.string());
}

}  // namespace

void Waveform::validate() const {
  check(sample_rate > 0.0, "waveform sample_rate must be positive");
  for (double s : samples) check(std::isfinite(s), "waveform contains a non-finite sample");
}

void FrameFeatures::validate() const {
  check(data.rows() >= 1 && data.cols() >= 1, "features must have T >= 1 and D >= 1");
  check(frame_rate > 0.0, "features frame_rate must be positive");
  check(all_finite(data), "features contain a non-finite entry");
}

// ---------------------------------------------------------------- WAV

Waveform read_wav(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(where + "malformed header (not RIFF/WAVE)");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* payload = nullptr;
  std::size_t payload_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const auto size = load_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) fail(where + "malformed header (truncated chunk)");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) fail(where + "malformed header (short fmt chunk)");
      format = load_le<std::uint16_t>(chunk + 8);
      channels = load_le<std::uint16_t>(chunk + 10);
      rate = load_le<std::uint32_t>(chunk + 12);
      bits = load_le<std::uint16_t>(chunk + 22);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      payload = bytes.data() + body;
      payload_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || payload == nullptr) fail(where + "malformed header (missing fmt or data chunk)");
  if (channels != 1) fail(where + "multichannel unsupported");
  if (rate == 0) fail(where + "malformed header (zero sample rate)");

  Waveform w;
  w.sample_rate = rate;
  if (format == 1 && bits == 16) {
    const std::size_t n = payload_size / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      w.samples[i] = load_le<std::int16_t>(payload + 2 * i) / 32768.0;
  } else if (format == 3 && bits == 32) {
    const std::size_t n = payload_size / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) w.samples[i] = load_le<float>(payload + 4 * i);
  } else {
    fail(where + "unsupported encoding (format " + std::to_string(format) + ", " +
         std::to_string(bits) + " bits)");
  }
  w.validate();
  return w;
}

void write_wav(const Waveform& w, const std::filesystem::path& path, WavEncoding encoding) {
  w.validate();
  const bool pcm = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_size = static_cast<std::uint32_t>(w.samples.size() * (bits / 8));
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  store_le<std::uint32_t>(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  store_le<std::uint32_t>(out, 16);
  store_le<std::uint16_t>(out, pcm ? 1 : 3);
  store_le<std::uint16_t>(out, 1);
  store_le<std::uint32_t>(out, rate);
  store_le<std::uint32_t>(out, rate * (bits / 8));
  store_le<std::uint16_t>(out, bits / 8);
  store_le<std::uint16_t>(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  store_le<std::uint32_t>(out, data_size);
  for (double s : w.samples) {
    if (pcm) {
      const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
      store_le<std::int16_t>(out, static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
    } else {
      store_le<float>(out, static_cast<float>(s));
    }
  }
  spit(out, path);
}

// ---------------------------------------------------------------- STNS

StnsTensor read_stns(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const std::string where = path.string() + ": ";
  if (bytes.size() < 16) fail(where + "truncated header");
  if (std::memcmp(bytes.data(), "STNS", 4) != 0) fail(where + "bad magic");
  const auto version = load_le<std::uint32_t>(bytes.data() + 4);
  if (version != kStnsVersion) fail(where + "unsupported version " + std::to_string(version));
  const auto dtype = load_le<std::uint32_t>(bytes.data() + 8);
  if (dtype != kStnsDtypeF32) fail(where + "dtype must be f32 (code 1), got " + std::to_string(dtype));
  const auto ndim = load_le<std::uint32_t>(bytes.data() + 12);
  if (ndim == 0) fail(where + "rank must be >= 1");

  const std::size_t header = 16 + std::size_t{ndim} * 8;
  if (bytes.size() < header) fail(where + "truncated header");
  StnsTensor t;
  t.shape.resize(ndim);
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    t.shape[i] = load_le<std::uint64_t>(bytes.data() + 16 + 8 * i);
    if (t.shape[i] != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / t.shape[i])
      fail(where + "dimension overflow");
    count *= t.shape[i];
  }
  if (count > (bytes.size() - header) / 4 || header + count * 4 != bytes.size())
    fail(where + "payload size does not match dimensions");
  t.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) t.values[i] = load_le<float>(bytes.data() + header + 4 * i);
  return t;
}

void write_stns(const StnsTensor& t, const std::filesystem::path& path) {
  check(!t.shape.empty(), "rank must be >= 1");
  std::uint64_t count = 1;
  for (auto d : t.shape) count *= d;
  check(count == t.values.size(), "STNS shape does not match value count");
  std::vector<unsigned char> out;
  out.reserve(16 + 8 * t.shape.size() + 4 * t.values.size());
  out.insert(out.end(), {'S', 'T', 'N', 'S'});
  store_le<std::uint32_t>(out, kStnsVersion);
  store_le<std::uint32_t>(out, kStnsDtypeF32);
  store_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) store_le<std::uint64_t>(out, d);
  for (float v : t.values) store_le<float>(out, v);
  spit(out, path);
}

StnsTensor to_stns(const Matrix& m) {
  StnsTensor t;
  t.shape = {m.rows(), m.cols()};
  t.values.reserve(m.size());
  for (double v : m.data()) t.values.push_back(static_cast<float>(v));
  return t;
}

Matrix from_stns(const StnsTensor& t) {
  std::size_t rows = 0, cols = 0;
  if (t.shape.size() == 1) {
    rows = t.shape[0];
    cols = 1;
  } else if (t.shape.size() == 2) {
    rows = t.shape[0];
    cols = t.shape[1];
  } else {
    fail("expected a rank-1 or rank-2 tensor, got rank " + std::to_string(t.shape.size()));
  }
  return Matrix(rows, cols, std::vector<double>(t.values.begin(), t.values.end()));
}

FrameFeatures read_tensor(const std::filesystem::path& path, double frame_rate) {
  FrameFeatures f{from_stns(read_stns(path)), frame_rate};
  check(f.data.rows() >= 1 && f.data.cols() >= 1, path.string() + ": empty feature tensor");
  return f;
}

void write_tensor(const FrameFeatures& t, const std::filesystem::path& path) {
  write_stns(to_stns(t.data), path);
}

// ---------------------------------------------------------------- manifest

namespace {

std::optional<std::string> optional_path(const nlohmann::json& j, const char* key,
                                         const std::filesystem::path& base_dir) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  std::filesystem::path p = j.at(key).get<std::string>();
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return p.string();
}

UtteranceRecord parse_record(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  UtteranceRecord r;
  r.utterance_id = j.at("utterance_id").get<std::string>();
  r.speaker_id = j.at("speaker_id").get<std::string>();
  check(!r.utterance_id.empty(), "empty utterance_id");
  r.audio = optional_path(j, "audio", base_dir);
  r.features = optional_path(j, "features", base_dir);
  if (j.contains("alignments") && !j.at("alignments").is_null()) {
    std::vector<AlignmentEntry> entries;
    for (const auto& a : j.at("alignments")) {
      AlignmentEntry e{a.at("start").get<double>(), a.at("end").get<double>(),
                       a.at("label").get<std::string>()};
      check(e.start >= 0.0 && e.start < e.end,
            "alignment entry must satisfy 0 <= start < end (label '" + e.label + "')");
      check(!e.label.empty(), "alignment label must be nonempty");
      entries.push_back(std::move(e));
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < entries.size(); ++i)
      if (entries[i].start < entries[i - 1].end) r.overlapping_alignments = true;
    r.alignments = std::move(entries);
  }
  return r;
}

}  // namespace

std::vector<UtteranceRecord> parse_manifest(const std::string& text,
                                            const std::filesystem::path& base_dir) {
  std::vector<UtteranceRecord> records;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    UtteranceRecord r;
    try {
      r = parse_record(nlohmann::json::parse(line), base_dir);
    } catch (const nlohmann::json::exception& e) {
      fail("manifest line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const Error& e) {
      fail("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(r.utterance_id).second)
      fail("manifest line " + std::to_string(line_no) + ": duplicate utterance_id '" +
           r.utterance_id + "'");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()), path.parent_path());
}

void write_manifest(const std::vector<UtteranceRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::json j;
    j["utterance_id"] = r.utterance_id;
    j["speaker_id"] = r.speaker_id;
    j["audio"] = r.audio ? nlohmann::json(*r.audio) : nlohmann::json(nullptr);
    j["features"] = r.features ? nlohmann::json(*r.features) : nlohmann::json(nullptr);
    if (r.alignments) {
      j["alignments"] = nlohmann::json::array();
      for (const auto& a : *r.alignments)
        j["alignments"].push_back({{"start", a.start}, {"end", a.end}, {"label", a.label}});
    } else {
      j["alignments"] = nullptr;
    }
    out << j.dump() << '\n';
  }
}

}  // namespace syllabion
