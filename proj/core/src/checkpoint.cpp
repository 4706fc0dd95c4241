#include "syllabion/checkpoint.hpp"

#include <fstream>

#include "syllabion/error.hpp"
#include "syllabion/io.hpp"

namespace syllabion {

namespace {

constexpr const char* kIndexName = "index.json";

std::string tensor_file(const std::string& store, const std::string& name) {
  return store + "." + name + ".stns";
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  check(!ec, "checkpoint: cannot create directory " + dir.string() + ": " + ec.message());
  nlohmann::json index;
  index["step"] = ckpt.step;
  index["meta"] = ckpt.meta;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [store_name, store] : ckpt.stores) {
    check(!store_name.empty() && store_name.find('/') == std::string::npos,
          "checkpoint: invalid store name '" + store_name + "'");
    for (const auto& p : store) {
      const std::string file = tensor_file(store_name, p.name);
      write_stns(to_stns(p.value), dir / file);
      tensors.push_back({{"store", store_name},
                         {"name", p.name},
                         {"file", file},
                         {"shape", {p.value.rows(), p.value.cols()}},
                         {"trainable", p.trainable},
                         {"reinitialized", p.reinitialized},
                         {"buffer", p.buffer}});
    }
  }
  index["tensors"] = std::move(tensors);
  std::ofstream out(dir / kIndexName);
  out << index.dump(2) << '\n';
  check(static_cast<bool>(out), "checkpoint: cannot write " + (dir / kIndexName).string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / kIndexName);
  check(static_cast<bool>(in), "checkpoint: cannot open " + (dir / kIndexName).string());
  nlohmann::json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception& e) {
    fail("checkpoint: malformed index.json: " + std::string(e.what()));
  }
  Checkpoint ckpt;
  try {
    ckpt.step = index.at("step").get<long long>();
    ckpt.meta = index.value("meta", nlohmann::json::object());
    for (const auto& t : index.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      Matrix value = from_stns(read_stns(dir / t.at("file").get<std::string>()));
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      check(shape.size() == 2 && shape[0] == value.rows() && shape[1] == value.cols(),
            "checkpoint: shape mismatch for tensor '" + name + "'");
      ckpt.stores[t.at("store").get<std::string>()].add(Param{name, std::move(value), t.at("trainable").get<bool>(),
                                                              t.at("reinitialized").get<bool>(),
                                                              t.at("buffer").get<bool>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail("checkpoint: malformed index.json: " + std::string(e.what()));
  }
  return ckpt;
}

}  // namespace syllabion
