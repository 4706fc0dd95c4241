#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "syllabion/neural.hpp"

namespace syllabion {

// A directory holding one `<store>.<tensor>.stns` file per tensor plus an
// index.json with names, shapes, flags, the step counter and free-form meta.
// Tensors pass through f32 on disk.
struct Checkpoint {
  std::map<std::string, ParamStore> stores;
  long long step = 0;
  nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace syllabion
