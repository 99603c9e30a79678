#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "plm/checkpoint.hpp"
#include "plm/config.hpp"
#include "plm/fsio.hpp"

namespace plm::io {

// Reproducibility record written next to every experiment's outputs.  No
// timestamps: two runs of the same command must produce identical bytes.
struct Manifest {
  std::string command;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  ConfigMap config;
  std::uint64_t seed = 0;
};

inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  nlohmann::json j;
  j["command"] = m.command;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["config"] = m.config;
  j["config_hash"] = detail::hex64(config_hash(m.config));
  j["seed"] = m.seed;
  j["format_version"] = 1;
  write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace plm::io
