#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <string>

#include "plm/error.hpp"
#include "plm/rng.hpp"
#include "plm/train.hpp"

namespace plm::io {

// Sorted so hashing and round-trips are order-independent.
using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// `key = value` lines; blank lines and everything after '#' ignored.
inline ConfigMap parse_config(std::istream& in) {
  ConfigMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string value = detail::trim(body.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (out.count(key))
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    out[key] = value;
  }
  return out;
}

inline ConfigMap parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  return parse_config(in);
}

inline std::uint64_t config_hash(const ConfigMap& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : cfg) {
    h = fnv1a(k.data(), k.size(), h);
    h = fnv1a("=", 1, h);
    h = fnv1a(v.data(), v.size(), h);
    h = fnv1a("\n", 1, h);
  }
  return h;
}

namespace detail {

inline double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' needs a real number, got '" + v + "'");
  }
}

inline std::uint64_t to_count(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' needs a non-negative integer, got '" + v + "'");
  }
}

}  // namespace detail

// Every key must be a TrainConfig field; anything else is an error, so typos
// fail loudly instead of silently training with defaults.
inline net::TrainConfig train_config_from(const ConfigMap& cfg) {
  net::TrainConfig tc;
  for (const auto& [key, value] : cfg) {
    if (key == "lr") tc.lr = detail::to_real(key, value);
    else if (key == "lr_decay") tc.lr_decay = detail::to_real(key, value);
    else if (key == "lr_decay_start") tc.lr_decay_start = detail::to_count(key, value);
    else if (key == "clip") tc.clip = detail::to_real(key, value);
    else if (key == "epochs") tc.epochs = detail::to_count(key, value);
    else if (key == "batch_size") tc.batch_size = detail::to_count(key, value);
    else if (key == "bptt_cap") tc.bptt_cap = detail::to_count(key, value);
    else if (key == "seed") tc.seed = detail::to_count(key, value);
    else if (key == "precision") tc.precision = static_cast<int>(detail::to_count(key, value));
    else if (key == "validation_fraction") tc.validation_fraction = detail::to_real(key, value);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  tc.validate();
  return tc;
}

inline ConfigMap config_to_map(const net::TrainConfig& tc) {
  char buf[32];
  auto real = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  ConfigMap out;
  out["lr"] = real(tc.lr);
  out["lr_decay"] = real(tc.lr_decay);
  out["lr_decay_start"] = std::to_string(tc.lr_decay_start);
  out["clip"] = real(tc.clip);
  out["epochs"] = std::to_string(tc.epochs);
  out["batch_size"] = std::to_string(tc.batch_size);
  out["bptt_cap"] = std::to_string(tc.bptt_cap);
  out["seed"] = std::to_string(tc.seed);
  out["precision"] = std::to_string(tc.precision);
  out["validation_fraction"] = real(tc.validation_fraction);
  return out;
}

}  // namespace plm::io
