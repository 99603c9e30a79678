#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "plm/fsio.hpp"
#include "plm/model.hpp"

namespace plm::io {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian raw; big-endian hosts unsupported");

enum class TaskKind { kSentence, kReply };

inline std::string task_name(TaskKind t) {
  return t == TaskKind::kSentence ? "sentence" : "reply";
}

inline TaskKind task_from_name(const std::string& s) {
  if (s == "sentence") return TaskKind::kSentence;
  if (s == "reply") return TaskKind::kReply;
  throw IoError("checkpoint: unknown task '" + s + "'");
}

template <typename S>
struct Checkpoint {
  net::ModelParams<S> params;
  std::uint64_t vocab_fingerprint = 0;
  TaskKind task = TaskKind::kSentence;
  std::uint64_t epochs_completed = 0;
  std::vector<std::string> lineage;  // one entry per training stage
};

namespace detail {

constexpr char kMagic[8] = {'P', 'L', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 18 || s[0] != '0' || s[1] != 'x')
    throw IoError("checkpoint: malformed fingerprint field");
  return std::stoull(s.substr(2), nullptr, 16);
}

template <typename S>
nlohmann::json arch_json(const net::ModelParams<S>& p) {
  nlohmann::json arch;
  arch["vocab_size"] = p.vocab_size();
  arch["embed_dim"] = p.embed_dim();
  std::vector<std::size_t> hidden;
  for (const auto& l : p.lstm_layers) hidden.push_back(l.hidden());
  arch["hidden"] = hidden;
  if (p.has_surplus()) {
    nlohmann::json sp;
    sp["kind"] = p.surplus_kind() == net::SurplusKind::kAffine ? "affine" : "lstm";
    sp["width"] = p.top_width();
    arch["surplus"] = sp;
  } else {
    arch["surplus"] = nullptr;
  }
  return arch;
}

template <typename S>
net::ModelParams<S> params_from_arch(const nlohmann::json& arch) {
  net::ModelParams<S> p;
  const std::size_t v = arch.at("vocab_size").get<std::size_t>();
  const std::size_t d = arch.at("embed_dim").get<std::size_t>();
  const auto hidden = arch.at("hidden").get<std::vector<std::size_t>>();
  if (v < 2 || d == 0 || hidden.empty()) throw IoError("checkpoint: malformed architecture");
  p.embedding = net::Matrix<S>(v, d);
  std::size_t in = d;
  for (std::size_t h : hidden) {
    net::LstmLayerParams<S> layer;
    layer.w_input = net::Matrix<S>(4 * h, in);
    layer.w_recurrent = net::Matrix<S>(4 * h, h);
    layer.bias = net::Vector<S>(4 * h, S(0));
    p.lstm_layers.push_back(std::move(layer));
    in = h;
  }
  if (!arch.at("surplus").is_null()) {
    const auto& sp = arch.at("surplus");
    const std::size_t w = sp.at("width").get<std::size_t>();
    const std::string kind = sp.at("kind").get<std::string>();
    if (kind == "affine") {
      if (w != in) throw IoError("checkpoint: affine surplus width mismatch");
      net::AffineSurplus<S> a;
      a.weight = net::Matrix<S>(w, in);
      a.bias = net::Vector<S>(w, S(0));
      p.surplus = net::SurplusVariant<S>(std::move(a));
    } else if (kind == "lstm") {
      net::LstmLayerParams<S> layer;
      layer.w_input = net::Matrix<S>(4 * w, in);
      layer.w_recurrent = net::Matrix<S>(4 * w, w);
      layer.bias = net::Vector<S>(4 * w, S(0));
      p.surplus = net::SurplusVariant<S>(std::move(layer));
    } else {
      throw IoError("checkpoint: unknown surplus kind '" + kind + "'");
    }
    in = w;
  }
  p.w_out = net::Matrix<S>(v, in);
  p.b_out = net::Vector<S>(v, S(0));
  return p;
}

template <typename From, typename To>
void append_payload_as(const net::ModelParams<From>& p, std::string& out) {
  net::visit_params(p, [&](const net::BlockRef&, std::span<const From> t) {
    if constexpr (std::is_same_v<From, To>) {
      out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(From));
    } else {
      std::vector<To> tmp(t.begin(), t.end());
      out.append(reinterpret_cast<const char*>(tmp.data()), tmp.size() * sizeof(To));
    }
  });
}

template <typename From, typename To>
void read_payload_as(const std::string& data, std::size_t offset, net::ModelParams<To>& p) {
  std::size_t pos = offset;
  net::visit_params(p, [&](const net::BlockRef& b, std::span<To> t) {
    const std::size_t bytes = t.size() * sizeof(From);
    if (pos + bytes > data.size())
      throw IoError("checkpoint: truncated payload at block " + net::block_name(b));
    if constexpr (std::is_same_v<From, To>) {
      std::memcpy(t.data(), data.data() + pos, bytes);
    } else {
      std::vector<From> tmp(t.size());
      std::memcpy(tmp.data(), data.data() + pos, bytes);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<To>(tmp[i]);
    }
    pos += bytes;
  });
  if (pos != data.size()) throw IoError("checkpoint: trailing bytes after payload");
}

}  // namespace detail

// Layout: 8-byte magic, u32 version, u64 header length, JSON header (dtype,
// architecture, gate order, fingerprint, task, lineage), then every tensor as
// raw little-endian scalars in visit_params order.
template <typename S>
void save_checkpoint(const Checkpoint<S>& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["dtype"] = sizeof(S) == 4 ? "f32" : "f64";
  header["gate_order"] = "ifgo";
  header["arch"] = detail::arch_json(ckpt.params);
  header["vocab_fingerprint"] = detail::hex64(ckpt.vocab_fingerprint);
  header["task"] = task_name(ckpt.task);
  header["epochs_completed"] = ckpt.epochs_completed;
  header["lineage"] = ckpt.lineage;
  const std::string htext = header.dump();  // nlohmann objects are key-sorted

  std::string out;
  out.append(detail::kMagic, sizeof(detail::kMagic));
  const std::uint32_t version = detail::kVersion;
  out.append(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t hlen = htext.size();
  out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.append(htext);
  if constexpr (sizeof(S) == 4) {
    detail::append_payload_as<S, float>(ckpt.params, out);
  } else {
    detail::append_payload_as<S, double>(ckpt.params, out);
  }
  write_file_atomic(path, out);
}

// When `cast` is false, the stored dtype must match S exactly.
template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path, bool cast = false) {
  const std::string data = read_file(path);
  constexpr std::size_t kPreamble = sizeof(detail::kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (data.size() < kPreamble) throw IoError("checkpoint: file too short for header");
  if (std::memcmp(data.data(), detail::kMagic, sizeof(detail::kMagic)) != 0)
    throw IoError("checkpoint: bad magic marker");
  std::uint32_t version;
  std::memcpy(&version, data.data() + sizeof(detail::kMagic), sizeof(version));
  if (version != detail::kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  std::uint64_t hlen;
  std::memcpy(&hlen, data.data() + sizeof(detail::kMagic) + sizeof(version), sizeof(hlen));
  if (kPreamble + hlen > data.size()) throw IoError("checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(kPreamble, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: unparsable header: ") + e.what());
  }

  Checkpoint<S> ckpt;
  try {
    const std::string dtype = header.at("dtype").get<std::string>();
    const std::string want = sizeof(S) == 4 ? "f32" : "f64";
    if (dtype != want && !cast)
      throw IoError("checkpoint: precision mismatch (stored " + dtype + ", requested " + want +
                    "); pass cast to convert");
    if (dtype != "f32" && dtype != "f64") throw IoError("checkpoint: unknown dtype " + dtype);
    if (header.at("gate_order").get<std::string>() != "ifgo")
      throw IoError("checkpoint: unsupported gate order");
    ckpt.params = detail::params_from_arch<S>(header.at("arch"));
    ckpt.vocab_fingerprint = detail::parse_hex64(header.at("vocab_fingerprint").get<std::string>());
    ckpt.task = task_from_name(header.at("task").get<std::string>());
    ckpt.epochs_completed = header.at("epochs_completed").get<std::uint64_t>();
    ckpt.lineage = header.at("lineage").get<std::vector<std::string>>();
    if (dtype == "f32") {
      detail::read_payload_as<float, S>(data, kPreamble + hlen, ckpt.params);
    } else {
      detail::read_payload_as<double, S>(data, kPreamble + hlen, ckpt.params);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed header field: ") + e.what());
  }
  return ckpt;
}

// Header inspection without constructing the model (reports dtype etc.).
inline nlohmann::json peek_checkpoint(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  constexpr std::size_t kPreamble = sizeof(detail::kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (data.size() < kPreamble) throw IoError("checkpoint: file too short for header");
  if (std::memcmp(data.data(), detail::kMagic, sizeof(detail::kMagic)) != 0)
    throw IoError("checkpoint: bad magic marker");
  std::uint64_t hlen;
  std::memcpy(&hlen, data.data() + sizeof(detail::kMagic) + sizeof(std::uint32_t), sizeof(hlen));
  if (kPreamble + hlen > data.size()) throw IoError("checkpoint: truncated header");
  try {
    return nlohmann::json::parse(data.substr(kPreamble, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: unparsable header: ") + e.what());
  }
}

}  // namespace plm::io
