// SPDX-License-Identifier: Apache-2.0
#pragma once

// Checkpoint container:
//
//   "SSLMCKPT" | u32 version | string header (JSON) | u64 tensor count |
//   per tensor: string name | u32 rank | u64 dims[rank] | f32 data (row-major)
//
// All integers and floats little-endian, strings u32-length-prefixed. The header carries
// "kind" (slm, pn, mixture, lora), the configs needed to rebuild the tensor skeleton and
// a free-form "meta" object. Tensor names:
//
//   slm      tok_emb, pos_emb, layers.{l}.attn.qkv.weight, ..., layers.{l}.mlp.up.weight, ...
//   pn       shared names without mlp.*.weight, plus layers.{l}.mlp.up.T,
//            layers.{l}.mlp.down.T, layers.{l}.mlp.M and experts.E
//   mixture  experts.{i}.<slm name>
//   lora     layers.{l}.<matrix>.lora_A / lora_B

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sslm/core/binary_io.hpp"
#include "sslm/core/error.hpp"
#include "sslm/core/tensor.hpp"
#include "sslm/model/lora.hpp"
#include "sslm/model/mixture.hpp"
#include "sslm/model/pn.hpp"
#include "sslm/model/slm.hpp"

namespace sslm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointFile {
  nlohmann::json header;
  std::map<std::string, Tensor<float>> tensors;
};

inline void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                             const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write("SSLMCKPT", 8);
  binary::write_le(out, kCheckpointVersion);
  binary::write_string(out, header.dump());
  binary::write_le(out, static_cast<std::uint64_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    binary::write_string(out, name);
    binary::write_le(out, static_cast<std::uint32_t>(t->shape.size()));
    for (auto dim : t->shape) binary::write_le(out, static_cast<std::uint64_t>(dim));
    for (float v : t->data) binary::write_f32(out, v);
  }
  if (!out) throw IoError(path.string(), "write failed");
}

inline CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open checkpoint");
  const std::string what = path.string();
  binary::expect_magic(in, "SSLMCKPT", what);
  const auto version = binary::read_le<std::uint32_t>(in, what);
  if (version != kCheckpointVersion) throw IoError(what, "unsupported checkpoint version " + std::to_string(version));
  CheckpointFile f;
  try {
    f.header = nlohmann::json::parse(binary::read_string(in, what));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(what, std::string("bad header: ") + e.what());
  }
  const auto n = binary::read_le<std::uint64_t>(in, what);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = binary::read_string(in, what);
    const auto rank = binary::read_le<std::uint32_t>(in, what);
    std::vector<std::size_t> shape(rank);
    for (auto& dim : shape) dim = static_cast<std::size_t>(binary::read_le<std::uint64_t>(in, what));
    Tensor<float> t(shape);
    for (auto& v : t.data) v = binary::read_f32(in, what);
    f.tensors.emplace(std::move(name), std::move(t));
  }
  return f;
}

inline std::string checkpoint_kind(const CheckpointFile& f) { return f.header.value("kind", std::string()); }

namespace detail {

template <typename P>
std::vector<std::pair<std::string, Tensor<float>>> to_f32(const P& params, const std::string& prefix = "") {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  params.for_each([&](const std::string& name, const auto& t) { out.emplace_back(prefix + name, t.template cast<float>()); });
  return out;
}

inline void write_owned(const std::filesystem::path& path, const nlohmann::json& header,
                        const std::vector<std::pair<std::string, Tensor<float>>>& owned) {
  std::vector<std::pair<std::string, const Tensor<float>*>> refs;
  refs.reserve(owned.size());
  for (const auto& [n, t] : owned) refs.emplace_back(n, &t);
  write_checkpoint(path, header, refs);
}

// Fills every tensor of a skeleton from the file; names and shapes must match exactly.
template <typename P>
void fill_from(P& skeleton, const CheckpointFile& f, const std::string& prefix, std::size_t& used,
               const std::string& what) {
  skeleton.for_each([&](const std::string& name, auto& t) {
    const auto it = f.tensors.find(prefix + name);
    if (it == f.tensors.end()) throw IoError(what, "missing tensor " + prefix + name);
    if (it->second.shape != t.shape) throw IoError(what, "shape mismatch for tensor " + prefix + name);
    t.data.assign(it->second.data.begin(), it->second.data.end());
    ++used;
  });
}

inline void expect_kind(const CheckpointFile& f, const std::string& kind, const std::string& what) {
  if (checkpoint_kind(f) != kind) {
    throw IoError(what, "expected a '" + kind + "' checkpoint, found '" + checkpoint_kind(f) + "'");
  }
}

inline void expect_all_used(const CheckpointFile& f, std::size_t used, const std::string& what) {
  if (used != f.tensors.size()) throw IoError(what, "checkpoint holds unexpected extra tensors");
}

}  // namespace detail

template <typename T>
void save_slm(const std::filesystem::path& path, const SlmParams<T>& p, const nlohmann::json& meta = nlohmann::json::object()) {
  detail::write_owned(path, {{"kind", "slm"}, {"model", p.config}, {"meta", meta}}, detail::to_f32(p));
}

template <typename T>
SlmParams<T> slm_from_checkpoint(const CheckpointFile& f, const std::string& what) {
  detail::expect_kind(f, "slm", what);
  SlmParams<T> p = build_slm<T>(f.header.at("model").get<ModelConfig>(), 0);
  std::size_t used = 0;
  detail::fill_from(p, f, "", used, what);
  detail::expect_all_used(f, used, what);
  return p;
}

template <typename T>
SlmParams<T> load_slm(const std::filesystem::path& path) {
  return slm_from_checkpoint<T>(read_checkpoint(path), path.string());
}

template <typename T>
void save_pn(const std::filesystem::path& path, const PnParams<T>& p, const nlohmann::json& meta = nlohmann::json::object()) {
  detail::write_owned(path, {{"kind", "pn"}, {"model", p.config}, {"pn", p.pn}, {"meta", meta}}, detail::to_f32(p));
}

template <typename T>
PnParams<T> load_pn(const std::filesystem::path& path) {
  const auto f = read_checkpoint(path);
  detail::expect_kind(f, "pn", path.string());
  PnParams<T> p = build_pn<T>(f.header.at("model").get<ModelConfig>(), f.header.at("pn").get<PnConfig>(), 0);
  std::size_t used = 0;
  detail::fill_from(p, f, "", used, path.string());
  detail::expect_all_used(f, used, path.string());
  return p;
}

template <typename T>
void save_mixture(const std::filesystem::path& path, const MixtureParams<T>& m,
                  const nlohmann::json& meta = nlohmann::json::object()) {
  m.validate();
  std::vector<std::pair<std::string, Tensor<float>>> owned;
  for (std::size_t i = 0; i < m.k(); ++i) {
    auto part = detail::to_f32(m.experts[i], "experts." + std::to_string(i) + ".");
    std::move(part.begin(), part.end(), std::back_inserter(owned));
  }
  detail::write_owned(path, {{"kind", "mixture"}, {"model", m.config()}, {"k", m.k()}, {"meta", meta}}, owned);
}

template <typename T>
MixtureParams<T> load_mixture(const std::filesystem::path& path) {
  const auto f = read_checkpoint(path);
  detail::expect_kind(f, "mixture", path.string());
  const auto cfg = f.header.at("model").get<ModelConfig>();
  const auto k = f.header.at("k").get<std::size_t>();
  MixtureParams<T> m;
  std::size_t used = 0;
  for (std::size_t i = 0; i < k; ++i) {
    m.experts.push_back(build_slm<T>(cfg, 0));
    detail::fill_from(m.experts.back(), f, "experts." + std::to_string(i) + ".", used, path.string());
  }
  detail::expect_all_used(f, used, path.string());
  return m;
}

template <typename T>
void save_lora(const std::filesystem::path& path, const LoraAdapters<T>& ad, const ModelConfig& base_config,
               const nlohmann::json& meta = nlohmann::json::object()) {
  detail::write_owned(path, {{"kind", "lora"}, {"model", base_config}, {"lora", ad.config}, {"meta", meta}},
                      detail::to_f32(ad));
}

template <typename T>
LoraAdapters<T> load_lora(const std::filesystem::path& path, const SlmParams<T>& base) {
  const auto f = read_checkpoint(path);
  detail::expect_kind(f, "lora", path.string());
  if (!(f.header.at("model").get<ModelConfig>() == base.config)) {
    throw ConfigError("LoRA checkpoint was trained against a different ModelConfig");
  }
  LoraAdapters<T> ad = build_lora(base, f.header.at("lora").get<LoraConfig>(), 0);
  std::size_t used = 0;
  detail::fill_from(ad, f, "", used, path.string());
  detail::expect_all_used(f, used, path.string());
  return ad;
}

}  // namespace sslm
