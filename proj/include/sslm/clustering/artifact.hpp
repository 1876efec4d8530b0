// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary clustering artifact (all integers little-endian):
//   magic "SSLMCLST" | u32 version | u32 k | u32 dim | u32 min_n | u32 max_n
//   | f64 inertia | k*dim f32 centroids (row-major)
//   | u64 n | n * (u32 id_len, id bytes, u32 cluster)

#include <filesystem>
#include <fstream>

#include "sslm/clustering/embedding.hpp"
#include "sslm/clustering/kmeans.hpp"
#include "sslm/core/binary_io.hpp"

namespace sslm {

inline constexpr char kClusterMagic[9] = "SSLMCLST";
inline constexpr std::uint32_t kClusterVersion = 1;

struct ClusteringArtifact {
  Clustering clustering;
  HashedNgramEmbedder embedder;
};

inline void save_clustering(const std::filesystem::path& path, const Clustering& c,
                            const HashedNgramEmbedder& embedder) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(kClusterMagic, 8);
  binary::write_le(out, kClusterVersion);
  binary::write_le(out, static_cast<std::uint32_t>(c.k));
  binary::write_le(out, static_cast<std::uint32_t>(c.dim));
  binary::write_le(out, static_cast<std::uint32_t>(embedder.min_n));
  binary::write_le(out, static_cast<std::uint32_t>(embedder.max_n));
  binary::write_f64(out, c.inertia);
  for (double v : c.centroids) binary::write_f32(out, static_cast<float>(v));
  binary::write_le(out, static_cast<std::uint64_t>(c.assignments.size()));
  for (const auto& [id, cluster] : c.assignments) {
    binary::write_string(out, id);
    binary::write_le(out, static_cast<std::uint32_t>(cluster));
  }
  if (!out) throw IoError(path.string(), "write failed");
}

inline ClusteringArtifact load_clustering(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string what = path.string();
  if (!in) throw IoError(what, "cannot open");
  binary::expect_magic(in, kClusterMagic, what);
  if (binary::read_le<std::uint32_t>(in, what) != kClusterVersion) {
    throw IoError(what, "unsupported clustering version");
  }
  ClusteringArtifact a;
  auto& c = a.clustering;
  c.k = binary::read_le<std::uint32_t>(in, what);
  c.dim = binary::read_le<std::uint32_t>(in, what);
  a.embedder.dim = c.dim;
  a.embedder.min_n = binary::read_le<std::uint32_t>(in, what);
  a.embedder.max_n = binary::read_le<std::uint32_t>(in, what);
  c.inertia = binary::read_f64(in, what);
  c.centroids.resize(c.k * c.dim);
  for (auto& v : c.centroids) v = binary::read_f32(in, what);
  const auto n = binary::read_le<std::uint64_t>(in, what);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto id = binary::read_string(in, what);
    const auto cluster = binary::read_le<std::uint32_t>(in, what);
    if (cluster >= c.k) throw IoError(what, "assignment outside [0, k)");
    c.assignments.emplace(std::move(id), cluster);
  }
  return a;
}

}  // namespace sslm
