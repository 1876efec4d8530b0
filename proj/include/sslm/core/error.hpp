// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sslm {

// Base of every error the library throws on contract violations.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error("I/O error on '" + path + "': " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class EmptyCorpus : public Error {
 public:
  explicit EmptyCorpus(const std::string& what = "corpus is empty") : Error(what) {}
};

class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& what = "empty input") : Error(what) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& what) : Error("index error: " + what) {}
};

// A cluster that the specialization histogram needs but the generic set cannot supply.
class UnsupportedCluster : public Error {
 public:
  explicit UnsupportedCluster(std::size_t cluster)
      : Error("cluster " + std::to_string(cluster) +
              " has specialization mass but no generic support"),
        cluster_(cluster) {}
  std::size_t cluster() const noexcept { return cluster_; }

 private:
  std::size_t cluster_;
};

class StageDependencyError : public Error {
 public:
  StageDependencyError(const std::string& stage, const std::string& missing)
      : Error("missing upstream artifact '" + missing + "' (run stage '" + stage + "' first)"),
        stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t step, std::uint64_t batch_hash)
      : Error("non-finite loss at step " + std::to_string(step) + " (batch hash " +
              std::to_string(batch_hash) + ")"),
        step_(step),
        batch_hash_(batch_hash) {}
  std::size_t step() const noexcept { return step_; }
  std::uint64_t batch_hash() const noexcept { return batch_hash_; }

 private:
  std::size_t step_;
  std::uint64_t batch_hash_;
};

}  // namespace sslm
