// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Provenance record written next to every CLI output. The hash covers
// everything that determines the output bytes and nothing that varies
// between reruns, so equal hashes mean reproducible outputs.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace mxsim::cli {

class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> args);

  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_config(const std::string& role, const std::filesystem::path& path);
  // Content hash of a file the command read.
  void add_input(const std::filesystem::path& path);
  void set_effective(const std::string& key, nlohmann::json value);
  void add_output(const std::filesystem::path& path);

  [[nodiscard]] std::string hash() const;
  [[nodiscard]] nlohmann::json to_json() const;  // includes wall clock
  // Writes <output>.manifest.json (or <dir>/manifest.json for a directory).
  void write_sidecar(const std::filesystem::path& output) const;

 private:
  [[nodiscard]] nlohmann::json identity() const;

  std::string command_;
  std::vector<std::string> args_;
  std::uint64_t seed_ = 0;
  std::map<std::string, std::string> configs_;
  std::map<std::string, std::string> inputs_;
  nlohmann::json effective_ = nlohmann::json::object();
  std::vector<std::string> outputs_;
  std::chrono::system_clock::time_point started_;
};

std::string git_describe();
std::string file_hash(const std::filesystem::path& path);

}  // namespace mxsim::cli
