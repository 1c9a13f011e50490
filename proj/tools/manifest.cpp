// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "manifest.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>

#include "mxsim/hash.hpp"
#include "mxsim/tensor_io.hpp"

namespace mxsim::cli {

std::string git_describe() { return MXSIM_GIT_DESCRIBE; }

std::string file_hash(const std::filesystem::path& path) {
  Fnv1a h;
  if (std::filesystem::is_directory(path)) {
    // Sorted so the hash does not depend on directory iteration order.
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(path)) {
      if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      h.update(std::filesystem::relative(f, path).generic_string());
      h.update(file_hash(f));
    }
    return h.hex();
  }
  h.update(read_file_bytes(path));
  return h.hex();
}

RunManifest::RunManifest(std::string command, std::vector<std::string> args)
    : command_(std::move(command)), args_(std::move(args)), started_(std::chrono::system_clock::now()) {}

void RunManifest::add_config(const std::string& role, const std::filesystem::path& path) {
  configs_[role] = path.string();
  add_input(path);
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs_[path.string()] = file_hash(path);
}

void RunManifest::set_effective(const std::string& key, nlohmann::json value) {
  effective_[key] = std::move(value);
}

void RunManifest::add_output(const std::filesystem::path& path) { outputs_.push_back(path.string()); }

nlohmann::json RunManifest::identity() const {
  return {{"command", command_}, {"args", args_},           {"seed", seed_},
          {"configs", configs_}, {"input_hashes", inputs_}, {"effective", effective_},
          {"outputs", outputs_}, {"git_describe", git_describe()}};
}

std::string RunManifest::hash() const {
  Fnv1a h;
  h.update(identity().dump());
  return h.hex();
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j = identity();
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(started_);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  j["wall_clock"] = {{"started_utc", stamp},
                     {"elapsed_s", std::chrono::duration<double>(now - started_).count()}};
  j["manifest_hash"] = hash();
  return j;
}

void RunManifest::write_sidecar(const std::filesystem::path& output) const {
  const std::filesystem::path file = std::filesystem::is_directory(output)
                                         ? output / "manifest.json"
                                         : std::filesystem::path(output.string() + ".manifest.json");
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << to_json().dump(2) << '\n';
}

}  // namespace mxsim::cli
