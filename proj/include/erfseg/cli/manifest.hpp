#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace erfseg::cli {

/// One output file, relative to the run directory.
struct Artifact {
  std::string path;
  std::optional<std::uint64_t> bytes;  // set once the run has finished
  std::optional<std::string> fnv1a;    // 16 lowercase hex digits
};

/// manifest.json of a run directory. It is written (atomically) when a
/// command starts, with status "running" and the planned artifacts, and
/// rewritten with sizes and FNV-1a digests when it completes.
struct RunManifest {
  std::string command;
  std::string code_version;
  std::string config_toml;
  std::uint64_t seed = 0;
  std::optional<std::size_t> param_count;
  std::string started_at;  // UTC, ISO 8601
  double wall_clock_seconds = 0.0;
  std::string status = "running";
  std::vector<Artifact> artifacts;
};

/// 64-bit FNV-1a of a file's bytes as 16 hex digits. Throws IoError.
std::string hash_file(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& dir, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& dir);

/// Problems found in `dir` (empty when everything matches): a run that never
/// finished, missing artifacts, or artifacts whose size or digest changed.
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

/// Writes the "running" manifest on construction and the completed one on
/// finish(), recording the elapsed wall-clock time.
class ManifestWriter {
 public:
  ManifestWriter(std::filesystem::path dir, RunManifest m);
  RunManifest& manifest() { return m_; }
  /// Hashes every listed artifact; throws IoError if one is missing.
  void finish();

 private:
  std::filesystem::path dir_;
  RunManifest m_;
  std::chrono::steady_clock::time_point start_;
};

/// Version string stamped into manifests.
std::string code_version();

}  // namespace erfseg::cli
