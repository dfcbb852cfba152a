#include "erfseg/cli/manifest.hpp"

#include <array>
#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

#include "erfseg/error.hpp"
#include "erfseg/hash.hpp"

#ifndef ERFSEG_VERSION
#define ERFSEG_VERSION "unknown"
#endif

namespace erfseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string code_version() { return std::string("erfseg ") + ERFSEG_VERSION; }

std::string hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = kFnvOffset;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    const auto n = static_cast<std::size_t>(in.gcount());
    h = fnv1a(std::span(reinterpret_cast<const unsigned char*>(buf.data()), n), h);
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

namespace {

json to_json(const RunManifest& m) {
  json arts = json::array();
  for (const auto& a : m.artifacts) {
    json j{{"path", a.path}};
    j["bytes"] = a.bytes ? json(*a.bytes) : json(nullptr);
    j["fnv1a"] = a.fnv1a ? json(*a.fnv1a) : json(nullptr);
    arts.push_back(std::move(j));
  }
  json j{{"command", m.command},
         {"code_version", m.code_version},
         {"seed", m.seed},
         {"started_at", m.started_at},
         {"wall_clock_seconds", m.wall_clock_seconds},
         {"status", m.status},
         {"config", m.config_toml},
         {"artifacts", std::move(arts)}};
  j["param_count"] = m.param_count ? json(*m.param_count) : json(nullptr);
  return j;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void write_manifest(const fs::path& dir, const RunManifest& m) {
  fs::create_directories(dir);
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << to_json(m).dump(2) << '\n';
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, dir / "manifest.json");
}

RunManifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no manifest.json in " + dir.string());
  try {
    const json j = json::parse(in);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.code_version = j.at("code_version").get<std::string>();
    m.config_toml = j.at("config").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("param_count").is_null()) m.param_count = j.at("param_count").get<std::size_t>();
    m.started_at = j.at("started_at").get<std::string>();
    m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    m.status = j.at("status").get<std::string>();
    for (const auto& a : j.at("artifacts")) {
      Artifact art{a.at("path").get<std::string>(), std::nullopt, std::nullopt};
      if (!a.at("bytes").is_null()) art.bytes = a.at("bytes").get<std::uint64_t>();
      if (!a.at("fnv1a").is_null()) art.fnv1a = a.at("fnv1a").get<std::string>();
      m.artifacts.push_back(std::move(art));
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError((dir / "manifest.json").string() + ": " + e.what());
  }
}

std::vector<std::string> verify_manifest(const fs::path& dir) {
  const RunManifest m = read_manifest(dir);
  std::vector<std::string> problems;
  if (m.status != "complete") problems.push_back("run status is '" + m.status + "', not 'complete'");
  for (const auto& a : m.artifacts) {
    const fs::path p = dir / a.path;
    if (!fs::is_regular_file(p)) {
      problems.push_back("missing: " + a.path);
      continue;
    }
    if (!a.bytes || !a.fnv1a) {
      problems.push_back("no digest recorded: " + a.path);
      continue;
    }
    if (fs::file_size(p) != *a.bytes) {
      problems.push_back("size changed: " + a.path);
    } else if (hash_file(p) != *a.fnv1a) {
      problems.push_back("content changed: " + a.path);
    }
  }
  return problems;
}

ManifestWriter::ManifestWriter(fs::path dir, RunManifest m)
    : dir_(std::move(dir)), m_(std::move(m)), start_(std::chrono::steady_clock::now()) {
  m_.status = "running";
  m_.code_version = code_version();
  m_.started_at = utc_now();
  write_manifest(dir_, m_);
}

void ManifestWriter::finish() {
  for (auto& a : m_.artifacts) {
    const fs::path p = dir_ / a.path;
    if (!fs::is_regular_file(p)) throw IoError("expected output missing: " + p.string());
    a.bytes = fs::file_size(p);
    a.fnv1a = hash_file(p);
  }
  m_.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  m_.status = "complete";
  write_manifest(dir_, m_);
}

}  // namespace erfseg::cli
