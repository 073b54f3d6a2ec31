#pragma once

#include "routeentry/errors.hpp"
#include "routeentry/stats.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace routeentry::manifest {

inline constexpr const char* tool_version = "0.1.0";

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path + ": cannot open for digest");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = stats::fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    if (in.eof()) break;
  }
  return hex64(h);
}

class RunManifest {
public:
  RunManifest(std::string subcommand, std::string config_line)
      : subcommand_(std::move(subcommand)), config_(std::move(config_line)),
        start_(std::chrono::steady_clock::now()) {}

  void add_input(const std::string& path) { inputs_.push_back({path, file_digest(path)}); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }

  void write(const std::string& out_dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    nlohmann::ordered_json j;
    j["subcommand"] = subcommand_;
    j["tool_version"] = tool_version;
    j["config"] = config_;
    j["config_hash"] = hex64(stats::fnv1a64(config_));
    nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
    for (const auto& [path, digest] : inputs_) {
      inputs.push_back({{"path", path}, {"digest", digest}});
    }
    j["inputs"] = std::move(inputs);
    if (seed_) j["seed"] = *seed_;
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start_);
    j["wall_ms"] = elapsed.count();
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    out << j.dump(2) << "\n";
  }

private:
  std::string subcommand_;
  std::string config_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::optional<std::uint64_t> seed_;
  std::chrono::steady_clock::time_point start_;
};

} // namespace routeentry::manifest
