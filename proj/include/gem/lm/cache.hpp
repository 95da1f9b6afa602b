#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>

#include "gem/error.hpp"

namespace gem::lm {

struct CacheStats {
  std::size_t entries = 0;
  std::uintmax_t bytes = 0;
};

/// Content-addressed on-disk store: <root>/<key[0:2]>/<key>.json. Keys are
/// SHA-256 hex digests of the canonical request. Readers share a lock;
/// writers are serialized and publish via rename, so a reader never sees a
/// partial entry (also across processes).
class DiskCache {
 public:
  explicit DiskCache(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw ConfigError("cannot create cache directory " + root_.string() + ": " + ec.message());
  }

  const std::filesystem::path& root() const { return root_; }

  std::optional<nlohmann::json> get(const std::string& key) const {
    std::shared_lock lock(mu_);
    std::ifstream in(path_for(key));
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      auto j = nlohmann::json::parse(ss.str());
      return j.at("response");
    } catch (const std::exception&) {
      return std::nullopt;  // torn or foreign file: treat as a miss
    }
  }

  void put(const std::string& key, const nlohmann::json& request, const nlohmann::json& response) {
    std::unique_lock lock(mu_);
    const auto target = path_for(key);
    std::filesystem::create_directories(target.parent_path());
    static std::atomic<std::uint64_t> counter{0};
    std::ostringstream tmpname;
    tmpname << target.filename().string() << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id())
            << '.' << counter.fetch_add(1);
    const auto tmp = target.parent_path() / tmpname.str();
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw Error("cannot write cache entry " + tmp.string());
      out << nlohmann::json{{"request", request}, {"response", response}}.dump();
    }
    std::filesystem::rename(tmp, target);
  }

  CacheStats inspect() const {
    std::shared_lock lock(mu_);
    CacheStats s;
    if (!std::filesystem::exists(root_)) return s;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root_)) {
      if (!e.is_regular_file() || e.path().extension() != ".json") continue;
      ++s.entries;
      s.bytes += e.file_size();
    }
    return s;
  }

  void clear() {
    std::unique_lock lock(mu_);
    for (const auto& e : std::filesystem::directory_iterator(root_)) std::filesystem::remove_all(e.path());
  }

 private:
  std::filesystem::path path_for(const std::string& key) const { return root_ / key.substr(0, 2) / (key + ".json"); }

  std::filesystem::path root_;
  mutable std::shared_mutex mu_;
};

}  // namespace gem::lm
