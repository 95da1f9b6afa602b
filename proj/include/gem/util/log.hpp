#pragma once

#include <atomic>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace gem::log {

enum class Level { debug, info, warn, error };

namespace detail {

struct State {
  std::mutex mu;
  Level threshold = Level::info;
  std::function<void(Level, const std::string&)> sink;
  std::atomic<std::size_t> warnings{0};
};

inline State& state() {
  static State s;
  return s;
}

inline const char* level_name(Level l) {
  switch (l) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
  }
  return "?";
}

}  // namespace detail

inline void set_level(Level l) {
  std::lock_guard lock(detail::state().mu);
  detail::state().threshold = l;
}

/// Replace the stderr sink (tests capture warnings this way). Pass an empty
/// function to restore stderr.
inline void set_sink(std::function<void(Level, const std::string&)> sink) {
  std::lock_guard lock(detail::state().mu);
  detail::state().sink = std::move(sink);
}

inline std::size_t warning_count() { return detail::state().warnings.load(); }

inline void write(Level l, const std::string& msg) {
  auto& s = detail::state();
  if (l >= Level::warn) s.warnings.fetch_add(1);
  std::lock_guard lock(s.mu);
  if (s.sink) {
    s.sink(l, msg);
    return;
  }
  if (l < s.threshold) return;
  std::cerr << "[gem " << detail::level_name(l) << "] " << msg << '\n';
}

inline void debug(const std::string& msg) { write(Level::debug, msg); }
inline void info(const std::string& msg) { write(Level::info, msg); }
inline void warn(const std::string& msg) { write(Level::warn, msg); }
inline void error(const std::string& msg) { write(Level::error, msg); }

}  // namespace gem::log
