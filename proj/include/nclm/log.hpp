#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <string>

namespace nclm {

/// Structured stderr log line: ISO-8601 UTC timestamp, level, key=value text.
inline void log_line(const char* level, const std::string& message) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm);
  std::cerr << stamp << " " << level << " " << message << "\n";
}

inline void log_info(const std::string& message) { log_line("INFO", message); }
inline void log_warn(const std::string& message) { log_line("WARN", message); }

}  // namespace nclm
