#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace hila::log {

using Sink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}
inline Sink& sink() {
  static Sink s = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return s;
}
}  // namespace detail

/// Replace the warning sink; returns the previous one so callers can restore it.
inline Sink set_sink(Sink s) {
  std::lock_guard lock(detail::sink_mutex());
  return std::exchange(detail::sink(), std::move(s));
}

inline void warn(const std::string& msg) {
  std::lock_guard lock(detail::sink_mutex());
  if (detail::sink()) detail::sink()(msg);
}

/// Captures warnings for the lifetime of the object.
class ScopedCapture {
 public:
  explicit ScopedCapture(std::function<void(const std::string&)> f) : prev_(set_sink(std::move(f))) {}
  ~ScopedCapture() { set_sink(std::move(prev_)); }
  ScopedCapture(const ScopedCapture&) = delete;
  ScopedCapture& operator=(const ScopedCapture&) = delete;

 private:
  Sink prev_;
};

}  // namespace hila::log
