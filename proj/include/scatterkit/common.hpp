#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace sk {

// Error categories surfaced by the CLI as "error: <category>: <message>".
enum class ErrorCategory { Usage, Config, Io, Invariant, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), cat_(cat) {}
  ErrorCategory category() const { return cat_; }

  const char* category_name() const {
    switch (cat_) {
      case ErrorCategory::Usage: return "usage";
      case ErrorCategory::Config: return "config";
      case ErrorCategory::Io: return "io";
      case ErrorCategory::Invariant: return "invariant";
      case ErrorCategory::Numeric: return "numeric";
    }
    return "unknown";
  }

 private:
  ErrorCategory cat_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) { throw Error(ErrorCategory::Usage, msg); }
[[noreturn]] inline void fail_config(const std::string& msg) { throw Error(ErrorCategory::Config, msg); }
[[noreturn]] inline void fail_io(const std::string& msg) { throw Error(ErrorCategory::Io, msg); }
[[noreturn]] inline void fail_invariant(const std::string& msg) { throw Error(ErrorCategory::Invariant, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrorCategory::Numeric, msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail_invariant(msg);
}

// Log level comes from SCATTERKIT_LOG={error,info,debug}; default error.
enum class LogLevel : int { Error = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
  static LogLevel lvl = [] {
    const char* e = std::getenv("SCATTERKIT_LOG");
    if (!e) return LogLevel::Error;
    std::string s(e);
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    return LogLevel::Error;
  }();
  return lvl;
}

template <class... Args>
inline void log_at(LogLevel lvl, const char* fmt, Args... args) {
  if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
  std::fprintf(stderr, "[scatterkit] ");
  if constexpr (sizeof...(Args) == 0) {
    std::fputs(fmt, stderr);
  } else {
    std::fprintf(stderr, fmt, args...);
  }
  std::fprintf(stderr, "\n");
}

template <class... Args>
inline void log_info(const char* fmt, Args... args) { log_at(LogLevel::Info, fmt, args...); }
template <class... Args>
inline void log_debug(const char* fmt, Args... args) { log_at(LogLevel::Debug, fmt, args...); }

inline void log_info(const std::string& msg) { log_at(LogLevel::Info, "%s", msg.c_str()); }
inline void log_debug(const std::string& msg) { log_at(LogLevel::Debug, "%s", msg.c_str()); }

}  // namespace sk
