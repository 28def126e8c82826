#pragma once

// Minimal leveled logging to stderr. The level comes from the
// MANEUVER_REC_LOG environment variable (error, warn, info, debug).

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace maneuver::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

inline Level parse_level(std::string_view s, Level fallback = Level::info) {
    if (s == "error") return Level::error;
    if (s == "warn" || s == "warning") return Level::warn;
    if (s == "info") return Level::info;
    if (s == "debug") return Level::debug;
    return fallback;
}

inline Level& threshold() {
    static Level level = [] {
        const char* env = std::getenv("MANEUVER_REC_LOG");
        return env ? parse_level(env) : Level::info;
    }();
    return level;
}

inline void write(Level level, std::string_view msg) {
    if (level > threshold()) return;
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void error(std::string_view msg) { write(Level::error, msg); }
inline void warn(std::string_view msg) { write(Level::warn, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void debug(std::string_view msg) { write(Level::debug, msg); }

}  // namespace maneuver::log
