#include "surge/log.hpp"

#include <atomic>
#include <iostream>

namespace surge::log {

namespace {
std::atomic<Level> g_level{Level::Warn};
}

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void warn(std::string_view msg) {
    if (g_level >= Level::Warn) {
        std::cerr << "warning: " << msg << '\n';
    }
}

void info(std::string_view msg) {
    if (g_level >= Level::Info) {
        std::cerr << msg << '\n';
    }
}

}  // namespace surge::log
