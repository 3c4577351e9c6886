#include "core/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace arapgs::log {
namespace {

std::mutex g_mutex;
Sink g_sink;
std::atomic<int> g_min_level{static_cast<int>(Level::Warn)};

const char* tag(Level level) {
    switch (level) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    }
    return "?";
}

} // namespace

void set_sink(Sink sink) {
    std::lock_guard lock(g_mutex);
    g_sink = std::move(sink);
}

void set_min_level(Level level) { g_min_level = static_cast<int>(level); }

void write(Level level, const std::string& message) {
    if (static_cast<int>(level) < g_min_level.load()) return;
    std::lock_guard lock(g_mutex);
    if (g_sink) {
        g_sink(level, message);
        return;
    }
    std::cerr << "[arapgs:" << tag(level) << "] " << message << '\n';
}

} // namespace arapgs::log
