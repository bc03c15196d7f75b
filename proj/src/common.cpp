#include "onh/common.hpp"

#include <atomic>
#include <iostream>

namespace onh::log {

namespace {
std::atomic<bool> g_quiet{false};
}

void set_quiet(bool quiet) { g_quiet.store(quiet); }
bool quiet() { return g_quiet.load(); }

void warn(const std::string& msg) {
    if (!quiet()) std::cerr << "warning: " << msg << "\n";
}

void info(const std::string& msg) {
    if (!quiet()) std::cerr << msg << "\n";
}

} // namespace onh::log
