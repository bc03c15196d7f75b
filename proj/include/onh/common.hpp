#pragma once

#include <stdexcept>
#include <string>

namespace onh {

// Single exception type for data/validation/I-O failures. Usage errors are
// handled by the CLI layer; everything thrown from the library is a data error.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace log {

// Process-wide quiet switch (set by the CLI --quiet flag).
void set_quiet(bool quiet);
bool quiet();

// Warnings go to stderr and are never fatal.
void warn(const std::string& msg);
void info(const std::string& msg);

} // namespace log

} // namespace onh
