#pragma once

#include <stdexcept>
#include <string>

namespace saver {

// Contract violations: caller passed arguments outside an operation's
// preconditions.
class contract_error : public std::invalid_argument {
public:
  explicit contract_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed on-disk data (bad magic, wrong version, schema violation).
class format_error : public std::runtime_error {
public:
  explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// I/O failures (missing file, short read/write).
class io_error : public std::runtime_error {
public:
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace saver
