#pragma once

#include <stdexcept>
#include <string>

namespace wdyn {

// Raised for malformed inputs, unreadable files and violated data contracts.
// The CLI maps it to exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Raised for bad arguments and configuration values (CLI exit code 1).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace wdyn
