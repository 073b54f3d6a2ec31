#pragma once

#include <stdexcept>
#include <string>

namespace routeentry {

// Bad input data: schema mismatches, invalid rows, missing files.
class io_error : public std::runtime_error {
public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

// Estimation failures: separation, non-convergence, degenerate samples.
class numeric_error : public std::runtime_error {
public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace routeentry
