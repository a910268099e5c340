#pragma once

#include <stdexcept>
#include <string>

namespace mixtensor {

// Error taxonomy mirrors the CLI exit codes: config 2, data 3, solver 4.
class config_error : public std::runtime_error {
public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

class data_error : public std::runtime_error {
public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/index mismatches between tensors, models, and datasets.
class dimension_error : public data_error {
public:
  explicit dimension_error(const std::string& msg) : data_error(msg) {}
};

class solver_error : public std::runtime_error {
public:
  explicit solver_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mixtensor
