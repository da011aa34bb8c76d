#pragma once

#include <stdexcept>
#include <string>

namespace adaseq {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatch between tensor operands; carries both shapes.
struct DimensionError : Error {
  DimensionError(const std::string& op, const std::string& lhs, const std::string& rhs)
      : Error(op + ": incompatible shapes " + lhs + " and " + rhs), lhs_shape(lhs), rhs_shape(rhs) {}
  std::string lhs_shape;
  std::string rhs_shape;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// API called outside its stated contract (e.g. portion gate on an ungated cell).
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

struct TapeError : Error {
  explicit TapeError(const std::string& msg) : Error(msg) {}
};

struct TrainError : Error {
  explicit TrainError(const std::string& msg) : Error(msg) {}
};

}  // namespace adaseq
