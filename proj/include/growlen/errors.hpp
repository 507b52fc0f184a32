#pragma once

#include <stdexcept>
#include <string>

namespace growlen {

// Error classes map onto CLI exit codes; see tools/growlen_main.cpp.
enum class ErrorKind { config, data, numeric, io, format };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Shape/dimension mismatches between tensors.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

// API misuse: non-scalar backward, regressing progress, etc.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

// Token id or subscript out of admissible range.
class IndexError : public Error {
 public:
  explicit IndexError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

// Position outside a rope table's extent.
class RangeError : public Error {
 public:
  explicit RangeError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

// NaN/Inf where finite values are contractual.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(ErrorKind::numeric, msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

class ScheduleError : public Error {
 public:
  explicit ScheduleError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(ErrorKind::io, msg) {}
};

// Unreadable or version-mismatched serialized artifact.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(ErrorKind::format, msg) {}
};

// Corrupted serialized artifact (digest mismatch, truncation).
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& msg) : Error(ErrorKind::format, msg) {}
};

// Memory/capacity budget cannot fit even one unit of work.
class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

}  // namespace growlen
