#pragma once

#include <stdexcept>
#include <string>

namespace tnmpc {

/// Model evaluated outside its domain (e.g. tan argument at +-pi/2).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid configuration values or malformed config/schedule files.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Estimation window received a sample that is not exactly one period after the last one.
class TimestampError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tnmpc
