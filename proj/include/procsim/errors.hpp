#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace procsim {

// Precondition violated by an argument (bad size, out-of-range value, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inconsistent or incomplete configuration (missing taxonomy, empty
// candidate set, unknown config key, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One or more classes could not be attached to the required root.
class UnresolvedClassError : public std::runtime_error {
 public:
  explicit UnresolvedClassError(std::vector<std::string> classes);
  const std::vector<std::string>& classes() const noexcept { return classes_; }

 private:
  std::vector<std::string> classes_;
};

// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace procsim
