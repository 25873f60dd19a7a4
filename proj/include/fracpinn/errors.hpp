#pragma once

#include <stdexcept>
#include <string>

namespace fracpinn {

/// Invalid user input (mesh spec, problem parameters, config values).
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(const std::string& field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Index outside the admissible range of a mesh or kernel.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// History state used out of order.
class SequencingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// SOE construction could not meet its tolerance.
class ConstructionError : public std::runtime_error {
 public:
  ConstructionError(const std::string& what, double measured)
      : std::runtime_error(what), measured_(measured) {}
  double measured_error() const noexcept { return measured_; }

 private:
  double measured_;
};

/// Non-finite values during optimization.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, long index = -1)
      : std::runtime_error(what), index_(index) {}
  long index() const noexcept { return index_; }

 private:
  long index_;
};

}  // namespace fracpinn
