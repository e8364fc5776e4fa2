#pragma once

#include <stdexcept>
#include <string>

namespace rfcruise {

/// Base of every error thrown by the library. Messages are prefixed with the
/// originating module ("manifold: ...", "dynamics: ...").
class Error : public std::runtime_error {
public:
  Error(const std::string& module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(module) {}

  const std::string& module() const noexcept { return module_; }

private:
  std::string module_;
};

class ParseError : public Error {
public:
  using Error::Error;
};

class ValidationError : public Error {
public:
  using Error::Error;
};

class GeometryError : public Error {
public:
  using Error::Error;
};

class PropagationError : public Error {
public:
  PropagationError(const std::string& what, double time_us)
      : Error("dynamics", what), time_us_(time_us) {}

  double time_us() const noexcept { return time_us_; }

private:
  double time_us_;
};

class FitError : public Error {
public:
  using Error::Error;
};

class PlanError : public Error {
public:
  using Error::Error;
};

} // namespace rfcruise
