// Error kinds shared by the whole library; the CLI maps them to exit codes.
#pragma once

#include <stdexcept>
#include <string>

namespace mp {

enum class ErrorKind {
  Input,          // malformed arguments / parameters
  Schema,         // file format violations
  Topology,       // nonmanifold or inconsistent connectivity
  Geometry,       // inverted patches etc.
  Compatibility,  // knot/trace mismatches
  Convergence,    // nonlinear solver failure
  Numerical,      // NaN / degenerate evaluation
  LinearSolver,   // singular factorisation
  Diffusivity     // non-SPD diffusivity evaluation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

  // CLI exit-code convention: 0 ok, 2 input, 3 convergence, 4 numerical.
  int exit_code() const {
    switch (kind_) {
      case ErrorKind::Convergence:
        return 3;
      case ErrorKind::Numerical:
      case ErrorKind::LinearSolver:
      case ErrorKind::Diffusivity:
        return 4;
      default:
        return 2;
    }
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace mp
