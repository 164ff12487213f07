#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace mboot {

// Base of every error raised by the library. Preconditions on plain
// arguments (alpha outside (0,1), empty samples) use std::invalid_argument.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model/dataset inconsistent with the family, or theta outside the
// natural-parameter domain.
class InvalidModel : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, Eigen::VectorXd last_iterate)
      : Error(what), last_iterate_(std::move(last_iterate)) {}

  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }

 private:
  Eigen::VectorXd last_iterate_;
};

// The weighted likelihood has no maximizer inside the parameter box for this
// draw of multipliers. Callers resample the weights.
class DegenerateDraw : public Error {
 public:
  using Error::Error;
};

// Too many degenerate draws (bootstrap) or failed replications (experiments).
class PathologicalSample : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mboot
