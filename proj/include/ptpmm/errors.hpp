#pragma once

#include <stdexcept>
#include <string>

namespace ptpmm {

// Base of every error raised by the library. Callers that only care about
// "the run failed" catch this; the subclasses exist so tests and the CLI can
// tell the failure modes apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Empirical fit with zero spread (all samples identical).
class DegenerateFit : public Error {
 public:
  using Error::Error;
};

// Simulator queue exceeded its configured cap.
class UnstableLoad : public Error {
 public:
  using Error::Error;
};

// Posterior has no finite mass anywhere the integrator looked.
class EmptyPosterior : public Error {
 public:
  using Error::Error;
};

// Least-squares design matrix is rank deficient.
class DegenerateDesign : public Error {
 public:
  using Error::Error;
};

// Local likelihood search could not find a feasible starting point.
class InfeasibleStart : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace ptpmm
