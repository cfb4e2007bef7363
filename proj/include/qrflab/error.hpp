#pragma once

#include <stdexcept>
#include <string>

namespace qrflab {

// Point outside a chart, missing finite-difference margin, or outside a
// map's trust radius.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Metric fails symmetry / Lorentzian signature / weak-field checks.
struct InvalidMetric : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Two states (or a state and a transform) do not share branch structure.
struct IncompatibleState : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operation would produce a zero-norm state.
struct ZeroWeight : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Requested instance is outside what the implementation accepts
// (too many lattice paths, null geodesic for a Fermi frame, ...).
struct Unsupported : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Time step violates the split-step stability bound.
struct StepBoundViolation : std::runtime_error {
  StepBoundViolation(const std::string& what, double suggested)
      : std::runtime_error(what), suggested_step(suggested) {}
  double suggested_step;
};

}  // namespace qrflab
