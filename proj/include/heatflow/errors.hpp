#pragma once

#include <stdexcept>
#include <string>

namespace heatflow {

/// Base for all library errors so callers can catch one type at the boundary.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed arguments: non-finite inputs, out-of-range parameters.
struct InvalidInputError : Error {
    using Error::Error;
};

/// Operation requires a capability the configuration does not expose
/// (e.g. gradient form without a gradient handle).
struct CapabilityError : Error {
    using Error::Error;
};

/// Argument outside the mathematical domain of the operation.
struct DomainError : Error {
    using Error::Error;
};

/// All quadrature mass vanished; the tilted measure is numerically empty.
struct DegenerateMeasureError : Error {
    using Error::Error;
};

/// Step controller underflowed; the field is too stiff at the current state.
struct StiffnessError : Error {
    using Error::Error;
};

/// Trajectory left the configured bounding box or became non-finite.
struct DivergenceError : Error {
    using Error::Error;
};

/// Rejection-sampler envelope failed (acceptance rate collapsed or the
/// log-ratio grows toward the probe-grid boundary).
struct EnvelopeFailureError : Error {
    using Error::Error;
};

/// Too few usable data points for a requested fit.
struct InsufficientDataError : Error {
    using Error::Error;
};

/// Configuration file is syntactically or structurally invalid.
struct ParseError : Error {
    using Error::Error;
};

}  // namespace heatflow
