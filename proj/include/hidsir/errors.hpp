#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hidsir {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Integration produced NaN/inf; carries the failing step index.
struct NonFiniteState : Error {
    std::size_t step;
    explicit NonFiniteState(std::size_t step_)
        : Error("non-finite state at step " + std::to_string(step_)), step(step_) {}
};

// Generator's positive-rate graph is not strongly connected.
struct ReducibleChain : Error {
    using Error::Error;
};

// All filter weights collapsed / all likelihood factors underflowed.
struct DegenerateFilter : Error {
    using Error::Error;
};

// A particle position is not a chain state.
struct UnknownState : Error {
    using Error::Error;
};

// Adaptive quadrature could not meet the tolerance within its budget.
struct QuadratureFailure : Error {
    using Error::Error;
};

// Incidence rate evaluated outside [0,1] x R+ x R+.
struct OutOfDomain : Error {
    using Error::Error;
};

// A sampled model assumption (monotonicity, moment constraint) failed.
struct AssumptionViolated : Error {
    using Error::Error;
};

// Experiment config rejected; message carries the field path.
struct ConfigError : Error {
    using Error::Error;
};

// Too few samples/grid points for the requested statistic.
struct InsufficientData : Error {
    using Error::Error;
};

} // namespace hidsir
