#pragma once

#include <stdexcept>
#include <string>

namespace homoglab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters, grids or scenario descriptions.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A field or region does not line up with the grid it is used on.
class AlignmentError : public Error {
public:
    using Error::Error;
};

/// Coefficient data that cannot be used (non-finite samples, malformed tables).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Iterative solver failure; carries the last residual reached.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Conjugate gradients met a direction of non-positive curvature.
class DefinitenessError : public SolverError {
public:
    using SolverError::SolverError;
};

/// Newton iteration of a time step stagnated after exhausting the damping budget.
class StepFailure : public SolverError {
public:
    using SolverError::SolverError;
};

} // namespace homoglab
