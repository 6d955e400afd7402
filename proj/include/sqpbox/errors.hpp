#pragma once

#include <stdexcept>
#include <string>

namespace sqpbox {

/// Base class for all solver-level failures (as opposed to precondition
/// violations, which throw std::invalid_argument).
class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

/// An iterative solver ran out of iterations. Carries the last residual.
class NonConvergenceError : public SolverError {
public:
    NonConvergenceError(const std::string& what, double residual, int iterations)
        : SolverError(what), last_residual(residual), iterations(iterations) {}
    double last_residual;
    int iterations;
};

/// Negative curvature detected in CG: the reduced quadratic form is not
/// positive definite at the current iterate.
class IndefinitenessError : public SolverError {
public:
    using SolverError::SolverError;
};

/// Newton failed on a nonlinear state equation. step_index is the time level
/// for marching problems, -1 for stationary ones.
class StateSolveError : public SolverError {
public:
    StateSolveError(const std::string& what, int step_index = -1)
        : SolverError(what), step_index(step_index) {}
    int step_index;
};

/// A perturbed evaluation point left the admissible domain of the oracle.
class DomainError : public SolverError {
public:
    using SolverError::SolverError;
};

} // namespace sqpbox
