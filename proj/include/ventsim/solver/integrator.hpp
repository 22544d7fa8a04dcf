#pragma once

#include "ventsim/json.hpp"
#include "ventsim/solver/circuit.hpp"

#include <functional>
#include <optional>

namespace ventsim {

struct SolverConfig {
    double max_step = 1e-3;               // s
    double min_step = 1e-6;               // s
    double newton_tol = 1e-8;             // max-norm of the stage residual
    int max_newton_iters = 12;
    double output_rate = 100.0;           // Hz
    double event_localization_tol = 1e-4; // s

    void validate() const; // throws ValidationError
};

Json to_json(const SolverConfig& c);
SolverConfig merge_solver_config(const SolverConfig& base, const Json& j);

using InputFunction = std::function<CircuitInputs(double)>;

struct StepStats {
    long steps = 0;
    long rejected = 0;
    long newton_iterations = 0;
    long jacobians = 0;
};

/// One TR-BDF2 step of size h from (t, y). Both implicit stages share the
/// iteration matrix I - (gamma/2) h J, with J a finite-difference Jacobian.
/// Returns nothing when Newton fails to converge or an iterate leaves the
/// admissible volume ranges.
std::optional<StateVector> try_step(const CircuitModel& m, const InputFunction& inputs, double t,
                                    const StateVector& y, double h, const SolverConfig& cfg,
                                    StepStats* stats = nullptr);

/// Advances exactly h, halving the step on failure down to cfg.min_step.
/// Throws SolverError with a state dump if the minimum step also fails.
StateVector step(const CircuitModel& m, const InputFunction& inputs, double t, const StateVector& y,
                 double h, const SolverConfig& cfg, StepStats* stats = nullptr);

} // namespace ventsim
