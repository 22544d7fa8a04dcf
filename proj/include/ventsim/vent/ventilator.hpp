#pragma once

#include "ventsim/breath/plans.hpp"
#include "ventsim/json.hpp"

#include <optional>
#include <string_view>

namespace ventsim {

enum class TriggerKind { Pressure, Flow };

/// Pressure-support settings. Pressures in cmH2O above atmospheric.
struct VentilatorSettings {
    double peep = 5.0;
    double p_insp = 15.0;
    double rise_time = 0.1;           // s; 0 gives a block wave
    TriggerKind trigger_kind = TriggerKind::Pressure;
    double trigger_sensitivity = 1.0; // cmH2O below PEEP, or L/min for flow triggering
    double cycle_fraction = 0.25;     // of peak inspiratory flow
    double max_insp_time = 3.0;       // s
    double min_exp_time = 0.4;        // s
    double min_insp_time = 0.25;      // s before flow cycling is armed

    void validate() const; // throws ValidationError
};

Json to_json(const VentilatorSettings& s);

/// Applies the keys present in `j` on top of `base`; throws ConfigError on
/// unknown keys or wrong types. Does not validate.
VentilatorSettings merge_settings(const VentilatorSettings& base, const Json& j);

/// Rohrer coefficients plus lumped inertance/compliance of one tubing limb.
struct LimbParams {
    double k1 = 0.5;          // cmH2O*s/L
    double k2 = 0.3;          // cmH2O*s^2/L^2
    double inertance = 0.02;  // cmH2O*s^2/L
    double compliance = 0.0015; // L/cmH2O
};

struct TubingParams {
    LimbParams inspiratory{};
    LimbParams expiratory{};
    double ett_k1 = 3.0; // 8.0 mm tube
    double ett_k2 = 6.0;
    double valve_r_on = 0.01;  // cmH2O*s/L
    double valve_r_off = 1e5;
    double valve_band = 0.01;  // cmH2O over which a valve blends open

    void validate() const;
};

Json to_json(const TubingParams& t);
TubingParams merge_tubing(const TubingParams& base, const Json& j);

/// R = K1 + K2 |Q|.
double rohrer_resistance(double k1, double k2, double q);

enum class Phase { Expiration, Inspiration };

std::string_view to_string(Phase p);

struct VentPhase {
    Phase phase = Phase::Expiration;
    double t_phase_start = 0.0;
    double peak_insp_flow_so_far = 0.0;
};

/// Ventilator source pressure: PEEP in expiration; in inspiration a linear
/// ramp from PEEP to P_insp over rise_time, then P_insp.
double source_pressure(const VentilatorSettings& s, const VentPhase& phase, double t);

/// A valve: an ideal switch in series with a smooth unidirectional element.
/// Forward pressure difference `dp` drives flow in the conducting direction.
struct ValveBranch {
    bool switch_closed = false;
    double r_on = 0.01;
    double r_off = 1e5;
    double band = 0.01;

    /// C1 in dp. In the blocked direction (dp <= 0) or with the switch open
    /// the flow is exactly the off-resistance leakage dp / r_off.
    double flow(double dp) const;
};

struct LimbBranch {
    LimbParams limb;
    ValveBranch valve;
    double source = 0.0; // cmH2O behind the valve
};

/// Element set of the ventilator side for one phase: inspiratory limb
/// (source, switch, valve, compliance shunt, Rohrer resistor, inertance),
/// the mirrored expiratory limb ending at the PEEP source, and the
/// endotracheal tube between the sensor and the patient's airway opening.
struct VentBranches {
    LimbBranch inspiratory;
    LimbBranch expiratory;
    double ett_k1 = 0;
    double ett_k2 = 0;
};

VentBranches assemble_vent_branches(const TubingParams& tubing, const VentilatorSettings& settings,
                                    const VentPhase& phase, double t);

/// Slowest decay time of a limb as a series R-L-C with its open valve
/// (linear resistance only): 2L/R when underdamped, else from the slow root.
double limb_time_constant(const LimbParams& limb, double valve_r_on);

// ---------------------------------------------------------------------------
// Controller

/// The effort a sensor sample falls under: the last effort with onset <= t.
struct EffortContext {
    std::size_t index = 0;
    double onset = 0;
    double end = 0;
    BreathOverride override{};
};

struct ControllerState {
    VentPhase vent{};
    std::optional<double> pending_trigger;          // delayed trigger fire time
    std::optional<std::size_t> pending_effort;
    std::optional<double> cycle_at;                 // scheduled cycle time
    std::optional<std::size_t> breath_effort;       // effort that started this inspiration
    std::optional<std::size_t> last_triggered_effort;
};

struct SensorSample {
    double t = 0;
    double pressure = 0; // cmH2O at the airway-opening sensor
    double flow = 0;     // L/s into the patient
};

enum class TransitionKind { Trigger, Cycle };

struct Transition {
    TransitionKind kind;
    double t;
};

struct ControllerStep {
    ControllerState state;
    std::optional<Transition> transition;
};

/// One decision of the pressure-support controller at a sensor sample.
/// Pure: identical inputs give identical outputs, so replaying a sensor trace
/// reproduces the transitions.
ControllerStep controller_step(const VentilatorSettings& s, const ControllerState& state,
                               const SensorSample& sample, const EffortContext* effort);

/// Signed distance from the trigger condition; the trigger condition holds
/// when the value is negative.
double trigger_margin(const VentilatorSettings& s, const SensorSample& sample);

/// Signed distance from the flow-cycling condition (negative = cycle).
double cycle_margin(const VentilatorSettings& s, const ControllerState& state,
                    const SensorSample& sample);

/// Earliest scheduled controller time strictly after t (pending trigger,
/// scheduled cycle, arming instants, rise end, max inspiratory time).
std::optional<double> next_controller_time(const VentilatorSettings& s, const ControllerState& state,
                                           double t);

} // namespace ventsim
