#pragma once

#include "ventsim/breath/plans.hpp"
#include "ventsim/solver/integrator.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace ventsim {

enum class ControlMode {
    ClosedLoop, // the controller triggers and cycles from the sensor signals
    Cpap,       // never triggers; the ventilator holds PEEP
    Scripted,   // trigger and cycle times are given in advance
};

enum class EventKind { EffortStart, EffortEnd, Trigger, Cycle };

std::string_view to_string(EventKind k);

struct SimEvent {
    EventKind kind;
    double t;
    std::optional<std::size_t> effort; // effort index when known
};

/// One output sample.
struct Sample {
    double t = 0;
    double paw = 0;   // sensor pressure, cmH2O
    double flow = 0;  // sensor flow into the patient, L/s
    double vol = 0;   // V_l + V_c above the initial FRC, L
    double pmus = 0;  // muscle effort (without the cardiac component), cmH2O
    Phase phase = Phase::Expiration;
    double lung_side_volume = 0; // V_l + V_c, L
    double chest_wall_volume = 0; // V_cw, L
};

struct CardiacParams {
    double amplitude = 0.2;   // cmH2O
    double heart_rate = 75.0; // beats/min
    double phase = 0.0;       // s, time shift of the sinusoid
};

struct ScriptedBreath {
    double trigger;
    double cycle;
    std::optional<std::size_t> effort; // reported on the emitted events
};

struct SimulationSetup {
    ArchetypeParams patient;
    VentilatorSettings settings{};
    TubingParams tubing{};
    SolverConfig solver{};
    CardiacParams cardiac{};
    ControlMode mode = ControlMode::ClosedLoop;
    bool pip_source = false; // keep the high-resistance initialization source in the circuit
};

/// Incremental simulation of one patient/ventilator pair. Samples and events
/// accumulate until taken; efforts may be appended while running.
class Simulation {
public:
    explicit Simulation(const SimulationSetup& setup);

    /// Onsets must increase and efforts may not overlap.
    void add_effort(double onset, const EffortShape& shape, const BreathOverride& override = {});
    void set_override(std::size_t effort, const BreathOverride& override);
    void set_script(std::vector<ScriptedBreath> script);

    /// Takes effect from the next solver step. Throws ValidationError.
    void update_settings(const VentilatorSettings& settings);
    void set_cardiac(const CardiacParams& cardiac) { setup_.cardiac = cardiac; }

    /// Swaps the patient and re-initializes the circuit at equilibrium for the
    /// current PEEP. Intended for breath boundaries.
    void reset_patient(const ArchetypeParams& patient);

    /// Integrates up to t_end; emits samples on the output grid and events.
    void advance_to(double t_end);

    std::vector<Sample> take_samples();
    std::vector<SimEvent> take_events();

    double time() const { return t_; }
    double frc() const { return frc_; }
    CircuitState state() const { return CircuitState::unpack(y_); }
    const ControllerState& controller() const { return ctrl_; }
    const VentilatorSettings& settings() const { return setup_.settings; }
    const ArchetypeParams& patient() const { return setup_.patient; }
    double max_constraint_violation() const { return max_violation_; }
    const StepStats& stats() const { return stats_; }
    std::size_t effort_count() const { return efforts_.size(); }
    double effort_onset(std::size_t i) const { return efforts_[i].onset; }
    double effort_end(std::size_t i) const { return efforts_[i].onset + efforts_[i].shape.duration(); }

    /// Sensor reading for a state at time t.
    SensorSample sense(const StateVector& y, double t) const;

private:
    struct Effort {
        double onset;
        EffortShape shape;
        BreathOverride override;
    };

    std::optional<std::size_t> effort_index_at(double t) const;
    double effort_pressure(double t) const;
    CircuitInputs inputs_at(double t, const VentPhase& phase) const;
    double next_stop(double t_end) const;
    bool controller_decides(const ControllerStep& r) const;
    std::optional<Transition> run_controller(double t0, const StateVector& y0, double& t1,
                                             StateVector& y1);
    void apply_script(double t1);
    void emit_effort_events(double t1);
    void record_sample(double t, const StateVector& y);

    SimulationSetup setup_;
    CircuitModel model_;
    StateVector y_;
    double t_ = 0;
    double frc_ = 0;
    ControllerState ctrl_{};
    std::vector<Effort> efforts_;
    std::optional<std::size_t> last_transition_effort_;
    std::size_t next_effort_event_ = 0; // 2 per effort: start, end
    std::vector<ScriptedBreath> script_;
    std::size_t script_pos_ = 0; // 2 per breath: trigger, cycle
    long next_sample_ = 0;
    double max_violation_ = 0;
    StepStats stats_{};
    std::vector<Sample> samples_;
    std::vector<SimEvent> events_;
};

struct Trajectory {
    std::vector<Sample> samples;
    std::vector<SimEvent> events;
    double frc = 0;
    double record_length = 0;
    double max_constraint_violation = 0;
    StepStats stats{};

    std::vector<double> column_t() const;
    std::vector<double> column_paw() const;
    std::vector<double> column_flow() const;
    std::vector<double> column_vol() const;
};

struct SimulationInputs {
    SimulationSetup setup;
    BreathPlan breaths;
    AsynchronyPlan asynchrony;           // empty means all Normal
    std::vector<ScriptedBreath> script;  // used in Scripted mode
};

/// Runs a whole record in setup.mode.
Trajectory simulate(const SimulationInputs& inputs);

/// Intermediate products of the three-stage pipeline.
struct StagedRun {
    Trajectory stage1;                   // PEEP only
    std::vector<std::optional<double>> trigger_times; // per effort
    Trajectory stage2;                   // triggers scripted, inspiration held
    std::vector<ScriptedBreath> schedule;
    std::vector<std::size_t> schedule_effort; // effort index of each scheduled breath
    Trajectory final;
};

/// Three-stage scripted pipeline: trigger times from a PEEP-only run, cycle
/// times from a run with the triggers applied and inspiration held, then a
/// final run with both schedules. Throws ScenarioError naming the breath when
/// a cycle time does not follow its trigger.
StagedRun run_staged(const SimulationInputs& inputs);

inline Trajectory run_staged_scenario(const SimulationInputs& inputs)
{
    return run_staged(inputs).final;
}

struct ConservationReport {
    double max_constraint_violation = 0; // L, max |V_l + V_c - V_cw|
    double flow_volume_mismatch = 0;     // fraction of the median tidal volume
    double median_tidal_volume = 0;      // L
};

/// Re-checks the series-charge constraint on the samples (and the solver's
/// per-step maximum) and compares the trapezoid-integrated sensor flow with the
/// change of V_l + V_c over each breath cycle.
ConservationReport conservation_report(const Trajectory& traj);

/// Tidal volume of each breath cycle [onset_i, onset_{i+1}): peak volume
/// minus the minimum that precedes it.
std::vector<double> tidal_volumes(const Trajectory& traj);

} // namespace ventsim
