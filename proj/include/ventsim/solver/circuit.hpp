#pragma once

#include "ventsim/model/archetype.hpp"
#include "ventsim/vent/ventilator.hpp"

#include <Eigen/Core>

namespace ventsim {

inline constexpr int kStateSize = 8;
using StateVector = Eigen::Matrix<double, kStateSize, 1>;

/// Dynamic quantities of the coupled patient/ventilator circuit.
///
/// Patient side: airway opening -> upper airway -> collapsible
/// airway (node C, capacitor C_c to the pleural node) -> small airways ->
/// alveolar node (capacitor C_l to the pleural node). The pleural node reaches
/// the muscle source through the chest wall C_cw and the Kelvin body R_ve||C_ve.
/// Ventilator side: each limb is a compliance shunt behind its valve followed by
/// a Rohrer resistance and an inertance meeting at the sensor.
struct CircuitState {
    double V_l = 0;   // L, charge on C_l
    double V_c = 0;   // L, charge on C_c
    double V_cw = 0;  // L, charge on C_cw
    double Q_ve = 0;  // L, charge on the Kelvin capacitor
    double Q_ti = 0;  // L, inspiratory-limb compliance charge
    double Q_te = 0;  // L, expiratory-limb compliance charge
    double I_i = 0;   // L/s, inspiratory-limb flow toward the patient
    double I_e = 0;   // L/s, expiratory-limb flow away from the patient

    StateVector pack() const;
    static CircuitState unpack(const StateVector& y);

    double airway_flow() const { return I_i - I_e; }
    double lung_side_volume() const { return V_l + V_c; }
};

/// Patient-side parameters that stay fixed during a run.
struct CircuitModel {
    ArchetypeParams patient;
    TubingParams tubing;
    // Optional initialization source: PipPEEP behind a very large resistance
    // into the pleural node, as in the original circuit. Off by default.
    bool pip_source = false;
    double pip_pressure = 0; // cmH2O
    double r_d = 1e6;        // cmH2O*s/L
};

/// Time-dependent inputs at one instant.
struct CircuitInputs {
    double pmus = 0; // muscle pressure incl. cardiac oscillation, cmH2O
    VentBranches branches;
};

struct NodePressures {
    double sensor = 0;      // start of the endotracheal tube
    double airway = 0;      // airway opening, after the tube
    double collapsible = 0; // node C
    double alveolar = 0;
    double pleural = 0;
    double chest_wall_outer = 0; // node between chest wall and Kelvin body
    double transmural = 0;       // P_t = collapsible - pleural
    double inspiratory_limb = 0; // limb compliance pressures
    double expiratory_limb = 0;
    double small_airway_flow = 0; // L/s, node C -> alveoli
    double pip_flow = 0;          // L/s, initialization branch into the pleural node
};

/// Recovers node pressures from the state. Throws RangeError when a volume has
/// left its curve's open range.
NodePressures node_pressures(const CircuitModel& m, const CircuitInputs& in, const StateVector& y);

/// Time derivative of the state.
StateVector circuit_rhs(const CircuitModel& m, const CircuitInputs& in, const StateVector& y);

struct SteadyState {
    double pleural_pressure = 0; // cmH2O
    double frc = 0;              // L, V_l + V_c at equilibrium
    CircuitState state;
};

/// Relaxed equilibrium at the given PEEP with zero muscle pressure, no flow and
/// an uncharged Kelvin body. Solves the pleural-pressure volume balance by
/// bisection; limb compliances are charged to PEEP. Throws
/// InitializationError when the residual has no sign change.
SteadyState steady_state(const ArchetypeParams& p, double peep, const TubingParams& tubing = {});

/// Equilibrium residual V_cw(-P_pl) - [V_l(peep - P_pl) + V_c(peep - P_pl)].
double equilibrium_residual(const ArchetypeParams& p, double peep, double P_pl);

} // namespace ventsim
