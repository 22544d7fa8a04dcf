#include "ventsim/solver/circuit.hpp"

#include "ventsim/error.hpp"
#include "ventsim/model/element_laws.hpp"

#include <cmath>
#include <sstream>

namespace ventsim {

StateVector CircuitState::pack() const
{
    StateVector y;
    y << V_l, V_c, V_cw, Q_ve, Q_ti, Q_te, I_i, I_e;
    return y;
}

CircuitState CircuitState::unpack(const StateVector& y)
{
    return {y[0], y[1], y[2], y[3], y[4], y[5], y[6], y[7]};
}

NodePressures node_pressures(const CircuitModel& m, const CircuitInputs& in, const StateVector& y)
{
    const auto& p = m.patient;
    const double flow = y[6] - y[7];
    NodePressures n;
    n.chest_wall_outer = in.pmus + y[3] / p.C_ve;
    n.pleural = n.chest_wall_outer - invert_compliance(Curve::ChestWall, p, y[2]);
    n.transmural = invert_compliance(Curve::Collapsible, p, y[1]);
    n.collapsible = n.pleural + n.transmural;
    // Both lung-curve kinds take the voltage across C_l (alveolar minus pleural).
    n.alveolar = n.pleural + invert_compliance(Curve::Lung, p, y[0]);
    n.small_airway_flow = (n.collapsible - n.alveolar) / small_airway_resistance(p, y[0]);
    n.airway = n.collapsible + collapsible_resistance(p, n.transmural) * flow +
               upper_airway_resistance(p, flow) * flow;
    n.sensor = n.airway + rohrer_resistance(in.branches.ett_k1, in.branches.ett_k2, flow) * flow;
    n.inspiratory_limb = y[4] / m.tubing.inspiratory.compliance;
    n.expiratory_limb = y[5] / m.tubing.expiratory.compliance;
    if (m.pip_source) n.pip_flow = (m.pip_pressure - n.pleural) / m.r_d;
    return n;
}

StateVector circuit_rhs(const CircuitModel& m, const CircuitInputs& in, const StateVector& y)
{
    const NodePressures n = node_pressures(m, in, y);
    const auto& b = in.branches;
    const double flow = y[6] - y[7];
    const double kelvin_current = flow + n.pip_flow;

    const double valve_i = b.inspiratory.valve.flow(b.inspiratory.source - n.inspiratory_limb);
    const double valve_e = b.expiratory.valve.flow(n.expiratory_limb - b.expiratory.source);

    const auto& li = b.inspiratory.limb;
    const auto& le = b.expiratory.limb;
    StateVector dy;
    dy[0] = n.small_airway_flow;
    dy[1] = flow - n.small_airway_flow;
    dy[2] = kelvin_current;
    dy[3] = kelvin_current - y[3] / (m.patient.C_ve * m.patient.R_ve);
    dy[4] = valve_i - y[6];
    dy[5] = y[7] - valve_e;
    dy[6] = (n.inspiratory_limb - n.sensor - rohrer_resistance(li.k1, li.k2, y[6]) * y[6]) /
            li.inertance;
    dy[7] = (n.sensor - n.expiratory_limb - rohrer_resistance(le.k1, le.k2, y[7]) * y[7]) /
            le.inertance;
    return dy;
}

double equilibrium_residual(const ArchetypeParams& p, double peep, double P_pl)
{
    const double transpulmonary = peep - P_pl;
    return chest_wall_volume(p, -P_pl) -
           (lung_volume(p, transpulmonary) + collapsible_volume(p, transpulmonary));
}

SteadyState steady_state(const ArchetypeParams& p, double peep, const TubingParams& tubing)
{
    // The residual increases with P_pl: the chest wall fills while the lung empties.
    double lo = peep - 100.0;
    double hi = peep + 100.0;
    if (p.lung_curve_kind == LungCurveKind::Logarithmic) {
        // the log curve needs peep - P_pl > B_l
        hi = std::min(hi, peep - p.B_l - 1e-12);
    }
    double f_lo = equilibrium_residual(p, peep, lo);
    double f_hi = equilibrium_residual(p, peep, hi);
    if (!(f_lo < 0 && f_hi > 0)) {
        std::ostringstream os;
        os << "no equilibrium for archetype " << p.name() << " at PEEP " << peep
           << " cmH2O: residual " << f_lo << " at P_pl=" << lo << ", " << f_hi << " at P_pl=" << hi;
        throw InitializationError(os.str());
    }
    for (int i = 0; i < 200 && hi - lo > 1e-13; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (equilibrium_residual(p, peep, mid) < 0) lo = mid;
        else hi = mid;
    }
    const double P_pl = 0.5 * (lo + hi);
    SteadyState s;
    s.pleural_pressure = P_pl;
    s.state.V_l = lung_volume(p, peep - P_pl);
    s.state.V_c = collapsible_volume(p, peep - P_pl);
    // Place the chest-wall charge exactly on the series constraint; the
    // difference from V_cw(-P_pl) is below the bisection resolution.
    s.state.V_cw = s.state.V_l + s.state.V_c;
    s.state.Q_ti = tubing.inspiratory.compliance * peep;
    s.state.Q_te = tubing.expiratory.compliance * peep;
    s.frc = s.state.V_l + s.state.V_c;
    return s;
}

} // namespace ventsim
