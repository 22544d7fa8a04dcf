#include "ventsim/vent/ventilator.hpp"

#include "ventsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ventsim {

namespace {

constexpr double kTimeEps = 1e-9;

void read_number(const Json& j, const std::string& key, double& out)
{
    if (!j.at(key).is_number()) throw ConfigError("'" + key + "' must be a number");
    out = j.at(key).get<double>();
}

LimbParams merge_limb(LimbParams limb, const Json& j, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "k1") read_number(j, key, limb.k1);
        else if (key == "k2") read_number(j, key, limb.k2);
        else if (key == "inertance") read_number(j, key, limb.inertance);
        else if (key == "compliance") read_number(j, key, limb.compliance);
        else throw ConfigError("unknown key '" + key + "' in " + where);
    }
    return limb;
}

Json limb_json(const LimbParams& l)
{
    return Json{{"k1", l.k1}, {"k2", l.k2}, {"inertance", l.inertance}, {"compliance", l.compliance}};
}

} // namespace

void VentilatorSettings::validate() const
{
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(peep) || !finite(p_insp) || !finite(rise_time) || !finite(trigger_sensitivity) ||
        !finite(cycle_fraction) || !finite(max_insp_time) || !finite(min_exp_time) ||
        !finite(min_insp_time)) {
        throw ValidationError("ventilator settings must be finite");
    }
    if (!(peep >= 0)) throw ValidationError("PEEP must be >= 0");
    if (!(p_insp > peep)) throw ValidationError("P_insp must exceed PEEP");
    if (!(rise_time >= 0)) throw ValidationError("rise_time must be >= 0");
    if (!(trigger_sensitivity > 0)) throw ValidationError("trigger_sensitivity must be positive");
    if (!(cycle_fraction > 0 && cycle_fraction < 1)) {
        throw ValidationError("cycle_fraction must be in (0, 1)");
    }
    if (!(max_insp_time > 0) || !(min_exp_time >= 0) || !(min_insp_time >= 0) ||
        !(min_insp_time < max_insp_time)) {
        throw ValidationError("inspiratory/expiratory time limits are inconsistent");
    }
}

Json to_json(const VentilatorSettings& s)
{
    return Json{
        {"peep", s.peep},
        {"p_insp", s.p_insp},
        {"rise_time", s.rise_time},
        {"trigger_kind", s.trigger_kind == TriggerKind::Pressure ? "pressure" : "flow"},
        {"trigger_sensitivity", s.trigger_sensitivity},
        {"cycle_fraction", s.cycle_fraction},
        {"max_insp_time", s.max_insp_time},
        {"min_exp_time", s.min_exp_time},
        {"min_insp_time", s.min_insp_time},
    };
}

VentilatorSettings merge_settings(const VentilatorSettings& base, const Json& j)
{
    if (!j.is_object()) throw ConfigError("ventilator settings must be an object");
    VentilatorSettings s = base;
    for (const auto& [key, value] : j.items()) {
        if (key == "peep") read_number(j, key, s.peep);
        else if (key == "p_insp") read_number(j, key, s.p_insp);
        else if (key == "rise_time") read_number(j, key, s.rise_time);
        else if (key == "trigger_sensitivity") read_number(j, key, s.trigger_sensitivity);
        else if (key == "cycle_fraction") read_number(j, key, s.cycle_fraction);
        else if (key == "max_insp_time") read_number(j, key, s.max_insp_time);
        else if (key == "min_exp_time") read_number(j, key, s.min_exp_time);
        else if (key == "min_insp_time") read_number(j, key, s.min_insp_time);
        else if (key == "trigger_kind") {
            const auto kind = value.is_string() ? value.get<std::string>() : std::string{};
            if (kind == "pressure") s.trigger_kind = TriggerKind::Pressure;
            else if (kind == "flow") s.trigger_kind = TriggerKind::Flow;
            else throw ConfigError("trigger_kind must be \"pressure\" or \"flow\"");
        } else {
            throw ConfigError("unknown ventilator setting '" + key + "'");
        }
    }
    return s;
}

void TubingParams::validate() const
{
    for (const auto* l : {&inspiratory, &expiratory}) {
        if (!(l->k1 > 0) || !(l->k2 > 0) || !(l->inertance > 0) || !(l->compliance > 0)) {
            throw ValidationError("limb parameters must be positive");
        }
    }
    if (!(ett_k1 > 0) || !(ett_k2 > 0)) throw ValidationError("ETT coefficients must be positive");
    if (!(valve_r_on > 0) || !(valve_r_off >= 1e6 * valve_r_on)) {
        throw ValidationError("valve off-resistance must be at least 1e6 x on-resistance");
    }
    if (!(valve_band > 0)) throw ValidationError("valve band must be positive");
}

Json to_json(const TubingParams& t)
{
    return Json{
        {"inspiratory", limb_json(t.inspiratory)},
        {"expiratory", limb_json(t.expiratory)},
        {"ett_k1", t.ett_k1},
        {"ett_k2", t.ett_k2},
        {"valve_r_on", t.valve_r_on},
        {"valve_r_off", t.valve_r_off},
        {"valve_band", t.valve_band},
    };
}

TubingParams merge_tubing(const TubingParams& base, const Json& j)
{
    if (!j.is_object()) throw ConfigError("tubing must be an object");
    TubingParams t = base;
    for (const auto& [key, value] : j.items()) {
        if (key == "inspiratory") t.inspiratory = merge_limb(t.inspiratory, value, key);
        else if (key == "expiratory") t.expiratory = merge_limb(t.expiratory, value, key);
        else if (key == "ett_k1") read_number(j, key, t.ett_k1);
        else if (key == "ett_k2") read_number(j, key, t.ett_k2);
        else if (key == "valve_r_on") read_number(j, key, t.valve_r_on);
        else if (key == "valve_r_off") read_number(j, key, t.valve_r_off);
        else if (key == "valve_band") read_number(j, key, t.valve_band);
        else throw ConfigError("unknown tubing key '" + key + "'");
    }
    return t;
}

double rohrer_resistance(double k1, double k2, double q) { return k1 + k2 * std::abs(q); }

std::string_view to_string(Phase p) { return p == Phase::Expiration ? "exp" : "insp"; }

double source_pressure(const VentilatorSettings& s, const VentPhase& phase, double t)
{
    if (phase.phase == Phase::Expiration) return s.peep;
    if (s.rise_time <= 0) return s.p_insp;
    const double frac = std::clamp((t - phase.t_phase_start) / s.rise_time, 0.0, 1.0);
    return s.peep + (s.p_insp - s.peep) * frac;
}

double ValveBranch::flow(double dp) const
{
    const double g_off = 1.0 / r_off;
    if (!switch_closed || dp <= 0) return g_off * dp;
    const double g_on = 1.0 / r_on;
    if (dp >= band) return g_on * dp;
    const double x = dp / band;
    const double blend = x * x * (3.0 - 2.0 * x);
    return (g_off + (g_on - g_off) * blend) * dp;
}

VentBranches assemble_vent_branches(const TubingParams& tubing, const VentilatorSettings& settings,
                                    const VentPhase& phase, double t)
{
    const bool insp = phase.phase == Phase::Inspiration;
    VentBranches b;
    b.inspiratory.limb = tubing.inspiratory;
    b.inspiratory.valve = {insp, tubing.valve_r_on, tubing.valve_r_off, tubing.valve_band};
    b.inspiratory.source = source_pressure(settings, phase, t);
    b.expiratory.limb = tubing.expiratory;
    b.expiratory.valve = {!insp, tubing.valve_r_on, tubing.valve_r_off, tubing.valve_band};
    b.expiratory.source = settings.peep;
    b.ett_k1 = tubing.ett_k1;
    b.ett_k2 = tubing.ett_k2;
    return b;
}

double limb_time_constant(const LimbParams& limb, double valve_r_on)
{
    const double R = limb.k1 + valve_r_on, L = limb.inertance, C = limb.compliance;
    if (L <= 0) return R * C;
    const double disc = R * R - 4 * L / C;
    if (disc < 0) return 2 * L / R;
    return 2 * L / (R - std::sqrt(disc));
}

double trigger_margin(const VentilatorSettings& s, const SensorSample& sample)
{
    if (s.trigger_kind == TriggerKind::Pressure) {
        return sample.pressure - (s.peep - s.trigger_sensitivity);
    }
    return s.trigger_sensitivity / 60.0 - sample.flow;
}

double cycle_margin(const VentilatorSettings& s, const ControllerState& state,
                    const SensorSample& sample)
{
    const double peak = std::max(state.vent.peak_insp_flow_so_far, sample.flow);
    return sample.flow - s.cycle_fraction * peak;
}

namespace {

ControllerState enter_inspiration(const VentilatorSettings& s, ControllerState st,
                                  const SensorSample& sample, const EffortContext* effort,
                                  bool fresh)
{
    st.vent = {Phase::Inspiration, sample.t, std::max(0.0, sample.flow)};
    st.pending_trigger.reset();
    st.pending_effort.reset();
    st.cycle_at.reset();
    st.breath_effort.reset();
    if (effort && fresh) {
        st.breath_effort = effort->index;
        st.last_triggered_effort = effort->index;
        if (effort->override.cycle_offset) {
            st.cycle_at = std::max(effort->end + *effort->override.cycle_offset,
                                   sample.t + s.min_insp_time);
        }
    }
    return st;
}

} // namespace

ControllerStep controller_step(const VentilatorSettings& s, const ControllerState& state,
                               const SensorSample& sample, const EffortContext* effort)
{
    ControllerStep out{state, std::nullopt};
    ControllerState& st = out.state;
    const double t = sample.t;
    const double elapsed = t - st.vent.t_phase_start;

    if (st.vent.phase == Phase::Expiration) {
        if (st.pending_trigger) {
            if (t >= *st.pending_trigger - kTimeEps) {
                const bool same = effort && st.pending_effort && *st.pending_effort == effort->index;
                st = enter_inspiration(s, st, sample, same ? effort : nullptr, same);
                out.transition = Transition{TransitionKind::Trigger, t};
            }
            return out;
        }
        if (elapsed < s.min_exp_time - kTimeEps) return out;
        if (trigger_margin(s, sample) >= 0) return out;

        const bool fresh = effort && (!st.last_triggered_effort ||
                                      *st.last_triggered_effort != effort->index);
        // a suppressed effort stays untriggered until the next one begins; a
        // large effort can hold the pressure under threshold well past its end
        if (fresh && effort->override.suppress_trigger) {
            return out;
        }
        if (fresh && effort->override.trigger_delay > 0) {
            st.pending_trigger = t + effort->override.trigger_delay;
            st.pending_effort = effort->index;
            return out;
        }
        st = enter_inspiration(s, st, sample, effort, fresh);
        out.transition = Transition{TransitionKind::Trigger, t};
        return out;
    }

    st.vent.peak_insp_flow_so_far = std::max(st.vent.peak_insp_flow_so_far, sample.flow);
    bool cycle = false;
    if (st.cycle_at) {
        cycle = t >= *st.cycle_at - kTimeEps;
    } else if (elapsed >= s.min_insp_time - kTimeEps) {
        cycle = sample.flow < s.cycle_fraction * st.vent.peak_insp_flow_so_far;
    }
    if (elapsed >= s.max_insp_time - kTimeEps) cycle = true;
    if (cycle) {
        st.vent = {Phase::Expiration, t, 0.0};
        st.cycle_at.reset();
        st.breath_effort.reset();
        out.transition = Transition{TransitionKind::Cycle, t};
    }
    return out;
}

std::optional<double> next_controller_time(const VentilatorSettings& s, const ControllerState& state,
                                           double t)
{
    std::optional<double> best;
    auto consider = [&](double candidate) {
        if (candidate > t + kTimeEps && (!best || candidate < *best)) best = candidate;
    };
    const double start = state.vent.t_phase_start;
    if (state.vent.phase == Phase::Expiration) {
        if (state.pending_trigger) consider(*state.pending_trigger);
        consider(start + s.min_exp_time);
    } else {
        if (state.cycle_at) consider(*state.cycle_at);
        consider(start + s.min_insp_time);
        if (s.rise_time > 0) consider(start + s.rise_time);
        consider(start + s.max_insp_time);
    }
    return best;
}

} // namespace ventsim
