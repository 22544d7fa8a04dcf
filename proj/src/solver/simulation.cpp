#include "ventsim/solver/simulation.hpp"

#include "ventsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ventsim {

namespace {

constexpr double kTimeEps = 1e-9;

} // namespace

std::string_view to_string(EventKind k)
{
    switch (k) {
    case EventKind::EffortStart: return "effort_start";
    case EventKind::EffortEnd: return "effort_end";
    case EventKind::Trigger: return "trigger";
    case EventKind::Cycle: return "cycle";
    }
    return "?";
}

Simulation::Simulation(const SimulationSetup& setup) : setup_(setup)
{
    setup_.patient.validate();
    setup_.settings.validate();
    setup_.tubing.validate();
    setup_.solver.validate();
    const SteadyState ss = steady_state(setup_.patient, setup_.settings.peep, setup_.tubing);
    model_.patient = setup_.patient;
    model_.tubing = setup_.tubing;
    model_.pip_source = setup_.pip_source;
    model_.pip_pressure = ss.pleural_pressure;
    y_ = ss.state.pack();
    frc_ = ss.frc;
}

void Simulation::add_effort(double onset, const EffortShape& shape, const BreathOverride& override)
{
    shape.validate();
    if (!efforts_.empty()) {
        const auto& last = efforts_.back();
        if (!(onset >= last.onset + last.shape.duration())) {
            throw ConfigError("efforts must be appended in time order without overlap");
        }
    }
    if (onset < t_ - kTimeEps) throw ConfigError("effort onset lies in the past");
    efforts_.push_back({onset, shape, override});
}

void Simulation::set_override(std::size_t effort, const BreathOverride& override)
{
    if (effort >= efforts_.size()) throw NotFoundError("no effort " + std::to_string(effort));
    efforts_[effort].override = override;
}

void Simulation::set_script(std::vector<ScriptedBreath> script)
{
    double prev = -1.0;
    for (std::size_t i = 0; i < script.size(); ++i) {
        if (!(script[i].trigger > prev) || !(script[i].cycle > script[i].trigger)) {
            throw ScenarioError("scripted breath " + std::to_string(i) +
                                ": trigger/cycle times are not increasing");
        }
        prev = script[i].cycle;
    }
    script_ = std::move(script);
    script_pos_ = 0;
}

void Simulation::update_settings(const VentilatorSettings& settings)
{
    settings.validate();
    setup_.settings = settings;
}

void Simulation::reset_patient(const ArchetypeParams& patient)
{
    patient.validate();
    const SteadyState ss = steady_state(patient, setup_.settings.peep, setup_.tubing);
    setup_.patient = patient;
    model_.patient = patient;
    model_.pip_pressure = ss.pleural_pressure;
    y_ = ss.state.pack();
    frc_ = ss.frc;
}

std::optional<std::size_t> Simulation::effort_index_at(double t) const
{
    auto it = std::upper_bound(efforts_.begin(), efforts_.end(), t,
                               [](double v, const Effort& e) { return v < e.onset; });
    if (it == efforts_.begin()) return std::nullopt;
    return static_cast<std::size_t>(std::distance(efforts_.begin(), it) - 1);
}

double Simulation::effort_pressure(double t) const
{
    const auto i = effort_index_at(t);
    if (!i) return 0.0;
    return pmus_waveform(efforts_[*i].shape, t - efforts_[*i].onset);
}

CircuitInputs Simulation::inputs_at(double t, const VentPhase& phase) const
{
    const auto& c = setup_.cardiac;
    CircuitInputs in;
    in.pmus = effort_pressure(t) + cardiac_oscillation(c.amplitude, c.heart_rate, t + c.phase);
    in.branches = assemble_vent_branches(setup_.tubing, setup_.settings, phase, t);
    return in;
}

SensorSample Simulation::sense(const StateVector& y, double t) const
{
    const NodePressures n = node_pressures(model_, inputs_at(t, ctrl_.vent), y);
    return {t, n.sensor, y[6] - y[7]};
}

double Simulation::next_stop(double t_end) const
{
    double stop = std::min(t_ + setup_.solver.max_step, t_end);
    auto consider = [&](double c) {
        if (c > t_ + kTimeEps && c < stop) stop = c;
    };
    consider(static_cast<double>(next_sample_) / setup_.solver.output_rate);
    if (next_effort_event_ < 2 * efforts_.size()) {
        const std::size_t i = next_effort_event_ / 2;
        consider(next_effort_event_ % 2 == 0 ? efforts_[i].onset : effort_end(i));
    }
    if (setup_.mode == ControlMode::ClosedLoop) {
        if (auto c = next_controller_time(setup_.settings, ctrl_, t_)) consider(*c);
    } else if (ctrl_.vent.phase == Phase::Inspiration && setup_.settings.rise_time > 0) {
        consider(ctrl_.vent.t_phase_start + setup_.settings.rise_time);
    }
    if (setup_.mode == ControlMode::Scripted && script_pos_ < 2 * script_.size()) {
        const auto& b = script_[script_pos_ / 2];
        consider(script_pos_ % 2 == 0 ? b.trigger : b.cycle);
    }
    return stop;
}

bool Simulation::controller_decides(const ControllerStep& r) const
{
    return r.transition.has_value() || (r.state.pending_trigger && !ctrl_.pending_trigger);
}

std::optional<Transition> Simulation::run_controller(double t0, const StateVector& y0, double& t1,
                                                     StateVector& y1)
{
    auto evaluate = [&](const StateVector& y, double t) {
        std::optional<EffortContext> ctx;
        if (const auto i = effort_index_at(t)) {
            ctx = EffortContext{*i, efforts_[*i].onset, effort_end(*i), efforts_[*i].override};
        }
        return controller_step(setup_.settings, ctrl_, sense(y, t), ctx ? &*ctx : nullptr);
    };

    ControllerStep r = evaluate(y1, t1);
    if (controller_decides(r)) {
        // Localize the decision inside (t0, t1] by re-stepping from t0.
        const VentPhase phase = ctrl_.vent;
        const InputFunction in = [this, phase](double t) { return inputs_at(t, phase); };
        double lo = 0.0;
        double hi = t1 - t0;
        while (hi - lo > setup_.solver.event_localization_tol) {
            const double mid = 0.5 * (lo + hi);
            const StateVector ym = step(model_, in, t0, y0, mid, setup_.solver, &stats_);
            const ControllerStep rm = evaluate(ym, t0 + mid);
            if (controller_decides(rm)) {
                hi = mid;
                y1 = ym;
                r = rm;
            } else {
                lo = mid;
            }
        }
        t1 = t0 + hi;
    }
    std::optional<Transition> transition = r.transition;
    const auto effort_before = ctrl_.breath_effort;
    ctrl_ = r.state;
    if (transition) {
        transition->t = t1;
        last_transition_effort_ =
            transition->kind == TransitionKind::Trigger ? ctrl_.breath_effort : effort_before;
    }
    return transition;
}

void Simulation::emit_effort_events(double t1)
{
    while (next_effort_event_ < 2 * efforts_.size()) {
        const std::size_t i = next_effort_event_ / 2;
        const bool start = next_effort_event_ % 2 == 0;
        const double te = start ? efforts_[i].onset : effort_end(i);
        if (te > t1 + kTimeEps) break;
        events_.push_back({start ? EventKind::EffortStart : EventKind::EffortEnd, te, i});
        ++next_effort_event_;
    }
}

void Simulation::apply_script(double t1)
{
    while (script_pos_ < 2 * script_.size()) {
        const auto& b = script_[script_pos_ / 2];
        const bool trigger = script_pos_ % 2 == 0;
        const double ts = trigger ? b.trigger : b.cycle;
        if (ts > t1 + kTimeEps) break;
        ctrl_.vent = {trigger ? Phase::Inspiration : Phase::Expiration, ts, 0.0};
        events_.push_back({trigger ? EventKind::Trigger : EventKind::Cycle, ts, b.effort});
        ++script_pos_;
    }
}

void Simulation::record_sample(double t, const StateVector& y)
{
    const NodePressures n = node_pressures(model_, inputs_at(t, ctrl_.vent), y);
    Sample s;
    s.t = t;
    s.paw = n.sensor;
    s.flow = y[6] - y[7];
    s.vol = y[0] + y[1] - frc_;
    s.pmus = effort_pressure(t);
    s.phase = ctrl_.vent.phase;
    s.lung_side_volume = y[0] + y[1];
    s.chest_wall_volume = y[2];
    samples_.push_back(s);
}

void Simulation::advance_to(double t_end)
{
    const double rate = setup_.solver.output_rate;
    if (next_sample_ == 0 && t_ == 0.0) {
        emit_effort_events(0.0);
        if (setup_.mode == ControlMode::Scripted) apply_script(0.0);
        record_sample(0.0, y_);
        next_sample_ = 1;
    }
    while (t_ < t_end - kTimeEps) {
        double t1 = next_stop(t_end);
        const VentPhase phase = ctrl_.vent;
        const InputFunction in = [this, phase](double t) { return inputs_at(t, phase); };
        StateVector y1 = step(model_, in, t_, y_, t1 - t_, setup_.solver, &stats_);

        std::optional<Transition> transition;
        if (setup_.mode == ControlMode::ClosedLoop) transition = run_controller(t_, y_, t1, y1);
        t_ = t1;
        y_ = y1;
        max_violation_ = std::max(max_violation_, std::abs(y_[0] + y_[1] - y_[2]));

        emit_effort_events(t_);
        if (transition) {
            events_.push_back({transition->kind == TransitionKind::Trigger ? EventKind::Trigger
                                                                           : EventKind::Cycle,
                               t_, last_transition_effort_});
        }
        if (setup_.mode == ControlMode::Scripted) apply_script(t_);

        const double ts = static_cast<double>(next_sample_) / rate;
        if (std::abs(t_ - ts) < kTimeEps) {
            t_ = ts;
            record_sample(t_, y_);
            ++next_sample_;
        }
    }
}

std::vector<Sample> Simulation::take_samples()
{
    std::vector<Sample> out;
    out.swap(samples_);
    return out;
}

std::vector<SimEvent> Simulation::take_events()
{
    std::vector<SimEvent> out;
    out.swap(events_);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

template <class F>
std::vector<double> column(const std::vector<Sample>& s, F f)
{
    std::vector<double> out;
    out.reserve(s.size());
    for (const auto& x : s) out.push_back(f(x));
    return out;
}

const BreathOverride& override_of(const SimulationInputs& in, std::size_t i)
{
    static const BreathOverride none{};
    return in.asynchrony.breaths.empty() ? none : in.asynchrony.breaths[i];
}

Trajectory run_record(const SimulationInputs& in, ControlMode mode,
                      const std::vector<ScriptedBreath>& script)
{
    if (!in.asynchrony.breaths.empty() && in.asynchrony.breaths.size() != in.breaths.size()) {
        throw ConfigError("asynchrony plan does not match the breath plan");
    }
    SimulationSetup setup = in.setup;
    setup.mode = mode;
    Simulation sim(setup);
    for (std::size_t i = 0; i < in.breaths.size(); ++i) {
        sim.add_effort(in.breaths.onsets[i], in.breaths.shapes[i], override_of(in, i));
    }
    if (mode == ControlMode::Scripted) sim.set_script(script);
    sim.advance_to(in.breaths.record_length);

    Trajectory traj;
    traj.samples = sim.take_samples();
    traj.events = sim.take_events();
    traj.frc = sim.frc();
    traj.record_length = in.breaths.record_length;
    traj.max_constraint_violation = sim.max_constraint_violation();
    traj.stats = sim.stats();
    return traj;
}

double crossing_time(const Sample& a, const Sample& b, double ma, double mb)
{
    if (ma == mb) return b.t;
    return a.t + (b.t - a.t) * ma / (ma - mb);
}

} // namespace

std::vector<double> Trajectory::column_t() const { return column(samples, [](auto& s) { return s.t; }); }
std::vector<double> Trajectory::column_paw() const { return column(samples, [](auto& s) { return s.paw; }); }
std::vector<double> Trajectory::column_flow() const { return column(samples, [](auto& s) { return s.flow; }); }
std::vector<double> Trajectory::column_vol() const { return column(samples, [](auto& s) { return s.vol; }); }

Trajectory simulate(const SimulationInputs& inputs)
{
    return run_record(inputs, inputs.setup.mode, inputs.script);
}

StagedRun run_staged(const SimulationInputs& in)
{
    const auto& s = in.setup.settings;
    const auto& plan = in.breaths;
    StagedRun run;

    // Stage 1: PEEP only. The trigger of each effort is the first crossing of
    // the trigger threshold inside its window, plus any scripted delay.
    run.stage1 = run_record(in, ControlMode::Cpap, {});
    const auto& s1 = run.stage1.samples;
    run.trigger_times.assign(plan.size(), std::nullopt);
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const auto& ov = override_of(in, i);
        if (ov.suppress_trigger) continue;
        const double onset = plan.onsets[i];
        const double end = plan.effort_end(i);
        for (std::size_t k = 1; k < s1.size(); ++k) {
            if (s1[k].t <= onset) continue;
            if (s1[k].t > end) break;
            const double m0 = trigger_margin(s, {s1[k - 1].t, s1[k - 1].paw, s1[k - 1].flow});
            const double m1 = trigger_margin(s, {s1[k].t, s1[k].paw, s1[k].flow});
            if (m1 < 0 && m0 >= 0) {
                run.trigger_times[i] = crossing_time(s1[k - 1], s1[k], m0, m1) + ov.trigger_delay;
                break;
            }
        }
    }

    // Stage 2: triggers applied, inspiration held until the latest admissible
    // cycle time (max inspiratory time, or the next trigger minus the minimum
    // expiratory time).
    std::vector<std::size_t> efforts;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        if (run.trigger_times[i]) efforts.push_back(i);
    }
    std::vector<ScriptedBreath> held;
    for (std::size_t j = 0; j < efforts.size(); ++j) {
        const double trig = *run.trigger_times[efforts[j]];
        double deadline = trig + s.max_insp_time;
        if (j + 1 < efforts.size()) {
            deadline = std::min(deadline, *run.trigger_times[efforts[j + 1]] - s.min_exp_time);
        }
        if (!(deadline > trig)) {
            std::ostringstream os;
            os << "breath " << efforts[j] << ": trigger at " << trig
               << " s leaves no room before the next trigger";
            throw ScenarioError(os.str());
        }
        held.push_back({trig, deadline, efforts[j]});
    }
    run.stage2 = run_record(in, ControlMode::Scripted, held);
    const auto& s2 = run.stage2.samples;

    run.schedule.clear();
    std::size_t k = 0;
    for (std::size_t j = 0; j < held.size(); ++j) {
        const std::size_t i = efforts[j];
        const auto& ov = override_of(in, i);
        const double trig = held[j].trigger;
        const double deadline = held[j].cycle;
        double cycle = deadline;
        if (ov.cycle_offset) {
            cycle = std::max(plan.effort_end(i) + *ov.cycle_offset, trig + s.min_insp_time);
        } else {
            while (k < s2.size() && s2[k].t < trig) ++k;
            double peak = 0.0;
            double prev_margin = 0.0;
            for (std::size_t q = k; q < s2.size() && s2[q].t <= deadline; ++q) {
                peak = std::max(peak, s2[q].flow);
                const double m = s2[q].flow - s.cycle_fraction * peak;
                if (s2[q].t >= trig + s.min_insp_time && m < 0) {
                    cycle = q > k && s2[q - 1].t >= trig + s.min_insp_time
                                ? crossing_time(s2[q - 1], s2[q], prev_margin, m)
                                : s2[q].t;
                    break;
                }
                prev_margin = m;
            }
        }
        cycle = std::min(cycle, deadline);
        if (!(cycle > trig)) {
            std::ostringstream os;
            os << "breath " << i << ": cycle time " << cycle << " s does not follow trigger " << trig
               << " s";
            throw ScenarioError(os.str());
        }
        run.schedule.push_back({trig, cycle, i});
        run.schedule_effort.push_back(i);
    }

    // Stage 3: both schedules fixed.
    run.final = run_record(in, ControlMode::Scripted, run.schedule);
    return run;
}

std::vector<double> tidal_volumes(const Trajectory& traj)
{
    std::vector<double> onsets;
    for (const auto& e : traj.events) {
        if (e.kind == EventKind::EffortStart) onsets.push_back(e.t);
    }
    std::vector<double> out;
    const auto& s = traj.samples;
    for (std::size_t i = 0; i < onsets.size(); ++i) {
        const double a = onsets[i];
        const double b = i + 1 < onsets.size() ? onsets[i + 1] : traj.record_length + 1.0;
        std::size_t lo = 0;
        while (lo < s.size() && s[lo].t < a) ++lo;
        std::size_t hi = lo;
        while (hi < s.size() && s[hi].t < b) ++hi;
        if (hi <= lo) continue;
        std::size_t peak = lo;
        for (std::size_t q = lo; q < hi; ++q) {
            if (s[q].vol > s[peak].vol) peak = q;
        }
        double trough = s[peak].vol;
        for (std::size_t q = lo; q <= peak; ++q) trough = std::min(trough, s[q].vol);
        out.push_back(s[peak].vol - trough);
    }
    return out;
}

ConservationReport conservation_report(const Trajectory& traj)
{
    ConservationReport r;
    r.max_constraint_violation = traj.max_constraint_violation;
    for (const auto& x : traj.samples) {
        r.max_constraint_violation =
            std::max(r.max_constraint_violation, std::abs(x.lung_side_volume - x.chest_wall_volume));
    }

    auto vts = tidal_volumes(traj);
    if (!vts.empty()) {
        std::nth_element(vts.begin(), vts.begin() + vts.size() / 2, vts.end());
        r.median_tidal_volume = vts[vts.size() / 2];
    }

    // Window boundaries: effort onsets, plus both ends of the record.
    std::vector<double> cuts{0.0};
    for (const auto& e : traj.events) {
        if (e.kind == EventKind::EffortStart && e.t > 0) cuts.push_back(e.t);
    }
    const auto& s = traj.samples;
    double worst = 0.0;
    std::size_t q = 0;
    for (std::size_t w = 0; w < cuts.size() && q < s.size(); ++w) {
        const double end = w + 1 < cuts.size() ? cuts[w + 1] : std::numeric_limits<double>::infinity();
        while (q < s.size() && s[q].t < cuts[w]) ++q;
        const std::size_t first = q;
        double integral = 0.0;
        while (q + 1 < s.size() && s[q + 1].t <= end) {
            integral += 0.5 * (s[q].flow + s[q + 1].flow) * (s[q + 1].t - s[q].t);
            ++q;
        }
        if (q > first) {
            const double dv = s[q].lung_side_volume - s[first].lung_side_volume;
            worst = std::max(worst, std::abs(integral - dv));
        }
    }
    r.flow_volume_mismatch = r.median_tidal_volume > 0 ? worst / r.median_tidal_volume : worst;
    return r;
}

} // namespace ventsim
