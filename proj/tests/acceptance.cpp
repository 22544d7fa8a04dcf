// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exit status is nonzero when any criterion fails.

#include "ventsim/datagen/calibrate.hpp"
#include "ventsim/datagen/config.hpp"
#include "ventsim/datagen/dataset.hpp"
#include "ventsim/datagen/evaluate.hpp"
#include "ventsim/datagen/io.hpp"
#include "ventsim/datagen/noise.hpp"
#include "ventsim/labeling/labels.hpp"
#include "ventsim/labeling/metrics.hpp"
#include "ventsim/model/element_laws.hpp"
#include "ventsim/rng.hpp"
#include "ventsim/solver/circuit.hpp"
#include "ventsim/solver/simulation.hpp"

#include "oracle.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

using namespace ventsim;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what)
    {
        if (!ok) pass = false;
        notes.push_back((ok ? "ok   " : "FAIL ") + what);
    }
    void info(const std::string& what) { notes.push_back("     " + what); }
};

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double rel_err(double got, double want)
{
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const char* kArchetypes[] = {"Healthy", "Obese1", "Obese2",   "ARDS1", "ARDS2",
                             "ARDS3",   "Fibrosis", "COPD1", "COPD2"};

Json nine_record_config(std::uint64_t seed, const Json& asynchrony)
{
    Json records = Json::array();
    for (const char* a : kArchetypes) records.push_back(Json{{"archetype", a}});
    return Json{{"master_seed", seed},
                {"defaults",
                 {{"record_length", 120},
                  {"breathing", {{"rate_range", {15, 20}}}},
                  {"asynchrony", asynchrony}}},
                {"records", records}};
}

Json uniform_asynchrony()
{
    Json d = Json::object();
    for (auto c : kAllClasses) d[std::string(to_string(c))] = 1.0 / kAsynchronyClassCount;
    return d;
}

/// generate_record for every record of a config, calibrating each.
std::vector<LabeledRecord> generate_all(const RunConfig& cfg)
{
    std::vector<LabeledRecord> out;
    for (const auto& spec : cfg.records) {
        std::optional<CalibrationResult> cal;
        if (spec.calibrate) cal = calibrate_pinsp(CalibrationRequest::from_record(spec));
        out.push_back(generate_record(spec, cal));
    }
    return out;
}

std::vector<double> times_of(const std::vector<SimEvent>& ev, EventKind k)
{
    std::vector<double> out;
    for (const auto& e : ev) {
        if (e.kind == k) out.push_back(e.t);
    }
    return out;
}

// ---------------------------------------------------------------------------

Verdict element_laws()
{
    Verdict v;
    const auto t0 = Clock::now();
    const auto& h = archetype("Healthy");
    const auto& ards1 = archetype("ARDS1");
    const auto& copd2 = archetype("COPD2");
    struct Example {
        std::string name;
        double got;
        double closed_form;
        std::optional<std::string> printed; // value as printed next to the example
    };
    const double big = 400.0;
    std::vector<Example> ex = {
        {"Healthy V_cw(A_cw)", chest_wall_volume(h, h.A_cw), (h.TLC - h.RV) / 1.99 + h.RV, "3.2249"},
        {"Healthy V_cw asymptote", chest_wall_volume(h, -big), (h.TLC - h.RV) / 0.99 + h.RV, "5.2303"},
        {"Healthy V_cw lower asymptote", chest_wall_volume(h, big), h.RV, "1.24"},
        {"ARDS1 V_l(D_l)", lung_volume(ards1, ards1.D_l), ards1.A_l / 2, "1.85"},
        {"ARDS1 V_l(30)", lung_volume(ards1, 30.0), ards1.A_l / (1 + std::exp(-ards1.B_l * (30 - ards1.D_l))), "3.5245"},
        {"Healthy V_l(-0.3)", lung_volume(h, -0.3), 0.0, "0.0"},
        {"Healthy V_c(B_c)", collapsible_volume(h, h.B_c), h.V_cmax / std::pow(2.0, h.D_c), "0.07524"},
        {"Healthy V_c(+inf)", collapsible_volume(h, 1e4), h.V_cmax, "0.1"},
        {"Healthy V_c(0)", collapsible_volume(h, 0.0), oracle::vc(h, 0.0), "0.02533"},
        {"Healthy R_c(B_c)", collapsible_resistance(h, h.B_c), h.K_c * std::pow(2.0, 2 * h.D_c), "0.37124"},
        {"Healthy R_c(+inf)", collapsible_resistance(h, 1e4), h.K_c, "0.21"},
        {"Healthy R_s(RV)", small_airway_resistance(h, h.RV), h.A_s + h.B_s, "2.22"},
        {"Healthy R_s(V*)", small_airway_resistance(h, h.V_star), h.A_s * std::exp(h.K_s) + h.B_s, "0.020041"},
        {"COPD2 R_s(RV)", small_airway_resistance(copd2, copd2.RV), copd2.A_s + copd2.B_s, "10.0"},
        {"Healthy R_u(0)", upper_airway_resistance(h, 0.0), h.A_u, "0.34"},
        {"Healthy R_u(1)", upper_airway_resistance(h, 1.0), h.A_u + h.K_u, "0.80"},
        {"Healthy R_u(-1)", upper_airway_resistance(h, -1.0), h.A_u + h.K_u, "0.80"},
        {"Healthy P_l(V=0)", invert_compliance(Curve::Lung, h, 0.0), h.A_l + h.B_l, "-0.3"},
        {"ARDS1 P_t(V=A_l/2)", invert_compliance(Curve::Lung, ards1, ards1.A_l / 2), ards1.D_l, "10.0"},
        {"Healthy P_cw(V_cw(A_cw))", invert_compliance(Curve::ChestWall, h, (h.TLC - h.RV) / 1.99 + h.RV), h.A_cw, "1.4"},
    };
    double worst = 0;
    for (const auto& e : ex) {
        const double err = e.closed_form == 0 ? std::abs(e.got) : rel_err(e.got, e.closed_form);
        worst = std::max(worst, err);
        v.check(err <= 1e-6, fmt::format("{}: {:.8g} vs closed form {:.8g}", e.name, e.got, e.closed_form));
        if (e.printed) {
            // a correctly rounded printed value is within half a unit of its last digit
            const auto dot = e.printed->find('.');
            const int decimals = dot == std::string::npos ? 0 : static_cast<int>(e.printed->size() - dot - 1);
            if (std::abs(e.closed_form - std::stod(*e.printed)) > 0.5 * std::pow(10.0, -decimals) + 1e-12) {
                v.info(fmt::format("  printed example value {} is not the rounded closed form {:.{}f}", *e.printed,
                                   e.closed_form, decimals));
            }
        }
    }
    v.check(std::abs(collapsible_resistance(h, 3.0) -
                     h.K_c * std::pow(h.V_cmax / collapsible_volume(h, 3.0), 2)) < 1e-12,
            "R_c = K_c (V_cmax / V_c)^2 identity");

    // every law against the independent restatement on random operands
    Rng rng(11);
    std::size_t n = 0;
    for (const auto& p : archetype_catalog()) {
        for (int i = 0; i < 2000; ++i) {
            const double P = -30 + 80 * rng.uniform();
            const double V = p.RV + (p.TLC - p.RV) * rng.uniform();
            const double e1 = rel_err(chest_wall_volume(p, P), oracle::vcw(p, P));
            const double e2 = rel_err(collapsible_volume(p, P), oracle::vc(p, P));
            const double e3 = rel_err(collapsible_resistance(p, P), oracle::rc(p, P));
            const double e4 = rel_err(small_airway_resistance(p, V), oracle::rs(p, V));
            double e5 = 0;
            if (const double ref = oracle::vl(p, P); std::isfinite(ref) && std::abs(ref) > 1e-6) {
                e5 = rel_err(lung_volume(p, P), ref);
            }
            worst = std::max({worst, e1, e2, e3, e4, e5});
            n += 5;
        }
    }
    v.check(worst <= 1e-6, fmt::format("{} random evaluations, worst relative error {:.2e}", n, worst));
    const double elapsed = seconds_since(t0);
    v.check(elapsed < 1.0, fmt::format("runtime {:.3f} s", elapsed));
    return v;
}

Verdict equilibrium()
{
    Verdict v;
    std::map<std::string, double> frc;
    for (const char* name : {"Healthy", "COPD2", "Fibrosis"}) {
        const auto& p = archetype(name);
        const auto ss = steady_state(p, 0.0);
        const auto scan = oracle::scan_equilibrium(p, 0.0);
        frc[name] = ss.frc;
        const double residual = std::abs(ss.state.V_l + ss.state.V_c - ss.state.V_cw);
        v.check(residual < 1e-9, fmt::format("{} |V_l+V_c-V_cw| = {:.2e} L", name, residual));
        v.check(scan && std::abs(*scan - ss.pleural_pressure) <= 0.01,
                fmt::format("{} P_pl {:.4f} vs grid scan {:.3f} cmH2O", name, ss.pleural_pressure,
                            scan ? *scan : NAN));
        // the oracle's volume at its own root
        if (scan) {
            const double v_scan = oracle::vl(p, -*scan) + oracle::vc(p, -*scan);
            v.info(fmt::format("{} FRC {:.4f} L (grid-scan FRC {:.4f} L)", name, ss.frc, v_scan));
        }
    }
    v.check(frc["Healthy"] >= 2.2 && frc["Healthy"] <= 3.4, fmt::format("Healthy FRC {:.4f} in [2.2, 3.4]", frc["Healthy"]));
    v.check(frc["COPD2"] > frc["Healthy"] && frc["Healthy"] > frc["Fibrosis"],
            fmt::format("FRC COPD2 {:.3f} > Healthy {:.3f} > Fibrosis {:.3f}", frc["COPD2"], frc["Healthy"],
                        frc["Fibrosis"]));
    return v;
}

/// Independent conservation check on the clean samples: series-charge
/// constraint per sample, and trapezoid flow integral against the volume
/// change over each effort-to-effort cycle.
Verdict conservation(const std::vector<LabeledRecord>& recs)
{
    Verdict v;
    for (const auto& r : recs) {
        const auto& s = r.clean_samples;
        double worst = r.trajectory.max_constraint_violation;
        for (const auto& x : s) worst = std::max(worst, std::abs(x.lung_side_volume - x.chest_wall_volume));
        std::vector<double> vts;
        double mismatch = 0;
        const auto& onsets = r.inputs.breaths.onsets;
        for (std::size_t b = 0; b + 1 < onsets.size(); ++b) {
            double integral = 0, vmin = INFINITY, vmax = -INFINITY;
            std::size_t first = s.size(), last = 0;
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (s[i].t < onsets[b] || s[i].t > onsets[b + 1]) continue;
                first = std::min(first, i);
                last = i;
                vmin = std::min(vmin, s[i].vol);
                vmax = std::max(vmax, s[i].vol);
            }
            for (std::size_t i = first; i < last; ++i) {
                integral += 0.5 * (s[i].flow + s[i + 1].flow) * (s[i + 1].t - s[i].t);
            }
            vts.push_back(vmax - vmin);
            mismatch = std::max(mismatch, std::abs(integral - (s[last].vol - s[first].vol)));
        }
        const double vt = median(vts);
        v.check(worst < 1e-3 && mismatch < 0.02 * vt,
                fmt::format("{}: max |V_l+V_c-V_cw| {:.2e} L, flow-volume mismatch {:.3f}% of VT {:.3f} L",
                            to_string(r.spec.archetype), worst, 100 * mismatch / vt, vt));
    }
    return v;
}

Verdict record_shape(const std::vector<LabeledRecord>& recs)
{
    Verdict v;
    for (const auto& r : recs) {
        const double rr = r.spec.respiratory_rate();
        v.check(rr >= 15 && rr <= 20 && r.labels.size() >= 30 && r.labels.size() <= 40,
                fmt::format("{}: RR {:.2f}/min, {} labeled breaths, {} truncated", to_string(r.spec.archetype), rr,
                            r.labels.size(), r.segmentation.truncated.size()));
    }
    return v;
}

Verdict calibration(const std::vector<LabeledRecord>& recs)
{
    Verdict v;
    std::map<ArchetypeId, double> driving;
    for (const auto& r : recs) {
        if (!r.calibration) {
            v.check(false, fmt::format("{}: no calibration", to_string(r.spec.archetype)));
            continue;
        }
        // rerun the calibration scenario from scratch: 5 synchronous breaths at
        // 15/min, no jitter, no cardiac component
        SimulationInputs in;
        in.setup.patient = archetype(r.spec.archetype);
        in.setup.settings = r.spec.settings;
        in.setup.settings.p_insp = r.calibration->p_insp;
        in.setup.tubing = r.spec.tubing;
        in.setup.solver = r.spec.solver;
        in.setup.cardiac.amplitude = 0;
        BreathPlanOptions opt;
        opt.shape = r.spec.breathing.effort;
        in.breaths = build_breath_plan(15, 22, 0, 1, opt);
        const auto tr = simulate(in);
        std::vector<double> vts;
        const auto& on = in.breaths.onsets;
        for (std::size_t b = 0; b < on.size(); ++b) {
            const double until = b + 1 < on.size() ? on[b + 1] : tr.samples.back().t;
            // largest rise over the cycle: the peak minus the minimum before it
            double lowest = INFINITY, rise = 0;
            for (const auto& s : tr.samples) {
                if (s.t < on[b] || s.t > until) continue;
                lowest = std::min(lowest, s.vol);
                rise = std::max(rise, s.vol - lowest);
            }
            vts.push_back(rise);
        }
        const double vt = median(vts);
        const double target = r.spec.target_tidal_volume;
        driving[r.spec.archetype] = r.calibration->p_insp - r.spec.settings.peep;
        v.check(on.size() == 5 && std::abs(vt - target) <= 0.05 * target,
                fmt::format("{}: P_insp {:.3f} cmH2O, rerun median VT {:.4f} L ({:+.2f}%)", to_string(r.spec.archetype),
                            r.calibration->p_insp, vt, 100 * (vt - target) / target));
    }
    v.check(driving[ArchetypeId::ARDS3] > driving[ArchetypeId::Healthy],
            fmt::format("driving pressure ARDS3 {:.3f} > Healthy {:.3f}", driving[ArchetypeId::ARDS3],
                        driving[ArchetypeId::Healthy]));
    return v;
}

Verdict classification(const std::vector<std::vector<LabeledRecord>*>& sets)
{
    Verdict v;
    Rng rng(2024);
    std::size_t agree = 0;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) {
        // a third of the pairs sit exactly on or next to a threshold
        auto draw = [&](double lo, double hi, std::initializer_list<double> edges) {
            const double u = rng.uniform();
            if (u < 0.33) {
                const double e = *(edges.begin() + static_cast<std::size_t>(rng.uniform() * edges.size()) % edges.size());
                const double k = std::floor(rng.uniform() * 3) - 1;
                return e + k * 1e-9 * std::max(1.0, std::abs(e));
            }
            return lo + (hi - lo) * rng.uniform();
        };
        const double s = draw(-300, 1500, {250.0});
        const double e = draw(-1500, 1500, {-100.0, 300.0});
        const bool trig = rng.uniform() > 0.1;
        const auto got = trig ? classify_breath(s, e, true) : classify_breath(std::nullopt, std::nullopt, false);
        const auto want = oracle::classify(trig ? std::optional(s) : std::nullopt,
                                           trig ? std::optional(e) : std::nullopt, trig);
        agree += got == want;
    }
    v.check(agree == n, fmt::format("classifier vs brute-force restatement: {}/{} agree", agree, n));

    std::size_t total = 0, hit = 0, total4 = 0, hit4 = 0;
    for (const auto* set : sets) {
        for (const auto& r : *set) {
            for (const auto& l : r.labels) {
                if (!l.intent || *l.intent == AsynchronyClass::Normal) continue;
                const bool basic = *l.intent == AsynchronyClass::EarlyCycling ||
                                   *l.intent == AsynchronyClass::LateCycling ||
                                   *l.intent == AsynchronyClass::DelayedInspiration ||
                                   *l.intent == AsynchronyClass::IneffectiveEffort;
                ++total;
                total4 += basic;
                if (l.cls == *l.intent) {
                    ++hit;
                    hit4 += basic;
                    continue;
                }
                std::string why;
                if (!l.t_trigger) {
                    why = "effort never reached the trigger threshold";
                    for (const auto& prev : r.labels) {
                        if (prev.breath_idx + 1 == l.breath_idx && prev.t_cycle) {
                            why += fmt::format(" (starts {:.2f} s after the previous cycle, {})",
                                               l.t_insp_start - *prev.t_cycle, to_string(prev.cls));
                        }
                    }
                } else {
                    why = fmt::format("delays {:.1f} / {:.1f} ms", *l.start_delay_ms, *l.end_delay_ms);
                }
                v.info(fmt::format("mislabel {} {}/{}: intent {} labeled {}: {}", to_string(r.spec.archetype),
                                   r.spec.id, l.breath_idx, to_string(*l.intent), to_string(l.cls), why));
            }
        }
    }
    v.check(total4 > 0 && hit4 >= 0.99 * total4,
            fmt::format("EC/LC/DI/IE intents recovered: {}/{} ({:.2f}%)", hit4, total4, 100.0 * hit4 / total4));
    v.check(total > 0 && hit >= 0.99 * total,
            fmt::format("all asynchronous intents incl. compounds: {}/{} ({:.2f}%)", hit, total, 100.0 * hit / total));
    return v;
}

Verdict metrics(const fs::path& dataset)
{
    Verdict v;
    // printed TPR/TNR/BA per column
    struct Column {
        AsynchronyClass cls;
        double tpr, tnr, ba;
    };
    using C = AsynchronyClass;
    const Column table[] = {{C::EarlyCycling, 0.86, 0.99, 0.93},  {C::LateCycling, 0.88, 0.91, 0.89},
                            {C::DelayedInspiration, 0.43, 0.98, 0.71}, {C::Normal, 0.78, 0.96, 0.87},
                            {C::DelayedLate, 0.82, 0.91, 0.86},    {C::DelayedEarly, 0.0, 0.99, 0.50}};
    for (const auto& c : table) {
        // counts that realize the printed rates exactly
        const long tp = std::lround(c.tpr * 100), tn = std::lround(c.tnr * 100);
        const auto m = metrics_from_counts(tp, 50, 100 - tp, tn);
        const auto m2 = metrics_from_counts(tp, 100 - tn, 100 - tp, tn);
        const bool identity = std::abs(m2.balanced_accuracy - 0.5 * (m2.tpr + m2.tnr)) < 1e-15 &&
                              std::abs(m.balanced_accuracy - 0.5 * (m.tpr + m.tnr)) < 1e-15;
        // the printed BA is computed from unrounded rates: it may differ from
        // the mean of the printed rates by the input rounding (<= 0.005)
        const double mean = 0.5 * (c.tpr + c.tnr);
        v.check(identity && std::abs(mean - c.ba) <= 0.005 + 1e-12,
                fmt::format("{}: ({:.2f}+{:.2f})/2 = {} printed {:.2f}", to_string(c.cls), c.tpr, c.tnr,
                            format_metric(m2.balanced_accuracy), c.ba));
    }
    {
        // the EC example through the report table
        DetectorReport rep;
        const auto ec = index_of(C::EarlyCycling), nm = index_of(C::Normal);
        rep.confusion[ec][ec] = 86;
        rep.confusion[ec][nm] = 14;
        rep.confusion[nm][nm] = 99;
        rep.confusion[nm][ec] = 1;
        rep.per_class[ec] = metrics_from_counts(86, 1, 14, 99);
        const std::string csv = rep.metrics_table_csv();
        const bool printed = csv.find("balanced_accuracy,0.93") != std::string::npos;
        v.check(printed, "EC (0.86, 0.99) -> balanced accuracy printed as 0.93");
    }

    const auto truth = load_truth(dataset);
    std::vector<PredictedBreath> perfect;
    for (const auto& t : truth) perfect.push_back({t.ref, Prediction{t.label.cls, {}, {}, true}});
    const auto rep = evaluate_predictions(truth, perfect);
    bool all_one = true;
    for (auto c : kAllClasses) {
        const auto& m = rep.per_class[index_of(c)];
        if (m.tp + m.fn == 0) continue; // class absent: rates undefined
        all_one = all_one && m.tpr == 1.0 && m.tnr == 1.0 && m.ppv == 1.0 && m.balanced_accuracy == 1.0;
    }
    v.check(all_one, fmt::format("perfect predictions on {} breaths: every present class at 1.0", truth.size()));

    // +200 ms on every end delay; the expected LC false positives come from the oracle
    std::vector<PredictedBreath> shifted;
    long expect_lc_fp = 0, ec_deep = 0, ec_deep_hit = 0;
    std::map<BreathRef, bool> deep;
    for (const auto& t : truth) {
        Prediction p;
        if (t.label.t_trigger) {
            p.start_delay_ms = t.label.start_delay_ms;
            p.end_delay_ms = *t.label.end_delay_ms + 200;
            p.triggered = true;
        } else {
            p.triggered = false;
        }
        shifted.push_back({t.ref, p});
        const auto predicted = oracle::classify(p.start_delay_ms, p.end_delay_ms, p.triggered);
        if (predicted == C::LateCycling && t.label.cls != C::LateCycling) ++expect_lc_fp;
        if (t.label.cls == C::EarlyCycling && *t.label.end_delay_ms < -300) deep[t.ref] = true;
    }
    const auto srep = evaluate_predictions(truth, shifted);
    const auto& lc = srep.per_class[index_of(C::LateCycling)];
    v.check(lc.fp == expect_lc_fp && expect_lc_fp > 0 && lc.ppv < 1.0,
            fmt::format("+200 ms: LC false positives {} (oracle {}), LC PPV {:.3f}", lc.fp, expect_lc_fp, lc.ppv));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!deep.count(truth[i].ref)) continue;
        ++ec_deep;
        ec_deep_hit += classify_breath(shifted[i].prediction.start_delay_ms, shifted[i].prediction.end_delay_ms, true) ==
                       C::EarlyCycling;
    }
    v.check(ec_deep > 0 && ec_deep_hit == ec_deep,
            fmt::format("EC breaths with end delay < -300 ms still EC: {}/{}", ec_deep_hit, ec_deep));
    return v;
}

Verdict performance()
{
    Verdict v;
    RecordSpec spec = parse_record_spec(Json{{"archetype", "Healthy"}, {"record_length", 120}, {"asynchrony", "normal"}}, 3);
    spec.solver.max_step = 1e-3;
    const auto in = build_record_inputs(spec, 10.0);
    const auto t0 = Clock::now();
    const auto tr = simulate(in);
    const double dt = seconds_since(t0);
    v.check(dt <= 12.0, fmt::format("120 s Healthy closed loop at 1 ms max step: {:.2f} s ({:.0f}x real time, {} steps)",
                                     dt, 120.0 / dt, tr.stats.steps));
    return v;
}

Verdict morphology()
{
    Verdict v;
    const NoiseParams noise{};
    // late cycling: flow after the effort decays exponentially
    {
        RecordSpec spec = parse_record_spec(Json{{"archetype", "Healthy"}, {"record_length", 40},
                                                 {"asynchrony", {{"LC", 1.0}}}, {"cardiac", {{"amplitude", 0}}}},
                                            4);
        const auto in = build_record_inputs(spec, 10.0);
        const auto tr = simulate(in);
        const auto seg = segment_breaths(tr.events);
        double worst = 1;
        std::size_t fits = 0;
        for (const auto& p : seg.pairs) {
            if (!p.cycle || *p.cycle - p.end < 0.35) continue;
            std::vector<double> x, y;
            for (const auto& s : tr.samples) {
                if (s.t > p.end + 0.05 && s.t < *p.cycle - 0.02 && s.flow > 0) {
                    x.push_back(s.t);
                    y.push_back(std::log(s.flow));
                }
            }
            if (x.size() < 10) continue;
            worst = std::min(worst, oracle::linear_r2(x, y));
            ++fits;
        }
        v.check(fits > 0 && worst > 0.98,
                fmt::format("late cycling: log-linear fit of post-effort flow, worst R^2 {:.5f} over {} breaths", worst, fits));
    }
    // ineffective effort during expiration
    {
        RecordSpec spec = parse_record_spec(Json{{"archetype", "Healthy"}, {"record_length", 40},
                                                 {"asynchrony", {{"IE", 1.0}}}, {"cardiac", {{"amplitude", 0}}}},
                                            5);
        const auto in = build_record_inputs(spec, 10.0);
        const auto tr = simulate(in);
        v.check(times_of(tr.events, EventKind::Trigger).empty(), "IE plan: no trigger events");
        // a triggered breath of the same patient for scale
        RecordSpec normal = spec;
        normal.distribution = normal_only_distribution();
        const auto trn = simulate(build_record_inputs(normal, 10.0));
        double peak_insp = 0;
        for (const auto& s : trn.samples) peak_insp = std::max(peak_insp, s.flow);

        double min_dip = INFINITY, min_defl = INFINITY, max_inflow = 0;
        for (std::size_t b = 1; b < in.breaths.size(); ++b) {
            const double on = in.breaths.onsets[b], end = in.breaths.effort_end(b);
            double p0 = 0, f0 = 0, n0 = 0, pmin = INFINITY, fmax = -INFINITY;
            for (const auto& s : tr.samples) {
                if (s.t >= on - 0.2 && s.t < on) {
                    p0 += s.paw;
                    f0 += s.flow;
                    ++n0;
                }
                if (s.t >= on && s.t <= end) {
                    pmin = std::min(pmin, s.paw);
                    fmax = std::max(fmax, s.flow);
                }
            }
            p0 /= n0;
            f0 /= n0;
            min_dip = std::min(min_dip, p0 - pmin);
            min_defl = std::min(min_defl, fmax - f0);
            max_inflow = std::max(max_inflow, fmax);
        }
        v.check(min_dip > 3 * noise.pressure_std,
                fmt::format("pressure dip {:.3f} cmH2O > 3 x {:.2f}", min_dip, noise.pressure_std));
        v.check(min_defl > 3 * noise.flow_std,
                fmt::format("flow deflection +{:.4f} L/s > 3 x {:.3f}", min_defl, noise.flow_std));
        v.check(max_inflow < 0.25 * peak_insp,
                fmt::format("inflow during the effort {:.4f} L/s stays under a quarter of a triggered peak {:.3f} L/s",
                            max_inflow, peak_insp));
    }
    return v;
}

Verdict noise_spectrum()
{
    Verdict v;
    const NoiseParams p{};
    const double fs_hz = 100.0;
    const std::size_t n = 12000;
    for (auto [name, sd] : {std::pair{"pressure", p.pressure_std}, std::pair{"flow", p.flow_std}}) {
        const auto x = filtered_noise(n, sd, p, fs_hz, mix_seed(7, sd == p.flow_std));
        const auto pw = oracle::periodogram(x);
        double total = 0, below = 0, above = 0;
        for (std::size_t k = 1; k < pw.size(); ++k) {
            const double f = k * fs_hz / n;
            total += pw[k];
            if (f <= 15.0) below += pw[k];
            if (f > 20.0) above += pw[k];
        }
        v.check(below / total >= 0.95 && above / total < 0.01,
                fmt::format("{} noise: {:.2f}% of power <= 15 Hz, {:.4f}% > 20 Hz", name, 100 * below / total,
                            100 * above / total));
    }
    return v;
}

/// `a` holds a parallel run of cfg; a serial run goes to `b`.
Verdict determinism(const RunConfig& cfg, const DatasetSummary& s1, const fs::path& a, const fs::path& b)
{
    Verdict v;
    GenerateOptions serial;
    serial.parallel = false;
    const auto s2 = generate_dataset(cfg, b, serial);
    v.check(s1.ok() && s2.ok(), "both runs succeed");
    std::size_t files = 0, same = 0;
    std::vector<std::string> names_a, names_b;
    for (const auto& e : fs::recursive_directory_iterator(a)) names_a.push_back(fs::relative(e.path(), a).string());
    for (const auto& e : fs::recursive_directory_iterator(b)) names_b.push_back(fs::relative(e.path(), b).string());
    std::sort(names_a.begin(), names_a.end());
    std::sort(names_b.begin(), names_b.end());
    v.check(names_a == names_b, fmt::format("identical trees: {} entries", names_a.size()));
    for (const auto& rel : names_a) {
        if (!fs::is_regular_file(a / rel)) continue;
        ++files;
        same += fs::exists(b / rel) && read_file(a / rel) == read_file(b / rel);
    }
    v.check(files > 0 && same == files, fmt::format("byte-identical files (parallel vs serial run): {}/{}", same, files));
    return v;
}

Verdict pipelines()
{
    Verdict v;
    auto compare = [](std::uint64_t seed, double cardiac) {
        RecordSpec spec = parse_record_spec(Json{{"archetype", "Healthy"}, {"record_length", 120},
                                                 {"asynchrony", "normal"}, {"pipeline", "staged"}},
                                            seed);
        spec.cardiac.amplitude = cardiac;
        const auto in = build_record_inputs(spec, 10.0);
        const auto closed = times_of(simulate(in).events, EventKind::Trigger);
        const auto staged = times_of(run_staged(in).final.events, EventKind::Trigger);
        double worst = closed.size() == staged.size() ? 0 : INFINITY;
        for (std::size_t i = 0; i < closed.size() && i < staged.size(); ++i) {
            worst = std::max(worst, std::abs(closed[i] - staged[i]));
        }
        return std::tuple{closed.size(), staged.size(), worst};
    };
    const double cardiac = CardiacParams{}.amplitude;
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        const auto [nc, ns, worst] = compare(seed, cardiac);
        v.check(worst < 0.020, fmt::format("seed {} (default record, cardiac {} cmH2O): {} vs {} triggers, max difference {:.2f} ms",
                                           seed, cardiac, nc, ns, 1000 * worst));
    }
    // the PEEP-only first stage starts each effort from a sealed, flow-free
    // circuit where the cardiac sinusoid moves the sensor pressure freely
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        const auto [nc, ns, worst] = compare(seed, 0.0);
        v.info(fmt::format("seed {} without the cardiac component: {} vs {} triggers, max difference {:.2f} ms", seed,
                           nc, ns, 1000 * worst));
    }
    return v;
}

} // namespace

int main(int argc, char** argv)
{
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "ventsim_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    const auto t0 = Clock::now();
    const RunConfig defaults_cfg = parse_run_config(nine_record_config(2024, "default"));
    const RunConfig uniform_cfg = parse_run_config(nine_record_config(77, uniform_asynchrony()));
    auto defaults = generate_all(defaults_cfg);
    auto uniform = generate_all(uniform_cfg);
    const auto first_run = generate_dataset(defaults_cfg, work / "run_a");

    struct Row {
        int id;
        const char* title;
        std::function<Verdict()> run;
    };
    const std::vector<Row> rows = {
        {1, "element laws match closed forms", element_laws},
        {2, "equilibrium FRC and ordering", equilibrium},
        {3, "dynamic conservation, 9 x 120 s", [&] { return conservation(defaults); }},
        {4, "30-40 labeled breaths per 120 s record", [&] { return record_shape(defaults); }},
        {5, "tidal-volume calibration", [&] { return calibration(defaults); }},
        {6, "classification oracle and intent recovery", [&] { return classification({&defaults, &uniform}); }},
        {7, "metrics arithmetic and evaluate harness", [&] { return metrics(work / "run_a"); }},
        {8, "performance", performance},
        {9, "morphology", morphology},
        {10, "noise spectrum", noise_spectrum},
        {11, "determinism", [&] { return determinism(defaults_cfg, first_run, work / "run_a", work / "run_b"); }},
        {12, "staged vs closed-loop triggers", pipelines},
    };

    int failed = 0;
    for (const auto& row : rows) {
        Verdict v;
        try {
            v = row.run();
        } catch (const std::exception& e) {
            v.check(false, std::string("threw: ") + e.what());
        }
        failed += !v.pass;
        fmt::print("[{}] {:2}. {}\n", v.pass ? "PASS" : "FAIL", row.id, row.title);
        for (const auto& n : v.notes) fmt::print("         {}\n", n);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria passed ({:.1f} s)\n", rows.size() - failed, rows.size(), seconds_since(t0));
    fs::remove_all(work);
    return failed == 0 ? 0 : 1;
}
