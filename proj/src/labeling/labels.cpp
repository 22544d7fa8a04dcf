#include "ventsim/labeling/labels.hpp"

#include "ventsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ventsim {

Json to_json(const Thresholds& t)
{
    return Json{{"di_start_ms", t.di_start_ms}, {"ec_end_ms", t.ec_end_ms}, {"lc_end_ms", t.lc_end_ms}};
}

Segmentation segment_breaths(const std::vector<SimEvent>& events, const SegmentOptions& options)
{
    struct Window {
        std::size_t effort;
        double onset;
        double end = std::numeric_limits<double>::quiet_NaN();
    };
    std::vector<Window> windows;
    struct VentBreath {
        double trigger;
        std::optional<double> cycle;
    };
    std::vector<VentBreath> breaths;

    for (const auto& e : events) {
        switch (e.kind) {
        case EventKind::EffortStart:
            windows.push_back({e.effort.value_or(windows.size()), e.t});
            break;
        case EventKind::EffortEnd:
            if (windows.empty()) throw ValidationError("effort end without a start");
            windows.back().end = e.t;
            break;
        case EventKind::Trigger: breaths.push_back({e.t, std::nullopt}); break;
        case EventKind::Cycle:
            if (!breaths.empty() && !breaths.back().cycle) breaths.back().cycle = e.t;
            break;
        }
    }
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (std::isnan(windows[i].end)) throw ValidationError("effort without an end event");
        if (i > 0 && windows[i].onset < windows[i - 1].end) {
            throw ValidationError("effort windows overlap");
        }
    }

    double horizon = std::numeric_limits<double>::infinity();
    if (options.horizon) {
        horizon = *options.horizon;
    } else if (windows.size() >= 2) {
        std::vector<double> gaps;
        for (std::size_t i = 1; i < windows.size(); ++i) {
            gaps.push_back(windows[i].onset - windows[i - 1].onset);
        }
        std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
        horizon = gaps[gaps.size() / 2];
    }

    Segmentation seg;
    std::vector<std::optional<std::size_t>> paired(windows.size());
    for (std::size_t b = 0; b < breaths.size(); ++b) {
        const double t = breaths[b].trigger;
        std::optional<std::size_t> match;
        // first effort with onset > t
        const auto it = std::upper_bound(windows.begin(), windows.end(), t,
                                         [](double v, const Window& w) { return v < w.onset; });
        const std::size_t next = static_cast<std::size_t>(it - windows.begin());
        if (next > 0 && t <= windows[next - 1].end && !paired[next - 1]) {
            match = next - 1;
        } else if (next < windows.size() && windows[next].onset - t <= options.lead_tolerance &&
                   !paired[next]) {
            match = next;
        } else if (next > 0 && !paired[next - 1] && t - windows[next - 1].onset <= horizon) {
            match = next - 1;
        }
        if (!match) {
            seg.auto_triggers.push_back(t);
            continue;
        }
        paired[*match] = b;
    }

    for (std::size_t i = 0; i < windows.size(); ++i) {
        BreathPair p{windows[i].effort, windows[i].onset, windows[i].end, std::nullopt, std::nullopt};
        if (paired[i]) {
            const auto& vb = breaths[*paired[i]];
            if (!vb.cycle) {
                seg.truncated.push_back(windows[i].effort);
                continue;
            }
            p.trigger = vb.trigger;
            p.cycle = vb.cycle;
        }
        seg.pairs.push_back(p);
    }
    return seg;
}

std::optional<Delays> compute_delays(const BreathPair& pair)
{
    if (!pair.trigger || !pair.cycle) return std::nullopt;
    return Delays{(*pair.trigger - pair.onset) * 1000.0, (*pair.cycle - pair.end) * 1000.0};
}

AsynchronyClass classify_breath(std::optional<double> start_delay_ms,
                                std::optional<double> end_delay_ms, bool triggered,
                                const Thresholds& t)
{
    if (!triggered) return AsynchronyClass::IneffectiveEffort;
    if (!start_delay_ms || !end_delay_ms) {
        throw ValidationError("a triggered breath needs both delays");
    }
    // Normal requires strict inequalities, so the boundary values themselves
    // fall into the asynchronous classes.
    const bool delayed = !(*start_delay_ms < t.di_start_ms);
    const bool early = !(*end_delay_ms > t.ec_end_ms);
    const bool late = !(*end_delay_ms < t.lc_end_ms);
    if (delayed && late) return AsynchronyClass::DelayedLate;
    if (delayed && early) return AsynchronyClass::DelayedEarly;
    if (delayed) return AsynchronyClass::DelayedInspiration;
    if (early) return AsynchronyClass::EarlyCycling;
    if (late) return AsynchronyClass::LateCycling;
    return AsynchronyClass::Normal;
}

std::vector<BreathLabel> label_breaths(const Segmentation& seg,
                                       const std::vector<AsynchronyClass>* intents,
                                       const Thresholds& thresholds)
{
    std::vector<BreathLabel> out;
    out.reserve(seg.pairs.size());
    for (const auto& p : seg.pairs) {
        BreathLabel l;
        l.breath_idx = p.effort;
        l.t_insp_start = p.onset;
        l.t_insp_end = p.end;
        l.t_trigger = p.trigger;
        l.t_cycle = p.cycle;
        if (const auto d = compute_delays(p)) {
            l.start_delay_ms = d->start_ms;
            l.end_delay_ms = d->end_ms;
        }
        l.cls = classify_breath(l.start_delay_ms, l.end_delay_ms, p.triggered(), thresholds);
        if (intents && p.effort < intents->size()) l.intent = (*intents)[p.effort];
        out.push_back(l);
    }
    return out;
}

std::vector<AsynchronyClass> classify_batch_serial(const std::vector<DelayQuery>& q,
                                                   const Thresholds& t)
{
    std::vector<AsynchronyClass> out(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        out[i] = classify_breath(q[i].start_ms, q[i].end_ms, q[i].triggered, t);
    }
    return out;
}

std::vector<AsynchronyClass> classify_batch(const std::vector<DelayQuery>& q, const Thresholds& t)
{
    std::vector<AsynchronyClass> out(q.size());
    const long n = static_cast<long>(q.size());
    bool failed = false;
#pragma omp parallel for schedule(static) reduction(|| : failed)
    for (long i = 0; i < n; ++i) {
        const auto& x = q[static_cast<std::size_t>(i)];
        if (x.triggered && (!x.start_ms || !x.end_ms)) {
            failed = true;
            continue;
        }
        out[static_cast<std::size_t>(i)] = classify_breath(x.start_ms, x.end_ms, x.triggered, t);
    }
    if (failed) throw ValidationError("a triggered breath needs both delays");
    return out;
}

} // namespace ventsim
