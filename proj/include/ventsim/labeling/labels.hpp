#pragma once

#include "ventsim/json.hpp"
#include "ventsim/solver/simulation.hpp"
#include "ventsim/types.hpp"

#include <optional>
#include <vector>

namespace ventsim {

/// Delay thresholds [ms] separating the asynchrony classes. A breath is
/// normal only when every delay lies strictly inside its band.
struct Thresholds {
    double di_start_ms = 250.0; // DI iff start delay > this
    double ec_end_ms = -100.0;  // EC iff end delay < this
    double lc_end_ms = 300.0;   // LC iff end delay > this
};

Json to_json(const Thresholds& t);

/// One effort and the ventilator breath paired to it (if any).
struct BreathPair {
    std::size_t effort = 0;
    double onset = 0;
    double end = 0;
    std::optional<double> trigger;
    std::optional<double> cycle;

    bool triggered() const { return trigger.has_value(); }
};

struct SegmentOptions {
    double lead_tolerance = 0.3;         // s a trigger may precede its effort
    std::optional<double> horizon;       // s; default: median effort spacing
};

struct Segmentation {
    std::vector<BreathPair> pairs;         // one per labelable effort, in effort order
    std::vector<double> auto_triggers;     // triggers with no effort within the horizon
    std::vector<std::size_t> truncated;    // efforts whose breath did not finish in the record
};

/// Pairs each ventilator breath (trigger and the next cycle) with an effort:
/// the effort whose window contains the trigger, else an effort starting
/// within the lead tolerance after it, else the most recent earlier effort
/// whose onset lies within the horizon. Efforts without a trigger stay
/// unpaired (ineffective-effort candidates).
Segmentation segment_breaths(const std::vector<SimEvent>& events, const SegmentOptions& options = {});

struct Delays {
    double start_ms;
    double end_ms;
};

/// (trigger - effort onset, cycle - effort end) in ms; nothing for an
/// untriggered breath.
std::optional<Delays> compute_delays(const BreathPair& pair);

AsynchronyClass classify_breath(std::optional<double> start_delay_ms,
                                std::optional<double> end_delay_ms, bool triggered,
                                const Thresholds& thresholds = {});

struct BreathLabel {
    std::size_t breath_idx = 0;
    double t_insp_start = 0;
    double t_insp_end = 0;
    std::optional<double> t_trigger;
    std::optional<double> t_cycle;
    std::optional<double> start_delay_ms;
    std::optional<double> end_delay_ms;
    AsynchronyClass cls = AsynchronyClass::Normal;
    std::optional<AsynchronyClass> intent;
};

/// Labels every pair. `intents`, when given, is indexed by effort.
std::vector<BreathLabel> label_breaths(const Segmentation& seg,
                                       const std::vector<AsynchronyClass>* intents = nullptr,
                                       const Thresholds& thresholds = {});

/// Serial reference and OpenMP-parallel classification of many delay pairs.
/// Results are identical.
struct DelayQuery {
    std::optional<double> start_ms;
    std::optional<double> end_ms;
    bool triggered = true;
};

std::vector<AsynchronyClass> classify_batch_serial(const std::vector<DelayQuery>& q,
                                                   const Thresholds& t = {});
std::vector<AsynchronyClass> classify_batch(const std::vector<DelayQuery>& q,
                                            const Thresholds& t = {});

} // namespace ventsim
