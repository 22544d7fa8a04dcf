#pragma once

#include "ventsim/breath/effort.hpp"
#include "ventsim/json.hpp"
#include "ventsim/model/archetype.hpp"
#include "ventsim/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace ventsim {

/// Scheduled muscle efforts for one record.
struct BreathPlan {
    std::vector<double> onsets;        // s, strictly increasing
    std::vector<EffortShape> shapes;   // one per onset
    double record_length = 0;          // s
    double respiratory_rate = 0;       // breaths/min
    double jitter = 0;                 // fractional std of the inter-breath interval

    std::size_t size() const { return onsets.size(); }
    double effort_end(std::size_t i) const { return onsets[i] + shapes[i].duration(); }
    double period() const { return 60.0 / respiratory_rate; }
};

struct BreathPlanOptions {
    EffortShape shape{};
    double amplitude_jitter = 0.0; // fractional std of the per-breath amplitude
};

/// Onsets start half a period into the record and follow intervals of
/// period * (1 + jitter * z), z a standard normal truncated at +-3.
/// Efforts that would not finish inside the record are dropped.
/// Throws ConfigError when the worst-case interval cannot hold an effort.
BreathPlan build_breath_plan(double rate, double record_length, double jitter, std::uint64_t seed,
                             const BreathPlanOptions& options = {});

/// Per-breath ventilator timing override realizing an asynchrony intent.
struct BreathOverride {
    AsynchronyClass intent = AsynchronyClass::Normal;
    double trigger_delay = 0.0;           // s added after trigger detection
    std::optional<double> cycle_offset;   // s relative to effort end
    bool suppress_trigger = false;

    bool is_noop() const { return trigger_delay == 0.0 && !cycle_offset && !suppress_trigger; }
};

struct AsynchronyPlan {
    std::vector<BreathOverride> breaths;
};

/// Class -> probability, indexed by index_of(AsynchronyClass).
using AsynchronyDistribution = std::array<double, kAsynchronyClassCount>;

/// Ranges the override magnitudes are drawn from. The bounds keep every
/// realized delay clear of the classification thresholds.
struct OverrideRanges {
    double di_delay_min = 0.30, di_delay_max = 0.45;
    // a delayed breath is still cycled inside the normal end-delay band
    double di_offset_min = 0.05, di_offset_max = 0.20;
    double ec_offset_min = -0.40, ec_offset_max = -0.20;
    double lc_offset_min = 0.45, lc_offset_max = 0.85;
    // compound classes use tighter ranges so the shortened inspiration still fits
    double compound_delay_min = 0.27, compound_delay_max = 0.32;
    double compound_ec_offset_min = -0.30, compound_ec_offset_max = -0.18;
};

/// Archetype defaults: COPD raises late cycling, fibrosis raises early cycling.
AsynchronyDistribution default_distribution(ArchetypeId id);

AsynchronyDistribution normal_only_distribution();

/// Parses {"Normal": 0.7, "EC": 0.1, ...}. Unknown keys or a total that is not
/// 1 within 1e-9 raise ConfigError. Missing keys are zero.
AsynchronyDistribution parse_distribution(const Json& j);
Json to_json(const AsynchronyDistribution& d);

/// Draws one intent per breath from the distribution (the archetype default
/// when none is given) and attaches the matching overrides.
AsynchronyPlan build_asynchrony_plan(const BreathPlan& plan, ArchetypeId archetype,
                                     const std::optional<AsynchronyDistribution>& distribution,
                                     std::uint64_t seed, const OverrideRanges& ranges = {});

/// Override for a single intent, drawing magnitudes from rng-free midpoints.
/// Used by the live service for injected asynchronies.
BreathOverride override_for(AsynchronyClass intent, const OverrideRanges& ranges = {});

} // namespace ventsim
