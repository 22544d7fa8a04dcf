#pragma once

#include "ventsim/breath/plans.hpp"
#include "ventsim/datagen/noise.hpp"
#include "ventsim/json.hpp"
#include "ventsim/labeling/labels.hpp"
#include "ventsim/solver/simulation.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ventsim {

enum class Pipeline { ClosedLoop, Staged };

std::string_view to_string(Pipeline p);

/// Effort shape and cycle fraction that give synchronous breaths by default
/// for an archetype; a ventilator's expiratory trigger is usually set per
/// disease in the same way.
struct PatientProfile {
    EffortShape effort;
    double cycle_fraction;
};

PatientProfile default_profile(ArchetypeId id);

/// Applies the keys of an effort object; ConfigError names `path` on failure.
EffortShape merge_effort(EffortShape s, const Json& j, const std::string& path = "effort");
Json effort_json(const EffortShape& s);

struct BreathingParams {
    std::optional<double> rate;        // breaths/min; drawn from the range when absent
    double rate_min = 15.0;
    double rate_max = 20.0;
    double jitter = 0.05;              // fractional std of the inter-breath interval
    double amplitude_jitter = 0.05;
    EffortShape effort{};
};

/// Fully resolved parameters of one record.
struct RecordSpec {
    std::size_t index = 0;
    std::string id;
    std::uint64_t seed = 0;
    ArchetypeId archetype = ArchetypeId::Healthy;
    Pipeline pipeline = Pipeline::ClosedLoop;
    double record_length = 120.0;
    VentilatorSettings settings{};
    bool calibrate = true;
    double target_tidal_volume = 0.5;
    double calibration_tolerance = 0.05;
    TubingParams tubing{};
    SolverConfig solver{};
    BreathingParams breathing{};
    std::optional<AsynchronyDistribution> distribution; // archetype default when absent
    NoiseParams noise{};
    CardiacParams cardiac{};
    Thresholds thresholds{};

    /// Respiratory rate actually used (fixed, or drawn from the seed).
    double respiratory_rate() const;
    Json to_json() const;
};

struct RunConfig {
    std::uint64_t master_seed = 0;
    std::optional<std::string> output_dir;
    std::vector<RecordSpec> records;
    Json source; // the parsed document, echoed into manifests
};

/// Record entries are merged over "defaults"; an entry with "count" expands
/// into that many records with consecutive indices. Throws ConfigError naming
/// the offending key path.
RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Resolves one record-level object (the same keys a records[] entry takes)
/// without a surrounding run config. Used by the single-record verbs.
RecordSpec parse_record_spec(const Json& j, std::uint64_t seed, std::size_t index = 0);

std::string record_id(std::size_t index);

/// Per-record random streams.
enum class SeedStream : std::uint64_t { Breaths = 1, Asynchrony = 2, Noise = 3, Cardiac = 4, Rate = 5 };
std::uint64_t stream_seed(const RecordSpec& r, SeedStream s);

/// Simulation inputs for a record at a given inspiratory pressure.
SimulationInputs build_record_inputs(const RecordSpec& r, double p_insp);

} // namespace ventsim
