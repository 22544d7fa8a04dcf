#pragma once

#include "ventsim/datagen/calibrate.hpp"
#include "ventsim/datagen/config.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ventsim {

inline constexpr const char* kGeneratorName = "ventsim";
inline constexpr const char* kGeneratorVersion = "0.1.0";

struct LabeledRecord {
    RecordSpec spec;
    std::optional<CalibrationResult> calibration;
    double p_insp = 0;
    SimulationInputs inputs;
    Trajectory trajectory;   // samples carry the injected noise on paw and flow
    std::vector<Sample> clean_samples;
    Segmentation segmentation;
    std::vector<BreathLabel> labels;
    ConservationReport conservation;

    std::array<long, kAsynchronyClassCount> class_counts() const;
    /// `config` is echoed verbatim.
    Json manifest(const Json& config = Json::object()) const;
};

/// Simulates, labels and adds noise to one record. With calibrate set, the
/// calibration result must be given.
LabeledRecord generate_record(const RecordSpec& spec, const std::optional<CalibrationResult>& cal);

/// Record directory contents: manifest.json, waveform.csv, labels.csv. The
/// directory is assembled under a temporary name and renamed into place.
void write_record(const LabeledRecord& rec, const std::filesystem::path& dir, const Json& config);

enum class RecordStatus { Ok, ConfigFailure, SolverFailure };

struct RecordOutcome {
    std::string id;
    ArchetypeId archetype = ArchetypeId::Healthy;
    RecordStatus status = RecordStatus::Ok;
    std::string error;
    double p_insp = 0;
    std::size_t breaths = 0;
    std::array<long, kAsynchronyClassCount> class_counts{};
};

struct GenerateOptions {
    bool parallel = true;
    std::function<void(const std::string&)> log; // progress lines, may be empty
};

struct DatasetSummary {
    std::vector<RecordOutcome> records;
    Json manifest;

    bool ok() const;
    /// 0 when every record succeeded, 2 when a record had a configuration
    /// problem, 3 for solver or calibration failures.
    int exit_code() const;
};

/// Generates every record of the config into `out_dir` and writes the dataset
/// manifest last. Records run in parallel (OpenMP) unless options.parallel is
/// false; the output bytes do not depend on it.
DatasetSummary generate_dataset(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                const GenerateOptions& options = {});

/// Output directory: explicit value, else the config's, else $VENTSIM_OUTPUT_DIR,
/// else "ventsim_out".
std::filesystem::path resolve_output_dir(const std::optional<std::string>& explicit_dir,
                                         const RunConfig* cfg = nullptr);

Json counts_json(const std::array<long, kAsynchronyClassCount>& counts);

} // namespace ventsim
