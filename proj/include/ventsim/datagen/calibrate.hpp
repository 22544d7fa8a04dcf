#pragma once

#include "ventsim/datagen/config.hpp"

#include <string>

namespace ventsim {

struct CalibrationRequest {
    ArchetypeId archetype = ArchetypeId::Healthy;
    VentilatorSettings settings{}; // p_insp is the starting point
    TubingParams tubing{};
    SolverConfig solver{};
    EffortShape effort{};
    double target_tidal_volume = 0.5; // L
    double tolerance = 0.05;          // fraction of the target

    static CalibrationRequest from_record(const RecordSpec& r);
    /// Identifies requests with identical outcomes (cache key).
    std::string key() const;
};

struct CalibrationResult {
    double p_insp = 0;
    double median_tidal_volume = 0;
    int iterations = 0;  // bisection steps after the initial evaluation
    int evaluations = 0; // calibration runs performed
    double vt_min = 0;   // range of median VT seen over all evaluations
    double vt_max = 0;

    Json to_json() const;
};

/// Calibration scenario: 5 synchronous breaths at 15/min with no jitter, no
/// cardiac component and no asynchronies. Returns the median tidal volume.
double calibration_tidal_volume(const CalibrationRequest& req, double p_insp);

inline constexpr double kCalibrationSpan = 40.0; // cmH2O above PEEP

/// Bisection for P_insp in (PEEP, PEEP + 40] until the median tidal volume is
/// within tolerance of the target. The starting pressure is tried first.
/// Throws CalibrationError with the achieved VT range when the bracket is
/// exhausted or a run fails.
CalibrationResult calibrate_pinsp(const CalibrationRequest& req);

} // namespace ventsim
