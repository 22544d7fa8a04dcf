#pragma once

#include "ventsim/json.hpp"
#include "ventsim/labeling/labels.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace ventsim {

/// A detector's output for one breath: either a class, or delays that are
/// classified with the same thresholds as the ground truth.
struct Prediction {
    std::optional<AsynchronyClass> cls;
    std::optional<double> start_delay_ms;
    std::optional<double> end_delay_ms;
    bool triggered = true; // only consulted for delay predictions
};

/// One-vs-rest metrics; undefined ratios are NaN.
struct ClassMetrics {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    double tpr = 0, tnr = 0, ppv = 0, balanced_accuracy = 0;
};

ClassMetrics metrics_from_counts(long tp, long fp, long fn, long tn);

struct Quartiles {
    std::size_t n = 0;
    double q1 = 0, median = 0, q3 = 0; // NaN when n == 0
    double iqr() const { return q3 - q1; }
};

/// Linear-interpolation quartiles (type 7).
Quartiles quartiles(std::vector<double> v);

struct DetectorReport {
    // rows: truth, columns: prediction, indexed by index_of(AsynchronyClass)
    std::array<std::array<long, kAsynchronyClassCount>, kAsynchronyClassCount> confusion{};
    std::array<ClassMetrics, kAsynchronyClassCount> per_class{};
    // delay errors (predicted - true) grouped by true class
    std::array<Quartiles, kAsynchronyClassCount> start_error{};
    std::array<Quartiles, kAsynchronyClassCount> end_error{};
    Thresholds thresholds{};

    Json to_json() const;
    /// Metric rows (TPR, TNR, PPV, balanced accuracy) by class columns,
    /// values printed with two decimals.
    std::string metrics_table_csv() const;
    /// Delay-error quartiles per true class.
    std::string delay_error_csv() const;
};

/// Scores index-aligned predictions. Throws AlignmentError on a size mismatch.
DetectorReport score_detector(const std::vector<BreathLabel>& truth,
                              const std::vector<Prediction>& predicted,
                              const Thresholds& thresholds = {});

/// Column order of the metrics table.
inline constexpr std::array<AsynchronyClass, kAsynchronyClassCount> kReportColumns{
    AsynchronyClass::EarlyCycling,  AsynchronyClass::LateCycling,  AsynchronyClass::DelayedInspiration,
    AsynchronyClass::Normal,        AsynchronyClass::DelayedLate,  AsynchronyClass::DelayedEarly,
    AsynchronyClass::IneffectiveEffort,
};

/// Formats a metric with two decimals; "nan" when undefined.
std::string format_metric(double v);

} // namespace ventsim
