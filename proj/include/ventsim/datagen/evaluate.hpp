#pragma once

#include "ventsim/datagen/io.hpp"
#include "ventsim/labeling/metrics.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ventsim {

struct BreathRef {
    std::string record;
    std::size_t breath_idx = 0;
    auto operator<=>(const BreathRef&) const = default;
};

struct TruthBreath {
    BreathRef ref;
    BreathLabel label;
};

struct PredictedBreath {
    BreathRef ref;
    Prediction prediction;
};

/// Labels of every successfully generated record listed in the dataset manifest.
std::vector<TruthBreath> load_truth(const std::filesystem::path& dataset_dir);

/// Header must contain record_id and breath_idx, plus either a class column
/// or start_delay_ms and end_delay_ms (empty delays mean no trigger).
std::vector<PredictedBreath> parse_predictions(const Table& t);

/// Aligns predictions with the truth by (record, breath). Unknown, duplicated
/// or missing breaths raise AlignmentError listing the offenders.
DetectorReport evaluate_predictions(const std::vector<TruthBreath>& truth,
                                    const std::vector<PredictedBreath>& predicted,
                                    const Thresholds& thresholds = {});

/// report.json, metrics.csv and delay_errors.csv.
void write_report(const DetectorReport& report, const std::filesystem::path& out_dir);

/// Predictions file reproducing the truth exactly, in the delay form or the
/// class form.
std::string predictions_csv(const std::vector<TruthBreath>& truth, bool as_delays);

} // namespace ventsim
