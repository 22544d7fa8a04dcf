#pragma once

#include "ventsim/labeling/labels.hpp"
#include "ventsim/solver/simulation.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ventsim {

/// Stacked pressure / flow / volume panels as SVG for the labeled breaths with
/// breath_idx in [first, last], with effort start/end, trigger and cycle
/// markers. Throws ValidationError when no labeled breath is in the range.
std::string plot_svg(const std::vector<Sample>& samples, const std::vector<BreathLabel>& labels,
                     std::size_t first, std::size_t last, const std::string& title);

/// Reads waveform.csv and labels.csv from a record directory and writes the SVG.
void plot_record(const std::filesystem::path& record_dir, std::size_t first, std::size_t last,
                 const std::filesystem::path& out_svg);

} // namespace ventsim
