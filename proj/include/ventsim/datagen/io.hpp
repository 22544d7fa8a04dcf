#pragma once

#include "ventsim/labeling/labels.hpp"
#include "ventsim/solver/simulation.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ventsim {

/// printf "%.6g".
std::string format_number(double v);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Comma-separated table with a header row. Fields never contain commas.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Throws ValidationError when the column is missing.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;
};

Table parse_table(std::string_view text);
Table read_table(const std::filesystem::path& path);

/// t, paw, flow, vol, pmus, vent_phase (0 expiration, 1 inspiration).
std::string waveform_csv(const std::vector<Sample>& samples);
std::vector<Sample> parse_waveform(const Table& t);

/// One row per label; absent values are empty fields.
std::string labels_csv(const std::vector<BreathLabel>& labels);
std::vector<BreathLabel> parse_labels(const Table& t);

} // namespace ventsim
