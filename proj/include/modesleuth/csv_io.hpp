#pragma once

// Channel CSV files: header `t,<ch1>,<ch2>,...`, one row per time, empty
// fields for channels not observed at that time, `\n` line endings. Numbers
// are written in shortest round-trip form so reruns are byte-identical.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modesleuth/observations.hpp"

namespace modesleuth {

struct ChannelTable {
  std::vector<std::string> channels;
  std::vector<ChannelRecord> records;  ///< rows with no observed channel are dropped
};

/// Shortest decimal string that reads back to the same double.
std::string format_double(double value);

void write_csv(std::ostream& out, const ChannelTable& table);
void write_csv_file(const std::filesystem::path& path, const ChannelTable& table);

/// Header row to channel names. ParseError unless the first field is `t` and
/// channel names are non-empty and distinct.
std::vector<std::string> parse_csv_header(std::string_view line);

/// One data row against a header of `channels`. Returns nullopt for a row
/// with no observed channel; throws ParseError for a wrong field count or a
/// field that is not a finite number.
std::optional<ChannelRecord> parse_csv_row(std::string_view line, std::size_t channels);

/// Whole file. ParseError carries the line number; InvalidTimes when times
/// decrease.
ChannelTable read_csv(std::istream& in);
ChannelTable read_csv_file(const std::filesystem::path& path);

/// Sidecar written next to a CSV: `<csv>.meta.json`.
std::filesystem::path metadata_path(const std::filesystem::path& csv);

/// Per-channel series on the row times where that channel is observed.
struct ChannelSeries {
  std::vector<double> times;
  std::vector<double> values;
};
ChannelSeries channel_series(const ChannelTable& table, std::size_t channel);

}  // namespace modesleuth
