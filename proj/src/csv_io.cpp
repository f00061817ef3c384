#include "modesleuth/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "modesleuth/errors.hpp"

namespace modesleuth {

namespace {

std::vector<std::string_view> split(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(Errc::parse_error, "not a finite number: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double value) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

void write_csv(std::ostream& out, const ChannelTable& table) {
  out << 't';
  for (const auto& c : table.channels) out << ',' << c;
  out << '\n';
  std::vector<std::string> fields(table.channels.size());
  for (const auto& r : table.records) {
    for (auto& f : fields) f.clear();
    for (std::size_t j = 0; j < r.channels.size(); ++j) {
      const auto c = static_cast<std::size_t>(r.channels[j]);
      if (c >= fields.size()) throw Error(Errc::invalid_input, "record channel out of range");
      fields[c] = format_double(r.values(static_cast<Eigen::Index>(j)));
    }
    out << format_double(r.time);
    for (const auto& f : fields) out << ',' << f;
    out << '\n';
  }
}

void write_csv_file(const std::filesystem::path& path, const ChannelTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::invalid_input, "cannot write " + path.string());
  write_csv(out, table);
  if (!out) throw Error(Errc::invalid_input, "write failed for " + path.string());
}

std::vector<std::string> parse_csv_header(std::string_view line) {
  const auto fields = split(line);
  if (trim(fields[0]) != "t") throw Error(Errc::parse_error, "CSV header must start with 't'");
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    std::string name(trim(fields[i]));
    if (name.empty()) throw Error(Errc::parse_error, "empty channel name in CSV header");
    if (!seen.insert(name).second) throw Error(Errc::parse_error, "duplicate channel '" + name + "'");
    names.push_back(std::move(name));
  }
  if (names.empty()) throw Error(Errc::parse_error, "CSV header has no channels");
  return names;
}

std::optional<ChannelRecord> parse_csv_row(std::string_view line, std::size_t channels) {
  const auto fields = split(line);
  if (fields.size() != channels + 1) {
    throw Error(Errc::parse_error, "expected " + std::to_string(channels + 1) + " fields, got " +
                                       std::to_string(fields.size()));
  }
  ChannelRecord r;
  r.time = parse_number(fields[0]);
  std::vector<double> vals;
  for (std::size_t c = 0; c < channels; ++c) {
    if (trim(fields[c + 1]).empty()) continue;
    r.channels.push_back(static_cast<int>(c));
    vals.push_back(parse_number(fields[c + 1]));
  }
  if (vals.empty()) return std::nullopt;
  r.values = Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return r;
}

ChannelTable read_csv(std::istream& in) {
  ChannelTable table;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line) == "\r") continue;
    try {
      if (!header) {
        table.channels = parse_csv_header(line);
        header = true;
        continue;
      }
      if (auto r = parse_csv_row(line, table.channels.size())) {
        if (!table.records.empty() && r->time < table.records.back().time) {
          throw Error(Errc::invalid_times, "times decrease");
        }
        table.records.push_back(std::move(*r));
      }
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header) throw Error(Errc::parse_error, "CSV is empty");
  return table;
}

ChannelTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::invalid_input, "cannot read " + path.string());
  return read_csv(in);
}

std::filesystem::path metadata_path(const std::filesystem::path& csv) {
  return std::filesystem::path(csv.string() + ".meta.json");
}

ChannelSeries channel_series(const ChannelTable& table, std::size_t channel) {
  if (channel >= table.channels.size()) throw Error(Errc::invalid_input, "channel out of range");
  ChannelSeries s;
  for (const auto& r : table.records) {
    for (std::size_t j = 0; j < r.channels.size(); ++j) {
      if (static_cast<std::size_t>(r.channels[j]) == channel) {
        s.times.push_back(r.time);
        s.values.push_back(r.values(static_cast<Eigen::Index>(j)));
      }
    }
  }
  return s;
}

}  // namespace modesleuth
