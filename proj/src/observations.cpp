#include "modesleuth/observations.hpp"

#include "modesleuth/errors.hpp"

namespace modesleuth {

std::vector<ObservationRecord> expand_records(std::span<const ChannelRecord> records, const Matrix& observation,
                                              const Vector& offsets, const Vector& noise_var) {
  std::vector<ObservationRecord> out;
  out.reserve(records.size());
  const Eigen::Index channels = observation.rows();
  for (const auto& rec : records) {
    const auto d = static_cast<Eigen::Index>(rec.channels.size());
    if (d == 0 || rec.values.size() != d) throw Error(Errc::invalid_scheme, "record channel/value counts differ");
    ObservationRecord r;
    r.time = rec.time;
    r.selector.resize(d, observation.cols());
    r.offset.resize(d);
    r.noise = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const int c = rec.channels[static_cast<std::size_t>(i)];
      if (c < 0 || c >= channels) throw Error(Errc::invalid_scheme, "channel index out of range");
      r.selector.row(i) = observation.row(c);
      r.offset(i) = offsets(c);
      r.noise(i, i) = noise_var(c);
    }
    r.value = rec.values;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ObservationRecord> merge_simultaneous(std::span<const ObservationRecord> records) {
  std::vector<ObservationRecord> out;
  for (const auto& rec : records) {
    if (!out.empty() && rec.time < out.back().time) throw Error(Errc::invalid_times, "record times decrease");
    if (out.empty() || rec.time != out.back().time) {
      out.push_back(rec);
      continue;
    }
    ObservationRecord& last = out.back();
    const Eigen::Index d0 = last.selector.rows();
    const Eigen::Index d1 = rec.selector.rows();
    if (rec.selector.cols() != last.selector.cols()) throw Error(Errc::invalid_scheme, "state dimensions differ");
    Matrix z(d0 + d1, last.selector.cols());
    z << last.selector, rec.selector;
    Vector m(d0 + d1), y(d0 + d1);
    m << last.offset, rec.offset;
    y << last.value, rec.value;
    Matrix h = Matrix::Zero(d0 + d1, d0 + d1);
    h.topLeftCorner(d0, d0) = last.noise;
    h.bottomRightCorner(d1, d1) = rec.noise;
    last.selector = std::move(z);
    last.offset = std::move(m);
    last.value = std::move(y);
    last.noise = std::move(h);
  }
  return out;
}

std::vector<ChannelRecord> merge_simultaneous(std::span<const ChannelRecord> records) {
  std::vector<ChannelRecord> out;
  for (const auto& rec : records) {
    if (!out.empty() && rec.time < out.back().time) throw Error(Errc::invalid_times, "record times decrease");
    if (out.empty() || rec.time != out.back().time) {
      out.push_back(rec);
      continue;
    }
    ChannelRecord& last = out.back();
    Vector v(last.values.size() + rec.values.size());
    v << last.values, rec.values;
    last.values = std::move(v);
    last.channels.insert(last.channels.end(), rec.channels.begin(), rec.channels.end());
  }
  return out;
}

Eigen::Index total_dimension(std::span<const ChannelRecord> records) {
  Eigen::Index d = 0;
  for (const auto& r : records) d += static_cast<Eigen::Index>(r.channels.size());
  return d;
}

}  // namespace modesleuth
