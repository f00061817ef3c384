#pragma once

#include <span>
#include <vector>

#include "modesleuth/matfun.hpp"

namespace modesleuth {

/// One observation time: y = Z x(t) + m + ξ with ξ ~ N(0, H).
struct ObservationSlot {
  double time = 0.0;
  Matrix selector;  ///< Z, d × n
  Vector offset;    ///< m, length d
  Matrix noise;     ///< H, d × d symmetric psd
};

using ObservationScheme = std::vector<ObservationSlot>;

struct ObservationRecord : ObservationSlot {
  Vector value;  ///< y, length d
};

/// A partial observation of named channels of a model with a fixed
/// observation map; the compact form used by fitting and streaming.
struct ChannelRecord {
  double time = 0.0;
  std::vector<int> channels;
  Vector values;
};

/// Expands channel records into explicit (Z, m, H, y) records for a model with
/// observation matrix `observation` (channels × n), per-channel offsets and
/// per-channel measurement variances.
std::vector<ObservationRecord> expand_records(std::span<const ChannelRecord> records, const Matrix& observation,
                                              const Vector& offsets, const Vector& noise_var);

/// Stacks records that share a timestamp into one record (in input order).
/// Throws InvalidTimes when times decrease.
std::vector<ObservationRecord> merge_simultaneous(std::span<const ObservationRecord> records);
std::vector<ChannelRecord> merge_simultaneous(std::span<const ChannelRecord> records);

/// Total observation dimension Σ dᵢ.
Eigen::Index total_dimension(std::span<const ChannelRecord> records);

}  // namespace modesleuth
