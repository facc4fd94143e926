#pragma once

// Multi-granularity relative-position re-encoding for temporal RoPE.
//
// Frame distances |d| <= w1 keep their value, w1 < |d| <= w2 are quantized in
// groups of g1, and |d| > w2 in groups of g2, with offsets chosen so the mapped
// value is continuous across zone boundaries. The index-array form assigns each
// zone its own query/key position arrays so that attention only needs modified
// position indices; it deviates from the closed form by at most one unit.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tierattn/attention.hpp"
#include "tierattn/error.hpp"
#include "tierattn/matrix.hpp"

namespace tierattn {

struct VrprConfig {
  std::int64_t w1 = 0;
  std::int64_t w2 = 0;
  std::int64_t g1 = 1;
  std::int64_t g2 = 1;
  std::int64_t pretrained_len = 0;

  /// Empty when 0 < w1 < w2, g1 >= 1, g2 >= g1, pretrained_len > w2.
  std::optional<std::string> invariant_violation() const {
    if (!(w1 > 0 && w1 < w2)) return "require 0 < w1 < w2";
    if (g1 < 1) return "require g1 >= 1";
    if (g2 < g1) return "require g2 >= g1";
    if (pretrained_len <= w2) return "require pretrained_len > w2";
    return std::nullopt;
  }

  void check() const {
    if (auto why = invariant_violation()) throw ConfigError("VrprConfig: " + *why);
  }

  /// Constant added in the medium zone: w1 - floor(w1/g1).
  std::int64_t medium_offset() const { return w1 - w1 / g1; }
  /// Constant added in the coarse zone: w2 - floor(w2/g2) - floor((w2-w1)/g1).
  std::int64_t coarse_offset() const { return w2 - w2 / g2 - (w2 - w1) / g1; }

  friend bool operator==(const VrprConfig&, const VrprConfig&) = default;
};

enum class Zone { Fine = 0, MediumPos, MediumNeg, CoarsePos, CoarseNeg };

inline constexpr std::array<Zone, 5> kAllZones{Zone::Fine, Zone::MediumPos, Zone::MediumNeg,
                                               Zone::CoarsePos, Zone::CoarseNeg};

inline std::string_view zone_name(Zone z) {
  switch (z) {
    case Zone::Fine: return "fine";
    case Zone::MediumPos: return "medium_pos";
    case Zone::MediumNeg: return "medium_neg";
    case Zone::CoarsePos: return "coarse_pos";
    case Zone::CoarseNeg: return "coarse_neg";
  }
  return "?";
}

/// Zone of a raw frame distance d = i - j.
inline Zone zone_of(std::int64_t d, const VrprConfig& cfg) {
  const std::int64_t a = std::abs(d);
  if (a <= cfg.w1) return Zone::Fine;
  if (a <= cfg.w2) return d > 0 ? Zone::MediumPos : Zone::MediumNeg;
  return d > 0 ? Zone::CoarsePos : Zone::CoarseNeg;
}

/// Closed-form remap. Quantization acts on |d| and the sign is reapplied, so
/// remap_relative(-d) == -remap_relative(d).
inline std::int64_t remap_relative(std::int64_t d, const VrprConfig& cfg) {
  const std::int64_t a = std::abs(d);
  const std::int64_t sign = d < 0 ? -1 : 1;
  if (a <= cfg.w1) return d;
  if (a <= cfg.w2) return sign * (a / cfg.g1 + cfg.medium_offset());
  return sign * (a / cfg.g2 + cfg.coarse_offset());
}

inline IntMatrix remap_matrix(std::size_t target_frames, const VrprConfig& cfg) {
  IntMatrix m(target_frames, target_frames);
  for (std::size_t i = 0; i < target_frames; ++i) {
    for (std::size_t j = 0; j < target_frames; ++j) {
      m(i, j) = remap_relative(static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j), cfg);
    }
  }
  return m;
}

struct ZoneIndexArrays {
  Zone zone = Zone::Fine;
  PositionIndex p_q;
  PositionIndex p_k;

  friend bool operator==(const ZoneIndexArrays&, const ZoneIndexArrays&) = default;
};

/// Per-zone query/key position arrays, in kAllZones order.
inline std::vector<ZoneIndexArrays> zone_index_arrays(std::size_t target_frames,
                                                      const VrprConfig& cfg) {
  std::vector<ZoneIndexArrays> out;
  out.reserve(kAllZones.size());
  const std::int64_t off1 = cfg.medium_offset();
  const std::int64_t off2 = cfg.coarse_offset();
  for (Zone z : kAllZones) {
    ZoneIndexArrays a{z, PositionIndex(target_frames), PositionIndex(target_frames)};
    for (std::size_t f = 0; f < target_frames; ++f) {
      const auto i = static_cast<std::int64_t>(f);
      switch (z) {
        case Zone::Fine:
          a.p_q[f] = i;
          a.p_k[f] = i;
          break;
        case Zone::MediumPos:
          a.p_q[f] = i / cfg.g1 + off1;
          a.p_k[f] = i / cfg.g1;
          break;
        case Zone::MediumNeg:
          a.p_q[f] = i / cfg.g1;
          a.p_k[f] = i / cfg.g1 + off1;
          break;
        case Zone::CoarsePos:
          a.p_q[f] = i / cfg.g2 + off2;
          a.p_k[f] = i / cfg.g2;
          break;
        case Zone::CoarseNeg:
          a.p_q[f] = i / cfg.g2;
          a.p_k[f] = i / cfg.g2 + off2;
          break;
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

/// P_q[i] - P_k[j] taken from the zone selected by the raw distance i - j.
inline IntMatrix implemented_relative_matrix(std::size_t target_frames, const VrprConfig& cfg) {
  const auto zones = zone_index_arrays(target_frames, cfg);
  IntMatrix m(target_frames, target_frames);
  for (std::size_t i = 0; i < target_frames; ++i) {
    for (std::size_t j = 0; j < target_frames; ++j) {
      const Zone z = zone_of(static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j), cfg);
      const auto& a = zones[static_cast<std::size_t>(z)];
      m(i, j) = a.p_q[i] - a.p_k[j];
    }
  }
  return m;
}

struct ApproximationError {
  std::int64_t min_diff = 0;
  std::int64_t max_diff = 0;
  /// (min, max) of implemented - theoretical per zone, kAllZones order; zones
  /// never reached at this target stay (0, 0).
  std::array<std::pair<std::int64_t, std::int64_t>, 5> per_zone{};
};

/// Exhaustive scan of implemented_relative_matrix - remap_matrix.
inline ApproximationError approximation_error_bounds(std::size_t target_frames,
                                                     const VrprConfig& cfg) {
  const IntMatrix impl = implemented_relative_matrix(target_frames, cfg);
  ApproximationError e;
  std::array<bool, 5> seen{};
  for (std::size_t i = 0; i < target_frames; ++i) {
    for (std::size_t j = 0; j < target_frames; ++j) {
      const std::int64_t d = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j);
      const std::int64_t diff = impl(i, j) - remap_relative(d, cfg);
      e.min_diff = std::min(e.min_diff, diff);
      e.max_diff = std::max(e.max_diff, diff);
      const auto z = static_cast<std::size_t>(zone_of(d, cfg));
      auto& [lo, hi] = e.per_zone[z];
      if (!seen[z]) {
        lo = hi = diff;
        seen[z] = true;
      } else {
        lo = std::min(lo, diff);
        hi = std::max(hi, diff);
      }
    }
  }
  return e;
}

struct RemapReport {
  std::int64_t max_mapped = 0;       // max |implemented| over all frame pairs
  std::int64_t theoretical_max = 0;  // |remap_relative(target - 1)|
  bool valid = false;                // max_mapped <= pretrained_len - 1
  std::size_t target_len = 0;
  std::int64_t pretrained_len = 0;
};

inline RemapReport validate_vrpr(const VrprConfig& cfg, std::size_t target_frames) {
  RemapReport r;
  r.target_len = target_frames;
  r.pretrained_len = cfg.pretrained_len;
  if (target_frames == 0) {
    r.valid = true;
    return r;
  }
  const IntMatrix impl = implemented_relative_matrix(target_frames, cfg);
  for (std::int64_t x : impl.values()) r.max_mapped = std::max(r.max_mapped, std::abs(x));
  r.theoretical_max = std::abs(remap_relative(static_cast<std::int64_t>(target_frames) - 1, cfg));
  r.valid = r.max_mapped <= cfg.pretrained_len - 1;
  return r;
}

/// Position sets plus the per-frame-pair selector consumed by
/// attention_forward_zoned. Identity positions use a single set.
class ZonedPositions {
 public:
  static ZonedPositions identity(std::size_t frames) {
    ZonedPositions z;
    z.frames_ = frames;
    z.sets_.push_back({iota_positions(frames), iota_positions(frames)});
    return z;
  }

  static ZonedPositions remapped(std::size_t frames, const VrprConfig& cfg) {
    ZonedPositions z;
    z.frames_ = frames;
    z.cfg_ = cfg;
    for (auto& a : zone_index_arrays(frames, cfg)) z.sets_.push_back({a.p_q, a.p_k});
    return z;
  }

  /// Same assignment with every key position moved by shift.
  ZonedPositions shifted_keys(std::int64_t shift) const {
    ZonedPositions z = *this;
    for (auto& s : z.sets_) {
      for (auto& p : s.k) p += shift;
    }
    return z;
  }

  std::size_t select(std::size_t qf, std::size_t kf) const {
    if (!cfg_) return 0;
    return static_cast<std::size_t>(
        zone_of(static_cast<std::int64_t>(qf) - static_cast<std::int64_t>(kf), *cfg_));
  }

  /// Relative position the attention actually sees for frame pair (qf, kf).
  std::int64_t relative(std::size_t qf, std::size_t kf) const {
    const auto& s = sets_[select(qf, kf)];
    return s.q[qf] - s.k[kf];
  }

  std::span<const PositionPair> sets() const { return sets_; }
  const std::optional<VrprConfig>& config() const { return cfg_; }
  std::size_t frames() const { return frames_; }

  friend bool operator==(const ZonedPositions& a, const ZonedPositions& b) {
    if (a.frames_ != b.frames_ || a.cfg_ != b.cfg_ || a.sets_.size() != b.sets_.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.sets_.size(); ++i) {
      if (a.sets_[i].q != b.sets_[i].q || a.sets_[i].k != b.sets_[i].k) return false;
    }
    return true;
  }

 private:
  std::size_t frames_ = 0;
  std::optional<VrprConfig> cfg_;
  std::vector<PositionPair> sets_;
};

}  // namespace tierattn
