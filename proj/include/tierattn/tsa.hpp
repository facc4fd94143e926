#pragma once

// Tiered sparse attention masks.
//
// Frame pairs with |i - j| < d1 are Dense, d1 <= |i - j| < d2 are Striped with
// band |k - l| < stripe_width over within-frame token indices, the rest are
// Pruned. The sink frame column is Dense regardless of distance.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "tierattn/attention.hpp"
#include "tierattn/block_mask.hpp"
#include "tierattn/error.hpp"
#include "tierattn/vrpr.hpp"

namespace tierattn {

struct TsaConfig {
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  double alpha = 1.0;
  std::size_t tokens_per_frame = 1;
  std::size_t frames = 1;
  std::optional<std::size_t> sink_frame = 0;
  std::size_t pretrained_ctx = 0;

  std::optional<std::string> invariant_violation() const {
    if (!(d1 > 0 && d1 < d2)) return "require 0 < d1 < d2";
    if (!(alpha >= 1.0) || !std::isfinite(alpha)) return "require finite alpha >= 1";
    if (tokens_per_frame < 1) return "require tokens_per_frame >= 1";
    if (frames < 1) return "require frames >= 1";
    if (sink_frame && *sink_frame >= frames) return "sink_frame out of range";
    return std::nullopt;
  }

  void check() const {
    if (auto why = invariant_violation()) throw ConfigError("TsaConfig: " + *why);
  }

  friend bool operator==(const TsaConfig&, const TsaConfig&) = default;
};

/// floor(n*d1 / (alpha*(d2 - d1))).
inline std::size_t stripe_width(const TsaConfig& cfg) {
  if (cfg.d2 <= cfg.d1) throw ConfigError("stripe_width: require d2 > d1");
  const double num = static_cast<double>(cfg.tokens_per_frame * cfg.d1);
  const double den = cfg.alpha * static_cast<double>(cfg.d2 - cfg.d1);
  auto q = static_cast<std::size_t>(std::floor(num / den));
  // the quotient can land a hair under an exact integer
  if (static_cast<double>(q + 1) * den <= num) ++q;
  return q;
}

struct TsaValidity {
  double value = 0.0;  // d1 * (1 + 1/alpha)
  double lower = 0.0;  // pretrained_ctx / 4
  double upper = 0.0;  // pretrained_ctx / 2
  bool valid = false;
  std::size_t effective_tokens = 0;  // n*d1 + stripe_width*(d2 - d1)
  double token_limit = 0.0;          // n * pretrained_ctx / 2
  bool token_budget_ok = false;      // n*d1*(1 + 1/alpha) <= token_limit
};

inline TsaValidity validate_tsa(const TsaConfig& cfg) {
  TsaValidity r;
  const auto d1 = static_cast<double>(cfg.d1);
  const auto n = static_cast<double>(cfg.tokens_per_frame);
  const auto lp = static_cast<double>(cfg.pretrained_ctx);
  r.value = d1 * (1.0 + 1.0 / cfg.alpha);
  r.lower = lp / 4.0;
  r.upper = lp / 2.0;
  r.valid = r.lower <= r.value && r.value <= r.upper;
  r.token_limit = n * lp / 2.0;
  r.token_budget_ok = n * r.value <= r.token_limit;
  if (cfg.d2 > cfg.d1) {
    r.effective_tokens = cfg.tokens_per_frame * cfg.d1 + stripe_width(cfg) * (cfg.d2 - cfg.d1);
  }
  return r;
}

/// True when stripe_width is zero, so every would-be Striped block is Pruned.
inline bool stripes_degraded(const TsaConfig& cfg) { return stripe_width(cfg) == 0; }

inline BlockMaskDescriptor build_block_mask(const TsaConfig& cfg) {
  cfg.check();
  const std::size_t ds = stripe_width(cfg);
  const BlockKind mid = ds > 0 ? BlockKind::Striped : BlockKind::Pruned;
  BlockMaskDescriptor d{cfg.frames, cfg.tokens_per_frame, ds, cfg.sink_frame,
                        Matrix<BlockKind>(cfg.frames, cfg.frames, BlockKind::Pruned)};
  for (std::size_t i = 0; i < cfg.frames; ++i) {
    for (std::size_t j = 0; j < cfg.frames; ++j) {
      const std::size_t dist = i > j ? i - j : j - i;
      if ((cfg.sink_frame && j == *cfg.sink_frame) || dist < cfg.d1) {
        d.pattern(i, j) = BlockKind::Dense;
      } else if (dist < cfg.d2) {
        d.pattern(i, j) = mid;
      }
    }
  }
  return d;
}

/// Attendable keys seen by one query token, split by zone. The sink column
/// counts as sink even when it lies inside the local window.
struct MaskBudget {
  std::size_t local_tokens = 0;
  std::size_t mid_tokens = 0;
  std::size_t pruned_tokens = 0;  // keys the query cannot attend to
  std::size_t sink_tokens = 0;
  std::size_t per_query_max = 0;  // max attendable keys over every query token
  std::size_t mid_sides = 0;      // 0, 1 or 2: sides of the query frame with Striped blocks
  double n_local = 0.0;           // n * d1
  double local_to_mid_ratio = 0.0;  // n_local / (mid_tokens / mid_sides); 0 without mid zone

  std::size_t attendable() const { return local_tokens + mid_tokens + sink_tokens; }
  double mid_per_side() const {
    return mid_sides ? static_cast<double>(mid_tokens) / static_cast<double>(mid_sides) : 0.0;
  }
};

/// Number of l in [0, n) with |k - l| < width.
inline std::size_t band_count(std::size_t k, std::size_t n, std::size_t width) {
  if (width == 0) return 0;
  const std::size_t lo = k + 1 >= width ? k + 1 - width : 0;
  const std::size_t hi = std::min(n, k + width);
  return hi - lo;
}

/// Per-zone counts for query token qk of frame qf, from descriptor arithmetic.
inline MaskBudget query_budget(const BlockMaskDescriptor& desc, std::size_t qf, std::size_t qk) {
  const std::size_t n = desc.tokens_per_frame;
  MaskBudget b;
  bool left = false;
  bool right = false;
  for (std::size_t j = 0; j < desc.frames; ++j) {
    switch (desc.block(qf, j)) {
      case BlockKind::Dense:
        if (desc.sink_frame && j == *desc.sink_frame) {
          b.sink_tokens += n;
        } else {
          b.local_tokens += n;
        }
        break;
      case BlockKind::Striped: {
        const std::size_t c = band_count(qk, n, desc.stripe_width);
        b.mid_tokens += c;
        b.pruned_tokens += n - c;
        (j < qf ? left : right) = true;
        break;
      }
      case BlockKind::Pruned:
        b.pruned_tokens += n;
        break;
    }
  }
  b.mid_sides = static_cast<std::size_t>(left) + static_cast<std::size_t>(right);
  return b;
}

/// Budget of the most interior query token (frame f/2, token n/2), with
/// per_query_max taken over every query token.
inline MaskBudget mask_budget(const BlockMaskDescriptor& desc, const TsaConfig& cfg) {
  MaskBudget b = query_budget(desc, desc.frames / 2, desc.tokens_per_frame / 2);
  for (std::size_t qf = 0; qf < desc.frames; ++qf) {
    for (std::size_t qk = 0; qk < desc.tokens_per_frame; ++qk) {
      b.per_query_max = std::max(b.per_query_max, query_budget(desc, qf, qk).attendable());
    }
  }
  b.n_local = static_cast<double>(cfg.tokens_per_frame * cfg.d1);
  const double mid = b.mid_per_side();
  b.local_to_mid_ratio = mid > 0.0 ? b.n_local / mid : 0.0;
  return b;
}

/// Masked attention with the TSA descriptor built from cfg. Positions are
/// taken as given; callers compose VRPR remapping beforehand.
inline AttentionRecord tsa_attention(const TokenTensor& q, const TokenTensor& k,
                                     const TokenTensor& v, const ZonedPositions& positions,
                                     const TsaConfig& cfg, double rope_base = kDefaultRopeBase) {
  const BlockMaskDescriptor mask = build_block_mask(cfg);
  const auto freqs = rope_frequencies(q.cols(), rope_base);
  return attention_forward_zoned(
      q, k, v, positions.sets(),
      [&positions](std::size_t qf, std::size_t kf) { return positions.select(qf, kf); },
      cfg.tokens_per_frame, &mask, freqs);
}

inline AttentionRecord tsa_attention(const TokenTensor& q, const TokenTensor& k,
                                     const TokenTensor& v, const PositionIndex& pos_q,
                                     const PositionIndex& pos_k, const TsaConfig& cfg,
                                     double rope_base = kDefaultRopeBase) {
  const BlockMaskDescriptor mask = build_block_mask(cfg);
  const auto freqs = rope_frequencies(q.cols(), rope_base);
  return attention_forward(q, k, v, pos_q, pos_k, cfg.tokens_per_frame, &mask, freqs);
}

}  // namespace tierattn
