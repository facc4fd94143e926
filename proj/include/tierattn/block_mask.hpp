#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "tierattn/error.hpp"
#include "tierattn/matrix.hpp"

namespace tierattn {

enum class BlockKind : char { Dense = 'D', Striped = 'S', Pruned = 'P' };

/// Frame-pair block-sparse attention mask.
///
/// Block (i, j) decides how query frame i may see key frame j. Inside a
/// Striped block, query token k sees key token l iff |k - l| < stripe_width,
/// where k and l are flattened within-frame token indices.
struct BlockMaskDescriptor {
  std::size_t frames = 0;
  std::size_t tokens_per_frame = 0;
  std::size_t stripe_width = 0;
  std::optional<std::size_t> sink_frame;
  Matrix<BlockKind> pattern;

  BlockKind block(std::size_t qf, std::size_t kf) const { return pattern(qf, kf); }

  bool allows(std::size_t qf, std::size_t qk, std::size_t kf, std::size_t kk) const {
    switch (pattern(qf, kf)) {
      case BlockKind::Dense:
        return true;
      case BlockKind::Striped: {
        const std::size_t dist = qk > kk ? qk - kk : kk - qk;
        return dist < stripe_width;
      }
      case BlockKind::Pruned:
        break;
    }
    return false;
  }

  /// Token-level lookup with frame-major flattening.
  bool allows_token(std::size_t q, std::size_t k) const {
    const std::size_t n = tokens_per_frame;
    return allows(q / n, q % n, k / n, k % n);
  }

  std::size_t num_tokens() const { return frames * tokens_per_frame; }

  /// Row-major D/S/P code string, one character per block.
  std::string pattern_code() const {
    std::string s;
    s.reserve(pattern.size());
    for (BlockKind b : pattern.values()) s.push_back(static_cast<char>(b));
    return s;
  }

  friend bool operator==(const BlockMaskDescriptor&, const BlockMaskDescriptor&) = default;
};

inline BlockKind block_kind_from_code(char c) {
  switch (c) {
    case 'D': return BlockKind::Dense;
    case 'S': return BlockKind::Striped;
    case 'P': return BlockKind::Pruned;
    default: throw ConfigError(std::string("unknown block code '") + c + "'");
  }
}

/// Every block Dense: the mask admits all pairs.
inline BlockMaskDescriptor all_dense_mask(std::size_t frames, std::size_t tokens_per_frame) {
  return {frames, tokens_per_frame, 0, std::nullopt,
          Matrix<BlockKind>(frames, frames, BlockKind::Dense)};
}

/// Conventional frame-band sliding window: Dense iff |i - j| < window, no sink, no stripes.
inline BlockMaskDescriptor sliding_window_mask(std::size_t frames, std::size_t tokens_per_frame,
                                               std::size_t window) {
  BlockMaskDescriptor d{frames, tokens_per_frame, 0, std::nullopt,
                        Matrix<BlockKind>(frames, frames, BlockKind::Pruned)};
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t j = 0; j < frames; ++j) {
      const std::size_t dist = i > j ? i - j : j - i;
      if (dist < window) d.pattern(i, j) = BlockKind::Dense;
    }
  }
  return d;
}

inline constexpr std::size_t kMaterializeLimit = std::size_t{1} << 26;

/// Dense 0/1 token-pair mask, (f*n) x (f*n), frame-major flattening.
inline Matrix<std::uint8_t> materialize_mask(const BlockMaskDescriptor& desc) {
  const std::size_t t = desc.num_tokens();
  if (t != 0 && t > kMaterializeLimit / t) {
    throw SizeGuardError("materialize_mask: " + std::to_string(t) + "^2 entries exceeds 2^26");
  }
  Matrix<std::uint8_t> m(t, t, 0);
  for (std::size_t q = 0; q < t; ++q) {
    for (std::size_t k = 0; k < t; ++k) m(q, k) = desc.allows_token(q, k) ? 1 : 0;
  }
  return m;
}

/// Binary PGM (P5): header "P5\n<W> <H>\n255\n", then one byte per token pair,
/// rows = query tokens, 255 attendable, 0 pruned.
inline void write_pgm(std::ostream& out, const Matrix<std::uint8_t>& mask) {
  out << "P5\n" << mask.cols() << ' ' << mask.rows() << "\n255\n";
  for (std::uint8_t v : mask.values()) out.put(static_cast<char>(v ? 255 : 0));
}

}  // namespace tierattn
