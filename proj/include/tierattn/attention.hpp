#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tierattn/block_mask.hpp"
#include "tierattn/error.hpp"
#include "tierattn/matrix.hpp"

namespace tierattn {

inline constexpr double kDefaultRopeBase = 10000.0;

/// theta_t = base^(-2t/head_dim), t in [0, head_dim/2).
inline std::vector<double> rope_frequencies(std::size_t head_dim, double base = kDefaultRopeBase) {
  if (head_dim == 0 || head_dim % 2 != 0) {
    throw DimensionError("rope_frequencies: head_dim must be even and positive, got " +
                         std::to_string(head_dim));
  }
  if (!(base > 1.0)) throw DimensionError("rope_frequencies: base must exceed 1");
  std::vector<double> f(head_dim / 2);
  for (std::size_t t = 0; t < f.size(); ++t) {
    f[t] = std::pow(base, -2.0 * static_cast<double>(t) / static_cast<double>(head_dim));
  }
  return f;
}

/// Rotates each consecutive coordinate pair (2t, 2t+1) by angle p*theta_t, where
/// p is the temporal position of the token's frame. When model_dim is a multiple
/// of 2*freqs.size() the rotation is applied per head slice.
inline TokenTensor rope_apply(const TokenTensor& tokens, const PositionIndex& positions,
                              std::size_t tokens_per_frame, std::span<const double> freqs) {
  const std::size_t dim = tokens.cols();
  const std::size_t head_dim = 2 * freqs.size();
  if (head_dim == 0 || dim % head_dim != 0) {
    throw DimensionError("rope_apply: model_dim " + std::to_string(dim) +
                         " is not a multiple of 2*len(freqs)");
  }
  if (tokens_per_frame == 0 || positions.size() * tokens_per_frame != tokens.rows()) {
    throw DimensionError("rope_apply: positions * tokens_per_frame != num_tokens");
  }
  TokenTensor out(tokens.rows(), dim);
  for (std::size_t r = 0; r < tokens.rows(); ++r) {
    const double p = static_cast<double>(positions[r / tokens_per_frame]);
    auto src = tokens.row(r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < dim; c += 2) {
      const double angle = p * freqs[(c % head_dim) / 2];
      const double cs = std::cos(angle);
      const double sn = std::sin(angle);
      dst[c] = src[c] * cs - src[c + 1] * sn;
      dst[c + 1] = src[c] * sn + src[c + 1] * cs;
    }
  }
  return out;
}

/// Entry (i, j) = pos_q[i] - pos_k[j].
inline IntMatrix relative_position_matrix(const PositionIndex& pos_q, const PositionIndex& pos_k) {
  IntMatrix m(pos_q.size(), pos_k.size());
  for (std::size_t i = 0; i < pos_q.size(); ++i) {
    for (std::size_t j = 0; j < pos_k.size(); ++j) m(i, j) = pos_q[i] - pos_k[j];
  }
  return m;
}

/// logits are the scaled scores q.k*scale before masking; masked pairs enter the
/// softmax as -inf, so their weights are exactly zero.
struct AttentionRecord {
  RealMatrix logits;
  RealMatrix weights;
  TokenTensor output;

  friend bool operator==(const AttentionRecord&, const AttentionRecord&) = default;
};

/// One query/key position assignment. Several of them, chosen per frame pair by
/// a selector, realize index-decomposed relative-position schemes.
struct PositionPair {
  PositionIndex q;
  PositionIndex k;
};

namespace detail {

inline void require_finite(const TokenTensor& t, const char* what) {
  for (double x : t.values()) {
    if (!std::isfinite(x)) throw DimensionError(std::string(what) + " contains non-finite entries");
  }
}

inline void softmax_row(std::span<const double> logits, std::span<double> weights,
                        const BlockMaskDescriptor* mask, std::size_t q, std::size_t row_index) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (mask && !mask->allows_token(q, j)) continue;
    mx = std::max(mx, logits[j]);
  }
  if (mx == -std::numeric_limits<double>::infinity()) {
    throw MaskError("attention: query row " + std::to_string(row_index) + " has no attendable key");
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (mask && !mask->allows_token(q, j)) {
      weights[j] = 0.0;
      continue;
    }
    weights[j] = std::exp(logits[j] - mx);
    sum += weights[j];
  }
  for (double& w : weights) w /= sum;
}

}  // namespace detail

/// Softmax attention where the positions used for a (query frame, key frame)
/// pair come from position_sets[select(qf, kf)]. RoPE touches q and k only.
template <typename Select>
  requires std::invocable<Select, std::size_t, std::size_t>
AttentionRecord attention_forward_zoned(const TokenTensor& q, const TokenTensor& k,
                                        const TokenTensor& v,
                                        std::span<const PositionPair> position_sets,
                                        Select select, std::size_t tokens_per_frame,
                                        const BlockMaskDescriptor* mask,
                                        std::span<const double> freqs,
                                        std::optional<double> scale = std::nullopt) {
  if (q.cols() != k.cols()) throw DimensionError("attention: q and k feature dims differ");
  if (k.rows() != v.rows()) throw DimensionError("attention: k and v token counts differ");
  if (position_sets.empty()) throw DimensionError("attention: no position set given");
  if (tokens_per_frame == 0) throw DimensionError("attention: tokens_per_frame must be positive");
  detail::require_finite(q, "q");
  detail::require_finite(k, "k");
  detail::require_finite(v, "v");
  if (mask && (mask->tokens_per_frame != tokens_per_frame || mask->num_tokens() != q.rows() ||
               mask->num_tokens() != k.rows())) {
    throw DimensionError("attention: mask shape does not match q/k");
  }
  const double s = scale.value_or(1.0 / std::sqrt(static_cast<double>(q.cols())));

  std::vector<TokenTensor> rq;
  std::vector<TokenTensor> rk;
  rq.reserve(position_sets.size());
  rk.reserve(position_sets.size());
  for (const PositionPair& ps : position_sets) {
    rq.push_back(rope_apply(q, ps.q, tokens_per_frame, freqs));
    rk.push_back(rope_apply(k, ps.k, tokens_per_frame, freqs));
  }

  const std::size_t nq = q.rows();
  const std::size_t nk = k.rows();
  AttentionRecord rec{RealMatrix(nq, nk), RealMatrix(nq, nk), TokenTensor(nq, v.cols())};
  for (std::size_t a = 0; a < nq; ++a) {
    const std::size_t qf = a / tokens_per_frame;
    for (std::size_t b = 0; b < nk; ++b) {
      const std::size_t z = select(qf, b / tokens_per_frame);
      auto qa = rq[z].row(a);
      auto kb = rk[z].row(b);
      double dot = 0.0;
      for (std::size_t c = 0; c < qa.size(); ++c) dot += qa[c] * kb[c];
      rec.logits(a, b) = dot * s;
    }
    detail::softmax_row(rec.logits.row(a), rec.weights.row(a), mask, a, a);
    auto out = rec.output.row(a);
    for (std::size_t b = 0; b < nk; ++b) {
      const double w = rec.weights(a, b);
      if (w == 0.0) continue;
      auto vb = v.row(b);
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += w * vb[c];
    }
  }
  return rec;
}

/// softmax(RoPE(Q) RoPE(K)^T * scale) V with an optional block mask.
/// scale defaults to 1/sqrt(model_dim).
inline AttentionRecord attention_forward(const TokenTensor& q, const TokenTensor& k,
                                         const TokenTensor& v, const PositionIndex& pos_q,
                                         const PositionIndex& pos_k, std::size_t tokens_per_frame,
                                         const BlockMaskDescriptor* mask,
                                         std::span<const double> freqs,
                                         std::optional<double> scale = std::nullopt) {
  const PositionPair single{pos_q, pos_k};
  return attention_forward_zoned(
      q, k, v, std::span<const PositionPair>(&single, 1),
      [](std::size_t, std::size_t) { return std::size_t{0}; }, tokens_per_frame, mask, freqs,
      scale);
}

inline TokenTensor column_slice(const TokenTensor& t, std::size_t begin, std::size_t count) {
  TokenTensor out(t.rows(), count);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto src = t.row(r);
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(begin), count, out.row(r).begin());
  }
  return out;
}

struct MultiHeadRecord {
  std::vector<AttentionRecord> heads;
  TokenTensor output;  // head outputs concatenated along features

  friend bool operator==(const MultiHeadRecord&, const MultiHeadRecord&) = default;
};

/// Splits features into num_heads equal slices and runs the single-head engine
/// on each with scale 1/sqrt(head_dim).
template <typename Select>
MultiHeadRecord multi_head_attention_zoned(const TokenTensor& q, const TokenTensor& k,
                                           const TokenTensor& v, std::size_t num_heads,
                                           std::span<const PositionPair> position_sets,
                                           Select select, std::size_t tokens_per_frame,
                                           const BlockMaskDescriptor* mask, double rope_base) {
  if (num_heads == 0 || q.cols() % num_heads != 0 || v.cols() % num_heads != 0) {
    throw DimensionError("multi-head: feature dim not divisible by num_heads");
  }
  const std::size_t hd = q.cols() / num_heads;
  const std::size_t vd = v.cols() / num_heads;
  const auto freqs = rope_frequencies(hd, rope_base);
  MultiHeadRecord mh{{}, TokenTensor(q.rows(), v.cols())};
  mh.heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    mh.heads.push_back(attention_forward_zoned(
        column_slice(q, h * hd, hd), column_slice(k, h * hd, hd), column_slice(v, h * vd, vd),
        position_sets, select, tokens_per_frame, mask, freqs,
        1.0 / std::sqrt(static_cast<double>(hd))));
    const TokenTensor& ho = mh.heads.back().output;
    for (std::size_t r = 0; r < ho.rows(); ++r) {
      std::copy(ho.row(r).begin(), ho.row(r).end(),
                mh.output.row(r).begin() + static_cast<std::ptrdiff_t>(h * vd));
    }
  }
  return mh;
}

/// Elementwise mean of the per-head logits.
inline RealMatrix mean_head_logits(const MultiHeadRecord& mh) {
  if (mh.heads.empty()) return {};
  RealMatrix acc = mh.heads.front().logits;
  for (std::size_t h = 1; h < mh.heads.size(); ++h) {
    auto src = mh.heads[h].logits.values();
    auto dst = acc.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const double inv = 1.0 / static_cast<double>(mh.heads.size());
  for (double& x : acc.values()) x *= inv;
  return acc;
}

}  // namespace tierattn
