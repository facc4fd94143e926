#pragma once

// Seeded multi-layer attention stack used as a probing substrate.
//
// Layer l maps hidden state x to x + MHA(rms(x) Wq, rms(x) Wk, rms(x) Wv) Wo.
// Weights are drawn layer by layer in the order Wq, Wk, Wv, Wo, each row-major,
// as standard normals scaled by 1/sqrt(model_dim). Inputs are standard normals
// from an independent stream seeded with the input seed.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tierattn/attention.hpp"
#include "tierattn/block_mask.hpp"
#include "tierattn/error.hpp"
#include "tierattn/matrix.hpp"
#include "tierattn/rng.hpp"
#include "tierattn/vrpr.hpp"

namespace tierattn {

struct LayerWeights {
  RealMatrix wq;
  RealMatrix wk;
  RealMatrix wv;
  RealMatrix wo;

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct SyntheticStack {
  std::size_t num_layers = 0;
  std::size_t model_dim = 0;
  std::size_t num_heads = 1;
  std::size_t tokens_per_frame = 1;
  double rope_base = kDefaultRopeBase;
  std::uint64_t seed = 0;
  std::vector<LayerWeights> layers;

  friend bool operator==(const SyntheticStack&, const SyntheticStack&) = default;
};

inline RealMatrix random_normal_matrix(Xoshiro256& rng, std::size_t rows, std::size_t cols,
                                       double scale) {
  RealMatrix m(rows, cols);
  for (double& x : m.values()) x = rng.normal() * scale;
  return m;
}

inline SyntheticStack build_stack(std::size_t num_layers, std::size_t model_dim,
                                  std::size_t tokens_per_frame, std::uint64_t seed,
                                  std::size_t num_heads = 1, double rope_base = kDefaultRopeBase) {
  if (model_dim == 0 || num_heads == 0 || model_dim % num_heads != 0 ||
      (model_dim / num_heads) % 2 != 0) {
    throw DimensionError("build_stack: model_dim must split into even-sized heads");
  }
  if (tokens_per_frame == 0) throw DimensionError("build_stack: tokens_per_frame must be positive");
  SyntheticStack s{num_layers, model_dim, num_heads, tokens_per_frame, rope_base, seed, {}};
  Xoshiro256 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(model_dim));
  s.layers.reserve(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    LayerWeights w;
    w.wq = random_normal_matrix(rng, model_dim, model_dim, scale);
    w.wk = random_normal_matrix(rng, model_dim, model_dim, scale);
    w.wv = random_normal_matrix(rng, model_dim, model_dim, scale);
    w.wo = random_normal_matrix(rng, model_dim, model_dim, scale);
    s.layers.push_back(std::move(w));
  }
  return s;
}

inline TokenTensor make_input(const SyntheticStack& s, std::size_t frames, std::uint64_t input_seed) {
  Xoshiro256 rng(input_seed);
  return random_normal_matrix(rng, frames * s.tokens_per_frame, s.model_dim, 1.0);
}

/// Per-row RMS normalization without learned gain.
inline TokenTensor rms_normalize(const TokenTensor& x) {
  TokenTensor out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double ss = 0.0;
    for (double v : x.row(r)) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.cols()) + 1e-6);
    auto dst = out.row(r);
    auto src = x.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = src[c] * inv;
  }
  return out;
}

/// Replacement behavior for a single layer. Unset fields fall back to the run's defaults.
struct LayerOverride {
  std::optional<std::int64_t> k_shift;
  std::optional<BlockMaskDescriptor> mask;
  std::optional<ZonedPositions> positions;
};

using LayerOverrides = std::map<std::size_t, LayerOverride>;

struct LayerRecord {
  TokenTensor input;  // hidden state entering the layer
  MultiHeadRecord attention;

  friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

struct StackRun {
  std::vector<LayerRecord> layers;
  TokenTensor output;

  friend bool operator==(const StackRun&, const StackRun&) = default;
};

/// Attention record and residual output of one layer on a given hidden state.
inline LayerRecord run_layer(const SyntheticStack& s, std::size_t layer, const TokenTensor& hidden,
                             const ZonedPositions& positions, const BlockMaskDescriptor* mask,
                             TokenTensor* residual_out = nullptr) {
  if (layer >= s.num_layers) {
    throw DimensionError("run_layer: layer " + std::to_string(layer) + " out of range");
  }
  const LayerWeights& w = s.layers[layer];
  const TokenTensor h = rms_normalize(hidden);
  LayerRecord rec{hidden, multi_head_attention_zoned(
                              matmul(h, w.wq), matmul(h, w.wk), matmul(h, w.wv), s.num_heads,
                              positions.sets(),
                              [&positions](std::size_t qf, std::size_t kf) {
                                return positions.select(qf, kf);
                              },
                              s.tokens_per_frame, mask, s.rope_base)};
  if (residual_out) {
    TokenTensor proj = matmul(rec.attention.output, w.wo);
    auto dst = proj.values();
    auto src = hidden.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    *residual_out = std::move(proj);
  }
  return rec;
}

/// Runs every layer in order. base_positions (identity when absent) applies to
/// all layers; an override touches only its own layer.
inline StackRun run_stack(const SyntheticStack& s, std::size_t frames, std::uint64_t input_seed,
                          const LayerOverrides& overrides = {},
                          const std::optional<ZonedPositions>& base_positions = std::nullopt) {
  if (frames == 0) throw DimensionError("run_stack: frames must be >= 1");
  for (const auto& [layer, _] : overrides) {
    if (layer >= s.num_layers) {
      throw DimensionError("run_stack: override for layer " + std::to_string(layer) +
                           " but stack has " + std::to_string(s.num_layers));
    }
  }
  const ZonedPositions base = base_positions ? *base_positions : ZonedPositions::identity(frames);
  if (base.frames() != frames) throw DimensionError("run_stack: base positions frame count mismatch");

  StackRun run;
  run.layers.reserve(s.num_layers);
  TokenTensor x = make_input(s, frames, input_seed);
  for (std::size_t l = 0; l < s.num_layers; ++l) {
    const ZonedPositions* pos = &base;
    const BlockMaskDescriptor* mask = nullptr;
    std::optional<ZonedPositions> local;
    if (auto it = overrides.find(l); it != overrides.end()) {
      const LayerOverride& o = it->second;
      if (o.positions) pos = &*o.positions;
      if (o.k_shift) {
        local = pos->shifted_keys(*o.k_shift);
        pos = &*local;
      }
      if (o.mask) mask = &*o.mask;
    }
    TokenTensor next;
    run.layers.push_back(run_layer(s, l, x, *pos, mask, &next));
    x = std::move(next);
  }
  run.output = std::move(x);
  return run;
}

}  // namespace tierattn
