#pragma once

// Layer-wise sensitivity probing and layer-adaptive strategy assignment.
//
// Position probe: shift the key positions of one layer at a time and measure
// how far that layer's head-averaged logits move (ALD). Context probe: run an
// extended-length input with remapped positions everywhere, then restrict one
// layer at a time to a sliding frame window and measure the relative change in
// that layer's mean attention entropy. Layers are ranked by score; the top
// fraction is marked sensitive.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tierattn/attention.hpp"
#include "tierattn/error.hpp"
#include "tierattn/metrics.hpp"
#include "tierattn/stack.hpp"
#include "tierattn/tsa.hpp"
#include "tierattn/vrpr.hpp"

namespace tierattn {

inline const std::vector<std::int64_t> kDefaultShifts{-40, -20, 20, 40};
inline const std::vector<std::uint64_t> kDefaultInputSeeds{1, 2, 3};

/// Optional quality signal for a perturbed layer (e.g. an external reward
/// model). It is reported alongside ALD but does not drive classification.
using QualityScorer = std::function<double(std::size_t layer, const MultiHeadRecord& probe,
                                           const MultiHeadRecord& baseline)>;

struct PositionProbeResult {
  std::vector<double> ald;
  std::vector<double> quality;  // empty without a scorer
};

inline PositionProbeResult probe_position_ood(const SyntheticStack& s, std::size_t frames,
                                              const std::vector<std::int64_t>& shifts,
                                              const std::vector<std::uint64_t>& input_seeds,
                                              const QualityScorer& scorer = {}) {
  if (shifts.empty()) throw ConfigError("probe_position_ood: shifts must be non-empty");
  if (input_seeds.empty()) throw ConfigError("probe_position_ood: input seeds must be non-empty");
  PositionProbeResult r{std::vector<double>(s.num_layers, 0.0), {}};
  if (scorer) r.quality.assign(s.num_layers, 0.0);
  const ZonedPositions base = ZonedPositions::identity(frames);
  for (std::uint64_t seed : input_seeds) {
    const StackRun baseline = run_stack(s, frames, seed);
    for (std::size_t l = 0; l < s.num_layers; ++l) {
      const LayerRecord& orig = baseline.layers[l];
      const RealMatrix orig_logits = mean_head_logits(orig.attention);
      for (std::int64_t shift : shifts) {
        // Layers before l are untouched by the override, so layer l sees the
        // baseline hidden state.
        const LayerRecord probe = run_layer(s, l, orig.input, base.shifted_keys(shift), nullptr);
        r.ald[l] += attention_logits_difference(mean_head_logits(probe.attention), orig_logits);
        if (scorer) r.quality[l] += scorer(l, probe.attention, orig.attention);
      }
    }
  }
  const double n = static_cast<double>(shifts.size() * input_seeds.size());
  for (double& x : r.ald) x /= n;
  for (double& x : r.quality) x /= n;
  return r;
}

/// Mean attention entropy over rows, averaged across heads.
inline double mean_attention_entropy(const MultiHeadRecord& mh) {
  double acc = 0.0;
  for (const AttentionRecord& h : mh.heads) acc += attention_entropy(h.weights).mean;
  return acc / static_cast<double>(mh.heads.size());
}

inline std::vector<double> probe_context_ood(const SyntheticStack& s, std::size_t base_frames,
                                             std::size_t extension_factor,
                                             const VrprConfig& vrpr_cfg, std::size_t window,
                                             const std::vector<std::uint64_t>& input_seeds) {
  if (extension_factor < 2) throw ConfigError("probe_context_ood: extension_factor must be >= 2");
  if (input_seeds.empty()) throw ConfigError("probe_context_ood: input seeds must be non-empty");
  vrpr_cfg.check();
  const std::size_t frames = base_frames * extension_factor;
  if (window == 0 || window >= frames) {
    throw ConfigError("probe_context_ood: window " + std::to_string(window) +
                      " must be in [1, extended length " + std::to_string(frames) + ")");
  }
  const ZonedPositions positions = ZonedPositions::remapped(frames, vrpr_cfg);
  const BlockMaskDescriptor window_mask = sliding_window_mask(frames, s.tokens_per_frame, window);
  std::vector<double> score(s.num_layers, 0.0);
  for (std::uint64_t seed : input_seeds) {
    const StackRun baseline = run_stack(s, frames, seed, {}, positions);
    for (std::size_t l = 0; l < s.num_layers; ++l) {
      const LayerRecord& orig = baseline.layers[l];
      const LayerRecord probe = run_layer(s, l, orig.input, positions, &window_mask);
      score[l] += context_sensitivity_score(mean_attention_entropy(probe.attention),
                                            mean_attention_entropy(orig.attention));
    }
  }
  for (double& x : score) x /= static_cast<double>(input_seeds.size());
  return score;
}

/// ceil(fraction * len), guarded against fractions like 2/3 landing a hair above an integer.
inline std::size_t top_count(double fraction, std::size_t len) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must be in (0, 1]");
  const double x = fraction * static_cast<double>(len);
  return std::min(len, static_cast<std::size_t>(std::ceil(x - 1e-9)));
}

/// Layer indices ordered by descending score; equal scores keep the lower index first.
inline std::vector<std::size_t> rank_descending(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

/// Marks the ceil(fraction*len) highest-scoring layers.
inline std::vector<bool> classify_sensitive(const std::vector<double>& scores,
                                            double fraction = 2.0 / 3.0) {
  std::vector<bool> marked(scores.size(), false);
  const auto order = rank_descending(scores);
  const std::size_t k = top_count(fraction, scores.size());
  for (std::size_t i = 0; i < k; ++i) marked[order[i]] = true;
  return marked;
}

enum class Strategy { VrprOnly, VrprPlusTsa };

inline std::string_view strategy_name(Strategy s) {
  return s == Strategy::VrprPlusTsa ? "VRPR+TSA" : "VRPR";
}

inline Strategy strategy_from_name(std::string_view name) {
  if (name == "VRPR") return Strategy::VrprOnly;
  if (name == "VRPR+TSA") return Strategy::VrprPlusTsa;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

/// Top ceil(tsa_fraction*len) layers by context score get VRPR+TSA, the rest
/// VRPR only. Every layer keeps VRPR, so pos_sensitive does not change the
/// outcome; it is checked for shape only.
inline std::vector<Strategy> assign_strategies(const std::vector<double>& ctx_scores,
                                               const std::vector<bool>& pos_sensitive,
                                               double tsa_fraction = 0.5) {
  if (ctx_scores.size() != pos_sensitive.size()) {
    throw DimensionError("assign_strategies: score and flag lengths differ");
  }
  std::vector<Strategy> out(ctx_scores.size(), Strategy::VrprOnly);
  const auto order = rank_descending(ctx_scores);
  const std::size_t k = top_count(tsa_fraction, ctx_scores.size());
  for (std::size_t i = 0; i < k; ++i) out[order[i]] = Strategy::VrprPlusTsa;
  return out;
}

struct SensitivityProfile {
  std::string model_name;
  std::size_t num_layers = 0;
  std::vector<double> ald;
  std::vector<double> ctx_score;
  std::vector<bool> pos_sensitive;
  std::vector<bool> ctx_sensitive;
  std::vector<Strategy> strategy;
  std::optional<std::string> notes;

  friend bool operator==(const SensitivityProfile&, const SensitivityProfile&) = default;
};

struct ProfileFractions {
  double pos = 2.0 / 3.0;
  double ctx = 2.0 / 3.0;
  double tsa = 0.5;
};

inline SensitivityProfile make_profile(std::string model_name, std::vector<double> ald,
                                       std::vector<double> ctx_score,
                                       const ProfileFractions& fr = {}) {
  if (ald.size() != ctx_score.size()) throw DimensionError("make_profile: score lengths differ");
  SensitivityProfile p;
  p.model_name = std::move(model_name);
  p.num_layers = ald.size();
  p.pos_sensitive = classify_sensitive(ald, fr.pos);
  p.ctx_sensitive = classify_sensitive(ctx_score, fr.ctx);
  p.strategy = assign_strategies(ctx_score, p.pos_sensitive, fr.tsa);
  p.ald = std::move(ald);
  p.ctx_score = std::move(ctx_score);
  return p;
}

struct ProbeSettings {
  std::size_t base_frames = 21;
  std::vector<std::int64_t> shifts = kDefaultShifts;
  std::vector<std::uint64_t> input_seeds = kDefaultInputSeeds;
  std::size_t extension_factor = 2;
  VrprConfig vrpr{6, 10, 2, 4, 21};
  std::size_t window = 11;
  ProfileFractions fractions{};
};

/// Both probes plus classification and strategy assignment.
inline SensitivityProfile run_full_probe(const SyntheticStack& s, const ProbeSettings& ps,
                                         std::string model_name = "synthetic") {
  auto pos = probe_position_ood(s, ps.base_frames, ps.shifts, ps.input_seeds);
  auto ctx = probe_context_ood(s, ps.base_frames, ps.extension_factor, ps.vrpr, ps.window,
                               ps.input_seeds);
  return make_profile(std::move(model_name), std::move(pos.ald), std::move(ctx), ps.fractions);
}

struct LayerPlan {
  std::size_t layer = 0;
  Strategy strategy = Strategy::VrprOnly;
  ZonedPositions positions;
  std::optional<BlockMaskDescriptor> mask;

  LayerOverride as_override() const { return {std::nullopt, mask, positions}; }
};

class PlanValidationError : public ConfigError {
 public:
  PlanValidationError(const std::string& what, RemapReport vrpr, TsaValidity tsa)
      : ConfigError(what), vrpr_report(vrpr), tsa_report(tsa) {}
  RemapReport vrpr_report;
  TsaValidity tsa_report;
};

/// One plan per layer. Remapped positions apply whenever target_frames exceeds
/// the pre-trained range; within it positions stay raw.
inline std::vector<LayerPlan> build_layer_plans(const std::vector<Strategy>& strategies,
                                                std::size_t target_frames,
                                                const VrprConfig& vrpr_cfg,
                                                const TsaConfig& tsa_cfg) {
  vrpr_cfg.check();
  tsa_cfg.check();
  const RemapReport vr = validate_vrpr(vrpr_cfg, target_frames);
  const TsaValidity tv = validate_tsa(tsa_cfg);
  std::string why;
  if (!vr.valid) {
    why += "VRPR: max mapped relative position " + std::to_string(vr.max_mapped) +
           " exceeds pretrained_len-1=" + std::to_string(vrpr_cfg.pretrained_len - 1) + "; ";
  }
  if (!tv.valid) {
    why += "TSA: d1*(1+1/alpha)=" + std::to_string(tv.value) + " outside [" +
           std::to_string(tv.lower) + ", " + std::to_string(tv.upper) + "]; ";
  }
  if (tsa_cfg.frames != target_frames) {
    why += "TSA frames " + std::to_string(tsa_cfg.frames) + " != target " +
           std::to_string(target_frames) + "; ";
  }
  if (!why.empty()) throw PlanValidationError("build_layer_plans: " + why, vr, tv);

  const bool remap = static_cast<std::int64_t>(target_frames) > vrpr_cfg.pretrained_len;
  const ZonedPositions positions = remap ? ZonedPositions::remapped(target_frames, vrpr_cfg)
                                         : ZonedPositions::identity(target_frames);
  std::optional<BlockMaskDescriptor> mask;
  std::vector<LayerPlan> plans;
  plans.reserve(strategies.size());
  for (std::size_t l = 0; l < strategies.size(); ++l) {
    LayerPlan p{l, strategies[l], positions, std::nullopt};
    if (strategies[l] == Strategy::VrprPlusTsa) {
      if (!mask) mask = build_block_mask(tsa_cfg);
      p.mask = mask;
    }
    plans.push_back(std::move(p));
  }
  return plans;
}

inline LayerOverrides plans_as_overrides(const std::vector<LayerPlan>& plans) {
  LayerOverrides o;
  for (const LayerPlan& p : plans) o.emplace(p.layer, p.as_override());
  return o;
}

}  // namespace tierattn
