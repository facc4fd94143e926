#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tierattn/error.hpp"
#include "tierattn/tsa.hpp"
#include "tierattn/vrpr.hpp"

namespace tierattn {

/// TSA presets state d1/d2/alpha only; tokens per frame is a free choice here.
inline constexpr std::size_t kPresetTokensPerFrame = 16;

struct Preset {
  std::string name;
  VrprConfig vrpr;
  TsaConfig tsa;
  std::size_t target_frames = 0;
};

namespace detail {
inline Preset make_preset(std::string name, VrprConfig v, std::size_t d1, std::size_t d2,
                          double alpha, std::size_t pretrained_ctx, std::size_t target,
                          std::size_t n = kPresetTokensPerFrame) {
  return {std::move(name), v, TsaConfig{d1, d2, alpha, n, target, 0, pretrained_ctx}, target};
}
}  // namespace detail

/// Wan: pre-trained 81 frames, TSA context 24. Hunyuan: 127 frames, TSA context 36.
/// toy-2x sizes the probing defaults (21 -> 42 frames).
inline const std::vector<Preset>& shipped_presets() {
  static const std::vector<Preset> presets{
      detail::make_preset("wan-2x", {12, 20, 2, 8, 81}, 8, 16, 4.0, 24, 161),
      detail::make_preset("wan-4x", {10, 14, 2, 8, 81}, 8, 24, 4.0, 24, 321),
      detail::make_preset("hunyuan-2x", {12, 20, 2, 4, 127}, 12, 24, 4.0, 36, 253),
      detail::make_preset("hunyuan-4x", {12, 20, 2, 8, 127}, 12, 36, 4.0, 36, 509),
      detail::make_preset("toy-2x", {6, 10, 2, 4, 21}, 4, 8, 2.0, 16, 42, 4),
  };
  return presets;
}

inline const Preset& find_preset(std::string_view name) {
  for (const Preset& p : shipped_presets()) {
    if (p.name == name) return p;
  }
  std::string known;
  for (const Preset& p : shipped_presets()) known += (known.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

}  // namespace tierattn
