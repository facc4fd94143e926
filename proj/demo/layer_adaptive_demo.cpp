// Probe a small synthetic stack, assign per-layer strategies and run the
// extended-length input with the resulting plans.

#include <cstdio>

#include "tierattn/tierattn.hpp"

using namespace tierattn;

int main() {
  const Preset& preset = find_preset("toy-2x");
  const SyntheticStack stack = build_stack(6, 32, preset.tsa.tokens_per_frame, 2024, 2);

  ProbeSettings settings;
  settings.vrpr = preset.vrpr;
  const SensitivityProfile profile = run_full_probe(stack, settings, "toy");

  std::printf("layer  ald        ctx_score  pos  ctx  strategy\n");
  for (std::size_t l = 0; l < profile.num_layers; ++l) {
    std::printf("%5zu  %.6f  %+.6f  %3s  %3s  %s\n", l, profile.ald[l], profile.ctx_score[l],
                profile.pos_sensitive[l] ? "yes" : "no", profile.ctx_sensitive[l] ? "yes" : "no",
                std::string(strategy_name(profile.strategy[l])).c_str());
  }

  const auto plans = build_layer_plans(profile.strategy, preset.target_frames, preset.vrpr, preset.tsa);
  const StackRun raw = run_stack(stack, preset.target_frames, 1);
  const StackRun adapted = run_stack(stack, preset.target_frames, 1, plans_as_overrides(plans));

  std::printf("\n%zu frames (pre-trained %lld)\n", preset.target_frames,
              static_cast<long long>(preset.vrpr.pretrained_len));
  std::printf("layer  entropy(raw)  entropy(plan)\n");
  for (std::size_t l = 0; l < stack.num_layers; ++l) {
    std::printf("%5zu  %12.6f  %13.6f\n", l, mean_attention_entropy(raw.layers[l].attention),
                mean_attention_entropy(adapted.layers[l].attention));
  }
  return 0;
}
