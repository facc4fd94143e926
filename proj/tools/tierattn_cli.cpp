// tierattn: remap tables, TSA masks, layer probing and layer plans from the command line.
//
// Exit codes: 0 success, 2 validation failure, 1 usage or I/O error.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tierattn/tierattn.hpp"

namespace fs = std::filesystem;
using namespace tierattn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInvalid = 2;

struct ValidationFailure {
  json report;
  std::string message;
};

void emit(const std::string& path, const std::string& bytes) {
  if (path.empty() || path == "-") {
    std::cout << bytes;
    std::cout.flush();
  } else {
    atomic_write(path, bytes);
  }
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("TIERATTN_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw IoError(std::string("TIERATTN_SEED is not an unsigned integer: ") + env);
  }
  return 0;
}

// ---- remap -----------------------------------------------------------------

struct RemapArgs {
  std::string preset;
  std::string config;
  std::optional<std::int64_t> w1, w2, g1, g2, pretrained;
  std::optional<std::size_t> target;
  std::string out;
  std::string report;
};

void add_remap(CLI::App& app, RemapArgs& a) {
  auto* c = app.add_subcommand("remap", "Implemented relative-position matrix (CSV) and range report (JSON)");
  c->add_option("--preset", a.preset, "Shipped preset name");
  c->add_option("--config", a.config, "JSON file with w1, w2, g1, g2, pretrained_len");
  c->add_option("--w1", a.w1, "Fine window (default 12)");
  c->add_option("--w2", a.w2, "Medium window (default 20)");
  c->add_option("--g1", a.g1, "Medium group size (default 2)");
  c->add_option("--g2", a.g2, "Coarse group size (default 8)");
  c->add_option("--pretrained", a.pretrained, "Pre-trained frame count L (default 81)");
  c->add_option("--target", a.target, "Target frame count (default: preset target or 161)");
  c->add_option("--out", a.out, "CSV path for the matrix (omit to skip)");
  c->add_option("--report", a.report, "JSON path for the report (default stdout)");
}

int run_remap(const RemapArgs& a) {
  VrprConfig cfg{12, 20, 2, 8, 81};
  std::size_t target = 161;
  if (!a.preset.empty()) {
    const Preset& p = find_preset(a.preset);
    cfg = p.vrpr;
    target = p.target_frames;
  }
  if (!a.config.empty()) cfg = vrpr_config_from_json(parse_json(read_file(a.config), a.config));
  if (a.w1) cfg.w1 = *a.w1;
  if (a.w2) cfg.w2 = *a.w2;
  if (a.g1) cfg.g1 = *a.g1;
  if (a.g2) cfg.g2 = *a.g2;
  if (a.pretrained) cfg.pretrained_len = *a.pretrained;
  if (a.target) target = *a.target;
  if (target == 0) throw CLI::ValidationError("--target", "must be >= 1");

  if (auto why = cfg.invariant_violation()) {
    json r{{"config", to_json(cfg)}, {"valid", false}, {"error", *why}, {"target_len", target}};
    throw ValidationFailure{r, "remap: invalid config: " + *why};
  }
  const RemapReport rep = validate_vrpr(cfg, target);
  json r = to_json(rep);
  r["config"] = to_json(cfg);
  if (!a.out.empty()) emit(a.out, int_matrix_csv(implemented_relative_matrix(target, cfg)));
  if (!rep.valid) {
    if (!a.report.empty()) emit(a.report, dump_stable(r));
    throw ValidationFailure{r, "remap: max mapped relative position " + std::to_string(rep.max_mapped) +
                                   " exceeds L-1 = " + std::to_string(cfg.pretrained_len - 1)};
  }
  emit(a.report, dump_stable(r));
  return kExitOk;
}

// ---- mask ------------------------------------------------------------------

struct MaskArgs {
  std::string preset;
  std::optional<std::size_t> frames, n, d1, d2, sink, pretrained_ctx;
  std::optional<double> alpha;
  bool no_sink = false;
  bool validate = false;
  std::string pgm;
  std::string out;
};

void add_mask(CLI::App& app, MaskArgs& a) {
  auto* c = app.add_subcommand("mask", "Tiered sparse attention block mask descriptor (JSON)");
  c->add_option("--preset", a.preset, "Shipped preset name");
  c->add_option("--frames", a.frames, "Frame count (default: preset target or 8)");
  c->add_option("--n", a.n, "Tokens per frame (default: preset or 4)");
  c->add_option("--d1", a.d1, "Dense window D1 (default: preset or 2)");
  c->add_option("--d2", a.d2, "Striped window D2 (default: preset or 4)");
  c->add_option("--alpha", a.alpha, "Density ratio alpha >= 1 (default: preset or 2)");
  c->add_option("--sink", a.sink, "Sink frame index (default 0)");
  c->add_flag("--no-sink", a.no_sink, "Disable the sink frame");
  c->add_option("--pretrained-ctx", a.pretrained_ctx, "Pre-trained context Lp in frames (default: preset or frames)");
  c->add_flag("--validate", a.validate, "Check D1(1+1/alpha) against [Lp/4, Lp/2]");
  c->add_option("--pgm", a.pgm, "Write the materialized token mask as PGM");
  c->add_option("--out", a.out, "JSON path for the descriptor (default stdout)");
}

int run_mask(const MaskArgs& a) {
  TsaConfig cfg{2, 4, 2.0, 4, 8, 0, 0};
  bool lp_set = false;
  if (!a.preset.empty()) {
    cfg = find_preset(a.preset).tsa;
    lp_set = true;
  }
  if (a.frames) cfg.frames = *a.frames;
  if (a.n) cfg.tokens_per_frame = *a.n;
  if (a.d1) cfg.d1 = *a.d1;
  if (a.d2) cfg.d2 = *a.d2;
  if (a.alpha) cfg.alpha = *a.alpha;
  if (a.sink) cfg.sink_frame = *a.sink;
  if (a.no_sink) cfg.sink_frame = std::nullopt;
  if (a.pretrained_ctx) {
    cfg.pretrained_ctx = *a.pretrained_ctx;
    lp_set = true;
  }
  if (!lp_set) cfg.pretrained_ctx = cfg.frames;

  if (auto why = cfg.invariant_violation()) {
    throw ValidationFailure{json{{"config", to_json(cfg)}, {"valid", false}, {"error", *why}},
                            "mask: invalid config: " + *why};
  }
  const TsaValidity v = validate_tsa(cfg);
  if (a.validate) {
    std::cerr << "D1(1+1/alpha)=" << detail::format_real(v.value) << (v.valid ? " in " : " not in ") << "["
              << detail::format_real(v.lower) << "," << detail::format_real(v.upper) << "]\n";
    if (!v.valid) {
      throw ValidationFailure{json{{"config", to_json(cfg)}, {"validity", to_json(v)}},
                              "mask: TSA context outside the pre-trained range"};
    }
  }
  const BlockMaskDescriptor d = build_block_mask(cfg);
  json j{{"config", to_json(cfg)},
         {"descriptor", to_json(d)},
         {"validity", to_json(v)},
         {"budget", to_json(mask_budget(d, cfg))}};
  if (!a.pgm.empty()) emit(a.pgm, pgm_bytes(d));
  emit(a.out, dump_stable(j));
  return kExitOk;
}

// ---- probe -----------------------------------------------------------------

struct ProbeArgs {
  std::size_t layers = 4;
  std::size_t dim = 32;
  std::size_t heads = 2;
  std::size_t n = 2;
  std::size_t frames = 21;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> input_seeds = kDefaultInputSeeds;
  std::vector<std::int64_t> shifts = kDefaultShifts;
  std::size_t extension = 2;
  std::optional<std::size_t> window;
  std::int64_t w1 = 6, w2 = 10, g1 = 2, g2 = 4;
  std::string model_name = "synthetic";
  std::string out;
  std::string scores_csv;
  std::string compare;
  std::string probe_logits;
  std::string baseline_logits;
};

void add_probe(CLI::App& app, ProbeArgs& a) {
  auto* c = app.add_subcommand("probe", "Layer sensitivity profile of a seeded synthetic stack (JSON)");
  c->add_option("--layers", a.layers, "Number of layers")->capture_default_str();
  c->add_option("--dim", a.dim, "Model dimension")->capture_default_str();
  c->add_option("--heads", a.heads, "Attention heads")->capture_default_str();
  c->add_option("--n", a.n, "Tokens per frame")->capture_default_str();
  c->add_option("--frames", a.frames, "Base (pre-trained) frame count")->capture_default_str();
  c->add_option("--seed", a.seed, "Stack seed (default: TIERATTN_SEED or 0)");
  c->add_option("--input-seeds", a.input_seeds, "Input seeds, comma separated")->delimiter(',')->capture_default_str();
  c->add_option("--shifts", a.shifts, "Key position shifts, comma separated")->delimiter(',')->capture_default_str();
  c->add_option("--extension", a.extension, "Context extension factor")->capture_default_str();
  c->add_option("--window", a.window, "Sliding window in frames (default frames/2 + 1)");
  c->add_option("--w1", a.w1, "VRPR fine window for the context probe")->capture_default_str();
  c->add_option("--w2", a.w2, "VRPR medium window")->capture_default_str();
  c->add_option("--g1", a.g1, "VRPR medium group")->capture_default_str();
  c->add_option("--g2", a.g2, "VRPR coarse group")->capture_default_str();
  c->add_option("--model-name", a.model_name, "Name recorded in the profile")->capture_default_str();
  c->add_option("--out", a.out, "JSON path for the profile (default stdout)");
  c->add_option("--scores-csv", a.scores_csv, "CSV path for per-layer scores");
  c->add_option("--compare", a.compare, "Profile JSON to rank-correlate against");
  c->add_option("--probe-logits", a.probe_logits, "Imported perturbed logit stack (binary)");
  c->add_option("--baseline-logits", a.baseline_logits, "Imported baseline logit stack (binary)");
}

void print_comparison(const SensitivityProfile& p, const SensitivityProfile& other) {
  std::cout << "spearman_ald=" << detail::format_real(spearman_rho(p.ald, other.ald)) << "\n";
  std::cout << "spearman_ctx_score=" << detail::format_real(spearman_rho(p.ctx_score, other.ctx_score)) << "\n";
}

int run_probe(const ProbeArgs& a) {
  if (!a.probe_logits.empty() || !a.baseline_logits.empty()) {
    if (a.probe_logits.empty() || a.baseline_logits.empty()) {
      throw CLI::ValidationError("--probe-logits", "requires --baseline-logits as well");
    }
    const auto ald = ald_from_logit_stacks(decode_logit_stack(read_file(a.probe_logits)),
                                           decode_logit_stack(read_file(a.baseline_logits)));
    json j{{"model_name", a.model_name},
           {"num_layers", ald.size()},
           {"ald", ald},
           {"pos_sensitive", classify_sensitive(ald)}};
    emit(a.out, dump_stable(j));
    return kExitOk;
  }

  const std::uint64_t seed = a.seed ? *a.seed : default_seed();
  const SyntheticStack s = build_stack(a.layers, a.dim, a.n, seed, a.heads);
  ProbeSettings ps;
  ps.base_frames = a.frames;
  ps.shifts = a.shifts;
  ps.input_seeds = a.input_seeds;
  ps.extension_factor = a.extension;
  ps.vrpr = {a.w1, a.w2, a.g1, a.g2, static_cast<std::int64_t>(a.frames)};
  ps.window = a.window ? *a.window : a.frames / 2 + 1;
  SensitivityProfile p = run_full_probe(s, ps, a.model_name);
  std::ostringstream notes;
  notes << "synthetic stack: layers " << a.layers << ", dim " << a.dim << ", heads " << a.heads
        << ", tokens/frame " << a.n << ", seed " << seed << "; base frames " << a.frames << ", extension "
        << a.extension << ", window " << ps.window;
  p.notes = notes.str();
  emit(a.out, dump_stable(to_json(p)));
  if (!a.scores_csv.empty()) emit(a.scores_csv, scores_csv(p));
  if (!a.compare.empty()) print_comparison(p, load_profile(a.compare));
  return kExitOk;
}

// ---- plan ------------------------------------------------------------------

struct PlanArgs {
  std::string profile;
  std::string preset;
  std::optional<std::size_t> target;
  std::string out;
};

void add_plan(CLI::App& app, PlanArgs& a) {
  auto* c = app.add_subcommand("plan", "Per-layer VRPR / VRPR+TSA plan bundle (JSON)");
  c->add_option("--profile", a.profile, "Profile JSON path, or a shipped name: wan, hunyuan")->required();
  c->add_option("--preset", a.preset, "Shipped preset name")->required();
  c->add_option("--target", a.target, "Override the preset target frame count");
  c->add_option("--out", a.out, "JSON path for the bundle (default stdout)");
}

SensitivityProfile resolve_profile(const std::string& name) {
  if (name == "wan") return profile_from_ordering(wan_ordering());
  if (name == "hunyuan") return profile_from_ordering(hunyuan_ordering());
  return load_profile(name);
}

int run_plan(const PlanArgs& a) {
  const SensitivityProfile prof = resolve_profile(a.profile);
  const Preset& p = find_preset(a.preset);
  const std::size_t target = a.target ? *a.target : p.target_frames;
  TsaConfig tsa = p.tsa;
  tsa.frames = target;
  std::vector<LayerPlan> plans;
  try {
    plans = build_layer_plans(prof.strategy, target, p.vrpr, tsa);
  } catch (const PlanValidationError& e) {
    throw ValidationFailure{json{{"vrpr", to_json(e.vrpr_report)}, {"tsa", to_json(e.tsa_report)}}, e.what()};
  }
  emit(a.out, dump_stable(plan_bundle_json(plans, prof.model_name, p.name, p.vrpr, tsa)));
  return kExitOk;
}

// ---- presets ---------------------------------------------------------------

struct PresetsArgs {
  std::string out;
  std::string export_profiles;
};

void add_presets(CLI::App& app, PresetsArgs& a) {
  auto* c = app.add_subcommand("presets", "List shipped presets with their validation reports (JSON)");
  c->add_option("--out", a.out, "JSON path (default stdout)");
  c->add_option("--export-profiles", a.export_profiles, "Directory to write the shipped Wan/Hunyuan profiles into");
}

int run_presets(const PresetsArgs& a) {
  json list = json::array();
  for (const Preset& p : shipped_presets()) {
    list.push_back({{"name", p.name},
                    {"target_frames", p.target_frames},
                    {"vrpr", to_json(p.vrpr)},
                    {"tsa", to_json(p.tsa)},
                    {"vrpr_report", to_json(validate_vrpr(p.vrpr, p.target_frames))},
                    {"tsa_validity", to_json(validate_tsa(p.tsa))}});
  }
  if (!a.export_profiles.empty()) {
    fs::create_directories(a.export_profiles);
    atomic_write(fs::path(a.export_profiles) / "wan2.1_t2v_1.3b.json",
                 dump_stable(to_json(profile_from_ordering(wan_ordering()))));
    atomic_write(fs::path(a.export_profiles) / "hunyuan_video.json",
                 dump_stable(to_json(profile_from_ordering(hunyuan_ordering()))));
  }
  emit(a.out, dump_stable(list));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tierattn: relative-position remapping, tiered sparse attention masks and layer probing"};
  app.require_subcommand(1);
  RemapArgs remap;
  MaskArgs mask;
  ProbeArgs probe;
  PlanArgs plan;
  PresetsArgs presets;
  add_remap(app, remap);
  add_mask(app, mask);
  add_probe(app, probe);
  add_plan(app, plan);
  add_presets(app, presets);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "remap") return run_remap(remap);
    if (name == "mask") return run_mask(mask);
    if (name == "probe") return run_probe(probe);
    if (name == "plan") return run_plan(plan);
    return run_presets(presets);
  } catch (const ValidationFailure& f) {
    std::cerr << f.message << "\n" << dump_stable(f.report);
    return kExitInvalid;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const SizeGuardError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
