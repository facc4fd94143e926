#pragma once

// File formats.
//
// JSON is written with sorted keys, two-space indent and every non-integral
// number as %.17g so outputs are byte-stable. Integral-valued doubles print
// without a fraction ("20"), which readers accept as reals.
//
// Logit stack binary (little-endian):
//   bytes 0..7   magic "TALOGIT1"
//   u64          num_layers
//   u64          rows
//   u64          cols
//   f64[...]     num_layers * rows * cols values, layer-major, row-major

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tierattn/block_mask.hpp"
#include "tierattn/error.hpp"
#include "tierattn/matrix.hpp"
#include "tierattn/probing.hpp"
#include "tierattn/tsa.hpp"
#include "tierattn/vrpr.hpp"

namespace tierattn {

using json = nlohmann::json;

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string format_real(double x) {
  if (!std::isfinite(x)) return "null";
  if (x == std::floor(x) && std::abs(x) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", x);
    return std::strcmp(buf, "-0") == 0 ? "0" : buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void dump_value(const json& j, std::string& out, int depth) {
  const std::string pad(static_cast<std::size_t>(depth + 1) * 2, ' ');
  const std::string close(static_cast<std::size_t>(depth) * 2, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {  // std::map order: sorted
        if (!first) out += ",\n";
        first = false;
        out += pad + json(it.key()).dump() + ": ";
        dump_value(it.value(), out, depth + 1);
      }
      out += "\n" + close + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // scalar arrays stay on one line
      bool scalars = true;
      for (const auto& e : j) scalars = scalars && !e.is_structured();
      if (scalars) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          dump_value(j[i], out, depth + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        dump_value(j[i], out, depth + 1);
      }
      out += "\n" + close + "]";
      return;
    }
    case json::value_t::number_float:
      out += format_real(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

}  // namespace detail

inline std::string dump_stable(const json& j) {
  std::string out;
  detail::dump_value(j, out, 0);
  out += "\n";
  return out;
}

/// Writes to "<path>.tmp" then renames over path.
inline void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(what + ": " + e.what());
  }
}

// ---- configs ---------------------------------------------------------------

inline json to_json(const VrprConfig& c) {
  return {{"w1", c.w1}, {"w2", c.w2}, {"g1", c.g1}, {"g2", c.g2}, {"pretrained_len", c.pretrained_len}};
}

inline VrprConfig vrpr_config_from_json(const json& j) {
  try {
    return {j.at("w1").get<std::int64_t>(), j.at("w2").get<std::int64_t>(),
            j.at("g1").get<std::int64_t>(), j.at("g2").get<std::int64_t>(),
            j.at("pretrained_len").get<std::int64_t>()};
  } catch (const json::exception& e) {
    throw IoError(std::string("VRPR config: ") + e.what());
  }
}

inline json to_json(const TsaConfig& c) {
  return {{"d1", c.d1},
          {"d2", c.d2},
          {"alpha", c.alpha},
          {"tokens_per_frame", c.tokens_per_frame},
          {"frames", c.frames},
          {"sink_frame", c.sink_frame ? json(*c.sink_frame) : json(nullptr)},
          {"pretrained_ctx", c.pretrained_ctx}};
}

inline TsaConfig tsa_config_from_json(const json& j) {
  try {
    TsaConfig c;
    c.d1 = j.at("d1").get<std::size_t>();
    c.d2 = j.at("d2").get<std::size_t>();
    c.alpha = j.at("alpha").get<double>();
    c.tokens_per_frame = j.at("tokens_per_frame").get<std::size_t>();
    c.frames = j.at("frames").get<std::size_t>();
    const json& s = j.at("sink_frame");
    c.sink_frame = s.is_null() ? std::nullopt : std::optional<std::size_t>(s.get<std::size_t>());
    c.pretrained_ctx = j.at("pretrained_ctx").get<std::size_t>();
    return c;
  } catch (const json::exception& e) {
    throw IoError(std::string("TSA config: ") + e.what());
  }
}

inline json to_json(const RemapReport& r) {
  return {{"max_mapped", r.max_mapped},
          {"theoretical_max", r.theoretical_max},
          {"valid", r.valid},
          {"target_len", r.target_len},
          {"pretrained_len", r.pretrained_len}};
}

inline json to_json(const TsaValidity& v) {
  return {{"value", v.value},
          {"lower", v.lower},
          {"upper", v.upper},
          {"valid", v.valid},
          {"effective_tokens", v.effective_tokens},
          {"token_limit", v.token_limit},
          {"token_budget_ok", v.token_budget_ok}};
}

inline json to_json(const MaskBudget& b) {
  return {{"local_tokens", b.local_tokens},
          {"mid_tokens", b.mid_tokens},
          {"pruned_tokens", b.pruned_tokens},
          {"sink_tokens", b.sink_tokens},
          {"per_query_max", b.per_query_max},
          {"mid_sides", b.mid_sides},
          {"n_local", b.n_local},
          {"local_to_mid_ratio", b.local_to_mid_ratio}};
}

// ---- block mask descriptor -------------------------------------------------

inline json to_json(const BlockMaskDescriptor& d) {
  return {{"frames", d.frames},
          {"tokens_per_frame", d.tokens_per_frame},
          {"stripe_width", d.stripe_width},
          {"sink_frame", d.sink_frame ? json(*d.sink_frame) : json(nullptr)},
          {"pattern", d.pattern_code()}};
}

inline BlockMaskDescriptor block_mask_from_json(const json& j) {
  try {
    BlockMaskDescriptor d;
    d.frames = j.at("frames").get<std::size_t>();
    d.tokens_per_frame = j.at("tokens_per_frame").get<std::size_t>();
    d.stripe_width = j.at("stripe_width").get<std::size_t>();
    const json& s = j.at("sink_frame");
    if (!s.is_null()) d.sink_frame = s.get<std::size_t>();
    const auto code = j.at("pattern").get<std::string>();
    if (code.size() != d.frames * d.frames) throw IoError("pattern length != frames^2");
    d.pattern = Matrix<BlockKind>(d.frames, d.frames);
    for (std::size_t i = 0; i < code.size(); ++i) d.pattern.values()[i] = block_kind_from_code(code[i]);
    return d;
  } catch (const json::exception& e) {
    throw IoError(std::string("mask descriptor: ") + e.what());
  }
}

// ---- profiles --------------------------------------------------------------

inline json to_json(const SensitivityProfile& p) {
  json strategies = json::array();
  for (Strategy s : p.strategy) strategies.push_back(std::string(strategy_name(s)));
  json j{{"model_name", p.model_name},
         {"num_layers", p.num_layers},
         {"ald", p.ald},
         {"ctx_score", p.ctx_score},
         {"pos_sensitive", p.pos_sensitive},
         {"ctx_sensitive", p.ctx_sensitive},
         {"strategy", strategies}};
  if (p.notes) j["notes"] = *p.notes;
  return j;
}

inline SensitivityProfile profile_from_json(const json& j) {
  try {
    SensitivityProfile p;
    p.model_name = j.at("model_name").get<std::string>();
    p.num_layers = j.at("num_layers").get<std::size_t>();
    p.ald = j.at("ald").get<std::vector<double>>();
    p.ctx_score = j.at("ctx_score").get<std::vector<double>>();
    p.pos_sensitive = j.at("pos_sensitive").get<std::vector<bool>>();
    p.ctx_sensitive = j.at("ctx_sensitive").get<std::vector<bool>>();
    for (const auto& s : j.at("strategy")) p.strategy.push_back(strategy_from_name(s.get<std::string>()));
    if (j.contains("notes")) p.notes = j.at("notes").get<std::string>();
    const std::size_t n = p.num_layers;
    if (p.ald.size() != n || p.ctx_score.size() != n || p.pos_sensitive.size() != n ||
        p.ctx_sensitive.size() != n || p.strategy.size() != n) {
      throw IoError("profile: per-layer arrays must all have num_layers entries");
    }
    return p;
  } catch (const json::exception& e) {
    throw IoError(std::string("profile: ") + e.what());
  }
}

inline SensitivityProfile load_profile(const std::filesystem::path& path) {
  return profile_from_json(parse_json(read_file(path), path.string()));
}

// ---- layer plans -----------------------------------------------------------

inline json to_json(const ZonedPositions& z) {
  json j = json::object();
  const auto sets = z.sets();
  if (!z.config()) {
    j["identity"] = {{"p_q", sets[0].q}, {"p_k", sets[0].k}};
    return j;
  }
  for (std::size_t i = 0; i < sets.size(); ++i) {
    j[std::string(zone_name(kAllZones[i]))] = {{"p_q", sets[i].q}, {"p_k", sets[i].k}};
  }
  return j;
}

/// Positions are shared by every plan and emitted once; masked plans all use
/// the same descriptor, also emitted once.
inline json plan_bundle_json(const std::vector<LayerPlan>& plans, std::string_view model_name,
                             std::string_view preset, const VrprConfig& vrpr,
                             const TsaConfig& tsa) {
  json layers = json::array();
  std::size_t masked = 0;
  const BlockMaskDescriptor* mask = nullptr;
  for (const LayerPlan& p : plans) {
    layers.push_back({{"layer", p.layer},
                      {"strategy", std::string(strategy_name(p.strategy))},
                      {"masked", p.mask.has_value()}});
    if (p.mask) {
      ++masked;
      mask = &*p.mask;
    }
  }
  json j{{"model_name", model_name},
         {"preset", preset},
         {"target_frames", plans.empty() ? tsa.frames : plans.front().positions.frames()},
         {"vrpr", to_json(vrpr)},
         {"tsa", to_json(tsa)},
         {"plans", layers},
         {"masked_plans", masked},
         {"positions", plans.empty() ? json(nullptr) : to_json(plans.front().positions)},
         {"mask", mask ? to_json(*mask) : json(nullptr)}};
  return j;
}

// ---- CSV -------------------------------------------------------------------

/// One row per query frame, comma-separated, trailing newline.
inline std::string int_matrix_csv(const IntMatrix& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += std::to_string(m(r, c));
    }
    out += '\n';
  }
  return out;
}

/// "layer,metric,value" rows for both score vectors.
inline std::string scores_csv(const SensitivityProfile& p) {
  std::string out = "layer,metric,value\n";
  for (std::size_t l = 0; l < p.num_layers; ++l) {
    out += std::to_string(l) + ",ald," + detail::format_real(p.ald[l]) + "\n";
  }
  for (std::size_t l = 0; l < p.num_layers; ++l) {
    out += std::to_string(l) + ",ctx_score," + detail::format_real(p.ctx_score[l]) + "\n";
  }
  return out;
}

inline std::string pgm_bytes(const BlockMaskDescriptor& d) {
  std::ostringstream s(std::ios::binary);
  write_pgm(s, materialize_mask(d));
  return s.str();
}

// ---- logit stack binary ----------------------------------------------------

inline constexpr char kLogitMagic[8] = {'T', 'A', 'L', 'O', 'G', 'I', 'T', '1'};

namespace detail {
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}
}  // namespace detail

inline std::string encode_logit_stack(const std::vector<RealMatrix>& layers) {
  std::string out(kLogitMagic, sizeof kLogitMagic);
  const std::size_t rows = layers.empty() ? 0 : layers.front().rows();
  const std::size_t cols = layers.empty() ? 0 : layers.front().cols();
  detail::put_u64(out, layers.size());
  detail::put_u64(out, rows);
  detail::put_u64(out, cols);
  for (const RealMatrix& m : layers) {
    if (m.rows() != rows || m.cols() != cols) throw DimensionError("logit stack: ragged layers");
    for (double x : m.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

inline std::vector<RealMatrix> decode_logit_stack(const std::string& bytes) {
  constexpr std::size_t header = sizeof kLogitMagic + 24;
  if (bytes.size() < header || std::memcmp(bytes.data(), kLogitMagic, sizeof kLogitMagic) != 0) {
    throw IoError("logit stack: bad magic or truncated header");
  }
  const std::uint64_t layers = detail::get_u64(bytes, 8);
  const std::uint64_t rows = detail::get_u64(bytes, 16);
  const std::uint64_t cols = detail::get_u64(bytes, 24);
  if (rows != 0 && cols > (bytes.size() / 8) / rows) throw IoError("logit stack: truncated payload");
  const std::uint64_t per = rows * cols;
  if (per != 0 && layers > (bytes.size() - header) / 8 / per) {
    throw IoError("logit stack: truncated payload");
  }
  if (bytes.size() != header + layers * per * 8) throw IoError("logit stack: payload size mismatch");
  std::vector<RealMatrix> out;
  out.reserve(layers);
  std::size_t at = header;
  for (std::uint64_t l = 0; l < layers; ++l) {
    RealMatrix m(rows, cols);
    for (double& x : m.values()) {
      x = std::bit_cast<double>(detail::get_u64(bytes, at));
      at += 8;
    }
    out.push_back(std::move(m));
  }
  return out;
}

/// Per-layer ALD between two imported logit stacks of identical shape.
inline std::vector<double> ald_from_logit_stacks(const std::vector<RealMatrix>& probe,
                                                 const std::vector<RealMatrix>& orig) {
  if (probe.size() != orig.size()) throw DimensionError("logit stacks differ in layer count");
  std::vector<double> out;
  out.reserve(probe.size());
  for (std::size_t l = 0; l < probe.size(); ++l) {
    out.push_back(attention_logits_difference(probe[l], orig[l]));
  }
  return out;
}

}  // namespace tierattn
