#pragma once

// Published layer sensitivity orderings for two video DiTs, most sensitive
// first. Only the orderings exist, so per-layer scores are rank surrogates:
// a listed layer at rank r (0-based) of a k-long list scores k - r, unlisted
// layers score 0. Ranking, top-k marking and strategy assignment reproduce the
// published lists exactly from these surrogates.

#include <cstddef>
#include <string>
#include <vector>

#include "tierattn/error.hpp"
#include "tierattn/probing.hpp"

namespace tierattn {

struct PublishedOrdering {
  std::string model_name;
  std::size_t num_layers = 0;
  std::vector<std::size_t> position_sensitive;  // descending sensitivity
  std::vector<std::size_t> context_sensitive;   // descending sensitivity
  std::size_t tsa_layers = 0;                   // top context-sensitive layers given VRPR+TSA
  std::string notes;
};

inline const PublishedOrdering& wan_ordering() {
  static const PublishedOrdering o{
      "Wan2.1-T2V-1.3B",
      30,
      {28, 1, 29, 0, 27, 26, 21, 17, 20, 12, 16, 14, 8, 4, 13, 19, 10, 23, 5, 3},
      {18, 24, 13, 23, 22, 10, 15, 6, 11, 25, 2, 4, 16, 29, 7, 8, 12, 9, 3, 21},
      15,
      "context list is printed with a line break and no comma between 12 and 9; read as "
      "two entries, giving the stated 20"};
  return o;
}

inline const PublishedOrdering& hunyuan_ordering() {
  static const PublishedOrdering o{
      "HunyuanVideo",
      60,
      {58, 59, 31, 6, 54, 21, 37, 29, 47, 18, 28, 10, 1, 24, 3, 35, 41, 14, 52, 27,
       9, 43, 17, 33, 48, 2, 23, 50, 11, 38, 4, 25, 40, 15, 0, 7, 56, 20, 46, 32},
      {1, 2, 45, 29, 5, 13, 38, 59, 11, 34, 47, 16, 0, 53, 21, 41, 8, 30, 55, 19,
       4, 49, 26, 42, 12, 57, 23, 25, 36, 51, 15, 39, 7, 22, 44, 18, 32, 9, 27, 35},
      30,
      "first 30 context-sensitive layers take VRPR+TSA"};
  return o;
}

inline std::vector<double> rank_surrogate_scores(const std::vector<std::size_t>& order,
                                                 std::size_t num_layers) {
  std::vector<double> s(num_layers, 0.0);
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (order[r] >= num_layers) throw ConfigError("ordering lists a layer out of range");
    s[order[r]] = static_cast<double>(order.size() - r);
  }
  return s;
}

inline SensitivityProfile profile_from_ordering(const PublishedOrdering& o) {
  const double n = static_cast<double>(o.num_layers);
  ProfileFractions fr;
  fr.pos = static_cast<double>(o.position_sensitive.size()) / n;
  fr.ctx = static_cast<double>(o.context_sensitive.size()) / n;
  fr.tsa = static_cast<double>(o.tsa_layers) / n;
  SensitivityProfile p = make_profile(o.model_name,
                                      rank_surrogate_scores(o.position_sensitive, o.num_layers),
                                      rank_surrogate_scores(o.context_sensitive, o.num_layers), fr);
  p.notes = o.notes;
  return p;
}

}  // namespace tierattn
