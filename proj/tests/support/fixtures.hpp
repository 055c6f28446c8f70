#pragma once

#include <random>
#include <vector>

#include "ahl/attack.hpp"
#include "ahl/structured_mask.hpp"

namespace ahl::testing {

// Random AttackResult with a consistent mask/hamming pair. Skipped results
// keep the all-ones mask, mirroring what hack_attend returns for
// misclassified samples.
inline AttackResult random_attack_result(std::mt19937_64& rng, const MaskDims& d) {
  AttackResult r;
  const auto base = expand_base(d.layers, d.heads, d.seq);
  r.final_mask = base;
  const auto pick = rng() % 3;
  r.status = pick == 0 ? AttackStatus::success : pick == 1 ? AttackStatus::fail : AttackStatus::skipped;
  if (r.status == AttackStatus::skipped) return r;
  const int steps = 1 + static_cast<int>(rng() % 4);
  for (int s = 0; s < steps; ++s) {
    UnitSelection sel;
    sel.layer = static_cast<int>(rng() % d.layers);
    sel.head = static_cast<int>(rng() % d.heads);
    const int cells = 1 + static_cast<int>(rng() % (d.seq * d.seq));
    for (int c = 0; c < cells; ++c)
      sel.cells.push_back({static_cast<int>(rng() % d.seq), static_cast<int>(rng() % d.seq)});
    const auto out = apply_selection(r.final_mask, sel);
    r.final_mask = out.mask;
    r.trace.push_back({sel.layer, sel.head, static_cast<int>(out.zeroed.size()), static_cast<int>(out.safeguard_hits), 0, 0.5});
  }
  r.hamming = hamming(base, r.final_mask);
  r.candidate_queries = static_cast<long>(r.trace.size());
  r.scoring_queries = static_cast<long>(rng() % 20);
  r.wall_time_s = static_cast<double>(rng() % 1000) * 1e-4;
  return r;
}

inline std::vector<AttackResult> random_attack_results(std::mt19937_64& rng, std::size_t n) {
  const MaskDims d{1 + static_cast<int>(rng() % 4), 1 + static_cast<int>(rng() % 4), 2 + static_cast<int>(rng() % 6)};
  std::vector<AttackResult> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_attack_result(rng, d));
  return out;
}

}  // namespace ahl::testing
