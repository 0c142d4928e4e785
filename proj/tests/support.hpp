#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "ipmc/dataset.hpp"
#include "ipmc/random.hpp"

namespace testing {

using namespace ipmc;

// Independent samples with random L/U (and sometimes other) contexts; -1 appears at ~10%.
inline std::vector<Sample> random_samples(const SymbolSpace& space, std::size_t n, std::uint64_t seed,
                                          int ctx_range = 0) {
  Rng rng(seed);
  const int range = ctx_range > 0 ? ctx_range : space.k;
  auto ctx = [&] { return rng.chance(0.1) ? kUnavailable : static_cast<int>(rng.below(range)); };
  std::vector<Sample> out(n);
  for (auto& s : out) {
    s.ctx = ContextTuple(ctx(), ctx(), ctx(), ctx(), ctx());
    // Skew the mode towards L so the data has structure.
    if (s.ctx[Context::L] >= 0 && rng.chance(0.4))
      s.ipm = s.ctx[Context::L];
    else
      s.ipm = static_cast<int>(rng.below(space.k));
  }
  return out;
}

inline std::vector<Sample> small_synth(const SymbolSpace& space, int w, int h, std::uint64_t seed,
                                       int rd_alternates = 0) {
  SynthParams p;
  p.width = w;
  p.height = h;
  p.seed = seed;
  p.rd_alternates = rd_alternates;
  return synth_dataset(space, p);
}

// Straight double loop over a map keyed by the projected context values.
inline double naive_conditional_entropy(const std::vector<Sample>& samples, const std::vector<Context>& ctxs) {
  std::map<std::vector<int>, std::map<int, double>> joint;
  for (const auto& s : samples) {
    std::vector<int> key;
    for (Context c : ctxs) key.push_back(s.ctx[c]);
    joint[key][s.ipm] += 1.0;
  }
  const double n = static_cast<double>(samples.size());
  double h = 0.0;
  for (const auto& [key, modes] : joint) {
    double cell = 0.0;
    for (const auto& [m, c] : modes) cell += c;
    for (const auto& [m, c] : modes) h -= (c / n) * std::log2(c / cell);
  }
  return h;
}

}  // namespace testing
