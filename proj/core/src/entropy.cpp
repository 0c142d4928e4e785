#include "ipmc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "ipmc/error.hpp"

namespace ipmc {

namespace {

EntropyReport base_report(const ConditionalHistogram& hist) {
  if (hist.total() == 0) throw Error("entropy of an empty histogram");
  EntropyReport r;
  r.context_set = hist.context_set();
  r.samples_used = hist.total();
  r.nonzero_bins = hist.nonzero_bins();
  r.mm_correction = miller_madow(r.nonzero_bins, r.samples_used);
  r.theoretical_bins = std::pow(static_cast<double>(hist.space().k), static_cast<double>(hist.context_set().size() + 1));
  return r;
}

}  // namespace

double miller_madow(std::uint64_t nonzero_bins, std::uint64_t samples) {
  if (samples == 0) throw Error("Miller-Madow correction needs at least one sample");
  if (nonzero_bins == 0) return 0.0;
  return static_cast<double>(nonzero_bins - 1) / (2.0 * static_cast<double>(samples));
}

EntropyReport entropy(const ConditionalHistogram& hist) {
  EntropyReport r = base_report(hist);
  const double total = static_cast<double>(hist.total());
  double acc = 0.0;
  for (const auto& cell : hist.cells()) {
    const double nc = static_cast<double>(cell.total);
    double h = 0.0;
    for (std::uint64_t n : cell.counts) {
      if (n == 0) continue;
      const double p = static_cast<double>(n) / nc;
      h -= p * std::log2(p);
    }
    acc += nc / total * h;
  }
  r.bits_per_symbol = std::max(0.0, acc);
  return r;
}

std::vector<std::uint64_t> sorted_counts(std::span<const std::uint64_t> counts) {
  std::vector<std::uint64_t> out(counts.begin(), counts.end());
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

EntropyReport code_based_entropy(const ConditionalHistogram& hist, std::span<const CodeShape> codes) {
  if (codes.empty()) throw Error("code_based_entropy needs a nonempty code set");
  for (const auto& c : codes)
    if (!c.complete_for(hist.space().k))
      throw ValidationError("code " + c.to_string() + " is not complete over k=" + std::to_string(hist.space().k));
  EntropyReport r = base_report(hist);
  std::uint64_t bits = 0;
  r.cell_codes.reserve(hist.cells().size());
  for (const auto& cell : hist.cells()) {
    const auto sc = sorted_counts(cell.counts);
    std::uint64_t best = UINT64_MAX;
    int best_i = 0;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const std::uint64_t b = assigned_bits(codes[i], sc);
      if (b < best) {
        best = b;
        best_i = static_cast<int>(i);
      }
    }
    bits += best;
    r.cell_codes.push_back(best_i);
  }
  r.bits_per_symbol = static_cast<double>(bits) / static_cast<double>(hist.total());
  return r;
}

}  // namespace ipmc
