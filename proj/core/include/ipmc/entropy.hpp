#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ipmc/codes.hpp"
#include "ipmc/dataset.hpp"

namespace ipmc {

struct EntropyReport {
  double bits_per_symbol = 0.0;
  ContextSet context_set;
  double mm_correction = 0.0;
  std::uint64_t samples_used = 0;
  /// Joint (context cell, mode) bins with a nonzero count.
  std::uint64_t nonzero_bins = 0;
  /// k^(|contexts|+1): every joint bin that could in principle occur.
  double theoretical_bins = 0.0;
  /// For code-based entropy: index into the code set chosen for each cell.
  std::vector<int> cell_codes;
};

/// Empirical conditional entropy of the mode given the histogram's contexts.
EntropyReport entropy(const ConditionalHistogram& hist);

/// (nonzero_bins - 1) / (2 samples). Throws on samples == 0.
double miller_madow(std::uint64_t nonzero_bins, std::uint64_t samples);

/// Each cell ranks its modes by descending count (ties by mode index) and
/// takes the cheapest code in `codes`; the result is the sample-weighted
/// average length. Throws on an empty code set or an incomplete code.
EntropyReport code_based_entropy(const ConditionalHistogram& hist, std::span<const CodeShape> codes);

/// Counts of one cell sorted nonincreasing.
std::vector<std::uint64_t> sorted_counts(std::span<const std::uint64_t> counts);

}  // namespace ipmc
