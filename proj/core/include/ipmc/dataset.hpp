#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ipmc/symbols.hpp"

namespace ipmc {

/// A candidate mode considered by the encoder and its distortion.
struct RdCandidate {
  int mode = 0;
  double distortion = 0.0;

  friend bool operator==(const RdCandidate&, const RdCandidate&) = default;
};

/// One coded block: its chosen mode and the modes of its five neighbours.
struct Sample {
  int ipm = 0;
  ContextTuple ctx;
  /// Used only by the multi-pass trainer.
  std::vector<RdCandidate> rd_candidates;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Throws ValidationError if the sample violates the space's bounds or the
/// rd_candidates contract.
void validate_sample(const Sample& s, const SymbolSpace& space);

/// Counts of each mode per context cell, for one conditioning context set.
///
/// Cells are kept sorted by their projected context tuple so every traversal
/// is deterministic. Counts are plain integers: probabilities are empirical
/// frequencies without smoothing.
class ConditionalHistogram {
 public:
  struct Cell {
    ContextTuple key;  ///< Coordinates outside the context set hold kAbsent.
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;
  };

  ConditionalHistogram(SymbolSpace space, ContextSet context_set);

  /// Throws Error on an empty sample sequence.
  static ConditionalHistogram build(std::span<const Sample> samples, const SymbolSpace& space,
                                    const ContextSet& context_set);

  const SymbolSpace& space() const noexcept { return space_; }
  const ContextSet& context_set() const noexcept { return context_set_; }
  const std::vector<Cell>& cells() const noexcept { return cells_; }
  std::uint64_t total() const noexcept { return total_; }

  /// Cell for a (raw, unprojected) context tuple, or nullptr.
  const Cell* find(const ContextTuple& ctx) const;

  /// Marginalizes onto a subset of this histogram's contexts.
  ConditionalHistogram project(const ContextSet& subset) const;

  /// Number of joint (cell, mode) bins with a nonzero count.
  std::uint64_t nonzero_bins() const;

  /// Sum of all cells' count vectors.
  std::vector<std::uint64_t> marginal() const;

 private:
  friend class HistogramBuilder;
  SymbolSpace space_;
  ContextSet context_set_;
  std::vector<Cell> cells_;
  std::uint64_t total_ = 0;
};

/// Accumulates counts and produces a sorted ConditionalHistogram.
class HistogramBuilder {
 public:
  HistogramBuilder(SymbolSpace space, ContextSet context_set);
  /// `ctx` is the raw tuple; projection onto the context set happens here.
  void add(const ContextTuple& ctx, int ipm, std::uint64_t count = 1);
  ConditionalHistogram finish() &&;

 private:
  SymbolSpace space_;
  ContextSet context_set_;
  std::vector<ConditionalHistogram::Cell> cells_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::uint64_t total_ = 0;
};

/// Packs a tuple with fields in [-2, 253] into an integer key.
std::uint64_t pack_tuple(const ContextTuple& t) noexcept;

// ---------------------------------------------------------------------------
// Sample files

/// Reads the CSV sample format (`ipm,L,U,BL,UR,UL[,cand0,d0,...]`).
std::vector<Sample> read_samples_csv(std::istream& in, const SymbolSpace& space);
void write_samples_csv(std::ostream& out, std::span<const Sample> samples);

/// Fixed-width little-endian binary form, magic `IPMS`.
std::vector<Sample> read_samples_binary(std::istream& in, const SymbolSpace& space);
void write_samples_binary(std::ostream& out, std::span<const Sample> samples, const SymbolSpace& space);

/// Loads either form, detected from the magic bytes.
std::vector<Sample> load_samples(const std::filesystem::path& path, const SymbolSpace& space);
/// Writes the binary form when the extension is `.ipms`, CSV otherwise.
void save_samples(const std::filesystem::path& path, std::span<const Sample> samples, const SymbolSpace& space);

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthParams {
  int width = 64;
  int height = 64;
  double copy_prob = 0.45;
  double jitter_prob = 0.2;
  double nonangular_prob = 0.2;
  std::uint64_t seed = 1;
  /// Number of alternate RD candidates attached to each sample (0 = none).
  int rd_alternates = 0;
  /// Mean of the exponential distortion gap between the chosen mode and an alternate.
  double rd_gap_mean = 4.0;

  /// Throws ValidationError on invalid probabilities or a grid below 2x2.
  void validate() const;
};

/// Raster-scan generator with spatially correlated modes.
///
/// Each block's mode is drawn as: with copy_prob a random available neighbour
/// mode (L, U, UL, UR); with jitter_prob such a neighbour offset by +-1/+-2 with
/// angular wrap (non-angular neighbours are copied unchanged); with
/// nonangular_prob planar or DC; otherwise uniform over angular modes. When no
/// neighbour is available the copy and jitter draws fall back to the uniform
/// angular draw. BL is never decoded before the current block in raster order,
/// so it is always unavailable.
std::vector<Sample> synth_dataset(const SymbolSpace& space, const SynthParams& params);

}  // namespace ipmc
