#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ipmc/codes.hpp"
#include "ipmc/dataset.hpp"
#include "ipmc/symbols.hpp"

namespace ipmc {

/// A predictor mapping a context tuple to a mode.
struct Label {
  enum class Kind : std::uint8_t {
    Numeric,         ///< constant mode `value`
    Ctx,             ///< context `ctx` plus offset `value` (0 for the plain context)
    Min,             ///< min(L,U) plus offset `value`
    Max,             ///< max(L,U) plus offset `value`
    AbsOneMinusMin,  ///< |1 - min(L,U)|
    Mean,            ///< (L+U)/2, angular L and U only
    Derived,         ///< +-1 of the angular modes already emitted; dynamic lists only
  };

  Kind kind = Kind::Numeric;
  Context ctx = Context::L;
  int value = 0;

  static Label numeric(int m) { return {Kind::Numeric, Context::L, m}; }
  static Label context(Context c, int offset = 0) { return {Kind::Ctx, c, offset}; }
  static Label min(int offset = 0) { return {Kind::Min, Context::L, offset}; }
  static Label max(int offset = 0) { return {Kind::Max, Context::L, offset}; }
  static Label abs_one_minus_min() { return {Kind::AbsOneMinusMin, Context::L, 0}; }
  static Label mean() { return {Kind::Mean, Context::L, 0}; }
  static Label derived() { return {Kind::Derived, Context::L, 0}; }

  /// Bit mask of the contexts this label reads.
  std::uint8_t context_mask() const noexcept;

  /// `L`, `U+2`, `min`, `max-1`, `|1-min|`, `mean`, `#26`, `derived`.
  std::string to_string() const;
  static Label parse(std::string_view text);

  friend bool operator==(const Label&, const Label&) = default;
};

using Labelling = std::vector<Label>;

/// Evaluates a label on a tuple to which the unavailability rule has already
/// been applied. Returns kUnavailable when the label has no value.
int eval_label(const Label& label, const ContextTuple& ctx, const EvalRules& rules);

/// Convenience overload: raw tuple, -1 kept as unavailable, no wrap of planar/DC offsets.
int eval_label(const Label& label, const ContextTuple& ctx, const SymbolSpace& space);

std::string labelling_to_string(std::span<const Label> labelling);
/// Comma separated labels.
Labelling parse_labelling(std::string_view text);

struct Compatibility {
  bool valid = true;
  /// First conflicting pair (first == second when one label is unavailable or illegal alone).
  int first = -1;
  int second = -1;
  /// Index into the checked cells where the conflict shows, or -1 for a structural conflict.
  long cell = -1;
};

/// Checks that every label is available and all are pairwise distinct on every
/// cell. Cells are raw tuples; `rules` is applied before evaluation.
Compatibility check_compatibility(std::span<const Label> labelling, std::span<const ContextTuple> cells,
                                  const EvalRules& rules);

// ---------------------------------------------------------------------------
// Greedy label search

/// Input of the queue search, independent of how hits and conflicts were measured.
struct LabelProblem {
  /// Candidate hit counts (samples whose mode equals the label's value).
  std::vector<std::uint64_t> hits;
  /// Samples in the leaf.
  std::uint64_t mass = 0;
  /// True when labels i and j (i < j) collide on some cell of the leaf.
  std::function<bool(int, int)> conflict;
  /// True when label i has no value on some cell of the leaf.
  std::function<bool(int)> unavailable;
};

struct LabelSearchResult {
  bool found = false;
  /// Candidate indices in MPM slot order.
  std::vector<int> labels;
  /// Bits spent on the leaf's samples.
  std::uint64_t bits = 0;
  /// bits / mass (0 for an empty leaf).
  double cost = 0.0;
  /// Number of lists popped from the queue.
  std::size_t pops = 0;
};

/// Queue search over candidate lists.
///
/// Candidates are ranked by hits (ties by candidate order). A node is an
/// exclusion set; its list is the top-M ranked candidates outside it, placed
/// in slot order so the most frequent label takes the shortest codeword. The
/// cheapest node is popped first; a conflicting pair spawns one child per
/// member excluded, an unavailable label spawns a single child. The first
/// valid list popped is returned and is minimal whenever every MPM length is
/// at most the shortest remainder length. With several remainder groups the
/// shortest one prices every miss.
///
/// `pop_trace`, when given, receives the cost of each popped list.
LabelSearchResult greedy_label_search(const LabelProblem& problem, const CodeShape& shape,
                                      std::vector<std::uint64_t>* pop_trace = nullptr);

/// Leaf-level form: hits come from `hist` on `leaf_cells`, conflicts are
/// checked on the same cells.
LabelSearchResult greedy_label_search(std::span<const ContextTuple> leaf_cells, const ConditionalHistogram& hist,
                                      std::span<const Label> candidates, const CodeShape& shape,
                                      const EvalRules& rules);

// ---------------------------------------------------------------------------
// Presets

/// L, U, L+1, L-1, #0, #1, #26.
std::vector<Label> hevc_labels();
/// 35 labels: L/U offsets up to 3, #0, #1, #26, #18, #2, and the min/max families with |1-min| and mean.
std::vector<Label> extended_hevc_labels();
/// The five contexts, their +-1 offsets, and #0, #1, #50, #18, #34, #2.
std::vector<Label> jem_labels();
/// k numerics followed by the five contexts with offsets +-1..+-4 (45 entries)
/// and min, max, |1-min|, mean, max+1 (117 entries for k=67).
std::vector<Label> dynlist_vocabulary(const SymbolSpace& space);

/// Preset by name: hevc, hevc-ext, jem, dyn.
std::vector<Label> label_preset(std::string_view name, const SymbolSpace& space);

}  // namespace ipmc
