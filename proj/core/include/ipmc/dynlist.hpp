#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ipmc/codes.hpp"
#include "ipmc/dataset.hpp"
#include "ipmc/labels.hpp"
#include "ipmc/scheme.hpp"
#include "ipmc/search.hpp"

namespace ipmc {

/// Smaller schedule than tree search: list fitness is far more expensive.
GeneticParams list_genetic_defaults();

/// Scores label orders by the histogram of resolved indexes.
///
/// A candidate is a permutation of the vocabulary. Each observed cell is
/// resolved once per candidate; the index of every sample's mode feeds a
/// k-bin histogram, and the cost is the cheapest code on that histogram.
class IndexEvaluator {
 public:
  /// Throws ValidationError if the vocabulary lacks a numeric mode or a code is incomplete.
  IndexEvaluator(const ConditionalHistogram& hist, const EvalRules& rules, std::vector<Label> vocabulary,
                 std::vector<CodeShape> codes);

  const std::vector<Label>& vocabulary() const noexcept { return vocab_; }
  /// Codes with distinct rank-length vectors, in first-seen order.
  const std::vector<CodeShape>& codes() const noexcept { return codes_; }
  const EvalRules& rules() const noexcept { return rules_; }
  std::uint64_t mass() const noexcept { return mass_; }

  /// Sample count per resolved index for an order of vocabulary indices.
  std::vector<std::uint64_t> index_histogram(std::span<const int> order) const;
  /// Cheapest total over the codes; `code` receives its index.
  std::uint64_t bits(std::span<const int> order, int* code = nullptr) const;
  std::uint64_t bits_for_histogram(std::span<const std::uint64_t> index_hist, int* code = nullptr) const;

  /// Vocabulary indices by descending hit count (ties by vocabulary order).
  std::vector<int> frequency_order() const;
  /// Vocabulary order of `list`: its vocabulary items first (first occurrence),
  /// then the unused vocabulary entries in vocabulary order.
  std::vector<int> order_of(std::span<const Label> list) const;

 private:
  struct CellData {
    std::vector<int> values;                         // per vocabulary label
    std::vector<std::pair<int, std::uint64_t>> modes;  // observed (mode, count)
  };

  EvalRules rules_;
  std::vector<Label> vocab_;
  std::vector<CodeShape> codes_;
  std::vector<std::vector<std::pair<int, int>>> runs_;  // per code: (end rank, length)
  std::vector<CellData> cells_;
  std::uint64_t mass_ = 0;
};

struct ListSearchResult {
  std::vector<Label> list;
  CodeShape code;
  std::uint64_t total_bits = 0;
  /// Bits per IPM (0 for an empty histogram).
  double cost = 0.0;
  /// Best total after initialization, after each generation, and after the sweep.
  std::vector<std::uint64_t> trace;
};

/// Genetic search over label orders, followed by a sweep that moves each
/// label to its best position while that improves the cost. The population
/// starts from the vocabulary order, the frequency order, `warm_lists`, and
/// random orders.
ListSearchResult genetic_list_search(const IndexEvaluator& ev, const GeneticParams& params,
                                     std::span<const std::vector<Label>> warm_lists = {}, bool sweep = true);
ListSearchResult genetic_list_search(const ConditionalHistogram& hist, std::span<const Label> vocabulary,
                                     std::span<const CodeShape> code_set, const GeneticParams& params,
                                     const EvalRules& rules);

struct DynTreeConfig {
  EvalRules rules;
  std::vector<Test> tests;
  int num_leaves = 4;
  int max_depth = 3;
  std::vector<Label> vocabulary;
  std::vector<CodeShape> codes;
  GeneticParams genetic = list_genetic_defaults();
  /// Added to every leaf's starting population.
  std::vector<std::vector<Label>> warm_lists;
};

/// Defaults for k=67: the JEM tests over L and U, the 117-label vocabulary,
/// the dynamic code profile, Keep for unavailable neighbours.
DynTreeConfig jem_dyntree_config();

/// Picks the tree by exhaustive search with three-MPM static labellings as a proxy, then
/// searches one list per leaf on the leaf's share of `hist`.
Scheme build_tree_dynlist(const ConditionalHistogram& hist, const DynTreeConfig& config);

struct PassReport {
  int pass = 0;
  double ref_cost = 0.0;
  double new_cost = 0.0;
  double delta = 0.0;
  /// Samples whose selected mode changed in this pass.
  std::uint64_t flips = 0;
};

struct MultipassParams {
  int passes = 4;
  double lambda = 2.0;
  DynTreeConfig tree;
};

struct MultipassResult {
  std::vector<PassReport> passes;
  Scheme scheme;
};

/// Alternates RD mode selection under the current scheme with rederivation.
/// Contexts stay as recorded; each pass reselects every sample's mode from its
/// rd_candidates, derives a scheme on the reselected data and keeps it only if
/// it beats the current scheme there.
MultipassResult multipass_train(std::span<const Sample> samples, const Scheme& initial, const MultipassParams& params);

}  // namespace ipmc
