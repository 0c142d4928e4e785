#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ipmc/codes.hpp"
#include "ipmc/dataset.hpp"
#include "ipmc/labels.hpp"
#include "ipmc/scheme.hpp"

namespace ipmc {

inline constexpr std::uint64_t kInfeasible = std::numeric_limits<std::uint64_t>::max();

struct GeneticParams {
  int population = 32;
  int children_per_parent = 4;
  /// Per-cell reassignment probability for cell clustering.
  double mutation_rate = 0.02;
  int iterations = 2000;
  std::uint64_t seed = 1;
  /// Fitness workers; <= 0 uses default_threads().
  int threads = 0;

  void validate() const;
};

struct SearchConfig {
  EvalRules rules;
  std::vector<Test> test_set;
  std::vector<Label> label_set;
  std::vector<CodeShape> code_set;
  int max_leaves = 8;
  int max_depth = 4;
  bool multi_code = true;
  GeneticParams genetic;
};

/// HEVC profile: 4 tests, 7 labels, 2+3+3+(6x32) only.
SearchConfig hevc_search_config();
/// Extended HEVC profile: 14 tests, 35 labels, the static enumeration for k=35.
SearchConfig extended_hevc_search_config();
/// JEM profile for static trees: L/U tests, the L/U labels and numerics, the static enumeration for k=67.
SearchConfig jem_search_config();

/// Bitset over the cells of a LeafEvaluator.
struct CellSet {
  std::vector<std::uint64_t> words;

  bool empty() const noexcept;
  std::size_t count() const noexcept;
  bool test(std::size_t i) const noexcept { return (words[i >> 6] >> (i & 63)) & 1; }
  void set(std::size_t i) noexcept { words[i >> 6] |= std::uint64_t{1} << (i & 63); }
  void reset(std::size_t i) noexcept { words[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
  friend bool operator==(const CellSet&, const CellSet&) = default;
};

struct CellSetHash {
  std::size_t operator()(const CellSet& s) const noexcept;
};

/// Best static labelling per code for one leaf.
struct LeafResult {
  std::uint64_t mass = 0;
  /// Bits per code index; kInfeasible when no valid labelling exists.
  std::vector<std::uint64_t> bits;
  /// Candidate indices in slot order, per code.
  std::vector<std::vector<int>> labels;
  std::uint64_t best_bits = kInfeasible;
  int best_code = -1;
};

/// Shared, cached leaf scoring for tree and cluster searches.
///
/// In grid mode the cells are every combination of the routing contexts ({L,U}
/// plus whatever the tests read), so a labelling accepted for a leaf is valid
/// for every tuple that can reach it, observed or not. Labels that read other
/// contexts can never be valid there and are dropped. In observed mode the
/// cells are the histogram's nonempty cells only.
class LeafEvaluator {
 public:
  enum class Universe { Grid, Observed };

  LeafEvaluator(const ConditionalHistogram& hist, const EvalRules& rules, std::vector<Test> tests,
                std::vector<Label> labels, std::vector<CodeShape> codes, Universe universe = Universe::Grid);

  std::size_t cell_count() const noexcept { return cells_.size(); }
  /// Applied context tuple of a cell.
  const ContextTuple& cell(std::size_t i) const { return cells_[i]; }
  /// Samples per mode of a cell (empty vector for unobserved grid cells).
  std::span<const std::uint64_t> counts(std::size_t i) const;
  std::uint64_t cell_mass(std::size_t i) const;

  const EvalRules& rules() const noexcept { return rules_; }
  const std::vector<Test>& tests() const noexcept { return tests_; }
  const std::vector<Label>& labels() const noexcept { return labels_; }
  const std::vector<CodeShape>& codes() const noexcept { return codes_; }

  CellSet all() const;
  CellSet none() const;
  /// Cells of `s` on which test `t` is `value`.
  CellSet split(const CellSet& s, int t, bool value) const;

  /// Thread-safe and cached by cell set.
  std::shared_ptr<const LeafResult> leaf(const CellSet& s) const;

  std::size_t cache_size() const;

 private:
  LeafResult compute(const CellSet& s) const;

  EvalRules rules_;
  std::vector<Test> tests_;
  std::vector<Label> labels_;
  std::vector<CodeShape> codes_;
  std::vector<ContextTuple> cells_;
  std::vector<int> observed_slot_;                 // cell -> slot or -1
  std::vector<std::vector<std::uint64_t>> counts_;  // slot -> per-mode counts
  std::vector<std::uint64_t> slot_mass_;
  std::vector<std::vector<std::uint64_t>> slot_hits_;  // slot -> per-label hits
  std::vector<CellSet> test_true_;
  std::vector<CellSet> unavailable_;               // label -> cells without a value
  std::vector<CellSet> collide_;                   // pair index -> cells where two labels agree
  std::size_t words_ = 0;

  mutable std::mutex mutex_;
  mutable std::unordered_map<CellSet, std::shared_ptr<const LeafResult>, CellSetHash> cache_;
};

/// Tree over test indices; nodes with test < 0 are leaves.
struct SearchTree {
  struct Node {
    int test = -1;
    int on_true = -1;
    int on_false = -1;
  };
  std::vector<Node> nodes;  ///< nodes[0] is the root

  static SearchTree leaf();
  int leaf_count() const;
  int depth() const;
  /// Preorder test indices, used for deterministic tie-breaks.
  std::string key() const;
};

struct SearchResult {
  bool feasible = false;
  SearchTree tree;
  Scheme scheme;
  std::uint64_t total_bits = kInfeasible;
  double bits_per_ipm = 0.0;
  /// Shared code index when multi_code is false.
  int shared_code = -1;
};

/// Scores a tree: per-leaf best code (multi) or best shared code. Returns
/// kInfeasible when a leaf is dead or has no valid labelling.
std::uint64_t tree_bits(const LeafEvaluator& ev, const SearchTree& tree, bool multi_code, int* shared_code = nullptr);

/// Materializes a scored tree as a Scheme with static leaves.
SearchResult make_result(const LeafEvaluator& ev, const SearchTree& tree, bool multi_code);

/// Exact minimum over every tree with at most max_depth levels, for each leaf
/// count 1..max_leaves (entry n-1 holds exactly n leaves). Requires
/// max_leaves <= 8 and max_depth <= 4. Equal costs keep the first tree found
/// in test order.
std::vector<SearchResult> exhaustive_tree_curve(const LeafEvaluator& ev, const SearchConfig& config);
SearchResult exhaustive_tree_search(const ConditionalHistogram& hist, const SearchConfig& config);

/// Genetic search for trees with exactly `leaves` leaves. The population is
/// seeded with `seeds` (trees with `leaves` leaves are kept as is, trees with
/// one leaf fewer contribute every feasible single split) and random trees.
/// With zero iterations and a seed of the right size, the best seed is returned.
SearchResult genetic_tree_search(const LeafEvaluator& ev, const SearchConfig& config, int leaves,
                                 std::span<const SearchTree> seeds = {});

/// Warm-started chain for 1..config.max_leaves; each level is seeded from the
/// previous best, so costs are nonincreasing. `extra_seeds[n-1]`, when present,
/// are added to level n.
std::vector<SearchResult> genetic_tree_curve(const LeafEvaluator& ev, const SearchConfig& config,
                                             const std::vector<std::vector<SearchTree>>& extra_seeds = {});
SearchResult genetic_tree_search(const ConditionalHistogram& hist, const SearchConfig& config);

// ---------------------------------------------------------------------------
// Cell clustering

enum class ClusterMode { PerfectLabels, LabelSet };

struct CellClustering {
  /// Cells of the evaluator (observed cells of the histogram).
  std::vector<ContextTuple> cells;
  std::vector<int> assignment;
  int num_clusters = 0;
  /// Code index per cluster (-1 for empty clusters).
  std::vector<int> cluster_codes;
  /// Candidate indices per cluster in LabelSet mode.
  std::vector<std::vector<int>> cluster_labels;
  std::uint64_t total_bits = kInfeasible;
  double cost = 0.0;
};

/// Genetic clustering of the histogram's cells without a tree. PerfectLabels
/// ranks modes ideally per cell, so a cluster only shares a code; LabelSet
/// runs the greedy label search per cluster. The first individual groups cells
/// by their best code. Unavailable contexts stay distinct cells unless
/// `rules` says otherwise.
CellClustering genetic_cell_clustering(const ConditionalHistogram& hist, int num_clusters,
                                       std::span<const CodeShape> codes, ClusterMode mode,
                                       const GeneticParams& params, std::span<const Label> labels = {},
                                       const EvalRules& rules = {SymbolSpace::hevc(), UnavailableRule::Keep,
                                                                 false});

}  // namespace ipmc
