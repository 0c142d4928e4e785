#include <algorithm>
#include <functional>

#include "doctest.h"
#include "ipmc/entropy.hpp"
#include "ipmc/search.hpp"
#include "support.hpp"

using namespace ipmc;

namespace {

ConditionalHistogram hevc_hist(int side, std::uint64_t seed) {
  auto s = testing::small_synth(SymbolSpace::hevc(), side, side, seed);
  return ConditionalHistogram::build(s, SymbolSpace::hevc(), ContextSet::parse("L,U"));
}

// Best (labelling, code) bits over one side of a split, checked on every (L,U) in the grid.
std::uint64_t brute_leaf(const std::vector<ContextTuple>& grid, const ConditionalHistogram& hist,
                         const SearchConfig& cfg, const std::function<bool(const ContextTuple&)>& in_leaf) {
  std::vector<ContextTuple> cells;
  for (const auto& t : grid)
    if (in_leaf(t)) cells.push_back(t);
  if (cells.empty()) return kInfeasible;
  const auto& labels = cfg.label_set;
  const int n = static_cast<int>(labels.size());
  std::uint64_t best = kInfeasible;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        if (a == b || b == c || a == c) continue;
        const std::vector<Label> l = {labels[a], labels[b], labels[c]};
        if (!check_compatibility(l, cells, cfg.rules).valid) continue;
        for (const auto& code : cfg.code_set) {
          if (code.mpm_count() != 3) continue;
          const auto len = code.rank_lengths();
          std::uint64_t bits = 0;
          for (const auto& hc : hist.cells()) {
            const auto t = cfg.rules.apply(hc.key);
            if (!in_leaf(t)) continue;
            int v[3];
            for (int i = 0; i < 3; ++i) v[i] = eval_label(l[i], t, cfg.rules);
            for (int m = 0; m < 35; ++m) {
              int slot = -1;
              for (int i = 0; i < 3; ++i)
                if (v[i] == m) slot = i;
              bits += hc.counts[static_cast<std::size_t>(m)] *
                      static_cast<std::uint64_t>(slot >= 0 ? len[static_cast<std::size_t>(slot)]
                                                           : code.fl_groups.front().length);
            }
          }
          best = std::min(best, bits);
        }
      }
  return best;
}

SearchConfig small_genetic(SearchConfig c, int iterations) {
  c.genetic.iterations = iterations;
  c.genetic.population = 12;
  c.genetic.children_per_parent = 2;
  c.genetic.threads = 1;
  return c;
}

}  // namespace

TEST_SUITE("search") {

TEST_CASE("hevc presets never lose to the anchor") {
  const auto hist = hevc_hist(48, 3);
  auto cfg = hevc_search_config();
  cfg.max_leaves = 5;
  const auto r = exhaustive_tree_search(hist, cfg);
  REQUIRE(r.feasible);
  const double anchor = anchor_hevc().evaluate(hist).bits_per_ipm;
  CHECK(r.bits_per_ipm <= anchor + 1e-12);
  CHECK_NOTHROW(r.scheme.validate());
  CHECK(r.scheme.evaluate(hist).total_bits == r.total_bits);
}

TEST_CASE("two leaves match brute force over test, labelling and code") {
  const auto hist = hevc_hist(40, 5);
  auto cfg = hevc_search_config();
  cfg.code_set = enumerate_codes(SymbolSpace::hevc(), {{3}, 8, 1, MpmLengthRule::Shorter});
  cfg.max_leaves = 2;
  cfg.max_depth = 1;
  LeafEvaluator ev(hist, cfg.rules, cfg.test_set, cfg.label_set, cfg.code_set);
  const auto curve = exhaustive_tree_curve(ev, cfg);
  REQUIRE(curve.size() == 2);

  std::vector<ContextTuple> grid;
  for (int l = 0; l < 35; ++l)
    for (int u = 0; u < 35; ++u) grid.push_back(ContextTuple(l, u));
  std::uint64_t want = kInfeasible;
  for (const auto& t : cfg.test_set) {
    const auto a = brute_leaf(grid, hist, cfg, [&](const ContextTuple& x) { return t.eval(x); });
    const auto b = brute_leaf(grid, hist, cfg, [&](const ContextTuple& x) { return !t.eval(x); });
    if (a != kInfeasible && b != kInfeasible) want = std::min(want, a + b);
  }
  const auto one = brute_leaf(grid, hist, cfg, [](const ContextTuple&) { return true; });
  CHECK(curve[0].total_bits == one);
  CHECK(curve[1].total_bits == want);
  CHECK(curve[1].tree.leaf_count() == 2);
}

TEST_CASE("exhaustive curve is nonincreasing and schemes are valid") {
  const auto hist = hevc_hist(40, 9);
  auto cfg = hevc_search_config();
  cfg.max_leaves = 6;
  LeafEvaluator ev(hist, cfg.rules, cfg.test_set, cfg.label_set, cfg.code_set);
  const auto curve = exhaustive_tree_curve(ev, cfg);
  std::uint64_t best = kInfeasible;
  for (const auto& r : curve) {
    if (!r.feasible) continue;
    CHECK(r.total_bits <= best);
    best = std::min(best, r.total_bits);
    CHECK_NOTHROW(r.scheme.validate());
    CHECK(r.scheme.evaluate(hist).total_bits == r.total_bits);
  }
}

TEST_CASE("extended presets beat the anchor with five leaves") {
  const auto hist = hevc_hist(64, 4);
  auto cfg = extended_hevc_search_config();
  cfg.max_leaves = 5;
  const auto r = exhaustive_tree_search(hist, cfg);
  REQUIRE(r.feasible);
  CHECK(r.bits_per_ipm < anchor_hevc().evaluate(hist).bits_per_ipm);
}

TEST_CASE("genetic search with zero iterations returns the seed") {
  const auto hist = hevc_hist(32, 2);
  auto cfg = small_genetic(hevc_search_config(), 0);
  LeafEvaluator ev(hist, cfg.rules, cfg.test_set, cfg.label_set, cfg.code_set);
  SearchTree t;
  t.nodes = {{0, 1, 2}, {}, {1, 3, 4}, {}, {}};
  REQUIRE(t.leaf_count() == 3);
  const std::vector<SearchTree> seeds = {t};
  const auto r = genetic_tree_search(ev, cfg, 3, seeds);
  CHECK(r.tree.key() == t.key());
  CHECK(r.total_bits == tree_bits(ev, t, cfg.multi_code));
}

TEST_CASE("genetic search is reproducible and matches exhaustive on small budgets") {
  const auto hist = hevc_hist(32, 6);
  auto cfg = small_genetic(hevc_search_config(), 150);
  cfg.max_leaves = 4;
  LeafEvaluator ev(hist, cfg.rules, cfg.test_set, cfg.label_set, cfg.code_set);
  const auto a = genetic_tree_curve(ev, cfg);
  const auto b = genetic_tree_curve(ev, cfg);
  const auto ex = exhaustive_tree_curve(ev, cfg);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].scheme == b[i].scheme);
    CHECK(a[i].total_bits == b[i].total_bits);
    CHECK(a[i].total_bits == ex[i].total_bits);
    if (i) CHECK(a[i].total_bits <= a[i - 1].total_bits);
  }
}

TEST_CASE("multi code never loses to a shared code") {
  const auto hist = hevc_hist(40, 7);
  auto cfg = hevc_search_config();
  cfg.code_set = enumerate_codes(SymbolSpace::hevc(), {{3}, 8, 1, MpmLengthRule::Shorter});
  cfg.max_leaves = 5;
  LeafEvaluator ev(hist, cfg.rules, cfg.test_set, cfg.label_set, cfg.code_set);
  cfg.multi_code = true;
  const auto multi = exhaustive_tree_curve(ev, cfg);
  cfg.multi_code = false;
  const auto single = exhaustive_tree_curve(ev, cfg);
  for (std::size_t i = 0; i < multi.size(); ++i)
    if (single[i].feasible) {
      CHECK(multi[i].total_bits <= single[i].total_bits);
      CHECK(single[i].shared_code >= 0);
    }
}

TEST_CASE("leaf evaluator splits partition the cells") {
  const auto hist = hevc_hist(20, 1);
  const auto cfg = extended_hevc_search_config();
  LeafEvaluator ev(hist, cfg.rules, cfg.test_set, cfg.label_set, cfg.code_set);
  CHECK(ev.cell_count() == 35 * 35);
  const auto all = ev.all();
  for (std::size_t t = 0; t < cfg.test_set.size(); ++t) {
    const auto a = ev.split(all, static_cast<int>(t), true);
    const auto b = ev.split(all, static_cast<int>(t), false);
    CHECK(a.count() + b.count() == all.count());
  }
  const auto first = ev.leaf(all);
  const auto again = ev.leaf(all);
  CHECK(first.get() == again.get());
  CHECK(first->mass == hist.total());
}

TEST_CASE("clustering with one cluster per cell is the code based entropy") {
  auto s = testing::small_synth(SymbolSpace::hevc(), 24, 24, 3);
  const auto hist = ConditionalHistogram::build(s, SymbolSpace::hevc(), ContextSet::parse("L,U"));
  const auto codes = enumerate_codes(SymbolSpace::hevc(), static_code_profile(SymbolSpace::hevc()));
  GeneticParams p;
  p.iterations = 5;
  p.population = 4;
  p.children_per_parent = 1;
  p.threads = 1;
  const int n = static_cast<int>(hist.cells().size());
  const auto r = genetic_cell_clustering(hist, n, codes, ClusterMode::PerfectLabels, p, {},
                                         EvalRules{SymbolSpace::hevc(), UnavailableRule::Keep, false});
  CHECK(r.cost == doctest::Approx(code_based_entropy(hist, codes).bits_per_symbol).epsilon(1e-12));
}

TEST_CASE("a single cluster takes the best shared code") {
  auto s = testing::small_synth(SymbolSpace::hevc(), 24, 24, 4);
  const auto hist = ConditionalHistogram::build(s, SymbolSpace::hevc(), ContextSet::parse("L,U"));
  const auto codes = enumerate_codes(SymbolSpace::hevc(), static_code_profile(SymbolSpace::hevc()));
  GeneticParams p;
  p.iterations = 3;
  p.population = 4;
  p.threads = 1;
  const auto r = genetic_cell_clustering(hist, 1, codes, ClusterMode::PerfectLabels, p);
  std::uint64_t want = kInfeasible;
  for (const auto& code : codes) {
    std::uint64_t bits = 0;
    for (const auto& c : hist.cells()) bits += assigned_bits(code, sorted_counts(c.counts));
    want = std::min(want, bits);
  }
  CHECK(r.total_bits == want);
}

TEST_CASE("perfect labels never cost more than a label set") {
  auto s = testing::small_synth(SymbolSpace::hevc(), 32, 32, 5);
  const auto hist = ConditionalHistogram::build(s, SymbolSpace::hevc(), ContextSet::parse("L,U"));
  const auto codes = enumerate_codes(SymbolSpace::hevc(), {{3}, 8, 1, MpmLengthRule::Shorter});
  GeneticParams p;
  p.iterations = 40;
  p.population = 8;
  p.children_per_parent = 2;
  p.threads = 1;
  const EvalRules rules{SymbolSpace::hevc(), UnavailableRule::Keep, false};
  const auto perfect = genetic_cell_clustering(hist, 5, codes, ClusterMode::PerfectLabels, p, {}, rules);
  const auto labelled =
      genetic_cell_clustering(hist, 5, codes, ClusterMode::LabelSet, p, extended_hevc_labels(), rules);
  CHECK(perfect.total_bits <= labelled.total_bits);
  CHECK(perfect.assignment.size() == hist.cells().size());
  for (int a : perfect.assignment) CHECK((a >= 0 && a < 5));
}

TEST_CASE("genetic parameters are validated") {
  GeneticParams p;
  p.population = 0;
  CHECK_THROWS(p.validate());
  p = {};
  p.mutation_rate = 2.0;
  CHECK_THROWS(p.validate());
}

}
