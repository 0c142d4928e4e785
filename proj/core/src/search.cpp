#include "ipmc/search.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>

#include "ipmc/entropy.hpp"
#include "ipmc/error.hpp"
#include "ipmc/parallel.hpp"
#include "ipmc/random.hpp"

namespace ipmc {

void GeneticParams::validate() const {
  if (population < 2) throw ValidationError("population must be at least 2");
  if (children_per_parent < 1) throw ValidationError("children_per_parent must be at least 1");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw ValidationError("mutation_rate must be in [0, 1]");
  if (iterations < 0) throw ValidationError("iterations must be nonnegative");
}

SearchConfig hevc_search_config() {
  SearchConfig c;
  c.rules = EvalRules{SymbolSpace::hevc(), UnavailableRule::MapToDC, false};
  c.test_set = hevc_tests();
  c.label_set = hevc_labels();
  c.code_set = {hevc_anchor_code()};
  return c;
}

SearchConfig extended_hevc_search_config() {
  SearchConfig c;
  c.rules = EvalRules{SymbolSpace::hevc(), UnavailableRule::MapToDC, false};
  c.test_set = extended_hevc_tests();
  c.label_set = extended_hevc_labels();
  c.code_set = enumerate_codes(c.rules.space, static_code_profile(c.rules.space));
  return c;
}

SearchConfig jem_search_config() {
  SearchConfig c;
  c.rules = EvalRules{SymbolSpace::jem(), UnavailableRule::MapToDC, false};
  c.test_set = jem_tests();
  c.label_set = parse_labelling("L,U,L-1,L+1,U-1,U+1,L-2,L+2,U-2,U+2,min,max,min-1,min+1,max-1,max+1,|1-min|,mean,"
                                "#0,#1,#50,#18,#34,#2");
  c.code_set = enumerate_codes(c.rules.space, static_code_profile(c.rules.space));
  c.max_leaves = 12;
  c.max_depth = 5;
  return c;
}

// ---------------------------------------------------------------------------
// CellSet

bool CellSet::empty() const noexcept {
  for (auto w : words)
    if (w) return false;
  return true;
}

std::size_t CellSet::count() const noexcept {
  std::size_t n = 0;
  for (auto w : words) n += static_cast<std::size_t>(__builtin_popcountll(w));
  return n;
}

std::size_t CellSetHash::operator()(const CellSet& s) const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (auto w : s.words) {
    h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdULL;
  }
  return static_cast<std::size_t>(h ^ (h >> 33));
}

namespace {

bool intersects(const CellSet& a, const CellSet& b) {
  for (std::size_t i = 0; i < a.words.size(); ++i)
    if (a.words[i] & b.words[i]) return true;
  return false;
}

template <typename F>
void for_each_bit(const CellSet& s, F&& f) {
  for (std::size_t w = 0; w < s.words.size(); ++w) {
    std::uint64_t x = s.words[w];
    while (x) {
      const int b = __builtin_ctzll(x);
      f(w * 64 + static_cast<std::size_t>(b));
      x &= x - 1;
    }
  }
}

std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n) { return i * n - i * (i + 1) / 2 + (j - i - 1); }

}  // namespace

// ---------------------------------------------------------------------------
// LeafEvaluator

LeafEvaluator::LeafEvaluator(const ConditionalHistogram& hist, const EvalRules& rules, std::vector<Test> tests,
                             std::vector<Label> labels, std::vector<CodeShape> codes, Universe universe)
    : rules_(rules), tests_(std::move(tests)), codes_(std::move(codes)) {
  rules_.space.validate();
  const int k = rules_.space.k;
  if (hist.space().k != k) throw Error("histogram k does not match the search space");
  for (const auto& c : codes_)
    if (!c.complete_for(k)) throw ValidationError("code " + c.to_string() + " is not complete for k=" + std::to_string(k));

  std::uint8_t mask = context_bit(Context::L) | context_bit(Context::U);
  for (const auto& t : tests_) mask |= t.context_mask();
  if (universe == Universe::Observed) mask &= hist.context_set().mask();
  for (auto& l : labels)
    if (l.kind != Label::Kind::Derived && (l.context_mask() & ~mask) == 0) labels_.push_back(l);
  if (!hist.context_set().contains_all(mask))
    throw Error("histogram contexts {" + hist.context_set().to_string() + "} do not cover the search contexts");

  std::vector<Context> ctxs;
  for (Context c : kAllContexts)
    if (mask & context_bit(c)) ctxs.push_back(c);
  auto project = [&](const ContextTuple& applied) {
    ContextTuple t;
    for (Context c : ctxs) t.set(c, applied[c]);
    return t;
  };

  if (universe == Universe::Grid) {
    const int lo = rules_.unavailable == UnavailableRule::Keep ? kUnavailable : 0;
    const int domain = k - lo;
    double total = 1.0;
    for (std::size_t i = 0; i < ctxs.size(); ++i) total *= domain;
    if (total > 4e5) throw ValidationError("too many context combinations for a grid search");
    const std::size_t n = static_cast<std::size_t>(total);
    cells_.resize(n);
    std::vector<int> digit(ctxs.size(), lo);
    for (std::size_t idx = 0; idx < n; ++idx) {
      ContextTuple t;
      for (std::size_t i = 0; i < ctxs.size(); ++i) t.set(ctxs[i], digit[i]);
      cells_[idx] = t;
      for (std::size_t i = 0; i < digit.size(); ++i) {
        if (++digit[i] < k) break;
        digit[i] = lo;
      }
    }
    observed_slot_.assign(n, -1);
    for (const auto& cell : hist.cells()) {
      const ContextTuple a = rules_.apply(cell.key);
      std::size_t idx = 0, stride = 1;
      for (Context c : ctxs) {
        idx += static_cast<std::size_t>(a[c] - lo) * stride;
        stride *= static_cast<std::size_t>(domain);
      }
      int& slot = observed_slot_[idx];
      if (slot < 0) {
        slot = static_cast<int>(counts_.size());
        counts_.emplace_back(static_cast<std::size_t>(k), 0);
      }
      auto& dst = counts_[static_cast<std::size_t>(slot)];
      for (int m = 0; m < k; ++m) dst[static_cast<std::size_t>(m)] += cell.counts[static_cast<std::size_t>(m)];
    }
  } else {
    std::map<ContextTuple, std::vector<std::uint64_t>> merged;
    for (const auto& cell : hist.cells()) {
      auto& dst = merged[project(rules_.apply(cell.key))];
      if (dst.empty()) dst.assign(static_cast<std::size_t>(k), 0);
      for (int m = 0; m < k; ++m) dst[static_cast<std::size_t>(m)] += cell.counts[static_cast<std::size_t>(m)];
    }
    for (auto& [key, cnt] : merged) {
      observed_slot_.push_back(static_cast<int>(counts_.size()));
      cells_.push_back(key);
      counts_.push_back(std::move(cnt));
    }
  }

  words_ = (cells_.size() + 63) / 64;
  for (const auto& c : counts_) slot_mass_.push_back(std::accumulate(c.begin(), c.end(), std::uint64_t{0}));

  const std::size_t nl = labels_.size();
  std::vector<std::vector<int>> vals(nl, std::vector<int>(cells_.size()));
  for (std::size_t j = 0; j < nl; ++j)
    for (std::size_t c = 0; c < cells_.size(); ++c) vals[j][c] = eval_label(labels_[j], cells_[c], rules_);
  slot_hits_.assign(counts_.size(), std::vector<std::uint64_t>(nl, 0));
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    const int slot = observed_slot_[c];
    if (slot < 0) continue;
    for (std::size_t j = 0; j < nl; ++j)
      if (vals[j][c] >= 0)
        slot_hits_[static_cast<std::size_t>(slot)][j] =
            counts_[static_cast<std::size_t>(slot)][static_cast<std::size_t>(vals[j][c])];
  }
  unavailable_.assign(nl, none());
  for (std::size_t j = 0; j < nl; ++j)
    for (std::size_t c = 0; c < cells_.size(); ++c)
      if (vals[j][c] < 0) unavailable_[j].set(c);
  collide_.assign(nl * (nl > 0 ? nl - 1 : 0) / 2, none());
  for (std::size_t i = 0; i < nl; ++i)
    for (std::size_t j = i + 1; j < nl; ++j) {
      CellSet& s = collide_[pair_index(i, j, nl)];
      if (labels_[i] == labels_[j]) {
        s = all();
        continue;
      }
      for (std::size_t c = 0; c < cells_.size(); ++c)
        if (vals[i][c] >= 0 && vals[i][c] == vals[j][c]) s.set(c);
    }
  test_true_.assign(tests_.size(), none());
  for (std::size_t t = 0; t < tests_.size(); ++t)
    for (std::size_t c = 0; c < cells_.size(); ++c)
      if (tests_[t].eval(cells_[c])) test_true_[t].set(c);
}

std::span<const std::uint64_t> LeafEvaluator::counts(std::size_t i) const {
  const int slot = observed_slot_[i];
  if (slot < 0) return {};
  return counts_[static_cast<std::size_t>(slot)];
}

std::uint64_t LeafEvaluator::cell_mass(std::size_t i) const {
  const int slot = observed_slot_[i];
  return slot < 0 ? 0 : slot_mass_[static_cast<std::size_t>(slot)];
}

CellSet LeafEvaluator::none() const { return CellSet{std::vector<std::uint64_t>(words_, 0)}; }

CellSet LeafEvaluator::all() const {
  CellSet s = none();
  for (std::size_t c = 0; c < cells_.size(); ++c) s.set(c);
  return s;
}

CellSet LeafEvaluator::split(const CellSet& s, int t, bool value) const {
  CellSet out = s;
  const auto& tt = test_true_[static_cast<std::size_t>(t)].words;
  for (std::size_t w = 0; w < words_; ++w) out.words[w] &= value ? tt[w] : ~tt[w];
  return out;
}

std::size_t LeafEvaluator::cache_size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

std::shared_ptr<const LeafResult> LeafEvaluator::leaf(const CellSet& s) const {
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(s);
    if (it != cache_.end()) return it->second;
  }
  auto r = std::make_shared<const LeafResult>(compute(s));
  std::lock_guard lock(mutex_);
  return cache_.emplace(s, std::move(r)).first->second;
}

LeafResult LeafEvaluator::compute(const CellSet& s) const {
  LeafResult r;
  r.bits.assign(codes_.size(), kInfeasible);
  r.labels.resize(codes_.size());
  if (s.empty()) return r;
  const std::size_t nl = labels_.size();
  LabelProblem p;
  p.hits.assign(nl, 0);
  for_each_bit(s, [&](std::size_t c) {
    const int slot = observed_slot_[c];
    if (slot < 0) return;
    p.mass += slot_mass_[static_cast<std::size_t>(slot)];
    const auto& h = slot_hits_[static_cast<std::size_t>(slot)];
    for (std::size_t j = 0; j < nl; ++j) p.hits[j] += h[j];
  });
  r.mass = p.mass;
  p.unavailable = [&](int i) { return intersects(s, unavailable_[static_cast<std::size_t>(i)]); };
  p.conflict = [&](int i, int j) {
    return intersects(s, collide_[pair_index(static_cast<std::size_t>(i), static_cast<std::size_t>(j), nl)]);
  };
  const int k = rules_.space.k;
  for (std::size_t ci = 0; ci < codes_.size(); ++ci) {
    const CodeShape& code = codes_[ci];
    const LabelSearchResult g = greedy_label_search(p, code);
    if (!g.found) continue;
    std::uint64_t bits = g.bits;
    if (code.fl_groups.size() > 1) {
      // Misses were priced at the shortest remainder length; recount exactly.
      const auto lengths = code.rank_lengths();
      bits = 0;
      std::vector<int> mpms(g.labels.size());
      for_each_bit(s, [&](std::size_t c) {
        const int slot = observed_slot_[c];
        if (slot < 0) return;
        for (std::size_t j = 0; j < g.labels.size(); ++j)
          mpms[j] = eval_label(labels_[static_cast<std::size_t>(g.labels[j])], cells_[c], rules_);
        const auto perm = static_permutation(mpms, k);
        const auto& cnt = counts_[static_cast<std::size_t>(slot)];
        for (std::size_t rank = 0; rank < perm.size(); ++rank)
          bits += cnt[static_cast<std::size_t>(perm[rank])] * static_cast<std::uint64_t>(lengths[rank]);
      });
    }
    r.bits[ci] = bits;
    r.labels[ci] = g.labels;
    if (bits < r.best_bits) {
      r.best_bits = bits;
      r.best_code = static_cast<int>(ci);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// SearchTree

SearchTree SearchTree::leaf() { return SearchTree{{Node{}}}; }

int SearchTree::leaf_count() const {
  int n = 0;
  for (const auto& node : nodes) n += node.test < 0;
  return n;
}

int SearchTree::depth() const {
  std::function<int(int)> d = [&](int i) -> int {
    const Node& n = nodes[static_cast<std::size_t>(i)];
    return n.test < 0 ? 0 : 1 + std::max(d(n.on_true), d(n.on_false));
  };
  return d(0);
}

std::string SearchTree::key() const {
  std::string s;
  std::function<void(int)> walk = [&](int i) {
    const Node& n = nodes[static_cast<std::size_t>(i)];
    if (n.test < 0) {
      s += '.';
      return;
    }
    s += std::to_string(n.test);
    s += '(';
    walk(n.on_true);
    walk(n.on_false);
    s += ')';
  };
  walk(0);
  return s;
}

namespace {

void collect_leaves(const LeafEvaluator& ev, const SearchTree& tree, int node, const CellSet& s,
                    std::vector<CellSet>& out) {
  const auto& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.test < 0) {
    out.push_back(s);
    return;
  }
  collect_leaves(ev, tree, n.on_true, ev.split(s, n.test, true), out);
  collect_leaves(ev, tree, n.on_false, ev.split(s, n.test, false), out);
}

std::uint64_t add_sat(std::uint64_t a, std::uint64_t b) { return (a == kInfeasible || b == kInfeasible) ? kInfeasible : a + b; }

}  // namespace

std::uint64_t tree_bits(const LeafEvaluator& ev, const SearchTree& tree, bool multi_code, int* shared_code) {
  std::vector<CellSet> sets;
  collect_leaves(ev, tree, 0, ev.all(), sets);
  std::vector<std::shared_ptr<const LeafResult>> leaves;
  for (const auto& s : sets) {
    if (s.empty()) return kInfeasible;
    leaves.push_back(ev.leaf(s));
  }
  if (multi_code) {
    std::uint64_t total = 0;
    for (const auto& l : leaves) total = add_sat(total, l->best_bits);
    return total;
  }
  std::uint64_t best = kInfeasible;
  for (std::size_t c = 0; c < ev.codes().size(); ++c) {
    std::uint64_t total = 0;
    for (const auto& l : leaves) total = add_sat(total, l->bits[c]);
    if (total < best) {
      best = total;
      if (shared_code) *shared_code = static_cast<int>(c);
    }
  }
  return best;
}

SearchResult make_result(const LeafEvaluator& ev, const SearchTree& tree, bool multi_code) {
  SearchResult res;
  res.tree = tree;
  int shared = -1;
  res.total_bits = tree_bits(ev, tree, multi_code, &shared);
  if (res.total_bits == kInfeasible) return res;
  res.feasible = true;
  res.shared_code = multi_code ? -1 : shared;

  std::vector<TreeNode> nodes;
  std::vector<Leaf> leaves;
  std::uint64_t mass = 0;
  std::function<int(int, const CellSet&)> build = [&](int i, const CellSet& s) -> int {
    const auto& n = tree.nodes[static_cast<std::size_t>(i)];
    const int me = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (n.test < 0) {
      const auto lr = ev.leaf(s);
      const int code = multi_code ? lr->best_code : shared;
      Leaf leaf;
      leaf.kind = Leaf::Kind::Static;
      leaf.shape = ev.codes()[static_cast<std::size_t>(code)];
      for (int j : lr->labels[static_cast<std::size_t>(code)]) leaf.labels.push_back(ev.labels()[static_cast<std::size_t>(j)]);
      mass += lr->mass;
      nodes[static_cast<std::size_t>(me)].leaf = static_cast<int>(leaves.size());
      leaves.push_back(std::move(leaf));
      return me;
    }
    const int a = build(n.on_true, ev.split(s, n.test, true));
    const int b = build(n.on_false, ev.split(s, n.test, false));
    nodes[static_cast<std::size_t>(me)].test = ev.tests()[static_cast<std::size_t>(n.test)];
    nodes[static_cast<std::size_t>(me)].on_true = a;
    nodes[static_cast<std::size_t>(me)].on_false = b;
    return me;
  };
  build(0, ev.all());
  res.scheme = Scheme(ev.rules(), std::move(nodes), std::move(leaves));
  res.bits_per_ipm = mass ? static_cast<double>(res.total_bits) / static_cast<double>(mass) : 0.0;
  return res;
}

// ---------------------------------------------------------------------------
// Exhaustive search

namespace {

struct DpEntry {
  std::uint64_t bits = kInfeasible;
  int test = -1;
  int left = 0;  // leaves on the true side
};

class TreeDp {
 public:
  TreeDp(const LeafEvaluator& ev, int max_leaves, int code) : ev_(ev), n_(max_leaves), code_(code) {}

  const std::vector<DpEntry>& solve(const CellSet& s, int depth) {
    auto& memo = memo_[static_cast<std::size_t>(depth)];
    auto it = memo.find(s);
    if (it != memo.end()) return it->second;
    std::vector<DpEntry> best(static_cast<std::size_t>(n_) + 1);
    const auto leaf = ev_.leaf(s);
    best[1].bits = code_ < 0 ? leaf->best_bits : leaf->bits[static_cast<std::size_t>(code_)];
    if (depth > 0 && n_ > 1) {
      for (int t = 0; t < static_cast<int>(ev_.tests().size()); ++t) {
        CellSet a = ev_.split(s, t, true);
        if (a.empty()) continue;
        CellSet b = ev_.split(s, t, false);
        if (b.empty()) continue;
        // Copies: the recursive calls may rehash the memo.
        const std::vector<DpEntry> va = solve(a, depth - 1);
        const std::vector<DpEntry> vb = solve(b, depth - 1);
        for (int x = 1; x < n_; ++x) {
          if (va[static_cast<std::size_t>(x)].bits == kInfeasible) continue;
          for (int y = 1; x + y <= n_; ++y) {
            const std::uint64_t c = add_sat(va[static_cast<std::size_t>(x)].bits, vb[static_cast<std::size_t>(y)].bits);
            auto& e = best[static_cast<std::size_t>(x + y)];
            if (c < e.bits) e = {c, t, x};
          }
        }
      }
    }
    return memo.emplace(s, std::move(best)).first->second;
  }

  void init(int depth) { memo_.assign(static_cast<std::size_t>(depth) + 1, {}); }

  SearchTree rebuild(const CellSet& root, int depth, int leaves) {
    SearchTree t;
    std::function<int(const CellSet&, int, int)> go = [&](const CellSet& s, int d, int n) -> int {
      const int me = static_cast<int>(t.nodes.size());
      t.nodes.emplace_back();
      if (n == 1) return me;
      const DpEntry e = solve(s, d)[static_cast<std::size_t>(n)];
      const int a = go(ev_.split(s, e.test, true), d - 1, e.left);
      const int b = go(ev_.split(s, e.test, false), d - 1, n - e.left);
      t.nodes[static_cast<std::size_t>(me)] = {e.test, a, b};
      return me;
    };
    go(root, depth, leaves);
    return t;
  }

 private:
  const LeafEvaluator& ev_;
  int n_;
  int code_;
  std::vector<std::unordered_map<CellSet, std::vector<DpEntry>, CellSetHash>> memo_;
};

}  // namespace

std::vector<SearchResult> exhaustive_tree_curve(const LeafEvaluator& ev, const SearchConfig& config) {
  if (config.max_leaves < 1 || config.max_leaves > 8 || config.max_depth < 0 || config.max_depth > 4)
    throw ValidationError("exhaustive search needs max_leaves in 1..8 and max_depth in 0..4");
  const int n = config.max_leaves;
  const CellSet root = ev.all();
  // Best per leaf count, over codes when a single shared code is required.
  std::vector<std::uint64_t> best_bits(static_cast<std::size_t>(n) + 1, kInfeasible);
  std::vector<int> best_code(static_cast<std::size_t>(n) + 1, -1);
  std::vector<SearchTree> best_tree(static_cast<std::size_t>(n) + 1);
  const int code_runs = config.multi_code ? 1 : static_cast<int>(ev.codes().size());
  for (int run = 0; run < code_runs; ++run) {
    const int code = config.multi_code ? -1 : run;
    TreeDp dp(ev, n, code);
    dp.init(config.max_depth);
    const auto& v = dp.solve(root, config.max_depth);
    for (int m = 1; m <= n; ++m) {
      if (v[static_cast<std::size_t>(m)].bits < best_bits[static_cast<std::size_t>(m)]) {
        best_bits[static_cast<std::size_t>(m)] = v[static_cast<std::size_t>(m)].bits;
        best_code[static_cast<std::size_t>(m)] = code;
        best_tree[static_cast<std::size_t>(m)] = dp.rebuild(root, config.max_depth, m);
      }
    }
  }
  std::vector<SearchResult> out;
  for (int m = 1; m <= n; ++m) {
    if (best_bits[static_cast<std::size_t>(m)] == kInfeasible) {
      out.emplace_back();
      continue;
    }
    out.push_back(make_result(ev, best_tree[static_cast<std::size_t>(m)], config.multi_code));
  }
  return out;
}

SearchResult exhaustive_tree_search(const ConditionalHistogram& hist, const SearchConfig& config) {
  LeafEvaluator ev(hist, config.rules, config.test_set, config.label_set, config.code_set);
  if (config.test_set.empty()) return make_result(ev, SearchTree::leaf(), config.multi_code);
  auto curve = exhaustive_tree_curve(ev, config);
  for (int m = config.max_leaves; m >= 1; --m)
    if (curve[static_cast<std::size_t>(m - 1)].feasible) return curve[static_cast<std::size_t>(m - 1)];
  return {};
}

// ---------------------------------------------------------------------------
// Genetic tree search

namespace {

struct Individual {
  SearchTree tree;
  std::uint64_t bits = kInfeasible;
  std::string key;
};

bool better(const Individual& a, const Individual& b) {
  if (a.bits != b.bits) return a.bits < b.bits;
  return a.key < b.key;
}

class TreeMutator {
 public:
  TreeMutator(int tests, int max_depth, Rng& rng) : tests_(tests), max_depth_(max_depth), rng_(rng) {}

  SearchTree random_tree(int leaves) {
    SearchTree t;
    grow(t, leaves, max_depth_);
    return t;
  }

  SearchTree mutate(const SearchTree& in) {
    SearchTree t = in;
    do {
      switch (rng_.below(3)) {
        case 0: change_test(t); break;
        case 1: regrow(t); break;
        default: rebalance(t); break;
      }
    } while (rng_.chance(0.3));
    return compact(t);
  }

  /// Every tree obtained by splitting one leaf of `t` with one test.
  std::vector<SearchTree> splits(const SearchTree& t) const {
    std::vector<SearchTree> out;
    const auto depths = node_depths(t);
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      if (t.nodes[i].test >= 0 || depths[i] >= max_depth_) continue;
      for (int test = 0; test < tests_; ++test) {
        SearchTree c = t;
        const int a = static_cast<int>(c.nodes.size());
        c.nodes.emplace_back();
        c.nodes.emplace_back();
        c.nodes[i] = {test, a, a + 1};
        out.push_back(compact(c));
      }
    }
    return out;
  }

  static SearchTree compact(const SearchTree& t) {
    SearchTree out;
    std::function<int(int)> copy = [&](int i) -> int {
      const int me = static_cast<int>(out.nodes.size());
      out.nodes.emplace_back();
      const auto& n = t.nodes[static_cast<std::size_t>(i)];
      if (n.test < 0) return me;
      const int a = copy(n.on_true);
      const int b = copy(n.on_false);
      out.nodes[static_cast<std::size_t>(me)] = {n.test, a, b};
      return me;
    };
    copy(0);
    return out;
  }

 private:
  int grow(SearchTree& t, int leaves, int depth) {
    const int me = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    if (leaves == 1) return me;
    const int cap = 1 << (depth - 1);
    const int lo = std::max(1, leaves - cap);
    const int hi = std::min(leaves - 1, cap);
    const int a = rng_.range(lo, hi);
    const int test = static_cast<int>(rng_.below(static_cast<std::uint64_t>(tests_)));
    const int x = grow(t, a, depth - 1);
    const int y = grow(t, leaves - a, depth - 1);
    t.nodes[static_cast<std::size_t>(me)] = {test, x, y};
    return me;
  }

  static std::vector<int> node_depths(const SearchTree& t) {
    std::vector<int> d(t.nodes.size(), 0);
    std::function<void(int, int)> walk = [&](int i, int depth) {
      d[static_cast<std::size_t>(i)] = depth;
      const auto& n = t.nodes[static_cast<std::size_t>(i)];
      if (n.test < 0) return;
      walk(n.on_true, depth + 1);
      walk(n.on_false, depth + 1);
    };
    walk(0, 0);
    return d;
  }

  static int leaves_under(const SearchTree& t, int i) {
    const auto& n = t.nodes[static_cast<std::size_t>(i)];
    return n.test < 0 ? 1 : leaves_under(t, n.on_true) + leaves_under(t, n.on_false);
  }

  std::vector<int> reachable(const SearchTree& t, bool internal) const {
    std::vector<int> out;
    std::function<void(int)> walk = [&](int i) {
      const auto& n = t.nodes[static_cast<std::size_t>(i)];
      if ((n.test >= 0) == internal) out.push_back(i);
      if (n.test < 0) return;
      walk(n.on_true);
      walk(n.on_false);
    };
    walk(0);
    return out;
  }

  void change_test(SearchTree& t) {
    const auto inner = reachable(t, true);
    if (inner.empty() || tests_ < 2) return;
    auto& n = t.nodes[static_cast<std::size_t>(inner[rng_.below(inner.size())])];
    int nt = static_cast<int>(rng_.below(static_cast<std::uint64_t>(tests_ - 1)));
    if (nt >= n.test) ++nt;
    n.test = nt;
  }

  void regrow(SearchTree& t) {
    const auto inner = reachable(t, true);
    if (inner.empty()) return;
    const int x = inner[rng_.below(inner.size())];
    const auto depths = node_depths(t);
    const int leaves = leaves_under(t, x);
    SearchTree sub;
    grow(sub, leaves, max_depth_ - depths[static_cast<std::size_t>(x)]);
    const int offset = static_cast<int>(t.nodes.size());
    for (auto n : sub.nodes) {
      if (n.test >= 0) {
        n.on_true += offset;
        n.on_false += offset;
      }
      t.nodes.push_back(n);
    }
    t.nodes[static_cast<std::size_t>(x)] = t.nodes[static_cast<std::size_t>(offset)];
  }

  void rebalance(SearchTree& t) {
    std::vector<int> twigs;
    for (int i : reachable(t, true)) {
      const auto& n = t.nodes[static_cast<std::size_t>(i)];
      if (t.nodes[static_cast<std::size_t>(n.on_true)].test < 0 && t.nodes[static_cast<std::size_t>(n.on_false)].test < 0)
        twigs.push_back(i);
    }
    if (twigs.empty()) return;
    const int x = twigs[rng_.below(twigs.size())];
    t.nodes[static_cast<std::size_t>(x)] = {};
    const auto depths = node_depths(t);
    std::vector<int> open;
    for (int i : reachable(t, false))
      if (depths[static_cast<std::size_t>(i)] < max_depth_) open.push_back(i);
    const int y = open[rng_.below(open.size())];
    const int a = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    t.nodes.emplace_back();
    t.nodes[static_cast<std::size_t>(y)] = {static_cast<int>(rng_.below(static_cast<std::uint64_t>(tests_))), a, a + 1};
  }

  int tests_;
  int max_depth_;
  Rng& rng_;
};

}  // namespace

SearchResult genetic_tree_search(const LeafEvaluator& ev, const SearchConfig& config, int leaves,
                                 std::span<const SearchTree> seeds) {
  config.genetic.validate();
  if (leaves < 1) throw ValidationError("leaf budget must be at least 1");
  if (leaves > (1 << std::min(config.max_depth, 20)))
    throw ValidationError("leaf budget does not fit depth " + std::to_string(config.max_depth));
  const int ntests = static_cast<int>(ev.tests().size());
  if (leaves == 1 || ntests == 0) return make_result(ev, SearchTree::leaf(), config.multi_code);

  Rng rng(config.genetic.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(leaves)));
  TreeMutator mut(ntests, config.max_depth, rng);
  auto score = [&](Individual& ind) {
    ind.key = ind.tree.key();
    ind.bits = tree_bits(ev, ind.tree, config.multi_code);
  };
  auto score_all = [&](std::vector<Individual>& v) {
    parallel_for(v.size(), config.genetic.threads, [&](std::size_t i) { score(v[i]); });
  };

  std::vector<Individual> pool;
  bool exact_seed = false;
  for (const auto& s : seeds) {
    if (s.depth() > config.max_depth) continue;
    if (s.leaf_count() == leaves) {
      pool.push_back({TreeMutator::compact(s), kInfeasible, {}});
      exact_seed = true;
    } else if (s.leaf_count() == leaves - 1) {
      for (auto& c : mut.splits(s)) pool.push_back({std::move(c), kInfeasible, {}});
    }
  }
  score_all(pool);
  std::stable_sort(pool.begin(), pool.end(), better);
  if (config.genetic.iterations == 0 && exact_seed) {
    for (const auto& ind : pool)
      if (ind.tree.leaf_count() == leaves) return make_result(ev, ind.tree, config.multi_code);
  }

  const std::size_t popsize = static_cast<std::size_t>(config.genetic.population);
  std::vector<Individual> population(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(popsize, pool.size())));
  std::vector<Individual> fresh;
  while (population.size() + fresh.size() < popsize) fresh.push_back({mut.random_tree(leaves), kInfeasible, {}});
  score_all(fresh);
  for (auto& f : fresh) population.push_back(std::move(f));

  for (int it = 0; it < config.genetic.iterations; ++it) {
    std::vector<Individual> children;
    children.reserve(population.size() * static_cast<std::size_t>(config.genetic.children_per_parent));
    for (const auto& parent : population)
      for (int c = 0; c < config.genetic.children_per_parent; ++c)
        children.push_back({mut.mutate(parent.tree), kInfeasible, {}});
    score_all(children);
    std::vector<Individual> all = std::move(population);
    for (auto& c : children) all.push_back(std::move(c));
    std::size_t best = 0;
    for (std::size_t i = 1; i < all.size(); ++i)
      if (better(all[i], all[best])) best = i;
    population.clear();
    population.push_back(all[best]);
    while (population.size() < popsize) {
      const auto& a = all[rng.below(all.size())];
      const auto& b = all[rng.below(all.size())];
      population.push_back(better(b, a) ? b : a);
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < population.size(); ++i)
    if (better(population[i], population[best])) best = i;
  return make_result(ev, population[best].tree, config.multi_code);
}

std::vector<SearchResult> genetic_tree_curve(const LeafEvaluator& ev, const SearchConfig& config,
                                             const std::vector<std::vector<SearchTree>>& extra_seeds) {
  std::vector<SearchResult> out;
  for (int n = 1; n <= config.max_leaves; ++n) {
    std::vector<SearchTree> seeds;
    if (!out.empty() && out.back().feasible) seeds.push_back(out.back().tree);
    if (static_cast<std::size_t>(n - 1) < extra_seeds.size())
      seeds.insert(seeds.end(), extra_seeds[static_cast<std::size_t>(n - 1)].begin(),
                   extra_seeds[static_cast<std::size_t>(n - 1)].end());
    SearchResult r = genetic_tree_search(ev, config, n, seeds);
    // A split of the previous best is in the seed pool, so this only guards
    // against levels where no feasible split exists.
    if (!out.empty() && out.back().feasible && (!r.feasible || r.total_bits > out.back().total_bits) &&
        n > out.back().tree.leaf_count() + 1)
      r = out.back();
    out.push_back(std::move(r));
  }
  return out;
}

SearchResult genetic_tree_search(const ConditionalHistogram& hist, const SearchConfig& config) {
  LeafEvaluator ev(hist, config.rules, config.test_set, config.label_set, config.code_set);
  auto curve = genetic_tree_curve(ev, config);
  for (int m = config.max_leaves; m >= 1; --m)
    if (curve[static_cast<std::size_t>(m - 1)].feasible) return curve[static_cast<std::size_t>(m - 1)];
  return {};
}

// ---------------------------------------------------------------------------
// Cell clustering

CellClustering genetic_cell_clustering(const ConditionalHistogram& hist, int num_clusters,
                                       std::span<const CodeShape> codes, ClusterMode mode,
                                       const GeneticParams& params, std::span<const Label> labels,
                                       const EvalRules& rules_in) {
  params.validate();
  if (num_clusters < 1) throw ValidationError("num_clusters must be at least 1");
  if (codes.empty()) throw ValidationError("cell clustering needs a nonempty code set");
  EvalRules rules = rules_in;
  rules.space = hist.space();
  LeafEvaluator ev(hist, rules, {}, std::vector<Label>(labels.begin(), labels.end()),
                   std::vector<CodeShape>(codes.begin(), codes.end()), LeafEvaluator::Universe::Observed);
  const std::size_t ncells = ev.cell_count();
  const std::size_t ncodes = codes.size();
  const int nc = num_clusters;

  // Per-cell bits of each code under ideal ranking.
  std::vector<std::vector<std::uint64_t>> table(ncells, std::vector<std::uint64_t>(ncodes));
  std::vector<int> cell_best(ncells, 0);
  for (std::size_t c = 0; c < ncells; ++c) {
    const auto sc = sorted_counts(ev.counts(c));
    for (std::size_t j = 0; j < ncodes; ++j) {
      table[c][j] = assigned_bits(codes[j], sc);
      if (table[c][j] < table[c][static_cast<std::size_t>(cell_best[c])]) cell_best[c] = static_cast<int>(j);
    }
  }

  struct Ind {
    std::vector<int> assign;
    std::vector<std::uint64_t> cluster_bits;
    std::uint64_t bits = kInfeasible;
  };

  auto cluster_cost = [&](const Ind& ind, int cl, int* code_out, std::vector<int>* labels_out) -> std::uint64_t {
    if (mode == ClusterMode::PerfectLabels) {
      std::vector<std::uint64_t> sums(ncodes, 0);
      bool any = false;
      for (std::size_t c = 0; c < ncells; ++c)
        if (ind.assign[c] == cl) {
          any = true;
          for (std::size_t j = 0; j < ncodes; ++j) sums[j] += table[c][j];
        }
      if (!any) {
        if (code_out) *code_out = -1;
        return 0;
      }
      const auto it = std::min_element(sums.begin(), sums.end());
      if (code_out) *code_out = static_cast<int>(it - sums.begin());
      return *it;
    }
    CellSet s = ev.none();
    for (std::size_t c = 0; c < ncells; ++c)
      if (ind.assign[c] == cl) s.set(c);
    if (s.empty()) {
      if (code_out) *code_out = -1;
      return 0;
    }
    const auto r = ev.leaf(s);
    if (code_out) *code_out = r->best_code;
    if (labels_out && r->best_code >= 0) *labels_out = r->labels[static_cast<std::size_t>(r->best_code)];
    return r->best_bits;
  };
  auto rescore = [&](Ind& ind, const std::vector<char>& dirty) {
    ind.cluster_bits.resize(static_cast<std::size_t>(nc), 0);
    std::uint64_t total = 0;
    for (int cl = 0; cl < nc; ++cl) {
      if (dirty[static_cast<std::size_t>(cl)]) ind.cluster_bits[static_cast<std::size_t>(cl)] = cluster_cost(ind, cl, nullptr, nullptr);
      total = add_sat(total, ind.cluster_bits[static_cast<std::size_t>(cl)]);
    }
    ind.bits = total;
  };
  const std::vector<char> all_dirty(static_cast<std::size_t>(nc), 1);

  Rng rng(params.seed);
  std::vector<Ind> population;
  {
    // Cells grouped by their best code; the heaviest groups get their own cluster.
    std::vector<std::uint64_t> group_mass(ncodes, 0);
    for (std::size_t c = 0; c < ncells; ++c) group_mass[static_cast<std::size_t>(cell_best[c])] += ev.cell_mass(c);
    std::vector<int> order(ncodes);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return group_mass[a] > group_mass[b]; });
    std::vector<int> cluster_of(ncodes, 0);
    for (std::size_t i = 0; i < ncodes; ++i) cluster_of[static_cast<std::size_t>(order[i])] = static_cast<int>(std::min<std::size_t>(i, static_cast<std::size_t>(nc - 1)));
    Ind seed;
    seed.assign.resize(ncells);
    for (std::size_t c = 0; c < ncells; ++c) seed.assign[c] = cluster_of[static_cast<std::size_t>(cell_best[c])];
    rescore(seed, all_dirty);
    population.push_back(std::move(seed));
  }
  while (population.size() < static_cast<std::size_t>(params.population)) {
    Ind ind;
    ind.assign.resize(ncells);
    for (auto& a : ind.assign) a = static_cast<int>(rng.below(static_cast<std::uint64_t>(nc)));
    rescore(ind, all_dirty);
    population.push_back(std::move(ind));
  }

  auto ind_better = [](const Ind& a, const Ind& b) {
    if (a.bits != b.bits) return a.bits < b.bits;
    return a.assign < b.assign;
  };
  for (int it = 0; it < params.iterations && nc > 1 && ncells > 0; ++it) {
    std::vector<Ind> children;
    std::vector<std::vector<char>> dirty;
    for (const auto& parent : population)
      for (int k = 0; k < params.children_per_parent; ++k) {
        Ind child = parent;
        std::vector<char> d(static_cast<std::size_t>(nc), 0);
        bool changed = false;
        while (!changed) {
          for (std::size_t c = 0; c < ncells; ++c) {
            if (!rng.chance(params.mutation_rate)) continue;
            const int to = static_cast<int>(rng.below(static_cast<std::uint64_t>(nc)));
            if (to == child.assign[c]) continue;
            d[static_cast<std::size_t>(child.assign[c])] = 1;
            d[static_cast<std::size_t>(to)] = 1;
            child.assign[c] = to;
            changed = true;
          }
          if (!changed) {
            // Guarantee at least one move.
            const std::size_t c = rng.below(ncells);
            int to = static_cast<int>(rng.below(static_cast<std::uint64_t>(nc - 1)));
            if (to >= child.assign[c]) ++to;
            d[static_cast<std::size_t>(child.assign[c])] = 1;
            d[static_cast<std::size_t>(to)] = 1;
            child.assign[c] = to;
            changed = true;
          }
        }
        children.push_back(std::move(child));
        dirty.push_back(std::move(d));
      }
    parallel_for(children.size(), params.threads, [&](std::size_t i) { rescore(children[i], dirty[i]); });
    std::vector<Ind> all = std::move(population);
    for (auto& c : children) all.push_back(std::move(c));
    std::size_t best = 0;
    for (std::size_t i = 1; i < all.size(); ++i)
      if (ind_better(all[i], all[best])) best = i;
    population.clear();
    population.push_back(all[best]);
    while (population.size() < static_cast<std::size_t>(params.population)) {
      const auto& a = all[rng.below(all.size())];
      const auto& b = all[rng.below(all.size())];
      population.push_back(ind_better(b, a) ? b : a);
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < population.size(); ++i)
    if (ind_better(population[i], population[best])) best = i;
  const Ind& win = population[best];

  CellClustering out;
  for (std::size_t c = 0; c < ncells; ++c) out.cells.push_back(ev.cell(c));
  out.assignment = win.assign;
  out.num_clusters = nc;
  out.cluster_codes.resize(static_cast<std::size_t>(nc), -1);
  out.cluster_labels.resize(static_cast<std::size_t>(nc));
  for (int cl = 0; cl < nc; ++cl)
    cluster_cost(win, cl, &out.cluster_codes[static_cast<std::size_t>(cl)],
                 mode == ClusterMode::LabelSet ? &out.cluster_labels[static_cast<std::size_t>(cl)] : nullptr);
  out.total_bits = win.bits;
  out.cost = hist.total() && win.bits != kInfeasible ? static_cast<double>(win.bits) / static_cast<double>(hist.total()) : 0.0;
  return out;
}

}  // namespace ipmc
