#include "ipmc/dynlist.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "ipmc/error.hpp"
#include "ipmc/parallel.hpp"
#include "ipmc/random.hpp"

namespace ipmc {

GeneticParams list_genetic_defaults() {
  GeneticParams g;
  g.population = 16;
  g.children_per_parent = 2;
  g.iterations = 200;
  return g;
}

// ---------------------------------------------------------------------------
// IndexEvaluator

IndexEvaluator::IndexEvaluator(const ConditionalHistogram& hist, const EvalRules& rules, std::vector<Label> vocabulary,
                               std::vector<CodeShape> codes)
    : rules_(rules), vocab_(std::move(vocabulary)) {
  const int k = rules_.space.k;
  if (hist.space().k != k) throw Error("histogram k does not match the rules");
  std::vector<char> numeric(static_cast<std::size_t>(k), 0);
  std::uint8_t mask = 0;
  for (const auto& l : vocab_) {
    if (l.kind == Label::Kind::Numeric && l.value >= 0 && l.value < k) numeric[static_cast<std::size_t>(l.value)] = 1;
    mask |= l.context_mask();
  }
  for (int m = 0; m < k; ++m)
    if (!numeric[static_cast<std::size_t>(m)])
      throw ValidationError("vocabulary lacks numeric mode " + std::to_string(m));
  if (!hist.context_set().contains_all(mask))
    throw Error("histogram contexts {" + hist.context_set().to_string() + "} do not cover the vocabulary");

  std::set<std::vector<int>> seen_lengths;
  for (auto& c : codes) {
    if (!c.complete_for(k)) throw ValidationError("code " + c.to_string() + " is not complete for k=" + std::to_string(k));
    const auto lengths = c.rank_lengths();
    if (!seen_lengths.insert(lengths).second) continue;
    std::vector<std::pair<int, int>> runs;
    for (int r = 0; r < static_cast<int>(lengths.size()); ++r) {
      if (!runs.empty() && runs.back().second == lengths[static_cast<std::size_t>(r)])
        runs.back().first = r + 1;
      else
        runs.emplace_back(r + 1, lengths[static_cast<std::size_t>(r)]);
    }
    runs_.push_back(std::move(runs));
    codes_.push_back(std::move(c));
  }
  if (codes_.empty()) throw ValidationError("list search needs a nonempty code set");

  std::map<ContextTuple, std::vector<std::uint64_t>> merged;
  for (const auto& cell : hist.cells()) {
    const ContextTuple a = rules_.apply(cell.key);
    ContextTuple key;
    for (Context c : kAllContexts)
      if (mask & context_bit(c)) key.set(c, a[c]);
    auto& dst = merged[key];
    if (dst.empty()) dst.assign(static_cast<std::size_t>(k), 0);
    for (int m = 0; m < k; ++m) dst[static_cast<std::size_t>(m)] += cell.counts[static_cast<std::size_t>(m)];
  }
  for (const auto& [key, counts] : merged) {
    CellData d;
    for (const auto& l : vocab_) d.values.push_back(l.kind == Label::Kind::Derived ? kUnavailable : eval_label(l, key, rules_));
    for (int m = 0; m < k; ++m)
      if (counts[static_cast<std::size_t>(m)]) {
        d.modes.emplace_back(m, counts[static_cast<std::size_t>(m)]);
        mass_ += counts[static_cast<std::size_t>(m)];
      }
    if (!d.modes.empty()) cells_.push_back(std::move(d));
  }
}

std::vector<std::uint64_t> IndexEvaluator::index_histogram(std::span<const int> order) const {
  const int k = rules_.space.k;
  std::vector<std::uint64_t> h(static_cast<std::size_t>(k), 0);
  std::vector<std::uint64_t> want(static_cast<std::size_t>(k), 0);
  std::vector<char> seen(static_cast<std::size_t>(k), 0);
  std::vector<int> emitted;
  emitted.reserve(static_cast<std::size_t>(k));
  for (const auto& cell : cells_) {
    for (const auto& [m, c] : cell.modes) want[static_cast<std::size_t>(m)] = c;
    std::size_t remaining = cell.modes.size();
    emitted.clear();
    auto emit = [&](int m) {
      if (m < 0 || seen[static_cast<std::size_t>(m)]) return;
      seen[static_cast<std::size_t>(m)] = 1;
      if (const auto w = want[static_cast<std::size_t>(m)]) {
        h[emitted.size()] += w;
        --remaining;
      }
      emitted.push_back(m);
    };
    for (int li : order) {
      const Label& l = vocab_[static_cast<std::size_t>(li)];
      if (l.kind == Label::Kind::Derived) {
        const std::size_t n = emitted.size();
        for (std::size_t j = 0; j < n && remaining; ++j) {
          if (!rules_.space.is_angular(emitted[j])) continue;
          emit(rules_.space.wrap_angular(emitted[j], -1));
          if (remaining) emit(rules_.space.wrap_angular(emitted[j], 1));
        }
      } else {
        emit(cell.values[static_cast<std::size_t>(li)]);
      }
      if (!remaining) break;
    }
    for (int m : emitted) seen[static_cast<std::size_t>(m)] = 0;
    for (const auto& [m, c] : cell.modes) want[static_cast<std::size_t>(m)] = 0;
    if (remaining) throw Error("label order does not cover every mode");
  }
  return h;
}

std::uint64_t IndexEvaluator::bits_for_histogram(std::span<const std::uint64_t> index_hist, int* code) const {
  std::vector<std::uint64_t> cum(index_hist.size() + 1, 0);
  for (std::size_t i = 0; i < index_hist.size(); ++i) cum[i + 1] = cum[i] + index_hist[i];
  std::uint64_t best = kInfeasible;
  for (std::size_t c = 0; c < runs_.size(); ++c) {
    std::uint64_t total = 0;
    int start = 0;
    for (const auto& [end, len] : runs_[c]) {
      total += (cum[static_cast<std::size_t>(end)] - cum[static_cast<std::size_t>(start)]) * static_cast<std::uint64_t>(len);
      start = end;
    }
    if (total < best) {
      best = total;
      if (code) *code = static_cast<int>(c);
    }
  }
  return best;
}

std::uint64_t IndexEvaluator::bits(std::span<const int> order, int* code) const {
  return bits_for_histogram(index_histogram(order), code);
}

std::vector<int> IndexEvaluator::frequency_order() const {
  std::vector<std::uint64_t> hits(vocab_.size(), 0);
  for (const auto& cell : cells_)
    for (std::size_t j = 0; j < vocab_.size(); ++j) {
      const int v = cell.values[j];
      if (v < 0) continue;
      for (const auto& [m, c] : cell.modes)
        if (m == v) hits[j] += c;
    }
  std::vector<int> order(vocab_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return hits[static_cast<std::size_t>(a)] > hits[static_cast<std::size_t>(b)]; });
  return order;
}

std::vector<int> IndexEvaluator::order_of(std::span<const Label> list) const {
  std::vector<int> order;
  std::vector<char> used(vocab_.size(), 0);
  for (const auto& l : list) {
    for (std::size_t j = 0; j < vocab_.size(); ++j)
      if (!used[j] && vocab_[j] == l) {
        used[j] = 1;
        order.push_back(static_cast<int>(j));
        break;
      }
  }
  for (std::size_t j = 0; j < vocab_.size(); ++j)
    if (!used[j]) order.push_back(static_cast<int>(j));
  return order;
}

// ---------------------------------------------------------------------------
// Genetic list search

namespace {

struct ListIndividual {
  std::vector<int> order;
  std::uint64_t bits = kInfeasible;
};

bool list_better(const ListIndividual& a, const ListIndividual& b) {
  if (a.bits != b.bits) return a.bits < b.bits;
  return a.order < b.order;
}

void mutate_order(std::vector<int>& order, Rng& rng) {
  const std::size_t n = order.size();
  if (n < 2) return;
  do {
    const std::size_t i = rng.below(n);
    std::size_t j = rng.below(n - 1);
    if (j >= i) ++j;
    if (rng.chance(0.5)) {
      std::swap(order[i], order[j]);
    } else {
      const int v = order[i];
      order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
      order.insert(order.begin() + static_cast<std::ptrdiff_t>(j), v);
    }
  } while (rng.chance(0.3));
}

}  // namespace

ListSearchResult genetic_list_search(const IndexEvaluator& ev, const GeneticParams& params,
                                     std::span<const std::vector<Label>> warm_lists, bool sweep) {
  params.validate();
  const std::size_t n = ev.vocabulary().size();
  Rng rng(params.seed);

  std::vector<ListIndividual> population;
  {
    std::vector<int> identity(n);
    std::iota(identity.begin(), identity.end(), 0);
    population.push_back({identity});
    population.push_back({ev.frequency_order()});
    for (const auto& w : warm_lists) population.push_back({ev.order_of(w)});
    while (population.size() < static_cast<std::size_t>(params.population)) {
      auto o = identity;
      rng.shuffle(o);
      population.push_back({std::move(o)});
    }
  }
  auto score_all = [&](std::vector<ListIndividual>& v) {
    parallel_for(v.size(), params.threads, [&](std::size_t i) { v[i].bits = ev.bits(v[i].order); });
  };
  score_all(population);
  std::stable_sort(population.begin(), population.end(), list_better);
  population.resize(std::max<std::size_t>(static_cast<std::size_t>(params.population), 1));

  ListSearchResult out;
  out.trace.push_back(population.front().bits);
  for (int it = 0; it < params.iterations; ++it) {
    std::vector<ListIndividual> children;
    for (const auto& parent : population)
      for (int c = 0; c < params.children_per_parent; ++c) {
        ListIndividual child{parent.order};
        mutate_order(child.order, rng);
        children.push_back(std::move(child));
      }
    score_all(children);
    std::vector<ListIndividual> all = std::move(population);
    for (auto& c : children) all.push_back(std::move(c));
    std::size_t best = 0;
    for (std::size_t i = 1; i < all.size(); ++i)
      if (list_better(all[i], all[best])) best = i;
    population.clear();
    population.push_back(all[best]);
    while (population.size() < static_cast<std::size_t>(params.population)) {
      const auto& a = all[rng.below(all.size())];
      const auto& b = all[rng.below(all.size())];
      population.push_back(list_better(b, a) ? b : a);
    }
    out.trace.push_back(population.front().bits);
  }

  ListIndividual best = population.front();
  if (sweep && n > 1) {
    // Move each label, in list order, to its cheapest position.
    const std::vector<int> labels = best.order;
    for (int label : labels) {
      const auto at = std::find(best.order.begin(), best.order.end(), label) - best.order.begin();
      std::vector<int> rest = best.order;
      rest.erase(rest.begin() + at);
      std::vector<std::uint64_t> cost(n, kInfeasible);
      parallel_for(n, params.threads, [&](std::size_t pos) {
        if (static_cast<std::ptrdiff_t>(pos) == at) return;
        std::vector<int> o = rest;
        o.insert(o.begin() + static_cast<std::ptrdiff_t>(pos), label);
        cost[pos] = ev.bits(o);
      });
      const auto pos = static_cast<std::size_t>(std::min_element(cost.begin(), cost.end()) - cost.begin());
      if (cost[pos] < best.bits) {
        rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(pos), label);
        best = {std::move(rest), cost[pos]};
      }
    }
    out.trace.push_back(best.bits);
  }

  int code = 0;
  out.total_bits = ev.bits(best.order, &code);
  out.code = ev.codes()[static_cast<std::size_t>(code)];
  for (int i : best.order) out.list.push_back(ev.vocabulary()[static_cast<std::size_t>(i)]);
  out.cost = ev.mass() ? static_cast<double>(out.total_bits) / static_cast<double>(ev.mass()) : 0.0;
  return out;
}

ListSearchResult genetic_list_search(const ConditionalHistogram& hist, std::span<const Label> vocabulary,
                                     std::span<const CodeShape> code_set, const GeneticParams& params,
                                     const EvalRules& rules) {
  IndexEvaluator ev(hist, rules, std::vector<Label>(vocabulary.begin(), vocabulary.end()),
                    std::vector<CodeShape>(code_set.begin(), code_set.end()));
  return genetic_list_search(ev, params);
}

// ---------------------------------------------------------------------------
// Tree with dynamic leaves

DynTreeConfig jem_dyntree_config() {
  DynTreeConfig c;
  c.rules = EvalRules{SymbolSpace::jem(), UnavailableRule::Keep, false};
  c.tests = jem_tests();
  c.vocabulary = dynlist_vocabulary(c.rules.space);
  c.codes = enumerate_codes(c.rules.space, dynamic_code_profile(c.rules.space));
  return c;
}

namespace {

std::vector<Label> proxy_labels(const SymbolSpace& space) {
  std::vector<Label> out = parse_labelling("L,U,L-1,L+1,U-1,U+1,L-2,L+2,U-2,U+2,min,max,min-1,min+1,max-1,max+1,|1-min|,mean");
  for (int m = 0; m < space.k; ++m) out.push_back(Label::numeric(m));
  return out;
}

}  // namespace

Scheme build_tree_dynlist(const ConditionalHistogram& hist, const DynTreeConfig& config) {
  if (config.num_leaves < 1) throw ValidationError("num_leaves must be at least 1");
  const EvalRules& rules = config.rules;

  // Tree skeleton from static labellings over L and U.
  std::vector<TreeNode> nodes{TreeNode{}};
  int leaves = 1;
  if (config.num_leaves > 1 && !config.tests.empty()) {
    SearchConfig sc;
    sc.rules = rules;
    sc.test_set = config.tests;
    sc.max_leaves = config.num_leaves;
    sc.max_depth = config.max_depth;
    const ContextSet lu({Context::L, Context::U});
    const ConditionalHistogram proxy_hist = hist.project(lu);
    EnumerationParams proxy_codes = static_code_profile(rules.space);
    proxy_codes.mpm_counts = {3};
    LeafEvaluator ev(proxy_hist, rules, config.tests, proxy_labels(rules.space),
                     enumerate_codes(rules.space, proxy_codes));
    const auto curve = exhaustive_tree_curve(ev, sc);
    for (int m = config.num_leaves; m >= 1; --m) {
      const auto& r = curve[static_cast<std::size_t>(m - 1)];
      if (!r.feasible) continue;
      nodes = r.scheme.nodes();
      leaves = m;
      break;
    }
  } else {
    nodes[0].leaf = 0;
  }

  // Route each histogram cell to its leaf.
  std::vector<HistogramBuilder> parts;
  for (int i = 0; i < leaves; ++i) parts.emplace_back(hist.space(), hist.context_set());
  auto route = [&](const ContextTuple& raw) {
    const ContextTuple a = rules.apply(raw);
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].test)
      i = nodes[static_cast<std::size_t>(i)].test->eval(a) ? nodes[static_cast<std::size_t>(i)].on_true
                                                            : nodes[static_cast<std::size_t>(i)].on_false;
    return nodes[static_cast<std::size_t>(i)].leaf;
  };
  for (const auto& cell : hist.cells()) {
    auto& b = parts[static_cast<std::size_t>(route(cell.key))];
    for (std::size_t m = 0; m < cell.counts.size(); ++m)
      if (cell.counts[m]) b.add(cell.key, static_cast<int>(m), cell.counts[m]);
  }

  std::vector<Leaf> out(static_cast<std::size_t>(leaves));
  for (int i = 0; i < leaves; ++i) {
    const ConditionalHistogram sub = std::move(parts[static_cast<std::size_t>(i)]).finish();
    IndexEvaluator ev(sub, rules, config.vocabulary, config.codes);
    GeneticParams g = config.genetic;
    g.seed = config.genetic.seed + static_cast<std::uint64_t>(i);
    const auto r = genetic_list_search(ev, g, config.warm_lists);
    Leaf& leaf = out[static_cast<std::size_t>(i)];
    leaf.kind = Leaf::Kind::Dynamic;
    leaf.list.items = r.list;
    leaf.shape = r.code;
  }
  return Scheme(rules, std::move(nodes), std::move(out));
}

// ---------------------------------------------------------------------------
// Multipass training

MultipassResult multipass_train(std::span<const Sample> samples, const Scheme& initial, const MultipassParams& params) {
  if (params.passes < 1) throw ValidationError("passes must be at least 1");
  if (!(params.lambda >= 0.0)) throw ValidationError("lambda must be nonnegative");
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].rd_candidates.empty())
      throw ValidationError("sample " + std::to_string(i) + " has no rd candidates");
  if (!(initial.space() == params.tree.rules.space)) throw ValidationError("initial scheme k does not match the search");

  MultipassResult out;
  out.scheme = initial;
  std::vector<int> selected(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) selected[i] = samples[i].ipm;

  for (int pass = 1; pass <= params.passes; ++pass) {
    const Scheme& current = out.scheme;
    PassReport rep;
    rep.pass = pass;
    HistogramBuilder hb(current.space(), ContextSet::all());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample& s = samples[i];
      int pick = s.rd_candidates.front().mode;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : s.rd_candidates) {
        const double j = c.distortion + params.lambda * current.bits_for(s.ctx, c.mode);
        if (j < best) {
          best = j;
          pick = c.mode;
        }
      }
      rep.flips += pick != selected[i];
      selected[i] = pick;
      hb.add(s.ctx, pick);
    }
    const ConditionalHistogram hist = std::move(hb).finish();

    DynTreeConfig cfg = params.tree;
    cfg.genetic.seed = params.tree.genetic.seed + 1000003ULL * static_cast<std::uint64_t>(pass);
    for (const auto& leaf : current.leaves())
      if (leaf.kind == Leaf::Kind::Dynamic) cfg.warm_lists.push_back(leaf.list.items);
    Scheme derived = build_tree_dynlist(hist, cfg);

    rep.ref_cost = current.evaluate(hist).bits_per_ipm;
    const double derived_cost = derived.evaluate(hist).bits_per_ipm;
    rep.new_cost = std::min(derived_cost, rep.ref_cost);
    rep.delta = rep.ref_cost > 0.0 ? (rep.new_cost - rep.ref_cost) / rep.ref_cost : 0.0;
    if (derived_cost < rep.ref_cost) {
      derived.set_name("pass" + std::to_string(pass));
      out.scheme = std::move(derived);
    }
    out.passes.push_back(rep);
  }
  return out;
}

}  // namespace ipmc
