#include "ipmc/scheme.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "ipmc/error.hpp"

namespace ipmc {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Tests

bool Test::eval(const ContextTuple& c) const noexcept {
  const int l = c[Context::L];
  const int u = c[Context::U];
  switch (kind) {
    case Kind::CtxEq: return c[a] == c[b];
    case Kind::AbsDiffLt: return c[a] >= 0 && c[b] >= 0 && std::abs(c[a] - c[b]) < t;
    case Kind::AbsDiffEq: return c[a] >= 0 && c[b] >= 0 && std::abs(c[a] - c[b]) == t;
    case Kind::ModAbsDiffLt: return c[a] >= 0 && c[b] >= 0 && mod > 0 && std::abs(c[a] - c[b]) % mod < t;
    case Kind::MinGt: return l >= 0 && u >= 0 && std::min(l, u) > t;
    case Kind::MinLt: return l >= 0 && u >= 0 && std::min(l, u) < t;
    case Kind::MaxLt: return l >= 0 && u >= 0 && std::max(l, u) < t;
    case Kind::SumLt: return l >= 0 && u >= 0 && l + u < t;
    case Kind::CtxLt: return c[a] >= 0 && c[a] < t;
    case Kind::AbsDistToConstLt: return c[a] >= 0 && std::abs(c[a] - m) < t;
  }
  return false;
}

std::uint8_t Test::context_mask() const noexcept {
  switch (kind) {
    case Kind::CtxEq:
    case Kind::AbsDiffLt:
    case Kind::AbsDiffEq:
    case Kind::ModAbsDiffLt: return context_bit(a) | context_bit(b);
    case Kind::CtxLt:
    case Kind::AbsDistToConstLt: return context_bit(a);
    default: return context_bit(Context::L) | context_bit(Context::U);
  }
}

std::string Test::to_string() const {
  const std::string sa(context_name(a));
  const std::string sb(context_name(b));
  const std::string st = std::to_string(t);
  switch (kind) {
    case Kind::CtxEq: return sa + "==" + sb;
    case Kind::AbsDiffLt: return "|" + sa + "-" + sb + "|<" + st;
    case Kind::AbsDiffEq: return "|" + sa + "-" + sb + "|==" + st;
    case Kind::ModAbsDiffLt: return "|" + sa + "-" + sb + "|%" + std::to_string(mod) + "<" + st;
    case Kind::MinGt: return "min>" + st;
    case Kind::MinLt: return "min<" + st;
    case Kind::MaxLt: return "max<" + st;
    case Kind::SumLt: return "L+U<" + st;
    case Kind::CtxLt: return sa + "<" + st;
    case Kind::AbsDistToConstLt: return "|" + sa + "-" + std::to_string(m) + "|<" + st;
  }
  return "?";
}

Test Test::parse(std::string_view text) {
  std::string s;
  for (char ch : text)
    if (!std::isspace(static_cast<unsigned char>(ch))) s += ch;
  static const std::regex eq(R"(^([A-Z]+)==([A-Z]+)$)");
  static const std::regex absd(R"(^\|([A-Z]+)-([A-Z]+|\d+)\|(<|==)(\d+)$)");
  static const std::regex modd(R"(^\|([A-Z]+)-([A-Z]+)\|%(\d+)<(\d+)$)");
  static const std::regex minmax(R"(^(min|max)([<>])(-?\d+)$)");
  static const std::regex sum(R"(^L\+U<(-?\d+)$)");
  static const std::regex lt(R"(^([A-Z]+)<(-?\d+)$)");
  auto ctx = [&](const std::string& name) {
    Context c;
    if (!parse_context(name, c)) throw ParseError("unknown context '" + name + "' in test '" + s + "'");
    return c;
  };
  std::smatch mt;
  if (std::regex_match(s, mt, eq)) return ctx_eq(ctx(mt[1]), ctx(mt[2]));
  if (std::regex_match(s, mt, modd)) return mod_abs_diff_lt(ctx(mt[1]), ctx(mt[2]), std::stoi(mt[3]), std::stoi(mt[4]));
  if (std::regex_match(s, mt, absd)) {
    const std::string rhs = mt[2];
    const int t = std::stoi(mt[4]);
    if (std::isdigit(static_cast<unsigned char>(rhs[0]))) {
      if (mt[3] != "<") throw ParseError("unsupported test '" + s + "'");
      return abs_dist_to_const_lt(ctx(mt[1]), std::stoi(rhs), t);
    }
    return mt[3] == "<" ? abs_diff_lt(ctx(mt[1]), ctx(rhs), t) : abs_diff_eq(ctx(mt[1]), ctx(rhs), t);
  }
  if (std::regex_match(s, mt, minmax)) {
    const int t = std::stoi(mt[3]);
    if (mt[1] == "min") return mt[2] == ">" ? min_gt(t) : min_lt(t);
    if (mt[2] == "<") return max_lt(t);
  }
  if (std::regex_match(s, mt, sum)) return sum_lt(std::stoi(mt[1]));
  if (std::regex_match(s, mt, lt)) return ctx_lt(ctx(mt[1]), std::stoi(mt[2]));
  throw ParseError("unknown test '" + s + "'");
}

std::vector<Test> hevc_tests() {
  return {Test::ctx_eq(Context::L, Context::U), Test::min_gt(0), Test::sum_lt(2), Test::ctx_lt(Context::L, 2)};
}

std::vector<Test> extended_hevc_tests() {
  using C = Context;
  return {Test::ctx_eq(C::L, C::U),
          Test::abs_diff_lt(C::L, C::U, 2),
          Test::abs_diff_eq(C::L, C::U, 2),
          Test::min_gt(1),
          Test::min_lt(1),
          Test::max_lt(2),
          Test::sum_lt(2),
          Test::abs_dist_to_const_lt(C::L, 10, 3),
          Test::abs_dist_to_const_lt(C::L, 26, 3),
          Test::abs_dist_to_const_lt(C::L, 18, 3),
          Test::abs_dist_to_const_lt(C::U, 10, 3),
          Test::abs_dist_to_const_lt(C::U, 26, 3),
          Test::abs_dist_to_const_lt(C::U, 18, 3),
          Test::ctx_lt(C::L, 2)};
}

std::vector<Test> jem_tests() {
  using C = Context;
  return {Test::ctx_eq(C::L, C::U),
          Test::abs_diff_lt(C::L, C::U, 2),
          Test::abs_diff_eq(C::L, C::U, 2),
          Test::mod_abs_diff_lt(C::L, C::U, 63, 3),
          Test::abs_diff_lt(C::L, C::U, 5),
          Test::min_gt(1),
          Test::min_lt(1),
          Test::max_lt(2),
          Test::sum_lt(2),
          Test::abs_dist_to_const_lt(C::L, 18, 3),
          Test::abs_dist_to_const_lt(C::L, 34, 3),
          Test::abs_dist_to_const_lt(C::L, 50, 3),
          Test::abs_dist_to_const_lt(C::U, 18, 3),
          Test::abs_dist_to_const_lt(C::U, 34, 3),
          Test::abs_dist_to_const_lt(C::U, 50, 3),
          Test::ctx_lt(C::L, 2)};
}

std::vector<Test> test_preset(std::string_view name) {
  if (name == "hevc") return hevc_tests();
  if (name == "hevc-ext") return extended_hevc_tests();
  if (name == "jem") return jem_tests();
  throw ParseError("unknown test preset '" + std::string(name) + "' (expected hevc|hevc-ext|jem)");
}

// ---------------------------------------------------------------------------
// Dynamic lists

void DynamicList::validate(const SymbolSpace& space) const {
  if (head_items < 0 || head_items > static_cast<int>(items.size()) || head_cap < 0)
    throw ValidationError("dynamic list head out of range");
  if (head_items > 0 && head_cap == 0) throw ValidationError("dynamic list head needs a cap");
  std::vector<char> present(static_cast<std::size_t>(space.k), 0);
  for (std::size_t i = static_cast<std::size_t>(head_items); i < items.size(); ++i) {
    const Label& l = items[i];
    if (l.kind == Label::Kind::Numeric && space.valid_mode(l.value)) present[static_cast<std::size_t>(l.value)] = 1;
  }
  for (int m = 0; m < space.k; ++m)
    if (!present[static_cast<std::size_t>(m)])
      throw ValidationError("dynamic list misses numeric label #" + std::to_string(m));
}

std::vector<int> DynamicList::resolve(const ContextTuple& applied, const EvalRules& rules) const {
  const int k = rules.space.k;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  std::vector<char> seen(static_cast<std::size_t>(k), 0);
  std::size_t limit = static_cast<std::size_t>(k);
  auto emit = [&](int m) {
    if (m < 0 || m >= k || seen[static_cast<std::size_t>(m)] || out.size() >= limit) return;
    seen[static_cast<std::size_t>(m)] = 1;
    out.push_back(m);
  };
  auto run = [&](const Label& l) {
    if (l.kind != Label::Kind::Derived) {
      emit(eval_label(l, applied, rules));
      return;
    }
    const std::size_t n = out.size();
    for (std::size_t j = 0; j < n; ++j) {
      const int base = out[j];
      if (!rules.space.is_angular(base)) continue;
      emit(rules.space.wrap_angular(base, -1));
      emit(rules.space.wrap_angular(base, 1));
    }
  };
  if (head_items > 0) {
    limit = static_cast<std::size_t>(head_cap);
    for (int i = 0; i < head_items && out.size() < limit; ++i) run(items[static_cast<std::size_t>(i)]);
    limit = static_cast<std::size_t>(k);
  }
  for (std::size_t i = static_cast<std::size_t>(head_items); i < items.size() && out.size() < limit; ++i) run(items[i]);
  if (static_cast<int>(out.size()) != k) throw Error("dynamic list does not cover every mode");
  return out;
}

// ---------------------------------------------------------------------------
// Scheme

std::vector<int> static_permutation(std::span<const int> mpms, int k) {
  std::vector<int> out(mpms.begin(), mpms.end());
  std::vector<char> used(static_cast<std::size_t>(k), 0);
  for (int m : mpms) used[static_cast<std::size_t>(m)] = 1;
  for (int m = 0; m < k; ++m)
    if (!used[static_cast<std::size_t>(m)]) out.push_back(m);
  return out;
}

Scheme::Scheme(EvalRules rules, std::vector<TreeNode> nodes, std::vector<Leaf> leaves, std::string name)
    : rules_(std::move(rules)), nodes_(std::move(nodes)), leaves_(std::move(leaves)), name_(std::move(name)) {
  build_tables();
}

Scheme Scheme::single_leaf(EvalRules rules, Leaf leaf, std::string name) {
  TreeNode root;
  root.leaf = 0;
  return Scheme(std::move(rules), {root}, {std::move(leaf)}, std::move(name));
}

void Scheme::build_tables() {
  tables_.clear();
  decoders_.clear();
  for (const Leaf& l : leaves_) {
    CodewordTable t;
    if (l.shape.complete_for(rules_.space.k)) t = realize_codewords(l.shape);
    decoders_.emplace_back(t);
    tables_.push_back(std::move(t));
  }
}

std::uint8_t Scheme::context_mask() const noexcept {
  std::uint8_t m = 0;
  for (const auto& n : nodes_)
    if (n.test) m |= n.test->context_mask();
  for (const auto& l : leaves_) {
    for (const auto& lab : l.labels) m |= lab.context_mask();
    for (const auto& lab : l.list.items) m |= lab.context_mask();
  }
  return m;
}

int Scheme::route(const ContextTuple& raw) const {
  const ContextTuple c = rules_.apply(raw);
  int n = 0;
  while (nodes_[static_cast<std::size_t>(n)].test) {
    const TreeNode& node = nodes_[static_cast<std::size_t>(n)];
    n = node.test->eval(c) ? node.on_true : node.on_false;
  }
  return nodes_[static_cast<std::size_t>(n)].leaf;
}

std::vector<int> Scheme::static_order(const Leaf& leaf, const ContextTuple& applied) const {
  std::vector<int> mpms;
  mpms.reserve(leaf.labels.size());
  for (const Label& l : leaf.labels) {
    const int v = eval_label(l, applied, rules_);
    if (v < 0 || std::find(mpms.begin(), mpms.end(), v) != mpms.end())
      throw Error("static labelling " + labelling_to_string(leaf.labels) + " conflicts at runtime");
    mpms.push_back(v);
  }
  return mpms;
}

std::vector<int> Scheme::permutation(const ContextTuple& raw) const {
  const ContextTuple c = rules_.apply(raw);
  const Leaf& leaf = leaves_[static_cast<std::size_t>(route(raw))];
  if (leaf.kind == Leaf::Kind::Dynamic) return leaf.list.resolve(c, rules_);
  const auto mpms = static_order(leaf, c);
  return static_permutation(mpms, rules_.space.k);
}

int Scheme::rank_of(const ContextTuple& raw, int ipm) const {
  const ContextTuple c = rules_.apply(raw);
  const Leaf& leaf = leaves_[static_cast<std::size_t>(route(raw))];
  if (leaf.kind == Leaf::Kind::Dynamic) {
    const auto perm = leaf.list.resolve(c, rules_);
    return static_cast<int>(std::find(perm.begin(), perm.end(), ipm) - perm.begin());
  }
  const auto mpms = static_order(leaf, c);
  int below = 0;
  for (std::size_t j = 0; j < mpms.size(); ++j) {
    if (mpms[j] == ipm) return static_cast<int>(j);
    if (mpms[j] < ipm) ++below;
  }
  return static_cast<int>(mpms.size()) + ipm - below;
}

int Scheme::mode_at(const ContextTuple& raw, int rank) const {
  const ContextTuple c = rules_.apply(raw);
  const Leaf& leaf = leaves_[static_cast<std::size_t>(route(raw))];
  if (leaf.kind == Leaf::Kind::Dynamic) return leaf.list.resolve(c, rules_)[static_cast<std::size_t>(rank)];
  auto mpms = static_order(leaf, c);
  const int m = static_cast<int>(mpms.size());
  if (rank < m) return mpms[static_cast<std::size_t>(rank)];
  std::sort(mpms.begin(), mpms.end());
  int mode = rank - m;
  for (int v : mpms)
    if (v <= mode) ++mode;
  return mode;
}

int Scheme::bits_for(const ContextTuple& raw, int ipm) const {
  const int leaf = route(raw);
  return tables_[static_cast<std::size_t>(leaf)].words[static_cast<std::size_t>(rank_of(raw, ipm))].length;
}

CostReport Scheme::evaluate(const ConditionalHistogram& hist) const {
  if (hist.space().k != rules_.space.k)
    throw Error("histogram k=" + std::to_string(hist.space().k) + " does not match scheme k=" +
                std::to_string(rules_.space.k));
  if (!hist.context_set().contains_all(context_mask()))
    throw Error("histogram contexts {" + hist.context_set().to_string() + "} do not cover the scheme's contexts");
  CostReport r;
  r.per_leaf.resize(leaves_.size());
  std::vector<std::vector<int>> lengths;
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    r.per_leaf[i].leaf = static_cast<int>(i);
    lengths.push_back(leaves_[i].shape.rank_lengths());
  }
  for (const auto& cell : hist.cells()) {
    const int leaf = route(cell.key);
    const auto perm = permutation(cell.key);
    const auto& len = lengths[static_cast<std::size_t>(leaf)];
    std::uint64_t bits = 0;
    for (std::size_t rank = 0; rank < perm.size(); ++rank)
      bits += cell.counts[static_cast<std::size_t>(perm[rank])] * static_cast<std::uint64_t>(len[rank]);
    r.per_leaf[static_cast<std::size_t>(leaf)].bits += bits;
    r.per_leaf[static_cast<std::size_t>(leaf)].samples += cell.total;
    r.total_bits += bits;
  }
  r.total_samples = hist.total();
  for (auto& lc : r.per_leaf) {
    lc.hit_prob = r.total_samples ? static_cast<double>(lc.samples) / static_cast<double>(r.total_samples) : 0.0;
    lc.bits_per_ipm = lc.samples ? static_cast<double>(lc.bits) / static_cast<double>(lc.samples) : 0.0;
  }
  r.bits_per_ipm = r.total_samples ? static_cast<double>(r.total_bits) / static_cast<double>(r.total_samples) : 0.0;
  return r;
}

std::vector<int> Scheme::leaf_order() const {
  std::vector<int> out;
  std::function<void(int)> walk = [&](int n) {
    const TreeNode& node = nodes_[static_cast<std::size_t>(n)];
    if (!node.test) {
      out.push_back(node.leaf);
      return;
    }
    walk(node.on_true);
    walk(node.on_false);
  };
  if (!nodes_.empty()) walk(0);
  return out;
}

int Scheme::depth() const {
  std::function<int(int)> d = [&](int n) -> int {
    const TreeNode& node = nodes_[static_cast<std::size_t>(n)];
    if (!node.test) return 0;
    return 1 + std::max(d(node.on_true), d(node.on_false));
  };
  return nodes_.empty() ? 0 : d(0);
}

void Scheme::validate() const {
  rules_.space.validate();
  const int k = rules_.space.k;
  if (nodes_.empty()) throw ValidationError("scheme has no tree");
  // Structure: a proper tree over all nodes with every leaf used once.
  std::vector<int> node_seen(nodes_.size(), 0);
  std::vector<int> leaf_seen(leaves_.size(), 0);
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    if (n < 0 || n >= static_cast<int>(nodes_.size())) throw ValidationError("tree references a missing node");
    if (node_seen[static_cast<std::size_t>(n)]++) throw ValidationError("tree node reached twice");
    const TreeNode& node = nodes_[static_cast<std::size_t>(n)];
    if (node.test) {
      stack.push_back(node.on_true);
      stack.push_back(node.on_false);
    } else {
      if (node.leaf < 0 || node.leaf >= static_cast<int>(leaves_.size()))
        throw ValidationError("tree references a missing leaf");
      if (leaf_seen[static_cast<std::size_t>(node.leaf)]++) throw ValidationError("leaf used twice in the tree");
    }
  }
  for (std::size_t i = 0; i < leaves_.size(); ++i)
    if (!leaf_seen[i]) throw ValidationError("leaf " + std::to_string(i) + " is not in the tree");

  bool any_static = false;
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    const Leaf& l = leaves_[i];
    const std::string where = "leaf " + std::to_string(i) + ": ";
    if (!l.shape.complete_for(k)) throw ValidationError(where + "code " + l.shape.to_string() + " is not complete");
    if (l.kind == Leaf::Kind::Dynamic) {
      l.list.validate(rules_.space);
      continue;
    }
    any_static = true;
    if (static_cast<int>(l.labels.size()) != l.shape.mpm_count())
      throw ValidationError(where + "labelling size does not match the code's MPM count");
    for (std::size_t a = 0; a < l.labels.size(); ++a) {
      if (l.labels[a].kind == Label::Kind::Derived) throw ValidationError(where + "derived label in a static leaf");
      for (std::size_t b = a + 1; b < l.labels.size(); ++b)
        if (l.labels[a] == l.labels[b]) throw ValidationError(where + "label repeated");
    }
  }

  // Every combination of the read contexts is routed and checked.
  std::uint8_t mask = 0;
  for (const auto& n : nodes_)
    if (n.test) mask |= n.test->context_mask();
  for (const auto& l : leaves_)
    if (l.kind == Leaf::Kind::Static)
      for (const auto& lab : l.labels) mask |= lab.context_mask();
  std::vector<Context> ctxs;
  for (Context c : kAllContexts)
    if (mask & context_bit(c)) ctxs.push_back(c);
  const int lo = rules_.unavailable == UnavailableRule::Keep ? kUnavailable : 0;
  const int domain = k - lo;
  double combos = 1.0;
  for (std::size_t i = 0; i < ctxs.size(); ++i) combos *= domain;
  if (combos > 5e6) throw ValidationError("too many context combinations to verify the scheme");
  std::vector<char> reached(leaves_.size(), 0);
  ContextTuple t;
  std::vector<int> digit(ctxs.size(), lo);
  std::vector<int> vals;
  for (;;) {
    for (std::size_t i = 0; i < ctxs.size(); ++i) t.set(ctxs[i], digit[i]);
    const int leaf = route(t);
    reached[static_cast<std::size_t>(leaf)] = 1;
    const Leaf& l = leaves_[static_cast<std::size_t>(leaf)];
    if (any_static && l.kind == Leaf::Kind::Static) {
      const ContextTuple c = rules_.apply(t);
      vals.clear();
      for (const Label& lab : l.labels) {
        const int v = eval_label(lab, c, rules_);
        if (v < 0)
          throw ValidationError("leaf " + std::to_string(leaf) + ": label " + lab.to_string() + " unavailable");
        if (std::find(vals.begin(), vals.end(), v) != vals.end())
          throw ValidationError("leaf " + std::to_string(leaf) + ": labels " + labelling_to_string(l.labels) +
                                " collide");
        vals.push_back(v);
      }
    }
    std::size_t i = 0;
    for (; i < digit.size(); ++i) {
      if (++digit[i] < k) break;
      digit[i] = lo;
    }
    if (i == digit.size()) break;
  }
  for (std::size_t i = 0; i < leaves_.size(); ++i)
    if (!reached[i]) throw ValidationError("leaf " + std::to_string(i) + " is unreachable");
}

// ---------------------------------------------------------------------------
// Built-ins

namespace {

// Small builder for trees written as nested calls.
struct TreeBuilder {
  std::vector<TreeNode> nodes;
  int leaf(int id) {
    TreeNode n;
    n.leaf = id;
    nodes.push_back(n);
    return static_cast<int>(nodes.size()) - 1;
  }
  int test(Test t, std::function<int()> on_true, std::function<int()> on_false) {
    const int me = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes[static_cast<std::size_t>(me)].test = t;
    const int a = on_true();
    const int b = on_false();
    nodes[static_cast<std::size_t>(me)].on_true = a;
    nodes[static_cast<std::size_t>(me)].on_false = b;
    return me;
  }
};

Leaf static_leaf(std::string_view labels, std::string_view code) {
  Leaf l;
  l.kind = Leaf::Kind::Static;
  l.labels = parse_labelling(labels);
  l.shape = CodeShape::parse(code);
  return l;
}

}  // namespace

Scheme anchor_hevc() {
  using C = Context;
  TreeBuilder b;
  b.test(
      Test::ctx_eq(C::L, C::U),
      [&] { return b.test(Test::ctx_lt(C::L, 2), [&] { return b.leaf(3); }, [&] { return b.leaf(4); }); },
      [&] {
        return b.test(
            Test::min_gt(0), [&] { return b.leaf(2); },
            [&] { return b.test(Test::sum_lt(2), [&] { return b.leaf(1); }, [&] { return b.leaf(0); }); });
      });
  const std::string code = hevc_anchor_code().to_string();
  std::vector<Leaf> leaves = {static_leaf("L,U,#1", code), static_leaf("L,U,#26", code), static_leaf("L,U,#0", code),
                              static_leaf("#0,#1,#26", code), static_leaf("L,L-1,L+1", code)};
  return Scheme(EvalRules{SymbolSpace::hevc(), UnavailableRule::MapToDC, false}, std::move(b.nodes), std::move(leaves),
                "hevc-anchor");
}

Scheme anchor_jem() {
  Leaf l;
  l.kind = Leaf::Kind::Dynamic;
  l.shape = jem_anchor_code();
  auto& items = l.list.items;
  items = parse_labelling("L,U,#0,#1,BL,UR,UL,derived,#50,#18,#34,#2");
  l.list.head_items = static_cast<int>(items.size());
  l.list.head_cap = 6;
  for (int m = 0; m <= 60; m += 4) items.push_back(Label::numeric(m));
  for (int m = 0; m <= 18; ++m) items.push_back(Label::numeric(m));
  for (int m = 19; m <= 45; ++m) items.push_back(Label::numeric(m));
  for (int m = 0; m < 67; ++m) items.push_back(Label::numeric(m));
  return Scheme::single_leaf(EvalRules{SymbolSpace::jem(), UnavailableRule::Keep, false}, std::move(l), "jem-anchor");
}

Scheme fixture_five_leaf() {
  using C = Context;
  TreeBuilder b;
  b.test(
      Test::min_gt(1),
      [&] {
        return b.test(
            Test::abs_diff_lt(C::L, C::U, 2),
            [&] { return b.test(Test::ctx_eq(C::U, C::L), [&] { return b.leaf(4); }, [&] { return b.leaf(3); }); },
            [&] { return b.leaf(2); });
      },
      [&] { return b.test(Test::max_lt(2), [&] { return b.leaf(1); }, [&] { return b.leaf(0); }); });
  std::vector<Leaf> leaves = {
      static_leaf("min,max,|1-min|,max-1,max+1,max+2,max-2", "1+3+4+5+5+6+6+(7x28)"),
      static_leaf("min,|1-min|,#10,#26,#2,#34,U-3", "1+3+4+5+5+6+6+(7x28)"),
      static_leaf("L,U,#0,#1,max-1", "2+3+4+4+5+(6x30)"),
      static_leaf("L,U,min-1,max+1,#0,#1,max+2", "2+2+4+4+4+4+5+(7x28)"),
      static_leaf("L,L-1,L+1,#0,#1,L+2,L-2", "1+4+4+4+5+5+5+(7x28)"),
  };
  return Scheme(EvalRules{SymbolSpace::hevc(), UnavailableRule::MapToDC, true}, std::move(b.nodes), std::move(leaves),
                "five-leaf");
}

Scheme fixture_four_leaf_dynamic() {
  using C = Context;
  TreeBuilder b;
  b.test(
      Test::min_gt(1),
      [&] { return b.test(Test::mod_abs_diff_lt(C::L, C::U, 63, 3), [&] { return b.leaf(3); }, [&] { return b.leaf(2); }); },
      [&] { return b.test(Test::max_lt(2), [&] { return b.leaf(1); }, [&] { return b.leaf(0); }); });
  const char* codes[] = {"2+2+3+(5x3)+(7x11)+(8x50)", "1+3+5+5+(7x24)+(8x25)+(9x14)",
                         "2+3+3+(4x2)+(6x8)+(7x10)+(8x44)", "1+3+4+5+6+6+(6x6)+(7x6)+(8x7)+(9x42)"};
  std::vector<Leaf> leaves;
  for (const char* code : codes) {
    Leaf l;
    l.kind = Leaf::Kind::Dynamic;
    l.shape = CodeShape::parse(code);
    l.list.items = parse_labelling("L,U,#0,#1");
    for (int m = 0; m < 67; ++m) l.list.items.push_back(Label::numeric(m));
    leaves.push_back(std::move(l));
  }
  return Scheme(EvalRules{SymbolSpace::jem(), UnavailableRule::Keep, false}, std::move(b.nodes), std::move(leaves),
                "four-leaf-dynamic");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json node_to_json(const Scheme& s, int n) {
  const TreeNode& node = s.nodes()[static_cast<std::size_t>(n)];
  if (node.test) {
    return json{{"test", node.test->to_string()},
                {"true", node_to_json(s, node.on_true)},
                {"false", node_to_json(s, node.on_false)}};
  }
  const Leaf& l = s.leaves()[static_cast<std::size_t>(node.leaf)];
  json leaf{{"id", node.leaf}, {"code", l.shape.to_string()}, {"cabac_group", l.cabac_group}};
  if (l.kind == Leaf::Kind::Static) {
    json labels = json::array();
    for (const auto& lab : l.labels) labels.push_back(lab.to_string());
    leaf["labels"] = labels;
  } else {
    json items = json::array();
    for (const auto& lab : l.list.items) items.push_back(lab.to_string());
    leaf["dynlist"] = items;
    if (l.list.head_items) leaf["head"] = json{{"items", l.list.head_items}, {"cap", l.list.head_cap}};
  }
  return json{{"leaf", leaf}};
}

json scheme_json(const Scheme& s) {
  const SymbolSpace& sp = s.space();
  json j{{"k", sp.k}, {"unavailable_rule", std::string(to_string(s.rules().unavailable))}};
  const SymbolSpace def = sp.k == 35 ? SymbolSpace::hevc() : sp.k == 67 ? SymbolSpace::jem() : SymbolSpace::generic(sp.k);
  if (!(def == sp)) {
    j["angular_min"] = sp.angular_min;
    j["angular_max"] = sp.angular_max;
  }
  if (s.rules().wrap_nonangular_offsets) j["wrap_nonangular_offsets"] = true;
  if (!s.name().empty()) j["name"] = s.name();
  j["tree"] = node_to_json(s, 0);
  return j;
}

struct JsonReader {
  std::vector<TreeNode> nodes;
  std::vector<std::pair<int, Leaf>> leaves;
  int next_leaf = 0;

  int read(const json& j) {
    if (!j.is_object()) throw ParseError("tree node must be an object");
    const int me = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (j.contains("test")) {
      const Test t = Test::parse(j.at("test").get<std::string>());
      if (!j.contains("true") || !j.contains("false")) throw ParseError("test node needs 'true' and 'false'");
      const int a = read(j.at("true"));
      const int b = read(j.at("false"));
      nodes[static_cast<std::size_t>(me)].test = t;
      nodes[static_cast<std::size_t>(me)].on_true = a;
      nodes[static_cast<std::size_t>(me)].on_false = b;
      return me;
    }
    if (!j.contains("leaf")) throw ParseError("tree node needs 'test' or 'leaf'");
    const json& lj = j.at("leaf");
    Leaf l;
    l.shape = CodeShape::parse(lj.at("code").get<std::string>());
    l.cabac_group = lj.value("cabac_group", 0);
    if (lj.contains("labels")) {
      l.kind = Leaf::Kind::Static;
      for (const auto& x : lj.at("labels")) l.labels.push_back(Label::parse(x.get<std::string>()));
    } else if (lj.contains("dynlist")) {
      l.kind = Leaf::Kind::Dynamic;
      for (const auto& x : lj.at("dynlist")) l.list.items.push_back(Label::parse(x.get<std::string>()));
      if (lj.contains("head")) {
        l.list.head_items = lj.at("head").at("items").get<int>();
        l.list.head_cap = lj.at("head").at("cap").get<int>();
      }
    } else {
      throw ParseError("leaf needs 'labels' or 'dynlist'");
    }
    const int id = lj.contains("id") ? lj.at("id").get<int>() : next_leaf;
    ++next_leaf;
    nodes[static_cast<std::size_t>(me)].leaf = id;
    leaves.emplace_back(id, std::move(l));
    return me;
  }
};

}  // namespace

std::string scheme_to_json(const Scheme& s, int indent) { return scheme_json(s).dump(indent); }

Scheme scheme_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scheme JSON: ") + e.what());
  }
  try {
    const int k = j.at("k").get<int>();
    SymbolSpace sp = k == 35 ? SymbolSpace::hevc() : k == 67 ? SymbolSpace::jem() : SymbolSpace::generic(k);
    if (j.contains("angular_min")) sp.angular_min = j.at("angular_min").get<int>();
    if (j.contains("angular_max")) sp.angular_max = j.at("angular_max").get<int>();
    sp.validate();
    EvalRules rules{sp, parse_unavailable_rule(j.value("unavailable_rule", std::string("dc"))),
                    j.value("wrap_nonangular_offsets", false)};
    JsonReader r;
    r.read(j.at("tree"));
    std::vector<Leaf> leaves(r.leaves.size());
    std::vector<char> used(r.leaves.size(), 0);
    for (auto& [id, leaf] : r.leaves) {
      if (id < 0 || id >= static_cast<int>(leaves.size()) || used[static_cast<std::size_t>(id)])
        throw ParseError("leaf ids must be unique and dense");
      used[static_cast<std::size_t>(id)] = 1;
      leaves[static_cast<std::size_t>(id)] = std::move(leaf);
    }
    return Scheme(rules, std::move(r.nodes), std::move(leaves), j.value("name", std::string()));
  } catch (const json::exception& e) {
    throw ParseError(std::string("scheme JSON: ") + e.what());
  }
}

Scheme load_scheme(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return scheme_from_json(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_scheme(const std::filesystem::path& path, const Scheme& s) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << scheme_to_json(s) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

std::uint64_t scheme_hash(const Scheme& s) {
  const std::string text = scheme_json(s).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void assign_cabac_groups(Scheme& s, const ConditionalHistogram& hist, int max_groups) {
  const std::size_t n = s.leaves().size();
  std::vector<double> ones(n, 0.0), total(n, 0.0);
  for (const auto& cell : hist.cells()) {
    const int leaf = s.route(cell.key);
    const auto perm = s.permutation(cell.key);
    const auto& words = s.codewords(leaf).words;
    for (std::size_t r = 0; r < perm.size(); ++r) {
      const double c = static_cast<double>(cell.counts[static_cast<std::size_t>(perm[r])]);
      if (c == 0.0) continue;
      const Codeword& w = words[r];
      total[static_cast<std::size_t>(leaf)] += c;
      if ((w.bits >> (w.length - 1)) & 1) ones[static_cast<std::size_t>(leaf)] += c;
    }
  }
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = total[i] > 0 ? ones[i] / total[i] : 0.5;
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] < p[b]; });
  // Cut at the widest gaps between neighbouring probabilities.
  std::vector<std::pair<double, std::size_t>> gaps;
  for (std::size_t i = 1; i < n; ++i) gaps.emplace_back(p[order[i]] - p[order[i - 1]], i);
  std::stable_sort(gaps.begin(), gaps.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<char> cut(n, 0);
  const std::size_t cuts = std::min<std::size_t>(gaps.size(), static_cast<std::size_t>(std::max(0, max_groups - 1)));
  for (std::size_t i = 0; i < cuts; ++i)
    if (gaps[i].first > 0) cut[gaps[i].second] = 1;
  int g = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i && cut[i]) ++g;
    s.set_cabac_group(order[i], g);
  }
}

}  // namespace ipmc
