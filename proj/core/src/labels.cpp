#include "ipmc/labels.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <queue>
#include <set>

#include "ipmc/error.hpp"

namespace ipmc {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string offset_suffix(int d) {
  if (d == 0) return "";
  return (d > 0 ? "+" : "") + std::to_string(d);
}

int apply_offset(int base, int d, const EvalRules& rules) {
  if (d == 0) return base;
  if (rules.space.is_angular(base) || rules.wrap_nonangular_offsets) return rules.space.wrap_angular(base, d);
  return kUnavailable;
}

}  // namespace

std::uint8_t Label::context_mask() const noexcept {
  switch (kind) {
    case Kind::Numeric:
    case Kind::Derived: return 0;
    case Kind::Ctx: return context_bit(ctx);
    default: return context_bit(Context::L) | context_bit(Context::U);
  }
}

std::string Label::to_string() const {
  switch (kind) {
    case Kind::Numeric: return "#" + std::to_string(value);
    case Kind::Ctx: return std::string(context_name(ctx)) + offset_suffix(value);
    case Kind::Min: return "min" + offset_suffix(value);
    case Kind::Max: return "max" + offset_suffix(value);
    case Kind::AbsOneMinusMin: return "|1-min|";
    case Kind::Mean: return "mean";
    case Kind::Derived: return "derived";
  }
  return "?";
}

Label Label::parse(std::string_view text) {
  const std::string_view s = trim(text);
  const std::string quoted = "'" + std::string(text) + "'";
  if (s == "derived") return derived();
  if (s == "mean") return mean();
  if (s == "|1-min|") return abs_one_minus_min();
  auto parse_int = [&](std::string_view t, bool allow_plus) {
    if (allow_plus && !t.empty() && t.front() == '+') t.remove_prefix(1);
    int v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || p != t.data() + t.size()) throw ParseError("bad label " + quoted);
    return v;
  };
  if (!s.empty() && s.front() == '#') {
    const int m = parse_int(s.substr(1), false);
    if (m < 0) throw ParseError("bad label " + quoted);
    return numeric(m);
  }
  std::size_t split = s.find_first_of("+-");
  std::string_view base = s.substr(0, split);
  const int d = split == std::string_view::npos ? 0 : parse_int(s.substr(split), true);
  if (split != std::string_view::npos && d == 0) throw ParseError("bad label " + quoted);
  if (base == "min") return min(d);
  if (base == "max") return max(d);
  Context c;
  if (parse_context(base, c)) return context(c, d);
  throw ParseError("unknown label " + quoted);
}

int eval_label(const Label& label, const ContextTuple& ctx, const EvalRules& rules) {
  const SymbolSpace& sp = rules.space;
  switch (label.kind) {
    case Label::Kind::Numeric: return sp.valid_mode(label.value) ? label.value : kUnavailable;
    case Label::Kind::Ctx: {
      const int b = ctx[label.ctx];
      if (b < 0) return kUnavailable;
      return apply_offset(b, label.value, rules);
    }
    case Label::Kind::Min:
    case Label::Kind::Max:
    case Label::Kind::AbsOneMinusMin: {
      const int l = ctx[Context::L];
      const int u = ctx[Context::U];
      if (l < 0 || u < 0) return kUnavailable;
      if (label.kind == Label::Kind::AbsOneMinusMin) return std::abs(1 - std::min(l, u));
      const int b = label.kind == Label::Kind::Min ? std::min(l, u) : std::max(l, u);
      return apply_offset(b, label.value, rules);
    }
    case Label::Kind::Mean: {
      const int l = ctx[Context::L];
      const int u = ctx[Context::U];
      if (!sp.is_angular(l) || !sp.is_angular(u)) return kUnavailable;
      return (l + u) / 2;
    }
    case Label::Kind::Derived: return kUnavailable;
  }
  return kUnavailable;
}

int eval_label(const Label& label, const ContextTuple& ctx, const SymbolSpace& space) {
  return eval_label(label, ctx, EvalRules{space, UnavailableRule::Keep, false});
}

std::string labelling_to_string(std::span<const Label> labelling) {
  std::string s;
  for (std::size_t i = 0; i < labelling.size(); ++i) {
    if (i) s += ',';
    s += labelling[i].to_string();
  }
  return s;
}

Labelling parse_labelling(std::string_view text) {
  Labelling out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    out.push_back(Label::parse(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

Compatibility check_compatibility(std::span<const Label> labelling, std::span<const ContextTuple> cells,
                                  const EvalRules& rules) {
  const int m = static_cast<int>(labelling.size());
  for (int i = 0; i < m; ++i) {
    if (labelling[i].kind == Label::Kind::Derived) return {false, i, i, -1};
    for (int j = i + 1; j < m; ++j)
      if (labelling[i] == labelling[j]) return {false, i, j, -1};
  }
  std::vector<int> vals(static_cast<std::size_t>(m));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const ContextTuple t = rules.apply(cells[c]);
    for (int i = 0; i < m; ++i) {
      vals[i] = eval_label(labelling[i], t, rules);
      if (vals[i] < 0) return {false, i, i, static_cast<long>(c)};
    }
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        if (vals[i] == vals[j]) return {false, i, j, static_cast<long>(c)};
  }
  return {};
}

// ---------------------------------------------------------------------------

LabelSearchResult greedy_label_search(const LabelProblem& problem, const CodeShape& shape,
                                      std::vector<std::uint64_t>* pop_trace) {
  const int n = static_cast<int>(problem.hits.size());
  const int m = shape.mpm_count();
  LabelSearchResult res;
  if (m == 0) {
    res.found = true;
    const int f = shape.fl_groups.front().length;
    res.bits = static_cast<std::uint64_t>(f) * problem.mass;
    res.cost = problem.mass ? static_cast<double>(f) : 0.0;
    return res;
  }
  if (n < m) return res;

  // Rank positions: candidate indices sorted by hits, ties by candidate order.
  std::vector<int> rank(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) rank[i] = i;
  std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) { return problem.hits[a] > problem.hits[b]; });

  const int miss_len = shape.fl_groups.empty() ? shape.mpm_lengths.back() : shape.fl_groups.front().length;
  auto cost_of = [&](const std::vector<int>& list) {
    std::int64_t bits = static_cast<std::int64_t>(miss_len) * static_cast<std::int64_t>(problem.mass);
    for (int j = 0; j < m; ++j)
      bits -= static_cast<std::int64_t>(problem.hits[rank[list[j]]]) * (miss_len - shape.mpm_lengths[j]);
    return bits;
  };

  struct Node {
    std::int64_t cost;
    std::vector<int> list;  // rank positions, ascending
    std::vector<char> excluded;
  };
  auto worse = [](const Node& a, const Node& b) {
    if (a.cost != b.cost) return a.cost > b.cost;
    return a.list > b.list;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> queue(worse);
  std::set<std::vector<int>> seen;

  auto push = [&](std::vector<char> excluded) {
    std::vector<int> list;
    for (int p = 0; p < n && static_cast<int>(list.size()) < m; ++p)
      if (!excluded[p]) list.push_back(p);
    if (static_cast<int>(list.size()) < m) return;
    if (!seen.insert(list).second) return;
    const std::int64_t c = cost_of(list);
    queue.push({c, std::move(list), std::move(excluded)});
  };
  push(std::vector<char>(static_cast<std::size_t>(n), 0));

  while (!queue.empty()) {
    Node node = queue.top();
    queue.pop();
    ++res.pops;
    if (pop_trace) pop_trace->push_back(static_cast<std::uint64_t>(node.cost));
    int bad_a = -1, bad_b = -1;
    for (int j = 0; j < m && bad_a < 0; ++j)
      if (problem.unavailable(rank[node.list[j]])) bad_a = bad_b = j;
    for (int a = 0; a < m && bad_a < 0; ++a)
      for (int b = a + 1; b < m && bad_a < 0; ++b) {
        const int x = rank[node.list[a]];
        const int y = rank[node.list[b]];
        if (problem.conflict(std::min(x, y), std::max(x, y))) {
          bad_a = a;
          bad_b = b;
        }
      }
    if (bad_a < 0) {
      res.found = true;
      res.labels.reserve(static_cast<std::size_t>(m));
      for (int p : node.list) res.labels.push_back(rank[p]);
      res.bits = static_cast<std::uint64_t>(node.cost);
      res.cost = problem.mass ? static_cast<double>(node.cost) / static_cast<double>(problem.mass) : 0.0;
      return res;
    }
    auto child = node.excluded;
    child[node.list[bad_a]] = 1;
    push(std::move(child));
    if (bad_b != bad_a) {
      child = node.excluded;
      child[node.list[bad_b]] = 1;
      push(std::move(child));
    }
  }
  return res;
}

LabelSearchResult greedy_label_search(std::span<const ContextTuple> leaf_cells, const ConditionalHistogram& hist,
                                      std::span<const Label> candidates, const CodeShape& shape,
                                      const EvalRules& rules) {
  if (leaf_cells.empty()) throw ValidationError("greedy_label_search needs at least one cell");
  if (candidates.size() < static_cast<std::size_t>(shape.mpm_count()))
    throw ValidationError("fewer candidate labels than MPM slots");
  const std::size_t n = candidates.size();
  std::vector<std::vector<int>> vals(n, std::vector<int>(leaf_cells.size()));
  LabelProblem p;
  p.hits.assign(n, 0);
  for (std::size_t c = 0; c < leaf_cells.size(); ++c) {
    const ContextTuple t = rules.apply(leaf_cells[c]);
    const auto* cell = hist.find(leaf_cells[c]);
    if (cell) p.mass += cell->total;
    for (std::size_t i = 0; i < n; ++i) {
      vals[i][c] = candidates[i].kind == Label::Kind::Derived ? kUnavailable : eval_label(candidates[i], t, rules);
      if (cell && vals[i][c] >= 0) p.hits[i] += cell->counts[static_cast<std::size_t>(vals[i][c])];
    }
  }
  p.unavailable = [&](int i) {
    for (int v : vals[i])
      if (v < 0) return true;
    return false;
  };
  p.conflict = [&](int i, int j) {
    if (candidates[i] == candidates[j]) return true;
    for (std::size_t c = 0; c < leaf_cells.size(); ++c)
      if (vals[i][c] == vals[j][c]) return true;
    return false;
  };
  return greedy_label_search(p, shape);
}

// ---------------------------------------------------------------------------

std::vector<Label> hevc_labels() {
  return {Label::context(Context::L),     Label::context(Context::U), Label::context(Context::L, 1),
          Label::context(Context::L, -1), Label::numeric(0),          Label::numeric(1),
          Label::numeric(26)};
}

std::vector<Label> extended_hevc_labels() {
  using C = Context;
  return {Label::context(C::L),     Label::context(C::U),     Label::context(C::L, 1),  Label::context(C::L, -1),
          Label::numeric(0),        Label::numeric(1),        Label::numeric(26),       Label::context(C::U, 1),
          Label::context(C::U, -1), Label::context(C::L, 2),  Label::context(C::L, -2), Label::context(C::L, 3),
          Label::context(C::L, -3), Label::context(C::U, 2),  Label::context(C::U, -2), Label::context(C::U, 3),
          Label::context(C::U, -3), Label::min(),             Label::max(),             Label::min(1),
          Label::min(-1),           Label::max(1),            Label::max(-1),           Label::min(2),
          Label::min(-2),           Label::max(2),            Label::max(-2),           Label::min(3),
          Label::min(-3),           Label::max(3),            Label::max(-3),           Label::abs_one_minus_min(),
          Label::mean(),            Label::numeric(18),       Label::numeric(2)};
}

std::vector<Label> jem_labels() {
  std::vector<Label> out;
  for (Context c : kAllContexts) out.push_back(Label::context(c));
  for (Context c : kAllContexts) {
    out.push_back(Label::context(c, -1));
    out.push_back(Label::context(c, 1));
  }
  for (int m : {0, 1, 50, 18, 34, 2}) out.push_back(Label::numeric(m));
  return out;
}

std::vector<Label> dynlist_vocabulary(const SymbolSpace& space) {
  std::vector<Label> out;
  for (int m = 0; m < space.k; ++m) out.push_back(Label::numeric(m));
  for (Context c : kAllContexts) {
    out.push_back(Label::context(c));
    for (int d = 1; d <= 4; ++d) {
      out.push_back(Label::context(c, -d));
      out.push_back(Label::context(c, d));
    }
  }
  out.push_back(Label::min());
  out.push_back(Label::max());
  out.push_back(Label::abs_one_minus_min());
  out.push_back(Label::mean());
  out.push_back(Label::max(1));
  return out;
}

std::vector<Label> label_preset(std::string_view name, const SymbolSpace& space) {
  if (name == "hevc") return hevc_labels();
  if (name == "hevc-ext") return extended_hevc_labels();
  if (name == "jem") return jem_labels();
  if (name == "dyn") return dynlist_vocabulary(space);
  throw ParseError("unknown label preset '" + std::string(name) + "' (expected hevc|hevc-ext|jem|dyn)");
}

}  // namespace ipmc
