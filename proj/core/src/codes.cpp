#include "ipmc/codes.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <set>

#include "ipmc/error.hpp"

namespace ipmc {

namespace {

constexpr int kMaxCodeLength = 62;

int ceil_log2(int n) {
  int b = 0;
  while ((1 << b) < n) ++b;
  return b;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view s, std::string_view whole) {
  s = trim(s);
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ParseError("bad number '" + std::string(s) + "' in code '" + std::string(whole) + "'");
  return v;
}

}  // namespace

int CodeShape::symbol_count() const noexcept {
  int n = mpm_count();
  for (const auto& g : fl_groups) n += g.count;
  return n;
}

int CodeShape::max_length() const noexcept {
  int m = 0;
  for (int l : mpm_lengths) m = std::max(m, l);
  for (const auto& g : fl_groups) m = std::max(m, g.length);
  return m;
}

std::vector<int> CodeShape::rank_lengths() const {
  std::vector<int> out(mpm_lengths);
  for (const auto& g : fl_groups) out.insert(out.end(), static_cast<std::size_t>(g.count), g.length);
  return out;
}

std::vector<int> CodeShape::sorted_lengths() const {
  auto out = rank_lengths();
  std::sort(out.begin(), out.end());
  return out;
}

std::string CodeShape::to_string() const {
  std::string s;
  for (int l : mpm_lengths) {
    if (!s.empty()) s += '+';
    s += std::to_string(l);
  }
  for (const auto& g : fl_groups) {
    if (!s.empty()) s += '+';
    s += '(' + std::to_string(g.length) + 'x' + std::to_string(g.count) + ')';
  }
  return s;
}

CodeShape CodeShape::parse(std::string_view text) {
  CodeShape shape;
  std::string_view rest = trim(text);
  if (rest.empty()) throw ParseError("empty code");
  while (!rest.empty()) {
    std::size_t plus = rest.find('+');
    std::string_view tok = trim(rest.substr(0, plus));
    rest = plus == std::string_view::npos ? std::string_view{} : rest.substr(plus + 1);
    if (plus != std::string_view::npos && trim(rest).empty()) throw ParseError("trailing '+' in code '" + std::string(text) + "'");
    if (tok.empty()) throw ParseError("empty term in code '" + std::string(text) + "'");
    if (tok.front() == '(') {
      if (tok.back() != ')') throw ParseError("unclosed group in code '" + std::string(text) + "'");
      std::string_view inner = tok.substr(1, tok.size() - 2);
      std::size_t sep = inner.find('x');
      std::size_t sep_len = 1;
      if (sep == std::string_view::npos) {
        sep = inner.find("\xC3\x97");  // multiplication sign
        sep_len = 2;
      }
      if (sep == std::string_view::npos) throw ParseError("group '" + std::string(tok) + "' needs 'x'");
      FlGroup g{parse_int(inner.substr(0, sep), text), parse_int(inner.substr(sep + sep_len), text)};
      shape.fl_groups.push_back(g);
    } else {
      if (!shape.fl_groups.empty())
        throw ParseError("MPM length after a remainder group in code '" + std::string(text) + "'");
      shape.mpm_lengths.push_back(parse_int(tok, text));
    }
  }
  if (!shape.well_formed()) throw ParseError("malformed code '" + std::string(text) + "'");
  return shape;
}

bool CodeShape::well_formed() const noexcept {
  for (std::size_t i = 0; i < mpm_lengths.size(); ++i) {
    if (mpm_lengths[i] < 1 || mpm_lengths[i] > kMaxCodeLength) return false;
    if (i && mpm_lengths[i] < mpm_lengths[i - 1]) return false;
  }
  for (std::size_t i = 0; i < fl_groups.size(); ++i) {
    if (fl_groups[i].length < 1 || fl_groups[i].length > kMaxCodeLength || fl_groups[i].count < 1) return false;
    if (i && fl_groups[i].length <= fl_groups[i - 1].length) return false;
  }
  return symbol_count() > 0;
}

bool CodeShape::complete_for(int k) const { return well_formed() && symbol_count() == k && kraft_sum(*this).is_one(); }

std::string Dyadic::to_string() const {
  if (exp == 0) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(std::uint64_t{1} << exp);
}

Dyadic kraft_sum(const CodeShape& shape) {
  if (!shape.well_formed()) throw ValidationError("kraft_sum on a malformed code");
  const int e = shape.max_length();
  unsigned __int128 num = 0;
  for (int l : shape.mpm_lengths) num += static_cast<unsigned __int128>(1) << (e - l);
  for (const auto& g : shape.fl_groups)
    num += static_cast<unsigned __int128>(g.count) << (e - g.length);
  int exp = e;
  while (exp > 0 && (num & 1) == 0) {
    num >>= 1;
    --exp;
  }
  if (num >> 64) throw ValidationError("kraft sum overflow");
  return {static_cast<std::uint64_t>(num), exp};
}

// ---------------------------------------------------------------------------
// Enumeration

namespace {

// Budgets are in units of 2^-cap.
struct Enumerator {
  int k;
  int cap;
  int max_groups;
  MpmLengthRule rule;
  std::vector<CodeShape>* out;
  std::vector<int> mpm;
  std::vector<FlGroup> groups;

  static std::uint64_t unit(int cap, int len) { return std::uint64_t{1} << (cap - len); }

  void mpm_step(int remaining_mpm, int min_len, std::uint64_t budget, int fl_symbols) {
    if (remaining_mpm == 0) {
      if (fl_symbols == 0) {
        if (budget == 0) out->push_back({mpm, {}});
        return;
      }
      fl_step(fl_symbols, first_fl_min(), budget);
      return;
    }
    for (int l = min_len; l <= cap; ++l) {
      const std::uint64_t w = unit(cap, l);
      // The remaining MPMs take at least `remaining_mpm` units each of length cap,
      // the remainder at least one unit per symbol.
      if (w + static_cast<std::uint64_t>(remaining_mpm - 1) + static_cast<std::uint64_t>(fl_symbols) > budget) continue;
      mpm.push_back(l);
      mpm_step(remaining_mpm - 1, l, budget - w, fl_symbols);
      mpm.pop_back();
    }
  }

  int first_fl_min() const {
    if (mpm.empty()) return 1;
    switch (rule) {
      case MpmLengthRule::Any: return 1;
      case MpmLengthRule::NotLonger: return mpm.back();
      case MpmLengthRule::Shorter: return mpm.back() + 1;
    }
    return 1;
  }

  void fl_step(int symbols, int min_len, std::uint64_t budget) {
    const int groups_left = max_groups - static_cast<int>(groups.size());
    if (groups_left <= 0) return;
    for (int f = min_len; f <= cap; ++f) {
      const std::uint64_t w = unit(cap, f);
      if (w * static_cast<std::uint64_t>(symbols) == budget) {
        groups.push_back({f, symbols});
        out->push_back({mpm, groups});
        groups.pop_back();
      }
      if (groups_left == 1) continue;
      // Split: c symbols here, the rest in strictly longer groups.
      for (int c = 1; c < symbols; ++c) {
        const std::uint64_t used = w * static_cast<std::uint64_t>(c);
        if (used >= budget) break;
        const std::uint64_t rest = budget - used;
        const int rest_symbols = symbols - c;
        if (f == cap) break;
        // Longer groups spend between 1 and unit(cap, f+1) per symbol.
        if (rest < static_cast<std::uint64_t>(rest_symbols)) break;
        if (rest > unit(cap, f + 1) * static_cast<std::uint64_t>(rest_symbols)) continue;
        groups.push_back({f, c});
        fl_step(rest_symbols, f + 1, rest);
        groups.pop_back();
      }
    }
  }
};

}  // namespace

std::vector<CodeShape> enumerate_codes(const SymbolSpace& space, const EnumerationParams& params) {
  space.validate();
  if (params.mpm_counts.empty()) throw ValidationError("enumerate_codes needs at least one MPM count");
  if (params.max_len < 1 || params.max_len > kMaxCodeLength) throw ValidationError("max_len out of range");
  if (params.max_fl_groups < 1) throw ValidationError("max_fl_groups must be at least 1");
  std::set<int> counts(params.mpm_counts.begin(), params.mpm_counts.end());
  std::vector<CodeShape> out;
  for (int m : counts) {
    if (m < 0 || m >= space.k) continue;
    Enumerator e{space.k, params.max_len, params.max_fl_groups, params.rule, &out, {}, {}};
    const std::uint64_t total = std::uint64_t{1} << params.max_len;
    const int fl = space.k - m;
    if (static_cast<std::uint64_t>(m + fl) > total) continue;
    e.mpm_step(m, 1, total, fl);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

EnumerationParams static_code_profile(const SymbolSpace& space) {
  EnumerationParams p;
  p.mpm_counts = space.k >= 67 ? std::vector<int>{3, 5, 7, 9} : std::vector<int>{3, 5, 7};
  // Counts saturate well before this cap, so it does not restrict the set.
  p.max_len = ceil_log2(space.k) + p.mpm_counts.back();
  p.max_fl_groups = 1;
  p.rule = MpmLengthRule::Shorter;
  return p;
}

EnumerationParams dynamic_code_profile(const SymbolSpace& space) {
  EnumerationParams p;
  p.mpm_counts = {3, 4, 5, 6};
  p.max_len = ceil_log2(space.k) + 2;
  p.max_fl_groups = 3;
  p.rule = MpmLengthRule::NotLonger;
  return p;
}

// ---------------------------------------------------------------------------
// Codewords

std::string Codeword::to_string() const {
  std::string s;
  for (int i = length - 1; i >= 0; --i) s += ((bits >> i) & 1) ? '1' : '0';
  return s;
}

bool CodewordTable::prefix_free() const {
  std::vector<Codeword> w(words);
  // After sorting by left-aligned value, a prefix relation can only occur between neighbours.
  auto aligned = [](const Codeword& c) { return c.bits << (64 - c.length); };
  std::sort(w.begin(), w.end(), [&](const Codeword& a, const Codeword& b) {
    if (aligned(a) != aligned(b)) return aligned(a) < aligned(b);
    return a.length < b.length;
  });
  for (std::size_t i = 1; i < w.size(); ++i) {
    const Codeword& a = w[i - 1];
    const Codeword& b = w[i];
    if (a.length <= b.length && (b.bits >> (b.length - a.length)) == a.bits) return false;
  }
  return true;
}

CodeShape hevc_anchor_code() { return {{2, 3, 3}, {{6, 32}}}; }

CodeShape jem_anchor_code() { return {{2, 3, 4, 5, 6, 6}, {{6, 16}, {7, 19}, {8, 26}}}; }

CodewordTable realize_codewords(const CodeShape& shape) {
  if (!shape.well_formed() || !kraft_sum(shape).is_one())
    throw ValidationError("cannot realize incomplete code " + shape.to_string());
  CodewordTable t;
  if (shape == hevc_anchor_code()) {
    t.words = {{0b10, 2}, {0b110, 3}, {0b111, 3}};
    for (std::uint64_t i = 0; i < 32; ++i) t.words.push_back({i, 6});
    return t;
  }
  if (shape == jem_anchor_code()) {
    t.words = {{0b10, 2}, {0b110, 3}, {0b1110, 4}, {0b11110, 5}, {0b111110, 6}, {0b111111, 6}};
    for (std::uint64_t i = 0; i < 16; ++i) t.words.push_back({0b010000 | i, 6});
    for (std::uint64_t i = 0; i < 19; ++i) t.words.push_back({i, 7});
    for (std::uint64_t i = 0; i < 26; ++i) t.words.push_back({38 + i, 8});
    return t;
  }
  const auto lengths = shape.rank_lengths();
  std::vector<int> order(lengths.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return lengths[a] < lengths[b]; });
  t.words.resize(lengths.size());
  std::uint64_t code = 0;
  int prev_len = lengths[order[0]];
  bool first = true;
  for (int r : order) {
    const int len = lengths[r];
    if (!first) code = (code + 1) << (len - prev_len);
    first = false;
    prev_len = len;
    t.words[r] = {code, len};
  }
  return t;
}

PrefixDecoder::PrefixDecoder(const CodewordTable& table) {
  nodes_.emplace_back();
  for (std::size_t r = 0; r < table.words.size(); ++r) {
    const Codeword& w = table.words[r];
    int node = kRoot;
    for (int i = w.length - 1; i >= 0; --i) {
      const int b = static_cast<int>((w.bits >> i) & 1);
      if (nodes_[node].rank >= 0) throw ValidationError("codeword table is not prefix free");
      if (nodes_[node].next[b] < 0) {
        nodes_[node].next[b] = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
      }
      node = nodes_[node].next[b];
    }
    if (nodes_[node].rank >= 0 || nodes_[node].next[0] >= 0 || nodes_[node].next[1] >= 0)
      throw ValidationError("codeword table is not prefix free");
    nodes_[node].rank = static_cast<int>(r);
  }
}

double expected_length(const CodeShape& shape, std::span<const double> probs) {
  if (static_cast<int>(probs.size()) != shape.symbol_count())
    throw ValidationError("probability vector length " + std::to_string(probs.size()) + " does not match code size " +
                          std::to_string(shape.symbol_count()));
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0)) throw ValidationError("negative probability");
    if (i && probs[i] > probs[i - 1]) throw ValidationError("probabilities must be sorted nonincreasing");
    sum += probs[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("probabilities do not sum to 1");
  const auto lengths = shape.sorted_lengths();
  double e = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) e += probs[i] * lengths[i];
  return e;
}

std::uint64_t assigned_bits(const CodeShape& shape, std::span<const std::uint64_t> sorted_counts) {
  std::uint64_t bits = 0;
  std::size_t i = 0;
  auto take = [&](int len, int n) {
    for (int j = 0; j < n && i < sorted_counts.size(); ++j, ++i) bits += sorted_counts[i] * static_cast<std::uint64_t>(len);
  };
  // MPM lengths are nondecreasing and every group is ordered, but an MPM may be
  // longer than a group, so merge through the sorted length list when needed.
  const int last_mpm = shape.mpm_lengths.empty() ? 0 : shape.mpm_lengths.back();
  if (shape.fl_groups.empty() || last_mpm <= shape.fl_groups.front().length) {
    for (int l : shape.mpm_lengths) take(l, 1);
    for (const auto& g : shape.fl_groups) take(g.length, g.count);
    return bits;
  }
  for (int l : shape.sorted_lengths()) take(l, 1);
  return bits;
}

}  // namespace ipmc
