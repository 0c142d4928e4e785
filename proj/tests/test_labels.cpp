#include <algorithm>
#include <set>

#include "doctest.h"
#include "ipmc/codes.hpp"
#include "ipmc/error.hpp"
#include "ipmc/labels.hpp"
#include "ipmc/random.hpp"
#include "support.hpp"

using namespace ipmc;

namespace {

const EvalRules kHevc{SymbolSpace::hevc(), UnavailableRule::MapToDC, false};

// Best ordered M-subset by direct enumeration, scoring each sample by its codeword length.
std::uint64_t exhaustive_leaf(const std::vector<ContextTuple>& cells, const ConditionalHistogram& hist,
                              const std::vector<Label>& cand, const CodeShape& shape, const EvalRules& rules) {
  const auto len = shape.rank_lengths();
  const int n = static_cast<int>(cand.size());
  const int fl = shape.fl_groups.front().length;
  std::uint64_t best = UINT64_MAX;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        if (a == b || a == c || b == c) continue;
        const std::vector<Label> l = {cand[a], cand[b], cand[c]};
        if (!check_compatibility(l, cells, rules).valid) continue;
        std::uint64_t bits = 0;
        for (const auto& cell : cells) {
          const auto* hc = hist.find(cell);
          if (!hc) continue;
          const auto t = rules.apply(cell);
          int v[3];
          for (int i = 0; i < 3; ++i) v[i] = eval_label(l[i], t, rules);
          for (int m = 0; m < hist.space().k; ++m) {
            const auto cnt = hc->counts[static_cast<std::size_t>(m)];
            int slot = -1;
            for (int i = 0; i < 3; ++i)
              if (v[i] == m) slot = i;
            bits += cnt * static_cast<std::uint64_t>(slot >= 0 ? len[static_cast<std::size_t>(slot)] : fl);
          }
        }
        best = std::min(best, bits);
      }
  return best;
}

std::uint64_t exhaustive_problem(const LabelProblem& p, const CodeShape& shape) {
  const auto len = shape.rank_lengths();
  const int n = static_cast<int>(p.hits.size());
  const int fl = shape.fl_groups.front().length;
  std::uint64_t best = UINT64_MAX;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        if (a == b || a == c || b == c) continue;
        const int idx[3] = {a, b, c};
        bool ok = true;
        for (int i = 0; i < 3; ++i) ok = ok && !p.unavailable(idx[i]);
        for (int i = 0; i < 3; ++i)
          for (int j = i + 1; j < 3; ++j) ok = ok && !p.conflict(std::min(idx[i], idx[j]), std::max(idx[i], idx[j]));
        if (!ok) continue;
        std::uint64_t hit = 0, bits = 0;
        for (int i = 0; i < 3; ++i) {
          hit += p.hits[static_cast<std::size_t>(idx[i])];
          bits += p.hits[static_cast<std::size_t>(idx[i])] * static_cast<std::uint64_t>(len[static_cast<std::size_t>(i)]);
        }
        best = std::min(best, bits + (p.mass - hit) * static_cast<std::uint64_t>(fl));
      }
  return best;
}

}  // namespace

TEST_SUITE("labels") {

TEST_CASE("offsets wrap inside the angular range") {
  const auto sp = SymbolSpace::hevc();
  CHECK(eval_label(Label::context(Context::L, 1), ContextTuple(2, 0), sp) == 3);
  CHECK(eval_label(Label::context(Context::L, 1), ContextTuple(34, 0), sp) == 2);
  CHECK(eval_label(Label::context(Context::L, -1), ContextTuple(2, 0), sp) == 34);
  CHECK(eval_label(Label::context(Context::U, 2), ContextTuple(0, 33), sp) == 2);
  CHECK(eval_label(Label::context(Context::L, 1), ContextTuple(1, 0), sp) == kUnavailable);
  EvalRules wrap{sp, UnavailableRule::Keep, true};
  CHECK(eval_label(Label::context(Context::L, 1), ContextTuple(1, 0), wrap) != kUnavailable);
  for (int m = 2; m <= 34; ++m)
    for (int d : {-4, -3, -2, -1, 1, 2, 3, 4}) {
      const int v = eval_label(Label::context(Context::L, d), ContextTuple(m, 0), sp);
      CHECK(sp.is_angular(v));
    }
}

TEST_CASE("min and max families") {
  const auto sp = SymbolSpace::hevc();
  CHECK(eval_label(Label::abs_one_minus_min(), ContextTuple(0, 7), sp) == 1);
  CHECK(eval_label(Label::abs_one_minus_min(), ContextTuple(1, 7), sp) == 0);
  CHECK(eval_label(Label::min(), ContextTuple(9, 4), sp) == 4);
  CHECK(eval_label(Label::max(1), ContextTuple(9, 4), sp) == 10);
  CHECK(eval_label(Label::mean(), ContextTuple(10, 21), sp) == 15);
  CHECK(eval_label(Label::mean(), ContextTuple(0, 21), sp) == kUnavailable);
  CHECK(eval_label(Label::min(), ContextTuple(-1, 4), sp) == kUnavailable);
  CHECK(eval_label(Label::numeric(26), ContextTuple(), sp) == 26);
  CHECK(eval_label(Label::numeric(40), ContextTuple(), sp) == kUnavailable);
}

TEST_CASE("label text round trip") {
  for (const char* s : {"L", "U+2", "UL-1", "min", "max-1", "min+1", "|1-min|", "mean", "#26", "derived"})
    CHECK(Label::parse(s).to_string() == s);
  CHECK(labelling_to_string(parse_labelling("L, U ,#0")) == "L,U,#0");
  CHECK_THROWS_AS(Label::parse("Q+1"), ParseError);
}

TEST_CASE("presets") {
  CHECK(hevc_labels().size() == 7);
  CHECK(extended_hevc_labels().size() == 35);
  CHECK(jem_labels().size() == 21);
  CHECK(dynlist_vocabulary(SymbolSpace::jem()).size() == 117);
  CHECK(label_preset("hevc", SymbolSpace::hevc()) == hevc_labels());
  for (const auto& set : {extended_hevc_labels(), jem_labels(), dynlist_vocabulary(SymbolSpace::jem())}) {
    for (std::size_t i = 0; i < set.size(); ++i)
      for (std::size_t j = i + 1; j < set.size(); ++j) CHECK_FALSE(set[i] == set[j]);
  }
}

TEST_CASE("compatibility") {
  const std::vector<ContextTuple> eq = {ContextTuple(5, 5), ContextTuple(9, 9)};
  auto r = check_compatibility(parse_labelling("L,U"), eq, kHevc);
  CHECK_FALSE(r.valid);
  CHECK(r.first == 0);
  CHECK(r.second == 1);
  CHECK(r.cell == 0);

  const std::vector<ContextTuple> ne = {ContextTuple(5, 9), ContextTuple(3, 30), ContextTuple(12, 2)};
  CHECK(check_compatibility(parse_labelling("L,U,#0"), ne, kHevc).valid);

  r = check_compatibility(parse_labelling("L,#0,L"), ne, kHevc);
  CHECK_FALSE(r.valid);
  CHECK(r.first == 0);
  CHECK(r.second == 2);
  CHECK(r.cell == -1);

  const std::vector<ContextTuple> dc = {ContextTuple(1, 9)};
  r = check_compatibility(parse_labelling("L+1,U"), dc, kHevc);
  CHECK_FALSE(r.valid);
  CHECK(r.first == r.second);
  // -1 maps to DC, so L collides with #1 here.
  CHECK_FALSE(check_compatibility(parse_labelling("L,#1"), std::vector<ContextTuple>{ContextTuple(-1, 4)}, kHevc).valid);
}

TEST_CASE("greedy on weighted candidates matches exhaustive") {
  // L, U, #0, #1, #26, L+1, L-1 with hits per mille.
  const std::vector<std::uint64_t> hits = {359, 348, 112, 106, 65, 43, 41};
  std::vector<std::vector<std::pair<int, int>>> patterns = {
      {}, {{0, 1}}, {{0, 1}, {0, 2}}, {{0, 1}, {1, 2}, {2, 3}, {0, 4}}, {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}}};
  for (const auto& pat : patterns) {
    LabelProblem p;
    p.hits = hits;
    p.mass = 1000;
    p.conflict = [&](int i, int j) {
      return std::find(pat.begin(), pat.end(), std::pair{i, j}) != pat.end();
    };
    p.unavailable = [](int) { return false; };
    std::vector<std::uint64_t> trace;
    const auto r = greedy_label_search(p, hevc_anchor_code(), &trace);
    REQUIRE(r.found);
    CHECK(r.bits == exhaustive_problem(p, hevc_anchor_code()));
    CHECK(std::is_sorted(trace.begin(), trace.end()));
    CHECK(r.cost == doctest::Approx(static_cast<double>(r.bits) / 1000));
  }
}

TEST_CASE("numeric candidates need no branching") {
  LabelProblem p;
  p.hits = {5, 40, 7, 30, 1};
  p.mass = 100;
  p.conflict = [](int, int) { return false; };
  p.unavailable = [](int) { return false; };
  const auto r = greedy_label_search(p, hevc_anchor_code());
  REQUIRE(r.found);
  CHECK(r.labels == std::vector<int>{1, 3, 2});
  CHECK(r.pops == 1);
}

TEST_CASE("forced conflict never returns both L and U") {
  std::vector<Sample> s;
  for (int m = 2; m < 30; ++m) s.push_back({m, ContextTuple(m, m)});
  auto hist = ConditionalHistogram::build(s, SymbolSpace::hevc(), ContextSet::parse("L,U"));
  std::vector<ContextTuple> cells;
  for (const auto& c : hist.cells()) cells.push_back(c.key);
  const auto r3 = greedy_label_search(cells, hist, parse_labelling("L,U,#0"), hevc_anchor_code(), kHevc);
  CHECK_FALSE(r3.found);
  const auto r4 = greedy_label_search(cells, hist, parse_labelling("L,U,#0,#1"), hevc_anchor_code(), kHevc);
  REQUIRE(r4.found);
  CHECK_FALSE((std::count(r4.labels.begin(), r4.labels.end(), 0) && std::count(r4.labels.begin(), r4.labels.end(), 1)));
}

TEST_CASE("greedy equals exhaustive on random leaves") {
  Rng rng(2024);
  const auto pool = extended_hevc_labels();
  int found = 0;
  for (int inst = 0; inst < 50; ++inst) {
    auto s = testing::random_samples(SymbolSpace::hevc(), 400, 100 + static_cast<std::uint64_t>(inst), 6);
    auto hist = ConditionalHistogram::build(s, SymbolSpace::hevc(), ContextSet::parse("L,U"));
    std::vector<ContextTuple> cells;
    for (const auto& c : hist.cells())
      if (rng.chance(0.5)) cells.push_back(c.key);
    if (cells.empty()) cells.push_back(hist.cells().front().key);
    std::vector<Label> cand = pool;
    rng.shuffle(cand);
    cand.resize(static_cast<std::size_t>(rng.range(3, 12)));
    // Half the instances get a numeric fallback so most of them are feasible.
    if (inst % 2 == 0)
      for (int m : {0, 1, 26})
        if (cand.size() < 12 && std::find(cand.begin(), cand.end(), Label::numeric(m)) == cand.end())
          cand.push_back(Label::numeric(m));
    const auto r = greedy_label_search(cells, hist, cand, hevc_anchor_code(), kHevc);
    const auto want = exhaustive_leaf(cells, hist, cand, hevc_anchor_code(), kHevc);
    if (want == UINT64_MAX) {
      CHECK_FALSE(r.found);
      continue;
    }
    REQUIRE(r.found);
    ++found;
    CHECK(r.bits == want);
    std::vector<Label> chosen;
    for (int i : r.labels) chosen.push_back(cand[static_cast<std::size_t>(i)]);
    CHECK(check_compatibility(chosen, cells, kHevc).valid);
  }
  CHECK(found >= 25);
}

TEST_CASE("pop trace is monotone on random problems") {
  Rng rng(8);
  for (int inst = 0; inst < 30; ++inst) {
    LabelProblem p;
    const int n = rng.range(4, 12);
    for (int i = 0; i < n; ++i) p.hits.push_back(rng.below(100));
    p.mass = 2000;
    std::vector<std::vector<bool>> conf(n, std::vector<bool>(n));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) conf[i][j] = rng.chance(0.3);
    std::vector<bool> unav(n);
    for (int i = 0; i < n; ++i) unav[i] = rng.chance(0.15);
    p.conflict = [&](int i, int j) { return static_cast<bool>(conf[i][j]); };
    p.unavailable = [&](int i) { return static_cast<bool>(unav[i]); };
    std::vector<std::uint64_t> trace;
    const auto r = greedy_label_search(p, hevc_anchor_code(), &trace);
    CHECK(std::is_sorted(trace.begin(), trace.end()));
    const auto want = exhaustive_problem(p, hevc_anchor_code());
    CHECK(r.found == (want != UINT64_MAX));
    if (r.found) CHECK(r.bits == want);
  }
}

}
