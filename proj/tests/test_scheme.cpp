#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "ipmc/codec.hpp"
#include "ipmc/error.hpp"
#include "ipmc/random.hpp"
#include "ipmc/scheme.hpp"
#include "support.hpp"

using namespace ipmc;

namespace {

bool is_permutation_of_k(std::vector<int> p, int k) {
  std::sort(p.begin(), p.end());
  std::vector<int> id(static_cast<std::size_t>(k));
  std::iota(id.begin(), id.end(), 0);
  return p == id;
}

std::vector<Scheme> all_builtin() {
  return {anchor_hevc(), anchor_jem(), fixture_five_leaf(), fixture_four_leaf_dynamic()};
}

}  // namespace

TEST_SUITE("scheme") {

TEST_CASE("hevc anchor routing") {
  const Scheme s = anchor_hevc();
  CHECK(s.leaves()[static_cast<std::size_t>(s.route(ContextTuple(20, 20)))].labels == parse_labelling("L,L-1,L+1"));
  CHECK(s.leaves()[static_cast<std::size_t>(s.route(ContextTuple(1, 1)))].labels == parse_labelling("#0,#1,#26"));
  CHECK(s.leaves()[static_cast<std::size_t>(s.route(ContextTuple(5, 9)))].labels == parse_labelling("L,U,#0"));
  CHECK(s.leaves()[static_cast<std::size_t>(s.route(ContextTuple(0, 9)))].labels == parse_labelling("L,U,#1"));
  CHECK(s.leaves()[static_cast<std::size_t>(s.route(ContextTuple(0, 1)))].labels == parse_labelling("L,U,#26"));
  // Unavailable neighbours act as DC.
  CHECK(s.route(ContextTuple(-1, -1)) == s.route(ContextTuple(1, 1)));
  CHECK(s.leaves().size() == 5);
}

TEST_CASE("rank_of examples") {
  const Scheme s = anchor_hevc();
  CHECK(s.rank_of(ContextTuple(5, 9), 5) == 0);
  CHECK(s.rank_of(ContextTuple(5, 9), 9) == 1);
  CHECK(s.rank_of(ContextTuple(5, 9), 0) == 2);
  CHECK(s.rank_of(ContextTuple(5, 9), 1) == 3);
  CHECK(s.rank_of(ContextTuple(5, 9), 2) == 4);
  CHECK(s.rank_of(ContextTuple(5, 9), 6) == 7);
  const auto p = s.permutation(ContextTuple(0, 0));
  CHECK(std::vector<int>(p.begin(), p.begin() + 3) == std::vector<int>{0, 1, 26});
  CHECK(s.mode_at(ContextTuple(5, 9), 3) == 1);
  CHECK(s.bits_for(ContextTuple(5, 9), 5) == 2);
  CHECK(s.bits_for(ContextTuple(5, 9), 17) == 6);
}

TEST_CASE("static permutation") {
  const std::vector<int> mpms = {5, 9, 0};
  const auto p = static_permutation(mpms, 35);
  CHECK(p[0] == 5);
  CHECK(p[3] == 1);
  CHECK(is_permutation_of_k(p, 35));
}

TEST_CASE("rank_of is a bijection per cell") {
  Rng rng(3);
  for (const auto& s : all_builtin()) {
    const int k = s.space().k;
    for (int trial = 0; trial < 200; ++trial) {
      auto ctx = [&] { return static_cast<int>(rng.below(static_cast<std::uint64_t>(k + 1))) - 1; };
      const ContextTuple t(ctx(), ctx(), ctx(), ctx(), ctx());
      std::vector<int> ranks;
      for (int m = 0; m < k; ++m) ranks.push_back(s.rank_of(t, m));
      REQUIRE(is_permutation_of_k(ranks, k));
      for (int m = 0; m < k; ++m) CHECK(s.mode_at(t, ranks[static_cast<std::size_t>(m)]) == m);
    }
  }
}

TEST_CASE("jem anchor") {
  const Scheme s = anchor_jem();
  const auto p = s.permutation(ContextTuple());
  CHECK(std::vector<int>(p.begin(), p.begin() + 6) == std::vector<int>{0, 1, 50, 18, 34, 2});
  // Preferred list: multiples of 4 up to 60 that are not MPMs.
  CHECK(std::vector<int>(p.begin() + 6, p.begin() + 9) == std::vector<int>{4, 8, 12});
  CHECK(s.codewords(0).words.size() == 67);
  CHECK(s.codewords(0).prefix_free());
  // L=10, U=10: L, planar, DC, then the derived 9 and 11, then 50.
  const auto q = s.permutation(ContextTuple(10, 10));
  CHECK(std::vector<int>(q.begin(), q.begin() + 6) == std::vector<int>{10, 0, 1, 9, 11, 50});
  CHECK(is_permutation_of_k(q, 67));
}

TEST_CASE("builtin schemes validate and round trip through json") {
  for (const auto& s : all_builtin()) {
    CHECK_NOTHROW(s.validate());
    const auto back = scheme_from_json(scheme_to_json(s));
    CHECK(back == s);
    CHECK(scheme_hash(back) == scheme_hash(s));
    for (const auto& leaf : s.leaves()) CHECK(kraft_sum(leaf.shape).is_one());
  }
  CHECK(scheme_hash(anchor_hevc()) != scheme_hash(fixture_five_leaf()));
}

TEST_CASE("fixture codes") {
  const Scheme f = fixture_four_leaf_dynamic();
  REQUIRE(f.leaves().size() == 4);
  bool found = false;
  for (const auto& l : f.leaves()) found = found || l.shape.to_string() == "2+2+3+(5x3)+(7x11)+(8x50)";
  CHECK(found);
  const Scheme five = fixture_five_leaf();
  std::set<std::string> codes;
  for (const auto& l : five.leaves()) codes.insert(l.shape.to_string());
  CHECK(codes.size() == 4);
  CHECK(codes.count("2+3+4+4+5+(6x30)"));
}

TEST_CASE("invalid schemes are rejected") {
  Leaf l;
  l.labels = parse_labelling("L,U,#0");
  l.shape = hevc_anchor_code();
  const auto bad = Scheme::single_leaf(EvalRules{}, l);
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(scheme_from_json("{\"k\": 35"), Error);
}

TEST_CASE("fixed length single leaf costs five bits") {
  Leaf l;
  l.labels = parse_labelling("#0");
  l.shape = CodeShape::parse("5+(5x31)");
  const auto s = Scheme::single_leaf(EvalRules{SymbolSpace::generic(32), UnavailableRule::Keep, false}, l);
  s.validate();
  auto d = testing::random_samples(SymbolSpace::generic(32), 300, 1);
  auto h = ConditionalHistogram::build(d, SymbolSpace::generic(32), ContextSet::parse("L,U"));
  CHECK(s.evaluate(h).bits_per_ipm == doctest::Approx(5.0));
}

TEST_CASE("always hitting a one bit MPM costs one bit") {
  Leaf l;
  l.labels = parse_labelling("L,#0,#1");
  l.shape = CodeShape::parse("1+3+3+(7x32)");
  const auto s = Scheme::single_leaf(EvalRules{SymbolSpace::hevc(), UnavailableRule::Keep, false}, l);
  std::vector<Sample> d;
  for (int m = 2; m < 35; ++m) d.push_back({m, ContextTuple(m, 3)});
  auto h = ConditionalHistogram::build(d, SymbolSpace::hevc(), ContextSet::parse("L"));
  CHECK(s.evaluate(h).bits_per_ipm == doctest::Approx(1.0));
}

TEST_CASE("evaluate matches the encoded length") {
  auto d = testing::small_synth(SymbolSpace::hevc(), 64, 64, 12);
  auto h = ConditionalHistogram::build(d, SymbolSpace::hevc(), ContextSet::all());
  for (const auto& s : {anchor_hevc(), fixture_five_leaf()}) {
    const auto r = s.evaluate(h);
    const auto blob = encode(s, d);
    CHECK(blob.payload_bits == r.total_bits);
    CHECK(r.total_samples == d.size());
    std::uint64_t sum = 0;
    for (const auto& x : d) sum += static_cast<std::uint64_t>(s.bits_for(x.ctx, x.ipm));
    CHECK(sum == r.total_bits);
    std::uint64_t leaf_sum = 0;
    for (const auto& lc : r.per_leaf) leaf_sum += lc.bits;
    CHECK(leaf_sum == r.total_bits);
  }
  auto dj = testing::small_synth(SymbolSpace::jem(), 64, 64, 12);
  auto hj = ConditionalHistogram::build(dj, SymbolSpace::jem(), ContextSet::all());
  for (const auto& s : {anchor_jem(), fixture_four_leaf_dynamic()})
    CHECK(encode(s, dj).payload_bits == s.evaluate(hj).total_bits);
}

TEST_CASE("evaluate ignores sample order") {
  auto d = testing::small_synth(SymbolSpace::hevc(), 40, 40, 2);
  const auto a = anchor_hevc().evaluate(ConditionalHistogram::build(d, SymbolSpace::hevc(), ContextSet::parse("L,U")));
  Rng rng(1);
  rng.shuffle(d);
  const auto b = anchor_hevc().evaluate(ConditionalHistogram::build(d, SymbolSpace::hevc(), ContextSet::parse("L,U")));
  CHECK(a.total_bits == b.total_bits);
}

TEST_CASE("evaluate needs the scheme's contexts") {
  auto d = testing::small_synth(SymbolSpace::hevc(), 10, 10, 2);
  auto h = ConditionalHistogram::build(d, SymbolSpace::hevc(), ContextSet::parse("L"));
  CHECK_THROWS_AS(anchor_hevc().evaluate(h), Error);
}

TEST_CASE("cabac groups") {
  auto d = testing::small_synth(SymbolSpace::hevc(), 40, 40, 2);
  auto h = ConditionalHistogram::build(d, SymbolSpace::hevc(), ContextSet::parse("L,U"));
  Scheme s = fixture_five_leaf();
  assign_cabac_groups(s, h, 1);
  for (const auto& l : s.leaves()) CHECK(l.cabac_group == 0);
  assign_cabac_groups(s, h, 3);
  std::set<int> groups;
  for (const auto& l : s.leaves()) groups.insert(l.cabac_group);
  CHECK(groups.size() <= 3);
  CHECK(*groups.begin() == 0);
}

TEST_CASE("test text round trip") {
  for (const char* t : {"L==U", "|L-U|<2", "|L-U|==2", "|L-U|%63<3", "min>1", "min<1", "max<2", "L+U<2", "L<2", "|L-26|<3"})
    CHECK(Test::parse(t).to_string() == t);
  CHECK(hevc_tests().size() == 4);
  CHECK(extended_hevc_tests().size() == 14);
}

}
