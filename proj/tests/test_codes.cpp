#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "ipmc/codes.hpp"
#include "ipmc/error.hpp"
#include "ipmc/random.hpp"

using namespace ipmc;

namespace {

std::vector<std::string> golden(const std::string& name) {
  std::ifstream in(std::string(IPMC_TEST_DATA_DIR) + "/golden/" + name);
  REQUIRE(in);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::size_t rank = 0;
    std::string bits;
    ls >> rank >> bits;
    REQUIRE(rank == out.size());
    out.push_back(bits);
  }
  return out;
}

// Sum of 2^-len as an exact fraction over 2^cap.
bool kraft_exact(const std::vector<int>& lengths, int cap) {
  std::uint64_t sum = 0;
  for (int l : lengths) sum += std::uint64_t{1} << (cap - l);
  return sum == (std::uint64_t{1} << cap);
}

bool decodes_all(const CodewordTable& t) {
  PrefixDecoder dec(t);
  for (std::size_t r = 0; r < t.words.size(); ++r) {
    int node = PrefixDecoder::kRoot;
    const auto& w = t.words[r];
    for (int i = w.length - 1; i >= 0; --i) {
      node = dec.step(node, static_cast<int>((w.bits >> i) & 1));
      if (node < 0) return false;
    }
    if (dec.rank_at(node) != static_cast<int>(r)) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("codes") {

TEST_CASE("notation round trip") {
  for (const char* s : {"2+3+3+(6x32)", "2+3+4+5+6+6+(6x16)+(7x19)+(8x26)", "2+2+3+(5x3)+(7x11)+(8x50)"})
    CHECK(CodeShape::parse(s).to_string() == s);
  CHECK(CodeShape::parse("2 + 3 + 3 + (6×32)") == hevc_anchor_code());
  CHECK(hevc_anchor_code().symbol_count() == 35);
  CHECK(jem_anchor_code().symbol_count() == 67);
  CHECK(jem_anchor_code().max_length() == 8);
  CHECK_THROWS_AS(CodeShape::parse("2+3+(6x"), ParseError);
  CHECK_THROWS_AS(CodeShape::parse("banana"), ParseError);
}

TEST_CASE("kraft sums") {
  CHECK(kraft_sum(hevc_anchor_code()).is_one());
  CHECK(kraft_sum(jem_anchor_code()).is_one());
  const Dyadic seven_eighths = kraft_sum(CodeShape::parse("2+3+(6x32)"));
  CHECK(seven_eighths == Dyadic{7, 3});
  CHECK(seven_eighths.to_string() == "7/8");
  CHECK(kraft_sum(CodeShape::parse("2+3+4+4+5+(6x30)")).is_one());
  CHECK(kraft_sum(CodeShape::parse("2+2+3+(5x3)+(7x11)+(8x50)")).is_one());
  CHECK_FALSE(CodeShape::parse("2+3+(6x32)").complete_for(34));
  CHECK(hevc_anchor_code().complete_for(35));
  CHECK_FALSE(hevc_anchor_code().complete_for(36));
}

TEST_CASE("three MPM codes for k=35") {
  const auto codes = enumerate_codes(SymbolSpace::hevc(), {{3}, 8, 1, MpmLengthRule::Shorter});
  std::vector<std::string> names;
  for (const auto& c : codes) names.push_back(c.to_string());
  std::sort(names.begin(), names.end());
  CHECK(names == std::vector<std::string>{"1+2+3+(8x32)", "1+3+3+(7x32)", "2+2+2+(7x32)", "2+3+3+(6x32)"});
}

TEST_CASE("static profile counts") {
  auto count = [](const SymbolSpace& space, int m) {
    auto p = static_code_profile(space);
    p.mpm_counts = {m};
    return enumerate_codes(space, p).size();
  };
  CHECK(count(SymbolSpace::hevc(), 3) == 4);
  CHECK(count(SymbolSpace::hevc(), 5) == 8);
  CHECK(count(SymbolSpace::hevc(), 7) == 43);
  CHECK(count(SymbolSpace::jem(), 3) == 4);
  CHECK(count(SymbolSpace::jem(), 5) == 8);
  CHECK(count(SymbolSpace::jem(), 7) == 47);
  CHECK(count(SymbolSpace::jem(), 9) == 89);
}

TEST_CASE("every enumerated code is complete and decodable") {
  for (const auto& space : {SymbolSpace::hevc(), SymbolSpace::jem()})
    for (const auto& params : {static_code_profile(space), dynamic_code_profile(space)}) {
      const auto codes = enumerate_codes(space, params);
      CHECK(!codes.empty());
      std::set<CodeShape> unique(codes.begin(), codes.end());
      CHECK(unique.size() == codes.size());
      CHECK(std::is_sorted(codes.begin(), codes.end()));
      for (const auto& c : codes) {
        REQUIRE(kraft_sum(c).is_one());
        REQUIRE(c.symbol_count() == space.k);
        const auto t = realize_codewords(c);
        REQUIRE(t.prefix_free());
        REQUIRE(decodes_all(t));
      }
    }
}

TEST_CASE("tiny k matches brute force over length vectors") {
  const SymbolSpace space = SymbolSpace::generic(4);
  for (auto rule : {MpmLengthRule::Any, MpmLengthRule::NotLonger, MpmLengthRule::Shorter}) {
    std::set<std::string> brute;
    const int cap = 5;
    for (int a = 1; a <= cap; ++a)
      for (int b = a; b <= cap; ++b)
        for (int c = b; c <= cap; ++c)
          for (int f = 1; f <= cap; ++f) {
            if (!kraft_exact({a, b, c, f}, cap)) continue;
            if (rule == MpmLengthRule::NotLonger && c > f) continue;
            if (rule == MpmLengthRule::Shorter && c >= f) continue;
            brute.insert(std::to_string(a) + "+" + std::to_string(b) + "+" + std::to_string(c) + "+(" +
                         std::to_string(f) + "x1)");
          }
    std::set<std::string> got;
    for (const auto& s : enumerate_codes(space, {{3}, cap, 1, rule})) got.insert(s.to_string());
    CHECK(got == brute);
    if (rule == MpmLengthRule::NotLonger) CHECK(brute == std::set<std::string>{"1+2+3+(3x1)", "2+2+2+(2x1)"});
    if (rule == MpmLengthRule::Shorter) CHECK(brute.empty());
  }
  CHECK(enumerate_codes(space, {{3}, 5, 1, MpmLengthRule::Any}).size() >= 3);
  std::set<std::string> any;
  for (const auto& s : enumerate_codes(space, {{3}, 5, 1, MpmLengthRule::Any})) any.insert(s.to_string());
  CHECK(any.count("1+2+3+(3x1)"));
  CHECK(any.count("2+2+2+(2x1)"));
}

TEST_CASE("infeasible enumeration is empty") {
  CHECK(enumerate_codes(SymbolSpace::hevc(), {{3}, 5, 1, MpmLengthRule::Any}).empty());
}

TEST_CASE("anchor tables match the golden files") {
  for (const auto& [shape, file] :
       {std::pair{hevc_anchor_code(), "hevc_codewords.txt"}, std::pair{jem_anchor_code(), "jem_codewords.txt"}}) {
    const auto want = golden(file);
    const auto t = realize_codewords(shape);
    REQUIRE(t.words.size() == want.size());
    for (std::size_t r = 0; r < want.size(); ++r) CHECK(t.words[r].to_string() == want[r]);
    CHECK(t.prefix_free());
  }
}

TEST_CASE("canonical construction on a generic shape") {
  const auto t = realize_codewords(CodeShape::parse("1+2+3+(3x1)"));
  std::vector<std::string> w;
  for (const auto& c : t.words) w.push_back(c.to_string());
  CHECK(w == std::vector<std::string>{"0", "10", "110", "111"});
  CHECK_THROWS_AS(realize_codewords(CodeShape::parse("2+3+(6x32)")), ValidationError);
}

TEST_CASE("expected length examples") {
  std::vector<double> point(35, 0.0);
  point[0] = 1.0;
  CHECK(expected_length(CodeShape::parse("1+3+3+(7x32)"), point) == doctest::Approx(1.0));
  const std::vector<double> uniform(35, 1.0 / 35);
  CHECK(expected_length(hevc_anchor_code(), uniform) == doctest::Approx(200.0 / 35).epsilon(1e-12));
  CHECK(200.0 / 35 == doctest::Approx(5.714285).epsilon(1e-6));
  std::vector<double> unsorted(35, 0.0);
  unsorted[1] = 1.0;
  CHECK_THROWS(expected_length(hevc_anchor_code(), unsorted));
  CHECK_THROWS(expected_length(hevc_anchor_code(), std::vector<double>(35, 0.5)));
}

TEST_CASE("expected length matches a symbol loop") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(67);
    for (auto& x : p) x = rng.uniform();
    std::sort(p.begin(), p.end(), std::greater<>());
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& x : p) x /= s;
    const auto code = jem_anchor_code();
    const auto len = code.rank_lengths();
    double want = 0.0;
    for (std::size_t r = 0; r < p.size(); ++r) want += p[r] * len[r];
    CHECK(std::abs(expected_length(code, p) - want) < 1e-12);
  }
}

TEST_CASE("descending assignment is optimal over all permutations") {
  Rng rng(17);
  for (int k = 4; k <= 6; ++k) {
    const auto codes = enumerate_codes(SymbolSpace::generic(k), {{1, 2}, 6, 2, MpmLengthRule::Any});
    REQUIRE(!codes.empty());
    for (const auto& code : codes) {
      std::vector<double> p(static_cast<std::size_t>(k));
      for (auto& x : p) x = rng.uniform() + 1e-3;
      std::sort(p.begin(), p.end(), std::greater<>());
      const double s = std::accumulate(p.begin(), p.end(), 0.0);
      for (auto& x : p) x /= s;
      const double best = expected_length(code, p);
      const auto len = code.rank_lengths();
      std::vector<int> perm(static_cast<std::size_t>(k));
      std::iota(perm.begin(), perm.end(), 0);
      do {
        double c = 0.0;
        for (int r = 0; r < k; ++r) c += p[static_cast<std::size_t>(perm[r])] * len[r];
        CHECK(best <= c + 1e-12);
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }
}

TEST_CASE("assigned bits") {
  std::vector<std::uint64_t> counts(35, 0);
  counts[0] = 10;
  counts[1] = 4;
  counts[2] = 1;
  counts[3] = 2;
  std::sort(counts.begin(), counts.end(), std::greater<>());
  CHECK(assigned_bits(hevc_anchor_code(), counts) == 10 * 2 + 4 * 3 + 2 * 3 + 1 * 6);
}

}
