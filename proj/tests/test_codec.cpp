#include <sstream>

#include "doctest.h"
#include "ipmc/codec.hpp"
#include "ipmc/error.hpp"
#include "ipmc/random.hpp"
#include "support.hpp"

using namespace ipmc;

namespace {

std::vector<ContextTuple> contexts_of(const std::vector<Sample>& s) {
  std::vector<ContextTuple> out;
  for (const auto& x : s) out.push_back(x.ctx);
  return out;
}

std::vector<int> modes_of(const std::vector<Sample>& s) {
  std::vector<int> out;
  for (const auto& x : s) out.push_back(x.ipm);
  return out;
}

}  // namespace

TEST_SUITE("codec") {

TEST_CASE("mpm0 emits 10") {
  const std::vector<Sample> s = {{5, ContextTuple(5, 9)}};
  const auto b = encode(anchor_hevc(), s);
  CHECK(b.payload_bits == 2);
  REQUIRE(b.payload.size() == 1);
  CHECK(b.payload[0] == 0x80);
}

TEST_CASE("non-MPM modes emit 0 and a five bit index") {
  const std::vector<Sample> s = {{1, ContextTuple(5, 9)}, {2, ContextTuple(5, 9)}, {34, ContextTuple(5, 9)}};
  const auto b = encode(anchor_hevc(), s);
  CHECK(b.payload_bits == 18);
  BitReader r(b.payload, b.payload_bits);
  auto next = [&](int n) {
    std::string out;
    for (int i = 0; i < n; ++i) out += static_cast<char>('0' + r.read_bit());
    return out;
  };
  CHECK(next(6) == "000000");
  CHECK(next(6) == "000001");
  CHECK(next(6) == "011111");
  CHECK(r.read_bit() == -1);
}

TEST_CASE("bit writer and reader") {
  BitWriter w;
  w.write(0b101, 3);
  w.write(0xff, 8);
  w.write_bit(0);
  CHECK(w.bit_count() == 12);
  CHECK(w.bytes() == std::vector<std::uint8_t>{0xbf, 0xe0});
  BitReader r(w.bytes(), w.bit_count());
  std::string s;
  for (int b; (b = r.read_bit()) >= 0;) s += static_cast<char>('0' + b);
  CHECK(s == "101111111110");
  CHECK(r.remaining() == 0);
}

TEST_CASE("round trip on every builtin scheme") {
  for (const auto& scheme : {anchor_hevc(), fixture_five_leaf(), anchor_jem(), fixture_four_leaf_dynamic()}) {
    auto s = testing::random_samples(scheme.space(), 5000, scheme_hash(scheme));
    std::vector<int> cabac;
    const auto blob = encode(scheme, s, &cabac);
    CHECK(cabac.size() == s.size());
    const auto ctx = contexts_of(s);
    CHECK(decode(scheme, blob, ctx) == modes_of(s));
    const auto h = ConditionalHistogram::build(s, scheme.space(), ContextSet::all());
    CHECK(scheme.evaluate(h).total_bits == blob.payload_bits);
    std::stringstream io;
    write_blob(io, blob);
    const auto back = read_blob(io);
    CHECK(back == blob);
  }
}

TEST_CASE("empty input") {
  const auto blob = encode(anchor_hevc(), std::vector<Sample>{});
  CHECK(blob.payload_bits == 0);
  CHECK(blob.payload.empty());
  CHECK(decode(anchor_hevc(), blob, std::vector<ContextTuple>{}).empty());
}

TEST_CASE("truncated payload names the sample") {
  const auto scheme = anchor_hevc();
  auto s = testing::random_samples(scheme.space(), 50, 4);
  auto blob = encode(scheme, s);
  std::uint64_t before = 0;
  for (std::size_t i = 0; i < 20; ++i) before += static_cast<std::uint64_t>(scheme.bits_for(s[i].ctx, s[i].ipm));
  blob.payload_bits = before + 1;
  try {
    decode(scheme, blob, contexts_of(s));
    FAIL("expected a decode error");
  } catch (const DecodeError& e) {
    CHECK(e.sample_index() == 20);
  }
  auto short_bytes = encode(scheme, s);
  short_bytes.payload.resize(short_bytes.payload.size() / 2);
  CHECK_THROWS_AS(decode(scheme, short_bytes, contexts_of(s)), DecodeError);
}

TEST_CASE("trailing bits are rejected") {
  const std::vector<Sample> s = {{5, ContextTuple(5, 9)}};
  auto blob = encode(anchor_hevc(), s);
  blob.payload_bits = 5;
  CHECK_THROWS_AS(decode(anchor_hevc(), blob, contexts_of(s)), DecodeError);
}

TEST_CASE("header mismatches are refused") {
  auto s = testing::random_samples(SymbolSpace::hevc(), 20, 4);
  const auto blob = encode(anchor_hevc(), s);
  CHECK_THROWS_AS(decode(fixture_five_leaf(), blob, contexts_of(s)), ValidationError);
  auto fewer = contexts_of(s);
  fewer.pop_back();
  CHECK_THROWS_AS(decode(anchor_hevc(), blob, fewer), ValidationError);
  std::stringstream junk("IPMX....");
  CHECK_THROWS_AS(read_blob(junk), ParseError);
}

TEST_CASE("encode validates samples") {
  const std::vector<Sample> s = {{40, ContextTuple(5, 9)}};
  CHECK_THROWS_AS(encode(anchor_hevc(), s), ValidationError);
}

}
