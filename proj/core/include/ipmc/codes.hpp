#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ipmc/symbols.hpp"

namespace ipmc {

/// A run of fixed-length codewords for the non-predicted symbols.
struct FlGroup {
  int length = 0;
  int count = 0;

  friend bool operator==(const FlGroup&, const FlGroup&) = default;
  friend auto operator<=>(const FlGroup&, const FlGroup&) = default;
};

/// A complete prefix code described by its MPM codeword lengths followed by
/// fixed-length remainder groups, written `2+3+3+(6x32)`.
struct CodeShape {
  std::vector<int> mpm_lengths;
  std::vector<FlGroup> fl_groups;

  int mpm_count() const noexcept { return static_cast<int>(mpm_lengths.size()); }
  int symbol_count() const noexcept;
  int max_length() const noexcept;
  /// Codeword length of every rank in signaling order (MPMs first).
  std::vector<int> rank_lengths() const;
  /// Rank lengths sorted nondecreasing.
  std::vector<int> sorted_lengths() const;

  /// Notation used throughout: `2+3+3+(6x32)`.
  std::string to_string() const;
  /// Accepts `x` or `×` inside groups and optional whitespace.
  static CodeShape parse(std::string_view text);

  /// Structural invariants (ordering, positive counts); Kraft equality is checked separately.
  bool well_formed() const noexcept;
  /// Well formed, covers k symbols and satisfies Kraft equality.
  bool complete_for(int k) const;

  friend bool operator==(const CodeShape&, const CodeShape&) = default;
  friend auto operator<=>(const CodeShape& a, const CodeShape& b) {
    if (auto c = a.mpm_count() <=> b.mpm_count(); c != 0) return c;
    if (auto c = a.mpm_lengths <=> b.mpm_lengths; c != 0) return c;
    return a.fl_groups <=> b.fl_groups;
  }
};

/// Exact dyadic rational num / 2^exp, kept reduced.
struct Dyadic {
  std::uint64_t num = 0;
  int exp = 0;

  bool is_one() const noexcept { return num == 1 && exp == 0; }
  std::string to_string() const;
  friend bool operator==(const Dyadic&, const Dyadic&) = default;
};

/// Sum of 2^-length over all codewords, computed exactly.
Dyadic kraft_sum(const CodeShape& shape);

/// Which MPM lengths an enumeration admits relative to the remainder group lengths.
enum class MpmLengthRule : std::uint8_t {
  Any,         ///< Any lengths satisfying Kraft equality.
  NotLonger,   ///< Every MPM codeword at most as long as the shortest remainder codeword.
  Shorter,     ///< Every MPM codeword strictly shorter than the shortest remainder codeword.
};

struct EnumerationParams {
  std::vector<int> mpm_counts;
  int max_len = 8;
  int max_fl_groups = 1;
  MpmLengthRule rule = MpmLengthRule::Any;
};

/// Every complete CodeShape within the bounds, deduplicated, ordered by
/// (M, mpm_lengths, fl_groups). Infeasible parameters give an empty result.
std::vector<CodeShape> enumerate_codes(const SymbolSpace& space, const EnumerationParams& params);

/// Enumeration used by default for static-leaf tree searches.
///
/// A single remainder group with every MPM codeword strictly shorter than it
/// and no length cap beyond saturation. For k=35 and M in {3,5,7} this yields
/// 4, 8 and 43 codes; for k=67 and M in {3,5,7,9} it yields 4, 8, 47 and 89.
EnumerationParams static_code_profile(const SymbolSpace& space);

/// Enumeration used by default for dynamic-list searches (up to 3 remainder groups).
EnumerationParams dynamic_code_profile(const SymbolSpace& space);

/// One bit string, MSB first in the low `length` bits of `bits`.
struct Codeword {
  std::uint64_t bits = 0;
  int length = 0;

  std::string to_string() const;
  friend bool operator==(const Codeword&, const Codeword&) = default;
};

/// Concrete bit strings indexed by rank (ranks < M are MPM slots).
struct CodewordTable {
  std::vector<Codeword> words;

  bool prefix_free() const;
};

/// Canonical prefix-code construction in rank order; the HEVC and JEM anchor
/// shapes get the exact tables used by those standards. Throws ValidationError
/// on an incomplete shape.
CodewordTable realize_codewords(const CodeShape& shape);

/// Binary trie over a codeword table, for longest-prefix decoding.
class PrefixDecoder {
 public:
  explicit PrefixDecoder(const CodewordTable& table);
  /// Node reached from `node` by bit `b`; -1 if none.
  int step(int node, int bit) const noexcept { return nodes_[node].next[bit]; }
  /// Rank stored at `node`, or -1 for internal nodes.
  int rank_at(int node) const noexcept { return nodes_[node].rank; }
  static constexpr int kRoot = 0;

 private:
  struct Node {
    int next[2] = {-1, -1};
    int rank = -1;
  };
  std::vector<Node> nodes_;
};

/// Expected codeword length when ranks are ordered by descending probability.
/// `probs` must be sorted nonincreasing and sum to 1 within 1e-9.
double expected_length(const CodeShape& shape, std::span<const double> probs);

/// Integer bit total when `sorted_counts` (nonincreasing) are assigned to the
/// shape's ranks in order. Entries past the shape's symbol count are ignored.
std::uint64_t assigned_bits(const CodeShape& shape, std::span<const std::uint64_t> sorted_counts);

/// The HEVC anchor code 2+3+3+(6x32).
CodeShape hevc_anchor_code();
/// The JEM anchor code 2+3+4+5+6+6+(6x16)+(7x19)+(8x26).
CodeShape jem_anchor_code();

}  // namespace ipmc
