#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ipmc/codes.hpp"
#include "ipmc/dataset.hpp"
#include "ipmc/labels.hpp"
#include "ipmc/symbols.hpp"

namespace ipmc {

/// Boolean predicate on a context tuple (after the unavailability rule).
///
/// Under the keep rule a -1 context fails every numeric comparison; CtxEq
/// still compares it as a value.
struct Test {
  enum class Kind : std::uint8_t {
    CtxEq,             ///< a == b
    AbsDiffLt,         ///< |a - b| < t
    AbsDiffEq,         ///< |a - b| == t
    ModAbsDiffLt,      ///< |a - b| % mod < t
    MinGt,             ///< min(L,U) > t
    MinLt,             ///< min(L,U) < t
    MaxLt,             ///< max(L,U) < t
    SumLt,             ///< L + U < t
    CtxLt,             ///< a < t
    AbsDistToConstLt,  ///< |a - m| < t
  };

  Kind kind = Kind::CtxEq;
  Context a = Context::L;
  Context b = Context::U;
  int t = 0;
  int mod = 0;
  int m = 0;

  static Test ctx_eq(Context a, Context b) { return {Kind::CtxEq, a, b, 0, 0, 0}; }
  static Test abs_diff_lt(Context a, Context b, int t) { return {Kind::AbsDiffLt, a, b, t, 0, 0}; }
  static Test abs_diff_eq(Context a, Context b, int t) { return {Kind::AbsDiffEq, a, b, t, 0, 0}; }
  static Test mod_abs_diff_lt(Context a, Context b, int mod, int t) { return {Kind::ModAbsDiffLt, a, b, t, mod, 0}; }
  static Test min_gt(int t) { return {Kind::MinGt, Context::L, Context::U, t, 0, 0}; }
  static Test min_lt(int t) { return {Kind::MinLt, Context::L, Context::U, t, 0, 0}; }
  static Test max_lt(int t) { return {Kind::MaxLt, Context::L, Context::U, t, 0, 0}; }
  static Test sum_lt(int t) { return {Kind::SumLt, Context::L, Context::U, t, 0, 0}; }
  static Test ctx_lt(Context c, int t) { return {Kind::CtxLt, c, c, t, 0, 0}; }
  static Test abs_dist_to_const_lt(Context c, int m, int t) { return {Kind::AbsDistToConstLt, c, c, t, 0, m}; }

  bool eval(const ContextTuple& applied) const noexcept;
  std::uint8_t context_mask() const noexcept;

  /// `L==U`, `|L-U|<2`, `|L-U|==2`, `|L-U|%63<3`, `min>1`, `min<1`, `max<2`,
  /// `L+U<2`, `L<2`, `|L-26|<3`.
  std::string to_string() const;
  static Test parse(std::string_view text);

  friend bool operator==(const Test&, const Test&) = default;
};

/// L==U, min>0, L+U<2, L<2.
std::vector<Test> hevc_tests();
/// The 14 tests of the extended HEVC profile.
std::vector<Test> extended_hevc_tests();
/// Tests over L and U for k=67 (closeness to 50/18/34 and modular angular distance).
std::vector<Test> jem_tests();
/// Preset by name: hevc, hevc-ext, jem.
std::vector<Test> test_preset(std::string_view name);

/// Ordered labels resolved per block with deduplication.
///
/// The first `head_items` items form a head that stops emitting once
/// `head_cap` modes were produced (0 = no head). `derived` items emit -1 then
/// +1 of every angular mode emitted so far, earliest first.
struct DynamicList {
  std::vector<Label> items;
  int head_items = 0;
  int head_cap = 0;

  /// Throws ValidationError unless every numeric mode appears outside the head.
  void validate(const SymbolSpace& space) const;
  /// Mode order for one applied tuple; a permutation of 0..k-1 for valid lists.
  std::vector<int> resolve(const ContextTuple& applied, const EvalRules& rules) const;

  friend bool operator==(const DynamicList&, const DynamicList&) = default;
};

struct Leaf {
  enum class Kind : std::uint8_t { Static, Dynamic };
  Kind kind = Kind::Static;
  Labelling labels;  ///< Static leaves.
  DynamicList list;  ///< Dynamic leaves.
  CodeShape shape;
  int cabac_group = 0;

  friend bool operator==(const Leaf&, const Leaf&) = default;
};

/// Binary decision tree node. Internal nodes hold a test; leaves hold an index
/// into Scheme::leaves.
struct TreeNode {
  std::optional<Test> test;
  int on_true = -1;
  int on_false = -1;
  int leaf = -1;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct LeafCost {
  int leaf = 0;
  std::uint64_t samples = 0;
  std::uint64_t bits = 0;
  double hit_prob = 0.0;
  double bits_per_ipm = 0.0;
};

struct CostReport {
  double bits_per_ipm = 0.0;
  std::uint64_t total_bits = 0;
  std::uint64_t total_samples = 0;
  std::vector<LeafCost> per_leaf;
};

class Scheme {
 public:
  Scheme() = default;
  Scheme(EvalRules rules, std::vector<TreeNode> nodes, std::vector<Leaf> leaves, std::string name = "");

  /// A one-leaf scheme.
  static Scheme single_leaf(EvalRules rules, Leaf leaf, std::string name = "");

  const EvalRules& rules() const noexcept { return rules_; }
  const SymbolSpace& space() const noexcept { return rules_.space; }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const std::vector<Leaf>& leaves() const noexcept { return leaves_; }
  void set_cabac_group(int leaf, int group) { leaves_[static_cast<std::size_t>(leaf)].cabac_group = group; }
  const std::string& name() const noexcept { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

  /// Contexts read by tests and labels.
  std::uint8_t context_mask() const noexcept;

  int route(const ContextTuple& raw) const;
  /// Mode order (rank -> mode) for a raw tuple.
  std::vector<int> permutation(const ContextTuple& raw) const;
  int rank_of(const ContextTuple& raw, int ipm) const;
  int mode_at(const ContextTuple& raw, int rank) const;
  const CodewordTable& codewords(int leaf) const { return tables_[static_cast<std::size_t>(leaf)]; }
  const PrefixDecoder& decoder(int leaf) const { return decoders_[static_cast<std::size_t>(leaf)]; }
  /// Codeword length of a sample.
  int bits_for(const ContextTuple& raw, int ipm) const;

  /// Exact cost on a histogram whose contexts cover the scheme's.
  CostReport evaluate(const ConditionalHistogram& hist) const;

  /// Throws ValidationError when a scheme invariant fails: complete codes,
  /// valid dynamic lists, static labellings distinct and available on every
  /// context tuple routed to their leaf, every leaf reachable.
  void validate() const;

  /// Leaf depth-first order (true branch first).
  std::vector<int> leaf_order() const;
  int depth() const;

  friend bool operator==(const Scheme& a, const Scheme& b) {
    return a.rules_.space == b.rules_.space && a.rules_.unavailable == b.rules_.unavailable &&
           a.rules_.wrap_nonangular_offsets == b.rules_.wrap_nonangular_offsets && a.nodes_ == b.nodes_ &&
           a.leaves_ == b.leaves_;
  }

 private:
  void build_tables();
  std::vector<int> static_order(const Leaf& leaf, const ContextTuple& applied) const;

  EvalRules rules_;
  std::vector<TreeNode> nodes_;
  std::vector<Leaf> leaves_;
  std::string name_;
  std::vector<CodewordTable> tables_;
  std::vector<PrefixDecoder> decoders_;
};

/// Ranks of a static labelling: MPM values first, then the remaining modes ascending.
std::vector<int> static_permutation(std::span<const int> mpms, int k);

// ---------------------------------------------------------------------------
// Built-in schemes

/// HEVC signaling: -1 maps to DC, five leaves, 2+3+3+(6x32).
Scheme anchor_hevc();
/// JEM signaling: one dynamic leaf with the six-entry MPM head, the
/// preferred multiples of 4, then 0..18, 19..45 and the rest.
Scheme anchor_jem();
/// The derived five-leaf k=35 scheme with four distinct codes.
Scheme fixture_five_leaf();
/// The derived four-leaf k=67 tree with its leaf codes. Leaf lists are not
/// known; each leaf carries L, U, #0, #1 followed by every numeric mode.
Scheme fixture_four_leaf_dynamic();

// ---------------------------------------------------------------------------
// Serialization

std::string scheme_to_json(const Scheme& s, int indent = 2);
Scheme scheme_from_json(std::string_view text);
Scheme load_scheme(const std::filesystem::path& path);
void save_scheme(const std::filesystem::path& path, const Scheme& s);

/// FNV-1a over the compact JSON form.
std::uint64_t scheme_hash(const Scheme& s);

/// Groups leaves by the probability that their first emitted bit is 1, into
/// at most `max_groups` groups split at the widest gaps. Writes cabac_group.
void assign_cabac_groups(Scheme& s, const ConditionalHistogram& hist, int max_groups);

}  // namespace ipmc
