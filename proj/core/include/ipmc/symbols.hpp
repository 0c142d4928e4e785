#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ipmc {

/// Mode value of a context that is not available (picture border, not yet coded).
inline constexpr int kUnavailable = -1;
/// Coordinate that is not part of a histogram's context set.
inline constexpr int kAbsent = -2;
/// Index of the DC mode; unavailable contexts map here under the HEVC convention.
inline constexpr int kPlanar = 0;
inline constexpr int kDC = 1;

/// The set of intra prediction modes being signaled.
struct SymbolSpace {
  int k = 35;
  int angular_min = 2;
  int angular_max = 34;

  static SymbolSpace hevc() { return {35, 2, 34}; }
  static SymbolSpace jem() { return {67, 2, 66}; }
  /// Planar and DC followed by k-2 angular modes.
  static SymbolSpace generic(int k) { return {k, 2, k - 1}; }

  bool valid_mode(int m) const noexcept { return m >= 0 && m < k; }
  bool is_angular(int m) const noexcept { return m >= angular_min && m <= angular_max; }
  int angular_count() const noexcept { return angular_max - angular_min + 1; }
  /// Offset an angular mode, wrapping inside [angular_min, angular_max].
  int wrap_angular(int mode, int offset) const noexcept {
    const int n = angular_count();
    int r = (mode - angular_min + offset) % n;
    if (r < 0) r += n;
    return angular_min + r;
  }
  /// Throws ValidationError when the invariants do not hold.
  void validate() const;

  friend bool operator==(const SymbolSpace&, const SymbolSpace&) = default;
};

enum class Context : std::uint8_t { L = 0, U = 1, BL = 2, UR = 3, UL = 4 };
inline constexpr int kNumContexts = 5;
inline constexpr std::array<Context, kNumContexts> kAllContexts = {Context::L, Context::U, Context::BL,
                                                                   Context::UR, Context::UL};

std::string_view context_name(Context c);
/// Parses "L", "U", "BL", "UR" or "UL"; returns false on anything else.
bool parse_context(std::string_view s, Context& out);

/// Modes of the five neighbouring blocks: L, U, BL, UR, UL.
struct ContextTuple {
  std::array<std::int16_t, kNumContexts> v{kUnavailable, kUnavailable, kUnavailable, kUnavailable,
                                           kUnavailable};

  ContextTuple() = default;
  ContextTuple(int l, int u, int bl = kUnavailable, int ur = kUnavailable, int ul = kUnavailable)
      : v{static_cast<std::int16_t>(l), static_cast<std::int16_t>(u), static_cast<std::int16_t>(bl),
          static_cast<std::int16_t>(ur), static_cast<std::int16_t>(ul)} {}

  int operator[](Context c) const noexcept { return v[static_cast<int>(c)]; }
  void set(Context c, int mode) noexcept { v[static_cast<int>(c)] = static_cast<std::int16_t>(mode); }

  friend bool operator==(const ContextTuple&, const ContextTuple&) = default;
  friend auto operator<=>(const ContextTuple&, const ContextTuple&) = default;
};

/// An ordered subset of the five contexts.
class ContextSet {
 public:
  ContextSet() = default;
  ContextSet(std::initializer_list<Context> cs);
  explicit ContextSet(std::vector<Context> cs);

  static ContextSet all() { return ContextSet({Context::L, Context::U, Context::BL, Context::UR, Context::UL}); }
  /// Parses a comma separated list such as "L,U,UL"; "" and "none" give the empty set.
  static ContextSet parse(std::string_view s);

  const std::vector<Context>& contexts() const noexcept { return order_; }
  std::uint8_t mask() const noexcept { return mask_; }
  bool contains(Context c) const noexcept { return mask_ & (1u << static_cast<int>(c)); }
  bool contains_all(std::uint8_t mask) const noexcept { return (mask & ~mask_) == 0; }
  std::size_t size() const noexcept { return order_.size(); }
  bool empty() const noexcept { return order_.empty(); }
  std::string to_string() const;

  /// Replaces every coordinate outside the set with kAbsent.
  ContextTuple project(const ContextTuple& t) const;

  friend bool operator==(const ContextSet& a, const ContextSet& b) { return a.order_ == b.order_; }

 private:
  std::vector<Context> order_;
  std::uint8_t mask_ = 0;
};

/// Bit for a context in a ContextSet-style mask.
constexpr std::uint8_t context_bit(Context c) { return static_cast<std::uint8_t>(1u << static_cast<int>(c)); }

/// How a scheme treats unavailable (-1) contexts before tests and labels run.
enum class UnavailableRule : std::uint8_t {
  MapToDC,  ///< HEVC convention: -1 becomes DC.
  Keep,     ///< -1 stays; labels over it are unavailable.
};

std::string_view to_string(UnavailableRule r);
UnavailableRule parse_unavailable_rule(std::string_view s);

/// Rules shared by label and test evaluation.
struct EvalRules {
  SymbolSpace space = SymbolSpace::hevc();
  UnavailableRule unavailable = UnavailableRule::MapToDC;
  /// When true, offsets on planar/DC wrap like angular modes instead of yielding unavailable.
  bool wrap_nonangular_offsets = false;

  ContextTuple apply(const ContextTuple& raw) const noexcept {
    if (unavailable == UnavailableRule::Keep) return raw;
    ContextTuple out = raw;
    for (auto& m : out.v)
      if (m == kUnavailable) m = kDC;
    return out;
  }
};

}  // namespace ipmc
