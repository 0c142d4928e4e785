#include "ipmc/symbols.hpp"

#include <sstream>

#include "ipmc/error.hpp"

namespace ipmc {

void SymbolSpace::validate() const {
  if (k < 3) throw ValidationError("symbol space needs k >= 3, got " + std::to_string(k));
  if (!(angular_min < angular_max && angular_max < k) || angular_min < 0)
    throw ValidationError("angular range [" + std::to_string(angular_min) + ", " + std::to_string(angular_max) +
                          "] does not fit k=" + std::to_string(k));
}

std::string_view context_name(Context c) {
  switch (c) {
    case Context::L: return "L";
    case Context::U: return "U";
    case Context::BL: return "BL";
    case Context::UR: return "UR";
    case Context::UL: return "UL";
  }
  return "?";
}

bool parse_context(std::string_view s, Context& out) {
  for (Context c : kAllContexts) {
    if (context_name(c) == s) {
      out = c;
      return true;
    }
  }
  return false;
}

ContextSet::ContextSet(std::initializer_list<Context> cs) : ContextSet(std::vector<Context>(cs)) {}

ContextSet::ContextSet(std::vector<Context> cs) : order_(std::move(cs)) {
  for (Context c : order_) {
    if (mask_ & context_bit(c)) throw ValidationError("context listed twice: " + std::string(context_name(c)));
    mask_ |= context_bit(c);
  }
}

ContextSet ContextSet::parse(std::string_view s) {
  std::vector<Context> out;
  if (s.empty() || s == "none") return ContextSet(out);
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string_view::npos) comma = s.size();
    std::string_view tok = s.substr(pos, comma - pos);
    Context c;
    if (!parse_context(tok, c)) throw ParseError("unknown context '" + std::string(tok) + "'");
    out.push_back(c);
    pos = comma + 1;
  }
  return ContextSet(std::move(out));
}

std::string ContextSet::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < order_.size(); ++i) {
    if (i) s += ',';
    s += context_name(order_[i]);
  }
  return s;
}

ContextTuple ContextSet::project(const ContextTuple& t) const {
  ContextTuple out;
  for (int i = 0; i < kNumContexts; ++i) out.v[i] = (mask_ & (1u << i)) ? t.v[i] : std::int16_t{kAbsent};
  return out;
}

std::string_view to_string(UnavailableRule r) { return r == UnavailableRule::MapToDC ? "dc" : "keep"; }

UnavailableRule parse_unavailable_rule(std::string_view s) {
  if (s == "dc") return UnavailableRule::MapToDC;
  if (s == "keep") return UnavailableRule::Keep;
  throw ParseError("unknown unavailable rule '" + std::string(s) + "' (expected dc|keep)");
}

}  // namespace ipmc
