#include "ipmc/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "ipmc/error.hpp"
#include "ipmc/random.hpp"

namespace ipmc {

void validate_sample(const Sample& s, const SymbolSpace& space) {
  if (!space.valid_mode(s.ipm))
    throw ValidationError("ipm " + std::to_string(s.ipm) + " outside [0, " + std::to_string(space.k - 1) + "]");
  for (Context c : kAllContexts) {
    int m = s.ctx[c];
    if (m != kUnavailable && !space.valid_mode(m))
      throw ValidationError("context " + std::string(context_name(c)) + "=" + std::to_string(m) + " is not a mode");
  }
  if (s.rd_candidates.empty()) return;
  std::set<int> seen;
  bool has_ipm = false;
  for (const auto& c : s.rd_candidates) {
    if (!space.valid_mode(c.mode)) throw ValidationError("rd candidate " + std::to_string(c.mode) + " is not a mode");
    if (!(c.distortion >= 0.0)) throw ValidationError("rd candidate distortion must be nonnegative");
    if (!seen.insert(c.mode).second) throw ValidationError("rd candidate " + std::to_string(c.mode) + " repeated");
    has_ipm |= c.mode == s.ipm;
  }
  if (!has_ipm) throw ValidationError("rd candidates do not contain the chosen ipm");
}

std::uint64_t pack_tuple(const ContextTuple& t) noexcept {
  std::uint64_t key = 0;
  for (int i = 0; i < kNumContexts; ++i) key |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(t.v[i] + 2)) << (8 * i);
  return key;
}

// ---------------------------------------------------------------------------

ConditionalHistogram::ConditionalHistogram(SymbolSpace space, ContextSet context_set)
    : space_(space), context_set_(std::move(context_set)) {}

ConditionalHistogram ConditionalHistogram::build(std::span<const Sample> samples, const SymbolSpace& space,
                                                 const ContextSet& context_set) {
  if (samples.empty()) throw Error("cannot build a histogram from an empty sample sequence");
  HistogramBuilder b(space, context_set);
  for (const auto& s : samples) b.add(s.ctx, s.ipm);
  return std::move(b).finish();
}

const ConditionalHistogram::Cell* ConditionalHistogram::find(const ContextTuple& ctx) const {
  const ContextTuple key = context_set_.project(ctx);
  auto it = std::lower_bound(cells_.begin(), cells_.end(), key,
                             [](const Cell& c, const ContextTuple& k) { return c.key < k; });
  if (it == cells_.end() || it->key != key) return nullptr;
  return &*it;
}

ConditionalHistogram ConditionalHistogram::project(const ContextSet& subset) const {
  if (!context_set_.contains_all(subset.mask()))
    throw ValidationError("cannot project {" + context_set_.to_string() + "} onto {" + subset.to_string() + "}");
  HistogramBuilder b(space_, subset);
  for (const auto& cell : cells_)
    for (int m = 0; m < space_.k; ++m)
      if (cell.counts[m]) b.add(cell.key, m, cell.counts[m]);
  return std::move(b).finish();
}

std::uint64_t ConditionalHistogram::nonzero_bins() const {
  std::uint64_t n = 0;
  for (const auto& cell : cells_) n += std::count_if(cell.counts.begin(), cell.counts.end(), [](auto c) { return c > 0; });
  return n;
}

std::vector<std::uint64_t> ConditionalHistogram::marginal() const {
  std::vector<std::uint64_t> m(space_.k, 0);
  for (const auto& cell : cells_)
    for (int i = 0; i < space_.k; ++i) m[i] += cell.counts[i];
  return m;
}

HistogramBuilder::HistogramBuilder(SymbolSpace space, ContextSet context_set)
    : space_(space), context_set_(std::move(context_set)) {
  space_.validate();
}

void HistogramBuilder::add(const ContextTuple& ctx, int ipm, std::uint64_t count) {
  if (!space_.valid_mode(ipm)) throw ValidationError("ipm " + std::to_string(ipm) + " is not a mode");
  const ContextTuple key = context_set_.project(ctx);
  auto [it, inserted] = index_.try_emplace(pack_tuple(key), cells_.size());
  if (inserted) cells_.push_back({key, std::vector<std::uint64_t>(space_.k, 0), 0});
  auto& cell = cells_[it->second];
  cell.counts[ipm] += count;
  cell.total += count;
  total_ += count;
}

ConditionalHistogram HistogramBuilder::finish() && {
  ConditionalHistogram h(space_, context_set_);
  std::sort(cells_.begin(), cells_.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  h.cells_ = std::move(cells_);
  h.total_ = total_;
  return h;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t comma = line.find(',', pos);
    std::string_view f = line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
    out.push_back(f);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

int parse_int_field(std::string_view f, std::size_t line) {
  int v = 0;
  auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || p != f.data() + f.size()) throw ParseError("expected integer, got '" + std::string(f) + "'", line);
  return v;
}

double parse_double_field(std::string_view f, std::size_t line) {
  std::string tmp(f);
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) throw ParseError("expected number, got '" + tmp + "'", line);
  return v;
}

}  // namespace

std::vector<Sample> read_samples_csv(std::istream& in, const SymbolSpace& space) {
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv(line);
    if (sv.empty() || sv == "\r" || sv.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;
      if (sv.substr(0, 3) == "ipm") continue;
    }
    auto f = split_csv(sv);
    if (f.size() < 6 || (f.size() - 6) % 2 != 0)
      throw ParseError("expected 6 fields plus (mode,distortion) pairs, got " + std::to_string(f.size()), lineno);
    Sample s;
    s.ipm = parse_int_field(f[0], lineno);
    s.ctx = ContextTuple(parse_int_field(f[1], lineno), parse_int_field(f[2], lineno), parse_int_field(f[3], lineno),
                         parse_int_field(f[4], lineno), parse_int_field(f[5], lineno));
    for (std::size_t i = 6; i < f.size(); i += 2)
      s.rd_candidates.push_back({parse_int_field(f[i], lineno), parse_double_field(f[i + 1], lineno)});
    try {
      validate_sample(s, space);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_samples_csv(std::ostream& out, std::span<const Sample> samples) {
  std::size_t max_cands = 0;
  for (const auto& s : samples) max_cands = std::max(max_cands, s.rd_candidates.size());
  out << "ipm,L,U,BL,UR,UL";
  for (std::size_t i = 0; i < max_cands; ++i) out << ",cand" << i << ",d" << i;
  out << '\n';
  char buf[32];
  for (const auto& s : samples) {
    out << s.ipm;
    for (auto m : s.ctx.v) out << ',' << m;
    for (const auto& c : s.rd_candidates) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, c.distortion);
      out << ',' << c.mode << ',' << std::string_view(buf, p - buf);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Binary

namespace {

constexpr std::array<char, 4> kSampleMagic = {'I', 'P', 'M', 'S'};
constexpr std::uint8_t kSampleVersion = 1;

void put_u16(std::ostream& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}
void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) throw ParseError("truncated binary sample file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError("truncated binary sample file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_samples_binary(std::ostream& out, std::span<const Sample> samples, const SymbolSpace& space) {
  const std::size_t rd = samples.empty() ? 0 : samples.front().rd_candidates.size();
  for (const auto& s : samples)
    if (s.rd_candidates.size() != rd)
      throw ValidationError("binary sample form needs the same number of rd candidates on every sample");
  if (rd > 255 || space.k > 255) throw ValidationError("binary sample form limits k and rd candidates to 255");
  out.write(kSampleMagic.data(), 4);
  out.put(static_cast<char>(kSampleVersion));
  out.put(static_cast<char>(space.k));
  out.put(static_cast<char>(rd));
  out.put(0);
  put_u32(out, static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    put_u16(out, static_cast<std::uint16_t>(s.ipm));
    for (auto m : s.ctx.v) put_u16(out, static_cast<std::uint16_t>(m));
    for (const auto& c : s.rd_candidates) {
      put_u16(out, static_cast<std::uint16_t>(c.mode));
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(c.distortion)));
    }
  }
}

std::vector<Sample> read_samples_binary(std::istream& in, const SymbolSpace& space) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kSampleMagic) throw ParseError("missing IPMS magic");
  const int version = in.get();
  const int k = in.get();
  const int rd = in.get();
  in.get();
  if (!in) throw ParseError("truncated binary sample header");
  if (version != kSampleVersion) throw ParseError("unsupported binary sample version " + std::to_string(version));
  if (k != space.k)
    throw ValidationError("binary file has k=" + std::to_string(k) + " but the profile expects k=" + std::to_string(space.k));
  const std::uint32_t n = get_u32(in);
  std::vector<Sample> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Sample s;
    s.ipm = static_cast<std::int16_t>(get_u16(in));
    for (auto& m : s.ctx.v) m = static_cast<std::int16_t>(get_u16(in));
    for (int j = 0; j < rd; ++j) {
      RdCandidate c;
      c.mode = static_cast<std::int16_t>(get_u16(in));
      c.distortion = std::bit_cast<float>(get_u32(in));
      s.rd_candidates.push_back(c);
    }
    try {
      validate_sample(s, space);
    } catch (const ValidationError& e) {
      throw ValidationError("record " + std::to_string(i) + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> load_samples(const std::filesystem::path& path, const SymbolSpace& space) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  in.clear();
  in.seekg(0);
  try {
    if (std::memcmp(magic, kSampleMagic.data(), 4) == 0) return read_samples_binary(in, space);
    return read_samples_csv(in, space);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void save_samples(const std::filesystem::path& path, std::span<const Sample> samples, const SymbolSpace& space) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  if (path.extension() == ".ipms")
    write_samples_binary(out, samples, space);
  else
    write_samples_csv(out, samples);
  if (!out) throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic data

void SynthParams::validate() const {
  auto bad = [](double p) { return !(p >= 0.0 && p <= 1.0); };
  if (bad(copy_prob) || bad(jitter_prob) || bad(nonangular_prob))
    throw ValidationError("synth probabilities must lie in [0, 1]");
  if (copy_prob + jitter_prob + nonangular_prob > 1.0 + 1e-12)
    throw ValidationError("copy_prob + jitter_prob + nonangular_prob must not exceed 1");
  if (width < 2 || height < 2) throw ValidationError("synth grid must be at least 2x2");
  if (rd_alternates < 0) throw ValidationError("rd_alternates must be nonnegative");
  if (!(rd_gap_mean > 0.0)) throw ValidationError("rd_gap_mean must be positive");
}

std::vector<Sample> synth_dataset(const SymbolSpace& space, const SynthParams& p) {
  space.validate();
  p.validate();
  Rng rng(p.seed);
  std::vector<int> grid(static_cast<std::size_t>(p.width) * p.height, kUnavailable);
  auto at = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= p.width || y >= p.height) return kUnavailable;
    return grid[static_cast<std::size_t>(y) * p.width + x];
  };
  const int alternates = std::min(p.rd_alternates, space.k - 1);

  std::vector<Sample> out;
  out.reserve(grid.size());
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      Sample s;
      s.ctx = ContextTuple(at(x - 1, y), at(x, y - 1), kUnavailable, at(x + 1, y - 1), at(x - 1, y - 1));
      std::array<int, 4> avail{};
      int n_avail = 0;
      for (Context c : {Context::L, Context::U, Context::UL, Context::UR})
        if (s.ctx[c] != kUnavailable) avail[n_avail++] = s.ctx[c];

      const double u = rng.uniform();
      int mode;
      if (u < p.copy_prob && n_avail > 0) {
        mode = avail[rng.below(n_avail)];
      } else if (u < p.copy_prob + p.jitter_prob && n_avail > 0) {
        mode = avail[rng.below(n_avail)];
        if (space.is_angular(mode)) {
          static constexpr int kOffsets[4] = {-2, -1, 1, 2};
          mode = space.wrap_angular(mode, kOffsets[rng.below(4)]);
        }
      } else if (u < p.copy_prob + p.jitter_prob + p.nonangular_prob) {
        mode = rng.chance(0.5) ? kPlanar : kDC;
      } else {
        mode = space.angular_min + static_cast<int>(rng.below(space.angular_count()));
      }
      s.ipm = mode;
      grid[static_cast<std::size_t>(y) * p.width + x] = mode;

      if (alternates > 0) {
        const double base = rng.uniform() * p.rd_gap_mean;
        s.rd_candidates.push_back({mode, base});
        std::vector<int> pool;
        pool.reserve(space.k - 1);
        for (int m = 0; m < space.k; ++m)
          if (m != mode) pool.push_back(m);
        for (int j = 0; j < alternates; ++j) {
          const std::size_t pick = j + rng.below(pool.size() - j);
          std::swap(pool[j], pool[pick]);
          // Strictly positive gap keeps the chosen mode the unique distortion minimum.
          s.rd_candidates.push_back({pool[j], base + 1e-6 + rng.exponential(p.rd_gap_mean)});
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace ipmc
