#include "ipmc/codec.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

#include "ipmc/error.hpp"

namespace ipmc {

void BitWriter::write(std::uint64_t bits, int length) {
  for (int i = length - 1; i >= 0; --i) write_bit(static_cast<int>((bits >> i) & 1));
}

void BitWriter::write_bit(int bit) {
  if ((bits_ & 7) == 0) bytes_.push_back(0);
  if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bits_ & 7));
  ++bits_;
}

BitReader::BitReader(std::span<const std::uint8_t> bytes, std::uint64_t bit_count)
    : bytes_(bytes), bit_count_(std::min<std::uint64_t>(bit_count, bytes.size() * 8)) {}

int BitReader::read_bit() noexcept {
  if (pos_ >= bit_count_) return -1;
  const int b = (bytes_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1;
  ++pos_;
  return b;
}

EncodedBlob encode(const Scheme& scheme, std::span<const Sample> samples, std::vector<int>* cabac_ids) {
  EncodedBlob blob;
  blob.scheme_hash = scheme_hash(scheme);
  blob.k = scheme.space().k;
  blob.sample_count = samples.size();
  BitWriter w;
  if (cabac_ids) cabac_ids->clear();
  for (const auto& s : samples) {
    validate_sample(s, scheme.space());
    const int leaf = scheme.route(s.ctx);
    const int rank = scheme.rank_of(s.ctx, s.ipm);
    const Codeword& cw = scheme.codewords(leaf).words[static_cast<std::size_t>(rank)];
    w.write(cw.bits, cw.length);
    if (cabac_ids) cabac_ids->push_back(scheme.leaves()[static_cast<std::size_t>(leaf)].cabac_group);
  }
  blob.payload_bits = w.bit_count();
  blob.payload = std::move(w).take();
  return blob;
}

std::vector<int> decode(const Scheme& scheme, const EncodedBlob& blob, std::span<const ContextTuple> contexts) {
  if (blob.scheme_hash != scheme_hash(scheme)) throw ValidationError("blob was encoded with a different scheme");
  if (blob.k != scheme.space().k) throw ValidationError("blob k does not match the scheme");
  if (contexts.size() != blob.sample_count)
    throw ValidationError("expected " + std::to_string(blob.sample_count) + " contexts, got " +
                          std::to_string(contexts.size()));
  BitReader r(blob.payload, blob.payload_bits);
  std::vector<int> out;
  out.reserve(contexts.size());
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const int leaf = scheme.route(contexts[i]);
    const PrefixDecoder& dec = scheme.decoder(leaf);
    int node = PrefixDecoder::kRoot;
    while (dec.rank_at(node) < 0) {
      const int bit = r.read_bit();
      if (bit < 0) throw DecodeError("payload ends inside a codeword", i);
      node = dec.step(node, bit);
      if (node < 0) throw DecodeError("bit string is not a codeword", i);
    }
    out.push_back(scheme.mode_at(contexts[i], dec.rank_at(node)));
  }
  if (r.remaining()) throw DecodeError("trailing payload bits", contexts.size());
  return out;
}

namespace {

void put_le(std::ostream& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ParseError("blob header truncated");
    v |= static_cast<std::uint64_t>(c & 0xff) << (8 * i);
  }
  return v;
}

}  // namespace

void write_blob(std::ostream& out, const EncodedBlob& blob) {
  out.write("IPMB", 4);
  put_le(out, EncodedBlob::kVersion, 1);
  put_le(out, blob.scheme_hash, 8);
  put_le(out, static_cast<std::uint64_t>(blob.k), 2);
  put_le(out, blob.sample_count, 8);
  put_le(out, blob.payload_bits, 8);
  out.write(reinterpret_cast<const char*>(blob.payload.data()), static_cast<std::streamsize>(blob.payload.size()));
}

EncodedBlob read_blob(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "IPMB") throw ParseError("not an IPMB blob");
  const auto version = get_le(in, 1);
  if (version != EncodedBlob::kVersion) throw ParseError("unsupported blob version " + std::to_string(version));
  EncodedBlob b;
  b.scheme_hash = get_le(in, 8);
  b.k = static_cast<int>(get_le(in, 2));
  b.sample_count = get_le(in, 8);
  b.payload_bits = get_le(in, 8);
  b.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  // Missing bytes surface as a DecodeError with the failing sample index.
  return b;
}

void save_blob(const std::filesystem::path& path, const EncodedBlob& blob) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_blob(out, blob);
  if (!out) throw Error("write failed: " + path.string());
}

EncodedBlob load_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return read_blob(in);
}

}  // namespace ipmc
