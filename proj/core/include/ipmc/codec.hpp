#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "ipmc/dataset.hpp"
#include "ipmc/scheme.hpp"

namespace ipmc {

/// Appends bits MSB-first; the last byte is zero-padded.
class BitWriter {
 public:
  /// Writes the low `length` bits of `bits`, most significant first.
  void write(std::uint64_t bits, int length);
  void write_bit(int bit);
  std::uint64_t bit_count() const noexcept { return bits_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> take() && { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t bits_ = 0;
};

/// Reads bits MSB-first from the first `bit_count` bits of a buffer (fewer if
/// the buffer is shorter).
class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> bytes, std::uint64_t bit_count);
  /// Next bit, or -1 past the end.
  int read_bit() noexcept;
  std::uint64_t position() const noexcept { return pos_; }
  std::uint64_t remaining() const noexcept { return bit_count_ - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t bit_count_;
  std::uint64_t pos_ = 0;
};

struct EncodedBlob {
  static constexpr std::uint8_t kVersion = 1;

  std::uint64_t scheme_hash = 0;
  int k = 0;
  std::uint64_t sample_count = 0;
  std::uint64_t payload_bits = 0;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const EncodedBlob&, const EncodedBlob&) = default;
};

/// Encodes each sample's rank with its leaf's codeword. When `cabac_ids` is
/// given it receives the leaf's cabac_group for every emitted codeword.
EncodedBlob encode(const Scheme& scheme, std::span<const Sample> samples, std::vector<int>* cabac_ids = nullptr);

/// Inverse of encode. Throws ValidationError on a scheme hash, k or context
/// count mismatch and DecodeError on a truncated or invalid payload.
std::vector<int> decode(const Scheme& scheme, const EncodedBlob& blob, std::span<const ContextTuple> contexts);

/// Layout: "IPMB", version u8, scheme hash u64, k u16, sample count u64,
/// payload bits u64 (little endian), then the payload bytes.
void write_blob(std::ostream& out, const EncodedBlob& blob);
EncodedBlob read_blob(std::istream& in);
void save_blob(const std::filesystem::path& path, const EncodedBlob& blob);
EncodedBlob load_blob(const std::filesystem::path& path);

}  // namespace ipmc
