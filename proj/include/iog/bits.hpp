#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace iog {

// Raw wire bytes. std::string is binary-safe and cheap to slice.
using Bytes = std::string;

// Bit sequence, MSB-first within each byte. Message yields are byte-aligned
// but bit fields inside a message may leave intermediate yields unaligned.
class BitString {
public:
  BitString() = default;

  static BitString from_bytes(std::string_view bytes);

  std::size_t size() const { return nbits_; }
  bool empty() const { return nbits_ == 0; }
  bool aligned() const { return nbits_ % 8 == 0; }

  bool bit(std::size_t i) const;
  // Reads `width` (<= 64) bits starting at `pos` as an unsigned integer.
  std::uint64_t read(std::size_t pos, int width) const;
  // Reads the byte starting at bit offset `pos`; pos may be unaligned.
  std::uint8_t byte_at(std::size_t pos) const;

  void push_bit(bool b);
  void append_bits(std::uint64_t value, int width);
  void append_bytes(std::string_view bytes);
  void append(const BitString& other);

  BitString slice(std::size_t from, std::size_t to) const;

  // Packed bytes; a trailing partial byte is zero-padded.
  const Bytes& bytes() const { return data_; }

  bool operator==(const BitString& o) const { return nbits_ == o.nbits_ && data_ == o.data_; }
  bool operator<(const BitString& o) const {
    return nbits_ != o.nbits_ ? nbits_ < o.nbits_ : data_ < o.data_;
  }

private:
  Bytes data_;
  std::size_t nbits_ = 0;
};

std::string to_hex(std::string_view bytes);
// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);
// Printable rendering with C-style escapes for control bytes.
std::string escape_bytes(std::string_view bytes);

}  // namespace iog
