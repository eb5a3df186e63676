#include "iog/bits.hpp"

#include <stdexcept>

namespace iog {

BitString BitString::from_bytes(std::string_view bytes) {
  BitString b;
  b.data_.assign(bytes.begin(), bytes.end());
  b.nbits_ = bytes.size() * 8;
  return b;
}

bool BitString::bit(std::size_t i) const {
  auto byte = static_cast<std::uint8_t>(data_[i / 8]);
  return (byte >> (7 - i % 8)) & 1u;
}

std::uint64_t BitString::read(std::size_t pos, int width) const {
  std::uint64_t v = 0;
  if (pos % 8 == 0 && width % 8 == 0) {
    for (int i = 0; i < width / 8; ++i)
      v = (v << 8) | static_cast<std::uint8_t>(data_[pos / 8 + i]);
    return v;
  }
  for (int i = 0; i < width; ++i) v = (v << 1) | (bit(pos + i) ? 1u : 0u);
  return v;
}

std::uint8_t BitString::byte_at(std::size_t pos) const {
  if (pos % 8 == 0) return static_cast<std::uint8_t>(data_[pos / 8]);
  return static_cast<std::uint8_t>(read(pos, 8));
}

void BitString::push_bit(bool b) {
  if (nbits_ % 8 == 0) data_.push_back('\0');
  if (b) data_.back() = static_cast<char>(static_cast<std::uint8_t>(data_.back()) | (1u << (7 - nbits_ % 8)));
  ++nbits_;
}

void BitString::append_bits(std::uint64_t value, int width) {
  for (int i = width - 1; i >= 0; --i) push_bit((value >> i) & 1u);
}

void BitString::append_bytes(std::string_view bytes) {
  if (aligned()) {
    data_.append(bytes.begin(), bytes.end());
    nbits_ += bytes.size() * 8;
    return;
  }
  for (char c : bytes) append_bits(static_cast<std::uint8_t>(c), 8);
}

void BitString::append(const BitString& other) {
  if (aligned() && other.aligned()) {
    data_ += other.data_;
    nbits_ += other.nbits_;
    return;
  }
  for (std::size_t i = 0; i < other.nbits_; ++i) push_bit(other.bit(i));
}

BitString BitString::slice(std::size_t from, std::size_t to) const {
  BitString out;
  if (from % 8 == 0 && to % 8 == 0) {
    out.data_ = data_.substr(from / 8, (to - from) / 8);
    out.nbits_ = to - from;
    return out;
  }
  for (std::size_t i = from; i < to; ++i) out.push_bit(bit(i));
  return out;
}

std::string to_hex(std::string_view bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (char c : bytes) {
    auto u = static_cast<std::uint8_t>(c);
    out.push_back(digits[u >> 4]);
    out.push_back(digits[u & 15]);
  }
  return out;
}

static int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2) throw std::invalid_argument("odd-length hex string");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_value(hex[i]), lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
    out.push_back(static_cast<char>(hi * 16 + lo));
  }
  return out;
}

std::string escape_bytes(std::string_view bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  for (char c : bytes) {
    auto u = static_cast<std::uint8_t>(c);
    switch (c) {
      case '\r': out += "\\r"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\\': out += "\\\\"; break;
      case '\'': out += "\\'"; break;
      default:
        if (u < 0x20 || u >= 0x7f) {
          out += "\\x";
          out.push_back(digits[u >> 4]);
          out.push_back(digits[u & 15]);
        } else {
          out.push_back(c);
        }
    }
  }
  return out;
}

}  // namespace iog
