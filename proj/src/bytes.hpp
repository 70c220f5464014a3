#pragma once

// Little-endian byte stream helpers shared by the binary formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tpq/error.hpp"

namespace tpq::detail {

class ByteWriter {
 public:
  void magic(std::string_view m) { out_.insert(out_.end(), m.begin(), m.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(std::span<const float> vs) {
    for (float v : vs) f32(v);
  }

  std::vector<std::uint8_t>& bytes() { return out_; }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

/// Bounds-checked reader; every overrun throws kMalformed naming `what`.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> in, std::string what)
      : in_(in), what_(std::move(what)) {}

  void expect_magic(std::string_view m) {
    need(m.size(), "magic");
    if (std::memcmp(in_.data() + pos_, m.data(), m.size()) != 0)
      fail("bad magic, expected \"" + std::string(m) + "\"");
    pos_ += m.size();
  }
  std::uint8_t u8(const char* field) {
    need(1, field);
    return in_[pos_++];
  }
  std::uint16_t u16(const char* field) { return static_cast<std::uint16_t>(get(2, field)); }
  std::uint32_t u32(const char* field) { return static_cast<std::uint32_t>(get(4, field)); }
  std::uint64_t u64(const char* field) { return get(8, field); }
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
  std::vector<float> f32s(std::size_t n, const char* field) {
    if (n > remaining() / 4) fail(std::string("truncated ") + field);
    std::vector<float> out(n);
    for (auto& v : out) v = f32(field);
    return out;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }
  void expect_end() {
    if (remaining() != 0) fail(std::to_string(remaining()) + " trailing bytes");
  }
  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::kMalformed, what_ + ": " + why);
  }

 private:
  void need(std::size_t n, const char* field) {
    if (remaining() < n) fail(std::string("truncated at field '") + field + "'");
  }
  std::uint64_t get(int n, const char* field) {
    need(static_cast<std::size_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace tpq::detail
