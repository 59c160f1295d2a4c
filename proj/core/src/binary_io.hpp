#pragma once

// Internal little-endian stream helpers shared by the checkpoint and dataset
// file formats. Not installed.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "stob/errors.hpp"

namespace stob::detail {

class LeWriter {
 public:
  LeWriter(std::ostream& out, std::string path)
      : out_(out), path_(std::move(path)) {}

  void bytes(const void* data, std::size_t size) {
    out_.write(static_cast<const char*>(data),
               static_cast<std::streamsize>(size));
    if (!out_) throw IoError("write failed for \"" + path_ + "\"");
  }

  void u8(std::uint8_t v) { bytes(&v, 1); }

  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }

  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }

  template <typename T>
  void payload(std::span<const T> values) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    if constexpr (std::endian::native == std::endian::little) {
      bytes(values.data(), values.size() * sizeof(T));
    } else {
      for (T v : values) {
        if constexpr (sizeof(T) == 4) {
          u32(std::bit_cast<std::uint32_t>(v));
        } else {
          u64(std::bit_cast<std::uint64_t>(v));
        }
      }
    }
  }

 private:
  std::ostream& out_;
  std::string path_;
};

class LeReader {
 public:
  LeReader(std::istream& in, std::string path)
      : in_(in), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("\"" + path_ + "\": " + what + " at offset " +
                      std::to_string(offset_));
  }

  void bytes(void* data, std::size_t size) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (static_cast<std::size_t>(in_.gcount()) != size) fail("truncated file");
    offset_ += size;
  }

  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }

  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str(std::uint64_t max_len = 1ULL << 20) {
    const std::uint64_t len = u64();
    if (len > max_len) fail("implausible string length " + std::to_string(len));
    std::string s(static_cast<std::size_t>(len), '\0');
    bytes(s.data(), s.size());
    return s;
  }

  template <typename T>
  void payload(std::span<T> values) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    if constexpr (std::endian::native == std::endian::little) {
      bytes(values.data(), values.size() * sizeof(T));
    } else {
      for (T& v : values) {
        if constexpr (sizeof(T) == 4) {
          v = std::bit_cast<T>(u32());
        } else {
          v = std::bit_cast<T>(u64());
        }
      }
    }
  }

  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::string path_;
  std::uint64_t offset_ = 0;
};

/// Dtype tags shared by the checkpoint and dataset formats.
template <typename T>
constexpr std::uint8_t dtype_tag();
template <>
constexpr std::uint8_t dtype_tag<float>() {
  return 0;
}
template <>
constexpr std::uint8_t dtype_tag<double>() {
  return 1;
}

inline const char* dtype_name(std::uint8_t tag) {
  return tag == 0 ? "f32" : tag == 1 ? "f64" : "unknown";
}

}  // namespace stob::detail
