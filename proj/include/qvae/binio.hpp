#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "qvae/error.hpp"

namespace qvae::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Append-only little-endian byte buffer.
class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void magic(const char (&m)[5]) { bytes(m, 4); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i64(std::int64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void f64s(const double* p, std::size_t n) { bytes(p, n * 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
  std::vector<std::uint8_t>& buffer() noexcept { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every failure names the byte offset.
class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> data, std::string what = "file")
      : buf_(std::move(data)), what_(std::move(what)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return buf_.size() - pos_; }
  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(what_ + ": " + msg + " at byte offset " + std::to_string(pos_));
  }

  void bytes(void* p, std::size_t n) {
    if (n > remaining()) fail("truncated (" + std::to_string(n) + " bytes expected, " + std::to_string(remaining()) + " left)");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  const std::uint8_t* view(std::size_t n) {
    if (n > remaining()) fail("truncated (" + std::to_string(n) + " bytes expected, " + std::to_string(remaining()) + " left)");
    const std::uint8_t* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  void expect_magic(const char (&m)[5]) {
    char got[4];
    const std::size_t at = pos_;
    bytes(got, 4);
    if (std::memcmp(got, m, 4) != 0) {
      pos_ = at;
      fail(std::string("bad magic, expected \"") + m + "\"");
    }
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  void f64s(double* p, std::size_t n) { bytes(p, n * 8); }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void expect_end() {
    if (remaining() != 0) fail(std::to_string(remaining()) + " trailing bytes");
  }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw ConfigError("short write to " + path);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace qvae::binio
