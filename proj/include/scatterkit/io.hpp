#pragma once

#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "scatterkit/common.hpp"
#include "scatterkit/tensor.hpp"

namespace sk {

// ---------------------------------------------------------------------------
// SKB1 binary container.
//
// Layout: 16-byte header ("SKB1", version, dtype, rank, zero padding),
// rank little-endian u32 dims, then row-major little-endian f32 payload,
// interleaved re/im for complex. Round-trips must be bit-exact.
// ---------------------------------------------------------------------------

enum class SkbType : std::uint8_t { Real32 = 0, Complex32 = 1 };

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t x) {
  out.push_back(static_cast<char>(x & 0xff));
  out.push_back(static_cast<char>((x >> 8) & 0xff));
  out.push_back(static_cast<char>((x >> 16) & 0xff));
  out.push_back(static_cast<char>((x >> 24) & 0xff));
}

inline void put_f32le(std::string& out, float f) {
  put_u32le(out, std::bit_cast<std::uint32_t>(f));
}

inline std::uint32_t get_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline float get_f32le(const unsigned char* p) {
  return std::bit_cast<float>(get_u32le(p));
}

}  // namespace detail

struct SkbBlob {
  SkbType type = SkbType::Real32;
  Shape shape;
  std::vector<float> real;                 // set when type == Real32
  std::vector<std::complex<float>> cplx;   // set when type == Complex32
};

inline std::string skb_encode(const SkbBlob& b) {
  require(!b.shape.empty() && b.shape.size() <= 8, "skb: rank must be 1..8");
  std::size_t n = shape_numel(b.shape);
  std::string out;
  out.reserve(16 + 4 * b.shape.size() + 4 * n * (b.type == SkbType::Complex32 ? 2 : 1));
  out += "SKB1";
  out.push_back(1);  // version
  out.push_back(static_cast<char>(b.type));
  out.push_back(static_cast<char>(b.shape.size()));
  out.append(9, '\0');
  for (auto d : b.shape) detail::put_u32le(out, static_cast<std::uint32_t>(d));
  if (b.type == SkbType::Real32) {
    require(b.real.size() == n, "skb: payload size mismatch");
    for (float f : b.real) detail::put_f32le(out, f);
  } else {
    require(b.cplx.size() == n, "skb: payload size mismatch");
    for (auto c : b.cplx) {
      detail::put_f32le(out, c.real());
      detail::put_f32le(out, c.imag());
    }
  }
  return out;
}

inline SkbBlob skb_decode(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, "SKB1") != 0) fail_io("skb: bad magic");
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (p[4] != 1) fail_io("skb: unsupported version");
  SkbBlob b;
  b.type = static_cast<SkbType>(p[5]);
  std::size_t rank = p[6];
  if (rank < 1 || rank > 8) fail_io("skb: bad rank");
  std::size_t off = 16;
  if (bytes.size() < off + 4 * rank) fail_io("skb: truncated dims");
  b.shape.resize(rank);
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    b.shape[i] = detail::get_u32le(p + off);
    off += 4;
    n *= b.shape[i];
  }
  std::size_t scal = (b.type == SkbType::Complex32) ? 2 : 1;
  if (bytes.size() != off + 4 * n * scal) fail_io("skb: payload size mismatch");
  if (b.type == SkbType::Real32) {
    b.real.resize(n);
    for (std::size_t i = 0; i < n; ++i) b.real[i] = detail::get_f32le(p + off + 4 * i);
  } else {
    b.cplx.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      b.cplx[i] = {detail::get_f32le(p + off + 8 * i), detail::get_f32le(p + off + 8 * i + 4)};
  }
  return b;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail_io("cannot write: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail_io("short write: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_io("cannot read: " + path);
  std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return s;
}

inline void skb_write(const std::string& path, const SkbBlob& b) { write_file(path, skb_encode(b)); }
inline SkbBlob skb_read(const std::string& path) { return skb_decode(read_file(path)); }

// Tensor adapters (f64 tensors narrow to f32 on disk).
template <class T>
inline SkbBlob to_skb(const Tensor<T>& t) {
  SkbBlob b;
  b.type = SkbType::Real32;
  b.shape = t.shape;
  b.real.resize(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) b.real[i] = static_cast<float>(t.v[i]);
  return b;
}

inline SkbBlob to_skb(const CMat& t) {
  SkbBlob b;
  b.type = SkbType::Complex32;
  b.shape = t.shape;
  b.cplx.resize(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i)
    b.cplx[i] = {static_cast<float>(t.v[i].real()), static_cast<float>(t.v[i].imag())};
  return b;
}

template <class T>
inline Tensor<T> skb_to_tensor(const SkbBlob& b) {
  if (b.type != SkbType::Real32) fail_io("skb: expected real payload");
  Tensor<T> t(b.shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t.v[i] = static_cast<T>(b.real[i]);
  return t;
}

inline CMat skb_to_cmat(const SkbBlob& b) {
  if (b.type != SkbType::Complex32) fail_io("skb: expected complex payload");
  CMat t(b.shape);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.v[i] = {double(b.cplx[i].real()), double(b.cplx[i].imag())};
  return t;
}

// ---------------------------------------------------------------------------
// CSV helper with fixed numeric formatting so artifacts hash stably.
// ---------------------------------------------------------------------------

class CsvWriter {
 public:
  explicit CsvWriter(std::string header) { buf_ = std::move(header); buf_ += '\n'; }

  void field(const std::string& s) { sep(); buf_ += s; }
  void field(std::int64_t x) { sep(); buf_ += std::to_string(x); }
  void field(double x) {
    sep();
    char tmp[40];
    std::snprintf(tmp, sizeof tmp, "%.9g", x);
    buf_ += tmp;
  }
  void endrow() { buf_ += '\n'; first_ = true; }

  const std::string& str() const { return buf_; }
  void save(const std::string& path) const { write_file(path, buf_); }

 private:
  void sep() {
    if (!first_) buf_ += ',';
    first_ = false;
  }
  std::string buf_;
  bool first_ = true;
};

inline std::string format_g17(double x) {
  char tmp[40];
  std::snprintf(tmp, sizeof tmp, "%.17g", x);
  return tmp;
}

}  // namespace sk
