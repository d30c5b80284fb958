#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace siavc::io {

// Little-endian binary primitives shared by the tensor file format and
// checkpoints. Encoding is explicit byte-wise so files are portable.

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw std::runtime_error("write failed");
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw std::runtime_error("truncated stream");
  }
}

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  }
  write_bytes(os, buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  read_bytes(is, buf, sizeof(T));
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<U>(buf[i]) << (8 * i);
  }
  return static_cast<T>(u);
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  write_le<std::uint32_t>(os, bits);
}

inline float read_f32(std::istream& is) {
  std::uint32_t bits = read_le<std::uint32_t>(is);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  write_le<std::uint64_t>(os, bits);
}

inline double read_f64(std::istream& is) {
  std::uint64_t bits = read_le<std::uint64_t>(is);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_le<std::uint64_t>(os, s.size());
  write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is) {
  auto n = read_le<std::uint64_t>(is);
  if (n > (1ull << 32)) throw std::runtime_error("corrupt string length");
  std::string s(n, '\0');
  if (n > 0) read_bytes(is, s.data(), n);
  return s;
}

inline void write_f32_array(std::ostream& os, const float* p, std::size_t n) {
  write_le<std::uint64_t>(os, n);
  for (std::size_t i = 0; i < n; ++i) write_f32(os, p[i]);
}

inline std::vector<float> read_f32_array(std::istream& is) {
  auto n = read_le<std::uint64_t>(is);
  if (n > (1ull << 34)) throw std::runtime_error("corrupt array length");
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = read_f32(is);
  return v;
}

inline void write_f64_array(std::ostream& os, const double* p, std::size_t n) {
  write_le<std::uint64_t>(os, n);
  for (std::size_t i = 0; i < n; ++i) write_f64(os, p[i]);
}

inline std::vector<double> read_f64_array(std::istream& is) {
  auto n = read_le<std::uint64_t>(is);
  if (n > (1ull << 34)) throw std::runtime_error("corrupt array length");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = read_f64(is);
  return v;
}

}  // namespace siavc::io
