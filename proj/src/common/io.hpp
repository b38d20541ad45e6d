#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "common/error.hpp"

namespace fare::io {

inline std::ofstream open_out(const std::string& path, bool binary = true) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(Errc::io, "cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path, bool binary = true) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(Errc::io, "cannot open '" + path + "' for reading");
  return in;
}

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

/// Writes values as little-endian IEEE-754 binary32.
inline void write_f32(std::ostream& out, const float* values, std::size_t n) {
  std::vector<std::uint32_t> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = to_le(std::bit_cast<std::uint32_t>(values[i]));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * 4));
}

inline void read_f32(std::istream& in, float* values, std::size_t n, const std::string& what) {
  std::vector<std::uint32_t> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
  if (static_cast<std::size_t>(in.gcount()) != n * 4) throw Error(Errc::format, what + ": truncated data");
  for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<float>(to_le(buf[i]));
}

/// Reads "key value..." manifest lines up to a line that is exactly "end".
/// The first line must equal `magic`.
inline std::vector<std::vector<std::string>> read_manifest(std::istream& in, const std::string& magic,
                                                           const std::string& what) {
  std::string line;
  if (!std::getline(in, line) || line != magic) throw Error(Errc::format, what + ": bad magic, expected " + magic);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line == "end") return rows;
    std::istringstream ss(line);
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(f);
    if (!fields.empty()) rows.push_back(std::move(fields));
  }
  throw Error(Errc::format, what + ": manifest not terminated");
}

inline unsigned long long parse_uint(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
    auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::format, what + ": expected unsigned integer, got '" + s + "'");
  }
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::format, what + ": expected number, got '" + s + "'");
  }
}

}  // namespace fare::io
