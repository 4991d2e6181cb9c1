#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dcreg/types.hpp"

namespace dcreg::io {

/// Binary 8-bit PGM (P5). Pixels are clamped to [0, 1] and scaled to 0..255.
void write_pgm(const std::filesystem::path& path, const ImageGrid& img);
/// Reads P5 with maxval <= 255; values are divided by maxval.
ImageGrid read_pgm(const std::filesystem::path& path);

/// Raw vector file: magic "DCRGVEC1", u64 rank, u64 dims, little-endian f64 data.
void write_vector(const std::filesystem::path& path, const Vec& v, const std::vector<std::uint64_t>& shape = {});
Vec read_vector(const std::filesystem::path& path, std::vector<std::uint64_t>* shape = nullptr);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t h);
std::string file_hash(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

/// Little-endian byte buffer used by the binary formats.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(std::string_view b) { buf_.append(b); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string_view bytes(std::size_t n);
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

/// Shortest round-trip decimal form of a double; used in every CSV so files are reproducible bit for bit.
std::string fmt(double v);

}  // namespace dcreg::io
