#include "dcreg/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dcreg/error.hpp"

namespace dcreg::io {

namespace {
constexpr std::string_view kVecMagic = "DCRGVEC1";
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

std::string_view ByteReader::bytes(std::size_t n) {
  if (remaining() < n) throw Error("binary data truncated");
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint32_t ByteReader::u32() {
  auto b = bytes(4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = bytes(8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  static constexpr char digits[] = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

std::string file_hash(const std::filesystem::path& path) { return hex64(fnv1a(read_text(path))); }

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_pgm(const std::filesystem::path& path, const ImageGrid& img) {
  std::string out = "P5\n" + std::to_string(img.cols) + " " + std::to_string(img.rows) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (double v : img.pixels) {
    double c = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  write_text(path, out);
}

ImageGrid read_pgm(const std::filesystem::path& path) {
  const std::string data = read_text(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  if (token() != "P5") throw Error(path.string() + ": not a binary PGM (P5)");
  int cols = std::stoi(token());
  int rows = std::stoi(token());
  int maxval = std::stoi(token());
  if (cols <= 0 || rows <= 0 || maxval <= 0 || maxval > 255) throw Error(path.string() + ": unsupported PGM header");
  ++pos;  // single whitespace after maxval
  if (data.size() - pos < static_cast<std::size_t>(rows) * cols) throw Error(path.string() + ": truncated PGM");
  ImageGrid img(rows, cols);
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<unsigned char>(data[pos + static_cast<std::size_t>(i)]) / static_cast<double>(maxval);
  }
  return img;
}

void write_vector(const std::filesystem::path& path, const Vec& v, const std::vector<std::uint64_t>& shape) {
  std::vector<std::uint64_t> dims = shape.empty() ? std::vector<std::uint64_t>{static_cast<std::uint64_t>(v.size())} : shape;
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  if (n != static_cast<std::uint64_t>(v.size())) throw ShapeError("write_vector: shape does not match length");
  ByteWriter w;
  w.bytes(kVecMagic);
  w.u64(dims.size());
  for (auto d : dims) w.u64(d);
  for (double x : v) w.f64(x);
  write_text(path, w.str());
}

Vec read_vector(const std::filesystem::path& path, std::vector<std::uint64_t>* shape) {
  const std::string data = read_text(path);
  ByteReader r(data);
  if (r.bytes(8) != kVecMagic) throw Error(path.string() + ": bad vector magic");
  auto rank = r.u64();
  std::vector<std::uint64_t> dims(rank);
  std::uint64_t n = 1;
  for (auto& d : dims) {
    d = r.u64();
    n *= d;
  }
  if (r.remaining() != n * 8) throw Error(path.string() + ": payload size does not match shape");
  Vec v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = r.f64();
  if (shape) *shape = dims;
  return v;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace dcreg::io
