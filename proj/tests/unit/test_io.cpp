#include <filesystem>

#include "doctest.h"
#include "dcreg/error.hpp"
#include "dcreg/io.hpp"

using namespace dcreg;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / "dcreg_unit_io";
  fs::create_directories(d);
  return d / name;
}
}  // namespace

TEST_SUITE("io") {

TEST_CASE("pgm round trip at 8-bit precision") {
  ImageGrid img(3, 4);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) img.at(r, c) = (r * 4 + c) / 11.0;
  auto p = scratch("a.pgm");
  io::write_pgm(p, img);
  ImageGrid back = io::read_pgm(p);
  REQUIRE(back.rows == 3);
  REQUIRE(back.cols == 4);
  CHECK((back.pixels - img.pixels).cwiseAbs().maxCoeff() <= 0.5 / 255 + 1e-12);
}

TEST_CASE("vector round trip is exact") {
  Vec v(5);
  v << 1.0, -0.0, 1e-300, 3.141592653589793, -7.25;
  auto p = scratch("v.bin");
  io::write_vector(p, v, {5});
  std::vector<std::uint64_t> shape;
  Vec back = io::read_vector(p, &shape);
  CHECK(shape == std::vector<std::uint64_t>{5});
  CHECK(back == v);
}

TEST_CASE("bad magic and truncation are rejected") {
  auto p = scratch("bad.bin");
  io::write_text(p, "NOTAVECTxxxxxxxxxxxxxxxx");
  CHECK_THROWS(io::read_vector(p));
  Vec v = Vec::Ones(4);
  io::write_vector(p, v);
  std::string s = io::read_text(p);
  io::write_text(p, s.substr(0, s.size() - 3));
  CHECK_THROWS(io::read_vector(p));
  CHECK_THROWS_AS(io::read_vector(scratch("missing.bin")), MissingArtifact);
}

TEST_CASE("fnv1a reference values") {
  CHECK(io::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(io::hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("fmt round trips") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-17, 123456789.0, 0.0})
    CHECK(std::stod(io::fmt(x)) == x);
}

}
