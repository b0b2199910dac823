#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "gdvol/grid/half.hpp"
#include "gdvol/grid/volume.hpp"
#include "gdvol/grid/volume_io.hpp"
#include "generators.hpp"
#include "temp_dir.hpp"

using namespace gdvol;

namespace {

// binary16 value of a code from its bit fields
double reference_decode(std::uint16_t c) {
  const int sign = c >> 15, exp = (c >> 10) & 0x1f, frac = c & 0x3ff;
  double mag;
  if (exp == 0) mag = std::ldexp(frac, -24);
  else if (exp == 31) mag = frac ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  else mag = std::ldexp(1024 + frac, exp - 25);
  return sign ? -mag : mag;
}

// nearest binary16 code by search over all finite non-negative codes, ties to even
std::uint16_t reference_encode(float x) {
  static const std::vector<double> table = [] {
    std::vector<double> t;
    for (std::uint32_t c = 0; c < 0x7c00; ++c) t.push_back(reference_decode(static_cast<std::uint16_t>(c)));
    t.push_back(65536.0);  // stands in for +Inf: the next value past 65504 at the same spacing
    return t;
  }();
  const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
  const double a = std::abs(static_cast<double>(x));
  if (a >= 65536.0) return sign | 0x7c00;
  const auto it = std::lower_bound(table.begin(), table.end(), a);
  std::size_t hi = static_cast<std::size_t>(it - table.begin());
  if (table[hi] == a) return static_cast<std::uint16_t>(sign | hi);
  const std::size_t lo = hi - 1;
  const double dlo = a - table[lo], dhi = table[hi] - a;
  std::size_t pick = dlo < dhi ? lo : dhi < dlo ? hi : (lo % 2 == 0 ? lo : hi);
  return static_cast<std::uint16_t>(sign | pick);
}

void write_raw(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> header(std::uint32_t code, std::uint64_t nx, std::uint64_t ny, std::uint64_t nz,
                                  const char* magic = "VXG1") {
  std::vector<unsigned char> h(32, 0);
  std::memcpy(h.data(), magic, 4);
  for (int i = 0; i < 4; ++i) h[4 + i] = static_cast<unsigned char>(code >> (8 * i));
  const std::uint64_t dims[3] = {nx, ny, nz};
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < 8; ++i) h[8 + 8 * a + i] = static_cast<unsigned char>(dims[a] >> (8 * i));
  return h;
}

}  // namespace

TEST_CASE("grid dims and slice-major addressing") {
  const GridDims d{3, 4, 5};
  CHECK(d.slice_size() == 12);
  CHECK(d.voxel_count() == 60);
  Volume<float> v(d);
  for (std::size_t z = 0; z < 5; ++z)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 3; ++x) v.at(x, y, z) = static_cast<float>(100 * z + 10 * y + x);
  for (std::size_t z = 0; z < 5; ++z)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 3; ++x) CHECK(v.values()[z * 12 + y * 3 + x] == doctest::Approx(100 * z + 10 * y + x));
  CHECK(v.slice(2)[5] == v(2, 1, 2));
  CHECK_THROWS_AS(Volume<float>(GridDims{0, 1, 1}), ParameterError);
  CHECK_THROWS_AS(Volume<float>(d, std::vector<float>(5)), DimensionMismatchError);
}

TEST_CASE("binary16 examples") {
  CHECK(encode_half(0.0f) == 0x0000);
  CHECK(decode_half(0x0000) == 0.0f);
  CHECK(encode_half(1.0f) == 0x3C00);
  CHECK(decode_half(0x3C00) == 1.0f);
  CHECK(encode_half(65504.0f) == 0x7BFF);
  CHECK(decode_half(0x7BFF) == 65504.0f);
  CHECK(decode_half(encode_half(0.1f)) == 0.0999755859375f);
  CHECK(encode_half(1e6f) == 0x7C00);
  CHECK(encode_half(-1e6f) == 0xFC00);
  CHECK(std::isnan(decode_half(encode_half(std::numeric_limits<float>::quiet_NaN()))));
}

TEST_CASE("binary16 decode matches the bit-field definition for every code") {
  for (std::uint32_t c = 0; c < 0x10000; ++c) {
    const auto code = static_cast<std::uint16_t>(c);
    const double ref = reference_decode(code);
    const float got = decode_half(code);
    if (std::isnan(ref)) {
      CHECK(std::isnan(got));
    } else {
      REQUIRE(static_cast<double>(got) == ref);
    }
  }
}

TEST_CASE("binary16 round trip is idempotent over all codes") {
  for (std::uint32_t c = 0; c < 0x10000; ++c) {
    const auto code = static_cast<std::uint16_t>(c);
    const float v = decode_half(code);
    if (std::isnan(v)) continue;
    const std::uint16_t once = encode_half(v);
    REQUIRE(encode_half(decode_half(once)) == once);
    REQUIRE(once == code);  // every non-NaN code is exactly representable
  }
}

TEST_CASE("binary16 encode matches nearest-even search on random floats") {
  gen::for_all(20000, 11, [](gen::Gen& g, std::uint64_t seed) {
    const float x = static_cast<float>((g.coin() ? 1 : -1) * g.log_uniform(1e-9, 1e5));
    CAPTURE(seed);
    CAPTURE(x);
    REQUIRE(encode_half(x) == reference_encode(x));
    if (std::abs(x) >= 6.103515625e-05f && std::abs(x) <= 65504.0f) {
      REQUIRE(std::abs(decode_half(encode_half(x)) - x) <= std::ldexp(std::abs(x), -11));
    }
  });
  // exact halfway points between consecutive codes round to the even code
  for (std::uint16_t c = 0x3C00; c < 0x3C40; ++c) {
    const float mid = static_cast<float>((reference_decode(c) + reference_decode(static_cast<std::uint16_t>(c + 1))) / 2);
    CHECK(encode_half(mid) == (c % 2 == 0 ? c : c + 1));
  }
}

TEST_CASE("uint8 file decodes bytes as values") {
  TempDir dir;
  auto bytes = header(0, 2, 2, 1);
  for (unsigned char b : {0, 64, 128, 255}) bytes.push_back(b);
  write_raw(dir / "u8.vxg", bytes);
  const VoxelVolume v = read_volume(dir / "u8.vxg");
  CHECK(v.dims() == GridDims{2, 2, 1});
  CHECK(std::vector<float>(v.values().begin(), v.values().end()) == std::vector<float>{0, 64, 128, 255});
  CHECK(v.range_hint() == RangeHint::byte256);
}

TEST_CASE("binary16 file storing 0x3C00 reads as 1") {
  TempDir dir;
  auto bytes = header(1, 1, 1, 1);
  bytes.push_back(0x00);
  bytes.push_back(0x3C);
  write_raw(dir / "h.vxg", bytes);
  CHECK(read_volume(dir / "h.vxg")(0, 0, 0) == 1.0f);
}

TEST_CASE("malformed and truncated files") {
  TempDir dir;
  auto bad = header(2, 1, 1, 1, "XXXX");
  bad.resize(36, 0);
  write_raw(dir / "magic.vxg", bad);
  CHECK_THROWS_AS(read_volume(dir / "magic.vxg"), FormatError);

  auto code = header(7, 1, 1, 1);
  code.resize(36, 0);
  write_raw(dir / "code.vxg", code);
  CHECK_THROWS_AS(read_volume(dir / "code.vxg"), FormatError);

  write_raw(dir / "short_header.vxg", std::vector<unsigned char>{'V', 'X', 'G', '1', 2});
  CHECK_THROWS_AS(read_volume(dir / "short_header.vxg"), IoError);

  auto truncated = header(2, 4, 4, 4);
  truncated.resize(32 + 10, 0);
  write_raw(dir / "trunc.vxg", truncated);
  CHECK_THROWS_AS(read_volume(dir / "trunc.vxg"), LengthError);

  CHECK_THROWS_AS(read_volume(dir / "missing.vxg"), IoError);
  CHECK_THROWS_AS(write_volume(VoxelVolume(GridDims{1, 1, 1}), dir / "no" / "such" / "dir.vxg", Precision::binary32),
                  IoError);
}

TEST_CASE("write/read round trips per precision") {
  TempDir dir;
  gen::Gen g(5);
  const GridDims d{5, 3, 4};
  VoxelVolume v = g.volume(d, -300.0, 300.0);
  v.at(0, 0, 0) = 300.2f;
  v.at(1, 0, 0) = 1.0f;
  v.at(2, 0, 0) = 0.1f;
  v.at(3, 0, 0) = 2.5f;
  v.at(4, 0, 0) = -2.5f;

  write_volume(v, dir / "f32.vxg", Precision::binary32);
  const VoxelVolume f32 = read_volume(dir / "f32.vxg");
  CHECK(std::equal(f32.values().begin(), f32.values().end(), v.values().begin()));

  const Volume<double> dv = v.cast<double>();
  write_volume(dv, dir / "f64.vxg", Precision::binary64);
  CHECK(read_header(dir / "f64.vxg").precision == Precision::binary64);
  const VoxelVolume f64 = read_volume(dir / "f64.vxg");
  CHECK(std::equal(f64.values().begin(), f64.values().end(), v.values().begin()));

  write_volume(v, dir / "f16.vxg", Precision::binary16);
  const VoxelVolume f16 = read_volume(dir / "f16.vxg");
  for (std::size_t i = 0; i < v.size(); ++i) REQUIRE(f16.values()[i] == decode_half(reference_encode(v.values()[i])));
  CHECK(f16(1, 0, 0) == 1.0f);
  CHECK(f16(2, 0, 0) == 0.0999755859375f);

  write_volume(v, dir / "u8.vxg", Precision::uint8);
  const VoxelVolume u8 = read_volume(dir / "u8.vxg");
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double c = std::clamp(static_cast<double>(v.values()[i]), 0.0, 255.0);
    REQUIRE(u8.values()[i] == static_cast<float>(std::round(c)));
  }
  CHECK(u8(0, 0, 0) == 255.0f);
  CHECK(u8(3, 0, 0) == 3.0f);  // half away from zero
  CHECK(u8(4, 0, 0) == 0.0f);
}

TEST_CASE("uint8 round trip of byte values is the identity") {
  TempDir dir;
  VoxelVolume v(GridDims{16, 16, 1});
  for (std::size_t i = 0; i < 256; ++i) v.mutable_values()[i] = static_cast<float>(i);
  write_volume(v, dir / "bytes.vxg", Precision::uint8);
  const VoxelVolume back = read_volume(dir / "bytes.vxg");
  CHECK(std::equal(back.values().begin(), back.values().end(), v.values().begin()));
}

TEST_CASE("slice reader and writer address slices by z") {
  TempDir dir;
  const GridDims d{3, 2, 4};
  {
    VolumeFile f = VolumeFile::create(dir / "s.vxg", d, Precision::binary32);
    for (std::size_t z : {3u, 0u, 2u, 1u}) {
      std::vector<float> plane(6, static_cast<float>(z) + 0.5f);
      f.write_slice<float>(z, plane);
    }
    CHECK(f.slices_written() == 4);
  }
  VolumeFile f = VolumeFile::open(dir / "s.vxg");
  std::vector<double> plane(6);
  f.read_slice<double>(2, plane);
  CHECK(plane[0] == 2.5);
  CHECK(f.slices_read() == 1);
  CHECK_THROWS_AS(f.read_slice<double>(4, plane), ParameterError);
  CHECK(std::filesystem::file_size(dir / "s.vxg") == 32 + 4 * 24);
}
