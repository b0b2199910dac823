#include "gdvol/grid/volume_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>

#include "gdvol/grid/half.hpp"

namespace gdvol {

std::string to_string(const GridDims& dims) {
  return std::to_string(dims.nx) + "x" + std::to_string(dims.ny) + "x" + std::to_string(dims.nz);
}

namespace {

constexpr std::array<char, 4> kMagic{'V', 'X', 'G', '1'};

template <typename U>
void store_le(U value, std::byte* out) {
  auto bits = std::bit_cast<std::array<std::byte, sizeof(U)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  std::memcpy(out, bits.data(), sizeof(U));
}

template <typename U>
U load_le(const std::byte* in) {
  std::array<std::byte, sizeof(U)> bits;
  std::memcpy(bits.data(), in, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<U>(bits);
}

std::array<std::byte, kVxgHeaderBytes> encode_header(const VolumeHeader& h) {
  std::array<std::byte, kVxgHeaderBytes> out{};
  std::memcpy(out.data(), kMagic.data(), 4);
  store_le(static_cast<std::uint32_t>(h.precision), out.data() + 4);
  store_le(static_cast<std::uint64_t>(h.dims.nx), out.data() + 8);
  store_le(static_cast<std::uint64_t>(h.dims.ny), out.data() + 16);
  store_le(static_cast<std::uint64_t>(h.dims.nz), out.data() + 24);
  return out;
}

VolumeHeader decode_header(const std::array<std::byte, kVxgHeaderBytes>& raw, const std::filesystem::path& path) {
  if (std::memcmp(raw.data(), kMagic.data(), 4) != 0) {
    throw FormatError(path.string() + ": missing VXG1 magic");
  }
  const auto code = load_le<std::uint32_t>(raw.data() + 4);
  if (code > 3) throw FormatError(path.string() + ": unknown precision code " + std::to_string(code));
  VolumeHeader h;
  h.precision = static_cast<Precision>(code);
  h.dims.nx = load_le<std::uint64_t>(raw.data() + 8);
  h.dims.ny = load_le<std::uint64_t>(raw.data() + 16);
  h.dims.nz = load_le<std::uint64_t>(raw.data() + 24);
  if (!h.dims.valid()) throw FormatError(path.string() + ": zero extent in header");
  return h;
}

std::uintmax_t payload_bytes(const VolumeHeader& h) {
  return static_cast<std::uintmax_t>(h.dims.voxel_count()) * bytes_per_value(h.precision);
}

std::uint8_t to_byte(double v) {
  if (std::isnan(v)) return 0;
  return static_cast<std::uint8_t>(std::round(std::clamp(v, 0.0, 255.0)));
}

}  // namespace

std::size_t bytes_per_value(Precision p) {
  switch (p) {
    case Precision::uint8: return 1;
    case Precision::binary16: return 2;
    case Precision::binary32: return 4;
    case Precision::binary64: return 8;
  }
  throw ParameterError("unknown precision");
}

std::string_view to_string(Precision p) {
  switch (p) {
    case Precision::uint8: return "uint8";
    case Precision::binary16: return "binary16";
    case Precision::binary32: return "binary32";
    case Precision::binary64: return "binary64";
  }
  return "?";
}

Precision parse_precision(std::string_view text) {
  if (text == "u8" || text == "uint8") return Precision::uint8;
  if (text == "f16" || text == "binary16" || text == "half") return Precision::binary16;
  if (text == "f32" || text == "binary32" || text == "float") return Precision::binary32;
  if (text == "f64" || text == "binary64" || text == "double") return Precision::binary64;
  throw ParameterError("unknown precision '" + std::string(text) + "'");
}

template <typename T>
void encode_values(std::span<const T> in, Precision p, std::span<std::byte> out) {
  const std::size_t width = bytes_per_value(p);
  if (out.size() < in.size() * width) throw LengthError("encode buffer too small");
  std::byte* dst = out.data();
  switch (p) {
    case Precision::uint8:
      for (std::size_t i = 0; i < in.size(); ++i) dst[i] = static_cast<std::byte>(to_byte(static_cast<double>(in[i])));
      break;
    case Precision::binary16:
      for (std::size_t i = 0; i < in.size(); ++i) store_le(encode_half(static_cast<float>(in[i])), dst + 2 * i);
      break;
    case Precision::binary32:
      for (std::size_t i = 0; i < in.size(); ++i) store_le(static_cast<float>(in[i]), dst + 4 * i);
      break;
    case Precision::binary64:
      for (std::size_t i = 0; i < in.size(); ++i) store_le(static_cast<double>(in[i]), dst + 8 * i);
      break;
  }
}

template <typename T>
void decode_values(std::span<const std::byte> in, Precision p, std::span<T> out) {
  const std::size_t width = bytes_per_value(p);
  if (in.size() < out.size() * width) throw LengthError("decode buffer too small");
  const std::byte* src = in.data();
  switch (p) {
    case Precision::uint8:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(std::to_integer<std::uint8_t>(src[i]));
      break;
    case Precision::binary16:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(decode_half(load_le<std::uint16_t>(src + 2 * i)));
      break;
    case Precision::binary32:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(load_le<float>(src + 4 * i));
      break;
    case Precision::binary64:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(load_le<double>(src + 8 * i));
      break;
  }
}

template void encode_values<float>(std::span<const float>, Precision, std::span<std::byte>);
template void encode_values<double>(std::span<const double>, Precision, std::span<std::byte>);
template void decode_values<float>(std::span<const std::byte>, Precision, std::span<float>);
template void decode_values<double>(std::span<const std::byte>, Precision, std::span<double>);

VolumeHeader read_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<std::byte, kVxgHeaderBytes> raw{};
  in.read(reinterpret_cast<char*>(raw.data()), raw.size());
  if (in.gcount() < 4) throw FormatError(path.string() + ": file too short for a VXG1 header");
  if (std::memcmp(raw.data(), kMagic.data(), 4) != 0) throw FormatError(path.string() + ": missing VXG1 magic");
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw FormatError(path.string() + ": truncated header");
  return decode_header(raw, path);
}

VoxelVolume read_volume(const std::filesystem::path& path) {
  VolumeFile file = VolumeFile::open(path);
  const GridDims dims = file.dims();
  VoxelVolume v(dims);
  for (std::size_t z = 0; z < dims.nz; ++z) file.read_slice<float>(z, v.mutable_slice(z));
  v.set_range_hint(file.precision() == Precision::uint8 ? RangeHint::byte256 : RangeHint::raw);
  return v;
}

template <typename T>
void write_volume(const Volume<T>& v, const std::filesystem::path& path, Precision p) {
  VolumeFile file = VolumeFile::create(path, v.dims(), p);
  for (std::size_t z = 0; z < v.dims().nz; ++z) file.write_slice<T>(z, v.slice(z));
  file.flush();
}

template void write_volume<float>(const Volume<float>&, const std::filesystem::path&, Precision);
template void write_volume<double>(const Volume<double>&, const std::filesystem::path&, Precision);

// --- VolumeFile ---------------------------------------------------------------

VolumeFile::VolumeFile(std::filesystem::path path, VolumeHeader header, std::fstream stream)
    : path_(std::move(path)), header_(header), stream_(std::move(stream)) {
  buffer_.resize(header_.dims.slice_size() * bytes_per_value(header_.precision));
}

VolumeFile VolumeFile::create(const std::filesystem::path& path, GridDims dims, Precision p) {
  VolumeHeader header{p, dims};
  if (!dims.valid()) throw ParameterError("cannot create volume with dims " + to_string(dims));
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    const auto raw = encode_header(header);
    out.write(reinterpret_cast<const char*>(raw.data()), raw.size());
    if (!out) throw IoError("failed writing header to " + path.string());
  }
  std::error_code ec;
  std::filesystem::resize_file(path, kVxgHeaderBytes + payload_bytes(header), ec);
  if (ec) throw IoError("cannot size " + path.string() + ": " + ec.message());
  std::fstream stream(path, std::ios::binary | std::ios::in | std::ios::out);
  if (!stream) throw IoError("cannot reopen " + path.string());
  return VolumeFile(path, header, std::move(stream));
}

VolumeFile VolumeFile::open(const std::filesystem::path& path, bool writable) {
  const VolumeHeader header = read_header(path);
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string());
  if (size < kVxgHeaderBytes + payload_bytes(header)) {
    throw LengthError(path.string() + ": payload truncated (" + std::to_string(size - kVxgHeaderBytes) + " of " +
                      std::to_string(payload_bytes(header)) + " bytes)");
  }
  auto mode = std::ios::binary | std::ios::in;
  if (writable) mode |= std::ios::out;
  std::fstream stream(path, mode);
  if (!stream) throw IoError("cannot open " + path.string());
  return VolumeFile(path, header, std::move(stream));
}

std::streamoff VolumeFile::slice_offset(std::size_t z) const {
  return static_cast<std::streamoff>(kVxgHeaderBytes + z * buffer_.size());
}

void VolumeFile::check_slice(std::size_t z, std::size_t count) const {
  if (z >= header_.dims.nz) throw ParameterError(path_.string() + ": slice " + std::to_string(z) + " out of range");
  if (count != header_.dims.slice_size()) throw DimensionMismatchError(path_.string() + ": slice buffer size mismatch");
}

template <typename T>
void VolumeFile::read_slice(std::size_t z, std::span<T> out) {
  check_slice(z, out.size());
  stream_.seekg(slice_offset(z));
  stream_.read(reinterpret_cast<char*>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
  if (!stream_) {
    stream_.clear();
    throw LengthError(path_.string() + ": short read at slice " + std::to_string(z));
  }
  decode_values<T>(buffer_, header_.precision, out);
  ++slices_read_;
}

template <typename T>
void VolumeFile::write_slice(std::size_t z, std::span<const T> in) {
  check_slice(z, in.size());
  encode_values<T>(in, header_.precision, buffer_);
  stream_.seekp(slice_offset(z));
  stream_.write(reinterpret_cast<const char*>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
  if (!stream_) {
    stream_.clear();
    throw IoError(path_.string() + ": write failed at slice " + std::to_string(z));
  }
  ++slices_written_;
}

void VolumeFile::flush() {
  stream_.flush();
  if (!stream_) throw IoError(path_.string() + ": flush failed");
}

template void VolumeFile::read_slice<float>(std::size_t, std::span<float>);
template void VolumeFile::read_slice<double>(std::size_t, std::span<double>);
template void VolumeFile::write_slice<float>(std::size_t, std::span<const float>);
template void VolumeFile::write_slice<double>(std::size_t, std::span<const double>);

}  // namespace gdvol
