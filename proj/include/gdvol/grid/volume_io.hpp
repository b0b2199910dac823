#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdvol/grid/volume.hpp"

namespace gdvol {

/// Storage precision of a VXG1 payload. The numeric values are the on-disk codes.
enum class Precision : std::uint32_t { uint8 = 0, binary16 = 1, binary32 = 2, binary64 = 3 };

[[nodiscard]] std::size_t bytes_per_value(Precision p);
[[nodiscard]] std::string_view to_string(Precision p);
/// Accepts "u8", "uint8", "f16", "binary16", "f32", "binary32", "f64", "binary64".
[[nodiscard]] Precision parse_precision(std::string_view text);

/// VXG1 layout: "VXG1", u32 precision code, u64 nx, ny, nz (all little-endian),
/// then the slice-major little-endian payload.
inline constexpr std::size_t kVxgHeaderBytes = 32;

struct VolumeHeader {
  Precision precision = Precision::binary32;
  GridDims dims{};
};

/// Converts working-precision values to the stored representation.
/// uint8 clamps to [0,255] and rounds half away from zero; binary16 rounds to nearest even.
template <typename T>
void encode_values(std::span<const T> in, Precision p, std::span<std::byte> out);
template <typename T>
void decode_values(std::span<const std::byte> in, Precision p, std::span<T> out);

[[nodiscard]] VolumeHeader read_header(const std::filesystem::path& path);

/// Reads a whole VXG1 file; values are widened to binary32 whatever the stored precision.
[[nodiscard]] VoxelVolume read_volume(const std::filesystem::path& path);

template <typename T>
void write_volume(const Volume<T>& v, const std::filesystem::path& path, Precision p);

/// Random-access slice reader/writer over one VXG1 file.
///
/// Not thread-safe; the streaming engine confines each file to its I/O worker.
class VolumeFile {
 public:
  /// Creates (or truncates) a file sized for `dims` at precision `p`.
  static VolumeFile create(const std::filesystem::path& path, GridDims dims, Precision p);
  static VolumeFile open(const std::filesystem::path& path, bool writable = false);

  VolumeFile(VolumeFile&&) noexcept = default;
  VolumeFile& operator=(VolumeFile&&) noexcept = default;

  [[nodiscard]] const VolumeHeader& header() const { return header_; }
  [[nodiscard]] const GridDims& dims() const { return header_.dims; }
  [[nodiscard]] Precision precision() const { return header_.precision; }
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

  template <typename T>
  void read_slice(std::size_t z, std::span<T> out);
  template <typename T>
  void write_slice(std::size_t z, std::span<const T> in);
  void flush();

  [[nodiscard]] std::size_t slices_read() const { return slices_read_; }
  [[nodiscard]] std::size_t slices_written() const { return slices_written_; }

 private:
  VolumeFile(std::filesystem::path path, VolumeHeader header, std::fstream stream);
  [[nodiscard]] std::streamoff slice_offset(std::size_t z) const;
  void check_slice(std::size_t z, std::size_t count) const;

  std::filesystem::path path_;
  VolumeHeader header_;
  std::fstream stream_;
  std::vector<std::byte> buffer_;
  std::size_t slices_read_ = 0;
  std::size_t slices_written_ = 0;
};

}  // namespace gdvol
