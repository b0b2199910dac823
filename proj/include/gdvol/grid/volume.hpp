#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gdvol/errors.hpp"

namespace gdvol {

/// Voxel counts per axis. A slice is one z index holding nx*ny voxels.
struct GridDims {
  std::size_t nx = 1;
  std::size_t ny = 1;
  std::size_t nz = 1;

  [[nodiscard]] std::size_t slice_size() const { return nx * ny; }
  [[nodiscard]] std::size_t voxel_count() const { return nx * ny * nz; }
  [[nodiscard]] std::size_t operator[](int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  [[nodiscard]] std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (z * ny + y) * nx + x;
  }
  [[nodiscard]] bool valid() const { return nx >= 1 && ny >= 1 && nz >= 1; }

  friend bool operator==(const GridDims&, const GridDims&) = default;
};

std::string to_string(const GridDims& dims);

/// Nominal value range of a volume.
enum class RangeHint : std::uint8_t { unit, byte256, raw };

/// Dense slice-major scalar grid (x fastest, then y, then z).
///
/// Values are only changed through the explicitly mutable accessors.
template <typename T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;

  explicit Volume(GridDims dims, T fill = T(0), RangeHint hint = RangeHint::raw)
      : dims_(dims), values_(checked_count(dims), fill), hint_(hint) {}

  Volume(GridDims dims, std::vector<T> values, RangeHint hint = RangeHint::raw)
      : dims_(dims), values_(std::move(values)), hint_(hint) {
    if (values_.size() != checked_count(dims)) {
      throw DimensionMismatchError("volume payload has " + std::to_string(values_.size()) +
                                   " values, dims " + to_string(dims) + " need " +
                                   std::to_string(dims.voxel_count()));
    }
  }

  [[nodiscard]] const GridDims& dims() const { return dims_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] RangeHint range_hint() const { return hint_; }
  void set_range_hint(RangeHint hint) { hint_ = hint; }

  [[nodiscard]] std::span<const T> values() const { return values_; }
  [[nodiscard]] std::span<T> mutable_values() { return values_; }
  [[nodiscard]] const T* data() const { return values_.data(); }
  [[nodiscard]] T* mutable_data() { return values_.data(); }

  [[nodiscard]] T operator()(std::size_t x, std::size_t y, std::size_t z) const {
    return values_[dims_.index(x, y, z)];
  }
  [[nodiscard]] T& at(std::size_t x, std::size_t y, std::size_t z) { return values_[dims_.index(x, y, z)]; }

  [[nodiscard]] std::span<const T> slice(std::size_t z) const {
    return std::span<const T>(values_).subspan(z * dims_.slice_size(), dims_.slice_size());
  }
  [[nodiscard]] std::span<T> mutable_slice(std::size_t z) {
    return std::span<T>(values_).subspan(z * dims_.slice_size(), dims_.slice_size());
  }

  void fill(T value) { std::fill(values_.begin(), values_.end(), value); }

  template <typename U>
  [[nodiscard]] Volume<U> cast() const {
    std::vector<U> out(values_.size());
    std::transform(values_.begin(), values_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Volume<U>(dims_, std::move(out), hint_);
  }

 private:
  static std::size_t checked_count(const GridDims& dims) {
    if (!dims.valid()) throw ParameterError("grid dimensions must all be >= 1, got " + to_string(dims));
    return dims.voxel_count();
  }

  GridDims dims_{};
  std::vector<T> values_;
  RangeHint hint_ = RangeHint::raw;
};

using VoxelVolume = Volume<float>;

/// Arithmetic mean accumulated in double.
template <typename T>
[[nodiscard]] double mean(const Volume<T>& v) {
  double sum = 0.0;
  for (T x : v.values()) sum += static_cast<double>(x);
  return v.size() ? sum / static_cast<double>(v.size()) : 0.0;
}

/// ||a - b||_2 / ||b||_2 (returns ||a||_2 when b is zero).
template <typename T, typename U>
[[nodiscard]] double relative_l2(const Volume<T>& a, const Volume<U>& b) {
  if (a.dims() != b.dims()) throw DimensionMismatchError("relative_l2: dims differ");
  double num = 0.0, den = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    num += d * d;
    den += static_cast<double>(bv[i]) * static_cast<double>(bv[i]);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace gdvol
