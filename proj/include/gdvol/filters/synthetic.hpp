#pragma once

#include <cstdint>

#include "gdvol/grid/volume.hpp"

namespace gdvol {

/// Smooth base plus in-slice texture plus a random brightness offset per slice.
struct StripeSpec {
  double base_level = 100.0;
  double base_amplitude = 40.0;    // smooth 3D variation
  double texture_amplitude = 8.0;  // in-slice detail, uncorrelated across slices
  double offset_sigma = 20.0;      // per-slice brightness offsets
  std::uint64_t seed = 1;
};

[[nodiscard]] VoxelVolume striped_volume(GridDims dims, const StripeSpec& spec);

/// Axis-aligned boxes of constant value on a flat background, plus Gaussian noise.
struct BlockSpec {
  double background = 50.0;
  double step = 10.0;          // box level above the background
  double noise_sigma = 0.5;
  std::uint64_t seed = 1;
};

[[nodiscard]] VoxelVolume block_volume(GridDims dims, const BlockSpec& spec);
/// The noise-free version of block_volume.
[[nodiscard]] VoxelVolume block_volume_clean(GridDims dims, const BlockSpec& spec);

/// Mean over consecutive slice pairs of |mean(slice z+1) - mean(slice z)|.
template <typename T>
[[nodiscard]] double mean_jump(const Volume<T>& v);

/// Sum over slices of the squared in-slice 5-point Neumann Laplacian.
template <typename T>
[[nodiscard]] double inslice_laplacian_energy(const Volume<T>& v);

}  // namespace gdvol
