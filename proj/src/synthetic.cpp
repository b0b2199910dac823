#include "gdvol/filters/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace gdvol {

VoxelVolume striped_volume(GridDims dims, const StripeSpec& spec) {
  VoxelVolume v(dims);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  std::vector<double> offsets(dims.nz);
  for (double& o : offsets) o = spec.offset_sigma * normal(rng);
  const double pi = std::numbers::pi;
  for (std::size_t z = 0; z < dims.nz; ++z) {
    const double fz = std::cos(pi * (z + 0.5) / dims.nz);
    for (std::size_t y = 0; y < dims.ny; ++y) {
      const double fy = std::sin(pi * (y + 0.5) / dims.ny);
      for (std::size_t x = 0; x < dims.nx; ++x) {
        const double fx = std::sin(2.0 * pi * (x + 0.5) / dims.nx);
        const double value = spec.base_level + spec.base_amplitude * fx * fy * fz +
                             spec.texture_amplitude * normal(rng) + offsets[z];
        v.at(x, y, z) = static_cast<float>(value);
      }
    }
  }
  return v;
}

namespace {

bool inside_block(GridDims d, std::size_t x, std::size_t y, std::size_t z) {
  auto in = [](std::size_t i, std::size_t n) { return n < 4 || (i >= n / 4 && i < n - n / 4); };
  return in(x, d.nx) && in(y, d.ny) && in(z, d.nz);
}

}  // namespace

VoxelVolume block_volume_clean(GridDims dims, const BlockSpec& spec) {
  VoxelVolume v(dims);
  for (std::size_t z = 0; z < dims.nz; ++z)
    for (std::size_t y = 0; y < dims.ny; ++y)
      for (std::size_t x = 0; x < dims.nx; ++x) {
        v.at(x, y, z) = static_cast<float>(spec.background + (inside_block(dims, x, y, z) ? spec.step : 0.0));
      }
  return v;
}

VoxelVolume block_volume(GridDims dims, const BlockSpec& spec) {
  VoxelVolume v = block_volume_clean(dims, spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, spec.noise_sigma);
  for (float& f : v.mutable_values()) f = static_cast<float>(f + normal(rng));
  return v;
}

template <typename T>
double mean_jump(const Volume<T>& v) {
  const GridDims d = v.dims();
  if (d.nz < 2) return 0.0;
  std::vector<double> means(d.nz, 0.0);
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (T x : v.slice(z)) means[z] += static_cast<double>(x);
    means[z] /= static_cast<double>(d.slice_size());
  }
  double sum = 0.0;
  for (std::size_t z = 0; z + 1 < d.nz; ++z) sum += std::abs(means[z + 1] - means[z]);
  return sum / static_cast<double>(d.nz - 1);
}

template <typename T>
double inslice_laplacian_energy(const Volume<T>& v) {
  const GridDims d = v.dims();
  double energy = 0.0;
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double c = v(x, y, z);
        double lap = 0.0;
        if (x > 0) lap += v(x - 1, y, z) - c;
        if (x + 1 < d.nx) lap += v(x + 1, y, z) - c;
        if (y > 0) lap += v(x, y - 1, z) - c;
        if (y + 1 < d.ny) lap += v(x, y + 1, z) - c;
        energy += lap * lap;
      }
  return energy;
}

template double mean_jump<float>(const Volume<float>&);
template double mean_jump<double>(const Volume<double>&);
template double inslice_laplacian_energy<float>(const Volume<float>&);
template double inslice_laplacian_energy<double>(const Volume<double>&);

}  // namespace gdvol
