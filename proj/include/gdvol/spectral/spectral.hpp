#pragma once

#include <cstddef>

#include "gdvol/discretization/stencil.hpp"
#include "gdvol/grid/volume.hpp"

namespace gdvol {

/// Phase-1 gain (bx K + by L) / (bx K + by L + bz M) for squared frequencies
/// K = k^2, L = l^2, M = m^2. A vanishing denominator (DC, or no diffusion
/// along the only nonzero frequency) gives 1.
[[nodiscard]] double diffusion_gain_sq(double k2, double l2, double m2, const WeightTensor& beta);
/// Combined gain (alpha D + K + L) / (alpha + K + L), D the diffusion gain.
[[nodiscard]] double filter_coefficient_sq(double k2, double l2, double m2, const WeightTensor& beta, double alpha);

/// The same gains from (real-valued) frequencies, squared internally.
[[nodiscard]] double diffusion_gain(double k, double l, double m, const WeightTensor& beta);
[[nodiscard]] double filter_coefficient(double k, double l, double m, const WeightTensor& beta, double alpha);

enum class SymbolMode {
  discrete,   // 4 sin^2(pi j / n): eigenvalues of the periodic 3-point second difference
  continuous  // (2 pi j / n)^2 with j taken in (-n/2, n/2]
};

/// Squared-frequency symbol of index j on an axis of n samples.
[[nodiscard]] double axis_symbol(std::size_t j, std::size_t n, SymbolMode mode);

struct SpectralParams {
  WeightTensor beta{1.0, 1.0, 0.1};
  double alpha = 0.01;
  SymbolMode mode = SymbolMode::discrete;
};

struct SpectralResult {
  Volume<double> volume;
  double imaginary_residue = 0.0;  // ||Im|| / ||Re|| after the inverse transform
};

/// Both phases on a periodic grid in one multiply by the combined gain.
[[nodiscard]] SpectralResult spectral_pipeline(const Volume<double>& i0, const SpectralParams& p);
/// Phase 1 only (diffusion gain); alpha is ignored.
[[nodiscard]] SpectralResult spectral_diffuse(const Volume<double>& i0, const SpectralParams& p);

}  // namespace gdvol
