#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace gdvol {

/// Discretization scheme.
///   constant: 7-point Laplacian, (1,1) piecewise-constant transfers.
///   linear:   trilinear finite elements, (1/2,1,1/2) B-spline transfers.
///   hybrid:   constant's finest operator with linear's transfers.
enum class Scheme { constant, linear, hybrid };

[[nodiscard]] std::string_view to_string(Scheme s);
[[nodiscard]] Scheme parse_scheme(std::string_view text);

/// Boundary treatment. Periodic exists only to compare against Fourier-domain results.
enum class Boundary { neumann, periodic };

/// Diagonal gradient weights W = Diag(bx, by, bz).
struct WeightTensor {
  double bx = 1.0;
  double by = 1.0;
  double bz = 1.0;

  [[nodiscard]] double operator[](int axis) const { return axis == 0 ? bx : axis == 1 ? by : bz; }
  /// Throws ParameterError on a negative weight.
  void validate() const;
};

/// 3x3x3 box of coefficients indexed by offset (dx, dy, dz) in {-1,0,1}^3.
struct Stencil3D {
  std::array<double, 27> coeffs{};

  static constexpr int index(int dx, int dy, int dz) { return (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1); }
  [[nodiscard]] double operator()(int dx, int dy, int dz) const { return coeffs[index(dx, dy, dz)]; }
  double& operator()(int dx, int dy, int dz) { return coeffs[index(dx, dy, dz)]; }

  [[nodiscard]] double center() const { return coeffs[13]; }
  [[nodiscard]] double row_sum() const;
  /// Number of offsets (center included) with |coefficient| > tol.
  [[nodiscard]] int support_size(double tol = 1e-14) const;
  [[nodiscard]] bool symmetric(double tol = 1e-12) const;
};

/// One axis of a transfer operator: coarse node I couples fine nodes
/// factor*I + first, ..., factor*I + first + weights.size() - 1.
struct Taps1D {
  int factor = 2;
  int first = 0;
  std::vector<double> weights;

  [[nodiscard]] static Taps1D constant() { return {2, 0, {1.0, 1.0}}; }
  [[nodiscard]] static Taps1D linear() { return {2, -1, {0.5, 1.0, 0.5}}; }
  [[nodiscard]] static Taps1D identity() { return {1, 0, {1.0}}; }
};

/// Tensor-product transfer stencil.
struct TransferStencil {
  std::array<Taps1D, 3> axes;

  [[nodiscard]] static TransferStencil uniform(const Taps1D& t) { return {{t, t, t}}; }
};

/// Prolongation and restriction for a scheme. Restriction is the adjoint of
/// prolongation divided by the per-axis coarsening factor, so restricting a
/// constant interior field returns the same constant (factor 1 for every scheme).
struct TransferPair {
  TransferStencil prolong;
  TransferStencil restriction;
};

[[nodiscard]] TransferPair transfer_stencils(Scheme s);

/// Galerkin product R*A*P of an interior stencil, R = P^T / prod(factor).
/// Throws UnsupportedStencilError when the result does not fit in 3x3x3.
[[nodiscard]] Stencil3D galerkin_coarsen(const Stencil3D& fine, const TransferStencil& prolong);

/// Interior stencil of alpha*S - div(W grad) at multigrid level `level`.
/// Level 0 is the 7-point operator (constant, hybrid) or the trilinear
/// finite-element operator (linear); coarser levels follow the Galerkin chain.
[[nodiscard]] Stencil3D laplacian_stencil(Scheme s, const WeightTensor& w, double alpha, int level);

struct StencilSet {
  Scheme scheme = Scheme::hybrid;
  std::vector<Stencil3D> laplacians;
  TransferPair transfers;
};

[[nodiscard]] StencilSet build_stencil_set(Scheme s, const WeightTensor& w, double alpha, int levels);

}  // namespace gdvol
