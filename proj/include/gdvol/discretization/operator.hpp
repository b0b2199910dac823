#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "gdvol/discretization/stencil.hpp"
#include "gdvol/grid/volume.hpp"

namespace gdvol {

/// Tridiagonal 1D matrix with optional wrap-around. Row i stores the
/// coefficients of columns i-1 (lo), i (di) and i+1 (up); out-of-range
/// neighbors carry zero under Neumann and wrap under periodic boundaries.
/// Entries are additive, so with two periodic nodes lo and up hit the same column.
struct Band1D {
  std::size_t n = 1;
  bool periodic = false;
  std::vector<double> lo, di, up;

  Band1D() = default;
  Band1D(std::size_t size, bool wrap);

  [[nodiscard]] static Band1D identity(std::size_t n, bool periodic);
  /// D^T D for forward differences: rows (-1, 2, -1), Neumann ends (1, -1).
  [[nodiscard]] static Band1D stiffness(std::size_t n, bool periodic);
  /// Piecewise-linear mass matrix: rows (1, 4, 1)/6, Neumann ends (2, 1)/6.
  [[nodiscard]] static Band1D mass(std::size_t n, bool periodic);

  [[nodiscard]] double entry(std::size_t row, std::size_t col) const;
  [[nodiscard]] bool is_diagonal() const;
  [[nodiscard]] std::size_t prev(std::size_t i) const { return i > 0 ? i - 1 : (periodic ? n - 1 : 0); }
  [[nodiscard]] std::size_t next(std::size_t i) const { return i + 1 < n ? i + 1 : (periodic ? 0 : n - 1); }
};

/// 1D inter-level transfer. Prolongation maps coarse to fine; restriction is
/// its transpose divided by scale() (2 when the axis coarsens, 1 otherwise).
class Transfer1D {
 public:
  enum class Kind { identity, constant, linear };

  struct Tap {
    std::uint32_t index;
    double weight;
  };

  Transfer1D() = default;
  /// Coarse size under Neumann is ceil(n/2) for constant transfers and
  /// floor(n/2)+1 for linear ones; periodic axes must be even and halve exactly.
  Transfer1D(Kind kind, std::size_t fine_n, bool periodic);

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] std::size_t fine_size() const { return fine_n_; }
  [[nodiscard]] std::size_t coarse_size() const { return coarse_n_; }
  [[nodiscard]] bool periodic() const { return periodic_; }
  [[nodiscard]] double scale() const { return kind_ == Kind::identity ? 1.0 : 2.0; }

  /// Coarse contributions to fine node f (prolongation row).
  [[nodiscard]] std::span<const Tap> prolong_row(std::size_t f) const {
    return {prolong_taps_.data() + prolong_offsets_[f], prolong_offsets_[f + 1] - prolong_offsets_[f]};
  }
  /// Fine contributions to coarse node c (restriction row, weights already scaled), ascending fine index.
  [[nodiscard]] std::span<const Tap> restrict_row(std::size_t c) const {
    return {restrict_taps_.data() + restrict_offsets_[c], restrict_offsets_[c + 1] - restrict_offsets_[c]};
  }
  /// Largest fine index contributing to coarse node c.
  [[nodiscard]] std::size_t last_fine_of(std::size_t c) const;
  /// Largest coarse index that fine node f contributes to.
  [[nodiscard]] std::size_t last_coarse_of(std::size_t f) const;

 private:
  Kind kind_ = Kind::identity;
  std::size_t fine_n_ = 1;
  std::size_t coarse_n_ = 1;
  bool periodic_ = false;
  std::vector<Tap> prolong_taps_, restrict_taps_;
  std::vector<std::size_t> prolong_offsets_, restrict_offsets_;
};

using Transfer3D = std::array<Transfer1D, 3>;

/// R * A * P along one axis, with R = P^T / scale.
[[nodiscard]] Band1D galerkin_1d(const Band1D& a, const Transfer1D& t);

/// coef * (A_x (x) A_y (x) A_z), acting on slice-major volumes.
struct TensorTerm {
  double coef = 1.0;
  std::array<Band1D, 3> axes;
};

/// Per-level operator alpha*S - div(W grad) in exact tensor-sum form, so
/// Galerkin coarsening is exact on every row including the boundary rows.
class LevelOperator {
 public:
  LevelOperator() = default;
  LevelOperator(GridDims dims, Boundary boundary, std::vector<TensorTerm> terms);

  [[nodiscard]] const GridDims& dims() const { return dims_; }
  [[nodiscard]] Boundary boundary() const { return boundary_; }
  [[nodiscard]] const std::vector<TensorTerm>& terms() const { return terms_; }

  /// Coefficient coupling voxel (x,y,z) to the neighbor at offset (dx,dy,dz).
  [[nodiscard]] double coefficient(std::size_t x, std::size_t y, std::size_t z, int dx, int dy, int dz) const;
  [[nodiscard]] Stencil3D stencil_at(std::size_t x, std::size_t y, std::size_t z) const;
  /// Stencil of the central voxel; equals the interior stencil once every axis has >= 5 nodes.
  [[nodiscard]] Stencil3D interior_stencil() const;

  /// Galerkin-coarsened operator on the coarse grid of `transfers`.
  [[nodiscard]] LevelOperator coarsen(const Transfer3D& transfers) const;

 private:
  GridDims dims_{};
  Boundary boundary_ = Boundary::neumann;
  std::vector<TensorTerm> terms_;
};

/// Finest-level operator: alpha*S - sum_a beta_a K_a (x) S_b (x) S_c, with S the
/// identity (constant, hybrid) or the 1D mass matrix (linear).
[[nodiscard]] LevelOperator fine_operator(Scheme s, const WeightTensor& w, double alpha, GridDims dims, Boundary b);

/// The 1D matrix that weights values (and cross-axis link values) for a scheme.
[[nodiscard]] Band1D value_weights_1d(Scheme s, std::size_t n, Boundary b);

/// Transfers from a fine grid; axes of size 1 use the identity.
[[nodiscard]] Transfer3D level_transfers(Scheme s, GridDims fine, Boundary b);
[[nodiscard]] GridDims coarse_dims(const Transfer3D& t);

}  // namespace gdvol
