#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gdvol/discretization/operator.hpp"
#include "gdvol/discretization/stencil.hpp"
#include "gdvol/grid/volume.hpp"

namespace gdvol {

/// Target gradient on voxel links. Link (x,y,z) along an axis joins the voxel
/// to its +1 neighbor, so the x array holds (nx-1)*ny*nz values, x fastest.
struct LinkField {
  GridDims dims{};
  std::array<std::vector<float>, 3> links;

  LinkField() = default;
  explicit LinkField(GridDims d);

  [[nodiscard]] GridDims link_dims(int axis) const;
  [[nodiscard]] float& at(int axis, std::size_t x, std::size_t y, std::size_t z);
  [[nodiscard]] float at(int axis, std::size_t x, std::size_t y, std::size_t z) const;
};

/// lambda * (1 - exp(-m^2 / (2 sigma^2))).
[[nodiscard]] double npr_gain(double magnitude, double lambda, double sigma);

/// How the gradient target is derived from the value target when no
/// explicit link field is given.
struct GradientRule {
  enum class Kind { zero, masked, npr };
  Kind kind = Kind::zero;
  std::array<bool, 3> mask{true, true, false};  // masked: forward differences on these axes
  double lambda = 1.25;                         // npr gain amplitude
  double sigma = 5.0;                           // npr gain width
};

/// One screened anisotropic Poisson problem (alpha - div W grad) I = alpha I0 - div W G.
struct SystemSpec {
  double alpha = 0.0;
  WeightTensor weights{};
  Boundary boundary = Boundary::neumann;
  std::optional<VoxelVolume> value_target;  // I0
  std::optional<LinkField> gradient;        // explicit G (Neumann only)
  std::optional<VoxelVolume> constraints;   // precomputed b; overrides the two above
  GradientRule rule;
  std::optional<VoxelVolume> initial_guess;
  /// Mean the output is pinned to when the operator is singular (alpha = 0).
  /// Defaults to mean(I0), or 0 without a value target.
  std::optional<double> mean_target;

  [[nodiscard]] bool singular() const { return alpha == 0.0; }
  /// Throws ParameterError/DimensionMismatchError on inconsistent fields.
  void validate(const GridDims& dims) const;
};

/// Supplies value-target planes by z index; called with ascending z within a sweep.
using PlaneFetch = std::function<std::span<const float>(std::size_t z)>;

/// Builds constraint planes b_z = alpha S I0 + sum_a beta_a D_a^T (S (x) S) G_a, where S
/// is the scheme's 1D value weighting (identity, or the mass matrix for linear).
/// Plane z reads value planes z-1 .. z+2.
class ConstraintAssembler {
 public:
  ConstraintAssembler(Scheme scheme, const SystemSpec& spec, GridDims dims);
  /// For callers that supply value planes without holding a value-target volume.
  ConstraintAssembler(Scheme scheme, const SystemSpec& spec, GridDims dims, bool has_values);

  [[nodiscard]] bool needs_values() const { return needs_values_; }
  void assemble(std::size_t z, const PlaneFetch& values, std::span<double> out);

 private:
  void link_plane(int axis, long z, const PlaneFetch& values, std::vector<double>& out);
  void apply_xy(const std::vector<double>& in, std::vector<double>& out, bool dx_adjoint, bool dy_adjoint);
  [[nodiscard]] std::span<const float> value_plane(long z, const PlaneFetch& values) const;
  [[nodiscard]] long wrap(long z) const;

  GridDims dims_;
  double alpha_;
  WeightTensor w_;
  bool periodic_;
  GradientRule rule_;
  const LinkField* explicit_ = nullptr;
  bool has_values_;
  bool needs_values_;
  std::array<Band1D, 3> s_;
  std::vector<double> zeros_, tmp_, tmp2_, link_;
};

/// Whole-volume constraint assembly from in-memory inputs.
template <typename T>
[[nodiscard]] Volume<T> assemble_constraints(Scheme scheme, const SystemSpec& spec, GridDims dims);

}  // namespace gdvol
