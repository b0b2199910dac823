#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gdvol/discretization/operator.hpp"

namespace gdvol {

enum class RelaxOrder { lexicographic, multicolor };

/// A LevelOperator compiled for sweeping. Each axis index maps to a row
/// class (indices whose 1D rows agree in every tensor term); the 3x3x3
/// coefficients are stored once per class triple, with the center zeroed so
/// kernels can sum over the full box.
template <typename T>
class StencilTable {
 public:
  struct Axis {
    std::vector<std::uint16_t> cls;
    std::vector<std::uint32_t> prev, next;  // Neumann ends clamp onto themselves with zero weight
    std::size_t classes = 0;
  };

  StencilTable() = default;
  /// Throws SingularOperatorError if any diagonal entry is not positive.
  explicit StencilTable(const LevelOperator& op);

  [[nodiscard]] const GridDims& dims() const { return dims_; }
  [[nodiscard]] const Axis& axis(int a) const { return axes_[a]; }

  /// Off-diagonal coefficients for row classes (0..classes_x-1, cy, cz), 27 apart.
  [[nodiscard]] const T* row_coeffs(std::size_t cy, std::size_t cz) const {
    return coef_.data() + (cz * axes_[1].classes + cy) * axes_[0].classes * 27;
  }
  [[nodiscard]] const T* row_diag(std::size_t cy, std::size_t cz) const {
    return diag_.data() + (cz * axes_[1].classes + cy) * axes_[0].classes;
  }
  [[nodiscard]] const T* row_inv_diag(std::size_t cy, std::size_t cz) const {
    return inv_diag_.data() + (cz * axes_[1].classes + cy) * axes_[0].classes;
  }

  /// True when only face neighbors couple (the 7-point operator).
  [[nodiscard]] bool seven_point() const { return seven_point_; }
  /// 2 when in-plane coupling is 5-point, 4 when diagonal in-plane neighbors couple.
  [[nodiscard]] int inplane_colors() const { return inplane_colors_; }
  /// False when a periodic odd extent lets same-colored rows touch.
  [[nodiscard]] bool rows_independent() const { return rows_independent_; }

 private:
  GridDims dims_{};
  std::array<Axis, 3> axes_;
  std::vector<T> coef_, diag_, inv_diag_;
  bool seven_point_ = true;
  int inplane_colors_ = 2;
  bool rows_independent_ = true;
};

extern template class StencilTable<float>;
extern template class StencilTable<double>;

}  // namespace gdvol
