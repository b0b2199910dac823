#include "gdvol/mgsolver/stencil_table.hpp"

#include <cmath>
#include <map>

#include "gdvol/errors.hpp"

namespace gdvol {

namespace {

template <typename Axis>
std::vector<std::size_t> classify_axis(const LevelOperator& op, int a, Axis& out) {
  const std::size_t n = op.dims()[a];
  const bool periodic = op.boundary() == Boundary::periodic;
  std::map<std::vector<double>, std::uint16_t> ids;
  std::vector<std::size_t> representative;
  out.cls.resize(n);
  out.prev.resize(n);
  out.next.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sig;
    for (const TensorTerm& t : op.terms()) {
      sig.push_back(t.axes[a].lo[i]);
      sig.push_back(t.axes[a].di[i]);
      sig.push_back(t.axes[a].up[i]);
    }
    auto [it, inserted] = ids.emplace(std::move(sig), static_cast<std::uint16_t>(ids.size()));
    if (inserted) representative.push_back(i);
    out.cls[i] = it->second;
    out.prev[i] = static_cast<std::uint32_t>(i > 0 ? i - 1 : (periodic ? n - 1 : 0));
    out.next[i] = static_cast<std::uint32_t>(i + 1 < n ? i + 1 : (periodic ? 0 : n - 1));
  }
  out.classes = representative.size();
  return representative;
}

}  // namespace

template <typename T>
StencilTable<T>::StencilTable(const LevelOperator& op) : dims_(op.dims()) {
  std::array<std::vector<std::size_t>, 3> rep;
  for (int a = 0; a < 3; ++a) rep[a] = classify_axis(op, a, axes_[a]);
  const std::size_t ncx = axes_[0].classes, ncy = axes_[1].classes, ncz = axes_[2].classes;
  coef_.assign(ncx * ncy * ncz * 27, T(0));
  diag_.assign(ncx * ncy * ncz, T(0));
  inv_diag_.assign(ncx * ncy * ncz, T(0));

  for (std::size_t cz = 0; cz < ncz; ++cz)
    for (std::size_t cy = 0; cy < ncy; ++cy)
      for (std::size_t cx = 0; cx < ncx; ++cx) {
        const Stencil3D s = op.stencil_at(rep[0][cx], rep[1][cy], rep[2][cz]);
        const std::size_t row = (cz * ncy + cy) * ncx + cx;
        T* c = coef_.data() + row * 27;
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              if (dx == 0 && dy == 0 && dz == 0) continue;
              const double v = s(dx, dy, dz);
              c[Stencil3D::index(dx, dy, dz)] = static_cast<T>(v);
              if (v == 0.0) continue;
              const int faces = (dx != 0) + (dy != 0) + (dz != 0);
              if (faces > 1) seven_point_ = false;
              if (dz == 0 && dx != 0 && dy != 0) inplane_colors_ = 4;
            }
        const double d = s.center();
        if (!(d > 0.0)) {
          throw SingularOperatorError("operator diagonal is not positive (alpha = 0 with all gradient weights zero?)");
        }
        diag_[row] = static_cast<T>(d);
        inv_diag_[row] = static_cast<T>(1.0 / d);
      }

  if (op.boundary() == Boundary::periodic && ((dims_.nx > 1 && dims_.nx % 2) || (dims_.ny > 1 && dims_.ny % 2))) {
    rows_independent_ = false;
  }
}

template class StencilTable<float>;
template class StencilTable<double>;

}  // namespace gdvol
