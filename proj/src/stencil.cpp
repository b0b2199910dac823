#include "gdvol/discretization/stencil.hpp"

#include <cmath>
#include <string>

#include "gdvol/errors.hpp"

namespace gdvol {

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::constant: return "constant";
    case Scheme::linear: return "linear";
    case Scheme::hybrid: return "hybrid";
  }
  return "?";
}

Scheme parse_scheme(std::string_view text) {
  if (text == "constant") return Scheme::constant;
  if (text == "linear") return Scheme::linear;
  if (text == "hybrid") return Scheme::hybrid;
  throw ParameterError("unknown scheme '" + std::string(text) + "' (expected constant, linear or hybrid)");
}

void WeightTensor::validate() const {
  for (int a = 0; a < 3; ++a) {
    const double b = (*this)[a];
    if (!(b >= 0.0) || !std::isfinite(b)) {
      throw ParameterError("gradient weights must be finite and non-negative");
    }
  }
}

double Stencil3D::row_sum() const {
  double s = 0.0;
  for (double c : coeffs) s += c;
  return s;
}

int Stencil3D::support_size(double tol) const {
  int n = 0;
  for (double c : coeffs) n += std::abs(c) > tol ? 1 : 0;
  return n;
}

bool Stencil3D::symmetric(double tol) const {
  for (int i = 0; i < 27; ++i) {
    if (std::abs(coeffs[i] - coeffs[26 - i]) > tol) return false;
  }
  return true;
}

TransferPair transfer_stencils(Scheme s) {
  const Taps1D p = s == Scheme::constant ? Taps1D::constant() : Taps1D::linear();
  Taps1D r = p;
  for (double& w : r.weights) w /= r.factor;
  return {TransferStencil::uniform(p), TransferStencil::uniform(r)};
}

Stencil3D galerkin_coarsen(const Stencil3D& fine, const TransferStencil& prolong) {
  // coarse(J) = prod(1/factor) * sum_{a,c} p(a) p(c) fine(factor*J + c - a), per axis
  auto offsets = [](const Taps1D& t) {
    std::vector<std::pair<int, double>> out;
    for (std::size_t i = 0; i < t.weights.size(); ++i) out.emplace_back(t.first + static_cast<int>(i), t.weights[i]);
    return out;
  };
  const auto px = offsets(prolong.axes[0]);
  const auto py = offsets(prolong.axes[1]);
  const auto pz = offsets(prolong.axes[2]);
  const double scale =
      1.0 / (prolong.axes[0].factor * prolong.axes[1].factor * prolong.axes[2].factor);

  auto fine_at = [&](int dx, int dy, int dz) {
    if (std::abs(dx) > 1 || std::abs(dy) > 1 || std::abs(dz) > 1) return 0.0;
    return fine(dx, dy, dz);
  };
  auto coarse_at = [&](int jx, int jy, int jz) {
    double sum = 0.0;
    for (auto [az, wz_a] : pz)
      for (auto [cz, wz_c] : pz)
        for (auto [ay, wy_a] : py)
          for (auto [cy, wy_c] : py)
            for (auto [ax, wx_a] : px)
              for (auto [cx, wx_c] : px) {
                const double f = fine_at(prolong.axes[0].factor * jx + cx - ax,
                                         prolong.axes[1].factor * jy + cy - ay,
                                         prolong.axes[2].factor * jz + cz - az);
                if (f != 0.0) sum += wx_a * wx_c * wy_a * wy_c * wz_a * wz_c * f;
              }
    return sum * scale;
  };

  Stencil3D out;
  for (int jz = -2; jz <= 2; ++jz)
    for (int jy = -2; jy <= 2; ++jy)
      for (int jx = -2; jx <= 2; ++jx) {
        const double v = coarse_at(jx, jy, jz);
        const bool inside = std::abs(jx) <= 1 && std::abs(jy) <= 1 && std::abs(jz) <= 1;
        if (inside) {
          out(jx, jy, jz) = v;
        } else if (std::abs(v) > 1e-14) {
          throw UnsupportedStencilError("Galerkin product does not fit in a 3x3x3 stencil");
        }
      }
  return out;
}

namespace {

Stencil3D finest_stencil(Scheme s, const WeightTensor& w, double alpha) {
  Stencil3D st;
  if (s == Scheme::linear) {
    // alpha*M(x)M(x)M + sum_a beta_a K_a (x) M_b (x) M_c with interior rows
    // M = (1,4,1)/6 and K = (-1,2,-1).
    const std::array<double, 3> m{1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0};
    const std::array<double, 3> k{-1.0, 2.0, -1.0};
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const double mx = m[dx + 1], my = m[dy + 1], mz = m[dz + 1];
          st(dx, dy, dz) = alpha * mx * my * mz + w.bx * k[dx + 1] * my * mz + w.by * mx * k[dy + 1] * mz +
                           w.bz * mx * my * k[dz + 1];
        }
    return st;
  }
  st(0, 0, 0) = alpha + 2.0 * (w.bx + w.by + w.bz);
  st(-1, 0, 0) = st(1, 0, 0) = -w.bx;
  st(0, -1, 0) = st(0, 1, 0) = -w.by;
  st(0, 0, -1) = st(0, 0, 1) = -w.bz;
  return st;
}

void check_parameters(const WeightTensor& w, double alpha) {
  w.validate();
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ParameterError("screening weight alpha must be non-negative");
}

}  // namespace

Stencil3D laplacian_stencil(Scheme s, const WeightTensor& w, double alpha, int level) {
  check_parameters(w, alpha);
  if (level < 0) throw ParameterError("stencil level must be >= 0");
  Stencil3D st = finest_stencil(s, w, alpha);
  const TransferStencil p = transfer_stencils(s).prolong;
  for (int l = 0; l < level; ++l) st = galerkin_coarsen(st, p);
  return st;
}

StencilSet build_stencil_set(Scheme s, const WeightTensor& w, double alpha, int levels) {
  check_parameters(w, alpha);
  if (levels < 1) throw ParameterError("a stencil set needs at least one level");
  StencilSet set;
  set.scheme = s;
  set.transfers = transfer_stencils(s);
  set.laplacians.push_back(finest_stencil(s, w, alpha));
  for (int l = 1; l < levels; ++l) set.laplacians.push_back(galerkin_coarsen(set.laplacians.back(), set.transfers.prolong));
  return set;
}

}  // namespace gdvol
