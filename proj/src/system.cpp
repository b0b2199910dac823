#include "gdvol/mgsolver/system.hpp"

#include <cmath>

#include "gdvol/errors.hpp"

namespace gdvol {

// --- LinkField ----------------------------------------------------------------

LinkField::LinkField(GridDims d) : dims(d) {
  for (int a = 0; a < 3; ++a) links[a].assign(link_dims(a).voxel_count(), 0.0f);
}

GridDims LinkField::link_dims(int axis) const {
  GridDims d = dims;
  if (axis == 0) d.nx = dims.nx - 1;
  if (axis == 1) d.ny = dims.ny - 1;
  if (axis == 2) d.nz = dims.nz - 1;
  return d;
}

float& LinkField::at(int axis, std::size_t x, std::size_t y, std::size_t z) {
  return links[axis][link_dims(axis).index(x, y, z)];
}

float LinkField::at(int axis, std::size_t x, std::size_t y, std::size_t z) const {
  return links[axis][link_dims(axis).index(x, y, z)];
}

double npr_gain(double magnitude, double lambda, double sigma) {
  return lambda * (1.0 - std::exp(-(magnitude * magnitude) / (2.0 * sigma * sigma)));
}

// --- SystemSpec ---------------------------------------------------------------

void SystemSpec::validate(const GridDims& dims) const {
  weights.validate();
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ParameterError("screening weight alpha must be non-negative");
  auto check = [&](const std::optional<VoxelVolume>& v, const char* what) {
    if (v && v->dims() != dims) {
      throw DimensionMismatchError(std::string(what) + " has dims " + to_string(v->dims()) + ", expected " +
                                   to_string(dims));
    }
  };
  check(value_target, "value target");
  check(constraints, "constraint volume");
  check(initial_guess, "initial guess");
  if (gradient) {
    if (gradient->dims != dims) throw DimensionMismatchError("gradient field dims differ from the grid");
    if (boundary == Boundary::periodic) throw ConfigError("explicit link fields are Neumann-only");
  }
  if (!constraints && !gradient && rule.kind != GradientRule::Kind::zero && !value_target) {
    throw ParameterError("a derived gradient target needs a value target");
  }
  if (rule.kind == GradientRule::Kind::npr && !(rule.sigma > 0.0)) throw ParameterError("NPR sigma must be > 0");
}

// --- ConstraintAssembler ------------------------------------------------------

ConstraintAssembler::ConstraintAssembler(Scheme scheme, const SystemSpec& spec, GridDims dims)
    : ConstraintAssembler(scheme, spec, dims, spec.value_target.has_value()) {}

ConstraintAssembler::ConstraintAssembler(Scheme scheme, const SystemSpec& spec, GridDims dims, bool has_values)
    : dims_(dims),
      alpha_(spec.alpha),
      w_(spec.weights),
      periodic_(spec.boundary == Boundary::periodic),
      rule_(spec.rule),
      explicit_(spec.gradient ? &*spec.gradient : nullptr),
      has_values_(has_values) {
  needs_values_ = has_values_ && (alpha_ != 0.0 || (!explicit_ && rule_.kind != GradientRule::Kind::zero));
  for (int a = 0; a < 3; ++a) s_[a] = value_weights_1d(scheme, dims[a], spec.boundary);
  zeros_.assign(dims.slice_size(), 0.0);
}

long ConstraintAssembler::wrap(long z) const {
  const long nz = static_cast<long>(dims_.nz);
  if (periodic_) return ((z % nz) + nz) % nz;
  return (z < 0 || z >= nz) ? -1 : z;
}

std::span<const float> ConstraintAssembler::value_plane(long z, const PlaneFetch& values) const {
  return values(static_cast<std::size_t>(z));
}

void ConstraintAssembler::link_plane(int axis, long z, const PlaneFetch& values, std::vector<double>& out) {
  const std::size_t nx = dims_.nx, ny = dims_.ny, n = dims_.slice_size();
  out.assign(n, 0.0);
  const long zz = wrap(z);
  if (zz < 0 || dims_[axis] == 1) return;
  const auto zi = static_cast<std::size_t>(zz);

  if (explicit_) {
    if (axis == 2 && zi + 1 >= dims_.nz) return;
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        if ((axis == 0 && x + 1 >= nx) || (axis == 1 && y + 1 >= ny)) continue;
        out[y * nx + x] = explicit_->at(axis, x, y, zi);
      }
    return;
  }
  if (rule_.kind == GradientRule::Kind::zero || !has_values_) return;
  if (rule_.kind == GradientRule::Kind::masked && !rule_.mask[axis]) return;

  // forward differences at plane zi; missing links are zero
  const auto here = value_plane(zz, values);
  const long znext = wrap(zz + 1);
  const std::span<const float> ahead = znext >= 0 ? value_plane(znext, values) : std::span<const float>{};
  auto diff = [&](int a, std::size_t x, std::size_t y) -> double {
    const std::size_t i = y * nx + x;
    if (dims_[a] == 1) return 0.0;
    if (a == 0) {
      if (x + 1 < nx) return double(here[i + 1]) - double(here[i]);
      return periodic_ ? double(here[y * nx]) - double(here[i]) : 0.0;
    }
    if (a == 1) {
      if (y + 1 < ny) return double(here[i + nx]) - double(here[i]);
      return periodic_ ? double(here[x]) - double(here[i]) : 0.0;
    }
    return ahead.empty() ? 0.0 : double(ahead[i]) - double(here[i]);
  };

  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x) {
      const double d = diff(axis, x, y);
      if (rule_.kind == GradientRule::Kind::masked) {
        out[y * nx + x] = d;
      } else {
        const double gx = diff(0, x, y), gy = diff(1, x, y), gz = diff(2, x, y);
        out[y * nx + x] = npr_gain(std::sqrt(gx * gx + gy * gy + gz * gz), rule_.lambda, rule_.sigma) * d;
      }
    }
}

void ConstraintAssembler::apply_xy(const std::vector<double>& in, std::vector<double>& out, bool dx_adjoint,
                                   bool dy_adjoint) {
  const std::size_t nx = dims_.nx, ny = dims_.ny;
  tmp2_.resize(in.size());
  out.resize(in.size());
  const Band1D& sx = s_[0];
  const Band1D& sy = s_[1];
  for (std::size_t y = 0; y < ny; ++y) {
    const double* r = in.data() + y * nx;
    double* o = tmp2_.data() + y * nx;
    for (std::size_t x = 0; x < nx; ++x) {
      if (dx_adjoint) {
        // (D^T g)_x = g_{x-1} - g_x
        const double left = x > 0 ? r[x - 1] : (periodic_ ? r[nx - 1] : 0.0);
        o[x] = nx > 1 ? left - r[x] : 0.0;
      } else {
        o[x] = sx.lo[x] * r[sx.prev(x)] + sx.di[x] * r[x] + sx.up[x] * r[sx.next(x)];
      }
    }
  }
  for (std::size_t y = 0; y < ny; ++y) {
    double* o = out.data() + y * nx;
    const double* c = tmp2_.data() + y * nx;
    if (dy_adjoint) {
      const double* below = y > 0 ? tmp2_.data() + (y - 1) * nx : (periodic_ ? tmp2_.data() + (ny - 1) * nx : nullptr);
      for (std::size_t x = 0; x < nx; ++x) o[x] = ny > 1 ? (below ? below[x] : 0.0) - c[x] : 0.0;
    } else {
      const double* m = tmp2_.data() + sy.prev(y) * nx;
      const double* p = tmp2_.data() + sy.next(y) * nx;
      for (std::size_t x = 0; x < nx; ++x) o[x] = sy.lo[y] * m[x] + sy.di[y] * c[x] + sy.up[y] * p[x];
    }
  }
}

void ConstraintAssembler::assemble(std::size_t z, const PlaneFetch& values, std::span<double> out) {
  const std::size_t n = dims_.slice_size();
  if (out.size() != n) throw DimensionMismatchError("constraint plane buffer size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  const Band1D& sz = s_[2];
  const long zl = static_cast<long>(z);

  auto accumulate = [&](double scale) {
    for (std::size_t i = 0; i < n; ++i) out[i] += scale * tmp_[i];
  };
  // z neighbors weighted by the z value-weighting row
  auto for_z_neighbors = [&](auto&& fn) {
    const std::array<double, 3> wz{sz.lo[z], sz.di[z], sz.up[z]};
    for (int dz = -1; dz <= 1; ++dz) {
      if (wz[dz + 1] == 0.0) continue;
      const long zz = wrap(zl + dz);
      if (zz < 0) continue;
      fn(zz, wz[dz + 1]);
    }
  };

  if (alpha_ != 0.0 && has_values_) {
    for_z_neighbors([&](long zz, double wz) {
      const auto plane = value_plane(zz, values);
      link_.assign(plane.begin(), plane.end());
      apply_xy(link_, tmp_, false, false);
      accumulate(alpha_ * wz);
    });
  }
  for (int a = 0; a < 2; ++a) {
    if (w_[a] == 0.0 || dims_[a] == 1) continue;
    for_z_neighbors([&](long zz, double wz) {
      link_plane(a, zz, values, link_);
      apply_xy(link_, tmp_, a == 0, a == 1);
      accumulate(w_[a] * wz);
    });
  }
  if (w_.bz != 0.0 && dims_.nz > 1) {
    std::vector<double> below;
    link_plane(2, zl - 1, values, below);
    link_plane(2, zl, values, link_);
    for (std::size_t i = 0; i < n; ++i) link_[i] = below[i] - link_[i];
    apply_xy(link_, tmp_, false, false);
    accumulate(w_.bz);
  }
}

template <typename T>
Volume<T> assemble_constraints(Scheme scheme, const SystemSpec& spec, GridDims dims) {
  spec.validate(dims);
  if (spec.constraints) return spec.constraints->cast<T>();
  Volume<T> b(dims);
  ConstraintAssembler assembler(scheme, spec, dims);
  const PlaneFetch fetch = [&](std::size_t z) { return spec.value_target->slice(z); };
  std::vector<double> plane(dims.slice_size());
  for (std::size_t z = 0; z < dims.nz; ++z) {
    assembler.assemble(z, fetch, plane);
    auto dst = b.mutable_slice(z);
    for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = static_cast<T>(plane[i]);
  }
  return b;
}

template Volume<float> assemble_constraints<float>(Scheme, const SystemSpec&, GridDims);
template Volume<double> assemble_constraints<double>(Scheme, const SystemSpec&, GridDims);

}  // namespace gdvol
