#include "gdvol/discretization/operator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gdvol/errors.hpp"

namespace gdvol {

// --- Band1D -------------------------------------------------------------------

Band1D::Band1D(std::size_t size, bool wrap) : n(size), periodic(wrap), lo(size, 0.0), di(size, 0.0), up(size, 0.0) {
  if (size == 0) throw ParameterError("1D operator needs at least one node");
}

namespace {

// A single periodic node couples only to itself.
void fold_single_node(Band1D& b) {
  if (b.n == 1) {
    b.di[0] += b.lo[0] + b.up[0];
    b.lo[0] = b.up[0] = 0.0;
  }
}

Band1D three_point(std::size_t n, bool periodic, double off, double center, double end_center) {
  Band1D b(n, periodic);
  for (std::size_t i = 0; i < n; ++i) {
    const bool first = i == 0, last = i + 1 == n;
    b.lo[i] = (periodic || !first) ? off : 0.0;
    b.up[i] = (periodic || !last) ? off : 0.0;
    b.di[i] = center;
    if (!periodic && (first || last)) b.di[i] = (first && last) ? 2.0 * end_center - center : end_center;
  }
  fold_single_node(b);
  return b;
}

}  // namespace

Band1D Band1D::identity(std::size_t n, bool periodic) {
  Band1D b(n, periodic);
  std::fill(b.di.begin(), b.di.end(), 1.0);
  return b;
}

Band1D Band1D::stiffness(std::size_t n, bool periodic) { return three_point(n, periodic, -1.0, 2.0, 1.0); }

Band1D Band1D::mass(std::size_t n, bool periodic) {
  // a lone Neumann node has no element; it is weighted by 1 like a 2D problem
  if (n == 1) return identity(1, periodic);
  return three_point(n, periodic, 1.0 / 6.0, 4.0 / 6.0, 2.0 / 6.0);
}

double Band1D::entry(std::size_t row, std::size_t col) const {
  double v = row == col ? di[row] : 0.0;
  if (periodic) {
    if (col == (row + n - 1) % n) v += lo[row];
    if (col == (row + 1) % n) v += up[row];
  } else {
    if (row > 0 && col == row - 1) v += lo[row];
    if (col == row + 1) v += up[row];
  }
  return v;
}

bool Band1D::is_diagonal() const {
  for (std::size_t i = 0; i < n; ++i) {
    if (lo[i] != 0.0 || up[i] != 0.0) return false;
  }
  return true;
}

// --- Transfer1D ---------------------------------------------------------------

Transfer1D::Transfer1D(Kind kind, std::size_t fine_n, bool periodic)
    : kind_(kind), fine_n_(fine_n), periodic_(periodic) {
  if (fine_n == 0) throw ParameterError("transfer over an empty axis");
  if (kind == Kind::identity) {
    coarse_n_ = fine_n;
  } else if (periodic) {
    if (fine_n % 2 != 0) {
      throw ConfigError("periodic axis of odd length " + std::to_string(fine_n) + " cannot be coarsened");
    }
    coarse_n_ = fine_n / 2;
  } else if (kind == Kind::linear) {
    // vertex-centered: coarse node c sits on fine node 2c, and the last one
    // reaches the far end so constants are reproduced on every fine node
    coarse_n_ = fine_n <= 2 ? 1 : fine_n / 2 + 1;
  } else {
    coarse_n_ = (fine_n + 1) / 2;
  }

  std::vector<std::vector<Tap>> prolong(fine_n);
  auto add = [&](std::size_t f, long c, double w) {
    if (periodic_) {
      const long nc = static_cast<long>(coarse_n_);
      c = ((c % nc) + nc) % nc;
    } else if (c < 0 || c >= static_cast<long>(coarse_n_)) {
      return;  // truncated at the boundary, not renormalized
    }
    for (Tap& t : prolong[f]) {
      if (t.index == static_cast<std::uint32_t>(c)) {
        t.weight += w;
        return;
      }
    }
    prolong[f].push_back({static_cast<std::uint32_t>(c), w});
  };
  for (std::size_t f = 0; f < fine_n; ++f) {
    const long fl = static_cast<long>(f);
    switch (kind) {
      case Kind::identity: add(f, fl, 1.0); break;
      case Kind::constant: add(f, fl / 2, 1.0); break;
      case Kind::linear:
        if (fine_n == 2 && !periodic_) {
          add(f, 0, 1.0);  // a lone coarse node must still carry constants
        } else if (f % 2 == 0) {
          add(f, fl / 2, 1.0);
        } else {
          add(f, (fl - 1) / 2, 0.5);
          add(f, (fl + 1) / 2, 0.5);
        }
        break;
    }
  }

  std::vector<std::vector<Tap>> restriction(coarse_n_);
  const double inv_scale = 1.0 / scale();
  for (std::size_t f = 0; f < fine_n; ++f) {
    for (const Tap& t : prolong[f]) restriction[t.index].push_back({static_cast<std::uint32_t>(f), t.weight * inv_scale});
  }

  prolong_offsets_.push_back(0);
  for (auto& row : prolong) {
    std::sort(row.begin(), row.end(), [](const Tap& a, const Tap& b) { return a.index < b.index; });
    prolong_taps_.insert(prolong_taps_.end(), row.begin(), row.end());
    prolong_offsets_.push_back(prolong_taps_.size());
  }
  restrict_offsets_.push_back(0);
  for (auto& row : restriction) {
    restrict_taps_.insert(restrict_taps_.end(), row.begin(), row.end());
    restrict_offsets_.push_back(restrict_taps_.size());
  }
}

std::size_t Transfer1D::last_fine_of(std::size_t c) const {
  std::size_t last = 0;
  for (const Tap& t : restrict_row(c)) last = std::max<std::size_t>(last, t.index);
  return last;
}

std::size_t Transfer1D::last_coarse_of(std::size_t f) const {
  std::size_t last = 0;
  for (const Tap& t : prolong_row(f)) last = std::max<std::size_t>(last, t.index);
  return last;
}

Band1D galerkin_1d(const Band1D& a, const Transfer1D& t) {
  if (a.n != t.fine_size()) throw DimensionMismatchError("galerkin_1d: operator and transfer sizes differ");
  const std::size_t nf = a.n;
  const std::size_t nc = t.coarse_size();
  const double inv_scale = 1.0 / t.scale();

  // Accumulate sum_{f,g} P(f,I) A(f,g) P(g,J) / scale, keyed by (I, J).
  std::vector<std::map<std::size_t, double>> rows(nc);
  auto accumulate = [&](std::size_t f, std::size_t g, double afg) {
    if (afg == 0.0) return;
    for (const auto& pi : t.prolong_row(f))
      for (const auto& pj : t.prolong_row(g)) rows[pi.index][pj.index] += pi.weight * afg * pj.weight * inv_scale;
  };
  for (std::size_t f = 0; f < nf; ++f) {
    accumulate(f, f, a.di[f]);
    if (a.periodic || f > 0) accumulate(f, (f + nf - 1) % nf, a.lo[f]);
    if (a.periodic || f + 1 < nf) accumulate(f, (f + 1) % nf, a.up[f]);
  }

  Band1D out(nc, a.periodic);
  for (std::size_t i = 0; i < nc; ++i) {
    for (const auto& [j, v] : rows[i]) {
      if (j == i) {
        out.di[i] += v;
        continue;
      }
      long d = static_cast<long>(j) - static_cast<long>(i);
      if (a.periodic && nc > 2) {
        if (d == static_cast<long>(nc) - 1) d = -1;
        if (d == -(static_cast<long>(nc) - 1)) d = 1;
      }
      if (d == -1) {
        out.lo[i] += v;
      } else if (d == 1) {
        out.up[i] += v;
      } else if (std::abs(v) > 1e-14) {
        throw UnsupportedStencilError("1D Galerkin product is not tridiagonal");
      }
    }
  }
  return out;
}

// --- LevelOperator ------------------------------------------------------------

LevelOperator::LevelOperator(GridDims dims, Boundary boundary, std::vector<TensorTerm> terms)
    : dims_(dims), boundary_(boundary), terms_(std::move(terms)) {
  for (const TensorTerm& t : terms_) {
    for (int a = 0; a < 3; ++a) {
      if (t.axes[a].n != dims_[a]) throw DimensionMismatchError("tensor term does not match grid dims");
    }
  }
}

namespace {

double band_at(const Band1D& b, std::size_t i, int d) { return d < 0 ? b.lo[i] : d == 0 ? b.di[i] : b.up[i]; }

}  // namespace

double LevelOperator::coefficient(std::size_t x, std::size_t y, std::size_t z, int dx, int dy, int dz) const {
  double v = 0.0;
  for (const TensorTerm& t : terms_) {
    v += t.coef * band_at(t.axes[0], x, dx) * band_at(t.axes[1], y, dy) * band_at(t.axes[2], z, dz);
  }
  return v;
}

Stencil3D LevelOperator::stencil_at(std::size_t x, std::size_t y, std::size_t z) const {
  Stencil3D s;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) s(dx, dy, dz) = coefficient(x, y, z, dx, dy, dz);
  return s;
}

Stencil3D LevelOperator::interior_stencil() const { return stencil_at(dims_.nx / 2, dims_.ny / 2, dims_.nz / 2); }

LevelOperator LevelOperator::coarsen(const Transfer3D& transfers) const {
  std::vector<TensorTerm> coarse;
  coarse.reserve(terms_.size());
  for (const TensorTerm& t : terms_) {
    TensorTerm c;
    c.coef = t.coef;
    for (int a = 0; a < 3; ++a) c.axes[a] = galerkin_1d(t.axes[a], transfers[a]);
    coarse.push_back(std::move(c));
  }
  return LevelOperator(coarse_dims(transfers), boundary_, std::move(coarse));
}

Band1D value_weights_1d(Scheme s, std::size_t n, Boundary b) {
  const bool periodic = b == Boundary::periodic;
  return s == Scheme::linear ? Band1D::mass(n, periodic) : Band1D::identity(n, periodic);
}

LevelOperator fine_operator(Scheme s, const WeightTensor& w, double alpha, GridDims dims, Boundary b) {
  w.validate();
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ParameterError("screening weight alpha must be non-negative");
  if (!dims.valid()) throw ParameterError("invalid grid dims " + to_string(dims));
  const bool periodic = b == Boundary::periodic;
  std::array<Band1D, 3> values;
  for (int a = 0; a < 3; ++a) values[a] = value_weights_1d(s, dims[a], b);

  std::vector<TensorTerm> terms;
  if (alpha != 0.0) terms.push_back({alpha, values});
  for (int a = 0; a < 3; ++a) {
    if (w[a] == 0.0 || dims[a] == 1) continue;
    TensorTerm t{w[a], values};
    t.axes[a] = Band1D::stiffness(dims[a], periodic);
    terms.push_back(std::move(t));
  }
  return LevelOperator(dims, b, std::move(terms));
}

Transfer3D level_transfers(Scheme s, GridDims fine, Boundary b) {
  const auto kind = s == Scheme::constant ? Transfer1D::Kind::constant : Transfer1D::Kind::linear;
  Transfer3D t;
  for (int a = 0; a < 3; ++a) {
    t[a] = Transfer1D(fine[a] == 1 ? Transfer1D::Kind::identity : kind, fine[a], b == Boundary::periodic);
  }
  return t;
}

GridDims coarse_dims(const Transfer3D& t) { return {t[0].coarse_size(), t[1].coarse_size(), t[2].coarse_size()}; }

}  // namespace gdvol
