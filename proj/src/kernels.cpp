#include "gdvol/mgsolver/kernels.hpp"

#include <omp.h>

namespace gdvol {

namespace {

// Rows of the 3x3 neighborhood: index (dz+1)*3 + (dy+1).
template <typename T>
struct Neighborhood {
  const T* rows[9];
};

template <typename T>
Neighborhood<T> neighborhood(const StencilTable<T>& t, std::size_t y, const T* below, const T* x, const T* above) {
  const auto& ay = t.axis(1);
  const std::size_t nx = t.dims().nx;
  const std::size_t ym = ay.prev[y] * nx, y0 = y * nx, yp = ay.next[y] * nx;
  return {{below + ym, below + y0, below + yp, x + ym, x + y0, x + yp, above + ym, above + y0, above + yp}};
}

template <bool Seven, typename T>
inline T offsum(const T* c, const Neighborhood<T>& n, std::size_t xm, std::size_t x, std::size_t xp) {
  if constexpr (Seven) {
    return c[12] * n.rows[4][xm] + c[14] * n.rows[4][xp] + c[10] * n.rows[3][x] + c[16] * n.rows[5][x] +
           c[4] * n.rows[1][x] + c[22] * n.rows[7][x];
  } else {
    T s = T(0);
    for (int k = 0; k < 9; ++k) {
      const T* r = n.rows[k];
      s += c[3 * k] * r[xm] + c[3 * k + 1] * r[x] + c[3 * k + 2] * r[xp];
    }
    return s;
  }
}

template <bool Seven, typename T>
void relax_row(const StencilTable<T>& t, std::size_t z, std::size_t y, const T* below, T* x, const T* above,
               const T* b, std::size_t x0, std::size_t step) {
  const auto& ax = t.axis(0);
  const std::size_t nx = t.dims().nx;
  const std::size_t cy = t.axis(1).cls[y], cz = t.axis(2).cls[z];
  const T* cb = t.row_coeffs(cy, cz);
  const T* ib = t.row_inv_diag(cy, cz);
  const Neighborhood<T> n = neighborhood(t, y, below, x, above);
  T* xr = x + y * nx;
  const T* br = b + y * nx;
  for (std::size_t i = x0; i < nx; i += step) {
    const std::size_t cls = ax.cls[i];
    const T s = offsum<Seven>(cb + cls * 27, n, ax.prev[i], i, ax.next[i]);
    xr[i] = (br[i] - s) * ib[cls];
  }
}

template <bool Seven, typename T>
void relax_plane_impl(const StencilTable<T>& t, std::size_t z, const T* below, T* x, const T* above, const T* b,
                      RelaxOrder order) {
  const std::size_t ny = t.dims().ny;
  if (order == RelaxOrder::lexicographic) {
    for (std::size_t y = 0; y < ny; ++y) relax_row<Seven>(t, z, y, below, x, above, b, 0, 1);
    return;
  }
  const bool parallel = t.rows_independent() && t.dims().slice_size() >= 4096 && omp_get_max_threads() > 1;
  const long rows = static_cast<long>(ny);
  if (t.inplane_colors() == 2) {
    for (std::size_t color = 0; color < 2; ++color) {
#pragma omp parallel for schedule(static) if (parallel)
      for (long y = 0; y < rows; ++y) relax_row<Seven>(t, z, y, below, x, above, b, (color + y) % 2, 2);
    }
  } else {
    for (std::size_t color = 0; color < 4; ++color) {
#pragma omp parallel for schedule(static) if (parallel)
      for (long y = static_cast<long>(color / 2); y < rows; y += 2) {
        relax_row<Seven>(t, z, y, below, x, above, b, color % 2, 2);
      }
    }
  }
}

template <bool Seven, typename T>
void apply_row(const StencilTable<T>& t, std::size_t z, std::size_t y, const T* below, const T* x, const T* above,
               const T* b, T* out) {
  const auto& ax = t.axis(0);
  const std::size_t nx = t.dims().nx;
  const std::size_t cy = t.axis(1).cls[y], cz = t.axis(2).cls[z];
  const T* cb = t.row_coeffs(cy, cz);
  const T* db = t.row_diag(cy, cz);
  const Neighborhood<T> n = neighborhood(t, y, below, x, above);
  const T* xr = x + y * nx;
  T* orow = out + y * nx;
  for (std::size_t i = 0; i < nx; ++i) {
    const std::size_t cls = ax.cls[i];
    const T ax_i = db[cls] * xr[i] + offsum<Seven>(cb + cls * 27, n, ax.prev[i], i, ax.next[i]);
    orow[i] = b ? b[y * nx + i] - ax_i : ax_i;
  }
}

template <typename T>
void apply_rows(const StencilTable<T>& t, std::size_t z, const T* below, const T* x, const T* above, const T* b,
                T* out) {
  const long rows = static_cast<long>(t.dims().ny);
  const bool parallel = t.dims().slice_size() >= 4096 && omp_get_max_threads() > 1;
  if (t.seven_point()) {
#pragma omp parallel for schedule(static) if (parallel)
    for (long y = 0; y < rows; ++y) apply_row<true>(t, z, y, below, x, above, b, out);
  } else {
#pragma omp parallel for schedule(static) if (parallel)
    for (long y = 0; y < rows; ++y) apply_row<false>(t, z, y, below, x, above, b, out);
  }
}

}  // namespace

template <typename T>
void relax_plane(const StencilTable<T>& table, std::size_t z, const T* below, T* x, const T* above, const T* b,
                 RelaxOrder order) {
  if (table.seven_point()) {
    relax_plane_impl<true>(table, z, below, x, above, b, order);
  } else {
    relax_plane_impl<false>(table, z, below, x, above, b, order);
  }
}

template <typename T>
double residual_plane(const StencilTable<T>& table, std::size_t z, const T* below, const T* x, const T* above,
                      const T* b, T* r) {
  apply_rows(table, z, below, x, above, b, r);
  return squared_norm(r, table.dims().slice_size());
}

template <typename T>
void apply_plane(const StencilTable<T>& table, std::size_t z, const T* below, const T* x, const T* above, T* out) {
  apply_rows<T>(table, z, below, x, above, nullptr, out);
}

template <typename T>
double diag_scaled_norm_plane(const StencilTable<T>& table, std::size_t z, const T* x) {
  const auto& ax = table.axis(0);
  const std::size_t nx = table.dims().nx, ny = table.dims().ny, cz = table.axis(2).cls[z];
  double s = 0.0;
  for (std::size_t y = 0; y < ny; ++y) {
    const T* db = table.row_diag(table.axis(1).cls[y], cz);
    for (std::size_t i = 0; i < nx; ++i) {
      const double v = static_cast<double>(db[ax.cls[i]]) * static_cast<double>(x[y * nx + i]);
      s += v * v;
    }
  }
  return s;
}

template <typename T>
void restrict_plane(const Transfer1D& tx, const Transfer1D& ty, std::span<const WeightedPlane<T>> fine, T* out,
                    std::vector<T>& scratch) {
  const std::size_t nxf = tx.fine_size(), nyf = ty.fine_size();
  const std::size_t nxc = tx.coarse_size(), nyc = ty.coarse_size();
  const std::size_t nf = nxf * nyf;
  scratch.resize(nf + nyf * nxc);
  T* sum = scratch.data();
  T* rows = scratch.data() + nf;

  if (fine.empty()) {
    std::fill(sum, sum + nf, T(0));
  } else {
    const T w0 = static_cast<T>(fine[0].weight);
    for (std::size_t i = 0; i < nf; ++i) sum[i] = w0 * fine[0].plane[i];
    for (std::size_t k = 1; k < fine.size(); ++k) {
      const T w = static_cast<T>(fine[k].weight);
      const T* p = fine[k].plane;
      for (std::size_t i = 0; i < nf; ++i) sum[i] += w * p[i];
    }
  }
  for (std::size_t y = 0; y < nyf; ++y) {
    const T* src = sum + y * nxf;
    T* dst = rows + y * nxc;
    for (std::size_t c = 0; c < nxc; ++c) {
      T acc = T(0);
      for (const auto& tap : tx.restrict_row(c)) acc += static_cast<T>(tap.weight) * src[tap.index];
      dst[c] = acc;
    }
  }
  for (std::size_t cy = 0; cy < nyc; ++cy) {
    T* dst = out + cy * nxc;
    std::fill(dst, dst + nxc, T(0));
    for (const auto& tap : ty.restrict_row(cy)) {
      const T w = static_cast<T>(tap.weight);
      const T* src = rows + tap.index * nxc;
      for (std::size_t c = 0; c < nxc; ++c) dst[c] += w * src[c];
    }
  }
}

template <typename T>
void prolong_plane(const Transfer1D& tx, const Transfer1D& ty, const T* coarse, T* out, std::vector<T>& scratch) {
  const std::size_t nxf = tx.fine_size(), nyf = ty.fine_size();
  const std::size_t nxc = tx.coarse_size(), nyc = ty.coarse_size();
  scratch.resize(nyc * nxf);
  T* rows = scratch.data();
  for (std::size_t cy = 0; cy < nyc; ++cy) {
    const T* src = coarse + cy * nxc;
    T* dst = rows + cy * nxf;
    for (std::size_t x = 0; x < nxf; ++x) {
      T acc = T(0);
      for (const auto& tap : tx.prolong_row(x)) acc += static_cast<T>(tap.weight) * src[tap.index];
      dst[x] = acc;
    }
  }
  for (std::size_t y = 0; y < nyf; ++y) {
    T* dst = out + y * nxf;
    std::fill(dst, dst + nxf, T(0));
    for (const auto& tap : ty.prolong_row(y)) {
      const T w = static_cast<T>(tap.weight);
      const T* src = rows + tap.index * nxf;
      for (std::size_t x = 0; x < nxf; ++x) dst[x] += w * src[x];
    }
  }
}

template <typename T>
void add_correction(T* x, std::size_t count, std::span<const WeightedPlane<T>> terms) {
  if (terms.empty()) return;
  const T w0 = static_cast<T>(terms[0].weight);
  if (terms.size() == 1) {
    for (std::size_t i = 0; i < count; ++i) x[i] += w0 * terms[0].plane[i];
    return;
  }
  const T w1 = static_cast<T>(terms[1].weight);
  for (std::size_t i = 0; i < count; ++i) {
    T c = w0 * terms[0].plane[i];
    c += w1 * terms[1].plane[i];
    for (std::size_t k = 2; k < terms.size(); ++k) c += static_cast<T>(terms[k].weight) * terms[k].plane[i];
    x[i] += c;
  }
}

template <typename T>
double squared_norm(const T* v, std::size_t count) {
  double s = 0.0;
  for (std::size_t i = 0; i < count; ++i) s += static_cast<double>(v[i]) * static_cast<double>(v[i]);
  return s;
}

#define GDVOL_INSTANTIATE_KERNELS(T)                                                                               \
  template void relax_plane<T>(const StencilTable<T>&, std::size_t, const T*, T*, const T*, const T*, RelaxOrder); \
  template double residual_plane<T>(const StencilTable<T>&, std::size_t, const T*, const T*, const T*, const T*,   \
                                    T*);                                                                           \
  template double diag_scaled_norm_plane<T>(const StencilTable<T>&, std::size_t, const T*);                        \
  template void apply_plane<T>(const StencilTable<T>&, std::size_t, const T*, const T*, const T*, T*);             \
  template void restrict_plane<T>(const Transfer1D&, const Transfer1D&, std::span<const WeightedPlane<T>>, T*,     \
                                  std::vector<T>&);                                                                \
  template void prolong_plane<T>(const Transfer1D&, const Transfer1D&, const T*, T*, std::vector<T>&);             \
  template void add_correction<T>(T*, std::size_t, std::span<const WeightedPlane<T>>);                             \
  template double squared_norm<T>(const T*, std::size_t);

GDVOL_INSTANTIATE_KERNELS(float)
GDVOL_INSTANTIATE_KERNELS(double)

#undef GDVOL_INSTANTIATE_KERNELS

}  // namespace gdvol
