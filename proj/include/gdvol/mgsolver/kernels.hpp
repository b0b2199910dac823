#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gdvol/discretization/operator.hpp"
#include "gdvol/mgsolver/stencil_table.hpp"

namespace gdvol {

// Plane kernels shared by the in-memory and streaming engines. Every kernel
// sees one z plane plus its two z neighbors (pass the plane itself where a
// Neumann neighbor is missing; its weight is zero). Running the same kernels
// in the same order is what makes both engines produce identical bits.

/// One Gauss-Seidel sweep over plane z.
template <typename T>
void relax_plane(const StencilTable<T>& table, std::size_t z, const T* below, T* x, const T* above, const T* b,
                 RelaxOrder order);

/// r = b - A x on plane z; returns sum of r^2 accumulated in double.
template <typename T>
double residual_plane(const StencilTable<T>& table, std::size_t z, const T* below, const T* x, const T* above,
                      const T* b, T* r);

/// out = A x on plane z.
template <typename T>
void apply_plane(const StencilTable<T>& table, std::size_t z, const T* below, const T* x, const T* above, T* out);

/// sum of (diag(A) x)^2 on plane z; the residual scale used when b = 0.
template <typename T>
double diag_scaled_norm_plane(const StencilTable<T>& table, std::size_t z, const T* x);

/// A fine plane and its z weight in a transfer.
template <typename T>
struct WeightedPlane {
  double weight;
  const T* plane;
};

/// out = (Ry (x) Rx) sum_k w_k fine_k, summed in the given order.
template <typename T>
void restrict_plane(const Transfer1D& tx, const Transfer1D& ty, std::span<const WeightedPlane<T>> fine, T* out,
                    std::vector<T>& scratch);

/// out = (Py (x) Px) coarse, a fine-sized plane.
template <typename T>
void prolong_plane(const Transfer1D& tx, const Transfer1D& ty, const T* coarse, T* out, std::vector<T>& scratch);

/// x += sum_k w_k u_k over `count` values.
template <typename T>
void add_correction(T* x, std::size_t count, std::span<const WeightedPlane<T>> terms);

/// Sum of squares in double.
template <typename T>
double squared_norm(const T* v, std::size_t count);

}  // namespace gdvol
