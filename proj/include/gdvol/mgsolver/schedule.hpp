#pragma once

#include <cstddef>

namespace gdvol {

/// Relaxation work done at window step t (steps run 0 .. nz+k-1): every pass
/// sweeps the k center slices t-1, t-2, ..., t-k. Slice z therefore receives
/// sweep j at step z+j, after sweep j of z-1 and before sweep j of z+1, so a
/// single pass reproduces k front-to-back sweeps over the whole level.
template <typename RelaxSlice>
void blocked_step(std::size_t t, int passes, int k, std::size_t nz, RelaxSlice&& relax_slice) {
  for (int pass = 0; pass < passes; ++pass) {
    for (int j = 1; j <= k; ++j) {
      if (t < static_cast<std::size_t>(j)) break;
      const std::size_t z = t - static_cast<std::size_t>(j);
      if (z < nz) relax_slice(z);
    }
  }
}

/// Number of window steps needed to finish relaxing nz slices with k center slices.
inline std::size_t blocked_steps(std::size_t nz, int k) { return nz + static_cast<std::size_t>(k); }

}  // namespace gdvol
