#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gdvol/discretization/operator.hpp"
#include "gdvol/grid/volume.hpp"
#include "gdvol/mgsolver/stencil_table.hpp"
#include "gdvol/mgsolver/system.hpp"

namespace gdvol {

enum class WorkPrecision { binary32, binary64 };

struct SolverParams {
  Scheme scheme = Scheme::hybrid;
  int v_cycles = 2;
  int relax_passes = 3;
  int gs_iters = 3;  // sweeps per pass (k)
  std::size_t coarsest_max_voxels = 4096;
  WorkPrecision precision = WorkPrecision::binary32;
  RelaxOrder order = RelaxOrder::multicolor;
  int threads = 0;  // 0 keeps the OpenMP default

  void validate() const;
};

/// Per-cycle residual ratios ||b - Ax|| / ||b|| at the finest level.
struct ConvergenceReport {
  double initial_ratio = 1.0;  // before the first cycle
  std::vector<double> ratios;
  std::vector<double> seconds;
  std::string initial_guess = "zero";
  std::string engine = "memory";

  /// Average reduction per cycle over the whole run, (r_N / r_0)^(1/N).
  [[nodiscard]] double decay_rate() const;
  /// Geometric mean of the per-cycle quotients r_i / r_{i-1} for cycles first..N (1-based).
  [[nodiscard]] double tail_rate(std::size_t first) const;
  /// Columns cycle_index,residual_ratio,seconds.
  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
};

template <typename T>
struct LevelState {
  GridDims dims{};
  LevelOperator op;
  StencilTable<T> table;
  Transfer3D to_coarse{};  // unused on the coarsest level
  Volume<T> solution;
  Volume<T> constraints;
  Volume<T> residual;  // scratch

  [[nodiscard]] Stencil3D stencil() const { return op.interior_stencil(); }
  [[nodiscard]] const T* below(const Volume<T>& v, std::size_t z) const {
    return v.data() + table.axis(2).prev[z] * dims.slice_size();
  }
  [[nodiscard]] const T* above(const Volume<T>& v, std::size_t z) const {
    return v.data() + table.axis(2).next[z] * dims.slice_size();
  }
};

/// Direct solver for the coarsest level: banded Cholesky of the assembled
/// matrix in binary64. A singular operator (A*1 = 0) has its constant
/// nullspace deflated: the right-hand side is projected to mean zero, one
/// unknown is grounded, and the returned solution has mean zero.
class CoarseSolver {
 public:
  CoarseSolver() = default;
  explicit CoarseSolver(const LevelOperator& op);

  [[nodiscard]] bool deflated() const { return deflated_; }
  [[nodiscard]] std::size_t size() const { return n_; }

  template <typename T>
  void solve(std::span<const T> b, std::span<T> x) const;

 private:
  std::size_t n_ = 0;
  std::size_t kd_ = 0;
  bool deflated_ = false;
  std::vector<double> band_;  // lower band, column-major, leading dimension kd+1
};

template <typename T>
struct Hierarchy {
  std::vector<LevelState<T>> levels;
  CoarseSolver coarse;
  SolverParams params;
};

/// One level of a hierarchy before any storage is attached.
struct LevelPlan {
  LevelOperator op;
  Transfer3D to_coarse{};  // unused on the coarsest level
  bool coarsest = false;
};

/// Galerkin chain from the finest operator down to the direct-solve level.
[[nodiscard]] std::vector<LevelPlan> plan_levels(const LevelOperator& fine, Scheme s, std::size_t coarsest_max_voxels);

/// Grid sizes of the hierarchy: halve (ceil) until at most `coarsest_max_voxels`.
[[nodiscard]] std::vector<GridDims> hierarchy_dims(GridDims fine, Scheme s, Boundary b,
                                                   std::size_t coarsest_max_voxels);

template <typename T>
[[nodiscard]] Hierarchy<T> build_hierarchy(const LevelOperator& fine, const SolverParams& params);
template <typename T>
[[nodiscard]] Hierarchy<T> build_hierarchy(const SystemSpec& spec, GridDims dims, const SolverParams& params);

/// `sweeps` full front-to-back Gauss-Seidel sweeps.
template <typename T>
void relax(LevelState<T>& level, int sweeps, RelaxOrder order);
/// passes x k sweeps following the streaming window schedule.
template <typename T>
void relax_blocked(LevelState<T>& level, int passes, int k, RelaxOrder order);

template <typename T>
[[nodiscard]] Volume<T> residual(const LevelState<T>& level);

/// ||b - Ax|| / ||b|| for a level; falls back to ||diag(A) x|| as the scale when b = 0.
template <typename T>
[[nodiscard]] double residual_ratio(const LevelState<T>& level);

template <typename T>
void solve_coarsest(Hierarchy<T>& h);

/// One V-cycle; returns the finest-level residual ratio afterwards.
template <typename T>
double v_cycle(Hierarchy<T>& h);

struct SolveResult {
  Volume<double> solution;
  ConvergenceReport report;
};

/// v_cycles V-cycles from the supplied initial guess (or zero). A singular
/// system's output is shifted to the pinned mean.
[[nodiscard]] SolveResult solve(const SystemSpec& spec, GridDims dims, const SolverParams& params);

/// Pinned output mean for a singular system.
[[nodiscard]] double pinned_mean(const SystemSpec& spec);

/// Sum of values accumulated per plane in double, planes in increasing z.
template <typename T>
[[nodiscard]] double plane_sum(const T* v, std::size_t count);

/// Applies the thread-count setting (0 leaves the default).
void apply_thread_setting(int threads);

}  // namespace gdvol
