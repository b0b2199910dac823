#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "gdvol/discretization/stencil.hpp"
#include "gdvol/grid/volume.hpp"
#include "gdvol/grid/volume_io.hpp"
#include "gdvol/mgsolver/multigrid.hpp"
#include "gdvol/mgsolver/system.hpp"

namespace gdvol {

/// Slices a streamed level holds at its peak.
///
/// Constraints: one prefetched slice, k center slices, the back slice and the
/// residual ring a coarse slice is restricted from (2 planes for constant
/// transfers, 3 for linear). Solution: the prefetched slice, the front slice,
/// k center slices, the back slice, the slice waiting for write-back and the
/// upsampled coarse planes feeding the correction (1 or 2). A prefetch depth
/// d > 1 holds d-1 more slices in each pool.
struct WindowBudget {
  std::size_t constraint_slices = 0;
  std::size_t solution_slices = 0;
  std::size_t total = 0;
};

[[nodiscard]] WindowBudget window_budget(int k, Scheme s, int prefetch_depth = 1);

struct StreamConfig {
  std::filesystem::path temp_dir;            // empty: the system temp directory
  Precision scratch = Precision::binary16;   // intermediate solution and coarse constraint slices
  int prefetch_depth = 1;
  bool overlap_io = true;                    // background I/O thread
  bool keep_scratch = false;
  std::size_t window_capacity = 0;           // slices per level; 0 uses the budget

  void validate() const;
};

/// Per-level scratch files under a private directory, with a plain-text
/// manifest. The directory is removed on destruction once `complete()` has
/// been called, unless the store was asked to keep it.
class ScratchStore {
 public:
  ScratchStore(const std::filesystem::path& parent, bool keep);
  ~ScratchStore();
  ScratchStore(const ScratchStore&) = delete;
  ScratchStore& operator=(const ScratchStore&) = delete;

  [[nodiscard]] const std::filesystem::path& directory() const { return dir_; }
  VolumeFile& create(const std::string& name, GridDims dims, Precision p);
  void write_manifest() const;
  void complete() { complete_ = true; }

 private:
  std::filesystem::path dir_;
  bool keep_;
  bool complete_ = false;
  std::vector<std::unique_ptr<VolumeFile>> files_;
};

struct LevelStreamStats {
  GridDims dims{};
  bool streamed = true;  // the coarsest level is solved in memory
  WindowBudget budget{};
  std::size_t peak_constraint_slices = 0;
  std::size_t peak_solution_slices = 0;
};

/// Finest-level slice traffic during one pass.
struct PassTraffic {
  int cycle = 0;  // 1-based
  int pass = 0;   // 1 = downward, 2 = upward, 0 = setup or output conversion
  std::size_t solution_reads = 0, solution_writes = 0;
  std::size_t constraint_reads = 0, constraint_writes = 0;
};

struct StreamStats {
  std::vector<LevelStreamStats> levels;
  std::vector<PassTraffic> finest;
  std::filesystem::path scratch_dir;
};

struct StreamJob {
  std::filesystem::path input;   // value target I0
  std::filesystem::path output;
  Precision output_precision = Precision::binary32;
  bool warm_start = false;       // start from I0 instead of zero
};

struct StreamResult {
  ConvergenceReport report;
  StreamStats stats;
};

/// Out-of-core solve: the same V-cycles as `solve`, but each level is swept
/// front to back through a fixed window of slices while the rest lives in
/// scratch files. `spec` supplies alpha, weights, boundary, gradient rule and
/// mean target; its in-memory volumes must be empty. With binary32 scratch (or
/// binary64 for binary64 runs) the output is bit-identical to the in-memory solve.
[[nodiscard]] StreamResult stream_solve(const StreamJob& job, const SystemSpec& spec, const SolverParams& params,
                                        const StreamConfig& config);

/// Lower-level access to the streaming V-cycle.
class StreamSolver {
 public:
  StreamSolver(const SystemSpec& spec, GridDims dims, const SolverParams& params, const StreamConfig& config);
  ~StreamSolver();
  StreamSolver(const StreamSolver&) = delete;
  StreamSolver& operator=(const StreamSolver&) = delete;

  /// Builds the finest constraints (and the initial guess) from the value-target file.
  void prepare(const std::filesystem::path& input, bool warm_start);
  /// One streamed V-cycle; returns the finest residual ratio. The final cycle
  /// writes its solution to the result file instead of scratch.
  double v_cycle(bool final_cycle);
  /// Applies the mean pin of a singular system and writes the output file.
  void write_output(const std::filesystem::path& path, Precision p);

  [[nodiscard]] const StreamStats& stats() const;
  /// Residual ratio of the initial guess, known after prepare().
  [[nodiscard]] double initial_ratio() const;
  void complete();

  struct Engine;

 private:
  std::unique_ptr<Engine> engine_;
};

/// Blends two volumes slice by slice: each z slice solves the 2D screened
/// Poisson problem (alpha - Laplacian) I = alpha I1 - Laplacian I0 in the
/// slice plane, starting from I1. The 2D hierarchy is built once and reused;
/// only one slice pair is held in memory.
struct BlendParams {
  double alpha = 0.01;
  int v_cycles = 1;
  int relax_passes = 1;
  int gs_iters = 10;
  Scheme scheme = Scheme::hybrid;
  WorkPrecision precision = WorkPrecision::binary32;
  std::size_t coarsest_max_voxels = 4096;
  Boundary boundary = Boundary::neumann;
  int threads = 0;
};

void per_slice_stream_solve(const std::filesystem::path& i0, const std::filesystem::path& i1,
                            const std::filesystem::path& output, Precision output_precision, const BlendParams& params);

/// In-memory form of the per-slice blend.
[[nodiscard]] VoxelVolume blend_slices(const VoxelVolume& i0, const VoxelVolume& i1, const BlendParams& params);

}  // namespace gdvol
