#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>

#include "gdvol/grid/volume.hpp"
#include "gdvol/grid/volume_io.hpp"
#include "gdvol/mgsolver/multigrid.hpp"
#include "gdvol/mgsolver/system.hpp"
#include "gdvol/streaming/streaming.hpp"

namespace gdvol {

/// Phase 1: smooth across slices while keeping in-slice gradients.
struct DiffusionParams {
  WeightTensor beta{1.0, 1.0, 0.1};
  SolverParams solver{};  // 2 V-cycles, 3 passes, 3 sweeps, hybrid
  Boundary boundary = Boundary::neumann;
};

struct NprParams {
  double lambda = 1.25;
  double sigma = 5.0;
  double alpha = 0.001;
  WeightTensor weights{1.0, 1.0, 0.1};
  SolverParams solver{};

  void validate() const;
};

enum class EngineKind { automatic, memory, streaming };

struct EngineOptions {
  EngineKind kind = EngineKind::automatic;
  std::size_t in_core_max_voxels = std::size_t{1} << 26;  // automatic: in memory up to this size
  StreamConfig stream{};

  [[nodiscard]] bool use_streaming(GridDims dims) const;
};

/// Forward differences on voxel links; axes with mask false get zero links.
[[nodiscard]] LinkField gradient_field(const VoxelVolume& v, std::array<bool, 3> mask = {true, true, false});

/// Forward differences scaled by npr_gain of the full 3D forward-difference
/// magnitude at each link's base voxel (missing differences count as 0).
[[nodiscard]] LinkField npr_gradient_map(const VoxelVolume& v, double lambda, double sigma);

/// In-memory phase 1: alpha = 0, G = in-slice gradient of I0, warm start
/// from I0, output mean pinned to mean(I0).
[[nodiscard]] SolveResult anisotropic_diffuse(const VoxelVolume& i0, const DiffusionParams& p);

[[nodiscard]] ConvergenceReport anisotropic_diffuse_file(const std::filesystem::path& input,
                                                         const std::filesystem::path& output, Precision output_precision,
                                                         const DiffusionParams& p, const EngineOptions& engine);

/// Phase 2, in memory; see per_slice_stream_solve for the file version.
[[nodiscard]] VoxelVolume screened_blend(const VoxelVolume& i0, const VoxelVolume& i1, const BlendParams& p);

/// Both phases in memory.
[[nodiscard]] VoxelVolume destripe(const VoxelVolume& i0, const DiffusionParams& diffusion, const BlendParams& blend);

struct DestripeOptions {
  EngineOptions engine{};
  Precision output_precision = Precision::binary32;
  std::optional<std::filesystem::path> keep_intermediate;  // where to leave I1
};

/// Phase 1 then the per-slice blend, file to file.
ConvergenceReport destripe_pipeline(const std::filesystem::path& input, const std::filesystem::path& output,
                                    const DiffusionParams& diffusion, const BlendParams& blend,
                                    const DestripeOptions& options);

/// Screened solve toward I0 with small gradients suppressed:
/// (alpha S - div W grad) I = alpha S I0 - div W V, V = npr_gradient_map(I0).
[[nodiscard]] SolveResult npr_filter(const VoxelVolume& i0, const NprParams& p);

[[nodiscard]] ConvergenceReport npr_filter_file(const std::filesystem::path& input, const std::filesystem::path& output,
                                                Precision output_precision, const NprParams& p,
                                                const EngineOptions& engine);

}  // namespace gdvol
