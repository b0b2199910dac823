#include "gdvol/filters/filters.hpp"

#include <cmath>

#include "gdvol/errors.hpp"

namespace gdvol {

void NprParams::validate() const {
  if (!(sigma > 0.0)) throw ParameterError("NPR sigma must be > 0");
  if (!(lambda >= 0.0)) throw ParameterError("NPR lambda must be >= 0");
  if (!(alpha > 0.0)) throw ParameterError("NPR alpha must be > 0");
  weights.validate();
}

bool EngineOptions::use_streaming(GridDims dims) const {
  switch (kind) {
    case EngineKind::memory: return false;
    case EngineKind::streaming: return true;
    case EngineKind::automatic: break;
  }
  return dims.voxel_count() > in_core_max_voxels;
}

// --- gradient fields ----------------------------------------------------------

LinkField gradient_field(const VoxelVolume& v, std::array<bool, 3> mask) {
  const GridDims d = v.dims();
  LinkField g(d);
  for (int a = 0; a < 3; ++a) {
    if (!mask[a]) continue;
    const GridDims ld = g.link_dims(a);
    for (std::size_t z = 0; z < ld.nz; ++z)
      for (std::size_t y = 0; y < ld.ny; ++y)
        for (std::size_t x = 0; x < ld.nx; ++x) {
          const float here = v(x, y, z);
          const float next = v(x + (a == 0), y + (a == 1), z + (a == 2));
          g.at(a, x, y, z) = next - here;
        }
  }
  return g;
}

LinkField npr_gradient_map(const VoxelVolume& v, double lambda, double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("NPR sigma must be > 0");
  const GridDims d = v.dims();
  LinkField g(d);
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double here = v(x, y, z);
        std::array<double, 3> diff{};
        std::array<bool, 3> has{x + 1 < d.nx, y + 1 < d.ny, z + 1 < d.nz};
        if (has[0]) diff[0] = v(x + 1, y, z) - here;
        if (has[1]) diff[1] = v(x, y + 1, z) - here;
        if (has[2]) diff[2] = v(x, y, z + 1) - here;
        const double m = std::sqrt(diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]);
        const double gain = npr_gain(m, lambda, sigma);
        for (int a = 0; a < 3; ++a) {
          if (has[a]) g.at(a, x, y, z) = static_cast<float>(gain * diff[a]);
        }
      }
  return g;
}

// --- phase 1 ------------------------------------------------------------------

namespace {

SystemSpec diffusion_spec(const DiffusionParams& p) {
  SystemSpec s;
  s.alpha = 0.0;
  s.weights = p.beta;
  s.boundary = p.boundary;
  s.rule.kind = GradientRule::Kind::masked;
  s.rule.mask = {true, true, false};
  return s;
}

SystemSpec npr_spec(const NprParams& p) {
  p.validate();
  SystemSpec s;
  s.alpha = p.alpha;
  s.weights = p.weights;
  s.rule.kind = GradientRule::Kind::npr;
  s.rule.lambda = p.lambda;
  s.rule.sigma = p.sigma;
  return s;
}

SolveResult solve_warm(SystemSpec spec, const VoxelVolume& i0, const SolverParams& params) {
  spec.value_target = i0;
  spec.initial_guess = i0;
  return solve(spec, i0.dims(), params);
}

ConvergenceReport solve_file(const SystemSpec& spec, const std::filesystem::path& input,
                             const std::filesystem::path& output, Precision output_precision,
                             const SolverParams& params, const EngineOptions& engine) {
  const GridDims dims = read_header(input).dims;
  if (engine.use_streaming(dims)) {
    StreamJob job{input, output, output_precision, true};
    return stream_solve(job, spec, params, engine.stream).report;
  }
  SolveResult r = solve_warm(spec, read_volume(input), params);
  write_volume(r.solution, output, output_precision);
  return r.report;
}

}  // namespace

SolveResult anisotropic_diffuse(const VoxelVolume& i0, const DiffusionParams& p) {
  return solve_warm(diffusion_spec(p), i0, p.solver);
}

ConvergenceReport anisotropic_diffuse_file(const std::filesystem::path& input, const std::filesystem::path& output,
                                           Precision output_precision, const DiffusionParams& p,
                                           const EngineOptions& engine) {
  return solve_file(diffusion_spec(p), input, output, output_precision, p.solver, engine);
}

// --- phase 2 and the pipeline -------------------------------------------------

VoxelVolume screened_blend(const VoxelVolume& i0, const VoxelVolume& i1, const BlendParams& p) {
  return blend_slices(i0, i1, p);
}

VoxelVolume destripe(const VoxelVolume& i0, const DiffusionParams& diffusion, const BlendParams& blend) {
  const VoxelVolume i1 = anisotropic_diffuse(i0, diffusion).solution.cast<float>();
  return blend_slices(i0, i1, blend);
}

ConvergenceReport destripe_pipeline(const std::filesystem::path& input, const std::filesystem::path& output,
                                    const DiffusionParams& diffusion, const BlendParams& blend,
                                    const DestripeOptions& options) {
  std::filesystem::path intermediate;
  if (options.keep_intermediate) {
    intermediate = *options.keep_intermediate;
  } else {
    const std::filesystem::path dir = options.engine.stream.temp_dir.empty()
                                          ? std::filesystem::temp_directory_path()
                                          : options.engine.stream.temp_dir;
    intermediate = dir / (output.filename().string() + ".phase1.vxg");
  }
  ConvergenceReport report =
      anisotropic_diffuse_file(input, intermediate, Precision::binary32, diffusion, options.engine);
  try {
    per_slice_stream_solve(input, intermediate, output, options.output_precision, blend);
  } catch (...) {
    if (!options.keep_intermediate) std::filesystem::remove(intermediate);
    throw;
  }
  if (!options.keep_intermediate) std::filesystem::remove(intermediate);
  return report;
}

// --- NPR ----------------------------------------------------------------------

SolveResult npr_filter(const VoxelVolume& i0, const NprParams& p) { return solve_warm(npr_spec(p), i0, p.solver); }

ConvergenceReport npr_filter_file(const std::filesystem::path& input, const std::filesystem::path& output,
                                  Precision output_precision, const NprParams& p, const EngineOptions& engine) {
  return solve_file(npr_spec(p), input, output, output_precision, p.solver, engine);
}

}  // namespace gdvol
