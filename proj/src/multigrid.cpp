#include "gdvol/mgsolver/multigrid.hpp"

#include <lapacke.h>
#include <omp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

#include "gdvol/errors.hpp"
#include "gdvol/mgsolver/kernels.hpp"
#include "gdvol/mgsolver/schedule.hpp"

namespace gdvol {

void SolverParams::validate() const {
  if (v_cycles < 1 || relax_passes < 1 || gs_iters < 1) {
    throw ParameterError("v_cycles, relax_passes and gs_iters must all be >= 1");
  }
  if (coarsest_max_voxels < 1) throw ParameterError("coarsest_max_voxels must be >= 1");
  if (threads < 0) throw ParameterError("thread count must be >= 0");
}

void apply_thread_setting(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

// --- ConvergenceReport --------------------------------------------------------

double ConvergenceReport::decay_rate() const {
  if (ratios.empty() || !(initial_ratio > 0.0) || !(ratios.back() > 0.0)) return 0.0;
  return std::pow(ratios.back() / initial_ratio, 1.0 / static_cast<double>(ratios.size()));
}

double ConvergenceReport::tail_rate(std::size_t first) const {
  if (first < 1) first = 1;
  if (ratios.size() < first) return 0.0;
  const double start = first == 1 ? initial_ratio : ratios[first - 2];
  const double end = ratios.back();
  if (!(start > 0.0) || !(end > 0.0)) return 0.0;
  return std::pow(end / start, 1.0 / static_cast<double>(ratios.size() - first + 1));
}

void ConvergenceReport::write_csv(std::ostream& out) const {
  out << "cycle_index,residual_ratio,seconds\n";
  out.precision(10);
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    out << (i + 1) << ',' << ratios[i] << ',' << (i < seconds.size() ? seconds[i] : 0.0) << '\n';
  }
}

void ConvergenceReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  write_csv(out);
  if (!out) throw IoError("failed writing report " + path.string());
}

// --- CoarseSolver -------------------------------------------------------------

CoarseSolver::CoarseSolver(const LevelOperator& op) : n_(op.dims().voxel_count()) {
  const GridDims d = op.dims();
  const bool periodic = op.boundary() == Boundary::periodic;

  struct Entry {
    std::size_t i, j;
    double v;
  };
  std::vector<Entry> entries;
  std::vector<double> row_sum(n_, 0.0), diag(n_, 0.0);
  auto neighbor = [&](int axis, std::size_t i, int off, std::size_t& out) {
    const long n = static_cast<long>(d[axis]);
    long j = static_cast<long>(i) + off;
    if (periodic) {
      j = ((j % n) + n) % n;
    } else if (j < 0 || j >= n) {
      return false;
    }
    out = static_cast<std::size_t>(j);
    return true;
  };
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t row = d.index(x, y, z);
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const double c = op.coefficient(x, y, z, dx, dy, dz);
              if (c == 0.0) continue;
              std::size_t nx, ny, nz;
              if (!neighbor(0, x, dx, nx) || !neighbor(1, y, dy, ny) || !neighbor(2, z, dz, nz)) continue;
              const std::size_t col = d.index(nx, ny, nz);
              row_sum[row] += c;
              if (col == row) diag[row] += c;
              if (col <= row) {
                entries.push_back({row, col, c});
                kd_ = std::max(kd_, row - col);
              }
            }
      }

  double max_diag = 0.0;
  for (double v : diag) max_diag = std::max(max_diag, v);
  if (!(max_diag > 0.0)) throw SingularOperatorError("coarsest operator is zero");
  deflated_ = true;
  for (std::size_t i = 0; i < n_; ++i) {
    if (std::abs(row_sum[i]) > 1e-10 * max_diag) {
      deflated_ = false;
      break;
    }
  }

  // ground the last unknown of a singular system
  const std::size_t m = deflated_ ? n_ - 1 : n_;
  if (m == 0) return;
  const std::size_t ld = kd_ + 1;
  band_.assign(ld * m, 0.0);
  for (const Entry& e : entries) {
    if (e.i >= m || e.j >= m) continue;
    band_[(e.i - e.j) + e.j * ld] += e.v;
  }
  const lapack_int info = LAPACKE_dpbtrf(LAPACK_COL_MAJOR, 'L', static_cast<lapack_int>(m),
                                         static_cast<lapack_int>(kd_), band_.data(), static_cast<lapack_int>(ld));
  if (info != 0) {
    throw NumericalError("coarsest-level factorization failed: operator is not positive definite" +
                         std::string(deflated_ ? " after deflating constants" : "") + " (pivot " +
                         std::to_string(info) + ")");
  }
}

template <typename T>
void CoarseSolver::solve(std::span<const T> b, std::span<T> x) const {
  if (b.size() != n_ || x.size() != n_) throw DimensionMismatchError("coarse solve size mismatch");
  std::vector<double> rhs(b.begin(), b.end());
  if (deflated_) {
    double mean = 0.0;
    for (double v : rhs) mean += v;
    mean /= static_cast<double>(n_);
    for (double& v : rhs) v -= mean;
  }
  const std::size_t m = deflated_ ? n_ - 1 : n_;
  if (m > 0) {
    const lapack_int info = LAPACKE_dpbtrs(LAPACK_COL_MAJOR, 'L', static_cast<lapack_int>(m),
                                           static_cast<lapack_int>(kd_), 1, band_.data(),
                                           static_cast<lapack_int>(kd_ + 1), rhs.data(), static_cast<lapack_int>(n_));
    if (info != 0) throw NumericalError("coarsest-level solve failed");
  }
  if (deflated_) {
    rhs[n_ - 1] = 0.0;
    double mean = 0.0;
    for (double v : rhs) mean += v;
    mean /= static_cast<double>(n_);
    for (double& v : rhs) v -= mean;
  }
  for (std::size_t i = 0; i < n_; ++i) x[i] = static_cast<T>(rhs[i]);
}

template void CoarseSolver::solve<float>(std::span<const float>, std::span<float>) const;
template void CoarseSolver::solve<double>(std::span<const double>, std::span<double>) const;

// --- hierarchy ----------------------------------------------------------------

std::vector<GridDims> hierarchy_dims(GridDims fine, Scheme s, Boundary b, std::size_t coarsest_max_voxels) {
  std::vector<GridDims> out{fine};
  while (out.back().voxel_count() > coarsest_max_voxels) {
    const GridDims d = out.back();
    if (d.nx == 1 && d.ny == 1 && d.nz == 1) break;
    out.push_back(coarse_dims(level_transfers(s, d, b)));
  }
  return out;
}

std::vector<LevelPlan> plan_levels(const LevelOperator& fine, Scheme s, std::size_t coarsest_max_voxels) {
  std::vector<LevelPlan> plan;
  LevelOperator op = fine;
  while (true) {
    const GridDims d = op.dims();
    LevelPlan level;
    level.coarsest = d.voxel_count() <= coarsest_max_voxels || (d.nx == 1 && d.ny == 1 && d.nz == 1);
    if (!level.coarsest) level.to_coarse = level_transfers(s, d, op.boundary());
    LevelOperator next = level.coarsest ? LevelOperator() : op.coarsen(level.to_coarse);
    // a singular system coarsened to one voxel has a zero operator there
    if (!level.coarsest && next.dims().voxel_count() == 1 && !(next.coefficient(0, 0, 0, 0, 0, 0) > 0.0)) {
      level.coarsest = true;
      level.to_coarse = {};
    }
    level.op = std::move(op);
    plan.push_back(std::move(level));
    if (plan.back().coarsest) break;
    op = std::move(next);
  }
  return plan;
}

template <typename T>
Hierarchy<T> build_hierarchy(const LevelOperator& fine, const SolverParams& params) {
  params.validate();
  Hierarchy<T> h;
  h.params = params;
  for (LevelPlan& p : plan_levels(fine, params.scheme, params.coarsest_max_voxels)) {
    LevelState<T> level;
    level.dims = p.op.dims();
    level.table = StencilTable<T>(p.op);
    level.solution = Volume<T>(level.dims);
    level.constraints = Volume<T>(level.dims);
    if (!p.coarsest) level.residual = Volume<T>(level.dims);
    level.to_coarse = p.to_coarse;
    level.op = std::move(p.op);
    h.levels.push_back(std::move(level));
  }
  h.coarse = CoarseSolver(h.levels.back().op);
  return h;
}

template <typename T>
Hierarchy<T> build_hierarchy(const SystemSpec& spec, GridDims dims, const SolverParams& params) {
  spec.validate(dims);
  return build_hierarchy<T>(fine_operator(params.scheme, spec.weights, spec.alpha, dims, spec.boundary), params);
}

// --- relaxation, residual -----------------------------------------------------

template <typename T>
void relax(LevelState<T>& level, int sweeps, RelaxOrder order) {
  const std::size_t n = level.dims.slice_size();
  for (int s = 0; s < sweeps; ++s) {
    for (std::size_t z = 0; z < level.dims.nz; ++z) {
      T* x = level.solution.mutable_data() + z * n;
      relax_plane(level.table, z, level.below(level.solution, z), x, level.above(level.solution, z),
                  level.constraints.data() + z * n, order);
    }
  }
}

template <typename T>
void relax_blocked(LevelState<T>& level, int passes, int k, RelaxOrder order) {
  const std::size_t n = level.dims.slice_size();
  const std::size_t nz = level.dims.nz;
  for (std::size_t t = 0; t < blocked_steps(nz, k); ++t) {
    blocked_step(t, passes, k, nz, [&](std::size_t z) {
      relax_plane(level.table, z, level.below(level.solution, z), level.solution.mutable_data() + z * n,
                  level.above(level.solution, z), level.constraints.data() + z * n, order);
    });
  }
}

template <typename T>
Volume<T> residual(const LevelState<T>& level) {
  Volume<T> r(level.dims);
  const std::size_t n = level.dims.slice_size();
  for (std::size_t z = 0; z < level.dims.nz; ++z) {
    (void)residual_plane(level.table, z, level.below(level.solution, z), level.solution.data() + z * n,
                         level.above(level.solution, z), level.constraints.data() + z * n, r.mutable_data() + z * n);
  }
  return r;
}

template <typename T>
double residual_ratio(const LevelState<T>& level) {
  const std::size_t n = level.dims.slice_size();
  std::vector<T> r(n);
  double rn = 0.0, bn = 0.0, dn = 0.0;
  for (std::size_t z = 0; z < level.dims.nz; ++z) {
    const T* x = level.solution.data() + z * n;
    const T* b = level.constraints.data() + z * n;
    rn += residual_plane(level.table, z, level.below(level.solution, z), x, level.above(level.solution, z), b, r.data());
    bn += squared_norm(b, n);
    dn += diag_scaled_norm_plane(level.table, z, x);
  }
  const double den = bn > 0.0 ? bn : dn;
  return den > 0.0 ? std::sqrt(rn / den) : std::sqrt(rn);
}

template <typename T>
void solve_coarsest(Hierarchy<T>& h) {
  LevelState<T>& c = h.levels.back();
  h.coarse.template solve<T>(c.constraints.values(), c.solution.mutable_values());
}

// --- V-cycle ------------------------------------------------------------------

namespace {

template <typename T>
void restrict_residual(const LevelState<T>& fine, Volume<T>& coarse_b, std::vector<T>& scratch) {
  const Transfer3D& t = fine.to_coarse;
  const std::size_t n = fine.dims.slice_size();
  std::vector<WeightedPlane<T>> terms;
  for (std::size_t c = 0; c < t[2].coarse_size(); ++c) {
    terms.clear();
    for (const auto& tap : t[2].restrict_row(c)) terms.push_back({tap.weight, fine.residual.data() + tap.index * n});
    restrict_plane<T>(t[0], t[1], terms, coarse_b.mutable_slice(c).data(), scratch);
  }
}

/// Adds the prolonged coarse solution; upsampled planes are reused by neighbors in z.
template <typename T>
void add_prolonged(LevelState<T>& fine, const Volume<T>& coarse_x, std::vector<T>& scratch) {
  const Transfer3D& t = fine.to_coarse;
  const std::size_t n = fine.dims.slice_size();
  const std::size_t nc = coarse_x.dims().slice_size();
  struct Cached {
    std::size_t c = static_cast<std::size_t>(-1);
    std::vector<T> plane;
  };
  std::array<Cached, 2> cache;
  auto upsampled = [&](std::size_t c) -> const T* {
    for (auto& e : cache)
      if (e.c == c) return e.plane.data();
    constexpr std::size_t empty = static_cast<std::size_t>(-1);
    // fill an empty slot first, otherwise evict the lower (older) plane
    Cached& slot = cache[0].c == empty   ? cache[0]
                   : cache[1].c == empty ? cache[1]
                   : cache[0].c < cache[1].c ? cache[0]
                                             : cache[1];
    slot.c = c;
    slot.plane.resize(n);
    prolong_plane<T>(t[0], t[1], coarse_x.data() + c * nc, slot.plane.data(), scratch);
    return slot.plane.data();
  };
  std::vector<WeightedPlane<T>> terms;
  for (std::size_t f = 0; f < fine.dims.nz; ++f) {
    terms.clear();
    for (const auto& tap : t[2].prolong_row(f)) terms.push_back({tap.weight, upsampled(tap.index)});
    add_correction<T>(fine.solution.mutable_data() + f * n, n, terms);
  }
}

}  // namespace

template <typename T>
double v_cycle(Hierarchy<T>& h) {
  auto& levels = h.levels;
  const SolverParams& p = h.params;
  std::vector<T> scratch;
  for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
    LevelState<T>& fine = levels[l];
    relax_blocked(fine, p.relax_passes, p.gs_iters, p.order);
    const std::size_t n = fine.dims.slice_size();
    for (std::size_t z = 0; z < fine.dims.nz; ++z) {
      (void)residual_plane(fine.table, z, fine.below(fine.solution, z), fine.solution.data() + z * n,
                           fine.above(fine.solution, z), fine.constraints.data() + z * n,
                           fine.residual.mutable_data() + z * n);
    }
    restrict_residual(fine, levels[l + 1].constraints, scratch);
    levels[l + 1].solution.fill(T(0));
  }
  solve_coarsest(h);
  for (std::size_t l = levels.size() - 1; l-- > 0;) {
    add_prolonged(levels[l], levels[l + 1].solution, scratch);
    relax_blocked(levels[l], p.relax_passes, p.gs_iters, p.order);
  }
  return residual_ratio(levels.front());
}

// --- solve --------------------------------------------------------------------

template <typename T>
double plane_sum(const T* v, std::size_t count) {
  double s = 0.0;
  for (std::size_t i = 0; i < count; ++i) s += static_cast<double>(v[i]);
  return s;
}

double pinned_mean(const SystemSpec& spec) {
  if (spec.mean_target) return *spec.mean_target;
  if (spec.value_target) {
    const auto& v = *spec.value_target;
    double sum = 0.0;
    for (std::size_t z = 0; z < v.dims().nz; ++z) sum += plane_sum(v.slice(z).data(), v.dims().slice_size());
    return sum / static_cast<double>(v.size());
  }
  return 0.0;
}

namespace {

template <typename T>
SolveResult solve_typed(const SystemSpec& spec, GridDims dims, const SolverParams& params) {
  Hierarchy<T> h = build_hierarchy<T>(spec, dims, params);
  LevelState<T>& top = h.levels.front();
  top.constraints = assemble_constraints<T>(params.scheme, spec, dims);
  ConvergenceReport report;
  report.engine = "memory";
  if (spec.initial_guess) {
    top.solution = spec.initial_guess->cast<T>();
    report.initial_guess = "supplied";
  }
  report.initial_ratio = residual_ratio(top);
  for (int c = 0; c < params.v_cycles; ++c) {
    const auto start = std::chrono::steady_clock::now();
    const double ratio = v_cycle(h);
    report.ratios.push_back(ratio);
    report.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  Volume<double> out = top.solution.template cast<double>();
  if (spec.singular()) {
    const std::size_t n = dims.slice_size();
    double sum = 0.0;
    for (std::size_t z = 0; z < dims.nz; ++z) sum += plane_sum(top.solution.data() + z * n, n);
    const double shift = pinned_mean(spec) - sum / static_cast<double>(dims.voxel_count());
    auto src = top.solution.values();
    auto dst = out.mutable_values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<double>(static_cast<T>(src[i] + shift));
  }
  return {std::move(out), std::move(report)};
}

}  // namespace

SolveResult solve(const SystemSpec& spec, GridDims dims, const SolverParams& params) {
  params.validate();
  apply_thread_setting(params.threads);
  if (params.precision == WorkPrecision::binary64) return solve_typed<double>(spec, dims, params);
  return solve_typed<float>(spec, dims, params);
}

#define GDVOL_INSTANTIATE_MG(T)                                                                    \
  template Hierarchy<T> build_hierarchy<T>(const LevelOperator&, const SolverParams&);             \
  template Hierarchy<T> build_hierarchy<T>(const SystemSpec&, GridDims, const SolverParams&);      \
  template void relax<T>(LevelState<T>&, int, RelaxOrder);                                         \
  template void relax_blocked<T>(LevelState<T>&, int, int, RelaxOrder);                            \
  template Volume<T> residual<T>(const LevelState<T>&);                                            \
  template double residual_ratio<T>(const LevelState<T>&);                                         \
  template void solve_coarsest<T>(Hierarchy<T>&);                                                  \
  template double v_cycle<T>(Hierarchy<T>&);                                                       \
  template double plane_sum<T>(const T*, std::size_t);

GDVOL_INSTANTIATE_MG(float)
GDVOL_INSTANTIATE_MG(double)

#undef GDVOL_INSTANTIATE_MG

}  // namespace gdvol
