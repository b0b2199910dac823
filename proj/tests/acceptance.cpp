// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gdvol/cli/cli.hpp"
#include "gdvol/discretization/operator.hpp"
#include "gdvol/filters/filters.hpp"
#include "gdvol/filters/synthetic.hpp"
#include "gdvol/spectral/spectral.hpp"
#include "generators.hpp"
#include "metrics.hpp"
#include "oracle.hpp"
#include "temp_dir.hpp"

using namespace gdvol;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const std::vector<Scheme> kSchemes{Scheme::constant, Scheme::hybrid, Scheme::linear};

// 1 ------------------------------------------------------------------------

Outcome dense_oracle() {
  const auto start = Clock::now();
  double worst = 0.0;
  gen::for_all(50, 1000, [&](gen::Gen& g, std::uint64_t seed) {
    const Scheme s = kSchemes[seed % 3];
    const double alpha = std::vector{0.0, 0.01, 1.0}[(seed / 3) % 3];
    const GridDims d = g.dims(2, 10);
    SystemSpec spec;
    spec.alpha = alpha;
    spec.weights = g.weights(0.05, 1.5);
    spec.value_target = g.volume(d, 0, 100);
    spec.rule.kind = GradientRule::Kind::masked;
    spec.rule.mask = {g.coin(), g.coin(), g.coin()};
    SolverParams p;
    p.scheme = s;
    p.v_cycles = 30;
    p.precision = WorkPrecision::binary64;
    const SolveResult r = solve(spec, d, p);

    const auto sys = oracle::dense_system(s, spec.weights, alpha, d);
    const oracle::VectorXd i0 = oracle::to_vector(*spec.value_target);
    const oracle::VectorXd b = oracle::masked_rhs(sys, s, spec.weights, alpha, d, i0, spec.rule.mask);
    const oracle::VectorXd ref = oracle::dense_solve(sys.a, b, alpha == 0.0, i0.mean());
    worst = std::max(worst, (oracle::to_vector(r.solution) - ref).norm() / ref.norm());
  });
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return {worst <= 1e-8 && secs < 120.0, fmt("50 systems, max rel L2 %.2e (<= 1e-8), %.1f s (< 120 s)", worst, secs)};
}

// 2 ------------------------------------------------------------------------

Outcome spectral_oracle() {
  const auto start = Clock::now();
  gen::Gen g(2000);
  const VoxelVolume i0 = g.volume({16, 16, 16}, 0, 100);
  SpectralParams sp;
  const SpectralResult ref = spectral_pipeline(i0.cast<double>(), sp);
  std::string detail;
  bool pass = ref.imaginary_residue <= 1e-10;
  for (Scheme s : {Scheme::constant, Scheme::hybrid}) {
    DiffusionParams diffusion;
    diffusion.boundary = Boundary::periodic;
    diffusion.solver.scheme = s;
    diffusion.solver.precision = WorkPrecision::binary64;
    diffusion.solver.v_cycles = 30;
    BlendParams blend;
    blend.boundary = Boundary::periodic;
    blend.scheme = s;
    blend.precision = WorkPrecision::binary64;
    blend.v_cycles = 30;
    // both phases solve in binary64; volumes pass between them as binary32
    const Volume<double> i1 = anisotropic_diffuse(i0, diffusion).solution;
    const VoxelVolume out = screened_blend(i0, i1.cast<float>(), blend);
    const double rel = relative_l2(out.cast<double>(), ref.volume);
    pass = pass && rel <= 1e-6;
    detail += fmt("%s %.2e ", std::string(to_string(s)).c_str(), rel);
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return {pass && secs < 60.0, fmt("periodic 16^3 rel L2 %s(<= 1e-6), imag %.1e, %.1f s", detail.c_str(),
                                   ref.imaginary_residue, secs)};
}

// 3 and 4 ------------------------------------------------------------------

struct BenchSummary {
  std::map<Scheme, double> average, tail, seconds;
};

BenchSummary run_bench() {
  cli::BenchSetup setup;  // 128^3 striped diffusion, binary64, 10 cycles
  const auto rows = cli::residual_decay_study(setup, kSchemes);
  BenchSummary out;
  std::map<Scheme, std::vector<double>> ratios;
  for (const cli::BenchRow& r : rows) {
    ratios[r.scheme].push_back(r.residual_ratio);
    out.seconds[r.scheme] += r.seconds / setup.cycles;
  }
  for (Scheme s : kSchemes) {
    ConvergenceReport rep;
    rep.initial_ratio = 1.0;  // zero start: r_0 = b
    rep.ratios = ratios[s];
    out.average[s] = rep.decay_rate();
    out.tail[s] = rep.tail_rate(3);
  }
  return out;
}

Outcome decay_ordering(const BenchSummary& b) {
  const double c = b.average.at(Scheme::constant), h = b.average.at(Scheme::hybrid), l = b.average.at(Scheme::linear);
  const bool pass = l < h && h < c && c >= 0.1 && c <= 0.45 && h >= 0.04 && h <= 0.25 && l >= 0.01 && l <= 0.12;
  return {pass, fmt("128^3 average rate C %.3f [0.1,0.45] H %.3f [0.04,0.25] L %.3f [0.01,0.12]; "
                    "tail rate from cycle 3: C %.3f H %.3f L %.3f",
                    c, h, l, b.tail.at(Scheme::constant), b.tail.at(Scheme::hybrid), b.tail.at(Scheme::linear))};
}

Outcome speed_ordering(const BenchSummary& b) {
  const double c = b.seconds.at(Scheme::constant), h = b.seconds.at(Scheme::hybrid), l = b.seconds.at(Scheme::linear);
  return {c <= h && h < l && l >= 1.3 * h,
          fmt("s/cycle C %.3f <= H %.3f < L %.3f, L/H %.2f (>= 1.3)", c, h, l, l / h)};
}

// 5 ------------------------------------------------------------------------

Outcome streaming_equivalence() {
  const GridDims d{64, 64, 128};
  const VoxelVolume i0 = striped_volume(d, {});
  TempDir dir;
  write_volume(i0, dir / "in.vxg", Precision::binary32);
  SystemSpec spec;
  spec.alpha = 0.0;
  spec.weights = {1, 1, 0.1};
  spec.rule.kind = GradientRule::Kind::masked;
  spec.rule.mask = {true, true, false};
  bool pass = true;
  std::string detail;
  for (Scheme s : kSchemes) {
    SolverParams p;
    p.scheme = s;
    SystemSpec mem_spec = spec;
    mem_spec.value_target = i0;
    mem_spec.initial_guess = i0;
    const SolveResult mem = solve(mem_spec, d, p);
    StreamConfig cfg;
    cfg.scratch = Precision::binary32;
    cfg.temp_dir = dir.path();
    const StreamResult st = stream_solve({dir / "in.vxg", dir / "out.vxg", Precision::binary32, true}, spec, p, cfg);
    const double rel = relative_l2(read_volume(dir / "out.vxg"), mem.solution.cast<float>());
    const WindowBudget budget = window_budget(p.gs_iters, s);
    bool peaks = true;
    std::string levels;
    for (const LevelStreamStats& L : st.stats.levels) {
      if (!L.streamed) continue;
      const std::size_t peak = L.peak_constraint_slices + L.peak_solution_slices;
      peaks = peaks && L.peak_constraint_slices == budget.constraint_slices &&
              L.peak_solution_slices == budget.solution_slices;
      levels += fmt("%zu/", peak);
    }
    if (!levels.empty()) levels.pop_back();
    pass = pass && rel <= 1e-5 && peaks;
    detail += fmt("%s rel %.1e peaks %s (budget %zu); ", std::string(to_string(s)).c_str(), rel, levels.c_str(), budget.total);
  }
  detail.resize(detail.size() - 2);
  return {pass, "64x64x128 " + detail};
}

// 6 ------------------------------------------------------------------------

Outcome rise_pathology() {
  // residual pair -1/+1 on fine nodes 6, 7 of a 16-node axis
  std::vector<double> r(16, 0.0);
  r[6] = -1.0;
  r[7] = 1.0;
  auto restricted = [&](Transfer1D::Kind k) {
    const Transfer1D t(k, 16, false);
    double norm = 0.0;
    for (std::size_t c = 0; c < t.coarse_size(); ++c) {
      double v = 0.0;
      for (const auto& tap : t.restrict_row(c)) v += tap.weight * r[tap.index];
      norm = std::max(norm, std::abs(v));
    }
    return norm;
  };
  const double rc = restricted(Transfer1D::Kind::constant), rl = restricted(Transfer1D::Kind::linear);

  const GridDims d{16, 1, 1};
  VoxelVolume target(d);
  for (std::size_t x = 0; x < 16; ++x) target.at(x, 0, 0) = x >= 7 ? 1.0f : 0.0f;
  SystemSpec spec;
  spec.alpha = 0.0;
  spec.weights = {1, 1, 1};
  spec.value_target = target;
  spec.rule.kind = GradientRule::Kind::masked;
  spec.rule.mask = {true, false, false};
  auto one_cycle_error = [&](Scheme s) {
    SolverParams p;
    p.scheme = s;
    p.v_cycles = 1;
    p.relax_passes = 1;
    p.gs_iters = 1;
    p.coarsest_max_voxels = 1;
    p.precision = WorkPrecision::binary64;
    return relative_l2(solve(spec, d, p).solution, target);
  };
  const double ec = one_cycle_error(Scheme::constant), el = one_cycle_error(Scheme::linear);
  return {rc == 0.0 && rl > 0.0 && el < ec,
          fmt("restricted pair max |.|: constant %.3g, linear %.3g; one-cycle error constant %.3f > linear %.3f", rc, rl,
              ec, el)};
}

// 7 ------------------------------------------------------------------------

Outcome destriping() {
  const GridDims d{64, 64, 64};
  const VoxelVolume i0 = striped_volume(d, {});
  TempDir dir;
  write_volume(i0, dir / "in.vxg", Precision::binary32);
  DestripeOptions opt;
  opt.engine.kind = EngineKind::streaming;
  opt.engine.stream.temp_dir = dir.path();
  (void)destripe_pipeline(dir / "in.vxg", dir / "out.vxg", DiffusionParams{}, BlendParams{}, opt);
  const VoxelVolume out = read_volume(dir / "out.vxg");
  const double jump = mean_jump(i0) / mean_jump(out);
  const double energy = inslice_laplacian_energy(out) / inslice_laplacian_energy(i0);
  const double drift = std::abs(mean(out) - mean(i0));
  return {jump >= 10.0 && energy >= 0.9 && drift <= 1e-3,
          fmt("64^3 streamed pipeline: mean jump reduced %.1fx (>= 10), Laplacian energy %.4f (>= 0.9), mean drift "
              "%.1e (<= 1e-3)",
              jump, energy, drift)};
}

// 8 ------------------------------------------------------------------------

Outcome limit_properties() {
  double worst_z = 0.0, worst_inslice = 0.0, worst_cross = 0.0;
  bool monotone = true;
  gen::for_all(10000, 8000, [&](gen::Gen& g, std::uint64_t) {
    const WeightTensor beta{g.log_uniform(1e-2, 10), g.log_uniform(1e-2, 10), g.log_uniform(1e-2, 10)};
    const double alpha = g.log_uniform(1e-4, 10);
    const double k = g.uniform(0.1, 20), l = g.uniform(0, 20), m = g.uniform(0.1, 20);
    double prev = 0.0;
    for (double scale = 1e-1; scale >= 1e-13; scale *= 1e-2) {
      const double f = filter_coefficient(k, l, m, {beta.bx, beta.by, beta.bz * scale}, alpha);
      monotone = monotone && f >= prev - 1e-15;
      prev = f;
    }
    worst_z = std::max(worst_z, 1.0 - prev);
    worst_inslice = std::max(worst_inslice, 1.0 - filter_coefficient(k * 1e4, l * 1e4, m, beta, alpha));
    worst_cross = std::max(worst_cross, filter_coefficient(0, 0, m * g.log_uniform(1, 1e6), beta, alpha));
  });
  return {monotone && worst_z <= 1e-6 && worst_inslice <= 1e-6 && worst_cross == 0.0,
          fmt("10000 draws, F non-decreasing as bz shrinks: %s; bz*1e-13 max |1-F| %.1e, k^2+l^2->inf max |1-F| %.1e, k=l=0 m->inf max F %.1e", monotone ? "yes" : "no", worst_z,
              worst_inslice, worst_cross)};
}

// 9 ------------------------------------------------------------------------

Outcome half_scratch() {
  const GridDims d{64, 64, 128};
  const VoxelVolume i0 = striped_volume(d, {});
  TempDir dir;
  write_volume(i0, dir / "in.vxg", Precision::binary32);
  DiffusionParams diffusion;  // defaults: 2 V-cycles
  SystemSpec spec;
  spec.alpha = 0.0;
  spec.weights = diffusion.beta;
  spec.rule.kind = GradientRule::Kind::masked;
  spec.rule.mask = {true, true, false};
  bool pass = true;
  std::string detail;
  for (Scheme s : kSchemes) {
    SolverParams p = diffusion.solver;
    p.scheme = s;
    double ratio[2];
    for (int half = 0; half < 2; ++half) {
      StreamConfig cfg;
      cfg.scratch = half ? Precision::binary16 : Precision::binary32;
      cfg.temp_dir = dir.path();
      ratio[half] = stream_solve({dir / "in.vxg", dir / "out.vxg", Precision::binary32, true}, spec, p, cfg)
                        .report.ratios.back();
    }
    pass = pass && ratio[1] <= 2.0 * ratio[0];
    detail += fmt("%s f16 %.2e / f32 %.2e = %.3f; ", std::string(to_string(s)).c_str(), ratio[1], ratio[0], ratio[1] / ratio[0]);
  }
  detail.resize(detail.size() - 2);
  return {pass, fmt("64x64x128, %d V-cycles: ", diffusion.solver.v_cycles) + detail + " (<= 2)"};
}

// 10 -----------------------------------------------------------------------

Outcome npr_behavior() {
  const GridDims d{64, 64, 64};
  const BlockSpec spec;
  const VoxelVolume noisy = block_volume(d, spec), clean = block_volume_clean(d, spec);
  const SolveResult r = npr_filter(noisy, NprParams{});
  const double reduction = metrics::flat_noise_variance(noisy, clean) / metrics::flat_noise_variance(r.solution, clean);
  const double edge = metrics::edge_amplitude(r.solution) / metrics::edge_amplitude(clean) - 1.0;

  gen::Gen g(10000);
  const VoxelVolume v = g.volume({32, 32, 32}, 0, 100);
  NprParams identity;
  identity.lambda = 1.0;
  identity.sigma = 1e-6;
  identity.solver.precision = WorkPrecision::binary64;
  const double rel = relative_l2(npr_filter(v, identity).solution, v);
  // binary32 round-off in b is amplified by 1/alpha; reported, not judged
  identity.solver.precision = WorkPrecision::binary32;
  const double rel32 = relative_l2(npr_filter(v, identity).solution, v);
  return {reduction >= 4.0 && std::abs(edge) <= 0.1 && rel <= 1e-4,
          fmt("64^3 blocks: flat noise variance reduced %.1fx (>= 4), edge amplitude %+.1f%% (within 10%%); "
              "sigma=1e-6 identity rel L2 %.1e in binary64 (<= 1e-4), %.1e in binary32",
              reduction, 100.0 * edge, rel, rel32)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };
  report(1, "dense-oracle equivalence", dense_oracle);
  report(2, "spectral-oracle equivalence", spectral_oracle);
  BenchSummary bench;
  report(3, "residual-decay ordering", [&] {
    bench = run_bench();
    return decay_ordering(bench);
  });
  report(4, "relative speed ordering", [&] { return speed_ordering(bench); });
  report(5, "streaming/in-memory equivalence", streaming_equivalence);
  report(6, "hidden-rise pathology", rise_pathology);
  report(7, "de-striping efficacy", destriping);
  report(8, "filter limit properties", limit_properties);
  report(9, "binary16 scratch containment", half_scratch);
  report(10, "NPR filter behavior", npr_behavior);
  std::printf("%d of 10 criteria pass\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
