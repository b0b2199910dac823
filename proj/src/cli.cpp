#include "gdvol/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <ios>
#include <map>
#include <new>
#include <ostream>
#include <sstream>

#include "gdvol/errors.hpp"
#include "gdvol/filters/synthetic.hpp"
#include "gdvol/grid/volume_io.hpp"

namespace gdvol::cli {

namespace {

const std::map<std::string, Scheme> kSchemes{
    {"constant", Scheme::constant}, {"linear", Scheme::linear}, {"hybrid", Scheme::hybrid}};
const std::map<std::string, WorkPrecision> kWork{{"f32", WorkPrecision::binary32},
                                                 {"binary32", WorkPrecision::binary32},
                                                 {"f64", WorkPrecision::binary64},
                                                 {"binary64", WorkPrecision::binary64}};
const std::map<std::string, Precision> kStored{
    {"u8", Precision::uint8},          {"uint8", Precision::uint8},       {"f16", Precision::binary16},
    {"binary16", Precision::binary16}, {"f32", Precision::binary32},      {"binary32", Precision::binary32},
    {"f64", Precision::binary64},      {"binary64", Precision::binary64}};
const std::map<std::string, Boundary> kBoundaries{{"neumann", Boundary::neumann}, {"periodic", Boundary::periodic}};
const std::map<std::string, EngineKind> kEngines{
    {"auto", EngineKind::automatic}, {"memory", EngineKind::memory}, {"streaming", EngineKind::streaming}};
const std::map<std::string, SymbolMode> kModes{{"discrete", SymbolMode::discrete},
                                               {"continuous", SymbolMode::continuous}};
const std::map<std::string, GradientRule::Kind> kRules{
    {"zero", GradientRule::Kind::zero}, {"masked", GradientRule::Kind::masked}, {"npr", GradientRule::Kind::npr}};
const std::map<std::string, RelaxOrder> kOrders{{"multicolor", RelaxOrder::multicolor},
                                                {"lexicographic", RelaxOrder::lexicographic}};

std::string_view name(WorkPrecision p) { return p == WorkPrecision::binary64 ? "binary64" : "binary32"; }
std::string_view name(Boundary b) { return b == Boundary::periodic ? "periodic" : "neumann"; }
std::string_view name(EngineKind k) {
  return k == EngineKind::memory ? "memory" : k == EngineKind::streaming ? "streaming" : "auto";
}
std::string_view name(RelaxOrder o) { return o == RelaxOrder::lexicographic ? "lexicographic" : "multicolor"; }

template <typename E>
CLI::Option* add_enum(CLI::App* app, const std::string& flag, E& target, const std::map<std::string, E>& names,
                      const std::string& help) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : names) keys.push_back(k);
  return app
      ->add_option_function<std::string>(
          flag, [&target, &names](const std::string& s) { target = names.at(CLI::detail::to_lower(s)); }, help)
      ->check(CLI::IsMember(keys, CLI::ignore_case));
}

void add_weights(CLI::App* app, WeightTensor& w, const std::string& what) {
  app->add_option("--beta-x", w.bx, what + " weight along x")->capture_default_str();
  app->add_option("--beta-y", w.by, what + " weight along y")->capture_default_str();
  app->add_option("--beta-z", w.bz, what + " weight along z")->capture_default_str();
}

void add_solver(CLI::App* app, SolverParams& p, const std::string& prefix = "") {
  add_enum(app, "--" + prefix + "scheme", p.scheme, kSchemes, "constant, linear or hybrid");
  app->add_option("--" + prefix + "v-cycles", p.v_cycles, "V-cycles")->capture_default_str();
  app->add_option("--" + prefix + "relax-passes", p.relax_passes, "relaxation passes per level")->capture_default_str();
  app->add_option("--" + prefix + "gs-iters", p.gs_iters, "Gauss-Seidel sweeps per pass")->capture_default_str();
  add_enum(app, "--" + prefix + "precision", p.precision, kWork, "working precision f32 or f64");
  add_enum(app, "--" + prefix + "order", p.order, kOrders, "multicolor or lexicographic");
  app->add_option("--" + prefix + "coarsest-max-voxels", p.coarsest_max_voxels, "direct-solve size limit")
      ->capture_default_str();
}

void add_blend(CLI::App* app, BlendParams& p, const std::string& prefix) {
  app->add_option("--alpha", p.alpha, "screening weight of the blend")->capture_default_str();
  add_enum(app, "--" + prefix + "scheme", p.scheme, kSchemes, "constant, linear or hybrid");
  app->add_option("--" + prefix + "v-cycles", p.v_cycles, "V-cycles per slice")->capture_default_str();
  app->add_option("--" + prefix + "relax-passes", p.relax_passes, "relaxation passes per level")->capture_default_str();
  app->add_option("--" + prefix + "gs-iters", p.gs_iters, "Gauss-Seidel sweeps per pass")->capture_default_str();
  add_enum(app, "--" + prefix + "precision", p.precision, kWork, "working precision f32 or f64");
  app->add_option("--" + prefix + "coarsest-max-voxels", p.coarsest_max_voxels, "direct-solve size limit")
      ->capture_default_str();
}

void add_engine(CLI::App* app, EngineOptions& e) {
  add_enum(app, "--engine", e.kind, kEngines, "auto, memory or streaming");
  app->add_option("--in-core-max-voxels", e.in_core_max_voxels, "auto: largest volume solved in memory")
      ->capture_default_str();
  app->add_option("--temp-dir", e.stream.temp_dir, "scratch directory");
  add_enum(app, "--scratch-precision", e.stream.scratch, kStored, "scratch slice precision f16, f32 or f64");
  app->add_option("--prefetch-depth", e.stream.prefetch_depth, "slices read ahead")->capture_default_str();
  app->add_flag("!--no-overlap-io", e.stream.overlap_io, "do I/O on the solver thread");
  app->add_flag("--keep-scratch", e.stream.keep_scratch, "leave scratch files in place");
  app->add_option("--window-capacity", e.stream.window_capacity, "slices per level window (0: budget)")
      ->capture_default_str();
}

void add_io(CLI::App* app, JobConfig& c, bool needs_input = true) {
  auto* in = app->add_option("-i,--input", c.input, "input VXG1 volume");
  if (needs_input) in->required()->check(CLI::ExistingFile);
  app->add_option("-o,--output", c.output, "output VXG1 volume")->required();
  add_enum(app, "--output-precision", c.output_precision, kStored, "u8, f16, f32 or f64");
}

void add_common(CLI::App* app, JobConfig& c) {
  app->add_option("--threads", c.threads, "worker threads (0: default)")->capture_default_str();
}

void summarize(const ConvergenceReport& r, std::ostream& out) {
  out << "engine=" << r.engine << " cycles=" << r.ratios.size() << " initial_ratio=" << r.initial_ratio;
  if (!r.ratios.empty()) out << " residual_ratio=" << r.ratios.back() << " decay_rate=" << r.decay_rate();
  out << '\n';
}

void finish(const ConvergenceReport& r, const JobConfig& c, std::ostream& out) {
  summarize(r, out);
  if (!c.report.empty()) r.write_csv(c.report);
}

void apply_threads(JobConfig& c) {
  if (c.threads < 0) throw ParameterError("--threads must be >= 0");
  if (c.threads == 0) return;
  for (SolverParams* p : {&c.diffusion.solver, &c.npr.solver, &c.solver}) p->threads = c.threads;
  c.blend.threads = c.threads;
}

LinkField read_links(const std::array<std::filesystem::path, 3>& files, GridDims dims) {
  LinkField g(dims);
  for (int a = 0; a < 3; ++a) {
    if (files[a].empty()) continue;
    const VoxelVolume v = read_volume(files[a]);
    if (!(v.dims() == g.link_dims(a)))
      throw DimensionMismatchError("gradient file " + files[a].string() + " has dims " + to_string(v.dims()) +
                                   ", expected " + to_string(g.link_dims(a)));
    auto src = v.values();
    std::copy(src.begin(), src.end(), g.links[a].begin());
  }
  return g;
}

struct SolveFiles {
  std::filesystem::path values, constraints, initial;
  std::array<std::filesystem::path, 3> gradient;
  std::string mask = "xy";
  std::optional<double> mean;
  SystemSpec spec;
};

void run_solve(JobConfig& c, SolveFiles& f, std::ostream& out) {
  SystemSpec& s = f.spec;
  std::optional<GridDims> dims;
  auto take = [&](const std::filesystem::path& p) {
    VoxelVolume v = read_volume(p);
    if (dims && !(*dims == v.dims()))
      throw DimensionMismatchError(p.string() + " has dims " + to_string(v.dims()) + ", expected " + to_string(*dims));
    dims = v.dims();
    return v;
  };
  if (!f.values.empty()) s.value_target = take(f.values);
  if (!f.constraints.empty()) s.constraints = take(f.constraints);
  if (!f.initial.empty()) s.initial_guess = take(f.initial);
  if (!dims) throw ParameterError("solve needs --values, --constraints or --initial to fix the grid");
  if (std::any_of(f.gradient.begin(), f.gradient.end(), [](const auto& p) { return !p.empty(); }))
    s.gradient = read_links(f.gradient, *dims);
  s.rule.mask = {false, false, false};
  for (char ch : f.mask) {
    if (ch == 'x') s.rule.mask[0] = true;
    else if (ch == 'y') s.rule.mask[1] = true;
    else if (ch == 'z') s.rule.mask[2] = true;
    else throw ParameterError("--mask takes letters from xyz");
  }
  s.mean_target = f.mean;
  SolveResult r = solve(s, *dims, c.solver);
  write_volume(r.solution, c.output, c.output_precision);
  finish(r.report, c, out);
}

void run_spectral(const JobConfig& c, const SpectralParams& p, bool diffuse_only, std::ostream& out) {
  const Volume<double> in = read_volume(c.input).cast<double>();
  const SpectralResult r = diffuse_only ? spectral_diffuse(in, p) : spectral_pipeline(in, p);
  write_volume(r.volume, c.output, c.output_precision);
  out << "imaginary_residue=" << r.imaginary_residue << '\n';
}

std::vector<Scheme> parse_schemes(const std::vector<std::string>& names) {
  std::vector<Scheme> out;
  for (const std::string& n : names) out.push_back(parse_scheme(n));
  return out;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  JobConfig c;
  CLI::App app{"Gradient-domain processing of large voxel volumes", "gdvol"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value file; options of a subcommand go under its [section]");
  app.allow_config_extras(CLI::config_extras_mode::error);

  auto* diffuse = app.add_subcommand("diffuse", "anisotropic diffusion across slices");
  add_common(diffuse, c);
  add_io(diffuse, c);
  add_weights(diffuse, c.diffusion.beta, "diffusion");
  add_enum(diffuse, "--boundary", c.diffusion.boundary, kBoundaries, "neumann or periodic");
  add_solver(diffuse, c.diffusion.solver);
  add_engine(diffuse, c.engine);
  diffuse->add_option("--report", c.report, "per-cycle CSV report");

  auto* blend = app.add_subcommand("blend", "per-slice screened blend of two volumes");
  add_common(blend, c);
  blend->add_option("-i,--input,--i0", c.input, "volume whose in-slice gradients are kept")
      ->required()
      ->check(CLI::ExistingFile);
  blend->add_option("--i1", c.input_i1, "volume whose values are kept")->required()->check(CLI::ExistingFile);
  blend->add_option("-o,--output", c.output, "output VXG1 volume")->required();
  add_enum(blend, "--output-precision", c.output_precision, kStored, "u8, f16, f32 or f64");
  add_enum(blend, "--boundary", c.blend.boundary, kBoundaries, "neumann or periodic");
  add_blend(blend, c.blend, "");

  auto* destripe = app.add_subcommand("destripe", "remove per-slice brightness differences");
  add_common(destripe, c);
  add_io(destripe, c);
  add_weights(destripe, c.diffusion.beta, "diffusion");
  add_solver(destripe, c.diffusion.solver);
  add_blend(destripe, c.blend, "blend-");
  add_engine(destripe, c.engine);
  std::filesystem::path keep_intermediate;
  destripe->add_option("--keep-intermediate", keep_intermediate, "write the diffused volume here and keep it");
  destripe->add_option("--report", c.report, "per-cycle CSV report of the diffusion");

  auto* npr = app.add_subcommand("npr", "suppress small gradients");
  add_common(npr, c);
  add_io(npr, c);
  npr->add_option("--lambda", c.npr.lambda, "gain amplitude")->capture_default_str();
  npr->add_option("--sigma", c.npr.sigma, "gain width")->capture_default_str();
  npr->add_option("--alpha", c.npr.alpha, "screening weight")->capture_default_str();
  add_weights(npr, c.npr.weights, "gradient");
  add_solver(npr, c.npr.solver);
  add_engine(npr, c.engine);
  npr->add_option("--report", c.report, "per-cycle CSV report");

  SolveFiles sf;
  auto* solve_cmd = app.add_subcommand("solve", "solve a system given by files");
  add_common(solve_cmd, c);
  solve_cmd->add_option("--values", sf.values, "value target I0")->check(CLI::ExistingFile);
  solve_cmd->add_option("--constraints", sf.constraints, "precomputed right-hand side")->check(CLI::ExistingFile);
  solve_cmd->add_option("--gradient-x", sf.gradient[0], "x links, dims (nx-1,ny,nz)")->check(CLI::ExistingFile);
  solve_cmd->add_option("--gradient-y", sf.gradient[1], "y links, dims (nx,ny-1,nz)")->check(CLI::ExistingFile);
  solve_cmd->add_option("--gradient-z", sf.gradient[2], "z links, dims (nx,ny,nz-1)")->check(CLI::ExistingFile);
  solve_cmd->add_option("--initial", sf.initial, "initial guess")->check(CLI::ExistingFile);
  solve_cmd->add_option("--alpha", sf.spec.alpha, "screening weight")->capture_default_str();
  sf.spec.weights = {1.0, 1.0, 1.0};
  add_weights(solve_cmd, sf.spec.weights, "gradient");
  add_enum(solve_cmd, "--boundary", sf.spec.boundary, kBoundaries, "neumann or periodic");
  add_enum(solve_cmd, "--rule", sf.spec.rule.kind, kRules, "gradient target from I0: zero, masked or npr");
  solve_cmd->add_option("--mask", sf.mask, "masked rule axes")->capture_default_str();
  solve_cmd->add_option("--lambda", sf.spec.rule.lambda, "npr rule gain amplitude")->capture_default_str();
  solve_cmd->add_option("--sigma", sf.spec.rule.sigma, "npr rule gain width")->capture_default_str();
  solve_cmd->add_option("--mean", sf.mean, "output mean of a singular system");
  solve_cmd->add_option("-o,--output", c.output, "output VXG1 volume")->required();
  add_enum(solve_cmd, "--output-precision", c.output_precision, kStored, "u8, f16, f32 or f64");
  add_solver(solve_cmd, c.solver);
  solve_cmd->add_option("--report", c.report, "per-cycle CSV report");

  SpectralParams sp;
  bool diffuse_only = false;
  auto* spectral = app.add_subcommand("spectral", "Fourier-domain filter on a periodic grid");
  add_common(spectral, c);
  add_io(spectral, c);
  spectral->add_option("--alpha", sp.alpha, "screening weight of the blend")->capture_default_str();
  add_weights(spectral, sp.beta, "diffusion");
  add_enum(spectral, "--mode", sp.mode, kModes, "discrete or continuous frequency symbols");
  spectral->add_flag("--diffuse-only", diffuse_only, "apply the diffusion gain only");

  int budget_k = 3, budget_depth = 1;
  Scheme budget_scheme = Scheme::hybrid;
  auto* budget = app.add_subcommand("budget", "slices a streamed level holds");
  budget->add_option("--gs-iters", budget_k, "Gauss-Seidel sweeps per pass")->capture_default_str();
  add_enum(budget, "--scheme", budget_scheme, kSchemes, "constant, linear or hybrid");
  budget->add_option("--prefetch-depth", budget_depth, "slices read ahead")->capture_default_str();

  BenchSetup bs;
  std::vector<std::string> bench_schemes{"constant", "hybrid", "linear"};
  std::size_t bench_size = 0;
  std::vector<std::size_t> bench_dims;
  std::filesystem::path bench_out;
  auto* bench = app.add_subcommand("bench", "residual decay per V-cycle for each scheme");
  add_common(bench, c);
  bench->add_option("--schemes", bench_schemes, "schemes to run")->delimiter(',')->capture_default_str();
  bench->add_option("--cycles", bs.cycles, "V-cycles")->capture_default_str();
  add_enum(bench, "--precision", bs.precision, kWork, "working precision f32 or f64");
  bench->add_option("--size", bench_size, "cube edge length");
  bench->add_option("--dims", bench_dims, "nx,ny,nz")->delimiter(',')->expected(3)->excludes("--size");
  bench->add_option("--beta-z", bs.beta.bz, "diffusion weight along z")->capture_default_str();
  bench->add_option("--relax-passes", bs.relax_passes, "relaxation passes per level")->capture_default_str();
  bench->add_option("--gs-iters", bs.gs_iters, "Gauss-Seidel sweeps per pass")->capture_default_str();
  bench->add_option("--seed", bs.seed, "synthetic volume seed")->capture_default_str();
  bench->add_option("-o,--output", bench_out, "CSV file (default: standard output)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }

  apply_threads(c);
  if (*diffuse) {
    finish(anisotropic_diffuse_file(c.input, c.output, c.output_precision, c.diffusion, c.engine), c, out);
  } else if (*blend) {
    per_slice_stream_solve(c.input, c.input_i1, c.output, c.output_precision, c.blend);
  } else if (*destripe) {
    DestripeOptions o{c.engine, c.output_precision, std::nullopt};
    if (!keep_intermediate.empty()) o.keep_intermediate = keep_intermediate;
    finish(destripe_pipeline(c.input, c.output, c.diffusion, c.blend, o), c, out);
  } else if (*npr) {
    finish(npr_filter_file(c.input, c.output, c.output_precision, c.npr, c.engine), c, out);
  } else if (*solve_cmd) {
    run_solve(c, sf, out);
  } else if (*spectral) {
    run_spectral(c, sp, diffuse_only, out);
  } else if (*budget) {
    const WindowBudget b = window_budget(budget_k, budget_scheme, budget_depth);
    out << "constraints=" << b.constraint_slices << " solution=" << b.solution_slices << " total=" << b.total << '\n';
  } else if (*bench) {
    if (bench_size > 0) bs.dims = {bench_size, bench_size, bench_size};
    if (!bench_dims.empty()) bs.dims = {bench_dims[0], bench_dims[1], bench_dims[2]};
    const auto rows = residual_decay_study(bs, parse_schemes(bench_schemes));
    if (bench_out.empty()) {
      write_bench_csv(rows, out);
    } else {
      std::ofstream f(bench_out);
      if (!f) throw IoError("cannot write " + bench_out.string());
      write_bench_csv(rows, f);
    }
  }
  return ok;
}

}  // namespace

std::string config_snapshot(const JobConfig& c) {
  std::ostringstream s;
  auto weights = [&](const WeightTensor& w) { s << w.bx << ',' << w.by << ',' << w.bz << '\n'; };
  auto solver = [&](const std::string& p, const SolverParams& v) {
    s << p << ".scheme=" << to_string(v.scheme) << '\n'
      << p << ".v_cycles=" << v.v_cycles << '\n'
      << p << ".relax_passes=" << v.relax_passes << '\n'
      << p << ".gs_iters=" << v.gs_iters << '\n'
      << p << ".precision=" << name(v.precision) << '\n'
      << p << ".order=" << name(v.order) << '\n'
      << p << ".coarsest_max_voxels=" << v.coarsest_max_voxels << '\n';
  };
  s << "diffusion.beta=";
  weights(c.diffusion.beta);
  s << "diffusion.boundary=" << name(c.diffusion.boundary) << '\n';
  solver("diffusion", c.diffusion.solver);
  s << "blend.alpha=" << c.blend.alpha << '\n'
    << "blend.scheme=" << to_string(c.blend.scheme) << '\n'
    << "blend.v_cycles=" << c.blend.v_cycles << '\n'
    << "blend.relax_passes=" << c.blend.relax_passes << '\n'
    << "blend.gs_iters=" << c.blend.gs_iters << '\n'
    << "blend.precision=" << name(c.blend.precision) << '\n'
    << "blend.coarsest_max_voxels=" << c.blend.coarsest_max_voxels << '\n'
    << "blend.boundary=" << name(c.blend.boundary) << '\n';
  s << "npr.lambda=" << c.npr.lambda << '\n' << "npr.sigma=" << c.npr.sigma << '\n' << "npr.alpha=" << c.npr.alpha << '\n';
  s << "npr.weights=";
  weights(c.npr.weights);
  solver("npr", c.npr.solver);
  solver("solver", c.solver);
  s << "engine.kind=" << name(c.engine.kind) << '\n'
    << "engine.in_core_max_voxels=" << c.engine.in_core_max_voxels << '\n'
    << "stream.temp_dir=" << c.engine.stream.temp_dir.string() << '\n'
    << "stream.scratch=" << to_string(c.engine.stream.scratch) << '\n'
    << "stream.prefetch_depth=" << c.engine.stream.prefetch_depth << '\n'
    << "stream.overlap_io=" << (c.engine.stream.overlap_io ? "true" : "false") << '\n'
    << "stream.keep_scratch=" << (c.engine.stream.keep_scratch ? "true" : "false") << '\n'
    << "stream.window_capacity=" << c.engine.stream.window_capacity << '\n'
    << "output_precision=" << to_string(c.output_precision) << '\n'
    << "threads=" << c.threads << '\n';
  return s.str();
}

std::vector<BenchRow> residual_decay_study(const BenchSetup& setup, const std::vector<Scheme>& schemes) {
  StripeSpec stripes;
  stripes.seed = setup.seed;
  SystemSpec spec;
  spec.alpha = 0.0;
  spec.weights = setup.beta;
  spec.value_target = striped_volume(setup.dims, stripes);
  spec.rule.kind = GradientRule::Kind::masked;
  spec.rule.mask = {true, true, false};
  std::vector<BenchRow> rows;
  for (Scheme s : schemes) {
    SolverParams p;
    p.scheme = s;
    p.v_cycles = setup.cycles;
    p.relax_passes = setup.relax_passes;
    p.gs_iters = setup.gs_iters;
    p.precision = setup.precision;
    const SolveResult r = solve(spec, setup.dims, p);
    for (std::size_t i = 0; i < r.report.ratios.size(); ++i)
      rows.push_back({s, static_cast<int>(i) + 1, r.report.ratios[i], r.report.seconds[i]});
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << "scheme,cycle,residual_ratio,seconds\n";
  const auto old = out.precision(6);
  for (const BenchRow& r : rows)
    out << to_string(r.scheme) << ',' << r.cycle << ',' << std::scientific << r.residual_ratio << std::defaultfloat
        << ',' << r.seconds << '\n';
  out.precision(old);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return io;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return io;
  } catch (const std::ios_base::failure& e) {
    err << "I/O error: " << e.what() << '\n';
    return io;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return numerical;
  } catch (const std::bad_alloc&) {
    err << "numerical failure: out of memory\n";
    return numerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return numerical;
  }
}

}  // namespace gdvol::cli
