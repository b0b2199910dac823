#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gdvol/filters/filters.hpp"
#include "gdvol/spectral/spectral.hpp"

namespace gdvol::cli {

enum ExitCode : int { ok = 0, usage = 1, io = 2, numerical = 3 };

/// Every knob a job can set.
struct JobConfig {
  std::string command;
  std::filesystem::path input, input_i1, output, report;
  Precision output_precision = Precision::binary32;
  DiffusionParams diffusion{};
  BlendParams blend{};
  NprParams npr{};
  SolverParams solver{};  // `solve` and `bench`
  EngineOptions engine{};
  int threads = 0;
};

/// key=value lines for every parameter of `c`, in a fixed order.
[[nodiscard]] std::string config_snapshot(const JobConfig& c);

struct BenchRow {
  Scheme scheme = Scheme::hybrid;
  int cycle = 0;
  double residual_ratio = 0.0;
  double seconds = 0.0;
};

struct BenchSetup {
  GridDims dims{128, 128, 128};
  WeightTensor beta{1.0, 1.0, 0.1};
  int cycles = 10;
  int relax_passes = 3;
  int gs_iters = 3;
  WorkPrecision precision = WorkPrecision::binary64;
  std::uint64_t seed = 1;
};

/// Anisotropic diffusion of a synthetic striped volume from a zero start,
/// one solve per scheme; one row per V-cycle.
[[nodiscard]] std::vector<BenchRow> residual_decay_study(const BenchSetup& setup, const std::vector<Scheme>& schemes);

/// CSV with header scheme,cycle,residual_ratio,seconds.
void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out);

/// Runs one command line (without the program name). Never throws.
[[nodiscard]] int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gdvol::cli
