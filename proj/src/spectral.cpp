#include "gdvol/spectral/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "gdvol/errors.hpp"

namespace gdvol {

double diffusion_gain_sq(double k2, double l2, double m2, const WeightTensor& beta) {
  const double num = beta[0] * k2 + beta[1] * l2;
  const double den = num + beta[2] * m2;
  return den > 0.0 ? num / den : 1.0;
}

double filter_coefficient_sq(double k2, double l2, double m2, const WeightTensor& beta, double alpha) {
  const double den = alpha + k2 + l2;
  if (!(den > 0.0)) return 1.0;
  return (alpha * diffusion_gain_sq(k2, l2, m2, beta) + k2 + l2) / den;
}

double diffusion_gain(double k, double l, double m, const WeightTensor& beta) {
  return diffusion_gain_sq(k * k, l * l, m * m, beta);
}

double filter_coefficient(double k, double l, double m, const WeightTensor& beta, double alpha) {
  return filter_coefficient_sq(k * k, l * l, m * m, beta, alpha);
}

double axis_symbol(std::size_t j, std::size_t n, SymbolMode mode) {
  const double pi = std::numbers::pi;
  if (mode == SymbolMode::discrete) {
    const double s = std::sin(pi * static_cast<double>(j) / static_cast<double>(n));
    return 4.0 * s * s;
  }
  const long js = 2 * j > n ? static_cast<long>(j) - static_cast<long>(n) : static_cast<long>(j);
  const double w = 2.0 * pi * static_cast<double>(js) / static_cast<double>(n);
  return w * w;
}

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

using Gain = std::function<double(double, double, double)>;

SpectralResult apply_gain(const Volume<double>& in, SymbolMode mode, const Gain& gain) {
  const GridDims d = in.dims();
  const std::size_t n = d.voxel_count();
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (!buf) throw std::bad_alloc();
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> guard(buf, &fftw_free);
  fftw_plan forward, backward;
  {
    std::lock_guard lock(plan_mutex());
    // slice-major storage: z is the slowest axis
    forward = fftw_plan_dft_3d(static_cast<int>(d.nz), static_cast<int>(d.ny), static_cast<int>(d.nx), buf, buf,
                               FFTW_FORWARD, FFTW_ESTIMATE);
    backward = fftw_plan_dft_3d(static_cast<int>(d.nz), static_cast<int>(d.ny), static_cast<int>(d.nx), buf, buf,
                                FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  if (!forward || !backward) throw NumericalError("FFT planning failed");

  auto values = in.values();
  for (std::size_t i = 0; i < n; ++i) {
    buf[i][0] = values[i];
    buf[i][1] = 0.0;
  }
  fftw_execute(forward);
  std::vector<double> kx(d.nx), ky(d.ny), kz(d.nz);
  for (std::size_t j = 0; j < d.nx; ++j) kx[j] = axis_symbol(j, d.nx, mode);
  for (std::size_t j = 0; j < d.ny; ++j) ky[j] = axis_symbol(j, d.ny, mode);
  for (std::size_t j = 0; j < d.nz; ++j) kz[j] = axis_symbol(j, d.nz, mode);
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        const double g = gain(kx[x], ky[y], kz[z]) / static_cast<double>(n);
        buf[i][0] *= g;
        buf[i][1] *= g;
      }
  fftw_execute(backward);
  {
    std::lock_guard lock(plan_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }

  SpectralResult r{Volume<double>(d), 0.0};
  auto out = r.volume.mutable_values();
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = buf[i][0];
    re += buf[i][0] * buf[i][0];
    im += buf[i][1] * buf[i][1];
  }
  r.imaginary_residue = re > 0.0 ? std::sqrt(im / re) : std::sqrt(im);
  return r;
}

}  // namespace

SpectralResult spectral_pipeline(const Volume<double>& i0, const SpectralParams& p) {
  p.beta.validate();
  if (!(p.alpha >= 0.0)) throw ParameterError("alpha must be non-negative");
  return apply_gain(i0, p.mode, [&](double k2, double l2, double m2) {
    return filter_coefficient_sq(k2, l2, m2, p.beta, p.alpha);
  });
}

SpectralResult spectral_diffuse(const Volume<double>& i0, const SpectralParams& p) {
  p.beta.validate();
  return apply_gain(i0, p.mode, [&](double k2, double l2, double m2) { return diffusion_gain_sq(k2, l2, m2, p.beta); });
}

}  // namespace gdvol
