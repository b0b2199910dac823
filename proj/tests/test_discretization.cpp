#include <doctest.h>

#include <cmath>

#include "gdvol/discretization/operator.hpp"
#include "gdvol/discretization/stencil.hpp"
#include "gdvol/mgsolver/multigrid.hpp"
#include "generators.hpp"
#include "oracle.hpp"

using namespace gdvol;
using oracle::MatrixXd;

namespace {

MatrixXd assemble(const LevelOperator& op) {
  const GridDims d = op.dims();
  const bool periodic = op.boundary() == Boundary::periodic;
  const auto n = static_cast<Eigen::Index>(d.voxel_count());
  MatrixXd a = MatrixXd::Zero(n, n);
  auto step = [&](std::size_t i, int di, std::size_t len, std::size_t& out) {
    const long j = static_cast<long>(i) + di;
    if (j < 0 || j >= static_cast<long>(len)) {
      if (!periodic) return false;
      out = static_cast<std::size_t>((j + static_cast<long>(len)) % static_cast<long>(len));
      return true;
    }
    out = static_cast<std::size_t>(j);
    return true;
  };
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x)
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              std::size_t xx, yy, zz;
              if (!step(x, dx, d.nx, xx) || !step(y, dy, d.ny, yy) || !step(z, dz, d.nz, zz)) continue;
              const double c = op.coefficient(x, y, z, dx, dy, dz);
              if (c == 0.0) continue;
              a(static_cast<Eigen::Index>(d.index(x, y, z)), static_cast<Eigen::Index>(d.index(xx, yy, zz))) += c;
            }
  return a;
}

MatrixXd dense_prolong(Scheme s, GridDims d, bool periodic) {
  std::array<MatrixXd, 3> p;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 1) p[a] = MatrixXd::Identity(1, 1);
    else p[a] = periodic ? oracle::prolongation_1d_periodic(s, d[a]) : oracle::prolongation_1d(s, d[a]);
  }
  return oracle::kron3(p[0], p[1], p[2]);
}

MatrixXd library_prolong_1d(const Transfer1D& t) {
  MatrixXd p = MatrixXd::Zero(static_cast<Eigen::Index>(t.fine_size()), static_cast<Eigen::Index>(t.coarse_size()));
  for (std::size_t f = 0; f < t.fine_size(); ++f)
    for (auto tap : t.prolong_row(f)) p(static_cast<Eigen::Index>(f), tap.index) += tap.weight;
  return p;
}

MatrixXd library_restrict_1d(const Transfer1D& t) {
  MatrixXd r = MatrixXd::Zero(static_cast<Eigen::Index>(t.coarse_size()), static_cast<Eigen::Index>(t.fine_size()));
  for (std::size_t c = 0; c < t.coarse_size(); ++c)
    for (auto tap : t.restrict_row(c)) r(static_cast<Eigen::Index>(c), tap.index) += tap.weight;
  return r;
}

Scheme transfer_scheme(Scheme s) { return s == Scheme::constant ? Scheme::constant : Scheme::linear; }

}  // namespace

TEST_CASE("finest stencils") {
  const Stencil3D iso = laplacian_stencil(Scheme::constant, {1, 1, 1}, 0.0, 0);
  CHECK(iso.center() == 6.0);
  for (auto [dx, dy, dz] : {std::array{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}})
    CHECK(iso(dx, dy, dz) == -1.0);
  CHECK(iso.support_size() == 7);

  const Stencil3D slice = laplacian_stencil(Scheme::constant, {1, 1, 0}, 0.0, 0);
  CHECK(slice.center() == 4.0);
  CHECK(slice(1, 0, 0) == -1.0);
  CHECK(slice(0, -1, 0) == -1.0);
  CHECK(slice(0, 0, 1) == 0.0);
  CHECK(slice.support_size() == 5);

  const Stencil3D aniso = laplacian_stencil(Scheme::constant, {1, 1, 0.1}, 0.0, 0);
  CHECK(aniso.center() == doctest::Approx(4.2));
  CHECK(aniso(0, 1, 0) == -1.0);
  CHECK(aniso(0, 0, -1) == doctest::Approx(-0.1));
  CHECK(std::abs(aniso.row_sum()) < 1e-15);

  CHECK(laplacian_stencil(Scheme::hybrid, {1, 1, 0.1}, 0.5, 0).coeffs == laplacian_stencil(Scheme::constant, {1, 1, 0.1}, 0.5, 0).coeffs);
  CHECK_THROWS_AS(laplacian_stencil(Scheme::constant, {1, -1, 1}, 0.0, 0), ParameterError);
  CHECK_THROWS_AS(laplacian_stencil(Scheme::constant, {1, 1, 1}, -0.5, 0), ParameterError);
}

TEST_CASE("coarse stencils: support, symmetry and row sums") {
  gen::for_all(20, 100, [](gen::Gen& g, std::uint64_t seed) {
    CAPTURE(seed);
    const Scheme s = g.scheme();
    const WeightTensor w = g.weights(0.05, 2.0);
    for (int level = 0; level < 4; ++level) {
      const Stencil3D st = laplacian_stencil(s, w, 0.0, level);
      CHECK(st.symmetric());
      CHECK(std::abs(st.row_sum()) < 1e-12 * st.center());
    }
  });
  const Stencil3D h0 = laplacian_stencil(Scheme::hybrid, {1, 1, 0.1}, 0.0, 0);
  const Stencil3D h1 = laplacian_stencil(Scheme::hybrid, {1, 1, 0.1}, 0.0, 1);
  CHECK(h0.support_size() == 7);
  CHECK(h1.support_size() == 27);
  // trilinear elements: face couplings cancel, edges and corners remain
  const Stencil3D fe = laplacian_stencil(Scheme::linear, {1, 1, 1}, 0.0, 0);
  CHECK(fe.support_size() == 21);
  CHECK(fe(1, 0, 0) == doctest::Approx(0.0));
  CHECK(fe(1, 1, 0) == doctest::Approx(-1.0 / 6.0));
  CHECK(fe(1, 1, 1) == doctest::Approx(-1.0 / 12.0));
  CHECK(fe.center() == doctest::Approx(8.0 / 3.0));
  CHECK(laplacian_stencil(Scheme::constant, {1, 1, 1}, 0.0, 2).support_size() == 7);
}

TEST_CASE("identity prolongation leaves a stencil unchanged") {
  gen::Gen g(7);
  Stencil3D a;
  for (double& c : a.coeffs) c = g.uniform(-1, 1);
  const Stencil3D same = galerkin_coarsen(a, TransferStencil::uniform(Taps1D::identity()));
  for (int i = 0; i < 27; ++i) CHECK(same.coeffs[i] == doctest::Approx(a.coeffs[i]).epsilon(1e-15));
}

TEST_CASE("transfers wider than the stencil box are rejected") {
  const Stencil3D a = laplacian_stencil(Scheme::constant, {1, 1, 1}, 0.0, 0);
  const Taps1D wide{2, -2, {0.25, 0.5, 1.0, 0.5, 0.25}};
  CHECK_THROWS_AS(galerkin_coarsen(a, TransferStencil::uniform(wide)), UnsupportedStencilError);
}

TEST_CASE("1D periodic second difference keeps its shape under linear coarsening") {
  const std::size_t n = 16;
  const Band1D a = Band1D::stiffness(n, true);
  const Transfer1D t(Transfer1D::Kind::linear, n, true);
  const Band1D c = galerkin_1d(a, t);
  // oracle: R A P with R = P^T / 2
  const MatrixXd p = oracle::prolongation_1d_periodic(Scheme::linear, n);
  MatrixXd fine = MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    fine(i, i) = 2;
    fine(i, (i + 1) % n) = -1;
    fine(i, (i + n - 1) % n) = -1;
  }
  const MatrixXd rap = p.transpose() * fine * p / 2.0;
  for (std::size_t i = 0; i < n / 2; ++i) {
    CHECK(c.di[i] == doctest::Approx(rap(i, i)));
    CHECK(c.up[i] == doctest::Approx(rap(i, (i + 1) % (n / 2))));
    CHECK(c.lo[i] == doctest::Approx(rap(i, (i + n / 2 - 1) % (n / 2))));
    CHECK(c.up[i] == doctest::Approx(-0.5 * c.di[i]));
    CHECK(c.lo[i] == doctest::Approx(-0.5 * c.di[i]));
  }
  CHECK(c.di[0] == doctest::Approx(0.5));  // (-1, 2, -1) / 4
}

TEST_CASE("transfer matrices match their definitions and are adjoint") {
  for (Transfer1D::Kind kind : {Transfer1D::Kind::constant, Transfer1D::Kind::linear}) {
    const Scheme s = kind == Transfer1D::Kind::constant ? Scheme::constant : Scheme::linear;
    for (std::size_t n = 2; n <= 13; ++n) {
      CAPTURE(n);
      const Transfer1D t(kind, n, false);
      const MatrixXd p = library_prolong_1d(t);
      const MatrixXd ref = oracle::prolongation_1d(s, n);
      REQUIRE(p.rows() == ref.rows());
      REQUIRE(p.cols() == ref.cols());
      CHECK((p - ref).cwiseAbs().maxCoeff() == 0.0);
      CHECK((library_restrict_1d(t) - p.transpose() / 2.0).cwiseAbs().maxCoeff() < 1e-15);
      if (n % 2 == 0) {
        const Transfer1D tp(kind, n, true);
        CHECK((library_prolong_1d(tp) - oracle::prolongation_1d_periodic(s, n)).cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }
  CHECK_THROWS_AS(Transfer1D(Transfer1D::Kind::linear, 7, true), ConfigError);
}

TEST_CASE("adjointness <P c, f> = 8 <c, R f> on 3D grids") {
  gen::for_all(10, 300, [](gen::Gen& g, std::uint64_t seed) {
    CAPTURE(seed);
    const GridDims d = g.dims(2, 9);
    const Scheme s = g.scheme();
    const Transfer3D t = level_transfers(s, d, Boundary::neumann);
    std::array<MatrixXd, 3> p, r;
    for (int a = 0; a < 3; ++a) {
      p[a] = library_prolong_1d(t[a]);
      r[a] = library_restrict_1d(t[a]);
    }
    const MatrixXd p3 = oracle::kron3(p[0], p[1], p[2]);
    const MatrixXd r3 = oracle::kron3(r[0], r[1], r[2]);
    const Eigen::VectorXd c = Eigen::VectorXd::Random(p3.cols());
    const Eigen::VectorXd f = Eigen::VectorXd::Random(p3.rows());
    CHECK((p3 * c).dot(f) == doctest::Approx(8.0 * c.dot(r3 * f)).epsilon(1e-12));
  });
}

TEST_CASE("constant prolongation copies into the eight children") {
  const GridDims d{6, 4, 8};
  const Transfer3D t = level_transfers(Scheme::constant, d, Boundary::neumann);
  for (int a = 0; a < 3; ++a)
    for (std::size_t f = 0; f < d[a]; ++f) {
      const auto row = t[a].prolong_row(f);
      REQUIRE(row.size() == 1);
      CHECK(row[0].index == f / 2);
      CHECK(row[0].weight == 1.0);
    }
}

TEST_CASE("linear prolongation reproduces ramps") {
  for (std::size_t n = 3; n <= 20; ++n) {
    const MatrixXd p = library_prolong_1d(Transfer1D(Transfer1D::Kind::linear, n, false));
    Eigen::VectorXd coarse(p.cols());
    for (Eigen::Index i = 0; i < coarse.size(); ++i) coarse[i] = 3.0 + 2.0 * static_cast<double>(2 * i);
    const Eigen::VectorXd fine = p * coarse;
    for (Eigen::Index i = 0; i < fine.size(); ++i) CHECK(fine[i] == doctest::Approx(3.0 + 2.0 * static_cast<double>(i)));
  }
}

TEST_CASE("adjacent -1/+1 residual pair: constant restriction loses it, linear keeps it") {
  const std::size_t n = 16;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
  r[6] = -1.0;  // fine 6 and 7 share the constant coarse cell 3
  r[7] = 1.0;
  const MatrixXd rc = library_restrict_1d(Transfer1D(Transfer1D::Kind::constant, n, false));
  const MatrixXd rl = library_restrict_1d(Transfer1D(Transfer1D::Kind::linear, n, false));
  CHECK((rc * r).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rl * r).cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("fine operators equal the first-principles assembly") {
  gen::for_all(30, 500, [](gen::Gen& g, std::uint64_t seed) {
    CAPTURE(seed);
    const GridDims d = g.dims(1, 6);
    const Scheme s = g.scheme();
    const WeightTensor w = g.weights(0.0, 2.0);
    const double alpha = g.coin() ? 0.0 : g.uniform(0.01, 1.0);
    const LevelOperator op = fine_operator(s, w, alpha, d, Boundary::neumann);
    const auto ref = oracle::dense_system(s, w, alpha, d);
    CHECK((assemble(op) - ref.a).cwiseAbs().maxCoeff() < 1e-12);
  });
  gen::for_all(10, 550, [](gen::Gen& g, std::uint64_t seed) {
    CAPTURE(seed);
    const GridDims d{2 * g.size(2, 4), 2 * g.size(2, 4), 2 * g.size(2, 4)};
    const Scheme s = g.scheme();
    const WeightTensor w = g.weights(0.0, 2.0);
    const double alpha = g.uniform(0.0, 1.0);
    const LevelOperator op = fine_operator(s, w, alpha, d, Boundary::periodic);
    const auto ref = oracle::dense_system(s, w, alpha, d, true);
    CHECK((assemble(op) - ref.a).cwiseAbs().maxCoeff() < 1e-12);
  });
}

TEST_CASE("Galerkin coarse operators equal brute-force R A P") {
  gen::for_all(25, 700, [](gen::Gen& g, std::uint64_t seed) {
    CAPTURE(seed);
    const GridDims d = g.dims(2, 9);
    const Scheme s = g.scheme();
    const WeightTensor w = g.weights(0.0, 2.0);
    const double alpha = g.coin() ? 0.0 : g.uniform(0.01, 1.0);
    LevelOperator op = fine_operator(s, w, alpha, d, Boundary::neumann);
    MatrixXd ref = oracle::dense_system(s, w, alpha, d).a;
    GridDims cur = d;
    for (int level = 0; level < 2; ++level) {
      const Transfer3D t = level_transfers(s, cur, Boundary::neumann);
      const MatrixXd p = dense_prolong(transfer_scheme(s), cur, false);
      double scale = 1.0;
      for (int a = 0; a < 3; ++a) scale *= cur[a] == 1 ? 1.0 : 2.0;
      ref = p.transpose() * ref * p / scale;
      op = op.coarsen(t);
      cur = coarse_dims(t);
      REQUIRE(op.dims() == cur);
      CHECK((assemble(op) - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
  });
  gen::for_all(8, 760, [](gen::Gen& g, std::uint64_t seed) {
    CAPTURE(seed);
    const GridDims d{4 * g.size(1, 2), 4 * g.size(1, 2), 4 * g.size(1, 2)};
    const Scheme s = g.scheme();
    const WeightTensor w = g.weights(0.0, 2.0);
    const LevelOperator op = fine_operator(s, w, 0.3, d, Boundary::periodic);
    const Transfer3D t = level_transfers(s, d, Boundary::periodic);
    const MatrixXd p = dense_prolong(transfer_scheme(s), d, true);
    const MatrixXd ref = p.transpose() * oracle::dense_system(s, w, 0.3, d, true).a * p / 8.0;
    CHECK((assemble(op.coarsen(t)) - ref).cwiseAbs().maxCoeff() < 1e-12);
  });
}

TEST_CASE("assembled operators are symmetric positive semi-definite") {
  gen::for_all(15, 900, [](gen::Gen& g, std::uint64_t seed) {
    CAPTURE(seed);
    const GridDims d = g.dims(2, 7);
    const Scheme s = g.scheme();
    const double alpha = g.coin() ? 0.0 : g.uniform(0.01, 1.0);
    LevelOperator op = fine_operator(s, g.weights(0.0, 2.0), alpha, d, Boundary::neumann);
    for (int level = 0; level < 2; ++level) {
      const MatrixXd a = assemble(op);
      CHECK((a - a.transpose()).cwiseAbs().maxCoeff() < 1e-13);
      const double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(a).eigenvalues().minCoeff();
      CHECK(lmin >= -1e-10);
      if (alpha > 0.0) CHECK(lmin > 0.0);
      op = op.coarsen(level_transfers(s, op.dims(), Boundary::neumann));
    }
  });
}

TEST_CASE("hierarchy sizes") {
  auto dims = hierarchy_dims({16, 16, 16}, Scheme::constant, Boundary::neumann, 64);
  REQUIRE(dims.size() == 3);
  CHECK(dims[1] == GridDims{8, 8, 8});
  CHECK(dims[2] == GridDims{4, 4, 4});

  dims = hierarchy_dims({21, 13, 7}, Scheme::constant, Boundary::neumann, 1);
  REQUIRE(dims.size() >= 3);
  CHECK(dims[1] == GridDims{11, 7, 4});
  CHECK(dims[2] == GridDims{6, 4, 2});
  CHECK(dims.back() == GridDims{1, 1, 1});

  // vertex-centered linear grids keep a node on each end: n -> floor(n/2)+1
  dims = hierarchy_dims({16, 16, 16}, Scheme::linear, Boundary::neumann, 64);
  REQUIRE(dims.size() == 4);
  CHECK(dims[1] == GridDims{9, 9, 9});
  CHECK(dims[2] == GridDims{5, 5, 5});
  CHECK(dims[3] == GridDims{3, 3, 3});
  dims = hierarchy_dims({21, 13, 7}, Scheme::hybrid, Boundary::neumann, 1);
  CHECK(dims[1] == GridDims{11, 7, 4});
}
