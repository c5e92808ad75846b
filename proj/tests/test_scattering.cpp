#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "medeq/af_dynamics.hpp"
#include "medeq/dispersion.hpp"
#include "medeq/lattice.hpp"
#include "medeq/linalg.hpp"
#include "medeq/phasespace.hpp"
#include "medeq/scattering.hpp"
#include "medeq/units.hpp"

using namespace medeq;

namespace {

struct Setup {
  MediumStack stack;
  SpatialGrid grid;
  SpectralGrid spectral;
  BathSpectral bath;
  GeneratorN gen;
  BasisPtr basis;
};

// Standard extraction preset: broadband absorber in the middle of a box wide
// enough that nothing reflected re-enters the 2T window. The gamma here is
// deliberately large so every bath node the pulse populates drains fast.
Setup slab_setup() {
  OscillatorModel m({{1.0, 1.0, 1.6}});
  MediumStack stack({{22.0, OscillatorModel()}, {4.0, m}, {22.0, OscillatorModel()}});
  SpatialGrid grid(96, 0.5);
  SpectralGrid spectral = make_spectral_grid(stack, 48, 5.0);
  BathSpectral bath = bath_spectral(stack, grid, spectral);
  Units u;
  GeneratorN gen = assemble_N(grid, spectral, bath, u);
  BasisPtr basis = make_canonical_basis(grid, spectral, u);
  return {stack, grid, spectral, bath, gen, basis};
}

Setup tiny_setup() {
  OscillatorModel m({{1.0, 1.0, 1.6}});
  MediumStack stack({{3.0, OscillatorModel()}, {1.0, m}, {4.0, OscillatorModel()}});
  SpatialGrid grid(16, 0.5);
  SpectralGrid spectral = make_composite_gl({0.0, 2.0, 4.0}, {4, 4});
  BathSpectral bath = bath_spectral(stack, grid, spectral);
  Units u;
  GeneratorN gen = assemble_N(grid, spectral, bath, u);
  BasisPtr basis = make_canonical_basis(grid, spectral, u);
  return {stack, grid, spectral, bath, gen, basis};
}

Setup vacuum_setup() {
  MediumStack vac({{6.0, OscillatorModel()}});
  SpatialGrid grid(12, 0.5);
  SpectralGrid spectral = make_composite_gl({0.0, 3.0}, {4});
  BathSpectral bath = bath_spectral(vac, grid, spectral);
  Units u;
  GeneratorN gen = assemble_N(grid, spectral, bath, u);
  BasisPtr basis = make_canonical_basis(grid, spectral, u);
  return {vac, grid, spectral, bath, gen, basis};
}

FieldState pulse_state(const Setup& s) {
  FieldState f = FieldState::zero(s.grid, s.spectral);
  for (int i = 0; i < s.grid.n; ++i) {
    const double x = s.grid.x_center(i);
    f.f1[i] = std::exp(-0.5 * (x - 24.0) * (x - 24.0));
  }
  return f;
}

double sup_rel(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("extraction preconditions are enforced") {
  Setup s = tiny_setup();
  FieldState f = FieldState::zero(s.grid, s.spectral);
  f.f2(6, 2) = 1.0;

  // Wall clearance 3, absorber width 1: valid horizons live in (1, 3).
  CHECK(wall_clearance(s.gen) == Catch::Approx(3.0));
  CHECK(absorber_width(s.gen) == Catch::Approx(1.0));
  CHECK_THROWS_AS(f0_extract_limit(s.gen, f, 3.5), std::invalid_argument);
  CHECK_THROWS_AS(f0_extract_limit(s.gen, f, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(f0_extract_limit(s.gen, f, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(f0_extract_limit(s.gen, f, 2.0, 2), std::invalid_argument);

  CHECK_THROWS_AS(record_f1_history(s.gen, f, 2.0, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(record_f1_history(s.gen, f, 2.0, 2.0), std::invalid_argument);

  // Quadrature route: even panel count, Nyquist bound on the top node.
  CHECK_THROWS_AS(f0_extract_integral(s.gen, s.basis, 2.0, 2.0 / 11, {6}),
                  std::invalid_argument);
  CHECK_THROWS_AS(f0_extract_integral(s.gen, s.basis, 2.0, 0.5, {6}),
                  std::invalid_argument);
  CHECK_THROWS_AS(f0_extract_integral(s.gen, s.basis, 2.0, 0.025, {16}),
                  std::out_of_range);

  CHECK_THROWS_AS(moller(s.gen, 0, 2.0), std::invalid_argument);
  MollerOperator om = moller(s.gen, -1, 2.0);
  CHECK_THROWS_AS(decoupling_residual(om, f, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(decoupling_residual(om, f, -2.5), std::invalid_argument);

  // Typed access: a values-route result refuses observable-only entry points.
  F1History h = record_f1_history(s.gen, f, 2.0, 0.025);
  PrimedFields pv = f0_extract_integral(h, s.gen, f);
  CHECK_THROWS_AS(pv.f2p_at(6, 0), std::invalid_argument);
  CHECK_THROWS_AS(noise_current_observable(pv, s.gen, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(commutator_f42(pv), std::invalid_argument);
  CHECK_THROWS_AS(identify_langevin(pv, s.gen, s.stack), std::invalid_argument);
}

TEST_CASE("decoupled bath keeps its data") {
  Setup s = vacuum_setup();
  const int n = s.grid.n, k = s.spectral.size();
  CHECK(wall_clearance(s.gen) == std::numeric_limits<double>::infinity());

  Rng rng(5);
  FieldState f = FieldState::zero(s.grid, s.spectral);
  for (int i = 0; i < n; ++i) {
    f.f1[i] = rng.normal();
    for (int q = 0; q < k; ++q) {
      f.f2(i, q) = rng.normal();
      f.f4(i, q) = rng.normal();
    }
  }

  Eigen::MatrixXcd want(n, k);
  for (int i = 0; i < n; ++i)
    for (int q = 0; q < k; ++q) want(i, q) = Complex(f.f4(i, q), -f.f2(i, q));

  // Both routes: with sigma = 0 the primed data is the t = 0 data exactly.
  PrimedFields lim = f0_extract_limit(s.gen, f, 40.0);
  PrimedFields qd = f0_extract_integral(record_f1_history(s.gen, f, 40.0, 0.1),
                                        s.gen, f);
  CHECK((lim.f0p - want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((qd.f0p - want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(lim.spread < 1e-12);

  // Observable route: the primed observables are the bare slot observables.
  std::vector<int> cells{2, 7};
  PrimedFields ob = f0_extract_integral(s.gen, s.basis, 40.0, 0.1, cells);
  for (int c : cells)
    for (int q = 0; q < k; ++q) {
      const Eigen::VectorXcd d2 =
          ob.f2p_at(c, q).coef - f2_observable(s.basis, c, q).coef;
      const Eigen::VectorXcd d4 =
          ob.f4p_at(c, q).coef - f4_observable(s.basis, s.bath, c, q).coef;
      CHECK(d2.cwiseAbs().maxCoeff() < 1e-13);
      CHECK(d4.cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("silent field history keeps the bath data") {
  Setup s = tiny_setup();
  const int k = s.spectral.size();
  Rng rng(11);
  FieldState f = FieldState::zero(s.grid, s.spectral);
  for (int c : s.bath.coupled_cells())
    for (int q = 0; q < k; ++q) {
      f.f2(c, q) = rng.normal();
      f.f4(c, q) = rng.normal();
    }

  F1History h;
  h.dt = 0.0125;
  h.horizon = 2.0;
  h.f1 = Eigen::MatrixXd::Zero(s.grid.n, 161);
  CHECK(h.nodes() == 161);
  CHECK(h.time_at(0) == Catch::Approx(-2.0));
  CHECK(h.time_at(160) == Catch::Approx(0.0).margin(1e-14));

  PrimedFields p = f0_extract_integral(h, s.gen, f);
  for (int i = 0; i < s.grid.n; ++i)
    for (int q = 0; q < k; ++q)
      CHECK(std::abs(p.f0p(i, q) - Complex(f.f4(i, q), -f.f2(i, q))) < 1e-15);
}

TEST_CASE("recorded history starts at the horizon and ends at the state") {
  Setup s = tiny_setup();
  FieldState f = FieldState::zero(s.grid, s.spectral);
  f.f1[8] = 1.0;
  F1History h = record_f1_history(s.gen, f, 2.0, 0.03125);
  CHECK(h.nodes() == 65);
  CHECK((h.f1.col(64) - f.f1).cwiseAbs().maxCoeff() == 0.0);
  const FieldState back = s.gen.propagator().evolve(f, -2.0);
  CHECK((h.f1.col(0) - back.f1).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("single node quadrature matches the closed form") {
  // One bath node at lambda = 2 over one absorbing cell, driven by a cosine
  // field history: the sine/cosine integrals have elementary antiderivatives.
  OscillatorModel m({{1.0, 1.0, 1.6}});
  MediumStack stack({{5.5, OscillatorModel()}, {0.5, m}, {6.0, OscillatorModel()}});
  SpatialGrid grid(24, 0.5);
  Eigen::VectorXd nodes(1), weights(1);
  nodes << 2.0;
  weights << 1.0;
  SpectralGrid spectral(std::move(nodes), std::move(weights), {1.5, 2.5});
  BathSpectral bath = bath_spectral(stack, grid, spectral);
  GeneratorN gen = assemble_N(grid, spectral, bath, Units{});
  const int cell = bath.coupled_cells().front();
  const double sigma = bath.sigma(cell, 0);
  REQUIRE(sigma > 0.0);

  const double T = 3.0, dt = 0.0025, lam = 2.0, nu = 0.7;
  F1History h;
  h.dt = dt;
  h.horizon = T;
  h.f1 = Eigen::MatrixXd::Zero(grid.n, 1201);
  for (int j = 0; j < 1201; ++j) h.f1(cell, j) = std::cos(nu * h.time_at(j));

  FieldState f = FieldState::zero(grid, spectral);
  f.f2(cell, 0) = 0.3;
  f.f4(cell, 0) = -0.2;

  PrimedFields p = f0_extract_integral(h, gen, f);

  auto int_sin = [&](double a) { return (std::cos(a * T) - 1.0) / a; };
  auto int_cos = [&](double a) { return std::sin(a * T) / a; };
  const double i2 = -0.5 * (int_sin(lam + nu) + int_sin(lam - nu));
  const double i4 = 0.5 * (int_cos(lam + nu) + int_cos(lam - nu));
  const Complex want(-0.2 + sigma * i4, -(0.3 + sigma * i2));
  CHECK(std::abs(p.f0p(cell, 0) - want) < 1e-9);
  // Cells without coupling pick up nothing from the history.
  CHECK(std::abs(p.f0p(cell + 3, 0)) == 0.0);
}

TEST_CASE("sampled limit agrees with the quadrature route") {
  Setup s = slab_setup();
  FieldState f = pulse_state(s);
  const double T = 10.0, dt = 0.0125;

  PrimedFields intT = f0_extract_integral(record_f1_history(s.gen, f, T, dt),
                                          s.gen, f);
  PrimedFields int2T = f0_extract_integral(record_f1_history(s.gen, f, 2 * T, dt),
                                           s.gen, f);
  PrimedFields limT = f0_extract_limit(s.gen, f, T, 10);
  PrimedFields lim2T = f0_extract_limit(s.gen, f, 2 * T, 10);

  const double dT = sup_rel(limT.f0p, intT.f0p);
  const double d2T = sup_rel(lim2T.f0p, int2T.f0p);
  CHECK(dT < 3e-5);
  CHECK(d2T < 1e-5);
  CHECK(d2T < dT);
  CHECK(limT.spread < 5e-4);

  // The default sample budget converges too, more coarsely.
  CHECK(sup_rel(f0_extract_limit(s.gen, f, T).f0p, intT.f0p) < 5e-3);
}

TEST_CASE("extraction commutes with the evolution up to a free rotation") {
  Setup s = slab_setup();
  FieldState f = pulse_state(s);
  const double T = 10.0, dt = 0.0125, del = 1.0;
  const FieldState fd = s.gen.propagator().evolve(f, del);

  PrimedFields intT = f0_extract_integral(record_f1_history(s.gen, f, T, dt),
                                          s.gen, f);
  PrimedFields intD = f0_extract_integral(
      record_f1_history(s.gen, fd, T + del, dt), s.gen, fd);
  PrimedFields limT = f0_extract_limit(s.gen, f, T, 10);
  PrimedFields limD = f0_extract_limit(s.gen, fd, T + del, 10);

  // Horizons anchored at the same past instant: the primed data of the
  // evolved state is the freely rotated primed data of the original.
  const double scale = intT.f0p.cwiseAbs().maxCoeff();
  double di = 0.0, dl = 0.0;
  for (int i = 0; i < s.grid.n; ++i)
    for (int q = 0; q < s.spectral.size(); ++q) {
      const Complex rot = std::polar(1.0, -s.spectral.nodes[q] * del);
      di = std::max(di, std::abs(intD.f0p(i, q) - rot * intT.f0p(i, q)));
      dl = std::max(dl, std::abs(limD.f0p(i, q) - rot * limT.f0p(i, q)));
    }
  CHECK(di / scale < 1e-7);
  CHECK(dl / scale < 2e-5);
}

TEST_CASE("settling check flags incoming radiation") {
  Setup s = slab_setup();
  // A left-moving packet: backwards in time it retraces into the absorber
  // half way through the sample window.
  FieldState f = FieldState::zero(s.grid, s.spectral);
  for (int i = 0; i < s.grid.n; ++i)
    f.f1[i] = std::exp(-0.5 * std::pow((s.grid.x_center(i) - 15.0) / 0.7, 2));
  for (int j = 0; j <= s.grid.n; ++j)
    f.f3[j] = -std::exp(-0.5 * std::pow((j * s.grid.dx - 15.0) / 0.7, 2));
  CHECK_THROWS_AS(f0_extract_limit(s.gen, f, 10.0), std::runtime_error);
}

TEST_CASE("wave operator matches the quadrature route") {
  Setup s = slab_setup();
  FieldState f = pulse_state(s);
  const double T = 10.0;

  PrimedFields intT = f0_extract_integral(record_f1_history(s.gen, f, T, 0.0125),
                                          s.gen, f);
  MollerOperator om = moller(s.gen, -1, T);
  const auto [p2, p4] = om.apply(f);
  double d = 0.0;
  for (int i = 0; i < s.grid.n; ++i)
    for (int q = 0; q < s.spectral.size(); ++q)
      d = std::max(d, std::abs(Complex(p4(i, q), -p2(i, q)) - intT.f0p(i, q)));
  // The operator is the exact endpoint value; what is left is Simpson error.
  CHECK(d / intT.f0p.cwiseAbs().maxCoeff() < 1e-7);

  // Decoupling: monotone along the window, identically zero at the horizon.
  double prev = std::numeric_limits<double>::infinity();
  for (double t : {-2.5, -5.0, -7.5}) {
    const double r = decoupling_residual(om, f, t);
    CHECK(r < prev);
    prev = r;
  }
  CHECK(decoupling_residual(om, f, -T) < 1e-12);
}

TEST_CASE("wave operator at zero coupling is the bath projector") {
  Setup s = vacuum_setup();
  const int n = s.grid.n, k = s.spectral.size();
  Rng rng(17);
  FieldState f = FieldState::zero(s.grid, s.spectral);
  for (int i = 0; i < n; ++i) {
    f.f1[i] = rng.normal();
    for (int q = 0; q < k; ++q) {
      f.f2(i, q) = rng.normal();
      f.f4(i, q) = rng.normal();
    }
  }

  for (int dir : {-1, 1}) {
    MollerOperator om = moller(s.gen, dir, 5.0);
    const auto [p2, p4] = om.apply(f);
    CHECK((p2 - f.f2).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((p4 - f.f4).cwiseAbs().maxCoeff() < 1e-13);
  }

  // Dense form: zero on the field columns, identity on the bath block.
  Eigen::MatrixXd m = moller(s.gen, -1, 5.0).dense();
  const int nf = n + (n + 1) + 2 * n * k;
  REQUIRE(m.rows() == 2 * n * k);
  REQUIRE(m.cols() == nf);
  CHECK(m.leftCols(n + (n + 1)).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((m.rightCols(2 * n * k) - Eigen::MatrixXd::Identity(2 * n * k, 2 * n * k))
            .cwiseAbs()
            .maxCoeff() < 1e-13);
}

TEST_CASE("observable extraction reproduces the classical data") {
  Setup s = slab_setup();
  const int k = s.spectral.size();
  const double T = 10.0, dt = 0.0125;

  std::vector<int> cells = s.bath.coupled_cells();
  cells.push_back(10);  // one vacuum cell rides along
  PrimedFields ob = f0_extract_integral(s.gen, s.basis, T, dt, cells);

  Rng rng(23);
  PotentialState p0 = PotentialState::zero(s.grid, s.spectral);
  for (int i = 0; i < s.grid.n; ++i) {
    p0.xi1[i] = rng.normal();
    p0.pi1[i] = rng.normal();
    for (int q = 0; q < k; ++q) {
      p0.xi2(i, q) = rng.normal();
      p0.pi2(i, q) = rng.normal();
    }
  }
  const FieldState f0 = fields_from_potentials(p0, s.gen);
  PrimedFields cl = f0_extract_integral(record_f1_history(s.gen, f0, T, dt),
                                        s.gen, f0);

  // Evaluating the primed observables on any state gives the classical
  // primed data of that state's trajectory: same quadrature, same flow.
  double d = 0.0, scale = 0.0;
  for (int c : cells)
    for (int q = 0; q < k; ++q) {
      d = std::max(d, std::abs(value(ob.f0p_at(c, q), p0) - cl.f0p(c, q)));
      scale = std::max(scale, std::abs(cl.f0p(c, q)));
    }
  CHECK(d / scale < 1e-12);
}

TEST_CASE("observable limit route agrees with its quadrature route") {
  Setup s = slab_setup();
  std::vector<int> one{s.bath.coupled_cells().front()};
  const double T = 10.0;
  PrimedFields obL = f0_extract_limit(s.gen, s.basis, T, 10, one);
  PrimedFields obI = f0_extract_integral(s.gen, s.basis, T, 0.0125, one);
  double d = 0.0, scale = 0.0;
  for (int q = 0; q < s.spectral.size(); ++q) {
    d = std::max(d, (obL.f0p_at(one[0], q).coef - obI.f0p_at(one[0], q).coef)
                        .cwiseAbs()
                        .maxCoeff());
    scale = std::max(scale, obI.f0p_at(one[0], q).coef.cwiseAbs().maxCoeff());
  }
  CHECK(d / scale < 2e-3);
}

TEST_CASE("noise current assembles from the primed pair") {
  Setup s = slab_setup();
  const int k = s.spectral.size();
  PrimedFields ob =
      f0_extract_integral(s.gen, s.basis, 10.0, 0.025, s.bath.coupled_cells());

  // At t = 0 the current density is the f4' column alone.
  NoiseCurrentField j0 = noise_current_observable(ob, s.gen, 0.0);
  const double se = std::sqrt(s.gen.units().eps0);
  for (std::size_t jc = 0; jc < j0.cells.size(); ++jc) {
    const int c = j0.cells[jc];
    LinearObservable want;
    for (int q = 0; q < k; ++q) {
      const Complex a(-se * s.spectral.weights[q] * s.bath.sigma(c, q), 0.0);
      want = q == 0 ? a * ob.f4p_at(c, q) : want + a * ob.f4p_at(c, q);
    }
    CHECK((j0.total[jc].coef - want.coef).cwiseAbs().maxCoeff() < 1e-13);
  }

  // The polarization's time derivative is the current: fourth order stencil.
  const double t = 0.7, h = 1e-3;
  NoiseCurrentField jt = noise_current_observable(ob, s.gen, t);
  std::vector<std::vector<LinearObservable>> pol;
  for (double off : {-2.0, -1.0, 1.0, 2.0})
    pol.push_back(noise_polarization_observable(ob, s.gen, t + off * h));
  double d = 0.0, scale = 0.0;
  for (std::size_t jc = 0; jc < jt.cells.size(); ++jc) {
    const Eigen::VectorXcd der =
        (pol[0][jc].coef - 8.0 * pol[1][jc].coef + 8.0 * pol[2][jc].coef -
         pol[3][jc].coef) /
        (12.0 * h);
    d = std::max(d, (der - jt.total[jc].coef).cwiseAbs().maxCoeff());
    scale = std::max(scale, jt.total[jc].coef.cwiseAbs().maxCoeff());
  }
  CHECK(d / scale < 1e-8);
}

TEST_CASE("noise current vanishes without coupling") {
  Setup s = vacuum_setup();
  std::vector<int> cells{3, 8};
  PrimedFields ob = f0_extract_integral(s.gen, s.basis, 20.0, 0.05, cells);
  NoiseCurrentField j = noise_current_observable(ob, s.gen, 0.4);
  for (const LinearObservable& tot : j.total)
    CHECK(tot.coef.cwiseAbs().maxCoeff() == 0.0);
  for (const LinearObservable& den : j.density)
    CHECK(den.coef.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("primed pair keeps the bath commutator kernel") {
  Setup s = slab_setup();
  PrimedFields ob =
      f0_extract_integral(s.gen, s.basis, 10.0, 0.0125, s.bath.coupled_cells());
  PrimedKernel pk = commutator_f42(ob);

  const Eigen::Index nn = pk.f4f2.rows();
  REQUIRE(nn == (Eigen::Index)s.bath.coupled_cells().size() * s.spectral.size());
  double diag = 0.0, off = 0.0;
  for (Eigen::Index a = 0; a < nn; ++a) {
    diag = std::max(diag, std::abs(pk.f4f2(a, a) - Complex(0.0, -pk.expected[a])) /
                              pk.expected[a]);
    for (Eigen::Index b = 0; b < nn; ++b)
      if (a != b)
        off = std::max(off, std::abs(pk.f4f2(a, b)) /
                                std::sqrt(pk.expected[a] * pk.expected[b]));
  }
  // The extraction is a canonical map up to Simpson error, so the kernel
  // survives at quadrature accuracy, far below the horizon-truncation gate.
  CHECK(diag < 1e-8);
  CHECK(off < 1e-8);
  CHECK(pk.max_f2f2 < 1e-6);
  CHECK(pk.max_f4f4 < 1e-6);
}

TEST_CASE("commutator kernel is exact without coupling") {
  Setup s = vacuum_setup();
  const int k = s.spectral.size();
  std::vector<int> cells{1, 5, 9};
  PrimedFields ob = f0_extract_integral(s.gen, s.basis, 15.0, 0.05, cells);
  PrimedKernel pk = commutator_f42(ob);
  const Eigen::Index nn = pk.f4f2.rows();
  for (Eigen::Index a = 0; a < nn; ++a) {
    CHECK(std::abs(pk.f4f2(a, a) - Complex(0.0, -pk.expected[a])) <
          1e-13 * pk.expected[a]);
    for (Eigen::Index b = 0; b < nn; ++b)
      if (a != b) CHECK(std::abs(pk.f4f2(a, b)) == 0.0);
  }
  CHECK(pk.max_f2f2 == 0.0);
  CHECK(pk.max_f4f4 == 0.0);
  REQUIRE(pk.nodes == k);
}

TEST_CASE("noise commutator matches the absorption kernel node by node") {
  Setup s = slab_setup();
  PrimedFields ob =
      f0_extract_integral(s.gen, s.basis, 10.0, 0.0125, s.bath.coupled_cells());
  IdentificationReport rep = identify_langevin(ob, s.gen, s.stack);

  CHECK(rep.compared == (int)s.bath.coupled_cells().size() * s.spectral.size());
  CHECK(rep.max_rel_diag < 1e-8);
  CHECK(rep.max_offdiag_rel < 1e-8);
  // nu = lambda eps_I / pi holds by construction, not just within tolerance.
  CHECK(rep.prefactor_residual == 0.0);
  CHECK(rep.kernel_scale > 1.0);
}

TEST_CASE("identification degenerates cleanly without coupling") {
  Setup s = vacuum_setup();
  std::vector<int> cells{0, 4};
  PrimedFields ob = f0_extract_integral(s.gen, s.basis, 12.0, 0.05, cells);
  IdentificationReport rep = identify_langevin(ob, s.gen, s.stack);
  CHECK(rep.compared == 0);
  CHECK(rep.max_rel_diag == 0.0);
  CHECK(rep.kernel_scale == 0.0);
  CHECK(rep.prefactor_residual == 0.0);
}
