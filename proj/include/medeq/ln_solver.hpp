#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "medeq/dispersion.hpp"
#include "medeq/lattice.hpp"
#include "medeq/linalg.hpp"
#include "medeq/units.hpp"

namespace medeq {

// Frequency-domain wave operator on the cell grid, as a complex tridiagonal:
// A(w) = H0/c^2 - (w^2/c^2) diag(eps(x, w) + i eta). The off-diagonal entry
// is the constant -1/dx^2; wall rows carry 3/dx^2 from the mirror ghosts, so
// the field vanishes at the domain walls. eta is a uniform absorption floor
// added on top of whatever the stack itself absorbs.
struct HelmholtzOperator {
  SpatialGrid grid;
  Units units;
  double omega = 0.0;
  double eta = 0.0;
  Eigen::VectorXcd diag;
  double off = 0.0;

  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const {
    const int n = grid.n;
    if (x.size() != n) throw std::invalid_argument("HelmholtzOperator: size mismatch");
    Eigen::VectorXcd y(n);
    for (int i = 0; i < n; ++i) {
      Complex acc = diag[i] * x[i];
      if (i > 0) acc += off * x[i - 1];
      if (i + 1 < n) acc += off * x[i + 1];
      y[i] = acc;
    }
    return y;
  }
};

namespace detail {

inline Eigen::VectorXcd helmholtz_diagonal(const MediumStack& stack,
                                           const SpatialGrid& grid, const Units& u,
                                           Complex omega, double eta) {
  if (std::abs(grid.length() - stack.total_length()) >
      1e-9 * stack.total_length())
    throw std::invalid_argument("helmholtz_diagonal: grid does not span the stack");
  const double idx2 = 1.0 / (grid.dx * grid.dx);
  const Complex w2c2 = omega * omega / (u.c * u.c);
  Eigen::VectorXcd d(grid.n);
  for (int i = 0; i < grid.n; ++i) {
    const Complex eps = stack.epsilon(grid.x_center(i), omega) + Complex(0.0, eta);
    const double wall = (i == 0 || i == grid.n - 1) ? 3.0 : 2.0;
    d[i] = wall * idx2 - w2c2 * eps;
  }
  return d;
}

// Tridiagonal solve with partial pivoting, constant off-diagonal, multiple
// right-hand sides overwritten in place.
inline void tridiag_solve(const Eigen::VectorXcd& diag, double off,
                          Eigen::MatrixXcd& rhs) {
  const int n = (int)diag.size();
  if (rhs.rows() != n) throw std::invalid_argument("tridiag_solve: shape mismatch");
#ifdef MEDEQ_HAVE_LAPACKE
  Eigen::VectorXcd dl = Eigen::VectorXcd::Constant(n - 1, Complex(off, 0.0));
  Eigen::VectorXcd du = dl;
  Eigen::VectorXcd d = diag;
  const lapack_int info = LAPACKE_zgtsv(
      LAPACK_COL_MAJOR, n, (lapack_int)rhs.cols(), dl.data(), d.data(), du.data(),
      rhs.data(), n);
  if (info != 0)
    throw std::runtime_error(
        "tridiag_solve: singular system (info " + std::to_string(info) +
        "); the operator needs absorption, raise eta");
#else
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = diag[i];
    if (i > 0) a(i, i - 1) = off;
    if (i + 1 < n) a(i, i + 1) = off;
  }
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(a);
  rhs = lu.solve(rhs);
#endif
  if (!rhs.allFinite())
    throw std::runtime_error(
        "tridiag_solve: non-finite solution; the operator needs absorption, raise eta");
}

}  // namespace detail

inline HelmholtzOperator assemble_helmholtz(const MediumStack& stack,
                                            const SpatialGrid& grid, const Units& u,
                                            double omega, double eta) {
  if (!(omega > 0.0) || !std::isfinite(omega))
    throw std::invalid_argument("assemble_helmholtz: omega must be finite and > 0");
  if (!(eta >= 0.0) || !std::isfinite(eta))
    throw std::invalid_argument("assemble_helmholtz: eta must be finite and >= 0");
  HelmholtzOperator op;
  op.grid = grid;
  op.units = u;
  op.omega = omega;
  op.eta = eta;
  op.diag = detail::helmholtz_diagonal(stack, grid, u, Complex(omega, 0.0), eta);
  op.off = -1.0 / (grid.dx * grid.dx);
  return op;
}

// Green matrix of the wave operator: A G = I/dx, so entries approximate the
// continuum kernel pointwise. Complex symmetric (reciprocity), not Hermitian.
struct GreenMatrix {
  SpatialGrid grid;
  Units units;
  double omega = 0.0;
  double eta = 0.0;
  Eigen::MatrixXcd g;
};

// Residual sup|A G dx - I|; cheap banded multiply.
inline double green_residual(const HelmholtzOperator& op, const Eigen::MatrixXcd& g) {
  const int n = op.grid.n;
  if (g.rows() != n || g.cols() != n)
    throw std::invalid_argument("green_residual: shape mismatch");
  double worst = 0.0;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXcd col = op.apply(g.col(j)) * op.grid.dx;
    col[j] -= 1.0;
    worst = std::max(worst, col.cwiseAbs().maxCoeff());
  }
  return worst;
}

inline GreenMatrix green_function(const MediumStack& stack, const SpatialGrid& grid,
                                  const Units& u, double omega, double eta) {
  const HelmholtzOperator op = assemble_helmholtz(stack, grid, u, omega, eta);
  GreenMatrix gm;
  gm.grid = grid;
  gm.units = u;
  gm.omega = omega;
  gm.eta = eta;
  gm.g = Eigen::MatrixXcd::Identity(grid.n, grid.n) / grid.dx;
  detail::tridiag_solve(op.diag, op.off, gm.g);
  const double res = green_residual(op, gm.g);
  if (!(res < 1e-11))
    throw std::runtime_error(
        "green_function: residual " + std::to_string(res) +
        " exceeds 1e-11; omega sits on an undamped resonance, raise eta");
  return gm;
}

// One column of G, for large grids where the full inverse is wasteful.
inline Eigen::VectorXcd green_column(const MediumStack& stack, const SpatialGrid& grid,
                                     const Units& u, double omega, double eta,
                                     int source_cell) {
  if (source_cell < 0 || source_cell >= grid.n)
    throw std::out_of_range("green_column: source cell");
  const HelmholtzOperator op = assemble_helmholtz(stack, grid, u, omega, eta);
  Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Zero(grid.n, 1);
  rhs(source_cell, 0) = 1.0 / grid.dx;
  detail::tridiag_solve(op.diag, op.off, rhs);
  return rhs.col(0);
}

// The identity behind the field commutators:
//   Im G = (w^2/c^2) dx G diag(eps_I + eta) G^dagger,
// exact on the discrete system because A - A^dagger = -2i (w^2/c^2) eps_I.
// Inapplicable when the system has no absorption at all (both sides vanish
// up to boundary effects and the quotient is meaningless).
struct IdentityCheck {
  double residual = 0.0;
  bool applicable = true;
};

inline IdentityCheck green_identity(const MediumStack& stack, const GreenMatrix& gm) {
  const int n = gm.grid.n;
  Eigen::VectorXd eps_i(n);
  for (int i = 0; i < n; ++i)
    eps_i[i] = stack.epsilon(gm.grid.x_center(i), gm.omega).imag() + gm.eta;
  if (eps_i.minCoeff() < 0.0)
    throw std::runtime_error("green_identity: negative eps_I, passivity violated");

  IdentityCheck out;
  if (eps_i.maxCoeff() == 0.0) {
    out.applicable = false;
    out.residual = 0.0;
    return out;
  }
  const double w2c2 = gm.omega * gm.omega / (gm.units.c * gm.units.c);
  Eigen::MatrixXd lhs = gm.g.imag();
  const Eigen::VectorXcd eps_ic = eps_i.cast<Complex>();
  Eigen::MatrixXcd rhs_c =
      w2c2 * gm.grid.dx * (gm.g * eps_ic.asDiagonal() * gm.g.adjoint());
  const double denom = lhs.cwiseAbs().maxCoeff();
  out.residual = (lhs - rhs_c.real()).cwiseAbs().maxCoeff() / denom;
  return out;
}

// E on cells and B on faces radiated by a noise current: E = i w mu0 dx G j,
// B = grad E / (i w). The pair then satisfies both frequency-domain Maxwell
// equations by construction, up to solver roundoff.
struct FieldResponse {
  Eigen::VectorXcd e;
  Eigen::VectorXcd b;
};

inline FieldResponse field_response(const GreenMatrix& gm, const Eigen::VectorXcd& j) {
  if (j.size() != gm.grid.n)
    throw std::invalid_argument("field_response: current shape mismatch");
  FieldResponse r;
  const Complex iwmu(0.0, gm.omega * gm.units.mu0());
  r.e = iwmu * gm.grid.dx * (gm.g * j);
  Eigen::VectorXd er(gm.grid.n), ei(gm.grid.n);
  er = r.e.real();
  ei = r.e.imag();
  const Eigen::VectorXd gr = apply_grad(gm.grid, er);
  const Eigen::VectorXd gi = apply_grad(gm.grid, ei);
  r.b.resize(gm.grid.n + 1);
  const Complex inv_iw = 1.0 / Complex(0.0, gm.omega);
  for (int f = 0; f <= gm.grid.n; ++f) r.b[f] = inv_iw * Complex(gr[f], gi[f]);
  return r;
}

// Sup-norm residual of the Ampere equation div B = i w eps E / c^2 - mu0 j,
// relative to mu0 |j|. The Faraday equation grad E = i w B holds exactly by
// construction of field_response.
inline double maxwell_pair_residual(const MediumStack& stack, const GreenMatrix& gm,
                                    const FieldResponse& r, const Eigen::VectorXcd& j) {
  const int n = gm.grid.n;
  const Eigen::VectorXd br = r.b.real(), bi = r.b.imag();
  const Eigen::VectorXd dr = apply_div(gm.grid, br), di = apply_div(gm.grid, bi);
  const Complex iw(0.0, gm.omega);
  const double c2 = gm.units.c * gm.units.c;
  const double mu0 = gm.units.mu0();
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const Complex eps = stack.epsilon(gm.grid.x_center(i), gm.omega) +
                        Complex(0.0, gm.eta);
    const Complex lhs = Complex(dr[i], di[i]);
    const Complex rhs = iw * eps * r.e[i] / c2 - mu0 * j[i];
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  const double scale = mu0 * (1.0 + j.cwiseAbs().maxCoeff());
  return worst / scale;
}

// Commutator weight of the noise current at each (cell, omega) node:
// (hbar w^2 / pi) eps0 eps_I(x, w), with the continuum deltas carried as
// 1/(dx * w_omega) by the caller's quadrature.
struct NoiseKernel {
  std::vector<double> omegas;
  Eigen::MatrixXd value;  // n cells x n omegas
};

inline NoiseKernel noise_commutator_kernel(const MediumStack& stack,
                                           const SpatialGrid& grid, const Units& u,
                                           const std::vector<double>& omegas) {
  NoiseKernel k;
  k.omegas = omegas;
  k.value.resize(grid.n, (Eigen::Index)omegas.size());
  for (std::size_t q = 0; q < omegas.size(); ++q) {
    const double w = omegas[q];
    if (!(w > 0.0)) throw std::invalid_argument("noise_commutator_kernel: omega <= 0");
    for (int i = 0; i < grid.n; ++i) {
      const double eps_i = stack.epsilon(grid.x_center(i), w).imag();
      if (eps_i < 0.0)
        throw std::runtime_error("noise_commutator_kernel: negative eps_I");
      k.value(i, (Eigen::Index)q) = u.hbar * w * w / kPi * u.eps0 * eps_i;
    }
  }
  return k;
}

// j_n = -i w P_n.
inline Eigen::VectorXcd noise_current(const Eigen::VectorXcd& polarization,
                                      double omega) {
  if (!std::isfinite(omega))
    throw std::invalid_argument("noise_current: omega must be finite");
  return Complex(0.0, -omega) * polarization;
}

// The transverse reduction carries no longitudinal component, so the noise
// charge -div P_n vanishes identically. Kept as an executable statement of
// that fact rather than folklore.
inline Eigen::VectorXcd noise_charge(const SpatialGrid& grid,
                                     const Eigen::VectorXcd& polarization) {
  if (polarization.size() != grid.n)
    throw std::invalid_argument("noise_charge: shape mismatch");
  return Eigen::VectorXcd::Zero(grid.n);
}

// Equal-time [E(x), B(x')] assembled from the frequency side. The true kernel
// is i K with real antisymmetric-stencil K; this computes
//   K(x, x') = int_0^wmax dw (2 hbar mu0 w / pi) d_x' Im G(x, x', w)
// for the medium, subtracts the same-cutoff vacuum part (available as an
// exact mode sum of the discrete Laplacian), and adds back the full vacuum
// kernel, which is the canonical commutator in discretized form:
//   K_can(i, f) = (hbar / eps0) (1/dx) grad-stencil.
// The medium integral runs over a rectangle contour closed in the upper half
// plane, where the integrand is smooth; on the real axis it rings at every
// cavity resonance and direct quadrature would be hopeless.
struct EqualTimeParams {
  double omega_max = 0.0;
  double eta = 0.0;        // extra uniform absorption, default none
  double height = 5.0;     // rectangle height; only affects quadrature effort
  int panel_points = 12;   // Gauss nodes per panel
  double side_floor = 1e-4;  // finest descent panel, relative to height
};

struct EqualTimeResult {
  Eigen::MatrixXd assembled;  // n cells x (n+1) faces
  Eigen::MatrixXd canonical;
  double deviation = 0.0;     // sup-norm, relative to the canonical kernel
  double ee_deviation = 0.0;  // [E, E] residual, zero by reciprocity
};

namespace detail {

// Nodes and complex weights (Gauss weight times dz) of one straight contour
// leg z(s) = origin + dir*s, s ascending over the composite panels.
struct ContourLeg {
  std::vector<Complex> nodes;
  std::vector<Complex> weights;
};

inline ContourLeg contour_leg(Complex origin, Complex dir,
                              const std::vector<double>& edges, int pts) {
  SpectralGrid gl = make_composite_gl(edges, std::vector<int>(edges.size() - 1, pts));
  ContourLeg leg;
  leg.nodes.reserve((std::size_t)gl.size());
  leg.weights.reserve((std::size_t)gl.size());
  for (int q = 0; q < gl.size(); ++q) {
    leg.nodes.push_back(origin + dir * gl.nodes[q]);
    leg.weights.push_back(dir * gl.weights[q]);
  }
  return leg;
}

// Im of int_0^wmax w G(w) dw via the closed rectangle: left edge up the
// imaginary axis, top across at the given height, right edge descending to
// wmax with geometric refinement toward the real axis.
inline Eigen::MatrixXd spectral_weight_integral(const MediumStack& stack,
                                                const SpatialGrid& grid,
                                                const Units& u,
                                                const EqualTimeParams& p) {
  const double s = p.height, w = p.omega_max;
  std::vector<ContourLeg> legs;
  legs.push_back(contour_leg(Complex(0, 0), Complex(0, 1), {0.0, 0.5 * s, s},
                             p.panel_points));
  const int across = std::max(2, (int)std::ceil(w / s));
  std::vector<double> top_edges(across + 1);
  for (int i = 0; i <= across; ++i) top_edges[i] = w * i / across;
  legs.push_back(contour_leg(Complex(0, s), Complex(1, 0), top_edges, p.panel_points));
  // Descent leg, built ascending then negated (downward orientation).
  std::vector<double> down{0.0};
  for (double e = s * p.side_floor; e < s * 0.999; e *= 2.0) down.push_back(e);
  down.push_back(s);
  ContourLeg desc = contour_leg(Complex(w, 0), Complex(0, 1), down, p.panel_points);
  for (Complex& cw : desc.weights) cw = -cw;
  legs.push_back(desc);

  const double off = -1.0 / (grid.dx * grid.dx);
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(grid.n, grid.n);
  Eigen::MatrixXcd g(grid.n, grid.n);
  for (const ContourLeg& leg : legs)
    for (std::size_t q = 0; q < leg.nodes.size(); ++q) {
      const Complex z = leg.nodes[q];
      g = Eigen::MatrixXcd::Identity(grid.n, grid.n) / grid.dx;
      tridiag_solve(helmholtz_diagonal(stack, grid, u, z, p.eta), off, g);
      acc += (leg.weights[q] * z) * g;
    }
  return acc.imag();
}

}  // namespace detail

inline EqualTimeResult equal_time_commutator_eb(const MediumStack& stack,
                                                const SpatialGrid& grid,
                                                const Units& u,
                                                const EqualTimeParams& p) {
  if (!(p.omega_max > 0.0))
    throw std::invalid_argument("equal_time_commutator_eb: omega_max must be > 0");
  const int n = grid.n;
  const double c2 = u.c * u.c;
  const double mode_full = 0.5 * kPi * c2 / grid.dx;  // per-mode weight integral

  // Vacuum reference at the same cutoff: exact mode sum of H0/c^2.
  const EigenSystem vac = eigh(assemble_H0(grid, u) / c2);
  Eigen::MatrixXd m_vac = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k)
    if (std::sqrt(std::max(0.0, vac.values[k])) < p.omega_max)
      m_vac.noalias() +=
          mode_full * vac.vectors.col(k) * vac.vectors.col(k).transpose();

  Eigen::MatrixXd m_med =
      stack.all_vacuum() && p.eta == 0.0
          ? m_vac
          : detail::spectral_weight_integral(stack, grid, u, p);

  // Subtract the cutoff vacuum, add back the full one (= canonical).
  Eigen::MatrixXd core = m_med - m_vac;
  for (int i = 0; i < n; ++i) core(i, i) += mode_full;

  EqualTimeResult out;
  const double scale = 2.0 * u.hbar * u.mu0() / kPi;
  out.assembled.resize(n, n + 1);
  out.canonical.resize(n, n + 1);
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    out.assembled.row(i) = scale * apply_grad(grid, core.row(i).transpose());
    unit[i] = mode_full;
    out.canonical.row(i) = scale * apply_grad(grid, unit);
    unit[i] = 0.0;
  }
  const double denom = out.canonical.cwiseAbs().maxCoeff();
  out.deviation = (out.assembled - out.canonical).cwiseAbs().maxCoeff() / denom;
  out.ee_deviation =
      (core - core.transpose()).cwiseAbs().maxCoeff() / core.cwiseAbs().maxCoeff();
  if (!(out.deviation < 1.0))
    throw std::runtime_error(
        "equal_time_commutator_eb: subtracted integral has not converged, raise "
        "omega_max");
  return out;
}

}  // namespace medeq
