#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "medeq/lattice.hpp"
#include "medeq/linalg.hpp"
#include "medeq/units.hpp"

namespace medeq {

// State of the extended field-bath system. f1 = sqrt(eps0) E on cells,
// f3 = B/sqrt(mu0) on faces, f2/f4 are the auxiliary bath pair on
// cells x spectral nodes.
struct FieldState {
  Eigen::VectorXd f1;
  Eigen::VectorXd f3;
  Eigen::MatrixXd f2;
  Eigen::MatrixXd f4;
  double time = 0.0;

  static FieldState zero(const SpatialGrid& g, const SpectralGrid& s) {
    FieldState st;
    st.f1 = Eigen::VectorXd::Zero(g.n);
    st.f3 = Eigen::VectorXd::Zero(g.n + 1);
    st.f2 = Eigen::MatrixXd::Zero(g.n, s.size());
    st.f4 = Eigen::MatrixXd::Zero(g.n, s.size());
    return st;
  }
};

inline void check_shapes(const FieldState& st, const SpatialGrid& g,
                         const SpectralGrid& s, const char* who) {
  if (st.f1.size() != g.n || st.f3.size() != g.n + 1 || st.f2.rows() != g.n ||
      st.f2.cols() != s.size() || st.f4.rows() != g.n || st.f4.cols() != s.size())
    throw std::invalid_argument(std::string(who) + ": state shape mismatch");
  if (!st.f1.allFinite() || !st.f3.allFinite() || !st.f2.allFinite() ||
      !st.f4.allFinite())
    throw std::invalid_argument(std::string(who) + ": state has non-finite entries");
}

class Propagator;

// The first-order generator of the extended system,
//   df1 = -c div f3 + sum_k w_k sigma f4,   df2 = lambda f4,
//   df3 = -c grad f1,                       df4 = -lambda f2 - sigma f1.
// Skew-adjoint under the (dx | face | dx w_k) metric, which is what makes
// the energy below an exact invariant of the discrete flow.
class GeneratorN {
 public:
  GeneratorN(SpatialGrid grid, SpectralGrid spectral, BathSpectral bath, Units units)
      : grid_(grid), spectral_(std::move(spectral)), bath_(std::move(bath)),
        units_(units), cache_(std::make_shared<Cache>()) {
    units_.validate();
    if (bath_.sigma.rows() != grid_.n || bath_.sigma.cols() != spectral_.size())
      throw std::invalid_argument("GeneratorN: bath shape mismatch");
  }

  const SpatialGrid& grid() const { return grid_; }
  const SpectralGrid& spectral() const { return spectral_; }
  const BathSpectral& bath() const { return bath_; }
  const Units& units() const { return units_; }

  FieldState apply(const FieldState& s) const {
    FieldState d = apply_n0(s);
    accumulate_coupling(s, d);
    return d;
  }

  // sigma = 0 part: vacuum Maxwell plus bare bath rotors.
  FieldState apply_n0(const FieldState& s) const {
    check_shapes(s, grid_, spectral_, "GeneratorN");
    FieldState d;
    d.f1 = -units_.c * apply_div(grid_, s.f3);
    d.f3 = -units_.c * apply_grad(grid_, s.f1);
    d.f2 = s.f4 * spectral_.nodes.asDiagonal();
    d.f4 = -s.f2 * spectral_.nodes.asDiagonal();
    d.time = s.time;
    return d;
  }

  // Coupling part alone.
  FieldState apply_n1(const FieldState& s) const {
    check_shapes(s, grid_, spectral_, "GeneratorN");
    FieldState d = FieldState::zero(grid_, spectral_);
    d.f1 = (bath_.sigma.array() * s.f4.array()).matrix() * spectral_.weights;
    d.f4 = -(bath_.sigma.array().colwise() * s.f1.array()).matrix();
    d.time = s.time;
    return d;
  }

  // Cached exact propagator; built on first use, shared between copies.
  const Propagator& propagator() const;

 private:
  void accumulate_coupling(const FieldState& s, FieldState& d) const {
    d.f1 += (bath_.sigma.array() * s.f4.array()).matrix() * spectral_.weights;
    d.f4 -= (bath_.sigma.array().colwise() * s.f1.array()).matrix();
  }

  struct Cache {
    std::mutex mu;
    std::shared_ptr<const Propagator> prop;
  };

  SpatialGrid grid_;
  SpectralGrid spectral_;
  BathSpectral bath_;
  Units units_;
  std::shared_ptr<Cache> cache_;
};

inline GeneratorN assemble_N(const SpatialGrid& grid, const SpectralGrid& spectral,
                             const BathSpectral& bath, const Units& units = Units()) {
  return GeneratorN(grid, spectral, bath, units);
}

// Conserved functional of the discrete flow:
//   E = 1/2 sum dx f1^2 + 1/2 sum w_f f3^2 + 1/2 sum dx w_k (f2^2 + f4^2).
inline double energy(const FieldState& s, const GeneratorN& n) {
  const SpatialGrid& g = n.grid();
  check_shapes(s, g, n.spectral(), "energy");
  double em = g.dx * s.f1.squaredNorm();
  for (int f = 0; f <= g.n; ++f) em += g.face_weight(f) * s.f3[f] * s.f3[f];
  double bath = 0.0;
  for (int k = 0; k < n.spectral().size(); ++k)
    bath += g.dx * n.spectral().weights[k] *
            (s.f2.col(k).squaredNorm() + s.f4.col(k).squaredNorm());
  return 0.5 * (em + bath);
}

inline double em_energy(const FieldState& s, const GeneratorN& n) {
  const SpatialGrid& g = n.grid();
  double em = g.dx * s.f1.squaredNorm();
  for (int f = 0; f <= g.n; ++f) em += g.face_weight(f) * s.f3[f] * s.f3[f];
  return 0.5 * em;
}

// Physical-field accessors.
inline Eigen::VectorXd electric_field(const FieldState& s, const Units& u) {
  return s.f1 / std::sqrt(u.eps0);
}
inline Eigen::VectorXd magnetic_field(const FieldState& s, const Units& u) {
  return std::sqrt(u.mu0()) * s.f3;
}
// P = -sqrt(eps0) sum_k w_k (sigma/lambda) f2; its time derivative is the
// polarization current J = -sqrt(eps0) sum_k w_k sigma f4.
inline Eigen::VectorXd polarization(const FieldState& s, const GeneratorN& n) {
  const Eigen::VectorXd wl =
      (n.spectral().weights.array() / n.spectral().nodes.array()).matrix();
  return -std::sqrt(n.units().eps0) *
         (n.bath().sigma.array() * s.f2.array()).matrix() * wl;
}
inline Eigen::VectorXd polarization_current(const FieldState& s, const GeneratorN& n) {
  return -std::sqrt(n.units().eps0) *
         (n.bath().sigma.array() * s.f4.array()).matrix() * n.spectral().weights;
}
inline Eigen::VectorXd displacement(const FieldState& s, const GeneratorN& n) {
  return n.units().eps0 * electric_field(s, n.units()) + polarization(s, n);
}

// Exact propagator. The second-order form d^2/dt^2 (f1, f2) = -He (f1, f2)
// closes on the electric-type block; bath nodes in sigma = 0 cells stay bare
// rotors with a closed-form rotation, so only the block spanned by all f1
// plus the f2 rows of coupled cells is eigensolved. Weighted-symmetric
// similarity makes that a standard dense symmetric problem.
class Propagator {
 public:
  Propagator(const SpatialGrid& grid, const SpectralGrid& spectral,
             const BathSpectral& bath, const Units& units)
      : grid_(grid), spectral_(spectral), bath_(bath), units_(units) {
    coupled_ = bath.coupled_cells();
    const int n = grid.n, k = spectral.size(), nc = (int)coupled_.size();
    ne_ = n + nc * k;

    wsq_.resize(ne_);
    const double sdx = std::sqrt(grid.dx);
    for (int i = 0; i < n; ++i) wsq_[i] = sdx;
    for (int j = 0; j < nc; ++j)
      for (int q = 0; q < k; ++q)
        wsq_[n + j * k + q] = std::sqrt(grid.dx * spectral.weights[q]);
    wisq_ = wsq_.cwiseInverse();

    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(ne_, ne_);
    s.topLeftCorner(n, n) = assemble_H0(grid, units);
    for (int i = 0; i < n; ++i) {
      double shift = 0.0;
      for (int q = 0; q < k; ++q)
        shift += spectral.weights[q] * bath.sigma(i, q) * bath.sigma(i, q);
      s(i, i) += shift;
    }
    for (int j = 0; j < nc; ++j) {
      const int cell = coupled_[j];
      for (int q = 0; q < k; ++q) {
        const int col = n + j * k + q;
        const double v = spectral.nodes[q] * bath.sigma(cell, q) *
                         std::sqrt(spectral.weights[q]);
        s(cell, col) = v;
        s(col, cell) = v;
        s(col, col) = spectral.nodes[q] * spectral.nodes[q];
      }
    }
    es_ = eigh(std::move(s));
    mu_ = es_.values.cwiseMax(0.0).cwiseSqrt();
  }

  int dim() const { return ne_; }
  const std::vector<int>& coupled_cells() const { return coupled_; }
  const EigenSystem& eigensystem() const { return es_; }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::VectorXd& weight_sqrt() const { return wsq_; }
  const Eigen::VectorXd& weight_inv_sqrt() const { return wisq_; }

  // Pack the electric-type block (f1 everywhere, f2 on coupled cells).
  Eigen::VectorXd pack(const Eigen::VectorXd& f1, const Eigen::MatrixXd& f2) const {
    const int n = grid_.n, k = spectral_.size();
    Eigen::VectorXd y(ne_);
    y.head(n) = f1;
    for (std::size_t j = 0; j < coupled_.size(); ++j)
      for (int q = 0; q < k; ++q) y[n + (int)j * k + q] = f2(coupled_[j], q);
    return y;
  }

  FieldState evolve(const FieldState& s0, double t) const {
    check_shapes(s0, grid_, spectral_, "Propagator");
    if (t == 0.0) return s0;
    const int n = grid_.n, k = spectral_.size();

    // Electric-type data and its first derivative M fm.
    Eigen::VectorXd mf1 = -units_.c * apply_div(grid_, s0.f3) +
                          (bath_.sigma.array() * s0.f4.array()).matrix() *
                              spectral_.weights;
    Eigen::MatrixXd mf2 = s0.f4 * spectral_.nodes.asDiagonal();

    Eigen::VectorXd yt = es_.vectors.transpose() *
                         (wsq_.array() * pack(s0.f1, s0.f2).array()).matrix();
    Eigen::VectorXd bt = es_.vectors.transpose() *
                         (wsq_.array() * pack(mf1, mf2).array()).matrix();

    Eigen::VectorXd ye(ne_), ui(ne_);
    for (int j = 0; j < ne_; ++j) {
      const double th = mu_[j] * t;
      const double cth = std::cos(th), sn = t * sinc(th), cs = t * t * cosc(th);
      ye[j] = cth * yt[j] + sn * bt[j];
      ui[j] = sn * yt[j] + cs * bt[j];  // integral of the e-block over [0, t]
    }
    Eigen::VectorXd e_new = wisq_.array() * (es_.vectors * ye).array();
    Eigen::VectorXd e_int = wisq_.array() * (es_.vectors * ui).array();

    FieldState out = s0;
    out.time = s0.time + t;
    out.f1 = e_new.head(n);
    // fm(t) = fm(0) - M* (integral of fe): f3 via the gradient, f4 via
    // lambda f2 + sigma f1 on coupled rows.
    out.f3 = s0.f3 - units_.c * apply_grad(grid_, e_int.head(n));

    // Bare rotors on vacuum cells.
    std::vector<char> is_coupled((std::size_t)n, 0);
    for (int c : coupled_) is_coupled[(std::size_t)c] = 1;
    for (int i = 0; i < n; ++i) {
      if (is_coupled[(std::size_t)i]) continue;
      for (int q = 0; q < k; ++q) {
        const double ph = spectral_.nodes[q] * t;
        const double c0 = std::cos(ph), s0q = std::sin(ph);
        const double a = s0.f2(i, q), b = s0.f4(i, q);
        out.f2(i, q) = c0 * a + s0q * b;
        out.f4(i, q) = -s0q * a + c0 * b;
      }
    }
    for (std::size_t j = 0; j < coupled_.size(); ++j) {
      const int cell = coupled_[j];
      for (int q = 0; q < k; ++q) {
        const int idx = n + (int)j * k + q;
        out.f2(cell, q) = e_new[idx];
        out.f4(cell, q) = s0.f4(cell, q) - (spectral_.nodes[q] * e_int[idx] +
                                            bath_.sigma(cell, q) * e_int[cell]);
      }
    }
    return out;
  }

 private:
  SpatialGrid grid_;
  SpectralGrid spectral_;
  BathSpectral bath_;
  Units units_;
  std::vector<int> coupled_;
  int ne_ = 0;
  Eigen::VectorXd wsq_, wisq_, mu_;
  EigenSystem es_;
};

inline const Propagator& GeneratorN::propagator() const {
  std::lock_guard<std::mutex> lock(cache_->mu);
  if (!cache_->prop)
    cache_->prop = std::make_shared<const Propagator>(grid_, spectral_, bath_, units_);
  return *cache_->prop;
}

// Gershgorin bound on the top frequency, used for the rk4 stability check
// without an eigensolve.
inline double frequency_bound(const GeneratorN& n) {
  const SpatialGrid& g = n.grid();
  const SpectralGrid& s = n.spectral();
  const BathSpectral& b = n.bath();
  const double c2 = n.units().c * n.units().c;
  double top = 0.0;
  for (int i = 0; i < g.n; ++i) {
    double row = 4.0 * c2 / (g.dx * g.dx);
    for (int k = 0; k < s.size(); ++k) {
      row += s.weights[k] * b.sigma(i, k) * b.sigma(i, k);
      row += s.nodes[k] * b.sigma(i, k) * std::sqrt(s.weights[k]);
    }
    top = std::max(top, row);
    for (int k = 0; k < s.size(); ++k) {
      const double rot = s.nodes[k] * s.nodes[k] +
                         s.nodes[k] * b.sigma(i, k) * std::sqrt(s.weights[k]);
      top = std::max(top, rot);
    }
  }
  return std::sqrt(top);
}

struct ExactMethod {};
struct Rk4Method {
  double dt = 1e-3;
};

inline FieldState evolve(const FieldState& s, const GeneratorN& n, double t,
                         ExactMethod) {
  if (!std::isfinite(t)) throw std::invalid_argument("evolve: t must be finite");
  return n.propagator().evolve(s, t);
}

inline FieldState evolve(const FieldState& s, const GeneratorN& n, double t,
                         Rk4Method method) {
  if (!std::isfinite(t)) throw std::invalid_argument("evolve: t must be finite");
  if (!(method.dt > 0.0)) throw std::invalid_argument("evolve: rk4 dt must be > 0");
  // rk4 is stable on the imaginary axis up to |mu dt| ~ 2.83; keep margin.
  const double bound = frequency_bound(n);
  if (method.dt * bound > 2.6)
    throw std::invalid_argument(
        "evolve: rk4 unstable, dt * frequency bound = " +
        std::to_string(method.dt * bound) + " > 2.6; reduce dt below " +
        std::to_string(2.6 / bound));
  check_shapes(s, n.grid(), n.spectral(), "evolve");

  const double e0 = energy(s, n);
  const double sign = t >= 0.0 ? 1.0 : -1.0;
  double remaining = std::abs(t);
  FieldState cur = s;
  long step = 0;
  while (remaining > 0.0) {
    const double dt = sign * std::min(method.dt, remaining);
    FieldState k1 = n.apply(cur);
    FieldState mid = cur;
    mid.f1 = cur.f1 + 0.5 * dt * k1.f1;
    mid.f3 = cur.f3 + 0.5 * dt * k1.f3;
    mid.f2 = cur.f2 + 0.5 * dt * k1.f2;
    mid.f4 = cur.f4 + 0.5 * dt * k1.f4;
    FieldState k2 = n.apply(mid);
    mid.f1 = cur.f1 + 0.5 * dt * k2.f1;
    mid.f3 = cur.f3 + 0.5 * dt * k2.f3;
    mid.f2 = cur.f2 + 0.5 * dt * k2.f2;
    mid.f4 = cur.f4 + 0.5 * dt * k2.f4;
    FieldState k3 = n.apply(mid);
    mid.f1 = cur.f1 + dt * k3.f1;
    mid.f3 = cur.f3 + dt * k3.f3;
    mid.f2 = cur.f2 + dt * k3.f2;
    mid.f4 = cur.f4 + dt * k3.f4;
    FieldState k4 = n.apply(mid);
    cur.f1 += dt / 6.0 * (k1.f1 + 2.0 * k2.f1 + 2.0 * k3.f1 + k4.f1);
    cur.f3 += dt / 6.0 * (k1.f3 + 2.0 * k2.f3 + 2.0 * k3.f3 + k4.f3);
    cur.f2 += dt / 6.0 * (k1.f2 + 2.0 * k2.f2 + 2.0 * k3.f2 + k4.f2);
    cur.f4 += dt / 6.0 * (k1.f4 + 2.0 * k2.f4 + 2.0 * k3.f4 + k4.f4);
    cur.time += dt;
    remaining -= std::abs(dt);
    if ((++step & 63) == 0 && e0 > 0.0) {
      const double e = energy(cur, n);
      if (std::abs(e - e0) > 1e-2 * e0)
        throw std::runtime_error(
            "evolve: rk4 energy drift " + std::to_string(std::abs(e - e0) / e0) +
            " at t = " + std::to_string(cur.time) + ", integration unstable");
    }
  }
  return cur;
}

// The block Hamiltonian on (xi1, xi2): h11 = c^2 H0 + diag(sum_k w_k sigma^2),
// off-diagonal coupling lambda sigma, diagonal lambda^2 on the bath block.
// Symmetric and positive definite under the (dx | dx w_k) metric.
struct HamiltonianHe {
  SpatialGrid grid;
  SpectralGrid spectral;
  BathSpectral bath;
  Units units;
  Eigen::MatrixXd h11;

  // y1 = h11 x1 + sum_k w_k lambda_k sigma x2; y2 = lambda sigma x1 + lambda^2 x2.
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> apply(const Eigen::VectorXd& x1,
                                                    const Eigen::MatrixXd& x2) const {
    if (x1.size() != grid.n || x2.rows() != grid.n || x2.cols() != spectral.size())
      throw std::invalid_argument("HamiltonianHe: shape mismatch");
    const Eigen::VectorXd wl =
        (spectral.weights.array() * spectral.nodes.array()).matrix();
    Eigen::VectorXd y1 = h11 * x1 + (bath.sigma.array() * x2.array()).matrix() * wl;
    Eigen::MatrixXd y2 =
        (bath.sigma.array().colwise() * x1.array()).matrix() *
            spectral.nodes.asDiagonal() +
        x2 * spectral.nodes.array().square().matrix().asDiagonal();
    return {std::move(y1), std::move(y2)};
  }
};

inline HamiltonianHe assemble_He(const SpatialGrid& grid, const SpectralGrid& spectral,
                                 const BathSpectral& bath, const Units& units = Units()) {
  HamiltonianHe he{grid, spectral, bath, units, assemble_H0(grid, units)};
  for (int i = 0; i < grid.n; ++i) {
    double shift = 0.0;
    for (int k = 0; k < spectral.size(); ++k)
      shift += spectral.weights[k] * bath.sigma(i, k) * bath.sigma(i, k);
    he.h11(i, i) += shift;
  }
  return he;
}

// Canonical pair in the temporal gauge: xi on cells (and cells x nodes),
// pi = its time derivative.
struct PotentialState {
  Eigen::VectorXd xi1, pi1;
  Eigen::MatrixXd xi2, pi2;
  double wall_mismatch = 0.0;  // set by potentials_from_fields

  static PotentialState zero(const SpatialGrid& g, const SpectralGrid& s) {
    PotentialState p;
    p.xi1 = Eigen::VectorXd::Zero(g.n);
    p.pi1 = Eigen::VectorXd::Zero(g.n);
    p.xi2 = Eigen::MatrixXd::Zero(g.n, s.size());
    p.pi2 = Eigen::MatrixXd::Zero(g.n, s.size());
    return p;
  }
};

// f1 = -pi1, f2 = -pi2, f3 = c grad xi1, f4 = sigma xi1 + lambda xi2.
inline FieldState fields_from_potentials(const PotentialState& p, const GeneratorN& n) {
  FieldState s;
  s.f1 = -p.pi1;
  s.f2 = -p.pi2;
  s.f3 = n.units().c * apply_grad(n.grid(), p.xi1);
  s.f4 = (n.bath().sigma.array().colwise() * p.xi1.array()).matrix() +
         p.xi2 * n.spectral().nodes.asDiagonal();
  s.time = 0.0;
  return s;
}

// Inverse map. xi1 is the antiderivative of f3/c fixed by the left-wall
// mirror condition; the right wall then carries the one leftover constraint,
// reported as wall_mismatch (zero for any state in the image of the forward
// map). xi2 = (f4 - sigma xi1)/lambda.
inline PotentialState potentials_from_fields(const FieldState& s, const GeneratorN& n) {
  const SpatialGrid& g = n.grid();
  check_shapes(s, g, n.spectral(), "potentials_from_fields");
  PotentialState p;
  p.pi1 = -s.f1;
  p.pi2 = -s.f2;
  p.xi1.resize(g.n);
  const double c = n.units().c;
  p.xi1[0] = 0.5 * g.dx * s.f3[0] / c;
  for (int i = 1; i < g.n; ++i) p.xi1[i] = p.xi1[i - 1] + g.dx * s.f3[i] / c;
  const double expected_last = -2.0 * c * p.xi1[g.n - 1] / g.dx;
  const double scale = s.f3.cwiseAbs().maxCoeff();
  p.wall_mismatch = std::abs(s.f3[g.n] - expected_last) / (scale > 0.0 ? scale : 1.0);
  p.xi2 = (s.f4 - (n.bath().sigma.array().colwise() * p.xi1.array()).matrix()) *
          n.spectral().nodes.cwiseInverse().asDiagonal();
  return p;
}

// H = 1/2 <pi, pi> + 1/2 <He xi, xi>, L = 1/2 <pi, pi> - 1/2 <He xi, xi>,
// both under the weighted metric. H equals energy() of the mapped field
// state identically: <He xi, xi> telescopes to |c grad xi1|^2 + |sigma xi1 +
// lambda xi2|^2, which are the f3/f4 contributions.
inline std::pair<double, double> hamiltonian_and_lagrangian(const PotentialState& p,
                                                            const HamiltonianHe& he) {
  const SpatialGrid& g = he.grid;
  if (p.xi1.size() != g.n || p.xi2.rows() != g.n || p.xi2.cols() != he.spectral.size())
    throw std::invalid_argument("hamiltonian_and_lagrangian: shape mismatch");
  double kin = g.dx * p.pi1.squaredNorm();
  for (int k = 0; k < he.spectral.size(); ++k)
    kin += g.dx * he.spectral.weights[k] * p.pi2.col(k).squaredNorm();
  auto [y1, y2] = he.apply(p.xi1, p.xi2);
  double pot = g.dx * y1.dot(p.xi1);
  for (int k = 0; k < he.spectral.size(); ++k)
    pot += g.dx * he.spectral.weights[k] * y2.col(k).dot(p.xi2.col(k));
  return {0.5 * (kin + pot), 0.5 * (kin - pot)};
}

// Full spectrum of He under the weighted metric. The coupled block (all of
// xi1 plus xi2 rows of coupled cells) is eigensolved densely; every bath
// node of a vacuum cell is an exact eigenpair (lambda_k^2, unit xi2) and is
// returned by description rather than materialized.
struct HeEigen {
  std::vector<int> coupled_cells;
  std::vector<int> vacuum_cells;
  Eigen::VectorXd omega2;    // coupled-block eigenvalues, ascending
  Eigen::MatrixXd f1_block;  // grid.n x ne
  Eigen::MatrixXd f2_block;  // (coupled * nodes) x ne, cell-major rows
  Eigen::VectorXd bath_branch;  // lambda_k^2, shared by every vacuum cell

  int coupled_dim() const { return (int)omega2.size(); }
  long total() const {
    return (long)omega2.size() + (long)vacuum_cells.size() * bath_branch.size();
  }
};

inline HeEigen he_eigen(const HamiltonianHe& he) {
  const int n = he.grid.n, k = he.spectral.size();
  HeEigen out;
  out.coupled_cells = he.bath.coupled_cells();
  {
    std::vector<char> is_coupled((std::size_t)n, 0);
    for (int c : out.coupled_cells) is_coupled[(std::size_t)c] = 1;
    for (int i = 0; i < n; ++i)
      if (!is_coupled[(std::size_t)i]) out.vacuum_cells.push_back(i);
  }
  const int nc = (int)out.coupled_cells.size();
  const int ne = n + nc * k;

  Eigen::VectorXd wsq(ne);
  const double sdx = std::sqrt(he.grid.dx);
  for (int i = 0; i < n; ++i) wsq[i] = sdx;
  for (int j = 0; j < nc; ++j)
    for (int q = 0; q < k; ++q)
      wsq[n + j * k + q] = std::sqrt(he.grid.dx * he.spectral.weights[q]);

  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(ne, ne);
  s.topLeftCorner(n, n) = he.h11;
  for (int j = 0; j < nc; ++j) {
    const int cell = out.coupled_cells[j];
    for (int q = 0; q < k; ++q) {
      const int col = n + j * k + q;
      const double v = he.spectral.nodes[q] * he.bath.sigma(cell, q) *
                       std::sqrt(he.spectral.weights[q]);
      s(cell, col) = v;
      s(col, cell) = v;
      s(col, col) = he.spectral.nodes[q] * he.spectral.nodes[q];
    }
  }
  EigenSystem es = eigh(std::move(s));

  out.omega2 = std::move(es.values);
  Eigen::MatrixXd vecs = std::move(es.vectors);
  for (int j = 0; j < ne; ++j)
    vecs.col(j).array() /= wsq.array();  // back to plain coordinates, W-orthonormal

  // Bath-heavy pairs come out of the dense solve with a first-block residual
  // of order eps*||He||, which towers over the omega^2*||F1|| contract scale
  // when F1 is nearly empty. Re-solving F1 from the first-block equation at
  // fixed F2 (in the h11 eigenbasis, skipping near-resonant components)
  // restores the contract; a pair is only replaced when that actually
  // shrinks its residual, so photon-branch pairs stay untouched.
  if (nc > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> hs(he.h11);
    if (hs.info() != Eigen::Success)
      throw std::runtime_error("he_eigen: h11 eigensolve failed");
    const Eigen::MatrixXd& qb = hs.eigenvectors();
    const Eigen::VectorXd& d = hs.eigenvalues();
    const double dmax = d.cwiseAbs().maxCoeff();
    for (int j = 0; j < ne; ++j) {
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
      for (int c = 0; c < nc; ++c) {
        const int cell = out.coupled_cells[(std::size_t)c];
        double acc = 0.0;
        for (int q = 0; q < k; ++q)
          acc += he.spectral.weights[q] * he.spectral.nodes[q] *
                 he.bath.sigma(cell, q) * vecs(n + c * k + q, j);
        rhs[cell] = acc;
      }
      const Eigen::VectorXd f1 = vecs.col(j).head(n);
      const double res = (he.h11 * f1 - out.omega2[j] * f1 + rhs).norm();
      if (res <= 2.5e-11 * std::abs(out.omega2[j]) * f1.norm()) continue;
      Eigen::VectorXd comp = qb.transpose() * (-rhs);
      for (int i = 0; i < n; ++i) {
        const double gap = d[i] - out.omega2[j];
        comp[i] = std::abs(gap) > 1e-6 * dmax ? comp[i] / gap : 0.0;
      }
      const Eigen::VectorXd f1n = qb * comp;
      if ((he.h11 * f1n - out.omega2[j] * f1n + rhs).norm() >= res) continue;
      vecs.col(j).head(n) = f1n;
      double nrm2 = he.grid.dx * f1n.squaredNorm();
      for (int c = 0; c < nc; ++c)
        for (int q = 0; q < k; ++q)
          nrm2 += he.grid.dx * he.spectral.weights[q] *
                  vecs(n + c * k + q, j) * vecs(n + c * k + q, j);
      vecs.col(j) /= std::sqrt(nrm2);
    }
  }

  out.f1_block = vecs.topRows(n);
  out.f2_block = vecs.bottomRows(nc * k);
  out.bath_branch = he.spectral.nodes.array().square();
  return out;
}

// First-block residual of one coupled eigenpair,
//   r = || h11 F1 + sum_k w_k lambda_k sigma F2 - omega^2 F1 ||,
// returned with the scale ||omega^2 F1||. Exact bath-branch pairs have both
// zero.
inline std::pair<double, double> he_first_block_residual(const HamiltonianHe& he,
                                                         const HeEigen& eig, int j) {
  if (j < 0 || j >= eig.coupled_dim())
    throw std::invalid_argument("he_first_block_residual: index out of range");
  const int n = he.grid.n, k = he.spectral.size();
  Eigen::VectorXd f1 = eig.f1_block.col(j);
  Eigen::VectorXd r = he.h11 * f1 - eig.omega2[j] * f1;
  for (std::size_t c = 0; c < eig.coupled_cells.size(); ++c) {
    const int cell = eig.coupled_cells[c];
    for (int q = 0; q < k; ++q)
      r[cell] += he.spectral.weights[q] * he.spectral.nodes[q] *
                 he.bath.sigma(cell, q) * eig.f2_block((int)c * k + q, j);
  }
  return {r.norm(), std::abs(eig.omega2[j]) * f1.norm()};
}

}  // namespace medeq
