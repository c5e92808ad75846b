#pragma once

#include <Eigen/Dense>

#include <complex>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "medeq/af_dynamics.hpp"
#include "medeq/lattice.hpp"
#include "medeq/units.hpp"

namespace medeq {

using Complex = std::complex<double>;

// Enumeration of the canonical pair (xi1, xi2, pi1, pi2) as one flat
// coordinate vector, with the metric weight of every slot. All operator
// statements downstream are linear functionals over this basis paired by the
// symplectic form, so commutators are finite arithmetic, not analysis.
struct CanonicalBasis {
  SpatialGrid grid;
  SpectralGrid spectral;
  Units units;
  int half = 0;  // slots per half: n + n*k

  CanonicalBasis(SpatialGrid g, SpectralGrid s, Units u)
      : grid(g), spectral(std::move(s)), units(u) {
    units.validate();
    half = grid.n * (1 + spectral.size());
  }

  int dim() const { return 2 * half; }
  int xi1(int i) const { return check_cell(i); }
  int xi2(int i, int q) const {
    return grid.n + check_cell(i) * spectral.size() + check_node(q);
  }
  int pi1(int i) const { return half + check_cell(i); }
  int pi2(int i, int q) const {
    return half + grid.n + check_cell(i) * spectral.size() + check_node(q);
  }

  // Metric weight of a xi-half slot (pi slots mirror it).
  double weight(int slot) const {
    const int s = slot < half ? slot : slot - half;
    if (s < grid.n) return grid.dx;
    return grid.dx * spectral.weights[(s - grid.n) % spectral.size()];
  }

  bool matches(const CanonicalBasis& o) const {
    return grid.n == o.grid.n && grid.dx == o.grid.dx &&
           spectral.size() == o.spectral.size() &&
           spectral.nodes == o.spectral.nodes && spectral.weights == o.spectral.weights;
  }

 private:
  int check_cell(int i) const {
    if (i < 0 || i >= grid.n) throw std::out_of_range("CanonicalBasis: cell index");
    return i;
  }
  int check_node(int q) const {
    if (q < 0 || q >= spectral.size())
      throw std::out_of_range("CanonicalBasis: node index");
    return q;
  }
};

using BasisPtr = std::shared_ptr<const CanonicalBasis>;

inline BasisPtr make_canonical_basis(const SpatialGrid& g, const SpectralGrid& s,
                                     const Units& u = Units()) {
  return std::make_shared<const CanonicalBasis>(g, s, u);
}

// A (possibly complex) linear functional of the canonical coordinates plus a
// constant offset. Operator-valued fields are these; their commutators are
// c-numbers delivered by commutator() below.
struct LinearObservable {
  BasisPtr basis;
  Eigen::VectorXcd coef;
  Complex offset{0.0, 0.0};

  static LinearObservable zero(const BasisPtr& b) {
    LinearObservable a;
    a.basis = b;
    a.coef = Eigen::VectorXcd::Zero(b->dim());
    return a;
  }

  void require_valid(const char* who) const {
    if (!basis || coef.size() != basis->dim())
      throw std::invalid_argument(std::string(who) + ": observable has no basis");
    if (!coef.allFinite())
      throw std::invalid_argument(std::string(who) + ": non-finite coefficients");
  }
};

inline void require_same_basis(const LinearObservable& a, const LinearObservable& b,
                               const char* who) {
  a.require_valid(who);
  b.require_valid(who);
  if (a.basis != b.basis && !a.basis->matches(*b.basis))
    throw std::invalid_argument(std::string(who) + ": basis mismatch");
}

inline LinearObservable operator+(const LinearObservable& a, const LinearObservable& b) {
  require_same_basis(a, b, "operator+");
  LinearObservable r = a;
  r.coef += b.coef;
  r.offset += b.offset;
  return r;
}

inline LinearObservable operator-(const LinearObservable& a, const LinearObservable& b) {
  require_same_basis(a, b, "operator-");
  LinearObservable r = a;
  r.coef -= b.coef;
  r.offset -= b.offset;
  return r;
}

inline LinearObservable operator*(Complex s, const LinearObservable& a) {
  LinearObservable r = a;
  r.coef *= s;
  r.offset *= s;
  return r;
}

// Hermitian adjoint: conjugate coefficients.
inline LinearObservable adjoint(const LinearObservable& a) {
  LinearObservable r = a;
  r.coef = a.coef.conjugate();
  r.offset = std::conj(a.offset);
  return r;
}

// Flat coordinates of a classical potential state, slot order of the basis.
inline Eigen::VectorXd flatten(const PotentialState& p, const CanonicalBasis& b) {
  const int n = b.grid.n, k = b.spectral.size();
  if (p.xi1.size() != n || p.xi2.rows() != n || p.xi2.cols() != k)
    throw std::invalid_argument("flatten: state shape mismatch");
  Eigen::VectorXd y(b.dim());
  y.head(n) = p.xi1;
  y.segment(b.half, n) = p.pi1;
  for (int i = 0; i < n; ++i)
    for (int q = 0; q < k; ++q) {
      y[n + i * k + q] = p.xi2(i, q);
      y[b.half + n + i * k + q] = p.pi2(i, q);
    }
  return y;
}

inline Complex value(const LinearObservable& a, const PotentialState& p) {
  a.require_valid("value");
  const Eigen::VectorXd y = flatten(p, *a.basis);
  return Complex(a.coef.real().dot(y), a.coef.imag().dot(y)) + a.offset;
}

// Symplectic pairing: [A, B] = i hbar sum_slots (1/W) (A_xi B_pi - A_pi B_xi),
// extended bilinearly to complex coefficients. Offsets drop out.
inline Complex commutator(const LinearObservable& a, const LinearObservable& b) {
  require_same_basis(a, b, "commutator");
  const CanonicalBasis& bs = *a.basis;
  Complex acc{0.0, 0.0};
  for (int s = 0; s < bs.half; ++s) {
    const Complex term =
        a.coef[s] * b.coef[bs.half + s] - a.coef[bs.half + s] * b.coef[s];
    if (term != Complex{0.0, 0.0}) acc += term / bs.weight(s);
  }
  return Complex(0.0, bs.units.hbar) * acc;
}

// Heisenberg transport: coefficients move along the transpose flow so that
// <A(t), y> = <A, y(t)> for every classical trajectory y(t) of the generator.
// The coupled block rides the cached eigendecomposition; bath slots of
// vacuum cells rotate in closed form.
inline LinearObservable evolve_observable(const LinearObservable& a,
                                          const GeneratorN& gen, double t) {
  a.require_valid("evolve_observable");
  if (!std::isfinite(t)) throw std::invalid_argument("evolve_observable: t non-finite");
  const CanonicalBasis& bs = *a.basis;
  if (bs.grid.n != gen.grid().n || bs.grid.dx != gen.grid().dx ||
      bs.spectral.size() != gen.spectral().size() ||
      bs.spectral.nodes != gen.spectral().nodes)
    throw std::invalid_argument("evolve_observable: generator grids differ from basis");
  if (t == 0.0) return a;

  const Propagator& prop = gen.propagator();
  const int n = bs.grid.n, k = bs.spectral.size(), ne = prop.dim();
  const std::vector<int>& coupled = prop.coupled_cells();

  std::vector<int> slot(ne);
  for (int i = 0; i < n; ++i) slot[i] = bs.xi1(i);
  for (std::size_t j = 0; j < coupled.size(); ++j)
    for (int q = 0; q < k; ++q)
      slot[n + (int)j * k + q] = bs.xi2(coupled[j], q);

  LinearObservable out = a;
  Eigen::VectorXd axi(bs.half), api(bs.half);
  const Eigen::VectorXd& mu = prop.mu();
  const Eigen::MatrixXd& v = prop.eigensystem().vectors;
  const Eigen::VectorXd& wsq = prop.weight_sqrt();
  const Eigen::VectorXd& wisq = prop.weight_inv_sqrt();

  for (int part = 0; part < 2; ++part) {
    for (int s = 0; s < bs.half; ++s) {
      axi[s] = part == 0 ? a.coef[s].real() : a.coef[s].imag();
      api[s] = part == 0 ? a.coef[bs.half + s].real() : a.coef[bs.half + s].imag();
    }

    Eigen::VectorXd gxi(ne), gpi(ne);
    for (int e = 0; e < ne; ++e) {
      gxi[e] = wisq[e] * axi[slot[e]];
      gpi[e] = wisq[e] * api[slot[e]];
    }
    Eigen::VectorXd txi = v.transpose() * gxi;
    Eigen::VectorXd tpi = v.transpose() * gpi;
    Eigen::VectorXd oxi(ne), opi(ne);
    for (int e = 0; e < ne; ++e) {
      const double th = mu[e] * t;
      const double c = std::cos(th), s = std::sin(th);
      oxi[e] = c * txi[e] - mu[e] * s * tpi[e];
      opi[e] = t * sinc(th) * txi[e] + c * tpi[e];
    }
    Eigen::VectorXd bxi = v * oxi;
    Eigen::VectorXd bpi = v * opi;
    for (int e = 0; e < ne; ++e) {
      axi[slot[e]] = wsq[e] * bxi[e];
      api[slot[e]] = wsq[e] * bpi[e];
    }

    std::vector<char> is_coupled((std::size_t)n, 0);
    for (int c : coupled) is_coupled[(std::size_t)c] = 1;
    for (int i = 0; i < n; ++i) {
      if (is_coupled[(std::size_t)i]) continue;
      for (int q = 0; q < k; ++q) {
        const double lam = bs.spectral.nodes[q];
        const double th = lam * t;
        const double c = std::cos(th), s = std::sin(th);
        const int sx = bs.xi2(i, q);
        const double x0 = axi[sx], p0 = api[sx];
        axi[sx] = c * x0 - lam * s * p0;
        api[sx] = t * sinc(th) * x0 + c * p0;
      }
    }

    for (int s = 0; s < bs.half; ++s) {
      const double other_xi = part == 0 ? out.coef[s].imag() : out.coef[s].real();
      const double other_pi =
          part == 0 ? out.coef[bs.half + s].imag() : out.coef[bs.half + s].real();
      out.coef[s] = part == 0 ? Complex(axi[s], other_xi) : Complex(other_xi, axi[s]);
      out.coef[bs.half + s] =
          part == 0 ? Complex(api[s], other_pi) : Complex(other_pi, api[s]);
    }
  }
  return out;
}

// Field observables in the temporal gauge: f1 = -pi1, f2 = -pi2,
// f3 = c grad xi1, f4 = sigma xi1 + lambda xi2.
inline LinearObservable f1_observable(const BasisPtr& b, int i) {
  LinearObservable a = LinearObservable::zero(b);
  a.coef[b->pi1(i)] = -1.0;
  return a;
}

inline LinearObservable f2_observable(const BasisPtr& b, int i, int q) {
  LinearObservable a = LinearObservable::zero(b);
  a.coef[b->pi2(i, q)] = -1.0;
  return a;
}

inline LinearObservable f3_observable(const BasisPtr& b, int f) {
  const int n = b->grid.n;
  if (f < 0 || f > n) throw std::out_of_range("f3_observable: face index");
  LinearObservable a = LinearObservable::zero(b);
  const double c_dx = b->units.c / b->grid.dx;
  if (f == 0)
    a.coef[b->xi1(0)] = 2.0 * c_dx;
  else if (f == n)
    a.coef[b->xi1(n - 1)] = -2.0 * c_dx;
  else {
    a.coef[b->xi1(f)] = c_dx;
    a.coef[b->xi1(f - 1)] = -c_dx;
  }
  return a;
}

inline LinearObservable f4_observable(const BasisPtr& b, const BathSpectral& bath,
                                      int i, int q) {
  if (bath.sigma.rows() != b->grid.n || bath.sigma.cols() != b->spectral.size())
    throw std::invalid_argument("f4_observable: bath shape mismatch");
  LinearObservable a = LinearObservable::zero(b);
  a.coef[b->xi1(i)] = bath.sigma(i, q);
  a.coef[b->xi2(i, q)] = b->spectral.nodes[q];
  return a;
}

inline LinearObservable electric_observable(const BasisPtr& b, int i) {
  return Complex(1.0 / std::sqrt(b->units.eps0), 0.0) * f1_observable(b, i);
}

inline LinearObservable magnetic_observable(const BasisPtr& b, int f) {
  return Complex(std::sqrt(b->units.mu0()), 0.0) * f3_observable(b, f);
}

// Annihilation observable of one bath node, b = (f4 - i f2)/sqrt(2 hbar lambda);
// the matching ladder partner is adjoint(b). The Langevin-side operator is
// its negative.
struct BosonicMode {
  LinearObservable b;
  int cell = 0;
  int node = 0;
};

inline BosonicMode make_bosonic_mode(const LinearObservable& f2, const LinearObservable& f4,
                                     double lambda, int cell, int node) {
  require_same_basis(f2, f4, "make_bosonic_mode");
  if (!(lambda > 0.0))
    throw std::invalid_argument("make_bosonic_mode: lambda must be > 0");
  const double hbar = f2.basis->units.hbar;
  const Complex scale(1.0 / std::sqrt(2.0 * hbar * lambda), 0.0);
  BosonicMode m;
  m.b = scale * (f4 - Complex(0.0, 1.0) * f2);
  m.cell = cell;
  m.node = node;
  return m;
}

// Build the full mode set from per-node field observables (any callable
// (i, q) -> LinearObservable).
template <typename F2Fn, typename F4Fn>
std::vector<BosonicMode> make_bosonic_modes(const BasisPtr& basis, F2Fn&& f2_at,
                                            F4Fn&& f4_at) {
  std::vector<BosonicMode> modes;
  const int n = basis->grid.n, k = basis->spectral.size();
  modes.reserve((std::size_t)n * k);
  for (int i = 0; i < n; ++i)
    for (int q = 0; q < k; ++q)
      modes.push_back(make_bosonic_mode(f2_at(i, q), f4_at(i, q),
                                        basis->spectral.nodes[q], i, q));
  return modes;
}

// Diagonal quadratic form sum_ik dx w_k hbar lambda_k b'b evaluated on
// classical data (normal ordered, no zero-point constant).
struct LnHamiltonian {
  BasisPtr basis;
  std::vector<BosonicMode> modes;

  double evaluate(const PotentialState& p) const {
    double acc = 0.0;
    for (const BosonicMode& m : modes) {
      const double w =
          basis->grid.dx * basis->spectral.weights[m.node] * basis->units.hbar *
          basis->spectral.nodes[m.node];
      acc += w * std::norm(value(m.b, p));
    }
    return acc;
  }
};

inline LnHamiltonian ln_hamiltonian(std::vector<BosonicMode> modes) {
  if (modes.empty()) throw std::invalid_argument("ln_hamiltonian: no modes");
  const BasisPtr basis = modes.front().b.basis;
  const int n = basis->grid.n, k = basis->spectral.size();
  std::vector<char> seen((std::size_t)n * k, 0);
  for (const BosonicMode& m : modes) {
    require_same_basis(m.b, modes.front().b, "ln_hamiltonian");
    if (m.cell < 0 || m.cell >= n || m.node < 0 || m.node >= k)
      throw std::invalid_argument("ln_hamiltonian: mode label out of range");
    seen[(std::size_t)m.cell * k + m.node] = 1;
  }
  for (char c : seen)
    if (!c) throw std::invalid_argument("ln_hamiltonian: incomplete mode set");
  return LnHamiltonian{basis, std::move(modes)};
}

}  // namespace medeq
