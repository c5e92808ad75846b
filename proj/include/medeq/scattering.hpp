#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "medeq/af_dynamics.hpp"
#include "medeq/dispersion.hpp"
#include "medeq/ln_solver.hpp"
#include "medeq/phasespace.hpp"

// Asymptotic extraction of the freely rotating bath data and its use as the
// bridge between the two quantization routes: finite-horizon wave operators,
// the primed noise polarization/current, and the commutator-level
// identification of the extracted current with the Langevin noise kernel.

namespace medeq {

// Distance from the absorbing support to the nearest wall. Infinite when the
// coupling vanishes everywhere.
inline double wall_clearance(const GeneratorN& gen) {
  const std::vector<int> cells = gen.bath().coupled_cells();
  if (cells.empty()) return std::numeric_limits<double>::infinity();
  const SpatialGrid& g = gen.grid();
  const double lo = cells.front() * g.dx;
  const double hi = (cells.back() + 1) * g.dx;
  return std::min(lo, g.n * g.dx - hi);
}

inline double absorber_width(const GeneratorN& gen) {
  const std::vector<int> cells = gen.bath().coupled_cells();
  if (cells.empty()) return 0.0;
  return (cells.back() - cells.front() + 1) * gen.grid().dx;
}

namespace detail {

// Every finite-horizon surrogate below emulates a limit that only exists
// while the radiated field is still in free flight: the horizon must clear
// the absorber but stay short of the first wall echo.
inline void require_horizon(const GeneratorN& gen, double horizon, const char* who) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw std::invalid_argument(std::string(who) + ": horizon must be finite and > 0");
  const double c = gen.units().c;
  if (c * horizon >= wall_clearance(gen))
    throw std::invalid_argument(std::string(who) +
                                ": horizon reaches the wall, reflections would "
                                "contaminate the asymptotics");
  const double width = absorber_width(gen);
  if (width > 0.0 && c * horizon <= width)
    throw std::invalid_argument(std::string(who) +
                                ": horizon below the light-crossing time of "
                                "the absorber");
}

inline Eigen::VectorXd simpson_weights(int nodes, double dt) {
  if (nodes < 3 || nodes % 2 == 0)
    throw std::invalid_argument("simpson_weights: need an even panel count");
  Eigen::VectorXd w(nodes);
  w[0] = w[nodes - 1] = dt / 3.0;
  for (int m = 1; m < nodes - 1; ++m) w[m] = (m % 2 == 1 ? 4.0 : 2.0) * dt / 3.0;
  return w;
}

inline void require_nyquist(double dt, double lambda_max, const char* who) {
  if (!(dt > 0.0)) throw std::invalid_argument(std::string(who) + ": dt must be > 0");
  if (dt * lambda_max > 0.25 * kPi)
    throw std::invalid_argument(std::string(who) +
                                ": history grid too coarse for the top bath "
                                "frequency");
}

}  // namespace detail

// Sampled trajectory of f1 on [-horizon, 0], column m at time -horizon + m dt.
struct F1History {
  Eigen::MatrixXd f1;
  double dt = 0.0;
  double horizon = 0.0;

  int nodes() const { return (int)f1.cols(); }
  double time_at(int m) const { return -horizon + m * dt; }
};

inline F1History record_f1_history(const GeneratorN& gen, const FieldState& s0,
                                   double horizon, double dt) {
  check_shapes(s0, gen.grid(), gen.spectral(), "record_f1_history");
  detail::require_horizon(gen, horizon, "record_f1_history");
  if (!(dt > 0.0))
    throw std::invalid_argument("record_f1_history: dt must be > 0");
  const double panels_real = horizon / dt;
  const int panels = (int)std::llround(panels_real);
  if (panels < 2 || std::abs(panels_real - panels) > 1e-9 * panels)
    throw std::invalid_argument("record_f1_history: dt must divide the horizon");
  const Propagator& prop = gen.propagator();
  F1History h;
  h.dt = dt;
  h.horizon = horizon;
  h.f1.resize(gen.grid().n, panels + 1);
  for (int m = 0; m <= panels; ++m) {
    const double t = -horizon + m * dt;
    h.f1.col(m) = (t == 0.0) ? s0.f1 : prop.evolve(s0, t).f1;
  }
  return h;
}

// Asymptotic bath data stripped of its free rotation. Carries either plain
// values (full grid) or observables (a chosen cell set); the two forms never
// mix in one instance.
struct PrimedFields {
  bool observable = false;
  double horizon = 0.0;
  double spread = 0.0;  // limit-route extrapolation spread, zero for quadrature routes

  Eigen::MatrixXcd f0p;  // values route: cells x nodes, f4' - i f2'

  std::vector<int> cells;  // observable route
  int nodes = 0;
  std::vector<LinearObservable> f2p, f4p;

  void require_values(const char* who) const {
    if (observable)
      throw std::invalid_argument(std::string(who) +
                                  ": needs value-typed primed fields");
  }
  void require_observable(const char* who) const {
    if (!observable)
      throw std::invalid_argument(std::string(who) +
                                  ": needs observable-typed primed fields");
  }

  int cell_index(int cell) const {
    for (std::size_t j = 0; j < cells.size(); ++j)
      if (cells[j] == cell) return (int)j;
    throw std::out_of_range("PrimedFields: cell not in the stored set");
  }
  const LinearObservable& f2p_at(int cell, int q) const {
    require_observable("f2p_at");
    return f2p[(std::size_t)cell_index(cell) * nodes + check_node(q)];
  }
  const LinearObservable& f4p_at(int cell, int q) const {
    require_observable("f4p_at");
    return f4p[(std::size_t)cell_index(cell) * nodes + check_node(q)];
  }
  LinearObservable f0p_at(int cell, int q) const {
    return f4p_at(cell, q) - Complex(0.0, 1.0) * f2p_at(cell, q);
  }

 private:
  int check_node(int q) const {
    if (q < 0 || q >= nodes) throw std::out_of_range("PrimedFields: node index");
    return q;
  }
};

// Long-time route: e^{i lambda t} f0(t) sampled at a geometric approach to
// -horizon, extrapolated by one Aitken step per node. The spread between the
// last sample and the extrapolant is the reported error estimate; a sample
// sequence that stops settling means the horizon is too short.
inline PrimedFields f0_extract_limit(const GeneratorN& gen, const FieldState& s0,
                                     double horizon, int samples = 6) {
  check_shapes(s0, gen.grid(), gen.spectral(), "f0_extract_limit");
  detail::require_horizon(gen, horizon, "f0_extract_limit");
  if (samples < 3)
    throw std::invalid_argument("f0_extract_limit: need at least 3 samples");
  const Propagator& prop = gen.propagator();
  const int n = gen.grid().n, k = gen.spectral().size();
  const Eigen::VectorXd& lam = gen.spectral().nodes;

  std::vector<Eigen::MatrixXcd> s((std::size_t)samples);
  for (int j = 1; j <= samples; ++j) {
    const double t = -horizon * (1.0 - std::pow(2.0, -j));
    const FieldState st = prop.evolve(s0, t);
    Eigen::MatrixXcd sj(n, k);
    for (int q = 0; q < k; ++q) {
      const Complex rot = std::polar(1.0, lam[q] * t);
      for (int i = 0; i < n; ++i)
        sj(i, q) = rot * Complex(st.f4(i, q), -st.f2(i, q));
    }
    s[(std::size_t)j - 1] = std::move(sj);
  }

  // Settling check. A clean preset decays geometrically; the discretized
  // bath adds a small beat wobble that is tolerated here and ends up in the
  // reported spread. What must throw: an order-of-magnitude jump inside the
  // window (incoming radiation reaching the absorber) and data whose
  // increments never drop below the sample scale (rough spectral content
  // has no asymptotics before the quadrature revival).
  const double scale = s[0].cwiseAbs().maxCoeff();
  double prev = std::numeric_limits<double>::infinity();
  double dmin = std::numeric_limits<double>::infinity();
  for (int j = 1; j < samples; ++j) {
    const double d = (s[(std::size_t)j] - s[(std::size_t)j - 1]).cwiseAbs().maxCoeff();
    if (d > 4.0 * prev + 1e-3 * scale)
      throw std::runtime_error(
          "f0_extract_limit: sample sequence is not settling, horizon too short");
    prev = d;
    dmin = std::min(dmin, d);
  }
  if (!(dmin < 0.5 * scale))
    throw std::runtime_error(
        "f0_extract_limit: sample sequence is not settling, horizon too short");

  const Eigen::MatrixXcd& a = s[(std::size_t)samples - 3];
  const Eigen::MatrixXcd& b = s[(std::size_t)samples - 2];
  const Eigen::MatrixXcd& c = s[(std::size_t)samples - 1];
  PrimedFields out;
  out.horizon = horizon;
  out.f0p.resize(n, k);
  for (int i = 0; i < n; ++i)
    for (int q = 0; q < k; ++q) {
      const Complex d1 = b(i, q) - a(i, q), d2 = c(i, q) - b(i, q);
      const Complex den = d2 - d1;
      out.f0p(i, q) = std::abs(den) > 1e-14 * (scale + std::abs(d2))
                          ? c(i, q) - d2 * d2 / den
                          : c(i, q);
    }
  out.spread = (out.f0p - c).cwiseAbs().maxCoeff();
  return out;
}

// t = 0 route: f0' = f0(0) + sigma int_{-T}^0 e^{i lambda s} f1(s) ds by
// Simpson quadrature of the recorded history, split into the sine/cosine
// components of the pair.
inline PrimedFields f0_extract_integral(const F1History& hist, const GeneratorN& gen,
                                        const FieldState& s0) {
  check_shapes(s0, gen.grid(), gen.spectral(), "f0_extract_integral");
  detail::require_horizon(gen, hist.horizon, "f0_extract_integral");
  const int n = gen.grid().n, k = gen.spectral().size();
  if (hist.f1.rows() != n)
    throw std::invalid_argument("f0_extract_integral: history grid mismatch");
  detail::require_nyquist(hist.dt, gen.spectral().lambda_max(), "f0_extract_integral");
  const int m = hist.nodes();
  const Eigen::VectorXd w = detail::simpson_weights(m, hist.dt);

  Eigen::MatrixXd ws2(m, k), ws4(m, k);
  for (int q = 0; q < k; ++q) {
    const double lam = gen.spectral().nodes[q];
    for (int j = 0; j < m; ++j) {
      const double sm = hist.time_at(j);
      ws2(j, q) = -w[j] * std::sin(lam * sm);
      ws4(j, q) = w[j] * std::cos(lam * sm);
    }
  }
  const Eigen::MatrixXd i2 = hist.f1 * ws2;
  const Eigen::MatrixXd i4 = hist.f1 * ws4;
  const Eigen::MatrixXd& sig = gen.bath().sigma;

  PrimedFields out;
  out.horizon = hist.horizon;
  out.f0p.resize(n, k);
  for (int i = 0; i < n; ++i)
    for (int q = 0; q < k; ++q) {
      const double f2 = s0.f2(i, q) + sig(i, q) * i2(i, q);
      const double f4 = s0.f4(i, q) + sig(i, q) * i4(i, q);
      out.f0p(i, q) = Complex(f4, -f2);
    }
  return out;
}

// Observable-typed extraction over a stored cell set. The only data the
// integral needs are the transported f1 functionals of the chosen cells;
// those ride the cached propagator eigensystem once per cell, and the
// quadrature collapses to two small matrix products per cell. Cells with
// zero coupling keep their bare slot observables.
inline PrimedFields f0_extract_integral(const GeneratorN& gen, const BasisPtr& basis,
                                        double horizon, double dt,
                                        std::vector<int> cells) {
  detail::require_horizon(gen, horizon, "f0_extract_integral");
  detail::require_nyquist(dt, gen.spectral().lambda_max(), "f0_extract_integral");
  const int n = gen.grid().n, k = gen.spectral().size();
  if (basis->grid.n != n || basis->grid.dx != gen.grid().dx ||
      basis->spectral.size() != k || basis->spectral.nodes != gen.spectral().nodes)
    throw std::invalid_argument("f0_extract_integral: basis grids differ from generator");
  const double panels_real = horizon / dt;
  const int panels = (int)std::llround(panels_real);
  if (panels < 2 || panels % 2 != 0 || std::abs(panels_real - panels) > 1e-9 * panels)
    throw std::invalid_argument(
        "f0_extract_integral: dt must split the horizon into an even panel count");
  for (int c : cells)
    if (c < 0 || c >= n)
      throw std::out_of_range("f0_extract_integral: cell index");

  const int m = panels + 1;
  const Eigen::VectorXd w = detail::simpson_weights(m, dt);
  const Eigen::VectorXd& lam = gen.spectral().nodes;

  Eigen::MatrixXd u2(m, k), u4(m, k);
  for (int q = 0; q < k; ++q)
    for (int j = 0; j < m; ++j) {
      const double sm = -horizon + j * dt;
      u2(j, q) = -w[j] * std::sin(lam[q] * sm);
      u4(j, q) = w[j] * std::cos(lam[q] * sm);
    }

  const Propagator& prop = gen.propagator();
  const int ne = prop.dim();
  const Eigen::MatrixXd& v = prop.eigensystem().vectors;
  const Eigen::VectorXd& mu = prop.mu();
  const Eigen::VectorXd& wsq = prop.weight_sqrt();
  const Eigen::VectorXd& wisq = prop.weight_inv_sqrt();
  const std::vector<int>& coupled = prop.coupled_cells();

  std::vector<int> slot((std::size_t)ne);
  for (int i = 0; i < n; ++i) slot[(std::size_t)i] = basis->xi1(i);
  for (std::size_t j = 0; j < coupled.size(); ++j)
    for (int q = 0; q < k; ++q)
      slot[(std::size_t)(n + (int)j * k + q)] = basis->xi2(coupled[j], q);

  // Phase tables shared by every cell: the transported f1 functional at time
  // s has eigen components -mu sin(mu s) tpi on the xi half and cos(mu s) tpi
  // on the pi half.
  Eigen::MatrixXd sxi(ne, m), spi(ne, m);
  for (int j = 0; j < m; ++j) {
    const double sm = -horizon + j * dt;
    for (int e = 0; e < ne; ++e) {
      const double th = mu[e] * sm;
      sxi(e, j) = -mu[e] * std::sin(th);
      spi(e, j) = std::cos(th);
    }
  }

  PrimedFields out;
  out.observable = true;
  out.horizon = horizon;
  out.cells = std::move(cells);
  out.nodes = k;
  out.f2p.reserve(out.cells.size() * (std::size_t)k);
  out.f4p.reserve(out.cells.size() * (std::size_t)k);

  const Eigen::MatrixXd& sig = gen.bath().sigma;
  for (int c : out.cells) {
    const bool coupled_cell = sig.row(c).maxCoeff() > 0.0;
    Eigen::MatrixXd cxi2, cpi2, cxi4, cpi4;
    if (coupled_cell) {
      const Eigen::VectorXd tpi = -wisq[c] * v.row(c).transpose();
      const Eigen::MatrixXd hxi = (sxi.array().colwise() * tpi.array()).matrix();
      const Eigen::MatrixXd hpi = (spi.array().colwise() * tpi.array()).matrix();
      cxi2 = v * (hxi * u2);
      cpi2 = v * (hpi * u2);
      cxi4 = v * (hxi * u4);
      cpi4 = v * (hpi * u4);
    }
    for (int q = 0; q < k; ++q) {
      LinearObservable f2o = f2_observable(basis, c, q);
      LinearObservable f4o = f4_observable(basis, gen.bath(), c, q);
      if (coupled_cell && sig(c, q) > 0.0) {
        const double s = sig(c, q);
        for (int e = 0; e < ne; ++e) {
          const int sx = slot[(std::size_t)e];
          const double we = s * wsq[e];
          f2o.coef[sx] += we * cxi2(e, q);
          f2o.coef[basis->half + sx] += we * cpi2(e, q);
          f4o.coef[sx] += we * cxi4(e, q);
          f4o.coef[basis->half + sx] += we * cpi4(e, q);
        }
      }
      out.f2p.push_back(std::move(f2o));
      out.f4p.push_back(std::move(f4o));
    }
  }
  return out;
}

inline PrimedFields f0_extract_integral(const GeneratorN& gen, const BasisPtr& basis,
                                        double horizon, double dt) {
  return f0_extract_integral(gen, basis, horizon, dt, gen.bath().coupled_cells());
}

// Observable-typed long-time route; the per-node transports reuse the cached
// eigensystem, so the cost is samples x cells x nodes matvecs.
inline PrimedFields f0_extract_limit(const GeneratorN& gen, const BasisPtr& basis,
                                     double horizon, int samples,
                                     std::vector<int> cells) {
  detail::require_horizon(gen, horizon, "f0_extract_limit");
  if (samples < 3)
    throw std::invalid_argument("f0_extract_limit: need at least 3 samples");
  const int k = gen.spectral().size();
  for (int c : cells)
    if (c < 0 || c >= gen.grid().n)
      throw std::out_of_range("f0_extract_limit: cell index");

  PrimedFields out;
  out.observable = true;
  out.horizon = horizon;
  out.cells = std::move(cells);
  out.nodes = k;

  double worst_spread = 0.0;
  for (int c : out.cells)
    for (int q = 0; q < k; ++q) {
      const LinearObservable f0 =
          f4_observable(basis, gen.bath(), c, q) -
          Complex(0.0, 1.0) * f2_observable(basis, c, q);
      const double lam = gen.spectral().nodes[q];
      std::vector<Eigen::VectorXcd> coef((std::size_t)samples);
      // Same settling rule as the state route: large mid-window jumps and
      // increments stuck at the sample scale throw, beat wobble does not.
      double scale = 0.0, prev = std::numeric_limits<double>::infinity();
      double dmin = std::numeric_limits<double>::infinity();
      for (int j = 1; j <= samples; ++j) {
        const double t = -horizon * (1.0 - std::pow(2.0, -j));
        const Complex rot = std::polar(1.0, lam * t);
        coef[(std::size_t)j - 1] = rot * evolve_observable(f0, gen, t).coef;
        if (j == 1) scale = coef[0].cwiseAbs().maxCoeff();
        if (j > 1) {
          const double d = (coef[(std::size_t)j - 1] - coef[(std::size_t)j - 2])
                               .cwiseAbs()
                               .maxCoeff();
          if (d > 4.0 * prev + 1e-3 * scale)
            throw std::runtime_error(
                "f0_extract_limit: sample sequence is not settling, horizon too short");
          prev = d;
          dmin = std::min(dmin, d);
        }
      }
      if (!(dmin < 0.5 * scale))
        throw std::runtime_error(
            "f0_extract_limit: sample sequence is not settling, horizon too short");
      const Eigen::VectorXcd& a = coef[(std::size_t)samples - 3];
      const Eigen::VectorXcd& b = coef[(std::size_t)samples - 2];
      const Eigen::VectorXcd& cc = coef[(std::size_t)samples - 1];
      Eigen::VectorXcd star(cc.size());
      for (Eigen::Index e = 0; e < cc.size(); ++e) {
        const Complex d1 = b[e] - a[e], d2 = cc[e] - b[e];
        const Complex den = d2 - d1;
        star[e] = std::abs(den) > 1e-14 * (scale + std::abs(d2))
                      ? cc[e] - d2 * d2 / den
                      : cc[e];
      }
      worst_spread = std::max(worst_spread, (star - cc).cwiseAbs().maxCoeff());
      LinearObservable f0p = LinearObservable::zero(basis);
      f0p.coef = star;
      // Split f0' = f4' - i f2' back into the real pair.
      LinearObservable f4p = Complex(0.5, 0.0) * (f0p + adjoint(f0p));
      LinearObservable f2p = Complex(0.0, 0.5) * (f0p - adjoint(f0p));
      out.f2p.push_back(std::move(f2p));
      out.f4p.push_back(std::move(f4p));
    }
  out.spread = worst_spread;
  return out;
}

// Finite-horizon adjoint wave operator, held in factored form: the dense
// matrix at working scale is half a gigabyte, while the propagator sandwich
// applies it in two matvecs. dense() materializes it for small systems.
struct MollerOperator {
  GeneratorN gen;
  int direction = -1;  // -1 selects the past asymptotics, +1 the future
  double horizon = 0.0;

  // P_aux e^{-N0 T'} e^{N T'} with T' = direction * horizon.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> apply(const FieldState& s) const {
    check_shapes(s, gen.grid(), gen.spectral(), "MollerOperator");
    const double tp = direction * horizon;
    const FieldState full = gen.propagator().evolve(s, tp);
    const int n = gen.grid().n, k = gen.spectral().size();
    Eigen::MatrixXd f2(n, k), f4(n, k);
    for (int q = 0; q < k; ++q) {
      const double th = gen.spectral().nodes[q] * tp;
      const double c = std::cos(th), sn = std::sin(th);
      for (int i = 0; i < n; ++i) {
        f2(i, q) = c * full.f2(i, q) - sn * full.f4(i, q);
        f4(i, q) = sn * full.f2(i, q) + c * full.f4(i, q);
      }
    }
    return {std::move(f2), std::move(f4)};
  }

  // Rows ordered (f2 block, f4 block), each row-major over (cell, node);
  // columns ordered (f1, f3, f2, f4) the same way.
  Eigen::MatrixXd dense() const {
    const int n = gen.grid().n, k = gen.spectral().size();
    const int nf = n + (n + 1) + 2 * n * k;
    Eigen::MatrixXd out(2 * n * k, nf);
    FieldState e = FieldState::zero(gen.grid(), gen.spectral());
    auto fill = [&](int col) {
      const auto [f2, f4] = apply(e);
      for (int i = 0; i < n; ++i)
        for (int q = 0; q < k; ++q) {
          out(i * k + q, col) = f2(i, q);
          out(n * k + i * k + q, col) = f4(i, q);
        }
    };
    int col = 0;
    for (int i = 0; i < n; ++i, ++col) {
      e.f1[i] = 1.0;
      fill(col);
      e.f1[i] = 0.0;
    }
    for (int f = 0; f <= n; ++f, ++col) {
      e.f3[f] = 1.0;
      fill(col);
      e.f3[f] = 0.0;
    }
    for (int i = 0; i < n; ++i)
      for (int q = 0; q < k; ++q, ++col) {
        e.f2(i, q) = 1.0;
        fill(col);
        e.f2(i, q) = 0.0;
      }
    for (int i = 0; i < n; ++i)
      for (int q = 0; q < k; ++q, ++col) {
        e.f4(i, q) = 1.0;
        fill(col);
        e.f4(i, q) = 0.0;
      }
    return out;
  }
};

inline MollerOperator moller(const GeneratorN& gen, int direction, double horizon) {
  if (direction != 1 && direction != -1)
    throw std::invalid_argument("moller: direction must be +1 or -1");
  detail::require_horizon(gen, horizon, "moller");
  return MollerOperator{gen, direction, horizon};
}

// Norm of the difference between the evolved bath data and its free rotation
// seeded by the wave operator, in the bath metric. Shrinks as |t| grows
// inside the horizon: the bath decouples once the field has radiated off the
// absorber.
inline double decoupling_residual(const MollerOperator& om, const FieldState& s0,
                                  double t) {
  if (t * om.direction < 0.0 || std::abs(t) > om.horizon)
    throw std::invalid_argument(
        "decoupling_residual: t must lie between 0 and the signed horizon");
  const GeneratorN& gen = om.gen;
  const FieldState ft = gen.propagator().evolve(s0, t);
  const auto [p2, p4] = om.apply(s0);
  const int n = gen.grid().n, k = gen.spectral().size();
  const double dx = gen.grid().dx;
  double acc = 0.0;
  for (int q = 0; q < k; ++q) {
    const double th = gen.spectral().nodes[q] * t;
    const double c = std::cos(th), sn = std::sin(th);
    const double w = dx * gen.spectral().weights[q];
    for (int i = 0; i < n; ++i) {
      const double r2 = c * p2(i, q) + sn * p4(i, q);
      const double r4 = -sn * p2(i, q) + c * p4(i, q);
      const double d2 = ft.f2(i, q) - r2, d4 = ft.f4(i, q) - r4;
      acc += w * (d2 * d2 + d4 * d4);
    }
  }
  return std::sqrt(acc);
}

// Complex noise-current density of one bath node, the operator whose
// commutator with its adjoint carries the identification with the
// Langevin kernel: j'(x, lambda) = -(sqrt(eps0) sigma / 2) f0'.
inline LinearObservable noise_density_observable(const PrimedFields& pf,
                                                 const GeneratorN& gen, int cell,
                                                 int q) {
  pf.require_observable("noise_density_observable");
  const double s = gen.bath().sigma(cell, q);
  const double r = -0.5 * std::sqrt(gen.units().eps0) * s;
  return Complex(r, 0.0) * pf.f0p_at(cell, q);
}

// Real noise current at time t: per-node densities
// sqrt(eps0) sigma [sin(lambda t) f2' - cos(lambda t) f4'] and their
// weight-summed field, one observable per stored cell.
struct NoiseCurrentField {
  std::vector<int> cells;
  double time = 0.0;
  std::vector<LinearObservable> density;  // per (cell, node), no quadrature weight
  std::vector<LinearObservable> total;    // per cell, sum_k w_k density
};

inline NoiseCurrentField noise_current_observable(const PrimedFields& pf,
                                                  const GeneratorN& gen, double t) {
  pf.require_observable("noise_current_observable");
  const int k = pf.nodes;
  if (k != gen.spectral().size())
    throw std::invalid_argument("noise_current_observable: spectral grid mismatch");
  const double se = std::sqrt(gen.units().eps0);
  NoiseCurrentField out;
  out.cells = pf.cells;
  out.time = t;
  out.density.reserve(pf.cells.size() * (std::size_t)k);
  out.total.reserve(pf.cells.size());
  for (std::size_t j = 0; j < pf.cells.size(); ++j) {
    const int c = pf.cells[j];
    LinearObservable sum;
    for (int q = 0; q < k; ++q) {
      const double lam = gen.spectral().nodes[q];
      const double s = gen.bath().sigma(c, q);
      const Complex a(se * s * std::sin(lam * t), 0.0);
      const Complex b(-se * s * std::cos(lam * t), 0.0);
      LinearObservable d = a * pf.f2p[j * (std::size_t)k + (std::size_t)q] +
                           b * pf.f4p[j * (std::size_t)k + (std::size_t)q];
      sum = q == 0 ? Complex(gen.spectral().weights[0], 0.0) * d
                   : sum + Complex(gen.spectral().weights[q], 0.0) * d;
      out.density.push_back(std::move(d));
    }
    out.total.push_back(std::move(sum));
  }
  return out;
}

// Noise polarization whose time derivative is the current above:
// -sqrt(eps0) sum_k w_k (sigma/lambda) [cos(lambda t) f2' + sin(lambda t) f4'].
inline std::vector<LinearObservable> noise_polarization_observable(
    const PrimedFields& pf, const GeneratorN& gen, double t) {
  pf.require_observable("noise_polarization_observable");
  const int k = pf.nodes;
  if (k != gen.spectral().size())
    throw std::invalid_argument("noise_polarization_observable: spectral grid mismatch");
  const double se = std::sqrt(gen.units().eps0);
  std::vector<LinearObservable> out;
  out.reserve(pf.cells.size());
  for (std::size_t j = 0; j < pf.cells.size(); ++j) {
    const int c = pf.cells[j];
    LinearObservable sum;
    for (int q = 0; q < k; ++q) {
      const double lam = gen.spectral().nodes[q];
      const double f = -se * gen.spectral().weights[q] * gen.bath().sigma(c, q) / lam;
      const Complex a(f * std::cos(lam * t), 0.0);
      const Complex b(f * std::sin(lam * t), 0.0);
      LinearObservable d = a * pf.f2p[j * (std::size_t)k + (std::size_t)q] +
                           b * pf.f4p[j * (std::size_t)k + (std::size_t)q];
      sum = q == 0 ? d : sum + d;
    }
    out.push_back(std::move(sum));
  }
  return out;
}

// Equal-time commutators of the extracted pair over the stored set. The
// diagonal carries -i hbar lambda_k / (dx w_k); everything else vanishes up
// to the horizon-truncation error.
struct PrimedKernel {
  std::vector<int> cells;
  int nodes = 0;
  Eigen::MatrixXcd f4f2;      // [(cell, node) x (cell', node')]
  Eigen::VectorXd expected;   // |diagonal| reference per (cell, node)
  double max_f2f2 = 0.0;      // sup |[f2', f2']|
  double max_f4f4 = 0.0;      // sup |[f4', f4']|
};

namespace detail {

// Rows of the xi and weighted pi halves of a list of observables, arranged
// so that every pairwise commutator batch is two matrix products:
// [A, B] = i hbar (A_xi (B_pi/W)^T - (A_pi/W) B_xi^T).
struct CoefHalves {
  Eigen::MatrixXcd xi, pi_w;
};

inline CoefHalves coef_halves(const std::vector<LinearObservable>& obs) {
  const BasisPtr basis = obs.front().basis;
  const int half = basis->half;
  CoefHalves h;
  h.xi.resize((Eigen::Index)obs.size(), half);
  h.pi_w.resize((Eigen::Index)obs.size(), half);
  Eigen::VectorXd winv(half);
  for (int s = 0; s < half; ++s) winv[s] = 1.0 / basis->weight(s);
  for (std::size_t a = 0; a < obs.size(); ++a) {
    obs[a].require_valid("coef_halves");
    if (obs[a].basis != basis && !obs[a].basis->matches(*basis))
      throw std::invalid_argument("coef_halves: basis mismatch");
    h.xi.row((Eigen::Index)a) = obs[a].coef.head(half).transpose();
    h.pi_w.row((Eigen::Index)a) =
        (obs[a].coef.tail(half).array() * winv.array().cast<Complex>())
            .matrix()
            .transpose();
  }
  return h;
}

inline Eigen::MatrixXcd commutator_batch(const CoefHalves& a, const CoefHalves& b,
                                         double hbar) {
  return Complex(0.0, hbar) *
         (a.xi * b.pi_w.transpose() - a.pi_w * b.xi.transpose());
}

}  // namespace detail

inline PrimedKernel commutator_f42(const PrimedFields& pf) {
  pf.require_observable("commutator_f42");
  const int k = pf.nodes;
  const std::size_t nn = pf.cells.size() * (std::size_t)k;
  if (nn == 0) throw std::invalid_argument("commutator_f42: empty primed set");
  const BasisPtr basis = pf.f2p.front().basis;
  const double hbar = basis->units.hbar;

  const detail::CoefHalves h2 = detail::coef_halves(pf.f2p);
  const detail::CoefHalves h4 = detail::coef_halves(pf.f4p);

  PrimedKernel out;
  out.cells = pf.cells;
  out.nodes = k;
  out.f4f2 = detail::commutator_batch(h4, h2, hbar);
  out.max_f2f2 = detail::commutator_batch(h2, h2, hbar).cwiseAbs().maxCoeff();
  out.max_f4f4 = detail::commutator_batch(h4, h4, hbar).cwiseAbs().maxCoeff();
  out.expected.resize((Eigen::Index)nn);
  for (std::size_t a = 0; a < nn; ++a) {
    const int qa = (int)(a % (std::size_t)k);
    out.expected[(Eigen::Index)a] =
        hbar * basis->spectral.nodes[qa] /
        (basis->grid.dx * basis->spectral.weights[qa]);
  }
  return out;
}

// Node-by-node comparison of the extracted current commutator with the
// absorption kernel of the Green-function route. The bath coupling is
// sigma^2 = 2 lambda eps_I / pi, so the two kernels agree identically in the
// exact theory; what remains here is the horizon truncation.
struct IdentificationReport {
  int compared = 0;               // diagonal nodes with nonzero target
  double max_rel_diag = 0.0;
  double max_offdiag_rel = 0.0;   // vs the local diagonal scale
  double prefactor_residual = 0.0;  // sigma^2/2 vs lambda eps_I/pi, machine level
  double kernel_scale = 0.0;
};

inline IdentificationReport identify_langevin(const PrimedFields& pf,
                                              const GeneratorN& gen,
                                              const MediumStack& stack) {
  pf.require_observable("identify_langevin");
  const int k = pf.nodes;
  if (k != gen.spectral().size())
    throw std::invalid_argument("identify_langevin: spectral grid mismatch");
  const SpatialGrid& g = gen.grid();

  std::vector<double> omegas(gen.spectral().nodes.data(),
                             gen.spectral().nodes.data() + k);
  const NoiseKernel ln = noise_commutator_kernel(stack, g, gen.units(), omegas);

  const std::size_t nn = pf.cells.size() * (std::size_t)k;
  std::vector<LinearObservable> dens(nn);
  for (std::size_t j = 0; j < pf.cells.size(); ++j)
    for (int q = 0; q < k; ++q)
      dens[j * (std::size_t)k + (std::size_t)q] =
          noise_density_observable(pf, gen, pf.cells[j], q);
  std::vector<LinearObservable> dens_adj(nn);
  for (std::size_t a = 0; a < nn; ++a) dens_adj[a] = adjoint(dens[a]);

  IdentificationReport rep;
  Eigen::VectorXd target((Eigen::Index)nn);
  for (std::size_t a = 0; a < nn; ++a) {
    const int c = pf.cells[a / (std::size_t)k];
    const int q = (int)(a % (std::size_t)k);
    target[(Eigen::Index)a] =
        ln.value(c, q) / (g.dx * gen.spectral().weights[q]);
    rep.kernel_scale = std::max(rep.kernel_scale, target[(Eigen::Index)a]);

    const double lam = gen.spectral().nodes[q];
    const double nu = gen.bath().nu(c, q);
    const double eps_i = stack.epsilon(g.x_center(c), lam).imag();
    const double ref = lam * eps_i / kPi;
    if (ref > 0.0)
      rep.prefactor_residual =
          std::max(rep.prefactor_residual, std::abs(nu - ref) / ref);
  }

  const Eigen::MatrixXcd kernel = detail::commutator_batch(
      detail::coef_halves(dens), detail::coef_halves(dens_adj),
      gen.units().hbar);

  const double floor = 1e-14 * std::max(rep.kernel_scale, 1.0);
  for (std::size_t a = 0; a < nn; ++a) {
    const Complex diag = kernel((Eigen::Index)a, (Eigen::Index)a);
    const double tgt = target[(Eigen::Index)a];
    if (tgt > floor) {
      ++rep.compared;
      rep.max_rel_diag =
          std::max(rep.max_rel_diag, std::abs(diag - Complex(tgt, 0.0)) / tgt);
    } else if (std::abs(diag) > floor) {
      rep.max_rel_diag = std::max(rep.max_rel_diag,
                                  std::abs(diag) / std::max(rep.kernel_scale, 1.0));
    }
    for (std::size_t b = a + 1; b < nn; ++b) {
      const double off = std::abs(kernel((Eigen::Index)a, (Eigen::Index)b));
      const double sc = std::max(std::sqrt(tgt * target[(Eigen::Index)b]), floor);
      rep.max_offdiag_rel = std::max(rep.max_offdiag_rel, off / sc);
    }
  }
  return rep;
}

}  // namespace medeq
