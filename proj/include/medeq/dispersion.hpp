#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "medeq/units.hpp"

namespace medeq {

using Complex = std::complex<double>;

struct LorentzPole {
  double wp;     // plasma strength [rad/time]
  double w0;     // resonance [rad/time]
  double gamma;  // damping [rad/time]
};

// Sum of strictly underdamped Lorentz poles plus a uniform absorption
// floor eta. The family is closed under every kernel we need in closed
// form, which is what makes it usable as its own oracle.
class OscillatorModel {
 public:
  OscillatorModel() = default;  // vacuum

  explicit OscillatorModel(std::vector<LorentzPole> poles, double eta = 0.0)
      : poles_(std::move(poles)), eta_(eta) {
    if (!(eta_ >= 0.0) || !std::isfinite(eta_))
      throw std::invalid_argument("OscillatorModel: eta must be finite and >= 0");
    for (std::size_t p = 0; p < poles_.size(); ++p) {
      const LorentzPole& lp = poles_[p];
      if (!std::isfinite(lp.wp) || !std::isfinite(lp.w0) || !std::isfinite(lp.gamma))
        throw std::invalid_argument("OscillatorModel: pole " + std::to_string(p) +
                              " has non-finite parameters");
      if (!(lp.wp >= 0.0))
        throw std::invalid_argument("OscillatorModel: pole " + std::to_string(p) +
                              ": wp must be >= 0");
      if (!(lp.w0 > 0.0))
        throw std::invalid_argument("OscillatorModel: pole " + std::to_string(p) +
                              ": w0 must be > 0");
      if (!(lp.gamma > 0.0))
        throw std::invalid_argument("OscillatorModel: pole " + std::to_string(p) +
                              ": gamma must be > 0");
      // Overdamped poles have no closed-form oscillatory kernel; rejected
      // rather than silently supported.
      if (lp.gamma >= 2.0 * lp.w0)
        throw std::invalid_argument("OscillatorModel: pole " + std::to_string(p) +
                              ": overdamped (gamma >= 2*w0) is unsupported");
    }
  }

  const std::vector<LorentzPole>& poles() const { return poles_; }
  double eta() const { return eta_; }
  bool is_vacuum() const { return poles_.empty() && eta_ == 0.0; }

  // chi(omega) excluding the eta floor.
  Complex chi_poles(double omega) const {
    check_omega(omega);
    Complex acc(0.0, 0.0);
    for (const LorentzPole& lp : poles_)
      acc += lp.wp * lp.wp /
             Complex(lp.w0 * lp.w0 - omega * omega, -lp.gamma * omega);
    return acc;
  }

  // The floor is odd in omega so that eps(-w) = conj(eps(w)); at w = 0 the
  // positive branch is used.
  Complex chi(double omega) const {
    Complex v = chi_poles(omega);
    return v + Complex(0.0, omega < 0.0 ? -eta_ : eta_);
  }

  Complex epsilon(double omega) const { return 1.0 + chi(omega); }

  // Analytic continuation off the real axis. All poles sit in the lower half
  // plane, so this is holomorphic for Im(omega) >= 0; the floor keeps the
  // positive-branch sign there.
  Complex chi(Complex omega) const {
    Complex acc(0.0, eta_);
    for (const LorentzPole& lp : poles_)
      acc += lp.wp * lp.wp /
             (Complex(lp.w0 * lp.w0, 0.0) - omega * omega -
              Complex(0.0, lp.gamma) * omega);
    return acc;
  }

  Complex epsilon(Complex omega) const { return 1.0 + chi(omega); }

  // Time-domain kernel chi(t) for t >= 0; chi(0) = 0 exactly.
  double chi_time(double t) const {
    check_time(t);
    double acc = 0.0;
    for (const LorentzPole& lp : poles_) {
      const double nu = damped_freq(lp);
      acc += lp.wp * lp.wp / nu * std::exp(-0.5 * lp.gamma * t) * std::sin(nu * t);
    }
    return acc;
  }

  double chi_time_deriv(double t) const {
    check_time(t);
    double acc = 0.0;
    for (const LorentzPole& lp : poles_) {
      const double nu = damped_freq(lp);
      acc += lp.wp * lp.wp * std::exp(-0.5 * lp.gamma * t) *
             (std::cos(nu * t) - 0.5 * lp.gamma / nu * std::sin(nu * t));
    }
    return acc;
  }

  // Sum rule: chi'(0) = sum wp^2.
  double chi_prime0() const {
    double acc = 0.0;
    for (const LorentzPole& lp : poles_) acc += lp.wp * lp.wp;
    return acc;
  }

  double max_resonance() const {
    double m = 0.0;
    for (const LorentzPole& lp : poles_) m = std::max(m, lp.w0);
    return m;
  }

 private:
  static void check_omega(double omega) {
    if (!std::isfinite(omega))
      throw std::invalid_argument("OscillatorModel: omega must be finite");
  }
  static void check_time(double t) {
    if (!(t >= 0.0) || !std::isfinite(t))
      throw std::invalid_argument("OscillatorModel: kernel time must be finite and >= 0");
  }
  static double damped_freq(const LorentzPole& lp) {
    return std::sqrt(lp.w0 * lp.w0 - 0.25 * lp.gamma * lp.gamma);
  }

  std::vector<LorentzPole> poles_;
  double eta_ = 0.0;
};

inline std::pair<double, double> chi_time_kernel(const OscillatorModel& m, double t) {
  return {m.chi_time(t), m.chi_time_deriv(t)};
}

struct Layer {
  double thickness;
  OscillatorModel model;
};

// Piecewise-constant medium on [0, L]: an ordered list of layers. A vacuum
// gap is a layer with an empty pole list.
class MediumStack {
 public:
  explicit MediumStack(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty())
      throw std::invalid_argument("MediumStack: at least one layer required");
    boundaries_.reserve(layers_.size() + 1);
    boundaries_.push_back(0.0);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (!(layers_[i].thickness > 0.0) || !std::isfinite(layers_[i].thickness))
        throw std::invalid_argument("MediumStack: layer " + std::to_string(i) +
                              " thickness must be finite and > 0");
      boundaries_.push_back(boundaries_.back() + layers_[i].thickness);
    }
  }

  double total_length() const { return boundaries_.back(); }
  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<double>& boundaries() const { return boundaries_; }

  std::size_t layer_index_at(double x) const {
    if (!(x >= 0.0) || !(x <= total_length()))
      throw std::invalid_argument("MediumStack: x outside [0, L]");
    for (std::size_t i = 0; i + 1 < boundaries_.size(); ++i)
      if (x < boundaries_[i + 1]) return i;
    return layers_.size() - 1;
  }

  const OscillatorModel& model_at(double x) const {
    return layers_[layer_index_at(x)].model;
  }

  Complex epsilon(double x, double omega) const { return model_at(x).epsilon(omega); }

  Complex epsilon(double x, Complex omega) const { return model_at(x).epsilon(omega); }

  double max_resonance() const {
    double m = 0.0;
    for (const Layer& l : layers_) m = std::max(m, l.model.max_resonance());
    return m;
  }

  bool all_vacuum() const {
    for (const Layer& l : layers_)
      if (!l.model.is_vacuum()) return false;
    return true;
  }

 private:
  std::vector<Layer> layers_;
  std::vector<double> boundaries_;
};

// Bath spectral density nu = lambda * eps_I / pi and coupling sigma = sqrt(2 nu)
// of one model at one lambda node. eps_I includes the eta floor when present.
inline std::pair<double, double> nu_sigma_at(const OscillatorModel& m, double lambda) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("nu_sigma_at: lambda must be > 0");
  const double eps_i = m.epsilon(lambda).imag();
  if (eps_i < 0.0)
    throw std::runtime_error("nu_sigma_at: negative eps_I, passivity violated");
  const double nu = lambda * eps_i / kPi;
  return {nu, std::sqrt(2.0 * nu)};
}

// Principal-value Hilbert reconstruction of eps_R - 1 from eps_I on a uniform
// grid [0, W]. Returns the relative L2 deviation over a reporting band away
// from both grid edges. Refuses when the grid is too narrow for the tail to
// have decayed (|eps - 1| at the top edge above edge_tol).
struct KramersKronigResult {
  double residual = 0.0;
  double band_lo = 0.0;
  double band_hi = 0.0;
  Eigen::VectorXd reconstructed;  // eps_R - 1 at the band nodes
  Eigen::VectorXd band_omega;
};

inline KramersKronigResult kramers_kronig_residual(const Eigen::VectorXd& omega,
                                const Eigen::VectorXcd& eps,
                                double edge_tol = 1e-3) {
  const Eigen::Index n = omega.size();
  if (n < 16 || eps.size() != n)
    throw std::invalid_argument("kramers_kronig_residual: need matching grids, n >= 16");
  const double h = omega[1] - omega[0];
  if (!(h > 0.0))
    throw std::invalid_argument("kramers_kronig_residual: grid must be increasing");
  for (Eigen::Index i = 1; i < n; ++i)
    if (std::abs(omega[i] - omega[i - 1] - h) > 1e-9 * h)
      throw std::invalid_argument("kramers_kronig_residual: grid must be uniform");
  if (std::abs(omega[0]) > 1e-12 * h)
    throw std::invalid_argument("kramers_kronig_residual: grid must start at 0");
  const double W = omega[n - 1];

  const double edge = std::abs(eps[n - 1] - Complex(1.0, 0.0));
  if (edge > edge_tol)
    throw std::runtime_error(
        "kramers_kronig_residual: grid too narrow, |eps-1| = " + std::to_string(edge) +
        " at the top edge " + std::to_string(W) + " exceeds " + std::to_string(edge_tol));

  // One-sided dispersion relation, poles at +/- omega folded to [0, W]:
  //   eps_R(w) - 1 = (2/pi) PV int_0^W w' eps_I(w') / (w'^2 - w^2) dw'.
  // With g(w') = (2/pi) w' eps_I(w') / (w' + w) the integrand is g/(w' - w).
  // Per cell, g is replaced by its local four-point cubic and the PV integral
  // of cubic/(u) is taken in closed form. At the singular node the two
  // adjacent cells share the interpolated value g(w), so their log
  // divergences cancel exactly (the "ln|0| -> 0" convention below implements
  // the cancelled pair). The only error left is the O(h^4) interpolation
  // error of g; the neglected tail beyond W is O(eps_I(W)/W), controlled by
  // the edge refusal above.
  Eigen::VectorXd eps_im = eps.imag();

  const double lo = 0.02 * W, hi = 0.6 * W;
  std::vector<double> rec, truth, bw;
  std::vector<double> g((std::size_t)n);
  for (Eigen::Index m = 2; m + 2 < n; ++m) {
    const double w = omega[m];
    if (w < lo || w > hi) continue;
    for (Eigen::Index j = 0; j < n; ++j)
      g[(std::size_t)j] = (2.0 / kPi) * omega[j] * eps_im[j] / (omega[j] + w);
    double integral = 0.0;
    for (Eigen::Index j = 0; j + 1 < n; ++j) {
      const Eigen::Index b = std::clamp<Eigen::Index>(j - 1, 0, n - 4);
      double u[4], d[4];
      for (int i = 0; i < 4; ++i) {
        u[i] = omega[b + i] - w;
        d[i] = g[(std::size_t)(b + i)];
      }
      for (int k = 1; k < 4; ++k)  // divided differences
        for (int i = 3; i >= k; --i) d[i] = (d[i] - d[i - 1]) / (u[i] - u[i - k]);
      double c[4] = {d[3], 0.0, 0.0, 0.0};  // Newton -> monomial in u = w' - w
      for (int k = 2; k >= 0; --k) {
        for (int i = 3; i >= 1; --i) c[i] = c[i - 1] - u[k] * c[i];
        c[0] = d[k] - u[k] * c[0];
      }
      const double a0 = omega[j] - w, a1 = a0 + h;
      if (j == m - 1)       integral -= c[0] * std::log(h);   // pairs with j == m
      else if (j == m)      integral += c[0] * std::log(h);
      else                  integral += c[0] * std::log1p(h / a0);
      integral += c[1] * h + c[2] * (a1 * a1 - a0 * a0) / 2.0 +
                  c[3] * (a1 * a1 * a1 - a0 * a0 * a0) / 3.0;
    }
    rec.push_back(integral);
    truth.push_back(eps[m].real() - 1.0);
    bw.push_back(w);
  }
  if (rec.empty())
    throw std::runtime_error("kramers_kronig_residual: reporting band is empty");

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    num += (rec[i] - truth[i]) * (rec[i] - truth[i]);
    den += truth[i] * truth[i];
  }
  KramersKronigResult out;
  out.band_lo = lo;
  out.band_hi = hi;
  out.reconstructed = Eigen::Map<Eigen::VectorXd>(rec.data(), (Eigen::Index)rec.size());
  out.band_omega = Eigen::Map<Eigen::VectorXd>(bw.data(), (Eigen::Index)bw.size());
  out.residual = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  return out;
}

}  // namespace medeq
