#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "medeq/dispersion.hpp"
#include "medeq/lattice.hpp"
#include "medeq/units.hpp"

namespace medeq {

// Time-domain Maxwell with the polarization current kept as an explicit
// memory convolution over the electric-field history. Deliberately different
// numerics from the spectral evolution (staggered leapfrog plus trapezoid
// convolution) so that agreement between the two is evidence.
//
// Scaled variables throughout: e = sqrt(eps0) E at integer steps on cells,
// b = B/sqrt(mu0) at half steps on faces.

struct ConvolutionState {
  Eigen::VectorXd e, e_prev;
  Eigen::VectorXd b_half, b_prev;
  std::deque<Eigen::VectorXd> hist;  // tracked-cell values of e, newest at back
  double time = 0.0;
  long step = 0;
  double dt = 0.0;
};

class ConvolutionOracle {
 public:
  ConvolutionOracle(const MediumStack& stack, const SpatialGrid& grid, double dt,
                    Units units = Units())
      : grid_(grid), units_(units), dt_(dt) {
    units_.validate();
    if (!(dt > 0.0) || !std::isfinite(dt))
      throw std::invalid_argument("ConvolutionOracle: dt must be finite and > 0");
    if (units_.c * dt > grid.dx * (1.0 + 1e-12))
      throw std::invalid_argument("ConvolutionOracle: CFL violation, c dt = " +
                                  std::to_string(units_.c * dt) + " > dx = " +
                                  std::to_string(grid.dx));
    const double top = stack.max_resonance();
    if (top > 0.0 && dt * top > 0.5)
      throw std::invalid_argument(
          "ConvolutionOracle: dt does not resolve the medium, dt * max resonance = " +
          std::to_string(dt * top) + " > 0.5");
    if (std::abs(stack.total_length() - grid.length()) > 1e-9 * grid.length())
      throw std::invalid_argument("ConvolutionOracle: stack and grid length differ");

    // Group cells into runs of one layer; vacuum runs carry no convolution.
    int i = 0;
    int tracked = 0;
    while (i < grid.n) {
      const int layer = stack.layer_index_at(grid.x_center(i));
      int j = i;
      while (j < grid.n && stack.layer_index_at(grid.x_center(j)) == layer) ++j;
      const OscillatorModel& m = stack.layers()[(std::size_t)layer].model;
      if (!m.is_vacuum()) {
        Segment s;
        s.cell_begin = i;
        s.cell_end = j;
        s.tracked_begin = tracked;
        tracked += j - i;
        double gamma_min = 0.0;
        for (const LorentzPole& p : m.poles())
          gamma_min = gamma_min == 0.0 ? p.gamma : std::min(gamma_min, p.gamma);
        // e^{-gamma tau / 2} < 1e-10 at the retained tail.
        s.depth = (int)std::ceil(2.0 * std::log(1e10) / (gamma_min * dt)) + 1;
        s.kernel.resize(s.depth + 1);
        for (int q = 0; q <= s.depth; ++q) s.kernel[q] = m.chi_time_deriv(q * dt);
        segs_.push_back(std::move(s));
      }
      i = j;
    }
    n_tracked_ = tracked;
    depth_ = 0;
    for (const Segment& s : segs_) depth_ = std::max(depth_, s.depth);
  }

  const SpatialGrid& grid() const { return grid_; }
  const Units& units() const { return units_; }
  double dt() const { return dt_; }
  int history_depth() const { return depth_; }
  int tracked_cells() const { return n_tracked_; }

  ConvolutionState make_state(const Eigen::VectorXd& f1,
                              const Eigen::VectorXd& f3) const {
    if (f1.size() != grid_.n || f3.size() != grid_.n + 1)
      throw std::invalid_argument("ConvolutionOracle: field shape mismatch");
    if (!f1.allFinite() || !f3.allFinite())
      throw std::invalid_argument("ConvolutionOracle: non-finite initial data");
    ConvolutionState st;
    st.e = f1;
    st.e_prev = f1;
    st.b_half = f3;
    st.b_prev = f3;
    st.dt = dt_;
    return st;
  }

  // One full leapfrog cycle: b half-step (a starter half kick on the first
  // call), then e with the implicit trapezoid endpoint of the memory term,
  //   e'(1 + dt^2 chi'(0)/4) = e - dt c div b - dt/2 (conv(t) + tail(t+dt)).
  void step(ConvolutionState& st) const {
    if (st.dt != dt_)
      throw std::invalid_argument("ConvolutionOracle: state built for different dt");
    const double c = units_.c;
    st.b_prev = st.b_half;
    if (st.step == 0)
      st.b_half -= 0.5 * dt_ * c * apply_grad(grid_, st.e);
    else
      st.b_half -= dt_ * c * apply_grad(grid_, st.e);

    Eigen::VectorXd rhs = st.e - dt_ * c * apply_div(grid_, st.b_half);

    if (n_tracked_ > 0) {
      Eigen::VectorXd cur(n_tracked_);
      for (const Segment& s : segs_)
        cur.segment(s.tracked_begin, s.cell_end - s.cell_begin) =
            st.e.segment(s.cell_begin, s.cell_end - s.cell_begin);
      st.hist.push_back(std::move(cur));
      if ((int)st.hist.size() > depth_ + 1) st.hist.pop_front();

      const long m = st.step;
      const long size = (long)st.hist.size();
      for (const Segment& s : segs_) {
        const int len = s.cell_end - s.cell_begin;
        Eigen::VectorXd conv = Eigen::VectorXd::Zero(len);  // memory current at t_m
        Eigen::VectorXd tail = Eigen::VectorXd::Zero(len);  // its j >= 1 part at t_m+1
        conv += 0.5 * s.kernel[0] *
                st.hist.back().segment(s.tracked_begin, len);
        const long jc = std::min<long>(m, s.depth);
        for (long j = 1; j <= jc; ++j) {
          const double w = j == m ? 0.5 : 1.0;
          conv += w * s.kernel[j] *
                  st.hist[(std::size_t)(size - 1 - j)].segment(s.tracked_begin, len);
        }
        const long jt = std::min<long>(m + 1, s.depth);
        for (long j = 1; j <= jt; ++j) {
          const double w = j == m + 1 ? 0.5 : 1.0;
          tail += w * s.kernel[j] *
                  st.hist[(std::size_t)(size - j)].segment(s.tracked_begin, len);
        }
        const double scale = 1.0 / (1.0 + 0.25 * dt_ * dt_ * s.kernel[0]);
        rhs.segment(s.cell_begin, len) -=
            0.5 * dt_ * dt_ * (conv + tail);  // dt * average of the two currents
        rhs.segment(s.cell_begin, len) *= scale;
      }
    }
    st.e_prev = st.e;
    st.e = std::move(rhs);
    ++st.step;
    st.time = st.step * dt_;
  }

  // Advance to t_final, which must sit on the step grid.
  void run(ConvolutionState& st, double t_final) const {
    const double steps_real = t_final / dt_;
    const long steps = (long)std::llround(steps_real);
    if (std::abs(steps_real - (double)steps) > 1e-6)
      throw std::invalid_argument(
          "ConvolutionOracle: t_final is not a whole number of steps");
    while (st.step < steps) step(st);
  }

 private:
  struct Segment {
    int cell_begin = 0, cell_end = 0;
    int tracked_begin = 0;
    int depth = 0;
    Eigen::VectorXd kernel;
  };

  SpatialGrid grid_;
  Units units_;
  double dt_;
  std::vector<Segment> segs_;
  int n_tracked_ = 0;
  int depth_ = 0;
};

// Quadratic invariant of the vacuum leapfrog, exactly conserved by the
// staggered update: 1/2 (dx e(t) . e(t+dt) + sum w_f b(t+dt/2)^2).
inline double leapfrog_energy(const ConvolutionState& st, const SpatialGrid& g) {
  if (st.e.size() != g.n || st.b_half.size() != g.n + 1)
    throw std::invalid_argument("leapfrog_energy: shape mismatch");
  double acc = st.step == 0 ? g.dx * st.e.squaredNorm()
                            : g.dx * st.e_prev.dot(st.e);
  for (int f = 0; f <= g.n; ++f) acc += g.face_weight(f) * st.b_half[f] * st.b_half[f];
  return 0.5 * acc;
}

}  // namespace medeq
