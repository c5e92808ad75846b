#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "medeq/dispersion.hpp"
#include "medeq/units.hpp"

namespace medeq {

// Cell-centered grid on [0, L]: field samples at x_i = (i + 1/2) dx with
// mirror (Dirichlet) walls at x = 0 and x = L. Flux-like quantities live on
// the n + 1 cell faces x_f = f dx; the wall faces carry half weight so that
// summation by parts is exact.
struct SpatialGrid {
  int n = 0;
  double dx = 0.0;

  SpatialGrid() = default;
  SpatialGrid(int n_, double dx_) : n(n_), dx(dx_) {
    if (n < 8) throw std::invalid_argument("SpatialGrid: need at least 8 cells");
    if (!(dx > 0.0) || !std::isfinite(dx))
      throw std::invalid_argument("SpatialGrid: dx must be finite and > 0");
  }

  double length() const { return n * dx; }
  double x_center(int i) const { return (i + 0.5) * dx; }
  double x_face(int f) const { return f * dx; }
  double face_weight(int f) const { return (f == 0 || f == n) ? 0.5 * dx : dx; }
};

// Quadrature for the oscillator-bath continuum on (0, lambda_max]: composite
// Gauss-Legendre, panels refined around pole resonances. Open rule, so the
// lambda = 0 endpoint is never a node.
struct SpectralGrid {
  Eigen::VectorXd nodes;    // strictly increasing, > 0
  Eigen::VectorXd weights;  // > 0, summing to the interval length
  std::vector<double> panel_edges;

  SpectralGrid() = default;
  SpectralGrid(Eigen::VectorXd nodes_, Eigen::VectorXd weights_,
               std::vector<double> edges = {})
      : nodes(std::move(nodes_)), weights(std::move(weights_)),
        panel_edges(std::move(edges)) {
    if (nodes.size() == 0 || nodes.size() != weights.size())
      throw std::invalid_argument("SpectralGrid: need matching nonempty node/weight lists");
    for (Eigen::Index k = 0; k < nodes.size(); ++k) {
      if (!(nodes[k] > 0.0))
        throw std::invalid_argument("SpectralGrid: nodes must be > 0");
      if (k > 0 && !(nodes[k] > nodes[k - 1]))
        throw std::invalid_argument("SpectralGrid: nodes must be strictly increasing");
      if (!(weights[k] > 0.0))
        throw std::invalid_argument("SpectralGrid: weights must be > 0");
    }
  }

  int size() const { return static_cast<int>(nodes.size()); }
  double lambda_max() const { return panel_edges.empty() ? nodes[nodes.size() - 1]
                                                         : panel_edges.back(); }
};

namespace detail {

// Golub-free Gauss-Legendre: Newton iteration on P_n, symmetric fill.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    // Largest root first; mirror into ascending order.
    x[i] = -t;
    x[n - 1 - i] = t;
    const double ww = 2.0 / ((1.0 - t * t) * dp * dp);
    w[i] = ww;
    w[n - 1 - i] = ww;
  }
  if (n == 1) {
    x[0] = 0.0;
    w[0] = 2.0;
  }
}

}  // namespace detail

// Composite Gauss-Legendre grid with per-panel node counts.
inline SpectralGrid make_composite_gl(const std::vector<double>& edges,
                                      const std::vector<int>& counts) {
  if (edges.size() < 2 || counts.size() + 1 != edges.size())
    throw std::invalid_argument("make_composite_gl: need counts per panel");
  std::vector<double> nodes, weights, ref_x, ref_w;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double a = edges[p], b = edges[p + 1];
    if (!(b > a)) throw std::invalid_argument("make_composite_gl: edges must increase");
    if (counts[p] < 1) throw std::invalid_argument("make_composite_gl: counts must be >= 1");
    detail::gauss_legendre(counts[p], ref_x, ref_w);
    for (int k = 0; k < counts[p]; ++k) {
      nodes.push_back(a + 0.5 * (b - a) * (ref_x[k] + 1.0));
      weights.push_back(0.5 * (b - a) * ref_w[k]);
    }
  }
  Eigen::VectorXd nv = Eigen::Map<Eigen::VectorXd>(nodes.data(), (Eigen::Index)nodes.size());
  Eigen::VectorXd wv = Eigen::Map<Eigen::VectorXd>(weights.data(), (Eigen::Index)weights.size());
  return SpectralGrid(std::move(nv), std::move(wv), edges);
}

// Panel layout for a medium: refine around every pole so the eps_I peak
// (width ~ gamma) is resolved, coarse elsewhere.
inline std::vector<double> spectral_panel_edges(const MediumStack& stack,
                                                double lambda_max) {
  std::vector<double> cuts{0.0, lambda_max};
  for (const Layer& l : stack.layers())
    for (const LorentzPole& p : l.model.poles())
      for (double c : {p.w0 - 6.0 * p.gamma, p.w0 - 2.0 * p.gamma, p.w0 - 0.5 * p.gamma,
                       p.w0 + 0.5 * p.gamma, p.w0 + 2.0 * p.gamma, p.w0 + 6.0 * p.gamma})
        if (c > 0.0 && c < lambda_max) cuts.push_back(c);
  std::sort(cuts.begin(), cuts.end());
  const double min_sep = 1e-3 * lambda_max;
  std::vector<double> edges{cuts.front()};
  for (double c : cuts)
    if (c - edges.back() > min_sep) edges.push_back(c);
  if (edges.back() != lambda_max) edges.back() = lambda_max;
  return edges;
}

// Deterministic node allocation: half the budget spread evenly, half by
// panel width, then exact-sum fixup. Falls back to one panel when K is too
// small to populate the refined layout.
inline SpectralGrid make_spectral_grid(const MediumStack& stack, int k,
                                       double lambda_max) {
  if (k < 1) throw std::invalid_argument("make_spectral_grid: need at least 1 node");
  if (!(lambda_max > 0.0))
    throw std::invalid_argument("make_spectral_grid: lambda_max must be > 0");
  std::vector<double> edges = spectral_panel_edges(stack, lambda_max);
  const int p = static_cast<int>(edges.size()) - 1;
  if (p <= 1 || k < 2 * p)
    return make_composite_gl({0.0, lambda_max}, {k});
  const double total = lambda_max;
  std::vector<int> counts(p);
  int sum = 0;
  for (int i = 0; i < p; ++i) {
    const double width = edges[i + 1] - edges[i];
    counts[i] = std::max(2, (int)std::lround(k * (0.5 / p + 0.5 * width / total)));
    sum += counts[i];
  }
  while (sum > k) {  // trim the currently largest panel, never below 2
    int j = (int)(std::max_element(counts.begin(), counts.end()) - counts.begin());
    if (counts[j] <= 2) break;
    --counts[j];
    --sum;
  }
  while (sum < k) {  // grow the widest panel
    int j = 0;
    double best = -1.0;
    for (int i = 0; i < p; ++i)
      if (edges[i + 1] - edges[i] > best) {
        best = edges[i + 1] - edges[i];
        j = i;
      }
    ++counts[j];
    ++sum;
  }
  return make_composite_gl(edges, counts);
}

// c^2 (-d^2/dx^2) on cell centers with mirror walls: tridiagonal
// (-1, 2, -1)/dx^2 scaled by c^2, end diagonals 3 from the odd extension.
// This equals c^2 D*D for the staggered gradient below, so it is symmetric
// positive definite by construction.
inline Eigen::MatrixXd assemble_H0(const SpatialGrid& g, const Units& u = Units()) {
  const double s = u.c * u.c / (g.dx * g.dx);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(g.n, g.n);
  for (int i = 0; i < g.n; ++i) {
    h(i, i) = (i == 0 || i == g.n - 1) ? 3.0 * s : 2.0 * s;
    if (i > 0) h(i, i - 1) = -s;
    if (i + 1 < g.n) h(i, i + 1) = -s;
  }
  return h;
}

// Staggered first derivatives. grad: centers -> faces with mirror ghosts
// (e(-1) = -e(0), e(n) = -e(n-1)); div: faces -> centers, plain difference.
// Under the (dx | face_weight) metrics, div = -grad^adj exactly.
inline Eigen::VectorXd apply_grad(const SpatialGrid& g, const Eigen::VectorXd& e) {
  Eigen::VectorXd f(g.n + 1);
  f[0] = 2.0 * e[0] / g.dx;
  for (int i = 1; i < g.n; ++i) f[i] = (e[i] - e[i - 1]) / g.dx;
  f[g.n] = -2.0 * e[g.n - 1] / g.dx;
  return f;
}

inline Eigen::VectorXd apply_div(const SpatialGrid& g, const Eigen::VectorXd& b) {
  Eigen::VectorXd e(g.n);
  for (int i = 0; i < g.n; ++i) e[i] = (b[i + 1] - b[i]) / g.dx;
  return e;
}

// Per-cell, per-node bath data sampled from the medium at cell centers.
struct BathSpectral {
  Eigen::MatrixXd nu;     // cells x nodes
  Eigen::MatrixXd sigma;  // sqrt(2 nu), elementwise

  std::vector<int> coupled_cells() const {
    std::vector<int> out;
    for (Eigen::Index i = 0; i < sigma.rows(); ++i)
      if (sigma.row(i).maxCoeff() > 0.0) out.push_back((int)i);
    return out;
  }
};

inline BathSpectral bath_spectral(const MediumStack& stack, const SpatialGrid& grid,
                                  const SpectralGrid& spectral) {
  if (grid.n == 0 || spectral.size() == 0)
    throw std::invalid_argument("bath_spectral: empty grid");
  BathSpectral b;
  b.nu.resize(grid.n, spectral.size());
  b.sigma.resize(grid.n, spectral.size());
  for (int i = 0; i < grid.n; ++i) {
    const OscillatorModel& m = stack.model_at(grid.x_center(i));
    for (int k = 0; k < spectral.size(); ++k) {
      auto [nu, sigma] = nu_sigma_at(m, spectral.nodes[k]);
      b.nu(i, k) = nu;
      b.sigma(i, k) = sigma;
    }
  }
  return b;
}

// Discrete bath quadrature of the kernel pair: chi(t) = 2 sum w nu sin(l t)/l,
// chi'(t) = 2 sum w nu cos(l t). Used by convergence tests against the
// closed forms.
inline std::pair<double, double> chi_time_from_bath(const OscillatorModel& m,
                                                    const SpectralGrid& s, double t) {
  double chi = 0.0, chip = 0.0;
  for (int k = 0; k < s.size(); ++k) {
    auto [nu, sigma] = nu_sigma_at(m, s.nodes[k]);
    (void)sigma;
    chi += 2.0 * s.weights[k] * nu * std::sin(s.nodes[k] * t) / s.nodes[k];
    chip += 2.0 * s.weights[k] * nu * std::cos(s.nodes[k] * t);
  }
  return {chi, chip};
}

struct GridBundle {
  SpatialGrid spatial;
  SpectralGrid spectral;
  std::vector<int> cell_layer;        // layer index per cell
  std::vector<double> snap_distance;  // per interior layer boundary
  double max_snap_distance = 0.0;
  bool lambda_max_warning = false;
  std::string warning;
};

inline GridBundle build_grids(const MediumStack& stack, int n, int k, double lambda_max) {
  if (n < 8 || k < 8)
    throw std::invalid_argument("build_grids: need n >= 8 and k >= 8");
  const double length = stack.total_length();
  if (!(length > 0.0)) throw std::invalid_argument("build_grids: zero-size domain");
  GridBundle out;
  out.spatial = SpatialGrid(n, length / n);
  out.spectral = make_spectral_grid(stack, k, lambda_max);

  const std::vector<double>& bounds = stack.boundaries();
  for (std::size_t j = 1; j + 1 < bounds.size(); ++j) {
    const double edge = std::round(bounds[j] / out.spatial.dx) * out.spatial.dx;
    out.snap_distance.push_back(std::abs(bounds[j] - edge));
    out.max_snap_distance = std::max(out.max_snap_distance, out.snap_distance.back());
  }
  out.cell_layer.resize(n);
  for (int i = 0; i < n; ++i)
    out.cell_layer[i] = (int)stack.layer_index_at(out.spatial.x_center(i));

  const double top = stack.max_resonance();
  if (lambda_max < 5.0 * top) {
    out.lambda_max_warning = true;
    out.warning = "lambda_max = " + std::to_string(lambda_max) +
                  " is below 5x the highest resonance " + std::to_string(top);
  }
  return out;
}

}  // namespace medeq
