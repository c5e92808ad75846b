#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "medeq/af_dynamics.hpp"
#include "medeq/config.hpp"
#include "medeq/dispersion.hpp"
#include "medeq/lattice.hpp"
#include "medeq/units.hpp"

namespace medeq {

// Narrow weakly damped slab in a 10-box. Slow enough absorption that Green
// function structure (cavity lines, KK tails) stays visible; the workhorse
// for the frequency-domain checks.
inline MediumStack narrow_lorentz_slab(double eta = 0.0) {
  OscillatorModel m({{1.0, 1.0, 0.1}}, eta);
  return MediumStack(
      {{4.5, OscillatorModel()}, {1.0, m}, {4.5, OscillatorModel()}});
}

// Wide box, broadband absorber in the middle: gamma large enough that a
// pulse's bath imprint drains within a horizon of 10 while the walls stay
// 22 away. The workhorse for extraction and equivalence runs.
inline MediumStack wide_absorber_slab() {
  OscillatorModel m({{1.0, 1.0, 1.6}});
  return MediumStack(
      {{22.0, OscillatorModel()}, {4.0, m}, {22.0, OscillatorModel()}});
}

inline MediumStack to_stack(const ScenarioConfig& c) {
  std::vector<Layer> layers;
  layers.reserve(c.layers.size());
  for (const LayerSpec& l : c.layers) {
    std::vector<LorentzPole> poles;
    for (const PoleSpec& p : l.poles) poles.push_back({p.wp, p.w0, p.gamma});
    layers.push_back({l.thickness, OscillatorModel(std::move(poles), c.medium_eta)});
  }
  return MediumStack(std::move(layers));
}

// Gaussian envelope, optional carrier. 'both' leaves f3 = 0, so the pulse
// splits symmetrically; 'right' loads the same profile on the faces, which
// launches a single right mover up to grid dispersion.
inline FieldState gaussian_pulse(const SpatialGrid& grid, const SpectralGrid& spectral,
                                 double center, double width, double carrier,
                                 bool rightward) {
  if (!(width > 0.0)) throw std::invalid_argument("gaussian_pulse: width must be > 0");
  FieldState f = FieldState::zero(grid, spectral);
  auto profile = [&](double x) {
    const double u = (x - center) / width;
    return std::exp(-0.5 * u * u) * std::cos(carrier * (x - center));
  };
  for (int i = 0; i < grid.n; ++i) f.f1[i] = profile(grid.x_center(i));
  if (rightward)
    for (int j = 0; j <= grid.n; ++j) f.f3[j] = profile(grid.x_face(j));
  return f;
}

// Everything a time-domain run needs, assembled once from a validated config.
struct AssembledScenario {
  MediumStack stack;
  SpatialGrid grid;
  SpectralGrid spectral;
  BathSpectral bath;
  GeneratorN gen;
  FieldState pulse;
};

inline AssembledScenario assemble_scenario(const ScenarioConfig& c,
                                           const Units& u = Units()) {
  MediumStack stack = to_stack(c);
  SpatialGrid grid(c.n, stack.total_length() / c.n);
  SpectralGrid spectral = make_spectral_grid(stack, c.k, c.lambda_max);
  BathSpectral bath = bath_spectral(stack, grid, spectral);
  GeneratorN gen = assemble_N(grid, spectral, bath, u);
  FieldState pulse = gaussian_pulse(grid, spectral, c.pulse_center, c.pulse_width,
                                    c.pulse_carrier, c.pulse_direction == "right");
  return {std::move(stack), grid,      std::move(spectral),
          std::move(bath),  std::move(gen), std::move(pulse)};
}

// The standard extraction preset: wide absorber, N = 96, K = 48 pole-refined
// nodes under lambda_max = 5, unit-width pulse at x = 24, horizon 10. Used
// verbatim by the extract/equiv subcommand defaults and the long gates.
inline ScenarioConfig standard_extraction_config(const std::string& kind) {
  ScenarioConfig c;
  c.kind = kind;
  c.layers = {LayerSpec{true, 22.0, {}},
              LayerSpec{false, 4.0, {PoleSpec{1.0, 1.0, 1.6}}},
              LayerSpec{true, 22.0, {}}};
  c.n = 96;
  c.k = 48;
  c.lambda_max = 5.0;
  c.t_final = 10.0;
  c.dt = 0.0125;
  c.horizon = 10.0;
  c.samples = 10;
  c.pulse_center = 24.0;
  c.pulse_width = 1.0;
  c.pulse_carrier = 0.0;
  c.pulse_direction = "both";
  return c;
}

}  // namespace medeq
