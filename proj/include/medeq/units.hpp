#pragma once

#include <stdexcept>

namespace medeq {

inline constexpr double kPi = 3.14159265358979323846;

// Unit constants threaded through every formula so natural units
// (c = eps0 = hbar = 1, the default) and SI-like values share one code path.
struct Units {
  double c = 1.0;
  double eps0 = 1.0;
  double hbar = 1.0;

  double mu0() const { return 1.0 / (c * c * eps0); }

  void validate() const {
    // !(x > 0) also catches NaN.
    if (!(c > 0.0) || !(eps0 > 0.0) || !(hbar > 0.0))
      throw std::invalid_argument("Units: c, eps0, hbar must be positive");
  }

  static Units natural() { return {}; }
};

}  // namespace medeq
