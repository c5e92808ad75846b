#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "medeq/units.hpp"

#ifdef MEDEQ_HAVE_LAPACKE
#include <complex>
#ifndef lapack_complex_float
#define lapack_complex_float std::complex<float>
#endif
#ifndef lapack_complex_double
#define lapack_complex_double std::complex<double>
#endif
#include <lapacke.h>
#endif

namespace medeq {

struct EigenSystem {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns, vectors.col(j) pairs with values[j]
};

// Dense symmetric eigensolve. Only the lower triangle is referenced.
inline EigenSystem eigh(Eigen::MatrixXd a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("eigh: matrix must be square");
  EigenSystem es;
  if (a.rows() == 0) {
    es.values.resize(0);
    es.vectors.resize(0, 0);
    return es;
  }
#ifdef MEDEQ_HAVE_LAPACKE
  const lapack_int n = static_cast<lapack_int>(a.rows());
  es.values.resize(n);
  // Eigen is column-major; dsyevd overwrites the input with the eigenvectors.
  lapack_int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, a.data(), n, es.values.data());
  if (info != 0)
    throw std::runtime_error("eigh: dsyevd failed with info " + std::to_string(info));
  es.vectors = std::move(a);
#else
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> s(a);
  if (s.info() != Eigen::Success) throw std::runtime_error("eigh: iteration failed");
  es.values = s.eigenvalues();
  es.vectors = s.eigenvectors();
#endif
  return es;
}

inline unsigned thread_count() {
  if (const char* env = std::getenv("MEDEQ_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1 && v < 1024) return static_cast<unsigned>(v);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? hc : 1;
}

// Deterministic work sharing: body(i) must write only to slot i of
// preallocated storage, so results do not depend on the thread count.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  const std::size_t nt = std::min<std::size_t>(thread_count(), n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (std::size_t t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      try {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// mt19937_64 with an explicit 53-bit mantissa map so streams do not depend
// on standard-library distribution internals (byte-identical artifacts).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * kPi * uniform();
    spare_ = r * std::sin(phi);
    have_spare_ = true;
    return r * std::cos(phi);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// sin(x)/x and (1 - cos(x))/x^2 with stable small-argument branches.
inline double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0);
  }
  return std::sin(x) / x;
}

inline double cosc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 0.5 - x2 / 24.0 * (1.0 - x2 / 30.0);
  }
  const double s = std::sin(0.5 * x);
  return 2.0 * s * s / (x * x);
}

}  // namespace medeq
