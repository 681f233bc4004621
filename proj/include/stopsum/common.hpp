#pragma once

// Shared numeric utilities: stable log-domain arithmetic, compensated
// summation, bracketing searches, and adaptive quadrature wrappers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace stopsum {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Error taxonomy. The CLI maps these onto its exit-code contract, so new
// failure modes should pick one of the existing categories.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A stated hypothesis of the computation does not hold for the inputs.
class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& msg) : Error(msg) {}
};

// The requested computation exceeds double-precision or budget limits.
class NumericRangeError : public Error {
 public:
  explicit NumericRangeError(const std::string& msg) : Error(msg) {}
};

// The operation is not defined for this input family.
class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& msg) : Error(msg) {}
};

// Kahan-Babuska compensated accumulator.
class KahanSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// log(e^a + e^b), tolerant of -inf.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  KahanSum acc;
  for (double x : xs) acc.add(std::exp(x - m));
  return m + std::log(acc.value());
}

// e^b - e^a for b >= a, without cancellation.
inline double exp_diff(double a, double b) {
  if (b < a) throw Error("exp_diff: requires b >= a");
  if (a == kNegInf) return std::exp(b);
  return std::exp(a) * std::expm1(b - a);
}

// Smallest x in {x0 * factor^k} with pred(x) true. Throws NumericRangeError
// once x exceeds x_cap.
inline double doubling_search(double x0, double x_cap,
                              const std::function<bool(double)>& pred,
                              double factor = 2.0) {
  double x = x0;
  while (x <= x_cap) {
    if (pred(x)) return x;
    x *= factor;
  }
  throw NumericRangeError("doubling_search: predicate not reached below cap " +
                          std::to_string(x_cap));
}

// Solves fn(x) = target for continuous monotone fn on [lo, hi]. The caller
// guarantees the bracket; direction is inferred from the endpoint values.
inline double bisect_to_target(const std::function<double(double)>& fn,
                               double lo, double hi, double target,
                               double x_tol = 0.0, int max_iter = 200) {
  double flo = fn(lo);
  double fhi = fn(hi);
  bool increasing = fhi >= flo;
  if (increasing ? (target < flo || target > fhi)
                 : (target > flo || target < fhi)) {
    throw Error("bisect_to_target: target not bracketed");
  }
  for (int i = 0; i < max_iter && hi - lo > x_tol; ++i) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // double resolution exhausted
    double fm = fn(mid);
    if ((fm < target) == increasing) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Adaptive Gauss-Kronrod on a finite interval; relative tolerance.
inline double integrate(const std::function<double(double)>& f, double a,
                        double b, double rel_tol = 1e-12) {
  if (!(a < b)) return 0.0;
  double error = 0.0;
  double value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      f, a, b, 14, rel_tol, &error);
  return value;
}

// Integral over [a, inf).
inline double integrate_to_inf(const std::function<double(double)>& f,
                               double a, double rel_tol = 1e-12) {
  boost::math::quadrature::exp_sinh<double> integrator;
  double error = 0.0, l1 = 0.0;
  return integrator.integrate([&](double t) { return f(a + t); }, rel_tol,
                              &error, &l1);
}

// log of integral of exp(g(x)) over [a, b], scaled by the max of g on a
// coarse scan so the quadrature never overflows.
inline double log_integrate_exp(const std::function<double(double)>& g,
                                double a, double b, double rel_tol = 1e-10,
                                int scan_points = 64) {
  if (!(a < b)) return kNegInf;
  double m = kNegInf;
  for (int i = 0; i <= scan_points; ++i) {
    double x = a + (b - a) * static_cast<double>(i) / scan_points;
    m = std::max(m, g(x));
  }
  if (m == kNegInf) return kNegInf;
  double v = integrate([&](double x) { return std::exp(g(x) - m); }, a, b,
                       rel_tol);
  return v > 0 ? m + std::log(v) : kNegInf;
}

// Deterministic parallel map: fn(i) for i in [0, n), sharded over `workers`
// threads. Results must be written through disjoint indices by the caller.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         unsigned workers = 1) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = std::min<unsigned>(workers, static_cast<unsigned>(n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline unsigned worker_count_from_env() {
  const char* env = std::getenv("STOPSUM_WORKERS");
  if (env == nullptr) return 1;
  long v = std::strtol(env, nullptr, 10);
  if (v < 1) return 1;
  return static_cast<unsigned>(v);
}

}  // namespace stopsum
