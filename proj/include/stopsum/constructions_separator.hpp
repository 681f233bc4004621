#pragma once

// Convex separating witness for the heavy-tailed lower-limit theorem: an
// increasing piecewise-linear convex h (the inverse of the concave rate
// function) whose stage integrals of e^x against the size-biased counting
// tail halve per stage while the size-biased summand integrals stay above
// one. A light-tailed counting law short-circuits to a linear witness.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stopsum/common.hpp"
#include "stopsum/distributions.hpp"
#include "stopsum/evidence.hpp"
#include "stopsum/limits.hpp"
#include "stopsum/piecewise.hpp"

namespace stopsum {

struct SeparatorOptions {
  double bisect_rel_tol = 1e-11;
  double x_cap = 5000.0;        // log-domain integrals stay finite regardless
  double ratio_probe_factor = 2.0;
  int ratio_probes = 6;
  std::vector<double> hypothesis_grid;  // empty: derived automatically
};

struct SeparatorResult {
  PiecewiseLinear h;  // convex, h(0) = 0, slopes a_n strictly increasing
  ConstructionCertificate certificate;
  bool light_shortcut = false;
  double lambda = kNaN;  // slope of the linear witness in the light case
  std::vector<double> stage_knots;
  std::vector<double> stage_slopes;
  std::vector<double> g_star_integrals;  // target 2^{-n} each
  std::vector<double> f_star_integrals;  // floor 1 each
};

namespace detail {

// log of int_lo^hi e^y T*(h0 + a (y - lo)) dy where T*(z) is the
// size-biased counting tail at z / c (a right-continuous step function).
// Exact per step: the integrand is e^y times a constant between crossings.
inline double log_step_integral(const CountingDistribution& tau_star, double c,
                                double lo, double hi, double h0, double a) {
  if (!(hi > lo)) return kNegInf;
  double h_hi = h0 + a * (hi - lo);
  long m0 = static_cast<long>(std::floor(h0 / c + 1e-12));
  long m1 = static_cast<long>(std::floor(h_hi / c + 1e-12));
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(m1 - m0) + 2);
  for (long m = m0; m <= m1; ++m) {
    double y_lo = m == m0 ? lo : lo + (static_cast<double>(m) * c - h0) / a;
    double y_hi = m == m1 ? hi : lo + (static_cast<double>(m + 1) * c - h0) / a;
    y_lo = std::max(y_lo, lo);
    y_hi = std::min(y_hi, hi);
    if (!(y_hi > y_lo)) continue;
    double lt = tau_star.log_tail(m);
    if (lt == kNegInf) continue;
    terms.push_back(lt + y_lo + std::log(std::expm1(y_hi - y_lo)));
  }
  return log_sum_exp(terms);
}

}  // namespace detail

inline SeparatorResult build_tail_separator(const AnalyticDistribution& f,
                                            const CountingDistribution& tau,
                                            double c, int n_stages,
                                            SeparatorOptions opts = {}) {
  if (!f.is_heavy_tailed()) {
    throw PreconditionError(
        "tail separator: the summand law must be heavy-tailed");
  }
  double mean = f.mean();
  if (!std::isfinite(mean)) {
    throw PreconditionError("tail separator: requires E xi < inf");
  }
  if (!(c > mean)) {
    throw PreconditionError(
        "tail separator: the hypothesis requires c > E xi; got c = " +
        std::to_string(c) + " with E xi = " + std::to_string(mean));
  }
  {
    std::vector<double> grid = opts.hypothesis_grid;
    if (grid.empty()) {
      double x_hi = f.quantile_tail(1e-10);
      grid = geometric_knots(std::max(c, f.support_left() + 1.0), x_hi,
                             std::max(1.0, c), 1.3);
    }
    TrendCurve dom = check_counting_tail_negligible(f, tau, c, grid);
    if (!dom.verdict_positive) {
      throw PreconditionError(
          "tail separator: the counting-tail domination hypothesis fails on "
          "the probe grid (P{c tau > x} is not negligible against the "
          "summand tail)");
    }
  }

  SeparatorResult out{PiecewiseLinear::constant(0.0), {}, false, kNaN,
                      {0.0},  {},  {},    {}};
  ConstructionCertificate& cert = out.certificate;

  if (!tau.is_heavy_tailed()) {
    // light-tailed counting law: a linear witness f(x) = lambda x with
    // E tau e^{lambda c tau} < inf taken with a factor-2 margin
    out.light_shortcut = true;
    double abscissa = tau.exp_moment_abscissa();
    double lambda = std::min(abscissa, 2.0) / (2.0 * c);
    out.lambda = lambda;
    out.h = PiecewiseLinear::from_slopes({0.0}, 0.0, {1.0 / lambda},
                                         Shape::Convex);
    KahanSum partial;
    std::vector<double> trace;
    for (long n = 0; n <= tau.enumeration_limit(1e-16); ++n) {
      double p = tau.pmf(n);
      if (p > 0.0) {
        partial.add(static_cast<double>(n) * p * std::exp(lambda * c * n));
      }
      if (n % 8 == 0) trace.push_back(partial.value());
    }
    cert.finiteness.verdict = EvidenceVerdict::Finite;
    cert.finiteness.partials = trace;
    cert.finiteness.bound = partial.value();
    cert.finiteness.note = "E tau e^{lambda c tau} summed to the enumeration "
                           "limit at half the exponential abscissa";
    cert.add_flag("linear_witness_moment_finite",
                  std::isfinite(partial.value()), partial.value());
    return out;
  }

  AnalyticDistribution f_star = f.size_biased();
  CountingDistribution tau_star = tau.size_biased();
  const double ln2 = std::log(2.0);

  // smallest y with the ratio condition log F*(y) - log G*(y) >= level,
  // spot-checked at geometric probes beyond
  auto ratio_threshold = [&](double level, double start) {
    auto log_ratio = [&](double y) {
      return f_star.log_tail(y) - tau_star.log_tail_real(y / c);
    };
    auto ok = [&](double y) {
      if (log_ratio(y) < level) return false;
      double probe = y;
      for (int i = 0; i < opts.ratio_probes; ++i) {
        probe *= opts.ratio_probe_factor;
        if (probe > opts.x_cap * 64.0) break;
        if (log_ratio(probe) < level) return false;
      }
      return true;
    };
    return detail::grow_until(start, opts.x_cap, 1.2, ok,
                              "tail separator ratio condition");
  };

  double x_prev = 0.0;
  double h_val = 0.0;
  double a_prev = 1.0;  // the proof's floor for a_0
  for (int n = 0; n < n_stages; ++n) {
    double level = static_cast<double>(n + 1) * ln2;
    double log_target = -static_cast<double>(n) * ln2;
    double x_next;
    try {
      double start = std::max({x_prev * 1.1, x_prev + 0.5, c * 0.5});
      double xr = ratio_threshold(level, start);
      double xi = detail::grow_until(
          start, opts.x_cap, 1.2,
          [&](double y) {
            return detail::log_step_integral(tau_star, c, x_prev, y, h_val,
                                             a_prev) >= log_target;
          },
          "tail separator stage integral");
      x_next = std::max(xr, xi);
    } catch (const NumericRangeError&) {
      cert.partial = true;
      cert.note = "stage count capped at " + std::to_string(n) +
                  " by the numeric range";
      break;
    }
    // slope a_n > a_{n-1}: the stage integral decreases continuously in a
    auto delta = [&](double a) {
      return std::exp(
          detail::log_step_integral(tau_star, c, x_prev, x_next, h_val, a));
    };
    double target = std::exp2(-static_cast<double>(n));
    double a_lo = a_prev, a_hi = a_prev;
    while (delta(a_hi) >= target) {
      a_hi *= 2.0;
      if (a_hi > 1e280) {
        throw NumericRangeError("tail separator: slope search overflow");
      }
    }
    double a_n = a_hi, val = delta(a_hi);
    for (int it = 0; it < 200; ++it) {
      if (std::abs(val - target) <= target * opts.bisect_rel_tol) break;
      double mid = 0.5 * (a_lo + a_hi);
      if (mid <= a_lo || mid >= a_hi) break;
      double v = delta(mid);
      if (v >= target) {
        a_lo = mid;
      } else {
        a_hi = mid;
      }
      a_n = mid;
      val = v;
    }
    cert.residuals.push_back(std::abs(val - target));
    out.g_star_integrals.push_back(val);
    out.stage_knots.push_back(x_next);
    out.stage_slopes.push_back(a_n);
    // F* stage integral in the log domain; each must reach 2^n 2^{-n} = 1
    double log_fint = log_integrate_exp(
        [&](double y) {
          return y + f_star.log_tail(h_val + a_n * (y - x_prev));
        },
        x_prev, x_next, 1e-10, 256);
    out.f_star_integrals.push_back(std::exp(log_fint));
    h_val += a_n * (x_next - x_prev);
    x_prev = x_next;
    a_prev = a_n;
  }
  if (out.stage_slopes.empty()) {
    throw NumericRangeError("tail separator: no stage could be built");
  }
  std::vector<double> knots{0.0};
  knots.insert(knots.end(), out.stage_knots.begin() + 1, out.stage_knots.end());
  std::vector<double> slopes = out.stage_slopes;
  out.h = PiecewiseLinear::from_slopes(knots, 0.0, slopes, Shape::Convex);
  out.h.set_aux("a", out.stage_slopes);

  cert.add_flag("slopes_nondecreasing_convex", out.h.slopes_nondecreasing(0.0));
  {
    bool strict = true;
    for (std::size_t i = 1; i < out.stage_slopes.size(); ++i) {
      strict = strict && out.stage_slopes[i] > out.stage_slopes[i - 1];
    }
    cert.add_flag("slopes_strictly_increasing", strict);
    cert.add_flag("first_slope_at_least_one", out.stage_slopes.front() >= 1.0,
                  out.stage_slopes.front(), 1.0);
  }
  {
    KahanSum s;
    for (double v : out.g_star_integrals) s.add(v);
    double n_built = static_cast<double>(out.g_star_integrals.size());
    double expected = 2.0 - std::exp2(-(n_built - 1.0));
    cert.add_flag("g_star_integrals_sum_geometric",
                  std::abs(s.value() - expected) <= 1e-8,
                  std::abs(s.value() - expected), 1e-8);
  }
  cert.stage_contributions = out.f_star_integrals;
  cert.contribution_floor = 1.0;
  {
    // ratio condition at the built knots
    bool ok = true;
    for (std::size_t i = 1; i < out.stage_knots.size(); ++i) {
      double y = out.stage_knots[i] * 1.000001;
      double lr = f_star.log_tail(y) - tau_star.log_tail_real(y / c);
      ok = ok && lr >= static_cast<double>(i) * ln2 * (1.0 - 1e-9);
    }
    cert.add_flag("ratio_condition_at_knots", ok);
  }
  return out;
}

}  // namespace stopsum
