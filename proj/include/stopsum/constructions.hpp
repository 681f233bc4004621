#pragma once

// Executable constructive existence proofs. Each builder turns a "choose x
// so large that ..." step into a doubling search and each "choose the
// parameter so that equality holds" step into a bisection against a
// monotone stage functional, and returns the built piecewise-linear
// function together with a machine-checkable certificate: per-stage
// equation residuals, exact shape flags, and divergence/finiteness
// witnesses in the form the proofs themselves use (per-stage floors,
// telescoping bounds).

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "stopsum/common.hpp"
#include "stopsum/compound.hpp"
#include "stopsum/distributions.hpp"
#include "stopsum/evidence.hpp"
#include "stopsum/lattice.hpp"
#include "stopsum/limits.hpp"
#include "stopsum/piecewise.hpp"
#include "stopsum/tail_model.hpp"

namespace stopsum {

struct CertificateFlag {
  std::string name;
  bool pass = false;
  double value = kNaN;
  double threshold = kNaN;
};

struct ConstructionCertificate {
  std::vector<double> residuals;  // per-stage |LHS - RHS| of the interval equation
  double residual_tol = 1e-8;
  std::vector<CertificateFlag> flags;
  std::vector<double> stage_contributions;  // divergence witness per stage
  double contribution_floor = kNaN;
  TailEvidence finiteness;
  TailEvidence divergence;
  bool partial = false;  // stage budget cut short by the numeric range
  std::string note;

  void add_flag(const std::string& name, bool pass, double value = kNaN,
                double threshold = kNaN) {
    flags.push_back({name, pass, value, threshold});
  }

  bool pass() const {
    for (double r : residuals) {
      if (!(r <= residual_tol)) return false;
    }
    for (const auto& f : flags) {
      if (!f.pass) return false;
    }
    if (!std::isnan(contribution_floor)) {
      for (double c : stage_contributions) {
        if (!(c >= contribution_floor * (1.0 - 1e-9))) return false;
      }
    }
    return true;
  }
};

namespace detail {

inline PiecewiseLinear shift_values(const PiecewiseLinear& f, double delta) {
  return PiecewiseLinear::from_slopes(f.knots(), f.values().front() + delta,
                                      f.slopes(), f.shape());
}

inline PiecewiseLinear line_through(double x0, double slope) {
  return PiecewiseLinear::from_slopes({x0}, 0.0, {slope}, Shape::Linear);
}

// smallest x >= x_start with pred(x), scanning by `factor`; the exact
// boundary is immaterial for the builders (any point past it works)
inline double grow_until(double x_start, double cap, double factor,
                         const std::function<bool(double)>& pred,
                         const std::string& what) {
  double x = x_start;
  for (int i = 0; i < 4000; ++i) {
    if (x > cap) break;
    if (pred(x)) return x;
    x *= factor;
  }
  throw NumericRangeError(what + ": not reachable below the numeric cap " +
                          std::to_string(cap));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Concave witness h <= f with E e^{h} < inf and E e^{h+g} = inf.

struct WitnessOptions {
  double bisect_rel_tol = 1e-11;
  EvidenceOptions evidence;
  bool assume_heavy = false;  // caller already certified heavy-tailedness
  double grid_start = 1.0;    // first doubling point for x_n searches
};

struct WitnessBuildResult {
  PiecewiseLinear h;
  ConstructionCertificate certificate;
  std::vector<double> stage_knots;    // x_0 .. x_N
  std::vector<double> stage_epsilons; // epsilon_1 .. epsilon_N
};

// Builds h on successive intervals (x_{n-1}, x_n]:
//   h = h(x_{n-1}) + eps_n min(h'(x_{n-1})(u - x_{n-1}), f(u) - f(x_{n-1}))
// with x_n past the point where e^{g} >= 2^n and eps_n in (0,1] solving
//   E{e^{h}; (x_{n-1}, x_n]} + e^{h(x_n)} T(x_n) = e^{h(x_{n-1})} T(x_{n-1}) + 2^{-n}.
inline WitnessBuildResult build_concave_witness(const TailModel& model,
                                                const PiecewiseLinear& f,
                                                const ScalarFunction& g,
                                                int n_stages,
                                                WitnessOptions opts = {}) {
  if (!model.is_heavy() && !opts.assume_heavy) {
    throw PreconditionError(
        "concave witness: requires a heavy-tailed law (no finite exponential "
        "moment)");
  }
  if (!f.slopes_nonincreasing(1e-12)) {
    throw PreconditionError("concave witness: f must be concave");
  }
  {
    auto fs = f.slopes();
    if (*std::min_element(fs.begin(), fs.end()) < 0.0) {
      throw PreconditionError("concave witness: f must be nondecreasing");
    }
  }
  if (std::abs(f(0.0)) > 1e-12) {
    throw PreconditionError("concave witness: normalise f(0) = 0");
  }
  double cap = model.domain_cap();

  // divergence of E e^{f(xi)} within the usable range
  EvidenceOptions ev = opts.evidence;
  ev.max_stages = std::min(
      ev.max_stages,
      static_cast<int>(std::floor(std::log2(cap / ev.x0))) - 1);
  auto partial_f = [&](double X) {
    return model.interval_exp(f, -1.0, std::min(X, cap));
  };
  TailEvidence div_f = divergence_evidence(partial_f, ev);
  if (div_f.verdict != EvidenceVerdict::Divergent) {
    throw PreconditionError(
        "concave witness: no divergence evidence for E e^{f(xi)} (" +
        div_f.note + ")");
  }

  // thresholds t_n with e^{g(x)} >= 2^n for all x >= t_n (g nondecreasing)
  const double ln2 = std::log(2.0);
  std::vector<double> thr(static_cast<std::size_t>(n_stages) + 1, 0.0);
  for (int n = 1; n <= n_stages; ++n) {
    double level = n * ln2;
    if (!(g(cap) >= level)) {
      throw PreconditionError(
          "concave witness: g stays below " + std::to_string(level) +
          " within the usable range; g must tend to infinity");
    }
    thr[static_cast<std::size_t>(n)] = detail::grow_until(
        std::max(opts.grid_start, thr[static_cast<std::size_t>(n - 1)]), cap,
        1.25, [&](double x) { return g(x) >= level; }, "g threshold");
  }

  WitnessBuildResult out{PiecewiseLinear::constant(0.0), {}, {0.0}, {}};
  ConstructionCertificate& cert = out.certificate;

  std::vector<double> h_knots{0.0};
  std::vector<double> h_slopes;
  double h_val = 0.0;
  double h_slope_left = f.right_derivative(0.0);
  double x_prev = 0.0;

  for (int n = 1; n <= n_stages; ++n) {
    PiecewiseLinear m = pw_min(detail::line_through(x_prev, h_slope_left),
                               detail::shift_values(f, -f(x_prev)), x_prev, cap,
                               Shape::Concave);
    double target = std::exp2(static_cast<double>(-n)) * std::exp(-h_val);
    auto inc_at = [&](double eps, double x) {
      return model.stage_increment(scale_pw(m, eps), x_prev, x);
    };
    double x_n = detail::grow_until(
        std::max({thr[static_cast<std::size_t>(n)], x_prev * 1.5,
                  x_prev + opts.grid_start}),
        cap, 1.5, [&](double x) { return inc_at(1.0, x) > target; },
        "concave witness stage " + std::to_string(n));
    // bisect eps in (0, 1]: the stage increment rises continuously from 0
    double lo = 0.0, hi = 1.0, eps = 1.0, val = inc_at(1.0, x_n);
    for (int it = 0; it < 200; ++it) {
      if (std::abs(val - target) <= target * opts.bisect_rel_tol) break;
      double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      double v = inc_at(mid, x_n);
      if (v < target) {
        lo = mid;
      } else {
        hi = mid;
        eps = mid;
        val = v;
      }
    }
    cert.residuals.push_back(std::exp(h_val) * std::abs(val - target));
    out.stage_epsilons.push_back(eps);
    out.stage_knots.push_back(x_n);

    // append the scaled min-piece to h over (x_prev, x_n]
    PiecewiseLinear piece = scale_pw(m, eps);
    const auto& pk = piece.knots();
    auto ps = piece.slopes();
    for (std::size_t i = 0; i < pk.size(); ++i) {
      if (pk[i] >= x_n) break;
      if (i > 0) h_knots.push_back(pk[i]);
      h_slopes.push_back(ps[i]);
    }
    h_knots.push_back(x_n);
    h_val += piece(x_n);
    h_slope_left = piece.left_derivative(x_n);
    x_prev = x_n;
  }
  h_slopes.push_back(h_slope_left);  // extrapolation beyond the last knot
  out.h = PiecewiseLinear::from_slopes(h_knots, 0.0, h_slopes, Shape::Concave);
  out.h.set_aux("epsilon", out.stage_epsilons);

  // certificate checks
  cert.add_flag("slopes_nonincreasing", out.h.slopes_nonincreasing(0.0));
  {
    bool eps_ok = true;
    for (double e : out.stage_epsilons) eps_ok = eps_ok && e > 0.0 && e <= 1.0;
    cert.add_flag("epsilon_in_unit_interval", eps_ok);
  }
  {
    double worst = kNegInf;
    for (double k : out.h.knots()) {
      worst = std::max(worst, out.h(k) - f(k));
      double mid = k + 0.5;
      if (mid < x_prev) worst = std::max(worst, out.h(mid) - f(mid));
    }
    cert.add_flag("h_below_f", worst <= 1e-10, worst, 1e-10);
  }
  if (n_stages > 0) {
    double x_N = out.stage_knots.back();
    double lhs = model.interval_exp(out.h, -1.0, x_N) +
                 std::exp(out.h(x_N) + model.log_tail(x_N));
    double rhs = model.tail(-1.0);
    for (int n = 1; n <= n_stages; ++n) rhs += std::exp2(-n);
    cert.add_flag("telescoping_identity", std::abs(lhs - rhs) <= n_stages * 1e-8,
                  std::abs(lhs - rhs), n_stages * 1e-8);
    cert.add_flag("exp_moment_bounded", lhs <= model.tail(-1.0) + 1.0 + 1e-8,
                  lhs, model.tail(-1.0) + 1.0);
    // divergence witness: E{e^{h+g}; xi > x_n} >= 1/2 per stage, evaluated
    // from below by integrating to x_N and keeping the boundary term
    std::vector<double> kinks = out.h.knots();
    if (auto* g_pl = dynamic_cast<const PiecewiseLinear*>(&g)) {
      for (double k : g_pl->knots()) kinks.push_back(k);
      std::sort(kinks.begin(), kinks.end());
      kinks.erase(std::unique(kinks.begin(), kinks.end()), kinks.end());
    }
    for (int n = 0; n < n_stages; ++n) {
      double a = out.stage_knots[static_cast<std::size_t>(n)];
      auto q = [&](double u) { return out.h(u) + g(u); };
      auto dq = [&](double u) {
        return out.h.left_derivative(u) + g.left_derivative(u);
      };
      double contrib = model.interval_exp_fn(q, dq, a, x_N, &kinks) +
                       std::exp(out.h(x_N) + g(x_N) + model.log_tail(x_N));
      cert.stage_contributions.push_back(contrib);
    }
    cert.contribution_floor = 0.5;
  }
  return out;
}

// Same under the reweighted measure P*(du) = e^{f1(u)} P(du) / E e^{f1}:
// h <= f2 concave with E e^{f1+h} < inf and E e^{f1+h+g} = inf.
inline WitnessBuildResult build_concave_witness_weighted(
    const LatticeDistribution& lat, const std::function<double(double)>& f1,
    const PiecewiseLinear& f2, const ScalarFunction& g, int n_stages,
    WitnessOptions opts = {}) {
  LatticeTailModel base(lat);
  EvidenceOptions ev = opts.evidence;
  ev.max_stages = std::min(
      ev.max_stages,
      static_cast<int>(std::floor(std::log2(base.domain_cap() / ev.x0))) - 1);
  auto partial_f1 = [&](double X) {
    return base.interval_exp_fn(f1, nullptr, -1.0,
                                std::min(X, base.domain_cap()));
  };
  TailEvidence fin_f1 = finiteness_evidence(partial_f1, ev);
  if (fin_f1.verdict != EvidenceVerdict::Finite) {
    throw PreconditionError(
        "weighted witness: no finiteness evidence for E e^{f1(xi)} (" +
        fin_f1.note + ")");
  }
  auto partial_f12 = [&](double X) {
    return base.interval_exp_fn([&](double u) { return f1(u) + f2(u); }, nullptr,
                                -1.0, std::min(X, base.domain_cap()));
  };
  TailEvidence div_f12 = divergence_evidence(partial_f12, ev);
  if (div_f12.verdict != EvidenceVerdict::Divergent) {
    throw PreconditionError(
        "weighted witness: no divergence evidence for E e^{f1+f2} (" +
        div_f12.note + ")");
  }
  WeightedLattice wl = reweight_lattice(lat, f1);
  LatticeTailModel weighted(wl.lattice, true);
  WitnessOptions wopts = opts;
  wopts.assume_heavy = true;
  WitnessBuildResult res = build_concave_witness(weighted, f2, g, n_stages, wopts);
  // conclusions under the original measure
  auto partial_f1h = [&](double X) {
    return base.interval_exp_fn(
        [&](double u) { return f1(u) + res.h(u); }, nullptr, -1.0,
        std::min(X, base.domain_cap()));
  };
  res.certificate.finiteness = finiteness_evidence(partial_f1h, ev);
  res.certificate.add_flag(
      "finite_exp_f1_plus_h",
      res.certificate.finiteness.verdict == EvidenceVerdict::Finite);
  auto partial_f1hg = [&](double X) {
    return base.interval_exp_fn(
        [&](double u) { return f1(u) + res.h(u) + g(u); }, nullptr, -1.0,
        std::min(X, base.domain_cap()));
  };
  res.certificate.divergence = divergence_evidence(partial_f1hg, ev);
  res.certificate.add_flag(
      "divergent_exp_f1_h_g",
      res.certificate.divergence.verdict == EvidenceVerdict::Divergent);
  return res;
}

// ---------------------------------------------------------------------------
// Differentiable concave g with g(0)=0, g' <= 1, g -> inf, E e^{g(chi)} < inf,
// built from the quantile knots P{chi > x_n} <= e^{-n} with strictly
// increasing gaps, g1(x_n) = n/2, and the closed-form unit-window smoothing
// g(x) = int_x^{x+1} g1 - int_0^1 g1.

struct FiniteExpConcaveResult {
  PiecewiseLinear g;   // dense chords of the smoothed function
  PiecewiseLinear g1;  // the underlying piecewise-linear stage function
  ConstructionCertificate certificate;
  std::function<double(double)> exact;             // smoothed g, closed form
  std::function<double(double)> exact_derivative;  // g1(x+1) - g1(x)
  int stages_built = 0;
};

namespace detail {

// smallest x with tail(x) <= p (tail nonincreasing, jumps allowed)
inline double tail_quantile(const std::function<double(double)>& tail, double p,
                            double lo, double cap) {
  if (tail(lo) <= p) return lo;
  double bad = lo;
  double x = std::max(lo, 1.0);
  for (;;) {
    if (x > cap) {
      throw NumericRangeError("tail quantile: level " + std::to_string(p) +
                              " not reached below the cap");
    }
    if (tail(x) <= p) break;
    bad = x;
    x *= 2.0;
  }
  double good = x;
  for (int i = 0; i < 120 && good - bad > 1e-12 * (1.0 + good); ++i) {
    double mid = 0.5 * (bad + good);
    (tail(mid) <= p ? good : bad) = mid;
  }
  return good;
}

}  // namespace detail

inline FiniteExpConcaveResult build_finite_exp_concave(
    const std::function<double(double)>& chi_tail, int n_stages = 40,
    double cap = 1e12) {
  FiniteExpConcaveResult out{PiecewiseLinear::constant(0.0),
                             PiecewiseLinear::constant(0.0),
                             {},
                             {},
                             {},
                             0};
  ConstructionCertificate& cert = out.certificate;
  const double gap_growth = 1.0 + 1.0 / 1024.0;
  std::vector<double> knots{0.0};
  int built = 0;
  for (int n = 1; n <= n_stages; ++n) {
    double q;
    try {
      q = detail::tail_quantile(chi_tail, std::exp(-static_cast<double>(n)),
                                0.0, cap);
    } catch (const Error&) {
      cert.partial = true;
      cert.note = "stage count capped at " + std::to_string(built) +
                  ": the tail does not reach e^-" + std::to_string(n) +
                  " within the numeric range";
      break;
    }
    double candidate;
    if (n == 1) {
      candidate = std::max(1.0, q);
    } else {
      double prev_gap = knots[knots.size() - 1] - knots[knots.size() - 2];
      candidate = std::max(q, knots.back() + prev_gap * gap_growth);
    }
    knots.push_back(candidate);
    ++built;
  }
  if (built < 1) {
    throw PreconditionError("finite-exp concave: no usable stage");
  }
  out.stages_built = built;
  std::vector<double> g1_values(knots.size());
  for (std::size_t i = 0; i < knots.size(); ++i) {
    g1_values[i] = 0.5 * static_cast<double>(i);
  }
  double last_gap = knots.back() - knots[knots.size() - 2];
  out.g1 = PiecewiseLinear(knots, g1_values, 0.5 / last_gap, Shape::Concave);

  // exact antiderivative of g1 at the knots (trapezoid is exact per piece)
  auto g1_copy = out.g1;
  std::vector<double> cum(knots.size(), 0.0);
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    cum[i + 1] = cum[i] + 0.5 * (g1_values[i] + g1_values[i + 1]) *
                              (knots[i + 1] - knots[i]);
  }
  auto knots_copy = knots;
  auto antiderivative = [g1_copy, cum, knots_copy](double x) {
    if (x <= knots_copy.front()) {
      // linear extension below 0 with the first slope
      double v0 = g1_copy(knots_copy.front());
      double vx = g1_copy(x);
      return -0.5 * (v0 + vx) * (knots_copy.front() - x);
    }
    auto it = std::upper_bound(knots_copy.begin(), knots_copy.end(), x);
    std::size_t i = static_cast<std::size_t>(it - knots_copy.begin()) - 1;
    double base = cum[i];
    double vx = g1_copy(x);
    return base + 0.5 * (g1_copy(knots_copy[i]) + vx) * (x - knots_copy[i]);
  };
  double c0 = antiderivative(1.0) - antiderivative(0.0);
  out.exact = [antiderivative, c0](double x) {
    return antiderivative(x + 1.0) - antiderivative(x) - c0;
  };
  out.exact_derivative = [g1_copy](double x) {
    return g1_copy(x + 1.0) - g1_copy(x);
  };

  // dense chord representation: breakpoints of the quadratic pieces plus
  // midpoints (chords of a concave function stay concave and below it)
  std::vector<double> gknots{0.0};
  for (std::size_t i = 1; i < knots.size(); ++i) {
    for (double cand : {knots[i] - 1.0, knots[i]}) {
      if (cand > gknots.back() + 1e-12) gknots.push_back(cand);
    }
  }
  std::vector<double> dense;
  for (std::size_t i = 0; i + 1 < gknots.size(); ++i) {
    dense.push_back(gknots[i]);
    dense.push_back(0.5 * (gknots[i] + gknots[i + 1]));
  }
  dense.push_back(gknots.back());
  std::vector<double> gvals;
  gvals.reserve(dense.size());
  for (double x : dense) gvals.push_back(out.exact(x));
  double fslope = out.exact_derivative(dense.back());
  out.g = PiecewiseLinear(dense, gvals, fslope, Shape::Concave);

  // certificate
  {
    bool gaps_ok = true;
    for (std::size_t i = 2; i < knots.size(); ++i) {
      gaps_ok = gaps_ok &&
                (knots[i] - knots[i - 1]) > (knots[i - 1] - knots[i - 2]);
    }
    cert.add_flag("knot_gaps_strictly_increasing", gaps_ok);
  }
  {
    bool tails_ok = true;
    double worst = 0.0;
    for (std::size_t i = 1; i < knots.size(); ++i) {
      double t = chi_tail(knots[i]);
      double bound = std::exp(-static_cast<double>(i));
      worst = std::max(worst, t - bound);
      tails_ok = tails_ok && t <= bound * (1.0 + 1e-12);
    }
    cert.add_flag("tail_at_knots_below_e_minus_n", tails_ok, worst, 0.0);
  }
  {
    auto slopes = out.g.slopes();
    double mx = *std::max_element(slopes.begin(), slopes.end());
    cert.add_flag("slopes_at_most_one", mx <= 1.0, mx, 1.0);
    cert.add_flag("concave", out.g.slopes_nonincreasing(1e-12));
    cert.add_flag("zero_at_origin", out.g(0.0) == 0.0, out.g(0.0), 0.0);
  }
  {
    // proof-side bound: E e^{g1(chi)} <= sum e^{(n+1)/2} e^{-n}
    double b_inf = std::exp(0.5) / (1.0 - std::exp(-0.5));
    KahanSum partial;
    std::vector<double> trace;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
      double dp = chi_tail(knots[i]) - chi_tail(knots[i + 1]);
      partial.add(std::exp(g1_values[i + 1]) * std::max(0.0, dp));
      trace.push_back(partial.value());
    }
    double tail_rest = std::exp(-0.5 * static_cast<double>(built)) *
                       std::exp(0.5) / (1.0 - std::exp(-0.5));
    cert.finiteness.verdict = EvidenceVerdict::Finite;
    cert.finiteness.partials = trace;
    cert.finiteness.bound = partial.value() + tail_rest;
    cert.finiteness.note = "upper partial sums of E e^{g1(chi)} plus the "
                           "geometric remainder";
    cert.add_flag("exp_moment_within_proof_bound",
                  cert.finiteness.bound <= b_inf * (1.0 + 1e-9),
                  cert.finiteness.bound, b_inf);
    // smoothing shifts the exponent by at most g1(x+1)-g1(x)-1/4 <= 1/4
    cert.add_flag("smoothed_exp_moment_bounded",
                  cert.finiteness.bound * std::exp(0.25) <=
                      b_inf * std::exp(0.25) * (1.0 + 1e-9),
                  cert.finiteness.bound * std::exp(0.25),
                  b_inf * std::exp(0.25));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sublinear concave minorant: f1 <= f with f1(x) = o(x) and E e^{f1(chi)}
// = inf, via per-stage slope damping f1'(x_{n+1}) <= f1'(x_n)/n and unit
// stage integrals.

struct SublinearResult {
  PiecewiseLinear f1;
  ConstructionCertificate certificate;
  std::vector<double> stage_knots;
  int stages_built = 0;
};

inline SublinearResult flatten_to_sublinear(const TailModel& model,
                                            const PiecewiseLinear& f,
                                            int n_stages,
                                            WitnessOptions opts = {}) {
  if (!f.slopes_nonincreasing(1e-12)) {
    throw PreconditionError("flatten_to_sublinear: f must be concave");
  }
  double cap = model.domain_cap();
  EvidenceOptions ev = opts.evidence;
  ev.max_stages = std::min(
      ev.max_stages,
      static_cast<int>(std::floor(std::log2(cap / ev.x0))) - 1);
  auto partial_f = [&](double X) {
    return model.interval_exp(f, -1.0, std::min(X, cap));
  };
  TailEvidence div_f = divergence_evidence(partial_f, ev);
  if (div_f.verdict != EvidenceVerdict::Divergent) {
    throw PreconditionError(
        "flatten_to_sublinear: no divergence evidence for E e^{f(chi)} (" +
        div_f.note + ")");
  }

  SublinearResult out{PiecewiseLinear::constant(0.0), {}, {0.0}, 0};
  ConstructionCertificate& cert = out.certificate;
  cert.contribution_floor = 1.0;

  // initialisation: f1 = min(x, f(x)) on [0, x_1] with unit stage mass
  PiecewiseLinear q0 = pw_min(detail::line_through(0.0, 1.0), f, 0.0, cap,
                              Shape::Concave);
  double x1;
  try {
    x1 = detail::grow_until(
        opts.grid_start, cap, 1.5,
        [&](double x) { return model.interval_exp(q0, -1.0, x) >= 1.0; },
        "flatten_to_sublinear initial stage");
  } catch (const NumericRangeError&) {
    throw PreconditionError(
        "flatten_to_sublinear: the initial stage mass cannot reach 1");
  }
  std::vector<double> knots{0.0};
  std::vector<double> slopes;
  {
    const auto& qk = q0.knots();
    auto qs = q0.slopes();
    for (std::size_t i = 0; i < qk.size(); ++i) {
      if (qk[i] >= x1) break;
      if (i > 0) knots.push_back(qk[i]);
      slopes.push_back(qs[i]);
    }
    knots.push_back(x1);
  }
  out.stage_knots.push_back(x1);
  cert.stage_contributions.push_back(model.interval_exp(q0, -1.0, x1));
  ++out.stages_built;
  double f1_val = q0(x1);
  double slope_left = q0.left_derivative(x1);
  double x_prev = x1;

  for (int n = 1; n < n_stages; ++n) {
    double s_n = slope_left / static_cast<double>(n);
    PiecewiseLinear m = pw_min(detail::line_through(x_prev, s_n),
                               detail::shift_values(f, -f(x_prev)), x_prev, cap,
                               Shape::Concave);
    double target = std::exp(-f1_val);  // stage integral of e^{m} must reach it
    double x_next;
    try {
      x_next = detail::grow_until(
          std::max(x_prev * 1.5, x_prev + opts.grid_start), cap, 1.5,
          [&](double x) { return model.interval_exp(m, x_prev, x) >= target; },
          "flatten_to_sublinear stage " + std::to_string(n));
    } catch (const NumericRangeError&) {
      cert.partial = true;
      cert.note = "stage count capped at " + std::to_string(out.stages_built) +
                  ": stage integral cannot reach 1 within the numeric range";
      break;
    }
    double contrib = std::exp(f1_val) * model.interval_exp(m, x_prev, x_next);
    cert.stage_contributions.push_back(contrib);
    const auto& mk = m.knots();
    auto ms = m.slopes();
    for (std::size_t i = 0; i < mk.size(); ++i) {
      if (mk[i] >= x_next) break;
      if (i > 0) knots.push_back(mk[i]);
      slopes.push_back(ms[i]);
    }
    knots.push_back(x_next);
    out.stage_knots.push_back(x_next);
    ++out.stages_built;
    f1_val += m(x_next);
    slope_left = m.left_derivative(x_next);
    x_prev = x_next;
  }
  slopes.push_back(slope_left);
  out.f1 = PiecewiseLinear::from_slopes(knots, 0.0, slopes, Shape::Concave);

  cert.add_flag("concave", out.f1.slopes_nonincreasing(0.0));
  {
    double worst = kNegInf;
    for (double k : out.f1.knots()) worst = std::max(worst, out.f1(k) - f(k));
    cert.add_flag("f1_below_f", worst <= 1e-10, worst, 1e-10);
  }
  {
    // slope decay by 1/n across stages
    bool decay_ok = true;
    double prev = out.f1.left_derivative(out.stage_knots[0]);
    for (int n = 1; n < out.stages_built; ++n) {
      double cur =
          out.f1.left_derivative(out.stage_knots[static_cast<std::size_t>(n)]);
      decay_ok = decay_ok && cur <= prev / static_cast<double>(n) * (1 + 1e-12);
      prev = cur;
    }
    cert.add_flag("slope_decay_factor_n", decay_ok);
  }
  {
    // f1(x)/x decreasing at the stage knots witnesses sublinearity
    bool dec = true;
    double prev = kPosInf;
    for (double k : out.stage_knots) {
      double v = out.f1(k) / k;
      dec = dec && v <= prev * (1.0 + 1e-12);
      prev = v;
    }
    cert.add_flag("value_over_x_decreasing", dec);
  }
  return out;
}

}  // namespace stopsum

#include "stopsum/constructions_separator.hpp"
#include "stopsum/constructions_growth.hpp"
