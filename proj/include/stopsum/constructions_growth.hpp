#pragma once

// Growth-rate verification for E e^{h(S_n)} against K e^{h(nc)}, the
// drift-point finder for E e^{h(x + eta)} <= e^{h(x)}, and the composed
// concave-witness pipeline (sublinear reduction, slow concave correction,
// weighted witness, premise checks). Included via constructions.hpp.

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

struct GrowthBoundOptions {
  double step = 0.5;
  double cutoff = 0.0;       // 0: tail quantile at 1e-12
  double sum_cutoff = 0.0;   // 0: 3 c N
  double growth_tol = 0.02;  // allowed rise of the last-half ratio maximum
  EvidenceOptions evidence;
};

struct GrowthBoundReport {
  std::vector<double> ratios;  // E e^{h(S_n)} / e^{h(nc)} for n = 1..N
  double k_hat = kNaN;         // max ratio, the empirical constant
  bool bounded = false;        // no growth trend across the last half
  double first_half_max = kNaN;
  double last_half_max = kNaN;
  std::vector<double> dropped_mass_bounds;  // per-n bound from the cap bucket
  std::string rule;
};

// Precondition scans for h: nondecreasing, eventually concave, and
// h(x) >= ln x on the far grid. Violations raise PreconditionError.
inline void check_growth_h(const ScalarFunction& h, double x_hi) {
  double prev = h(0.0);
  for (int i = 1; i <= 200; ++i) {
    double x = x_hi * static_cast<double>(i) / 200.0;
    double v = h(x);
    if (v < prev - 1e-12 * (1.0 + std::abs(prev))) {
      throw PreconditionError("growth bound: h must be nondecreasing");
    }
    prev = v;
  }
  double dprev = kPosInf;
  for (int i = 0; i <= 40; ++i) {
    double x = x_hi * (0.25 + 0.75 * static_cast<double>(i) / 40.0);
    double d = h.left_derivative(x);
    if (d > dprev + 1e-9 * (1.0 + std::abs(dprev))) {
      throw PreconditionError("growth bound: h must be eventually concave");
    }
    dprev = d;
  }
  for (int i = 0; i <= 40; ++i) {
    double x = x_hi * (0.25 + 0.75 * static_cast<double>(i) / 40.0);
    if (h(x) < std::log(x)) {
      throw PreconditionError(
          "growth bound: h(x) >= ln x must hold at large x; violated at x = " +
          std::to_string(x));
    }
  }
}

// Computes E e^{h(S_n)} for n = 1..N on lattices and reports the empirical
// constant K-hat = max_n of the ratio against e^{h(nc)} plus a bounded-
// trend verdict over the last half of the n range.
inline GrowthBoundReport verify_growth_bound(const AnalyticDistribution& f,
                                             const ScalarFunction& h, double c,
                                             int N,
                                             GrowthBoundOptions opts = {}) {
  double mean = f.mean();
  if (!std::isfinite(mean) || !(c > mean)) {
    throw PreconditionError("growth bound: requires c > E xi < inf");
  }
  double cutoff = opts.cutoff > 0.0 ? opts.cutoff : f.quantile_tail(1e-12);
  double sum_cutoff =
      opts.sum_cutoff > 0.0 ? opts.sum_cutoff : 3.0 * c * static_cast<double>(N);
  check_growth_h(h, sum_cutoff);
  {
    AnalyticTailModel model(f);
    auto partial = [&](double X) {
      return model.interval_exp_fn([&](double u) { return h(u); },
                                   [&](double u) { return h.left_derivative(u); },
                                   -1.0, std::min(X, model.domain_cap()));
    };
    TailEvidence fin = finiteness_evidence(partial, opts.evidence);
    if (fin.verdict == EvidenceVerdict::Divergent) {
      throw PreconditionError(
          "growth bound: E e^{h(xi)} diverges on this instance");
    }
  }
  LatticeDistribution lat = discretize(f, opts.step, cutoff);
  long cap = static_cast<long>(std::floor(sum_cutoff / opts.step));
  GrowthBoundReport rep;
  rep.rule = "bounded iff max ratio over (N/2, N] <= (1 + growth_tol) * max "
             "over [1, N/2]";
  LatticeDistribution cur = lat;
  for (int n = 1; n <= N; ++n) {
    if (n > 1) cur = convolve(cur, lat, cap);
    double log_e = lattice_log_exp_expectation(
        cur, [&](double u) { return h(u); });
    double ratio = std::exp(log_e - h(static_cast<double>(n) * c));
    rep.ratios.push_back(ratio);
    rep.dropped_mass_bounds.push_back(
        cur.deficit() * std::exp(h(static_cast<double>(n) * cutoff) - log_e));
  }
  rep.k_hat = *std::max_element(rep.ratios.begin(), rep.ratios.end());
  std::size_t half = rep.ratios.size() / 2;
  rep.first_half_max = *std::max_element(rep.ratios.begin(),
                                         rep.ratios.begin() + half);
  rep.last_half_max = *std::max_element(rep.ratios.begin() + half,
                                        rep.ratios.end());
  rep.bounded = rep.last_half_max <= rep.first_half_max * (1.0 + opts.growth_tol);
  return rep;
}

struct DriftPointReport {
  bool found = false;
  double x0 = kNaN;
  std::vector<double> xs;
  std::vector<double> margins;  // e^{h(x)} - E e^{h(x + eta)}
  double max_violating_x = kNaN;
  std::string note;
};

// Scans the grid for the smallest x0 past which E e^{h(x+eta)} <= e^{h(x)}
// holds for every tested x (eta is a lattice law with negative mean,
// typically xi - c on a shifted grid).
inline DriftPointReport find_x0_semi_moment(const LatticeDistribution& eta,
                                            const ScalarFunction& h,
                                            double x_lo, double x_hi,
                                            double dx) {
  if (!(dx > 0.0) || !(x_hi > x_lo)) {
    throw PreconditionError("drift point: bad scan grid");
  }
  double mean = eta.represented_mean();
  if (!(mean < 0.0)) {
    throw PreconditionError("drift point: requires E eta < 0, got " +
                            std::to_string(mean));
  }
  DriftPointReport rep;
  if (eta.deficit() > 1e-9) {
    rep.note = "eta carries a truncation bucket of " +
               std::to_string(eta.deficit()) +
               "; margins ignore the mass beyond the cutoff";
  }
  for (double x = x_lo; x <= x_hi + 1e-12; x += dx) {
    KahanSum e;
    for (std::size_t i = 0; i < eta.size(); ++i) {
      if (eta.mass_at(i) > 0.0) {
        e.add(eta.mass_at(i) * std::exp(h(x + eta.x_at(i))));
      }
    }
    rep.xs.push_back(x);
    rep.margins.push_back(std::exp(h(x)) - e.value());
  }
  // smallest grid x0 with nonnegative margins from there on
  std::size_t idx = rep.xs.size();
  for (std::size_t i = rep.xs.size(); i-- > 0;) {
    double tol = 1e-12 * std::exp(h(rep.xs[i]));
    if (rep.margins[i] < -tol) {
      rep.max_violating_x = rep.xs[i];
      break;
    }
    idx = i;
  }
  if (idx < rep.xs.size()) {
    rep.found = true;
    rep.x0 = rep.xs[idx];
  } else {
    rep.note = "inequality never holds within the scanned range; largest "
               "violating x = " + std::to_string(rep.max_violating_x);
  }
  return rep;
}

// Shifts a lattice law by -c (a whole number of steps) to form eta = xi - c.
inline LatticeDistribution shift_lattice_by(const LatticeDistribution& xi,
                                            double c) {
  double steps = c / xi.step();
  long m = static_cast<long>(std::llround(steps));
  if (std::abs(steps - static_cast<double>(m)) > 1e-9) {
    throw PreconditionError(
        "shift_lattice_by: c must be a whole number of lattice steps");
  }
  return xi.shifted(-m);
}

// ---------------------------------------------------------------------------
// Composed pipeline: from a concave f with E e^{f(xi)} = inf and
// E e^{f(c tau)} < inf, builds the slow concave correction g (through the
// log reparametrisation g(x) = g1(ln(x+1)) - 1), the weighted witness h
// with E xi e^{h} < inf and E xi e^{h+g} = inf, forms r = h + g, certifies
// E tau e^{h(c tau)+g(c tau)} < inf, and runs the premise checks for r.

struct PipelineOptions {
  double lattice_step = 0.05;
  double lattice_cutoff = 2000.0;
  int witness_stages = 5;
  int concave_stages = 30;
  WitnessOptions witness;
  PropositionOptions proposition;
};

struct PipelineResult {
  PiecewiseLinear g_chords;   // the correction g sampled as chords
  PiecewiseLinear h;          // weighted witness
  PiecewiseLinear r;          // h + g chords
  ConstructionCertificate h_certificate;
  ConstructionCertificate g_certificate;
  TailEvidence premise_divergent;     // E e^{f(xi)} = inf
  TailEvidence premise_finite;        // E e^{f(c tau)} < inf
  TailEvidence stopped_moment_finite; // E tau e^{h(c tau)+g(c tau)} < inf
  PropositionReport proposition;
};

inline PipelineResult run_concave_pipeline(const AnalyticDistribution& f_dist,
                                           const CountingDistribution& tau,
                                           const PiecewiseLinear& f,
                                           const PiecewiseLinear& f2,
                                           double c,
                                           PipelineOptions opts = {}) {
  AnalyticTailModel model(f_dist);
  PipelineResult out{PiecewiseLinear::constant(0.0),
                     PiecewiseLinear::constant(0.0),
                     PiecewiseLinear::constant(0.0),
                     {}, {}, {}, {}, {}, {}};
  // premises of the composed statement
  EvidenceOptions ev = opts.witness.evidence;
  ev.max_stages = std::min(
      ev.max_stages,
      static_cast<int>(std::floor(std::log2(model.domain_cap() / ev.x0))) - 1);
  out.premise_divergent = divergence_evidence(
      [&](double X) {
        return model.interval_exp(f, -1.0, std::min(X, model.domain_cap()));
      },
      ev);
  if (out.premise_divergent.verdict != EvidenceVerdict::Divergent) {
    throw PreconditionError("pipeline: no divergence evidence for E e^{f(xi)}");
  }
  long tau_limit = tau.enumeration_limit(1e-16);
  out.premise_finite = finiteness_evidence(
      [&](double N) {
        KahanSum s;
        long hi = std::min(tau_limit, static_cast<long>(N));
        for (long n = 0; n <= hi; ++n) {
          double p = tau.pmf(n);
          if (p > 0.0) s.add(p * std::exp(f(c * static_cast<double>(n))));
        }
        return s.value();
      },
      ev);
  if (out.premise_finite.verdict != EvidenceVerdict::Finite) {
    throw PreconditionError(
        "pipeline: no finiteness evidence for E e^{f(c tau)}");
  }

  // slow concave correction for chi = c tau under the e^{f}-weighted measure
  std::vector<double> wlog(static_cast<std::size_t>(tau_limit) + 1, kNegInf);
  for (long n = 0; n <= tau_limit; ++n) {
    double lp = tau.log_pmf(n);
    if (lp != kNegInf) wlog[static_cast<std::size_t>(n)] = lp + f(c * n);
  }
  double wz = log_sum_exp(wlog);
  std::vector<double> wsuffix(wlog.size() + 1, kNegInf);
  for (std::size_t i = wlog.size(); i-- > 0;) {
    wsuffix[i] = log_add(wsuffix[i + 1], wlog[i]);
  }
  auto weighted_ctau_tail = [&, wz](double y) {
    long n = y < 0.0 ? -1 : static_cast<long>(std::floor(y / c));
    std::size_t idx = static_cast<std::size_t>(n + 1);
    if (idx >= wsuffix.size()) return 0.0;
    double ls = wsuffix[idx];
    return ls == kNegInf ? 0.0 : std::exp(ls - wz);
  };
  FiniteExpConcaveResult gres =
      build_finite_exp_concave(weighted_ctau_tail, opts.concave_stages);
  out.g_certificate = gres.certificate;
  auto g1 = gres.exact;
  auto dg1 = gres.exact_derivative;
  auto g_exact = [g1](double x) { return g1(std::log1p(x)) - 1.0; };
  auto dg_exact = [dg1](double x) { return dg1(std::log1p(x)) / (1.0 + x); };
  FunctionView g_fn(g_exact, dg_exact);

  // weighted witness with f1 = ln u on the lattice carrier
  LatticeDistribution lat =
      discretize(f_dist, opts.lattice_step, opts.lattice_cutoff, {true});
  auto f1 = [](double u) { return u > 0.0 ? std::log(u) : kNegInf; };
  WitnessBuildResult hres = build_concave_witness_weighted(
      lat, f1, f2, g_fn, opts.witness_stages, opts.witness);
  out.h = hres.h;
  out.h_certificate = hres.certificate;

  // r = h + g as chords over the witness knots plus refinement points
  std::vector<double> rknots = out.h.knots();
  {
    std::vector<double> extra;
    for (std::size_t i = 0; i + 1 < rknots.size(); ++i) {
      extra.push_back(0.5 * (rknots[i] + rknots[i + 1]));
    }
    rknots.insert(rknots.end(), extra.begin(), extra.end());
    std::sort(rknots.begin(), rknots.end());
    rknots.erase(std::unique(rknots.begin(), rknots.end()), rknots.end());
  }
  std::vector<double> gvals, rvals;
  for (double x : rknots) {
    gvals.push_back(g_exact(x));
    rvals.push_back(out.h(x) + g_exact(x));
  }
  out.g_chords = PiecewiseLinear(rknots, gvals, dg_exact(rknots.back()),
                                 Shape::Concave);
  out.r = PiecewiseLinear(
      rknots, rvals,
      out.h.final_slope() + dg_exact(rknots.back()), Shape::Concave);

  // the composed bound E tau e^{h(c tau) + g(c tau)} < inf
  out.stopped_moment_finite = finiteness_evidence(
      [&](double N) {
        KahanSum s;
        long hi = std::min(tau_limit, static_cast<long>(N));
        for (long n = 1; n <= hi; ++n) {
          double p = tau.pmf(n);
          if (p > 0.0) {
            double x = c * static_cast<double>(n);
            s.add(static_cast<double>(n) * p *
                  std::exp(out.h(x) + g_exact(x)));
          }
        }
        return s.value();
      },
      ev);

  out.proposition =
      proposition_hypotheses_check(f_dist, tau, out.r, c, opts.proposition);
  return out;
}

}  // namespace stopsum
