#pragma once

// Ratio curves tail(S_tau)/tail(xi), running infima, the theoretical
// lower-limit predictions for both tail regimes, and the numeric
// hypothesis checkers that go with them.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stopsum/common.hpp"
#include "stopsum/compound.hpp"
#include "stopsum/distributions.hpp"
#include "stopsum/evidence.hpp"
#include "stopsum/lattice.hpp"
#include "stopsum/piecewise.hpp"

namespace stopsum {

enum class Regime { Heavy, Light, Unclassified };

inline std::string regime_name(Regime r) {
  switch (r) {
    case Regime::Heavy: return "heavy";
    case Regime::Light: return "light";
    case Regime::Unclassified: return "unclassified";
  }
  return "?";
}

struct LiminfPrediction {
  double value = kNaN;
  bool is_infinite = false;
  Regime regime = Regime::Unclassified;
  double gamma_hat = kNaN;
  double phi_at_gamma_hat = kNaN;  // NaN when infinite
  bool hypotheses_verified = false;  // set by callers that ran the checkers
};

// Heavy regime: E tau. Light regime: E[tau phi(gamma_hat)^{tau-1}] by
// direct summation, with an infinite flag when the transform diverges and
// P{tau >= 2} > 0, or when the series itself fails to converge.
inline LiminfPrediction predicted_liminf(const AnalyticDistribution& f,
                                         const CountingDistribution& tau) {
  LiminfPrediction out;
  out.gamma_hat = f.gamma_hat();
  if (out.gamma_hat == 0.0) {
    out.regime = Regime::Heavy;
    out.value = tau.mean();
    return out;
  }
  out.regime = Regime::Light;
  bool phi_infinite;
  double phi = kNaN;
  if (out.gamma_hat == kPosInf) {
    phi_infinite = true;  // transform grows without bound along gamma
  } else {
    LaplaceReport rep = f.laplace(out.gamma_hat);
    phi_infinite = rep.phi_is_infinite;
    phi = rep.phi;
  }
  if (phi_infinite) {
    double p_ge2 = tau.tail(1);
    if (p_ge2 > 0.0) {
      out.is_infinite = true;
    } else {
      out.value = tau.pmf(1);  // tau in {0,1}: phi^0 terms only
    }
    return out;
  }
  out.phi_at_gamma_hat = phi;
  double log_phi = std::log(phi);
  KahanSum s;
  double prev_term = kPosInf;
  int non_decaying = 0;
  long n_cap = 4'000'000;
  for (long n = 1; n <= n_cap; ++n) {
    double lp = tau.log_pmf(n);
    double term =
        lp == kNegInf
            ? 0.0
            : std::exp(lp + static_cast<double>(n - 1) * log_phi + std::log(n));
    if (!std::isfinite(term)) {
      out.is_infinite = true;
      return out;
    }
    if (term > 0.0) {
      non_decaying = (term >= prev_term) ? non_decaying + 1 : 0;
      if (non_decaying >= 60) {
        out.is_infinite = true;
        return out;
      }
      prev_term = term;
    }
    s.add(term);
    double tail_bound = tau.tail(n) * std::exp(static_cast<double>(n) * log_phi +
                                               std::log(n + 1.0));
    if (std::isfinite(tail_bound) && tail_bound < 1e-14 * std::max(1.0, s.value())) {
      break;
    }
    if (n == n_cap) {
      out.is_infinite = true;  // no convergence within the enumeration budget
      return out;
    }
  }
  out.value = s.value();
  return out;
}

enum class DenominatorMode { Analytic, Lattice };

struct GridSpec {
  double step = 1.0;
  double cutoff = 0.0;     // lattice truncation point
  double window_lo = 0.0;  // ratio window (the "tail window")
  double window_hi = 0.0;
};

struct RatioOptions {
  double tau_tail_factor = 1e-3;  // n_max rule: P{tau>n} <= factor * min tail
  DenominatorMode denominator = DenominatorMode::Analytic;
  bool prefer_panjer = true;
  bool allow_large_deficit = false;
  unsigned workers = 1;
};

struct RatioCurve {
  std::vector<double> x;
  std::vector<double> ratio;
  std::vector<double> running_inf;
  std::vector<double> union_floor;  // finite-x lower bound on the ratio
  double predicted = kNaN;
  bool predicted_infinite = false;
  Regime regime = Regime::Unclassified;
  double truncation_bound = 0.0;
  CompoundMethod method = CompoundMethod::Direct;
  long n_max_used = 0;
};

inline RatioCurve ratio_curve(const AnalyticDistribution& f,
                              const CountingDistribution& tau,
                              const GridSpec& grid, RatioOptions opts = {}) {
  if (!(grid.window_hi > grid.window_lo) || !(grid.window_lo >= 0.0)) {
    throw PreconditionError("ratio_curve: bad ratio window");
  }
  if (grid.window_hi > grid.cutoff) {
    throw PreconditionError("ratio_curve: window exceeds the lattice cutoff");
  }
  LatticeDistribution lat =
      discretize(f, grid.step, grid.cutoff, {opts.allow_large_deficit});
  double min_tail = f.tail(grid.window_hi);
  long n_max = tau.enumeration_limit(opts.tau_tail_factor * min_tail);

  CompoundResult comp = [&]() {
    if (opts.prefer_panjer && (tau.kind() == CountingKind::Geometric ||
                               tau.kind() == CountingKind::Poisson)) {
      return panjer_compound(lat, tau, lat.end_index());
    }
    CompoundOptions copts;
    copts.cap_end_index = lat.end_index();
    copts.tau_tail_threshold = opts.tau_tail_factor * min_tail;
    return compound(lat, tau, n_max, copts);
  }();

  RatioCurve curve;
  curve.method = comp.method;
  curve.n_max_used = n_max;
  curve.truncation_bound = comp.truncation_error_bound;
  double smallest_compound_tail = comp.lattice.tail(grid.window_hi);
  if (comp.truncation_error_bound > 0.01 * smallest_compound_tail) {
    throw NumericRangeError(
        "ratio_curve: compound truncation bound " +
        std::to_string(comp.truncation_error_bound) +
        " exceeds 1% of the smallest tail on the grid (" +
        std::to_string(smallest_compound_tail) +
        "); increase n_max and/or the cutoff");
  }

  long i_lo = std::max<long>(lat.index_of(grid.window_lo), 0);
  long i_hi = std::min<long>(lat.index_of(grid.window_hi), lat.end_index());
  std::size_t count = static_cast<std::size_t>(std::max<long>(0, i_hi - i_lo + 1));
  curve.x.resize(count);
  curve.ratio.resize(count);
  curve.union_floor.resize(count);
  parallel_for(
      count,
      [&](std::size_t k) {
        double x = static_cast<double>(i_lo + static_cast<long>(k)) * grid.step;
        double denom_log = opts.denominator == DenominatorMode::Analytic
                               ? f.log_tail(x)
                               : lat.log_tail(x);
        double num_log = comp.lattice.log_tail(x);
        curve.x[k] = x;
        curve.ratio[k] = (denom_log == kNegInf || num_log == kNegInf)
                             ? (num_log == kNegInf ? 0.0 : kPosInf)
                             : std::exp(num_log - denom_log);
        double fx = f.tail(x);
        curve.union_floor[k] =
            fx > 0.0 ? compound_tail_lower_bound(tau, fx, n_max) / fx : 0.0;
      },
      opts.workers);
  curve.running_inf.resize(count);
  double run = kPosInf;
  for (std::size_t k = 0; k < count; ++k) {
    run = std::min(run, curve.ratio[k]);
    curve.running_inf[k] = run;
  }
  LiminfPrediction pred = predicted_liminf(f, tau);
  curve.predicted = pred.value;
  curve.predicted_infinite = pred.is_infinite;
  curve.regime = pred.regime;
  return curve;
}

// Ratio P{c tau > x} / tail(x) with the quartile trend verdict: checks that
// the counting tail is negligible against the summand tail, the key
// hypothesis of the heavy-tailed lower-limit theorem. Requires c > E xi.
inline TrendCurve check_counting_tail_negligible(
    const AnalyticDistribution& f, const CountingDistribution& tau, double c,
    const std::vector<double>& x_grid) {
  double mean = f.mean();
  if (!std::isfinite(mean)) {
    throw PreconditionError(
        "counting-tail domination check: requires E xi < inf");
  }
  if (!(c > mean)) {
    throw PreconditionError(
        "counting-tail domination check: the hypothesis requires c > E xi; "
        "got c = " + std::to_string(c) + " with E xi = " + std::to_string(mean));
  }
  TrendCurve curve;
  for (double x : x_grid) {
    double lf = f.log_tail(x);
    if (lf == kNegInf) {
      curve.clipped = true;
      continue;
    }
    double lt = tau.log_tail_real(x / c);
    curve.x.push_back(x);
    curve.ratio.push_back(lt == kNegInf ? 0.0 : std::exp(lt - lf));
  }
  if (curve.clipped) curve.note = "grid clipped where the summand tail is 0";
  apply_quartile_rule(curve);
  return curve;
}

struct TailShiftCheck {
  double y = 0.0;
  double min_ratio = kNaN;
  double target = kNaN;  // e^{gamma_hat * y}
  bool pass = false;
};

struct TailShiftReport {
  std::vector<TailShiftCheck> checks;
  bool all_pass = true;
  double gamma_hat = kNaN;
  bool unbounded_target = false;  // gamma_hat = inf: growth evidence instead
  std::string note;
};

// Light-regime shift bound: min over the tail window of
// tail(x-y)/tail(x) must be >= e^{gamma_hat y} (1 - tol) for each y.
inline TailShiftReport check_tail_shift_bound(const AnalyticDistribution& f,
                                              const std::vector<double>& ys,
                                              const std::vector<double>& x_grid,
                                              double tol = 1e-9) {
  TailShiftReport rep;
  rep.gamma_hat = f.gamma_hat();
  if (!(rep.gamma_hat > 0.0)) {
    throw PreconditionError(
        "tail shift bound: requires gamma_hat > 0 (light-tailed law)");
  }
  rep.unbounded_target = rep.gamma_hat == kPosInf;
  for (double y : ys) {
    if (y < 0.0) throw PreconditionError("tail shift bound: y >= 0 required");
    TailShiftCheck chk;
    chk.y = y;
    std::vector<double> ratios;
    for (double x : x_grid) {
      double la = f.log_tail(x - y);
      double lb = f.log_tail(x);
      if (lb == kNegInf) continue;
      ratios.push_back(std::exp(la - lb));
    }
    if (ratios.empty()) {
      chk.pass = false;
      rep.all_pass = false;
      rep.checks.push_back(chk);
      continue;
    }
    chk.min_ratio = *std::min_element(ratios.begin(), ratios.end());
    if (rep.unbounded_target) {
      // no finite target: require sustained growth along the window
      chk.target = kPosInf;
      chk.pass = y == 0.0 || ratios.back() > 2.0 * ratios.front();
      rep.note = "gamma_hat = inf: pass requires the shift ratio to keep growing";
    } else {
      chk.target = std::exp(rep.gamma_hat * y);
      chk.pass = chk.min_ratio >= chk.target * (1.0 - tol);
    }
    rep.all_pass = rep.all_pass && chk.pass;
    rep.checks.push_back(chk);
  }
  return rep;
}

// Convergence diagnostic for a computed ratio curve: the distance
// |ratio - predicted| must trend down across the window (quartile rule).
inline TrendCurve convergence_diagnostic(const RatioCurve& curve) {
  TrendCurve t;
  if (curve.predicted_infinite) {
    t.note = "prediction is infinite; no finite-distance diagnostic";
    t.verdict_positive = false;
    return t;
  }
  t.x = curve.x;
  t.ratio.reserve(curve.ratio.size());
  for (double r : curve.ratio) t.ratio.push_back(std::abs(r - curve.predicted));
  apply_quartile_rule(t);
  return t;
}

enum class PropositionStatus { Applicable, NotApplicable, Inconclusive };

inline std::string proposition_status_name(PropositionStatus s) {
  switch (s) {
    case PropositionStatus::Applicable: return "applicable";
    case PropositionStatus::NotApplicable: return "not_applicable";
    case PropositionStatus::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct PremiseVerdict {
  TailEvidence as_finite;
  TailEvidence as_divergent;
};

struct PropositionReport {
  PremiseVerdict finite_exp_r;        // E e^{r(xi)} < inf required
  PremiseVerdict divergent_mean_r;    // E xi e^{r(xi)} = inf required
  PremiseVerdict finite_stopped_sum;  // E tau e^{r(S_{tau-1})} < inf required
  PropositionStatus status = PropositionStatus::Inconclusive;
  std::string detail;
};

struct PropositionOptions {
  EvidenceOptions evidence;
  double lattice_step = 0.25;
  double lattice_cutoff = 0.0;  // 0: derived from c and the n budget
  long n_budget = 64;           // stopping-variable terms examined
};

// Numeric check of the three premises of the lower-limit criterion for a
// concave r: two moment conditions on xi and one on the stopped sum.
inline PropositionReport proposition_hypotheses_check(
    const AnalyticDistribution& f, const CountingDistribution& tau,
    const ScalarFunction& r, double c, PropositionOptions opts = {}) {
  if (auto* pl = dynamic_cast<const PiecewiseLinear*>(&r)) {
    if (!pl->slopes_nonincreasing(1e-12)) {
      throw PreconditionError("proposition check: r must be concave");
    }
  }
  PropositionReport rep;
  double lo = f.support_left();
  auto premise1 = [&](double X) {
    if (!f.has_density()) {
      KahanSum s;
      for (std::size_t i = 0; i < f.atom_values().size(); ++i) {
        if (f.atom_values()[i] <= X) {
          s.add(f.atom_probs()[i] * std::exp(r(f.atom_values()[i])));
        }
      }
      return s.value();
    }
    return std::exp(log_integrate_exp(
        [&](double u) { return r(u) + f.log_density(u); }, lo, X, 1e-10, 128));
  };
  auto premise2 = [&](double X) {
    if (!f.has_density()) {
      KahanSum s;
      for (std::size_t i = 0; i < f.atom_values().size(); ++i) {
        double v = f.atom_values()[i];
        if (v <= X && v > 0.0) {
          s.add(f.atom_probs()[i] * v * std::exp(r(v)));
        }
      }
      return s.value();
    }
    return std::exp(log_integrate_exp(
        [&](double u) { return std::log(u) + r(u) + f.log_density(u); },
        std::max(lo, 1e-300), X, 1e-10, 128));
  };
  EvidenceTrace t1 = scan_partials(premise1, opts.evidence);
  EvidenceTrace t2 = scan_partials(premise2, opts.evidence);
  rep.finite_exp_r = {apply_finiteness_rule(t1, opts.evidence),
                      apply_divergence_rule(t1, opts.evidence)};
  rep.divergent_mean_r = {apply_finiteness_rule(t2, opts.evidence),
                          apply_divergence_rule(t2, opts.evidence)};

  // premise 3: partial sums over n of n P{tau=n} E e^{r(S_{n-1})}
  double cutoff = opts.lattice_cutoff > 0.0
                      ? opts.lattice_cutoff
                      : std::max(4.0 * c * static_cast<double>(opts.n_budget),
                                 64.0 * opts.lattice_step);
  LatticeDistribution lat =
      discretize(f, opts.lattice_step, cutoff, {true});
  long cap = lat.end_index() * 4;
  std::vector<double> term(static_cast<std::size_t>(opts.n_budget) + 1, 0.0);
  LatticeDistribution cur = LatticeDistribution::point_mass(lat.step(), 0);
  for (long n = 1; n <= opts.n_budget; ++n) {
    double w = static_cast<double>(n) * tau.pmf(n);
    if (w > 0.0) {
      double le = lattice_log_exp_expectation(
          cur, [&](double u) { return r(u); });
      term[static_cast<std::size_t>(n)] = w * std::exp(le);
    }
    if (n < opts.n_budget) cur = convolve(cur, lat, cap);
  }
  auto premise3 = [&](double X) {
    long n_hi = std::min<long>(opts.n_budget, static_cast<long>(X));
    KahanSum s;
    for (long n = 1; n <= n_hi; ++n) s.add(term[static_cast<std::size_t>(n)]);
    return s.value();
  };
  EvidenceOptions seq_opts = opts.evidence;
  seq_opts.x0 = 2.0;
  seq_opts.max_stages =
      static_cast<int>(std::log2(static_cast<double>(opts.n_budget))) + 1;
  EvidenceTrace t3 = scan_partials(premise3, seq_opts);
  rep.finite_stopped_sum = {apply_finiteness_rule(t3, seq_opts),
                            apply_divergence_rule(t3, seq_opts)};

  auto holds = [](const PremiseVerdict& v, bool want_finite) {
    return want_finite ? v.as_finite.verdict == EvidenceVerdict::Finite
                       : v.as_divergent.verdict == EvidenceVerdict::Divergent;
  };
  auto fails = [](const PremiseVerdict& v, bool want_finite) {
    return want_finite ? v.as_divergent.verdict == EvidenceVerdict::Divergent
                       : v.as_finite.verdict == EvidenceVerdict::Finite;
  };
  if (fails(rep.finite_exp_r, true) || fails(rep.divergent_mean_r, false) ||
      fails(rep.finite_stopped_sum, true)) {
    rep.status = PropositionStatus::NotApplicable;
    rep.detail = "a premise demonstrably fails on this instance";
  } else if (holds(rep.finite_exp_r, true) &&
             holds(rep.divergent_mean_r, false) &&
             holds(rep.finite_stopped_sum, true)) {
    rep.status = PropositionStatus::Applicable;
    rep.detail = "all premises hold at the configured evidence thresholds";
  } else {
    rep.status = PropositionStatus::Inconclusive;
    rep.detail = "at least one premise is inconclusive";
  }
  return rep;
}

}  // namespace stopsum
