#pragma once

// Exponential change of measure: G(du) = e^{gamma u} F(du) / phi(gamma) on
// lattices, the companion tilted stopping time nu with
// P{nu=k} = phi^k P{tau=k} / E phi^tau, lattice identity checks for the
// n-fold and mixture forms, and the domination test P{c nu > x} = o(G-bar).

#include <cmath>
#include <string>
#include <vector>

#include "stopsum/common.hpp"
#include "stopsum/compound.hpp"
#include "stopsum/distributions.hpp"
#include "stopsum/evidence.hpp"
#include "stopsum/lattice.hpp"

namespace stopsum {

// Reweights each lattice mass by e^{gamma x} and renormalises on the
// represented support, entirely in the log domain (a max shift makes
// overflow impossible). The result carries no deficit: the tilted law is
// the tilt of the truncated lattice measure, and the provenance warning in
// laplace() covers the truncation bias when the analytic transform
// diverges.
inline LatticeDistribution tilt_distribution(const LatticeDistribution& f,
                                             double gamma) {
  std::vector<double> logm(f.size(), kNegInf);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.mass_at(i) > 0.0) {
      logm[i] = std::log(f.mass_at(i)) + gamma * f.x_at(i);
    }
  }
  double log_phi = log_sum_exp(logm);
  if (log_phi == kNegInf) {
    throw PreconditionError("tilt_distribution: lattice carries no mass");
  }
  std::vector<double> masses(f.size(), 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (logm[i] != kNegInf) masses[i] = std::exp(logm[i] - log_phi);
  }
  return LatticeDistribution(f.step(), f.origin_index(), std::move(masses), 0.0);
}

struct TiltedCounting {
  CountingDistribution nu;
  double normalizer;  // E phi^tau
};

// P{nu = k} = phi^k P{tau = k} / E phi^tau. A divergent normaliser (tau
// tail too heavy against this phi) is detected from growing partial-sum
// increments and reported with the first offending term.
inline TiltedCounting tilt_counting(const CountingDistribution& tau, double phi,
                                    double term_eps = 1e-18,
                                    long hard_cap = 2'000'000) {
  if (!(phi >= 1.0)) {
    throw PreconditionError("tilt_counting: phi >= 1 required");
  }
  if (phi == 1.0) return {tau, 1.0};
  std::vector<double> weighted;
  double log_phi = std::log(phi);
  KahanSum norm;
  double prev_term = kPosInf;
  int growing = 0;
  long n = 0;
  for (;; ++n) {
    if (n > hard_cap) {
      throw NumericRangeError("tilt_counting: normaliser not summable below cap");
    }
    double lp = tau.log_pmf(n);
    double term = lp == kNegInf ? 0.0 : std::exp(lp + log_phi * n);
    if (!std::isfinite(term)) {
      throw PreconditionError(
          "tilt_counting: normaliser diverges; partial sum at n = " +
          std::to_string(n) + " is already " + std::to_string(norm.value()) +
          " with non-decaying terms (the regime excluded by the "
          "counting-tail domination hypothesis)");
    }
    weighted.push_back(term);
    norm.add(term);
    if (term > 0.0) {
      growing = term >= prev_term && n > 0 ? growing + 1 : 0;
      if (growing >= 40) {
        throw PreconditionError(
            "tilt_counting: normaliser diverges; partial sum " +
            std::to_string(norm.value()) + " at n = " + std::to_string(n) +
            " keeps growing (the regime excluded by the counting-tail "
            "domination hypothesis)");
      }
      prev_term = term;
    }
    // stop once the remaining tail is negligible: term decay established
    // and the law's own tail is exhausted
    if (n > 0 && term <= term_eps * std::max(1.0, norm.value()) &&
        tau.tail(n) * std::exp(log_phi * (n + 1)) <
            term_eps * std::max(1.0, norm.value())) {
      break;
    }
  }
  double z = norm.value();
  for (double& w : weighted) w /= z;
  // absorb float slack so the pmf sums to one exactly
  KahanSum check;
  for (double w : weighted) check.add(w);
  double scale = 1.0 / check.value();
  for (double& w : weighted) w *= scale;
  return {CountingDistribution::explicit_pmf(std::move(weighted)), z};
}

// G, nu, and the scalars of the change of measure at gamma-hat.
struct TiltPair {
  LatticeDistribution G;
  CountingDistribution nu;
  double gamma_hat_used;
  double phi_at_gamma_hat;  // lattice transform value actually used
  double lambda;            // ln phi
  double normalizer;        // E phi^tau
  bool truncation_warning;  // analytic transform diverges at this gamma
};

inline TiltPair make_tilt_pair(const LatticeDistribution& f,
                               const CountingDistribution& tau, double gamma) {
  double phi = std::exp(f.log_laplace(gamma));
  LatticeDistribution g = tilt_distribution(f, gamma);
  TiltedCounting tc = tilt_counting(tau, std::max(1.0, phi));
  bool warn = false;
  if (f.provenance() != nullptr) {
    warn = f.provenance()->laplace(gamma).phi_is_infinite;
  } else {
    warn = gamma > 0.0 && f.deficit() > 0.0;
  }
  return TiltPair{std::move(g), std::move(tc.nu), gamma, phi,
                  std::log(std::max(1.0, phi)), tc.normalizer, warn};
}

// E nu two ways: from the nu pmf directly, and from the defining identity
// E nu = E tau phi^tau / E phi^tau.
inline double tilt_pair_mean_identity_gap(const TiltPair& tp,
                                          const CountingDistribution& tau) {
  KahanSum lhs;
  const auto& pmf = tp.nu.explicit_masses();
  if (tp.nu.kind() == CountingKind::Explicit) {
    for (std::size_t k = 1; k < pmf.size(); ++k) {
      lhs.add(static_cast<double>(k) * pmf[k]);
    }
  } else {
    return std::abs(tp.nu.mean() - tau.mean());  // phi == 1 path
  }
  KahanSum rhs;
  double log_phi = std::log(tp.phi_at_gamma_hat);
  for (long n = 1; n < static_cast<long>(pmf.size()); ++n) {
    double lp = tau.log_pmf(n);
    if (lp != kNegInf) {
      rhs.add(static_cast<double>(n) * std::exp(lp + log_phi * n));
    }
  }
  return std::abs(lhs.value() - rhs.value() / tp.normalizer);
}

struct TiltIdentityReport {
  // per n = 1..n_max: discrepancy of G^{*n}(du) vs e^{gamma u} F^{*n}(du) / phi^n
  std::vector<double> per_n_max_abs;
  std::vector<double> per_n_max_rel;
  // mixture: E phi^tau G^{*nu}(du) vs e^{gamma u} F^{*tau}(du), matched
  // truncation on both sides
  double mixture_max_abs = 0.0;
  double mixture_max_rel = 0.0;
  double max_abs = 0.0;
  double max_rel = 0.0;
  double mass_floor = 1e-280;  // relative errors measured above this mass
};

inline TiltIdentityReport tilt_identity_check(const LatticeDistribution& f,
                                              const CountingDistribution& tau,
                                              double gamma, long n_max,
                                              unsigned workers = 1) {
  TiltIdentityReport rep;
  double log_phi = f.log_laplace(gamma);
  LatticeDistribution g = tilt_distribution(f, gamma);
  rep.per_n_max_abs.assign(static_cast<std::size_t>(n_max), 0.0);
  rep.per_n_max_rel.assign(static_cast<std::size_t>(n_max), 0.0);
  parallel_for(
      static_cast<std::size_t>(n_max),
      [&](std::size_t idx) {
        long n = static_cast<long>(idx) + 1;
        LatticeDistribution gn = conv_power(g, n);
        LatticeDistribution fn = conv_power(f, n);
        double ma = 0.0, mr = 0.0;
        for (std::size_t i = 0; i < gn.size(); ++i) {
          double lhs = gn.mass_at(i);
          double rhs = 0.0;
          long abs_idx = gn.origin_index() + static_cast<long>(i);
          long fi = abs_idx - fn.origin_index();
          if (fi >= 0 && fi < static_cast<long>(fn.size())) {
            double fm = fn.mass_at(static_cast<std::size_t>(fi));
            if (fm > 0.0) {
              rhs = std::exp(std::log(fm) + gamma * gn.x_at(i) -
                             static_cast<double>(n) * log_phi);
            }
          }
          double d = std::abs(lhs - rhs);
          ma = std::max(ma, d);
          double scale = std::max(lhs, rhs);
          if (scale > rep.mass_floor) mr = std::max(mr, d / scale);
        }
        rep.per_n_max_abs[idx] = ma;
        rep.per_n_max_rel[idx] = mr;
      },
      workers);
  // mixture identity with both sides truncated at the same n_max
  std::vector<double> tau_w = tau.pmf_upto(n_max);
  LatticeDistribution fmix = LatticeDistribution::point_mass(f.step(), 0);
  LatticeDistribution gmix = fmix;
  std::vector<double> lhs_acc, rhs_acc;
  long lo = std::min<long>(0, n_max * std::min<long>(0, f.origin_index()));
  long hi = std::max<long>(0, n_max * std::max<long>(0, f.end_index()));
  lhs_acc.assign(static_cast<std::size_t>(hi - lo + 1), 0.0);
  rhs_acc.assign(lhs_acc.size(), 0.0);
  LatticeDistribution fcur = fmix, gcur = gmix;
  for (long n = 0; n <= n_max; ++n) {
    if (n > 0) {
      fcur = convolve(fcur, f);
      gcur = convolve(gcur, g);
    }
    double w = tau_w[static_cast<std::size_t>(n)];
    if (w == 0.0) continue;
    double phi_n = std::exp(static_cast<double>(n) * log_phi);
    for (std::size_t i = 0; i < gcur.size(); ++i) {
      long k = gcur.origin_index() + static_cast<long>(i) - lo;
      lhs_acc[static_cast<std::size_t>(k)] += w * phi_n * gcur.mass_at(i);
    }
    for (std::size_t i = 0; i < fcur.size(); ++i) {
      long k = fcur.origin_index() + static_cast<long>(i) - lo;
      rhs_acc[static_cast<std::size_t>(k)] += w * fcur.mass_at(i);
    }
  }
  for (std::size_t k = 0; k < lhs_acc.size(); ++k) {
    double x = static_cast<double>(lo + static_cast<long>(k)) * f.step();
    double rhs = rhs_acc[k] > 0.0 ? std::exp(std::log(rhs_acc[k]) + gamma * x)
                                  : 0.0;
    double d = std::abs(lhs_acc[k] - rhs);
    rep.mixture_max_abs = std::max(rep.mixture_max_abs, d);
    double scale = std::max(lhs_acc[k], rhs);
    if (scale > rep.mass_floor) {
      rep.mixture_max_rel = std::max(rep.mixture_max_rel, d / scale);
    }
  }
  rep.max_abs = rep.mixture_max_abs;
  rep.max_rel = rep.mixture_max_rel;
  for (std::size_t i = 0; i < rep.per_n_max_abs.size(); ++i) {
    rep.max_abs = std::max(rep.max_abs, rep.per_n_max_abs[i]);
    rep.max_rel = std::max(rep.max_rel, rep.per_n_max_rel[i]);
  }
  return rep;
}

// P{c nu > x} / G-bar(x) on the grid, with the quartile trend verdict.
// Grid points where the lattice tail underflows are clipped and noted.
inline TrendCurve check_cnu_domination(const CountingDistribution& nu, double c,
                                       const LatticeDistribution& g,
                                       const std::vector<double>& x_grid) {
  if (!(c > 0.0)) throw PreconditionError("check_cnu_domination: c > 0 required");
  TrendCurve curve;
  for (double x : x_grid) {
    double lg = g.log_tail(x);
    if (lg == kNegInf || lg < std::log(1e-300)) {
      curve.clipped = true;
      continue;
    }
    double ln = nu.log_tail_real(x / c);
    curve.x.push_back(x);
    curve.ratio.push_back(ln == kNegInf ? 0.0 : std::exp(ln - lg));
  }
  if (curve.clipped) {
    curve.note = "grid clipped where the lattice tail is below 1e-300";
  }
  apply_quartile_rule(curve);
  return curve;
}

}  // namespace stopsum
