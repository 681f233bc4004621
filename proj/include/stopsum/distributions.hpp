#pragma once

// Analytic distribution families for the summands (xi) and counting laws
// for the stopping variable (tau). Families are immutable after
// construction; tails are exposed in both linear and log domain so that
// far-tail ratios keep relative accuracy.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "stopsum/common.hpp"

namespace stopsum {

// log of the standard normal upper tail, accurate for large z.
inline double log_normal_upper(double z) {
  if (z < 25.0) {
    return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
  }
  double z2 = z * z;
  return -0.5 * z2 - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(z) +
         std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

// log of the (unnormalised) upper incomplete gamma Gamma(a, z).
inline double log_tgamma_upper(double a, double z) {
  if (z < 600.0) {
    return std::log(boost::math::tgamma(a, z));
  }
  // Asymptotic series, valid since z >> a in every use here.
  double r1 = (a - 1.0) / z;
  double r2 = (a - 1.0) * (a - 2.0) / (z * z);
  return (a - 1.0) * std::log(z) - z + std::log1p(r1 + r2);
}

struct LaplaceReport {
  double gamma = 0.0;
  double phi = kNaN;          // value when finite
  bool phi_is_infinite = false;
  double gamma_hat = kNaN;    // finiteness abscissa of the transform
  bool truncation_warning = false;  // lattice deficit biases phi downward
};

enum class Family {
  Pareto,
  Weibull,
  Lognormal,
  Exponential,
  ExpPolynomial,
  PointMassMix,
  SizeBiased,
};

inline std::string family_name(Family f) {
  switch (f) {
    case Family::Pareto: return "pareto";
    case Family::Weibull: return "weibull";
    case Family::Lognormal: return "lognormal";
    case Family::Exponential: return "exponential";
    case Family::ExpPolynomial: return "exp_polynomial";
    case Family::PointMassMix: return "point_mass_mix";
    case Family::SizeBiased: return "size_biased";
  }
  return "?";
}

// Closed-form nonnegative families:
//   Pareto(alpha):         tail x^-alpha on [1, inf)
//   Weibull(beta):         tail exp(-x^beta)
//   Lognormal(mu, sigma)
//   Exponential(rate)
//   ExpPolynomial(rate,p): tail exp(-rate x) (1+x)^-p
//   PointMassMix:          finite atom list
// plus the size-biased transform of any of them.
class AnalyticDistribution {
 public:
  static AnalyticDistribution pareto(double alpha) {
    if (!(alpha > 0)) throw PreconditionError("pareto: alpha must be > 0");
    AnalyticDistribution d(Family::Pareto);
    d.a_ = alpha;
    return d;
  }
  static AnalyticDistribution weibull(double beta) {
    if (!(beta > 0)) throw PreconditionError("weibull: beta must be > 0");
    AnalyticDistribution d(Family::Weibull);
    d.a_ = beta;
    return d;
  }
  static AnalyticDistribution lognormal(double mu, double sigma) {
    if (!(sigma > 0)) throw PreconditionError("lognormal: sigma must be > 0");
    AnalyticDistribution d(Family::Lognormal);
    d.a_ = mu;
    d.b_ = sigma;
    return d;
  }
  static AnalyticDistribution exponential(double rate) {
    if (!(rate > 0)) throw PreconditionError("exponential: rate must be > 0");
    AnalyticDistribution d(Family::Exponential);
    d.a_ = rate;
    return d;
  }
  static AnalyticDistribution exp_polynomial(double rate, double power) {
    if (!(rate > 0) || !(power >= 0)) {
      throw PreconditionError("exp_polynomial: rate > 0 and power >= 0 required");
    }
    AnalyticDistribution d(Family::ExpPolynomial);
    d.a_ = rate;
    d.b_ = power;
    return d;
  }
  static AnalyticDistribution point_mass_mix(std::vector<double> values,
                                             std::vector<double> probs) {
    if (values.empty() || values.size() != probs.size()) {
      throw PreconditionError("point_mass_mix: values/probs size mismatch");
    }
    KahanSum total;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] < 0) throw PreconditionError("point_mass_mix: negative atom");
      if (!(probs[i] >= 0)) throw PreconditionError("point_mass_mix: bad prob");
      total.add(probs[i]);
    }
    if (std::abs(total.value() - 1.0) > 1e-12) {
      throw PreconditionError("point_mass_mix: probabilities must sum to 1");
    }
    // sort atoms by location, merging duplicates
    std::vector<std::size_t> idx(values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
    AnalyticDistribution d(Family::PointMassMix);
    for (std::size_t i : idx) {
      if (!d.atoms_x_.empty() && d.atoms_x_.back() == values[i]) {
        d.atoms_p_.back() += probs[i];
      } else {
        d.atoms_x_.push_back(values[i]);
        d.atoms_p_.push_back(probs[i]);
      }
    }
    return d;
  }

  Family family() const { return family_; }
  double param_a() const { return a_; }
  double param_b() const { return b_; }
  const std::vector<double>& atom_values() const { return atoms_x_; }
  const std::vector<double>& atom_probs() const { return atoms_p_; }
  const AnalyticDistribution* base() const { return base_.get(); }

  bool has_density() const {
    if (family_ == Family::PointMassMix) return false;
    if (family_ == Family::SizeBiased) return base_->has_density();
    return true;
  }

  double support_left() const {
    switch (family_) {
      case Family::Pareto: return 1.0;
      case Family::PointMassMix: return atoms_x_.front();
      case Family::SizeBiased: return base_->support_left();
      default: return 0.0;
    }
  }

  // P{xi > x}
  double tail(double x) const {
    double lt = log_tail(x);
    return lt == kNegInf ? 0.0 : std::exp(lt);
  }

  double log_tail(double x) const {
    switch (family_) {
      case Family::Pareto:
        return x <= 1.0 ? 0.0 : -a_ * std::log(x);
      case Family::Weibull:
        return x <= 0.0 ? 0.0 : -std::pow(x, a_);
      case Family::Lognormal:
        return x <= 0.0 ? 0.0 : log_normal_upper((std::log(x) - a_) / b_);
      case Family::Exponential:
        return x <= 0.0 ? 0.0 : -a_ * x;
      case Family::ExpPolynomial:
        return x <= 0.0 ? 0.0 : -a_ * x - b_ * std::log1p(x);
      case Family::PointMassMix: {
        if (x < atoms_x_.front()) return 0.0;
        KahanSum s;
        for (std::size_t i = 0; i < atoms_x_.size(); ++i) {
          if (atoms_x_[i] > x) s.add(atoms_p_[i]);
        }
        double v = s.value();
        return v > 0 ? std::log(v) : kNegInf;
      }
      case Family::SizeBiased:
        return size_biased_log_tail(x);
    }
    return kNaN;
  }

  double density(double x) const {
    double ld = log_density(x);
    return ld == kNegInf ? 0.0 : std::exp(ld);
  }

  double log_density(double x) const {
    switch (family_) {
      case Family::Pareto:
        return x <= 1.0 ? kNegInf : std::log(a_) - (a_ + 1.0) * std::log(x);
      case Family::Weibull:
        return x <= 0.0 ? kNegInf
                        : std::log(a_) + (a_ - 1.0) * std::log(x) -
                              std::pow(x, a_);
      case Family::Lognormal: {
        if (x <= 0.0) return kNegInf;
        double z = (std::log(x) - a_) / b_;
        return -0.5 * z * z - std::log(x * b_) -
               0.5 * std::log(2.0 * std::numbers::pi);
      }
      case Family::Exponential:
        return x < 0.0 ? kNegInf : std::log(a_) - a_ * x;
      case Family::ExpPolynomial:
        return x < 0.0 ? kNegInf
                       : -a_ * x - b_ * std::log1p(x) +
                             std::log(a_ + b_ / (1.0 + x));
      case Family::PointMassMix:
        throw UnsupportedError("point_mass_mix has no density");
      case Family::SizeBiased:
        return std::log(x) + base_->log_density(x) - std::log(mean_cache_base_);
    }
    return kNaN;
  }

  // E xi; +inf when the family's mean diverges (Pareto alpha <= 1).
  double mean() const {
    switch (family_) {
      case Family::Pareto:
        return a_ > 1.0 ? a_ / (a_ - 1.0) : kPosInf;
      case Family::Weibull:
        return std::tgamma(1.0 + 1.0 / a_);
      case Family::Lognormal:
        return std::exp(a_ + 0.5 * b_ * b_);
      case Family::Exponential:
        return 1.0 / a_;
      case Family::ExpPolynomial:
      case Family::SizeBiased:
        return mean_cache_;
      case Family::PointMassMix: {
        KahanSum s;
        for (std::size_t i = 0; i < atoms_x_.size(); ++i) {
          s.add(atoms_x_[i] * atoms_p_[i]);
        }
        return s.value();
      }
    }
    return kNaN;
  }

  bool mean_is_finite() const { return std::isfinite(mean()); }

  // sup{gamma : phi(gamma) < inf}; 0 characterises the heavy-tailed case.
  double gamma_hat() const {
    switch (family_) {
      case Family::Pareto:
      case Family::Lognormal:
        return 0.0;
      case Family::Weibull:
        if (a_ < 1.0) return 0.0;
        if (a_ == 1.0) return 1.0;
        return kPosInf;
      case Family::Exponential:
      case Family::ExpPolynomial:
        return a_;
      case Family::PointMassMix:
        return kPosInf;
      case Family::SizeBiased:
        return base_->gamma_hat();
    }
    return kNaN;
  }

  bool is_heavy_tailed() const { return gamma_hat() == 0.0; }

  // phi(gamma) = integral of e^{gamma x} F(dx)
  LaplaceReport laplace(double gamma) const {
    LaplaceReport rep;
    rep.gamma = gamma;
    rep.gamma_hat = gamma_hat();
    if (gamma == 0.0) {
      rep.phi = 1.0;
      return rep;
    }
    switch (family_) {
      case Family::Exponential:
        if (gamma >= a_) {
          rep.phi_is_infinite = true;
        } else {
          rep.phi = a_ / (a_ - gamma);
        }
        return rep;
      case Family::ExpPolynomial:
        if (gamma > a_) {
          rep.phi_is_infinite = true;
        } else if (gamma == a_) {
          if (b_ > 1.0) {
            rep.phi = 1.0 + a_ / (b_ - 1.0);
          } else {
            rep.phi_is_infinite = true;
          }
        } else {
          rep.phi = laplace_by_quadrature(gamma);
        }
        return rep;
      case Family::PointMassMix: {
        KahanSum s;
        for (std::size_t i = 0; i < atoms_x_.size(); ++i) {
          s.add(atoms_p_[i] * std::exp(gamma * atoms_x_[i]));
        }
        rep.phi = s.value();
        if (!std::isfinite(rep.phi)) rep.phi_is_infinite = true;
        return rep;
      }
      case Family::Weibull:
        if (a_ == 1.0) {  // coincides with Exponential(1)
          if (gamma >= 1.0) {
            rep.phi_is_infinite = true;
          } else {
            rep.phi = 1.0 / (1.0 - gamma);
          }
          return rep;
        }
        break;
      default:
        break;
    }
    double gh = gamma_hat();
    if (gamma >= gh && gh < kPosInf) {
      // gamma == 0 == gh (heavy case) was already handled above
      rep.phi_is_infinite = true;
      return rep;
    }
    rep.phi = laplace_by_quadrature(gamma);
    if (!std::isfinite(rep.phi)) rep.phi_is_infinite = true;
    return rep;
  }

  // Law of xi_* with P{xi_* in dx} = x F(dx) / E xi.
  AnalyticDistribution size_biased() const {
    double m = mean();
    if (!(m > 0.0) || !std::isfinite(m)) {
      throw PreconditionError(
          "size_biased: requires a finite positive mean, got " +
          std::to_string(m));
    }
    switch (family_) {
      case Family::Pareto:
        return pareto(a_ - 1.0);  // alpha > 1 guaranteed by finite mean
      case Family::PointMassMix: {
        std::vector<double> xs, ps;
        for (std::size_t i = 0; i < atoms_x_.size(); ++i) {
          if (atoms_x_[i] > 0.0 && atoms_p_[i] > 0.0) {
            xs.push_back(atoms_x_[i]);
            ps.push_back(atoms_x_[i] * atoms_p_[i] / m);
          }
        }
        return point_mass_mix(std::move(xs), std::move(ps));
      }
      case Family::SizeBiased:
        throw UnsupportedError("size_biased: transform already applied");
      default: {
        AnalyticDistribution d(Family::SizeBiased);
        d.base_ = std::make_shared<AnalyticDistribution>(*this);
        d.mean_cache_base_ = m;
        // E xi_* = E xi^2 / E xi, with E xi^2 = integral of 2 u tail(u) du
        double second = 2.0 * integrate_to_inf(
                                  [this](double u) { return u * tail(u); }, 0.0,
                                  1e-10);
        d.mean_cache_ = second / m;
        return d;
      }
    }
  }

  // Smallest x with tail(x) <= p.
  double quantile_tail(double p) const {
    if (!(p > 0.0) || p > 1.0) throw PreconditionError("quantile_tail: p in (0,1]");
    switch (family_) {
      case Family::Pareto:
        return p >= 1.0 ? 1.0 : std::pow(p, -1.0 / a_);
      case Family::Weibull:
        return p >= 1.0 ? 0.0 : std::pow(-std::log(p), 1.0 / a_);
      case Family::Exponential:
        return p >= 1.0 ? 0.0 : -std::log(p) / a_;
      case Family::Lognormal:
        return p >= 1.0
                   ? 0.0
                   : std::exp(a_ + b_ * std::numbers::sqrt2 *
                                        boost::math::erfc_inv(2.0 * p));
      case Family::PointMassMix: {
        double acc = 0.0;
        for (std::size_t i = atoms_x_.size(); i-- > 0;) {
          acc += atoms_p_[i];
          if (acc > p) {
            return atoms_x_[i];
          }
        }
        return atoms_x_.front();
      }
      default: {
        double logp = std::log(p);
        if (log_tail(support_left()) <= logp) return support_left();
        double hi = doubling_search(
            std::max(1.0, support_left()), 1e300,
            [&](double x) { return log_tail(x) <= logp; });
        return bisect_to_target([&](double x) { return log_tail(x); },
                                std::max(support_left(), hi / 2.0), hi, logp,
                                hi * 1e-14);
      }
    }
  }

 private:
  explicit AnalyticDistribution(Family f) : family_(f) {
    if (f == Family::ExpPolynomial) mean_cache_ = kNaN;  // filled by factory
  }

  // deferred mean for quadrature-backed families
  friend AnalyticDistribution make_with_mean(AnalyticDistribution, double);

  double laplace_by_quadrature(double gamma) const {
    // log-domain integral of exp(gamma x + log density)
    auto g = [&](double x) { return gamma * x + log_density(x); };
    double lo = support_left();
    // upper limit: walk out until the integrand is 60 nats under its peak
    double peak = g(std::max(lo, 1e-12));
    double hi = std::max(lo + 1.0, 1.0);
    for (;;) {
      double v = g(hi);
      peak = std::max(peak, v);
      if (v < peak - 60.0 && log_tail(hi) + std::max(gamma, 0.0) * hi < peak - 60.0) {
        break;
      }
      hi *= 2.0;
      if (hi > 1e280) {
        throw NumericRangeError("laplace: transform integral out of range");
      }
    }
    return std::exp(log_integrate_exp(g, lo, hi, 1e-12, 512));
  }

  double size_biased_log_tail(double x) const {
    const AnalyticDistribution& b = *base_;
    double lm = std::log(mean_cache_base_);
    if (x <= b.support_left()) return 0.0;
    switch (b.family_) {
      case Family::Weibull: {
        double a = 1.0 + 1.0 / b.a_;
        return log_tgamma_upper(a, std::pow(x, b.a_)) -
               std::log(std::tgamma(a));
      }
      case Family::Exponential:
        return -b.a_ * x + std::log1p(b.a_ * x);
      case Family::Lognormal:
        return log_normal_upper((std::log(x) - b.a_ - b.b_ * b.b_) / b.b_);
      default: {
        // integral of u f(u) du over (x, inf), log domain
        auto g = [&](double u) { return std::log(u) + b.log_density(u); };
        double hi = x;
        double at_x = g(x * (1.0 + 1e-12));
        do {
          hi *= 2.0;
        } while (g(hi) > at_x - 80.0 && hi < 1e280);
        return log_integrate_exp(g, x, hi, 1e-10, 256) - lm;
      }
    }
  }

  Family family_;
  double a_ = 0.0;
  double b_ = 0.0;
  std::vector<double> atoms_x_;
  std::vector<double> atoms_p_;
  std::shared_ptr<const AnalyticDistribution> base_;
  double mean_cache_ = kNaN;
  double mean_cache_base_ = kNaN;
};

inline AnalyticDistribution make_with_mean(AnalyticDistribution d, double m) {
  d.mean_cache_ = m;
  return d;
}

// Factory completing the quadrature-backed mean for ExpPolynomial.
inline AnalyticDistribution make_exp_polynomial(double rate, double power) {
  AnalyticDistribution d = AnalyticDistribution::exp_polynomial(rate, power);
  double m = integrate_to_inf(
      [&](double x) { return std::exp(-rate * x - power * std::log1p(x)); },
      0.0, 1e-12);
  return make_with_mean(std::move(d), m);
}

// ---------------------------------------------------------------------------
// Counting laws for tau (nonnegative integers, E tau < inf).

enum class CountingKind { Geometric, Poisson, WeibullCount, Deterministic, Explicit };

inline std::string counting_kind_name(CountingKind k) {
  switch (k) {
    case CountingKind::Geometric: return "geometric";
    case CountingKind::Poisson: return "poisson";
    case CountingKind::WeibullCount: return "weibull_count";
    case CountingKind::Deterministic: return "deterministic";
    case CountingKind::Explicit: return "explicit";
  }
  return "?";
}

class CountingDistribution {
 public:
  // Support {0,1,...}, P{tau=n} = p (1-p)^n, E tau = (1-p)/p.
  static CountingDistribution geometric(double p) {
    if (!(p > 0.0 && p <= 1.0)) throw PreconditionError("geometric: p in (0,1]");
    CountingDistribution d(CountingKind::Geometric);
    d.a_ = p;
    return d;
  }
  static CountingDistribution poisson(double lambda) {
    if (!(lambda >= 0.0)) throw PreconditionError("poisson: lambda >= 0");
    CountingDistribution d(CountingKind::Poisson);
    d.a_ = lambda;
    return d;
  }
  // Support {1,2,...} with P{tau > n} = exp(-n^beta); heavy-tailed counting law.
  static CountingDistribution weibull_count(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) {
      throw PreconditionError("weibull_count: beta in (0,1)");
    }
    CountingDistribution d(CountingKind::WeibullCount);
    d.a_ = beta;
    return d;
  }
  static CountingDistribution deterministic(long n) {
    if (n < 0) throw PreconditionError("deterministic: n >= 0");
    CountingDistribution d(CountingKind::Deterministic);
    d.n_ = n;
    return d;
  }
  static CountingDistribution explicit_pmf(std::vector<double> pmf,
                                           double remainder = 0.0) {
    CountingDistribution d(CountingKind::Explicit);
    d.pmf_ = std::move(pmf);
    d.remainder_ = remainder;
    KahanSum s;
    for (double p : d.pmf_) {
      if (!(p >= 0.0)) throw PreconditionError("explicit_pmf: negative mass");
      s.add(p);
    }
    if (std::abs(s.value() + remainder - 1.0) > 1e-12) {
      throw PreconditionError("explicit_pmf: pmf must sum to 1");
    }
    d.build_suffix();
    return d;
  }
  // Explicit law from a tail function: pmf(n) = tail(n-1) - tail(n) for
  // n >= 1, pmf(0) = 1 - tail(0); mass beyond `depth` kept as a recorded
  // remainder. Used for adversarial counting laws given by their tails.
  static CountingDistribution from_tail(const std::function<double(long)>& tail_fn,
                                        long depth) {
    std::vector<double> pmf(static_cast<std::size_t>(depth) + 1);
    pmf[0] = 1.0 - tail_fn(0);
    double prev = tail_fn(0);
    for (long n = 1; n <= depth; ++n) {
      double t = tail_fn(n);
      pmf[static_cast<std::size_t>(n)] = prev - t;
      prev = t;
    }
    return explicit_pmf(std::move(pmf), prev);
  }

  CountingKind kind() const { return kind_; }
  double param() const { return a_; }
  long deterministic_value() const { return n_; }
  const std::vector<double>& explicit_masses() const { return pmf_; }
  double remainder() const { return remainder_; }

  double pmf(long n) const {
    if (n < 0) return 0.0;
    double lp = log_pmf(n);
    return lp == kNegInf ? 0.0 : std::exp(lp);
  }

  double log_pmf(long n) const {
    if (n < 0) return kNegInf;
    switch (kind_) {
      case CountingKind::Geometric:
        return std::log(a_) + static_cast<double>(n) * std::log1p(-a_);
      case CountingKind::Poisson:
        if (a_ == 0.0) return n == 0 ? 0.0 : kNegInf;
        return -a_ + n * std::log(a_) - std::lgamma(n + 1.0);
      case CountingKind::WeibullCount: {
        if (n == 0) return kNegInf;
        double lt_prev = -std::pow(static_cast<double>(n - 1), a_);
        double lt_next = -std::pow(static_cast<double>(n), a_);
        double diff = exp_diff(lt_next, lt_prev);
        return diff > 0 ? std::log(diff) : kNegInf;
      }
      case CountingKind::Deterministic:
        return n == n_ ? 0.0 : kNegInf;
      case CountingKind::Explicit: {
        auto i = static_cast<std::size_t>(n);
        if (i >= pmf_.size() || pmf_[i] <= 0.0) return kNegInf;
        return std::log(pmf_[i]);
      }
    }
    return kNaN;
  }

  // P{tau > n}
  double tail(long n) const {
    double lt = log_tail(n);
    return lt == kNegInf ? 0.0 : std::exp(lt);
  }

  double log_tail(long n) const {
    if (n < 0) return 0.0;
    switch (kind_) {
      case CountingKind::Geometric:
        return static_cast<double>(n + 1) * std::log1p(-a_);
      case CountingKind::Poisson: {
        // log-domain suffix sum of pmf terms
        double acc = kNegInf;
        double lp = log_pmf(n + 1);
        long k = n + 1;
        for (;;) {
          acc = log_add(acc, lp);
          ++k;
          lp = log_pmf(k);
          if (lp < acc - 40.0 && k > a_ + 1) break;
          if (k > n + 2000) break;
        }
        return acc;
      }
      case CountingKind::WeibullCount:
        return -std::pow(static_cast<double>(n), a_);
      case CountingKind::Deterministic:
        return n < n_ ? 0.0 : kNegInf;
      case CountingKind::Explicit: {
        auto i = static_cast<std::size_t>(n);
        if (i + 1 >= log_suffix_.size()) {
          return remainder_ > 0.0 ? std::log(remainder_) : kNegInf;
        }
        return log_suffix_[i + 1];
      }
    }
    return kNaN;
  }

  // P{tau > y} for real y.
  double tail_real(double y) const {
    if (y < 0.0) return 1.0;
    return tail(static_cast<long>(std::floor(y)));
  }
  double log_tail_real(double y) const {
    if (y < 0.0) return 0.0;
    return log_tail(static_cast<long>(std::floor(y)));
  }

  double mean() const {
    switch (kind_) {
      case CountingKind::Geometric:
        return (1.0 - a_) / a_;
      case CountingKind::Poisson:
        return a_;
      case CountingKind::WeibullCount: {
        KahanSum s;  // sum of tails
        for (long n = 0;; ++n) {
          double t = tail(n);
          s.add(t);
          if (t < 1e-18 * std::max(1.0, s.value())) break;
        }
        return s.value();
      }
      case CountingKind::Deterministic:
        return static_cast<double>(n_);
      case CountingKind::Explicit: {
        KahanSum s;
        for (std::size_t i = 1; i < pmf_.size(); ++i) {
          s.add(static_cast<double>(i) * pmf_[i]);
        }
        return s.value();  // lower bound when remainder_ > 0 (recorded)
      }
    }
    return kNaN;
  }

  // Family-level classification; explicit laws are finitely enumerated and
  // therefore light-tailed, WeibullCount is the heavy-tailed family.
  bool is_heavy_tailed() const { return kind_ == CountingKind::WeibullCount; }

  // sup{s : E e^{s tau} < inf}; +inf for bounded or super-exponential laws.
  double exp_moment_abscissa() const {
    switch (kind_) {
      case CountingKind::Geometric:
        return -std::log1p(-a_);
      case CountingKind::Poisson:
      case CountingKind::Deterministic:
        return kPosInf;
      case CountingKind::WeibullCount:
        return 0.0;
      case CountingKind::Explicit:
        return remainder_ > 0.0 ? 0.0 : kPosInf;
    }
    return kNaN;
  }

  // Smallest N with P{tau > N} <= eps.
  long enumeration_limit(double eps, long cap = 50'000'000) const {
    if (kind_ == CountingKind::Deterministic) return n_;
    if (kind_ == CountingKind::Explicit) return static_cast<long>(pmf_.size()) - 1;
    long lo = 0;
    while (tail(lo) > eps) {
      lo = lo * 2 + 1;
      if (lo > cap) {
        throw NumericRangeError(
            "enumeration_limit: tail does not reach eps below cap; required "
            "n_max exceeds " + std::to_string(cap));
      }
    }
    long hi = lo, base = lo / 2;
    while (base + 1 < hi) {
      long mid = base + (hi - base) / 2;
      (tail(mid) > eps ? base : hi) = mid;
    }
    return hi;
  }

  std::vector<double> pmf_upto(long n_max) const {
    std::vector<double> out(static_cast<std::size_t>(n_max) + 1);
    for (long n = 0; n <= n_max; ++n) out[static_cast<std::size_t>(n)] = pmf(n);
    return out;
  }

  // Law of tau_* with P{tau_* = n} = n P{tau = n} / E tau.
  CountingDistribution size_biased() const {
    double m = mean();
    if (!(m > 0.0) || !std::isfinite(m)) {
      throw PreconditionError("size_biased: counting law needs positive finite mean");
    }
    if (kind_ == CountingKind::Deterministic) return *this;  // fixed point
    long depth;
    if (kind_ == CountingKind::Explicit) {
      depth = static_cast<long>(pmf_.size()) - 1;
    } else {
      // enumerate until the size-biased remainder is negligible at double scale
      depth = 64;
      while (static_cast<double>(depth) * tail(depth - 1) / m > 1e-300) {
        depth *= 2;
        if (depth > (1L << 24)) break;
      }
    }
    std::vector<double> q(static_cast<std::size_t>(depth) + 1, 0.0);
    KahanSum total;
    for (long n = 1; n <= depth; ++n) {
      q[static_cast<std::size_t>(n)] = static_cast<double>(n) * pmf(n) / m;
      total.add(q[static_cast<std::size_t>(n)]);
    }
    double rem = std::max(0.0, 1.0 - total.value());
    if (rem < 1e-12) rem = 0.0;  // absorb rounding; suffix stays consistent
    // renormalise tiny slack so the law sums to one exactly
    if (rem == 0.0) {
      double scale = 1.0 / total.value();
      for (double& v : q) v *= scale;
    }
    return explicit_pmf(std::move(q), rem);
  }

 private:
  explicit CountingDistribution(CountingKind k) : kind_(k) {}

  void build_suffix() {
    log_suffix_.assign(pmf_.size() + 1, kNegInf);
    double acc = remainder_ > 0.0 ? std::log(remainder_) : kNegInf;
    log_suffix_[pmf_.size()] = acc;
    for (std::size_t i = pmf_.size(); i-- > 0;) {
      if (pmf_[i] > 0.0) acc = log_add(acc, std::log(pmf_[i]));
      log_suffix_[i] = acc;
    }
  }

  CountingKind kind_;
  double a_ = 0.0;
  long n_ = 0;
  std::vector<double> pmf_;
  double remainder_ = 0.0;
  std::vector<double> log_suffix_;  // log P{tau >= i}
};

}  // namespace stopsum
