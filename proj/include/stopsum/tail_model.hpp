#pragma once

// Probability-law interface consumed by the constructive builders: tails
// plus exponential-moment expectations over intervals. Two carriers
// implement it, the analytic families (Stieltjes integration by parts, so
// the builder equations are evaluated without large-term cancellation) and
// lattices (exact weighted sums).

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "stopsum/common.hpp"
#include "stopsum/distributions.hpp"
#include "stopsum/lattice.hpp"
#include "stopsum/piecewise.hpp"

namespace stopsum {

class TailModel {
 public:
  virtual ~TailModel() = default;
  virtual double log_tail(double x) const = 0;
  double tail(double x) const {
    double lt = log_tail(x);
    return lt == kNegInf ? 0.0 : std::exp(lt);
  }
  // E{ e^{q(xi)} ; xi in (a, b] } for piecewise-linear q.
  virtual double interval_exp(const PiecewiseLinear& q, double a,
                              double b) const = 0;
  // E{ e^{q(xi)} ; xi in (a, b] } for a general exponent with derivative.
  // `cuts` lists known kinks of q so quadrature panels stay smooth.
  virtual double interval_exp_fn(const std::function<double(double)>& q,
                                 const std::function<double(double)>& dq,
                                 double a, double b,
                                 const std::vector<double>* cuts = nullptr)
      const = 0;
  // E{ e^{q(xi)} ; xi in (a, b] } + e^{q(b)} tail(b) - tail(a), the
  // quantity the interval equations equate to their 2^{-n} targets. For q
  // with q(a) = 0 and continuous tails this is the single positive
  // integral of q' e^q tail, evaluated without cancellation.
  virtual double stage_increment(const PiecewiseLinear& q, double a,
                                 double b) const = 0;
  // Largest x the model can serve (lattice truncation point, or the point
  // where the analytic tail leaves the double range).
  virtual double domain_cap() const = 0;
  virtual bool classifies_heavy() const = 0;  // family-level classification
  virtual bool is_heavy() const = 0;
};

class AnalyticTailModel final : public TailModel {
 public:
  explicit AnalyticTailModel(AnalyticDistribution d) : d_(std::move(d)) {
    if (!d_.has_density()) {
      throw UnsupportedError(
          "builders require a continuous law (atom mixtures unsupported)");
    }
    cap_ = d_.quantile_tail(1e-250);
  }

  const AnalyticDistribution& distribution() const { return d_; }

  double log_tail(double x) const override { return d_.log_tail(x); }

  double interval_exp(const PiecewiseLinear& q, double a, double b) const override {
    return interval_exp_fn([&](double u) { return q(u); },
                           [&](double u) { return q.left_derivative(u); }, a, b,
                           &q.knots());
  }

  double interval_exp_fn(const std::function<double(double)>& q,
                         const std::function<double(double)>& dq, double a,
                         double b,
                         const std::vector<double>* cuts = nullptr) const override {
    if (!(b > a)) return 0.0;
    double head = std::exp(q(a) + d_.log_tail(a));
    double lt_b = d_.log_tail(b);
    double tail_term = lt_b == kNegInf ? 0.0 : std::exp(q(b) + lt_b);
    return head - tail_term + parts_integral(q, dq, a, b, cuts);
  }

  double stage_increment(const PiecewiseLinear& q, double a, double b) const override {
    // q(a) = 0 for every builder stage; the boundary terms of the parts
    // formula then cancel against tail(a) exactly, leaving the integral
    return parts_integral([&](double u) { return q(u); },
                          [&](double u) { return q.left_derivative(u); }, a, b,
                          &q.knots());
  }

  double domain_cap() const override { return cap_; }
  bool classifies_heavy() const override { return true; }
  bool is_heavy() const override { return d_.is_heavy_tailed(); }

 private:
  // integral of dq(u) e^{q(u)} tail(u) du over [a, b], split at the known
  // kinks of q so each quadrature panel is smooth
  double parts_integral(const std::function<double(double)>& q,
                        const std::function<double(double)>& dq, double a,
                        double b, const std::vector<double>* kinks) const {
    std::vector<double> cuts;
    cuts.push_back(a);
    if (kinks != nullptr) {
      for (double k : *kinks) {
        if (k > a && k < b) cuts.push_back(k);
      }
      std::sort(cuts.begin(), cuts.end());
    }
    cuts.push_back(b);
    KahanSum total;
    auto integrand = [&](double u) {
      double lt = d_.log_tail(u);
      if (lt == kNegInf) return 0.0;
      return dq(u) * std::exp(q(u) + lt);
    };
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      total.add(integrate(integrand, cuts[i], cuts[i + 1], 1e-12));
    }
    return total.value();
  }

  AnalyticDistribution d_;
  double cap_;
};

class LatticeTailModel final : public TailModel {
 public:
  explicit LatticeTailModel(LatticeDistribution lat, bool heavy_hint = false)
      : lat_(std::move(lat)), heavy_hint_(heavy_hint) {}

  const LatticeDistribution& lattice() const { return lat_; }

  double log_tail(double x) const override { return lat_.log_tail(x); }

  double interval_exp(const PiecewiseLinear& q, double a, double b) const override {
    return interval_exp_fn([&](double u) { return q(u); }, nullptr, a, b);
  }

  double interval_exp_fn(const std::function<double(double)>& q,
                         const std::function<double(double)>&, double a,
                         double b,
                         const std::vector<double>* = nullptr) const override {
    KahanSum s;
    for (std::size_t i = 0; i < lat_.size(); ++i) {
      double x = lat_.x_at(i);
      if (x > a && x <= b && lat_.mass_at(i) > 0.0) {
        s.add(lat_.mass_at(i) * std::exp(q(x)));
      }
    }
    return s.value();
  }

  double stage_increment(const PiecewiseLinear& q, double a, double b) const override {
    KahanSum s;
    for (std::size_t i = 0; i < lat_.size(); ++i) {
      double x = lat_.x_at(i);
      if (x > a && x <= b && lat_.mass_at(i) > 0.0) {
        s.add(lat_.mass_at(i) * std::exp(q(x)));
      }
    }
    double lt_b = lat_.log_tail(b);
    s.add(lt_b == kNegInf ? 0.0 : std::exp(q(b) + lt_b));
    s.add(-lat_.tail(a));
    return s.value();
  }

  // stay strictly inside the truncation point
  double domain_cap() const override {
    return (static_cast<double>(lat_.end_index()) - 0.5) * lat_.step();
  }
  bool classifies_heavy() const override { return false; }
  bool is_heavy() const override { return heavy_hint_; }

 private:
  LatticeDistribution lat_;
  bool heavy_hint_;
};

struct WeightedLattice {
  LatticeDistribution lattice;
  double log_normalizer;  // log E e^{w(xi)}
};

// New governing measure: mass_k proportional to m_k e^{w(x_k)}, normalised
// in the log domain. The deficit is dropped: the reweighted law lives on
// the represented support (scans must stay inside the cutoff).
inline WeightedLattice reweight_lattice(const LatticeDistribution& lat,
                                        const std::function<double(double)>& w) {
  std::vector<double> logm(lat.size(), kNegInf);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (lat.mass_at(i) > 0.0) {
      logm[i] = std::log(lat.mass_at(i)) + w(lat.x_at(i));
    }
  }
  double log_z = log_sum_exp(logm);
  if (log_z == kNegInf) {
    throw PreconditionError("reweight_lattice: weighted law carries no mass");
  }
  std::vector<double> masses(lat.size(), 0.0);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (logm[i] != kNegInf) masses[i] = std::exp(logm[i] - log_z);
  }
  return {LatticeDistribution(lat.step(), lat.origin_index(), std::move(masses),
                              0.0),
          log_z};
}

}  // namespace stopsum
