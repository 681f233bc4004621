#pragma once

// Uniform-grid carrier for distributions and their convolutions. A lattice
// models a law on {origin, origin+1, ...} * step together with an explicit
// overflow bucket: `deficit` is the mass beyond the last grid point (for a
// discretized law, the mass past the truncation cutoff). Tail queries
// include the bucket, so tails at represented points are exact for the
// rounded-up law; log tails are stored directly to keep far-tail relative
// accuracy.

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "stopsum/common.hpp"
#include "stopsum/distributions.hpp"

namespace stopsum {

class LatticeDistribution {
 public:
  LatticeDistribution(double step, long origin_index, std::vector<double> masses,
                      double deficit)
      : step_(step), origin_(origin_index), masses_(std::move(masses)),
        deficit_(deficit) {
    if (!(step_ > 0.0)) throw PreconditionError("lattice: step must be > 0");
    if (masses_.empty()) throw PreconditionError("lattice: empty mass array");
    if (deficit_ < 0.0) throw PreconditionError("lattice: negative deficit");
    rebuild_log_tail();
  }

  // Lattice with analytic log-tails attached (used by discretize, which
  // copies tails from the source law rather than cumulating masses).
  LatticeDistribution(double step, long origin_index, std::vector<double> masses,
                      double deficit, std::vector<double> log_tail)
      : step_(step), origin_(origin_index), masses_(std::move(masses)),
        deficit_(deficit), log_tail_(std::move(log_tail)) {
    if (log_tail_.size() != masses_.size()) {
      throw Error("lattice: log_tail size mismatch");
    }
  }

  static LatticeDistribution point_mass(double step, long index) {
    return LatticeDistribution(step, index, {1.0}, 0.0);
  }

  double step() const { return step_; }
  long origin_index() const { return origin_; }
  long end_index() const { return origin_ + static_cast<long>(masses_.size()) - 1; }
  std::size_t size() const { return masses_.size(); }
  const std::vector<double>& masses() const { return masses_; }
  const std::vector<double>& log_tails() const { return log_tail_; }
  double deficit() const { return deficit_; }

  double x_at(std::size_t i) const {
    return static_cast<double>(origin_ + static_cast<long>(i)) * step_;
  }
  double mass_at(std::size_t i) const { return masses_[i]; }

  // Index of the grid cell containing x (floor semantics with an epsilon
  // snap so that grid-aligned queries are deterministic).
  long index_of(double x) const {
    return static_cast<long>(std::floor(x / step_ + 1e-9)) - origin_;
  }

  double total_mass() const {
    KahanSum s;
    for (double m : masses_) s.add(m);
    return s.value();
  }

  // Mean of the represented part (the bucket's location is unknown).
  double represented_mean() const {
    KahanSum s;
    for (std::size_t i = 0; i < masses_.size(); ++i) s.add(masses_[i] * x_at(i));
    return s.value();
  }

  // P{X > x}. Queries beyond the last grid point hit the truncated region
  // and raise, never silently return 0, unless the law has no deficit.
  double tail(double x) const {
    double lt = log_tail(x);
    return lt == kNegInf ? 0.0 : std::exp(lt);
  }

  double log_tail(double x) const {
    long i = index_of(x);
    if (i < 0) {
      KahanSum s;
      for (double m : masses_) s.add(m);
      s.add(deficit_);
      double v = s.value();
      return v > 0 ? std::log(v) : kNegInf;
    }
    if (i >= static_cast<long>(masses_.size())) {
      if (deficit_ > 0.0) {
        throw NumericRangeError(
            "lattice tail: query in truncated region beyond x = " +
            std::to_string((end_index()) * step_) +
            " (deficit " + std::to_string(deficit_) + ")");
      }
      return kNegInf;
    }
    return log_tail_[static_cast<std::size_t>(i)];
  }

  // log E e^{gamma X} over the represented part.
  double log_laplace(double gamma) const {
    std::vector<double> terms;
    terms.reserve(masses_.size());
    for (std::size_t i = 0; i < masses_.size(); ++i) {
      if (masses_[i] > 0.0) {
        terms.push_back(std::log(masses_[i]) + gamma * x_at(i));
      }
    }
    return log_sum_exp(terms);
  }

  LaplaceReport laplace(double gamma) const {
    LaplaceReport rep;
    rep.gamma = gamma;
    rep.phi = std::exp(log_laplace(gamma));
    rep.gamma_hat = provenance_ ? provenance_->gamma_hat() : kPosInf;
    rep.truncation_warning = gamma > 0.0 && deficit_ > 0.0;
    return rep;
  }

  // Grid translation by a whole number of steps.
  LatticeDistribution shifted(long steps) const {
    LatticeDistribution out = *this;
    out.origin_ += steps;
    return out;
  }

  void attach_provenance(std::shared_ptr<const AnalyticDistribution> src,
                         double cutoff) {
    provenance_ = std::move(src);
    cutoff_ = cutoff;
  }
  const AnalyticDistribution* provenance() const { return provenance_.get(); }
  double cutoff() const { return cutoff_; }

  // Max inconsistency between stored log tails and cumulated masses, in the
  // linear domain, over points where the tail exceeds `floor_val`.
  double tail_consistency_error(double floor_val = 1e-300) const {
    double worst = 0.0;
    KahanSum suffix;
    suffix.add(deficit_);
    for (std::size_t i = masses_.size(); i-- > 0;) {
      double cum = suffix.value();
      double stored = log_tail_[i] == kNegInf ? 0.0 : std::exp(log_tail_[i]);
      if (stored > floor_val) {
        worst = std::max(worst, std::abs(stored - cum) / stored);
      }
      suffix.add(masses_[i]);
    }
    return worst;
  }

 private:
  void rebuild_log_tail() {
    log_tail_.assign(masses_.size(), kNegInf);
    // suffix accumulation from the far end keeps the relative error of
    // small tails at the summation level (log-sum-exp equivalent here
    // because all terms are nonnegative and representable)
    KahanSum suffix;
    suffix.add(deficit_);
    for (std::size_t i = masses_.size(); i-- > 0;) {
      double t = suffix.value();
      log_tail_[i] = t > 0.0 ? std::log(t) : kNegInf;
      suffix.add(masses_[i]);
    }
    // log_tail_[i] must be P{X > x_i}: exclude the atom at x_i itself
    // (suffix above was taken before adding masses_[i], so this holds).
  }

  double step_;
  long origin_;
  std::vector<double> masses_;
  double deficit_;
  std::vector<double> log_tail_;
  std::shared_ptr<const AnalyticDistribution> provenance_;
  double cutoff_ = kNaN;
};

struct DiscretizeOptions {
  bool allow_large_deficit = false;  // override the 1% refusal
};

// Upper-grid-point discretization: the mass of ((k-1)h, kh] is placed at
// kh, so the lattice variable is h * ceil(xi / h) and lattice tails at grid
// points equal the analytic tails exactly. Tail values are copied from the
// analytic form rather than cumulated.
inline LatticeDistribution discretize(const AnalyticDistribution& d, double step,
                                      double cutoff,
                                      DiscretizeOptions opts = {}) {
  if (!(step > 0.0)) throw PreconditionError("discretize: step must be > 0");
  if (!(cutoff > step)) throw PreconditionError("discretize: cutoff must exceed step");
  double tail_at_cutoff = d.tail(cutoff);
  if (tail_at_cutoff > 0.01 && !opts.allow_large_deficit) {
    throw PreconditionError(
        "discretize: tail at cutoff is " + std::to_string(tail_at_cutoff) +
        " > 0.01; extend the cutoff or set the override flag");
  }
  long cells = static_cast<long>(std::ceil(cutoff / step - 1e-9));
  std::vector<double> masses(static_cast<std::size_t>(cells) + 1, 0.0);
  std::vector<double> log_tail(masses.size(), kNegInf);
  masses[0] = 1.0 - d.tail(0.0);
  log_tail[0] = d.log_tail(0.0);
  double prev_log = log_tail[0];
  for (long k = 1; k <= cells; ++k) {
    double cur_log = d.log_tail(static_cast<double>(k) * step);
    // F((k-1)h) - F(kh) without cancellation
    masses[static_cast<std::size_t>(k)] =
        prev_log == kNegInf ? 0.0 : exp_diff(cur_log, prev_log);
    log_tail[static_cast<std::size_t>(k)] = cur_log;
    prev_log = cur_log;
  }
  double deficit = prev_log == kNegInf ? 0.0 : std::exp(prev_log);
  LatticeDistribution lat(step, 0, std::move(masses), deficit,
                          std::move(log_tail));
  lat.attach_provenance(std::make_shared<AnalyticDistribution>(d),
                        static_cast<double>(cells) * step);
  return lat;
}

// Expectation of fn over the represented lattice points.
inline double lattice_expectation(const LatticeDistribution& lat,
                                  const std::function<double(double)>& fn) {
  KahanSum s;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (lat.mass_at(i) > 0.0) s.add(lat.mass_at(i) * fn(lat.x_at(i)));
  }
  return s.value();
}

// log of E exp(g(X)) over the represented lattice points.
inline double lattice_log_exp_expectation(const LatticeDistribution& lat,
                                          const std::function<double(double)>& g) {
  std::vector<double> terms;
  terms.reserve(lat.size());
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (lat.mass_at(i) > 0.0) {
      terms.push_back(std::log(lat.mass_at(i)) + g(lat.x_at(i)));
    }
  }
  return log_sum_exp(terms);
}

}  // namespace stopsum
