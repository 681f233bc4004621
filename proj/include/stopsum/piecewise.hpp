#pragma once

// Piecewise-linear functions on the real line. These carry the witness
// functions produced by the constructive builders (h, f1, g, r) together
// with their per-interval parameters, and double as general-purpose
// concave/convex inputs (chord interpolants of analytic curves).

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "stopsum/common.hpp"

namespace stopsum {

// Minimal function-of-one-variable interface used throughout the builders.
// left_derivative(x) is the slope of the piece ending at x (for smooth
// implementations, just the derivative).
class ScalarFunction {
 public:
  virtual ~ScalarFunction() = default;
  virtual double operator()(double x) const = 0;
  virtual double left_derivative(double x) const = 0;
};

// Wraps a pair of callables as a ScalarFunction.
class FunctionView final : public ScalarFunction {
 public:
  FunctionView(std::function<double(double)> f, std::function<double(double)> df)
      : f_(std::move(f)), df_(std::move(df)) {}
  double operator()(double x) const override { return f_(x); }
  double left_derivative(double x) const override { return df_(x); }

 private:
  std::function<double(double)> f_;
  std::function<double(double)> df_;
};

enum class Shape { Concave, Convex, Linear };

inline std::string shape_name(Shape s) {
  switch (s) {
    case Shape::Concave: return "concave";
    case Shape::Convex: return "convex";
    case Shape::Linear: return "linear";
  }
  return "?";
}

// Continuous piecewise-linear function determined by knots and knot values.
// Beyond the last knot it extends with `final_slope`; below the first knot
// it extends with the first interior slope (or final_slope when there is a
// single knot). Evaluation at a knot returns the stored value exactly.
class PiecewiseLinear final : public ScalarFunction {
 public:
  PiecewiseLinear(std::vector<double> knots, std::vector<double> values,
                  double final_slope, Shape shape = Shape::Linear)
      : knots_(std::move(knots)),
        values_(std::move(values)),
        final_slope_(final_slope),
        shape_(shape) {
    if (knots_.empty() || knots_.size() != values_.size()) {
      throw Error("PiecewiseLinear: knots/values size mismatch");
    }
    for (std::size_t i = 1; i < knots_.size(); ++i) {
      if (!(knots_[i] > knots_[i - 1])) {
        throw Error("PiecewiseLinear: knots must be strictly increasing");
      }
    }
  }

  static PiecewiseLinear constant(double c) {
    return PiecewiseLinear({0.0}, {c}, 0.0, Shape::Linear);
  }
  static PiecewiseLinear line(double slope, double intercept = 0.0) {
    return PiecewiseLinear({0.0}, {intercept}, slope, Shape::Linear);
  }

  // Builds the function from its exact per-segment slopes (the last slope
  // extrapolates beyond the final knot). Values are accumulated from v0;
  // shape checks then operate on the stored slopes verbatim, so slope
  // monotonicity certified by a builder survives exactly.
  static PiecewiseLinear from_slopes(std::vector<double> knots, double v0,
                                     std::vector<double> slopes, Shape shape) {
    if (knots.size() != slopes.size()) {
      throw Error("from_slopes: need one slope per knot (last extrapolates)");
    }
    std::vector<double> values(knots.size());
    values[0] = v0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
      values[i + 1] = values[i] + slopes[i] * (knots[i + 1] - knots[i]);
    }
    double fs = slopes.back();
    PiecewiseLinear p(std::move(knots), std::move(values), fs, shape);
    p.explicit_slopes_ = std::move(slopes);
    return p;
  }

  double operator()(double x) const override {
    std::size_t i = segment_index(x);
    return values_[i] + slope_of_segment(i) * (x - knots_[i]);
  }

  // Slope of the piece ending at x: at an interior knot this is the slope
  // of the interval to the left.
  double left_derivative(double x) const override {
    if (x <= knots_.front()) return slope_of_segment(0);
    std::size_t i = segment_index_left(x);
    return slope_of_segment(i);
  }

  double right_derivative(double x) const {
    return slope_of_segment(segment_index(x));
  }

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }
  double final_slope() const { return final_slope_; }
  Shape shape() const { return shape_; }

  // All segment slopes in order, final (extrapolation) slope included.
  std::vector<double> slopes() const {
    if (!explicit_slopes_.empty()) return explicit_slopes_;
    std::vector<double> s;
    s.reserve(knots_.size());
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
      s.push_back((values_[i + 1] - values_[i]) / (knots_[i + 1] - knots_[i]));
    }
    s.push_back(final_slope_);
    return s;
  }

  bool slopes_nonincreasing(double tol = 0.0) const {
    auto s = slopes();
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (s[i] > s[i - 1] + tol) return false;
    }
    return true;
  }
  bool slopes_nondecreasing(double tol = 0.0) const {
    auto s = slopes();
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (s[i] < s[i - 1] - tol) return false;
    }
    return true;
  }
  bool shape_consistent() const {
    switch (shape_) {
      case Shape::Concave: return slopes_nonincreasing();
      case Shape::Convex: return slopes_nondecreasing();
      case Shape::Linear: {
        auto s = slopes();
        return std::all_of(s.begin(), s.end(),
                           [&](double v) { return v == s.front(); });
      }
    }
    return false;
  }

  // Per-interval parameters recorded by the builders (epsilon_n, a_n, ...).
  void set_aux(std::string name, std::vector<double> values) {
    aux_name_ = std::move(name);
    aux_ = std::move(values);
  }
  const std::string& aux_name() const { return aux_name_; }
  const std::vector<double>& aux() const { return aux_; }

  // Pointwise sum; knots are merged, extrapolation slopes add.
  friend PiecewiseLinear operator+(const PiecewiseLinear& a,
                                   const PiecewiseLinear& b) {
    std::vector<double> knots;
    knots.reserve(a.knots_.size() + b.knots_.size());
    std::merge(a.knots_.begin(), a.knots_.end(), b.knots_.begin(),
               b.knots_.end(), std::back_inserter(knots));
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    std::vector<double> values;
    values.reserve(knots.size());
    for (double x : knots) values.push_back(a(x) + b(x));
    return PiecewiseLinear(std::move(knots), std::move(values),
                           a.final_slope_ + b.final_slope_,
                           a.shape_ == b.shape_ ? a.shape_ : Shape::Concave);
  }

 private:
  std::size_t segment_index(double x) const {
    if (x <= knots_.front()) return 0;
    auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
    return static_cast<std::size_t>(it - knots_.begin()) - 1;
  }
  // Index of the segment whose half-open interval (k_i, k_{i+1}] contains x.
  std::size_t segment_index_left(double x) const {
    auto it = std::lower_bound(knots_.begin(), knots_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - knots_.begin());
    return i == 0 ? 0 : i - 1;
  }
  double slope_of_segment(std::size_t i) const {
    if (!explicit_slopes_.empty()) return explicit_slopes_[i];
    if (i + 1 >= knots_.size()) return final_slope_;
    return (values_[i + 1] - values_[i]) / (knots_[i + 1] - knots_[i]);
  }

  std::vector<double> knots_;
  std::vector<double> values_;
  double final_slope_;
  Shape shape_;
  std::vector<double> explicit_slopes_;
  std::string aux_name_;
  std::vector<double> aux_;
};

// Pointwise minimum of two piecewise-linear functions restricted to
// [lo, hi]. Knots are merged, crossing points inserted, and each output
// segment carries the exact slope double of whichever branch is active.
// Crossings within float noise of the segment values are treated as ties
// (no knot inserted; the flatter branch wins), so re-anchored inputs whose
// values differ by a few ulps cannot produce spurious micro-segments.
inline PiecewiseLinear pw_min(const PiecewiseLinear& a, const PiecewiseLinear& b,
                              double lo, double hi, Shape shape) {
  if (!(hi > lo)) throw Error("pw_min: empty interval");
  std::vector<double> grid;
  grid.push_back(lo);
  for (double k : a.knots()) {
    if (k > lo && k < hi) grid.push_back(k);
  }
  for (double k : b.knots()) {
    if (k > lo && k < hi) grid.push_back(k);
  }
  grid.push_back(hi);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  // insert genuine crossings: the difference is linear on each segment
  std::vector<double> knots;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    double u = grid[i], v = grid[i + 1];
    if (!knots.empty() && u - knots.back() <= 1e-12 * (1.0 + std::abs(u))) {
      continue;
    }
    knots.push_back(u);
    double du = a(u) - b(u);
    double dv = a(v) - b(v);
    double noise = 1e-12 * (std::abs(a(u)) + std::abs(b(u)) + std::abs(a(v)) +
                            std::abs(b(v)) + 1e-300);
    if (std::abs(du) <= noise || std::abs(dv) <= noise) continue;
    if ((du > 0.0) != (dv > 0.0)) {
      double t = du / (du - dv);
      double cross = u + t * (v - u);
      double margin = 1e-12 * (1.0 + std::abs(cross));
      if (cross > u + margin && cross < v - margin) knots.push_back(cross);
    }
  }
  if (grid.back() - knots.back() > 1e-12 * (1.0 + std::abs(grid.back()))) {
    knots.push_back(grid.back());
  }
  std::vector<double> slopes(knots.size());
  std::vector<double> sa = a.slopes();
  std::vector<double> sb = b.slopes();
  auto seg_slope = [](const PiecewiseLinear& p, const std::vector<double>& s,
                      double x) {
    const auto& ks = p.knots();
    auto it = std::upper_bound(ks.begin(), ks.end(), x);
    std::size_t i = it == ks.begin() ? 0 : static_cast<std::size_t>(it - ks.begin()) - 1;
    return s[std::min(i, s.size() - 1)];
  };
  for (std::size_t i = 0; i < knots.size(); ++i) {
    double u = knots[i];
    double v = i + 1 < knots.size() ? knots[i + 1] : u + 1.0;
    double mid = 0.5 * (u + v);
    double am = a(mid), bm = b(mid);
    double noise = 1e-12 * (std::abs(am) + std::abs(bm) + 1e-300);
    bool use_a;
    if (std::abs(am - bm) <= noise) {
      use_a = seg_slope(a, sa, mid) <= seg_slope(b, sb, mid);
    } else {
      use_a = am < bm;
    }
    slopes[i] = use_a ? seg_slope(a, sa, mid) : seg_slope(b, sb, mid);
  }
  double v0 = std::min(a(lo), b(lo));
  PiecewiseLinear out = PiecewiseLinear::from_slopes(std::move(knots), v0,
                                                     std::move(slopes), shape);
  return out;
}

// epsilon * m with exact slope scaling.
inline PiecewiseLinear scale_pw(const PiecewiseLinear& m, double eps) {
  std::vector<double> slopes = m.slopes();
  for (double& s : slopes) s *= eps;
  return PiecewiseLinear::from_slopes(m.knots(), m.values().front() * eps,
                                      std::move(slopes), m.shape());
}

// Chord interpolant of fn on the given knots. For concave fn the chords
// bound it from below between knots and agree at knots; the extrapolation
// slope is the last chord slope.
inline PiecewiseLinear chord_interpolant(const std::function<double(double)>& fn,
                                         std::vector<double> knots,
                                         Shape shape) {
  if (knots.size() < 2) throw Error("chord_interpolant: need >= 2 knots");
  std::vector<double> values;
  values.reserve(knots.size());
  for (double x : knots) values.push_back(fn(x));
  std::size_t n = knots.size();
  double fs = (values[n - 1] - values[n - 2]) / (knots[n - 1] - knots[n - 2]);
  return PiecewiseLinear(std::move(knots), std::move(values), fs, shape);
}

// Knot grid with geometric spacing refinement: linear step `dx0` until
// `switch_x`, then multiplicative factor. Used to build chord interpolants
// that stay close to slowly-varying curves over wide ranges.
inline std::vector<double> geometric_knots(double x_lo, double x_hi,
                                           double dx0, double factor) {
  std::vector<double> ks;
  double x = x_lo;
  double dx = dx0;
  while (x < x_hi) {
    ks.push_back(x);
    x += dx;
    dx *= factor;
  }
  ks.push_back(x_hi);
  return ks;
}

}  // namespace stopsum
