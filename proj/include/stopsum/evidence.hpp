#pragma once

// Finite-scan verdicts for statements about limits: divergence or
// finiteness of an expectation, and decreasing-to-zero trends of a ratio
// curve. A limit cannot be machine-checked, so each verdict applies an
// explicit, configurable decision rule and reports the trace it saw;
// anything that does not meet the rule is Inconclusive, never a false pass.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "stopsum/common.hpp"

namespace stopsum {

enum class EvidenceVerdict { Divergent, Finite, Inconclusive };

inline std::string evidence_verdict_name(EvidenceVerdict v) {
  switch (v) {
    case EvidenceVerdict::Divergent: return "divergent";
    case EvidenceVerdict::Finite: return "finite";
    case EvidenceVerdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct EvidenceOptions {
  double x0 = 1.0;            // first truncation point
  double stage_factor = 2.0;  // geometric growth of truncations
  int max_stages = 24;
  // divergence rule: the trailing `confirm_stages` partial-sum ratios must
  // all be >= min_growth; `fail_stages` consecutive non-growing stages at
  // the end means inconclusive
  double min_growth = 1.02;
  int confirm_stages = 4;
  int fail_stages = 3;
  // finiteness rule: trailing increments must decay by at least this factor
  double max_increment_decay = 0.6;
  double value_cap = 1e290;   // partials beyond this count as divergence
};

struct TailEvidence {
  EvidenceVerdict verdict = EvidenceVerdict::Inconclusive;
  std::vector<double> truncations;
  std::vector<double> partials;
  double bound = kNaN;  // finite case: extrapolated upper bound
  std::string note;
};

// Truncated partial sums at geometrically growing truncation points.
// Scanning stops early if a partial exceeds the cap (recorded as capped).
struct EvidenceTrace {
  std::vector<double> truncations;
  std::vector<double> partials;
  bool capped = false;
};

inline EvidenceTrace scan_partials(const std::function<double(double)>& partial,
                                   const EvidenceOptions& opts) {
  EvidenceTrace tr;
  double x = opts.x0;
  for (int k = 0; k <= opts.max_stages; ++k) {
    double p = partial(x);
    tr.truncations.push_back(x);
    tr.partials.push_back(p);
    if (!std::isfinite(p) || p > opts.value_cap) {
      tr.capped = true;
      break;
    }
    x *= opts.stage_factor;
  }
  return tr;
}

// Evidence that lim_{X->inf} partial(X) = inf from a scanned trace.
inline TailEvidence apply_divergence_rule(const EvidenceTrace& tr,
                                          EvidenceOptions opts = {}) {
  TailEvidence ev;
  ev.truncations = tr.truncations;
  ev.partials = tr.partials;
  if (tr.capped) {
    ev.verdict = EvidenceVerdict::Divergent;
    ev.note = "partial sum exceeded the numeric cap";
    return ev;
  }
  // length of the homogeneous trailing run of growing / stalled stages
  int growing_tail = 0;
  int stalled_tail = 0;
  bool run_is_growing = false;
  bool first = true;
  for (std::size_t k = ev.partials.size(); k-- > 1;) {
    double prev = ev.partials[k - 1];
    bool grew = prev > 0.0 && ev.partials[k] >= opts.min_growth * prev;
    if (first) {
      run_is_growing = grew;
      first = false;
    }
    if (grew != run_is_growing) break;
    (grew ? growing_tail : stalled_tail)++;
  }
  if (growing_tail >= opts.confirm_stages) {
    ev.verdict = EvidenceVerdict::Divergent;
    ev.note = "trailing " + std::to_string(growing_tail) +
              " stages grew by >= " + std::to_string(opts.min_growth);
  } else if (stalled_tail >= opts.fail_stages) {
    ev.verdict = EvidenceVerdict::Inconclusive;
    ev.note = "trailing " + std::to_string(stalled_tail) +
              " stages failed the growth rule";
  } else {
    ev.verdict = EvidenceVerdict::Inconclusive;
    ev.note = "mixed growth pattern";
  }
  return ev;
}

inline TailEvidence divergence_evidence(
    const std::function<double(double)>& partial, EvidenceOptions opts = {}) {
  return apply_divergence_rule(scan_partials(partial, opts), opts);
}

// Evidence that lim partial(X) < inf: trailing increments must decay
// geometrically; the reported bound adds the extrapolated geometric tail.
inline TailEvidence apply_finiteness_rule(const EvidenceTrace& tr,
                                          EvidenceOptions opts = {}) {
  TailEvidence ev;
  ev.truncations = tr.truncations;
  ev.partials = tr.partials;
  if (tr.capped) {
    ev.verdict = EvidenceVerdict::Divergent;
    ev.note = "partial sum exceeded the numeric cap";
    return ev;
  }
  std::vector<double> inc;
  for (std::size_t k = 1; k < ev.partials.size(); ++k) {
    inc.push_back(std::max(0.0, ev.partials[k] - ev.partials[k - 1]));
  }
  int ok = 0;
  double worst_q = 0.0;
  for (std::size_t k = inc.size(); k-- > 1;) {
    if (inc[k] == 0.0) {
      ++ok;
      continue;
    }
    double q = inc[k] / inc[k - 1];
    if (inc[k - 1] > 0.0 && q <= opts.max_increment_decay) {
      worst_q = std::max(worst_q, q);
      ++ok;
    } else {
      break;
    }
    if (ok >= opts.confirm_stages) break;
  }
  if (ok >= opts.confirm_stages ||
      (ok == static_cast<int>(inc.size()) - 1 && !inc.empty())) {
    ev.verdict = EvidenceVerdict::Finite;
    double last = inc.back();
    double q = worst_q > 0.0 ? worst_q : opts.max_increment_decay;
    ev.bound = ev.partials.back() + last * q / (1.0 - q);
    ev.note = "trailing increments decay by <= " + std::to_string(q);
  } else {
    ev.verdict = EvidenceVerdict::Inconclusive;
    ev.note = "increments did not decay geometrically";
  }
  return ev;
}

inline TailEvidence finiteness_evidence(
    const std::function<double(double)>& partial, EvidenceOptions opts = {}) {
  return apply_finiteness_rule(scan_partials(partial, opts), opts);
}

// Ratio curve over a grid with the quartile trend rule: the verdict is
// positive when the last-quartile maximum lies strictly below the
// first-quartile minimum, or when the last quartile is identically zero.
struct TrendCurve {
  std::vector<double> x;
  std::vector<double> ratio;
  bool verdict_positive = false;
  double first_quartile_min = kNaN;
  double last_quartile_max = kNaN;
  bool clipped = false;      // part of the grid was dropped (denominator 0)
  std::string rule = "last-quartile max < first-quartile min, or last quartile == 0";
  std::string note;
};

inline void apply_quartile_rule(TrendCurve& c) {
  std::size_t n = c.ratio.size();
  if (n < 4) {
    c.verdict_positive = false;
    c.note = "grid too short for the quartile rule";
    return;
  }
  std::size_t q = n / 4;
  double fmin = kPosInf, lmax = kNegInf;
  for (std::size_t i = 0; i < q; ++i) fmin = std::min(fmin, c.ratio[i]);
  for (std::size_t i = n - q; i < n; ++i) lmax = std::max(lmax, c.ratio[i]);
  c.first_quartile_min = fmin;
  c.last_quartile_max = lmax;
  c.verdict_positive = (lmax == 0.0) || (lmax < fmin);
}

}  // namespace stopsum
