#pragma once

// Convolution powers F^{*n} and compound laws F^{*tau} on lattices.
//
// All operations share the overflow-bucket convention of
// LatticeDistribution: mass convolved past the output cap joins the
// bucket, so tails at represented grid points stay exact for the lattice
// law. Masses are accumulated in the linear domain (nonnegative terms, no
// cancellation); tails are rebuilt by suffix accumulation from the far end.

#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "stopsum/common.hpp"
#include "stopsum/distributions.hpp"
#include "stopsum/lattice.hpp"

namespace stopsum {

enum class CompoundMethod { Direct, FFT, Panjer, BruteForce };

inline std::string compound_method_name(CompoundMethod m) {
  switch (m) {
    case CompoundMethod::Direct: return "direct";
    case CompoundMethod::FFT: return "fft";
    case CompoundMethod::Panjer: return "panjer";
    case CompoundMethod::BruteForce: return "brute_force";
  }
  return "?";
}

struct CompoundResult {
  LatticeDistribution lattice;
  std::vector<double> per_n_weights;   // tau pmf actually mixed in
  double truncation_error_bound = 0.0; // neglected probability mass
  CompoundMethod method = CompoundMethod::Direct;
};

inline constexpr long kNoCap = std::numeric_limits<long>::max();

namespace detail {

inline void check_steps_match(const LatticeDistribution& a,
                              const LatticeDistribution& b) {
  if (a.step() != b.step()) {
    throw PreconditionError("convolve: lattice step mismatch (" +
                            std::to_string(a.step()) + " vs " +
                            std::to_string(b.step()) + ")");
  }
}

// Suffix sums of b's masses: suffix[j] = sum of b.masses()[j..].
inline std::vector<double> suffix_sums(const std::vector<double>& m) {
  std::vector<double> s(m.size() + 1, 0.0);
  KahanSum acc;
  for (std::size_t j = m.size(); j-- > 0;) {
    acc.add(m[j]);
    s[j] = acc.value();
  }
  return s;
}

}  // namespace detail

// Exact discrete convolution of the mass arrays. Output indices beyond
// `cap_end_index` are absorbed into the deficit bucket; deficits combine as
// 1 - (1-da)(1-db) plus the clipped mass.
inline LatticeDistribution convolve(const LatticeDistribution& a,
                                    const LatticeDistribution& b,
                                    long cap_end_index = kNoCap) {
  detail::check_steps_match(a, b);
  long origin = a.origin_index() + b.origin_index();
  long natural_end = a.end_index() + b.end_index();
  long end = std::min(natural_end, cap_end_index);
  if (end < origin) {
    throw PreconditionError("convolve: cap excludes the whole support");
  }
  std::size_t len = static_cast<std::size_t>(end - origin) + 1;
  std::vector<double> out(len, 0.0);
  const std::vector<double>& am = a.masses();
  const std::vector<double>& bm = b.masses();
  std::vector<double> bsuf = detail::suffix_sums(bm);
  KahanSum clipped;
  for (std::size_t i = 0; i < am.size(); ++i) {
    double ai = am[i];
    if (ai == 0.0) continue;
    std::size_t jmax = len > i ? std::min(bm.size(), len - i) : 0;
    double* dst = out.data() + i;
    for (std::size_t j = 0; j < jmax; ++j) dst[j] += ai * bm[j];
    if (jmax < bm.size()) clipped.add(ai * bsuf[jmax]);
  }
  double da = a.deficit(), db = b.deficit();
  double deficit = da + db - da * db + clipped.value();
  return LatticeDistribution(a.step(), origin, std::move(out), deficit);
}

namespace detail {

inline void fft_radix2(std::vector<std::complex<double>>& v, bool inverse) {
  std::size_t n = v.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(v[i], v[j]);
  }
  for (std::size_t half = 1; half < n; half <<= 1) {
    double ang = (inverse ? 1.0 : -1.0) * std::numbers::pi / half;
    std::complex<double> w_step(std::cos(ang), std::sin(ang));
    for (std::size_t base = 0; base < n; base += 2 * half) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < half; ++k) {
        auto u = v[base + k];
        auto t = v[base + k + half] * w;
        v[base + k] = u + t;
        v[base + k + half] = u - t;
        w *= w_step;
      }
    }
  }
  if (inverse) {
    for (auto& z : v) z /= static_cast<double>(n);
  }
}

}  // namespace detail

// FFT convolution for bulk speed. Linear-domain FFT noise pollutes masses
// below roughly 1e-13, so every output index from the point where the
// running tail drops under `patch_threshold` is recomputed by direct
// summation before tails are rebuilt.
inline LatticeDistribution convolve_fft(const LatticeDistribution& a,
                                        const LatticeDistribution& b,
                                        long cap_end_index = kNoCap,
                                        double patch_threshold = 1e-12) {
  detail::check_steps_match(a, b);
  long origin = a.origin_index() + b.origin_index();
  long natural_end = a.end_index() + b.end_index();
  long end = std::min(natural_end, cap_end_index);
  std::size_t full_len = static_cast<std::size_t>(natural_end - origin) + 1;
  std::size_t len = static_cast<std::size_t>(end - origin) + 1;
  std::size_t n = 1;
  while (n < full_len) n <<= 1;
  std::vector<std::complex<double>> fa(n), fb(n);
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = a.masses()[i];
  for (std::size_t j = 0; j < b.size(); ++j) fb[j] = b.masses()[j];
  detail::fft_radix2(fa, false);
  detail::fft_radix2(fb, false);
  for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
  detail::fft_radix2(fa, true);
  std::vector<double> out(len, 0.0);
  for (std::size_t i = 0; i < len; ++i) out[i] = std::max(0.0, fa[i].real());
  // tail patch: recompute the far region directly
  double running = 0.0;
  std::size_t patch_from = len;
  for (std::size_t i = len; i-- > 0;) {
    running += out[i];
    if (running >= patch_threshold) break;
    patch_from = i;
  }
  const std::vector<double>& am = a.masses();
  const std::vector<double>& bm = b.masses();
  for (std::size_t m = patch_from; m < len; ++m) {
    KahanSum cell;
    std::size_t i_lo = m >= bm.size() ? m - bm.size() + 1 : 0;
    std::size_t i_hi = std::min(am.size(), m + 1);
    for (std::size_t i = i_lo; i < i_hi; ++i) cell.add(am[i] * bm[m - i]);
    out[m] = cell.value();
  }
  // clipped mass beyond the cap
  KahanSum clipped;
  std::vector<double> bsuf = detail::suffix_sums(bm);
  for (std::size_t i = 0; i < am.size(); ++i) {
    if (am[i] == 0.0) continue;
    std::size_t jmax = len > i ? std::min(bm.size(), len - i) : 0;
    if (jmax < bm.size()) clipped.add(am[i] * bsuf[jmax]);
  }
  double da = a.deficit(), db = b.deficit();
  double deficit = da + db - da * db + clipped.value();
  return LatticeDistribution(a.step(), origin, std::move(out), deficit);
}

// F^{*n} by binary exponentiation; n = 0 is the point mass at 0.
inline LatticeDistribution conv_power(const LatticeDistribution& f, long n,
                                      long cap_end_index = kNoCap) {
  if (n < 0) throw PreconditionError("conv_power: n >= 0 required");
  LatticeDistribution result = LatticeDistribution::point_mass(f.step(), 0);
  if (n == 0) return result;
  LatticeDistribution base = f;
  bool result_trivial = true;
  for (;;) {
    if (n & 1) {
      result = result_trivial ? base : convolve(result, base, cap_end_index);
      result_trivial = false;
    }
    n >>= 1;
    if (n == 0) break;
    base = convolve(base, base, cap_end_index);
  }
  return result;
}

struct CompoundOptions {
  long cap_end_index = kNoCap;
  double tau_tail_threshold = 1e-9;  // acceptable P{tau > n_max}
};

// Mixture sum_{n <= n_max} P{tau = n} F^{*n}, accumulated with per-cell
// compensation. Mass of {tau > n_max} is not represented; it is reported as
// the truncation error bound.
inline CompoundResult compound(const LatticeDistribution& f,
                               const CountingDistribution& tau, long n_max,
                               CompoundOptions opts = {}) {
  if (n_max < 0) throw PreconditionError("compound: n_max >= 0 required");
  double tau_tail = tau.tail(n_max);
  if (tau_tail > opts.tau_tail_threshold) {
    long required = tau.enumeration_limit(opts.tau_tail_threshold);
    throw PreconditionError(
        "compound: P{tau > n_max} = " + std::to_string(tau_tail) +
        " exceeds threshold " + std::to_string(opts.tau_tail_threshold) +
        "; need n_max >= " + std::to_string(required));
  }
  std::vector<double> weights = tau.pmf_upto(n_max);
  long origin = std::min<long>(0, n_max * std::min<long>(0, f.origin_index()));
  long reach_end = std::max<long>(0, n_max * std::max<long>(0, f.end_index()));
  reach_end = std::max(origin, std::min(reach_end, opts.cap_end_index));
  std::size_t len = static_cast<std::size_t>(reach_end - origin) + 1;
  std::vector<double> acc(len, 0.0), comp(len, 0.0);
  KahanSum deficit_acc;
  auto add_term = [&](const LatticeDistribution& pow_n, double w) {
    if (w == 0.0) return;
    for (std::size_t i = 0; i < pow_n.size(); ++i) {
      double x = w * pow_n.mass_at(i);
      if (x == 0.0) continue;
      std::size_t k = static_cast<std::size_t>(pow_n.origin_index() +
                                               static_cast<long>(i) - origin);
      double t = acc[k] + x;
      comp[k] += std::abs(acc[k]) >= std::abs(x) ? (acc[k] - t) + x : (x - t) + acc[k];
      acc[k] = t;
    }
    deficit_acc.add(w * pow_n.deficit());
  };
  LatticeDistribution cur = LatticeDistribution::point_mass(f.step(), 0);
  add_term(cur, weights[0]);
  for (long n = 1; n <= n_max; ++n) {
    cur = convolve(cur, f, reach_end);
    add_term(cur, weights[static_cast<std::size_t>(n)]);
  }
  for (std::size_t i = 0; i < len; ++i) acc[i] += comp[i];
  LatticeDistribution lattice(f.step(), origin, std::move(acc),
                              deficit_acc.value());
  CompoundResult result{std::move(lattice), std::move(weights), 0.0,
                        CompoundMethod::Direct};
  double total = result.lattice.total_mass() + result.lattice.deficit();
  result.truncation_error_bound = std::abs(1.0 - total) + 1e-15;
  return result;
}

// Panjer recursion for counting laws in the (a,b,0) class (Geometric and
// Poisson here). Runs over the whole tau support implicitly, so the only
// unrepresented mass is whatever falls past the output cap.
inline CompoundResult panjer_compound(const LatticeDistribution& f,
                                      const CountingDistribution& tau,
                                      long cap_end_index = kNoCap) {
  double pa = 0.0, pb = 0.0;
  double p0_direct = 0.0;  // P{tau=0}, used for the PGF at f0
  switch (tau.kind()) {
    case CountingKind::Geometric:
      pa = 1.0 - tau.param();
      pb = 0.0;
      p0_direct = tau.param();
      break;
    case CountingKind::Poisson:
      pa = 0.0;
      pb = tau.param();
      p0_direct = std::exp(-tau.param());
      break;
    default:
      throw UnsupportedError("panjer_compound: counting family " +
                             counting_kind_name(tau.kind()) +
                             " is not in the (a,b,0) class");
  }
  if (f.origin_index() < 0) {
    throw PreconditionError("panjer_compound: summand lattice must be nonnegative");
  }
  long end = std::min(cap_end_index, kNoCap);
  if (end == kNoCap) end = f.end_index();
  std::size_t len = static_cast<std::size_t>(end) + 1;
  // densify f onto absolute indices 0..end
  std::vector<double> fm(len, 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    long idx = f.origin_index() + static_cast<long>(i);
    if (idx <= end) fm[static_cast<std::size_t>(idx)] = f.mass_at(i);
  }
  double f0 = fm[0];
  std::vector<double> s(len, 0.0);
  // s_0 = PGF_tau(f0)
  switch (tau.kind()) {
    case CountingKind::Geometric:
      s[0] = p0_direct / (1.0 - pa * f0);
      break;
    case CountingKind::Poisson:
      s[0] = std::exp(pb * (f0 - 1.0));
      break;
    default:
      break;
  }
  double denom = 1.0 - pa * f0;
  for (std::size_t m = 1; m < len; ++m) {
    KahanSum acc;
    std::size_t j_hi = std::min(m, fm.size() - 1);
    for (std::size_t j = 1; j <= j_hi; ++j) {
      if (fm[j] == 0.0) continue;
      double factor = pa + pb * static_cast<double>(j) / static_cast<double>(m);
      acc.add(factor * fm[j] * s[m - j]);
    }
    s[m] = acc.value() / denom;
  }
  KahanSum total;
  for (double v : s) total.add(v);
  double deficit = std::max(0.0, 1.0 - total.value());
  LatticeDistribution lattice(f.step(), 0, std::move(s), deficit);
  // no tau truncation; allow for recursion round-off growth
  double fp_allowance = 8.0 * static_cast<double>(len) *
                        std::numeric_limits<double>::epsilon();
  return CompoundResult{std::move(lattice), {}, fp_allowance,
                        CompoundMethod::Panjer};
}

// Exhaustive oracle: enumerates every outcome tuple of up to n_max summands
// drawn from at most 6 lattice atoms. Exact up to float summation.
inline CompoundResult brute_force_compound(const LatticeDistribution& f,
                                           const CountingDistribution& tau,
                                           long n_max) {
  if (n_max < 0 || n_max > 8) {
    throw PreconditionError("brute_force_compound: n_max must be in [0, 8]");
  }
  if (f.deficit() > 1e-12) {
    throw PreconditionError("brute_force_compound: summand law must be fully "
                            "represented (deficit <= 1e-12)");
  }
  std::vector<long> atom_idx;
  std::vector<double> atom_mass;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.mass_at(i) > 0.0) {
      atom_idx.push_back(f.origin_index() + static_cast<long>(i));
      atom_mass.push_back(f.mass_at(i));
    }
  }
  if (atom_idx.size() > 6) {
    throw PreconditionError("brute_force_compound: support size " +
                            std::to_string(atom_idx.size()) + " exceeds 6");
  }
  std::map<long, double> dist;
  std::vector<std::size_t> pick;
  // enumerate tuples of length n by an explicit odometer
  for (long n = 0; n <= n_max; ++n) {
    double w = tau.pmf(n);
    if (w == 0.0) continue;
    if (n == 0 || atom_idx.empty()) {
      if (n == 0) dist[0] += w;
      continue;
    }
    pick.assign(static_cast<std::size_t>(n), 0);
    for (;;) {
      long sum = 0;
      double prob = w;
      for (std::size_t d = 0; d < pick.size(); ++d) {
        sum += atom_idx[pick[d]];
        prob *= atom_mass[pick[d]];
      }
      dist[sum] += prob;
      std::size_t d = 0;
      while (d < pick.size() && ++pick[d] == atom_idx.size()) {
        pick[d] = 0;
        ++d;
      }
      if (d == pick.size()) break;
    }
  }
  long lo = dist.empty() ? 0 : dist.begin()->first;
  long hi = dist.empty() ? 0 : dist.rbegin()->first;
  std::vector<double> masses(static_cast<std::size_t>(hi - lo) + 1, 0.0);
  for (auto& [k, v] : dist) masses[static_cast<std::size_t>(k - lo)] = v;
  double tau_tail = tau.tail(n_max);
  LatticeDistribution lattice(f.step(), lo, std::move(masses), 0.0);
  return CompoundResult{std::move(lattice), tau.pmf_upto(n_max),
                        tau_tail + 1e-15, CompoundMethod::BruteForce};
}

// Union-bound floor: P{S_tau > x} >= sum_n P{tau=n} (1 - (1 - tail)^n),
// valid for nonnegative summands. `tail` is F-bar(x) of the summand law.
inline double compound_tail_lower_bound(const CountingDistribution& tau,
                                        double tail, long n_max) {
  KahanSum s;
  for (long n = 1; n <= n_max; ++n) {
    double w = tau.pmf(n);
    if (w > 0.0) s.add(w * -std::expm1(static_cast<double>(n) * std::log1p(-tail)));
  }
  return s.value();
}

}  // namespace stopsum
