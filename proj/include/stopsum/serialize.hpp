#pragma once

// JSON schemas (strict: unknown fields are rejected) for distribution and
// experiment configs, JSON emission for reports and certificates, and the
// deterministic CSV writers. Doubles are printed with %.17g so runs of the
// same build are byte-identical.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stopsum/compound.hpp"
#include "stopsum/constructions.hpp"
#include "stopsum/distributions.hpp"
#include "stopsum/evidence.hpp"
#include "stopsum/limits.hpp"
#include "stopsum/piecewise.hpp"
#include "stopsum/tilting.hpp"

namespace stopsum {

using json = nlohmann::json;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void require_keys(const json& j,
                         std::initializer_list<const char*> allowed,
                         const std::string& what) {
  if (!j.is_object()) throw PreconditionError(what + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw PreconditionError(what + ": unknown field '" + it.key() + "'");
    }
  }
}

inline double require_number(const json& j, const char* key,
                             const std::string& what) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw PreconditionError(what + ": missing numeric field '" + key + "'");
  }
  return j.at(key).get<double>();
}

// ---------------------------------------------------------------------------
// distributions

inline AnalyticDistribution distribution_from_json(const json& j) {
  const std::string what = "distribution";
  if (!j.contains("family")) {
    throw PreconditionError(what + ": missing 'family'");
  }
  std::string fam = j.at("family").get<std::string>();
  if (fam == "pareto") {
    require_keys(j, {"family", "alpha"}, what);
    return AnalyticDistribution::pareto(require_number(j, "alpha", what));
  }
  if (fam == "weibull") {
    require_keys(j, {"family", "beta"}, what);
    return AnalyticDistribution::weibull(require_number(j, "beta", what));
  }
  if (fam == "lognormal") {
    require_keys(j, {"family", "mu", "sigma"}, what);
    return AnalyticDistribution::lognormal(require_number(j, "mu", what),
                                           require_number(j, "sigma", what));
  }
  if (fam == "exponential") {
    require_keys(j, {"family", "rate"}, what);
    return AnalyticDistribution::exponential(require_number(j, "rate", what));
  }
  if (fam == "exp_polynomial") {
    require_keys(j, {"family", "rate", "power"}, what);
    return make_exp_polynomial(require_number(j, "rate", what),
                               require_number(j, "power", what));
  }
  if (fam == "point_mass_mix") {
    require_keys(j, {"family", "values", "probs"}, what);
    return AnalyticDistribution::point_mass_mix(
        j.at("values").get<std::vector<double>>(),
        j.at("probs").get<std::vector<double>>());
  }
  if (fam == "size_biased") {
    require_keys(j, {"family", "base"}, what);
    return distribution_from_json(j.at("base")).size_biased();
  }
  throw PreconditionError(what + ": unknown family '" + fam + "'");
}

inline json distribution_to_json(const AnalyticDistribution& d) {
  json j;
  j["family"] = family_name(d.family());
  switch (d.family()) {
    case Family::Pareto: j["alpha"] = d.param_a(); break;
    case Family::Weibull: j["beta"] = d.param_a(); break;
    case Family::Lognormal:
      j["mu"] = d.param_a();
      j["sigma"] = d.param_b();
      break;
    case Family::Exponential: j["rate"] = d.param_a(); break;
    case Family::ExpPolynomial:
      j["rate"] = d.param_a();
      j["power"] = d.param_b();
      break;
    case Family::PointMassMix:
      j["values"] = d.atom_values();
      j["probs"] = d.atom_probs();
      break;
    case Family::SizeBiased:
      j["base"] = distribution_to_json(*d.base());
      break;
  }
  return j;
}

inline CountingDistribution counting_from_json(const json& j) {
  const std::string what = "tau";
  if (!j.contains("family")) throw PreconditionError(what + ": missing 'family'");
  std::string fam = j.at("family").get<std::string>();
  if (fam == "geometric") {
    require_keys(j, {"family", "p"}, what);
    return CountingDistribution::geometric(require_number(j, "p", what));
  }
  if (fam == "poisson") {
    require_keys(j, {"family", "lambda"}, what);
    return CountingDistribution::poisson(require_number(j, "lambda", what));
  }
  if (fam == "weibull_count") {
    require_keys(j, {"family", "beta"}, what);
    return CountingDistribution::weibull_count(require_number(j, "beta", what));
  }
  if (fam == "deterministic") {
    require_keys(j, {"family", "n"}, what);
    return CountingDistribution::deterministic(
        static_cast<long>(require_number(j, "n", what)));
  }
  if (fam == "explicit") {
    require_keys(j, {"family", "pmf", "remainder"}, what);
    double rem = j.contains("remainder") ? j.at("remainder").get<double>() : 0.0;
    return CountingDistribution::explicit_pmf(
        j.at("pmf").get<std::vector<double>>(), rem);
  }
  if (fam == "power_tail") {
    // P{tau > n} = (n+1)^{-alpha} enumerated to `depth`; the truncated
    // remainder stays recorded on the law
    require_keys(j, {"family", "alpha", "depth"}, what);
    double alpha = require_number(j, "alpha", what);
    long depth = static_cast<long>(require_number(j, "depth", what));
    return CountingDistribution::from_tail(
        [alpha](long n) {
          return std::pow(static_cast<double>(n) + 1.0, -alpha);
        },
        depth);
  }
  throw PreconditionError(what + ": unknown family '" + fam + "'");
}

inline json counting_to_json(const CountingDistribution& t) {
  json j;
  j["family"] = counting_kind_name(t.kind());
  switch (t.kind()) {
    case CountingKind::Geometric: j["p"] = t.param(); break;
    case CountingKind::Poisson: j["lambda"] = t.param(); break;
    case CountingKind::WeibullCount: j["beta"] = t.param(); break;
    case CountingKind::Deterministic: j["n"] = t.deterministic_value(); break;
    case CountingKind::Explicit:
      j["pmf"] = t.explicit_masses();
      j["remainder"] = t.remainder();
      break;
  }
  return j;
}

// ---------------------------------------------------------------------------
// piecewise functions and certificates

inline json piecewise_to_json(const PiecewiseLinear& p) {
  json j;
  j["knots"] = p.knots();
  j["values"] = p.values();
  j["slopes"] = p.slopes();
  j["final_slope"] = p.final_slope();
  j["shape"] = shape_name(p.shape());
  if (!p.aux().empty()) {
    j["aux"] = {{"name", p.aux_name()}, {"values", p.aux()}};
  }
  return j;
}

inline PiecewiseLinear piecewise_from_json(const json& j) {
  require_keys(j, {"knots", "values", "slopes", "final_slope", "shape", "aux"},
               "piecewise");
  std::string sh = j.at("shape").get<std::string>();
  Shape shape = sh == "concave" ? Shape::Concave
                : sh == "convex" ? Shape::Convex
                                 : Shape::Linear;
  PiecewiseLinear p(j.at("knots").get<std::vector<double>>(),
                    j.at("values").get<std::vector<double>>(),
                    j.at("final_slope").get<double>(), shape);
  if (j.contains("aux")) {
    p.set_aux(j.at("aux").at("name").get<std::string>(),
              j.at("aux").at("values").get<std::vector<double>>());
  }
  return p;
}

inline json evidence_to_json(const TailEvidence& e) {
  json j;
  j["verdict"] = evidence_verdict_name(e.verdict);
  j["truncations"] = e.truncations;
  j["partials"] = e.partials;
  if (!std::isnan(e.bound)) j["bound"] = e.bound;
  j["note"] = e.note;
  return j;
}

inline json certificate_to_json(const ConstructionCertificate& c) {
  json j;
  j["residuals"] = c.residuals;
  j["residual_tol"] = c.residual_tol;
  json flags = json::array();
  for (const auto& f : c.flags) {
    json fj;
    fj["name"] = f.name;
    fj["pass"] = f.pass;
    if (!std::isnan(f.value)) fj["value"] = f.value;
    if (!std::isnan(f.threshold)) fj["threshold"] = f.threshold;
    flags.push_back(fj);
  }
  j["flags"] = flags;
  j["stage_contributions"] = c.stage_contributions;
  if (!std::isnan(c.contribution_floor)) {
    j["contribution_floor"] = c.contribution_floor;
  }
  if (!c.finiteness.partials.empty()) {
    j["finiteness"] = evidence_to_json(c.finiteness);
  }
  if (!c.divergence.partials.empty()) {
    j["divergence"] = evidence_to_json(c.divergence);
  }
  j["partial"] = c.partial;
  j["pass"] = c.pass();
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

inline json trend_to_json(const TrendCurve& t) {
  json j;
  j["verdict_positive"] = t.verdict_positive;
  j["first_quartile_min"] = t.first_quartile_min;
  j["last_quartile_max"] = t.last_quartile_max;
  j["clipped"] = t.clipped;
  j["rule"] = t.rule;
  if (!t.note.empty()) j["note"] = t.note;
  j["points"] = t.x.size();
  return j;
}

inline json tilt_report_to_json(const TiltIdentityReport& r) {
  json j;
  j["per_n_max_abs"] = r.per_n_max_abs;
  j["per_n_max_rel"] = r.per_n_max_rel;
  j["mixture_max_abs"] = r.mixture_max_abs;
  j["mixture_max_rel"] = r.mixture_max_rel;
  j["max_abs"] = r.max_abs;
  j["max_rel"] = r.max_rel;
  j["mass_floor"] = r.mass_floor;
  return j;
}

// ---------------------------------------------------------------------------
// CSV writers

inline void write_csv(const std::string& path, const std::string& header,
                      const std::vector<std::vector<double>>& columns) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << header << "\n";
  std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out << ",";
      out << format_double(columns[c][r]);
    }
    out << "\n";
  }
}

inline void write_ratio_csv(const std::string& path, const RatioCurve& curve) {
  std::vector<double> predicted(curve.x.size(),
                                curve.predicted_infinite ? kPosInf
                                                         : curve.predicted);
  std::vector<double> log10x, log10r;
  log10x.reserve(curve.x.size());
  log10r.reserve(curve.x.size());
  for (std::size_t i = 0; i < curve.x.size(); ++i) {
    log10x.push_back(std::log10(curve.x[i]));
    log10r.push_back(std::log10(curve.ratio[i]));
  }
  write_csv(path, "x,ratio,running_inf,predicted,union_floor,log10_x,log10_ratio",
            {curve.x, curve.ratio, curve.running_inf, predicted,
             curve.union_floor, log10x, log10r});
}

inline void write_trend_csv(const std::string& path, const TrendCurve& t) {
  write_csv(path, "x,ratio", {t.x, t.ratio});
}

inline void write_compound_csv(const std::string& path,
                               const CompoundResult& comp) {
  std::vector<double> xs, masses, log_tails;
  for (std::size_t i = 0; i < comp.lattice.size(); ++i) {
    xs.push_back(comp.lattice.x_at(i));
    masses.push_back(comp.lattice.mass_at(i));
    log_tails.push_back(comp.lattice.log_tails()[i]);
  }
  write_csv(path, "x,mass,log_tail", {xs, masses, log_tails});
}

inline json compound_meta_to_json(const CompoundResult& comp) {
  json j;
  j["method"] = compound_method_name(comp.method);
  j["truncation_error_bound"] = comp.truncation_error_bound;
  j["deficit"] = comp.lattice.deficit();
  j["step"] = comp.lattice.step();
  j["points"] = comp.lattice.size();
  return j;
}

}  // namespace stopsum
