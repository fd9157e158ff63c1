#pragma once

// Report assembly: the per-run convergence report, the acceptance verdict
// flags, and the csv/json writers. Writers are pure functions of the report,
// so a rerun from the same cache reproduces the artifacts byte for byte.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlelab/config.hpp"
#include "mlelab/diagnostics.hpp"
#include "mlelab/engine.hpp"

namespace mlelab {

struct VerdictItem {
  std::string name;
  bool applicable = false;
  bool pass = false;
  std::string detail;
};

struct SweepKl {
  std::int64_t n = 0;
  std::int64_t usable = 0;
  DivergenceEstimate kl;  // kNN estimate of D(Ztilde_n | Z) at the sweep epsilon
};

struct EpsSweepEntry {
  double epsilon = 0.0;
  std::vector<SweepKl> rows;
};

struct ConvergenceReport {
  std::string config_digest;
  Family family = Family::gaussian_location;
  double epsilon = 0.0;
  std::vector<CurveRow> rows;          // sorted by n ascending
  std::vector<DebruijnRow> debruijn;   // empty when epsilon == 0
  AuditRecord audit;
  double score_fd_max_rel = 0.0;       // worst finite-difference discrepancy, score and derivative
  std::vector<EpsSweepEntry> sweep;
  std::vector<VerdictItem> verdicts;

  bool all_applicable_pass() const {
    for (const VerdictItem& v : verdicts) {
      if (v.applicable && !v.pass) return false;
    }
    return true;
  }
};

namespace detail {

inline const DebruijnRow* find_debruijn(const std::vector<DebruijnRow>& rows, std::int64_t n) {
  for (const DebruijnRow& r : rows) {
    if (r.n == n) return &r;
  }
  return nullptr;
}

}  // namespace detail

// One flag per acceptance criterion; flags that need more than this run's rows
// (the estimator oracle grid, the two-run byte compare) stay not-applicable
// here and are exercised by the test suite instead.
inline std::vector<VerdictItem> compute_verdicts(const ConvergenceReport& r) {
  std::vector<VerdictItem> out;
  auto push = [&](std::string name, bool applicable, bool pass, std::string detail) {
    out.push_back({std::move(name), applicable, applicable && pass, std::move(detail)});
  };

  std::vector<const CurveRow*> live;
  for (const CurveRow& row : r.rows) {
    if (row.usable > 0) live.push_back(&row);
  }
  const CurveRow* last = live.empty() ? nullptr : live.back();

  // 1: exact-normal control calibrates variance, KL bias floor, and normality.
  {
    bool applicable = r.family == Family::gaussian_location && !live.empty();
    bool pass = true;
    std::string detail;
    for (const CurveRow* row : live) {
      if (!(std::abs(row->var_raw - 1.0) <= 0.02)) {
        pass = false;
        detail = "n=" + std::to_string(row->n) + " variance " + std::to_string(row->var_raw);
        break;
      }
      if (!row->raw_estimable || !(std::abs(row->kl_raw_knn.value) <= 0.02)) {
        pass = false;
        detail = "n=" + std::to_string(row->n) + " raw KL not within 0.02";
        break;
      }
      if (!(row->ad_a2_raw < 6.0)) {
        pass = false;
        detail = "n=" + std::to_string(row->n) + " A2 " + std::to_string(row->ad_a2_raw);
        break;
      }
    }
    push("control-calibration", applicable, pass,
         applicable ? detail : "control family only");
  }

  // 2: closed-form estimator oracle; needs synthetic draws, not run rows.
  push("oracle-grid", false, false, "estimator-level check; covered by the test suite");

  // 3: largest-n absolute moments against the normal targets, orders 1..4.
  {
    bool applicable = last != nullptr && last->has_moments;
    bool pass = true;
    std::string detail;
    if (applicable) {
      for (int m = 1; m <= 4; ++m) {
        const double v = last->moments.moments[m - 1].value;
        const double se = last->moments.moments[m - 1].std_err;
        const double t = last->moments.gaussian_targets[m - 1];
        if (!(std::abs(v - t) <= std::max(0.10 * t, 4.0 * se))) {
          pass = false;
          detail = "order " + std::to_string(m) + ": " + std::to_string(v) + " vs " +
                   std::to_string(t);
          break;
        }
      }
    }
    push("moment-convergence", applicable, pass, detail);
  }

  // 4: sub-Gaussian norm finite and flat across the n-grid.
  {
    std::vector<double> cs;
    for (const CurveRow* row : live) {
      if (row->has_fit) cs.push_back(row->fit.c_hat);
    }
    bool applicable = !cs.empty();
    bool pass = true;
    std::string detail;
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (!std::isfinite(cs[i])) {
        pass = false;
        detail = "non-finite C_hat";
        break;
      }
      lo = i == 0 ? cs[i] : std::min(lo, cs[i]);
      hi = i == 0 ? cs[i] : std::max(hi, cs[i]);
    }
    if (pass && applicable) {
      if (!(hi / lo <= 2.0)) {
        pass = false;
        detail = "ratio " + std::to_string(hi / lo);
      } else if (!(hi <= 3.0)) {
        pass = false;
        detail = "max " + std::to_string(hi);
      }
    }
    push("subgaussian-uniformity", applicable, pass, detail);
  }

  // 5: smoothed divergence decays along n and is small by n=1000.
  {
    bool applicable = r.epsilon > 0.0 && live.size() >= 2;
    bool pass = true;
    std::string detail;
    if (applicable) {
      for (std::size_t i = 1; i < live.size(); ++i) {
        const DivergenceEstimate& a = live[i - 1]->kl_smoothed_knn;
        const DivergenceEstimate& b = live[i]->kl_smoothed_knn;
        const double slack = 3.0 * std::sqrt(a.std_err * a.std_err + b.std_err * b.std_err);
        if (!(b.value <= a.value + slack)) {
          pass = false;
          detail = "increase at n=" + std::to_string(live[i]->n);
          break;
        }
      }
      if (pass && last->n >= 1000 && !(last->kl_smoothed_knn.value <= 0.05)) {
        pass = false;
        detail = "final value " + std::to_string(last->kl_smoothed_knn.value);
      }
    }
    push("entropic-decay", applicable, pass, detail);
  }

  // 6: unsmoothed divergence small at the final n, and the smoothing
  // inequality slack not significantly negative.
  {
    const DebruijnRow* gap = last ? detail::find_debruijn(r.debruijn, last->n) : nullptr;
    bool applicable = r.epsilon > 0.0 && last != nullptr && last->raw_estimable &&
                      gap != nullptr && gap->valid;
    bool pass = true;
    std::string detail;
    if (applicable) {
      if (last->n >= 1000 && !(last->kl_raw_knn.value <= 0.08)) {
        pass = false;
        detail = "raw KL " + std::to_string(last->kl_raw_knn.value);
      } else if (!(gap->slack >= -3.0 * gap->std_err)) {
        pass = false;
        detail = "slack " + std::to_string(gap->slack) + " se " + std::to_string(gap->std_err);
      }
    }
    push("unsmoothed-closure", applicable, pass, detail);
  }

  // 7: the density bound dominates the plugin KL on every estimable row.
  {
    bool applicable = false;
    bool pass = true;
    std::string detail;
    for (const CurveRow* row : live) {
      if (!row->has_fisher) continue;
      applicable = true;
      if (!(row->bobkov.total >= row->kl_raw_kde.value - 3.0 * row->kl_raw_kde.std_err)) {
        pass = false;
        detail = "n=" + std::to_string(row->n);
        break;
      }
    }
    push("kl-upper-bound", applicable, pass, detail);
  }

  // 8: envelope inequality plus finite-difference consistency of the scores.
  {
    bool pass = r.audit.envelope_ok && r.score_fd_max_rel <= 1e-6;
    std::string detail;
    if (!r.audit.envelope_ok) {
      detail = "score sup exceeds envelope";
    } else if (!(r.score_fd_max_rel <= 1e-6)) {
      detail = "fd discrepancy " + std::to_string(r.score_fd_max_rel);
    }
    push("assumption-audit", true, pass, detail);
  }

  // 9: byte-identical reruns across worker counts; needs two runs.
  push("determinism", false, false, "two-run byte compare; covered by the test suite");

  return out;
}

namespace detail {

inline void csv_num(std::ostream& os, double v) { os << format_double(v); }

}  // namespace detail

// Column set and order are frozen; callers parse positionally.
inline void write_report_csv(const ConvergenceReport& r, std::ostream& os) {
  os << "n,replicates,boundary_rate";
  for (int m = 1; m <= 8; ++m) os << ",m" << m;
  for (int m = 1; m <= 8; ++m) os << ",m_stderr" << m;
  os << ",C_hat,kl_smoothed,kl_smoothed_stderr,kl_raw,fisher_I,fisher_J,bobkov_total,"
        "debruijn_slack\n";
  for (const CurveRow& row : r.rows) {
    os << row.n << "," << row.usable << ",";
    if (row.usable == 0) {
      for (int i = 0; i < 24; ++i) os << "skip,";
      os << "skip\n";
      continue;
    }
    detail::csv_num(os, row.boundary_rate);
    for (int m = 1; m <= 8; ++m) {
      os << ",";
      if (row.has_moments) {
        detail::csv_num(os, row.moments.moments[m - 1].value);
      } else {
        os << "skip";
      }
    }
    for (int m = 1; m <= 8; ++m) {
      os << ",";
      if (row.has_moments) {
        detail::csv_num(os, row.moments.moments[m - 1].std_err);
      } else {
        os << "skip";
      }
    }
    os << ",";
    if (row.has_fit) {
      detail::csv_num(os, row.fit.c_hat);
    } else {
      os << "skip";
    }
    os << ",";
    detail::csv_num(os, row.kl_smoothed_knn.value);
    os << ",";
    detail::csv_num(os, row.kl_smoothed_knn.std_err);
    os << ",";
    if (row.raw_estimable) {
      detail::csv_num(os, row.kl_raw_knn.value);
    } else {
      os << "skip";
    }
    os << ",";
    if (row.has_fisher) {
      detail::csv_num(os, row.fisher.info);
      os << ",";
      detail::csv_num(os, row.fisher.standardized_j);
    } else {
      os << "skip,skip";
    }
    os << ",";
    if (row.raw_estimable) {
      detail::csv_num(os, row.bobkov.total);
    } else {
      os << "skip";
    }
    os << ",";
    const DebruijnRow* gap = detail::find_debruijn(r.debruijn, row.n);
    if (gap != nullptr && gap->valid) {
      detail::csv_num(os, gap->slack);
    } else {
      os << "skip";
    }
    os << "\n";
  }
}

namespace detail {

inline nlohmann::json div_json(const DivergenceEstimate& d) {
  return {{"value", d.value},
          {"stderr", d.std_err},
          {"method", d.method == DivMethod::KnnEntropy
                         ? "knn"
                         : (d.method == DivMethod::KdePlugin ? "kde" : "closed_form")},
          {"sample_count", d.sample_count},
          {"jittered", d.jittered}};
}

}  // namespace detail

inline nlohmann::json report_json(const ConvergenceReport& r) {
  nlohmann::json j;
  j["config_digest"] = r.config_digest;
  j["family"] = family_name(r.family);
  j["epsilon"] = r.epsilon;

  nlohmann::json rows = nlohmann::json::array();
  for (const CurveRow& row : r.rows) {
    nlohmann::json rj;
    rj["n"] = row.n;
    rj["usable"] = row.usable;
    rj["boundary_rate"] = row.boundary_rate;
    rj["var_raw"] = row.var_raw;
    rj["ad_a2_raw"] = row.ad_a2_raw;
    if (row.has_moments) {
      nlohmann::json mj;
      for (int m = 0; m < 8; ++m) {
        mj["values"].push_back(row.moments.moments[m].value);
        mj["stderrs"].push_back(row.moments.moments[m].std_err);
        mj["targets"].push_back(row.moments.gaussian_targets[m]);
      }
      rj["moments"] = mj;
    } else {
      rj["moments"] = nullptr;
    }
    if (row.has_fit) {
      nlohmann::json fj;
      fj["c_hat"] = row.fit.c_hat;
      fj["tail"] = nlohmann::json::array();
      for (const TailRatioPoint& p : row.fit.tail_ratio_curve) {
        fj["tail"].push_back({{"t", p.t}, {"ratio", p.ratio}, {"exceed_count", p.exceed_count}});
      }
      rj["subgaussian"] = fj;
    } else {
      rj["subgaussian"] = nullptr;
    }
    rj["kl_smoothed"] = {{"knn", detail::div_json(row.kl_smoothed_knn)},
                         {"kde", detail::div_json(row.kl_smoothed_kde)}};
    if (row.raw_estimable) {
      rj["kl_raw"] = {{"knn", detail::div_json(row.kl_raw_knn)},
                      {"kde", detail::div_json(row.kl_raw_kde)}};
    } else {
      rj["kl_raw"] = nullptr;
    }
    if (row.has_fisher) {
      rj["fisher"] = {{"info", row.fisher.info},
                      {"standardized_j", row.fisher.standardized_j},
                      {"variance", row.fisher.variance},
                      {"info_clip_lo", row.fisher_clip_lo},
                      {"info_clip_hi", row.fisher_clip_hi},
                      {"max_abs_dpdf", row.max_abs_dpdf}};
      rj["bobkov"] = {{"T", row.bobkov.T},
                      {"term_exp", row.bobkov.term_exp},
                      {"term_central", row.bobkov.term_central},
                      {"term_tail_second_moment", row.bobkov.term_tail_second_moment},
                      {"term_tail_entropy", row.bobkov.term_tail_entropy},
                      {"total", row.bobkov.total}};
    } else {
      rj["fisher"] = nullptr;
      rj["bobkov"] = nullptr;
    }
    rows.push_back(rj);
  }
  j["rows"] = rows;

  nlohmann::json gaps = nlohmann::json::array();
  for (const DebruijnRow& g : r.debruijn) {
    gaps.push_back({{"n", g.n}, {"valid", g.valid}, {"slack", g.slack}, {"stderr", g.std_err}});
  }
  j["debruijn"] = gaps;

  nlohmann::json audit;
  audit["envelope_unbounded"] = r.audit.envelope_unbounded;
  audit["envelope_bound"] = r.audit.envelope_bound;
  audit["score_sup"] = r.audit.score_sup;
  audit["envelope_ok"] = r.audit.envelope_ok;
  audit["subexp_norm"] = r.audit.subexp_norm;
  audit["fisher_rows"] = nlohmann::json::array();
  for (const AuditFisherRow& f : r.audit.fisher_rows) {
    audit["fisher_rows"].push_back({{"n", f.n},
                                    {"used_smoothed", f.used_smoothed},
                                    {"info", f.info},
                                    {"info_clip_lo", f.info_clip_lo},
                                    {"info_clip_hi", f.info_clip_hi},
                                    {"max_abs_dpdf", f.max_abs_dpdf}});
  }
  j["audit"] = audit;
  j["score_fd_max_rel"] = r.score_fd_max_rel;

  nlohmann::json sweep = nlohmann::json::array();
  for (const EpsSweepEntry& e : r.sweep) {
    nlohmann::json ej;
    ej["epsilon"] = e.epsilon;
    ej["rows"] = nlohmann::json::array();
    for (const SweepKl& s : e.rows) {
      ej["rows"].push_back(
          {{"n", s.n}, {"usable", s.usable}, {"kl_smoothed", detail::div_json(s.kl)}});
    }
    sweep.push_back(ej);
  }
  j["epsilon_sweep"] = sweep;

  nlohmann::json verdicts = nlohmann::json::array();
  for (const VerdictItem& v : r.verdicts) {
    verdicts.push_back(
        {{"name", v.name}, {"applicable", v.applicable}, {"pass", v.pass}, {"detail", v.detail}});
  }
  j["verdicts"] = verdicts;
  return j;
}

inline void print_verdicts(const ConvergenceReport& r, std::ostream& os) {
  for (const VerdictItem& v : r.verdicts) {
    const char* tag = !v.applicable ? "[ n/a]" : (v.pass ? "[PASS]" : "[FAIL]");
    os << tag << " " << v.name;
    if (!v.detail.empty()) os << "  (" << v.detail << ")";
    os << "\n";
  }
}

inline void print_summary(const ConvergenceReport& r, std::ostream& os) {
  os << "family " << family_name(r.family) << "  epsilon " << r.epsilon << "  digest "
     << r.config_digest << "\n";
  os << std::left << std::setw(8) << "n" << std::setw(10) << "usable" << std::setw(10) << "bdry"
     << std::setw(12) << "var" << std::setw(22) << "kl_smoothed" << std::setw(12) << "kl_raw"
     << std::setw(10) << "C_hat" << "\n";
  std::ostringstream cell;
  for (const CurveRow& row : r.rows) {
    os << std::left << std::setw(8) << row.n << std::setw(10) << row.usable;
    if (row.usable == 0) {
      os << "(no usable replicates)\n";
      continue;
    }
    cell.str("");
    cell << std::setprecision(4) << row.boundary_rate;
    os << std::setw(10) << cell.str();
    cell.str("");
    cell << std::setprecision(5) << row.var_raw;
    os << std::setw(12) << cell.str();
    cell.str("");
    cell << std::setprecision(4) << row.kl_smoothed_knn.value << " +- " << std::setprecision(2)
         << row.kl_smoothed_knn.std_err;
    os << std::setw(22) << cell.str();
    cell.str("");
    if (row.raw_estimable) {
      cell << std::setprecision(4) << row.kl_raw_knn.value;
    } else {
      cell << "skip";
    }
    os << std::setw(12) << cell.str();
    cell.str("");
    if (row.has_fit) {
      cell << std::setprecision(4) << row.fit.c_hat;
    } else {
      cell << "skip";
    }
    os << std::setw(10) << cell.str() << "\n";
  }
  print_verdicts(r, os);
}

}  // namespace mlelab
