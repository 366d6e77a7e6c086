#include "kamac/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace kamac {

namespace {

bool is_abstention(const std::string& label) {
  return label.empty() || label == kAbstainLabel;
}

}  // namespace

ConfusionCounts confusion(const std::vector<std::pair<std::string, std::string>>& preds,
                          const std::vector<std::pair<std::string, std::string>>& golds) {
  std::map<std::string, std::string> gold_by_id;
  for (const auto& [id, label] : golds) gold_by_id[id] = label;
  if (gold_by_id.size() != golds.size())
    throw InputError("confusion: duplicate case ids in golds");
  if (preds.size() != golds.size())
    throw InputError("confusion: prediction/gold case count mismatch");

  std::set<std::string> classes;
  for (const auto& [id, label] : golds) classes.insert(label);
  for (const auto& [id, label] : preds) {
    if (!gold_by_id.count(id)) throw InputError("confusion: unknown case id " + id);
    if (!is_abstention(label)) classes.insert(label);
  }

  ConfusionCounts out;
  out.n_cases = static_cast<long>(golds.size());
  for (const auto& c : classes) out.per_class[c] = {};
  for (const auto& [id, pred] : preds) {
    const std::string& gold = gold_by_id.at(id);
    if (pred == gold) ++out.n_correct;
    for (const auto& c : classes) {
      auto& cc = out.per_class[c];
      const bool pred_c = !is_abstention(pred) && pred == c;
      const bool gold_c = gold == c;
      if (pred_c && gold_c) ++cc.tp;
      else if (pred_c && !gold_c) ++cc.fp;
      else if (!pred_c && gold_c) ++cc.fn;
      else ++cc.tn;
    }
  }
  return out;
}

MetricRow metrics(const ConfusionCounts& counts, AveragingMode mode,
                  const std::string& positive_label) {
  MetricRow row;
  auto ratio = [&](double num, double den) {
    if (den == 0) {
      row.divzero_flag = true;
      return 0.0;
    }
    return num / den;
  };

  if (counts.n_cases == 0) {
    row.divzero_flag = true;
    return row;
  }

  if (mode == AveragingMode::binary) {
    auto it = counts.per_class.find(positive_label);
    if (it == counts.per_class.end())
      throw InputError("metrics: positive label '" + positive_label + "' not present");
    const ClassCounts& c = it->second;
    row.acc = 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(counts.n_cases);
    row.prec = 100.0 * ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    row.recall = 100.0 * ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    row.spec = 100.0 * ratio(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
  } else {
    row.acc = 100.0 * static_cast<double>(counts.n_correct) /
              static_cast<double>(counts.n_cases);
    double prec = 0, rec = 0, spec = 0;
    for (const auto& [label, c] : counts.per_class) {
      prec += ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
      rec += ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
      spec += ratio(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
    }
    const double k = static_cast<double>(counts.per_class.size());
    row.prec = 100.0 * prec / k;
    row.recall = 100.0 * rec / k;
    row.spec = 100.0 * spec / k;
  }
  row.avg = metric_average(row.acc, row.prec, row.spec, row.recall);
  return row;
}

double metric_average(double acc, double prec, double spec, double recall) {
  return (acc + prec + spec + recall) / 4.0;
}

// --- significance ------------------------------------------------------------

namespace {

// Continued fraction for the incomplete beta function (Lentz's method).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double sample_mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  // Symmetry relation keeps the continued fraction in its fast-converging
  // region.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_tailed_p(double t, double df) {
  if (df < 1) throw InputError("student_t_two_tailed_p: df must be >= 1");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return regularized_incomplete_beta(df / 2.0, 0.5, x);
}

TTestResult t_test_one_sample(const std::vector<double>& samples, double baseline) {
  if (samples.size() < 2) throw InputError("t_test: need at least 2 samples");
  TTestResult r;
  r.variant = TTestVariant::one_sample_vs_fixed;
  const double n = static_cast<double>(samples.size());
  r.mean_a = sample_mean(samples);
  r.std_a = sample_std(samples, r.mean_a);
  r.df = static_cast<int>(samples.size()) - 1;
  if (r.std_a == 0.0) {
    r.zero_variance = true;
    r.t_stat = r.mean_a > baseline ? std::numeric_limits<double>::infinity()
              : r.mean_a < baseline ? -std::numeric_limits<double>::infinity()
                                    : 0.0;
    r.p_value = r.mean_a == baseline ? 1.0 : 0.0;
    return r;
  }
  r.t_stat = (r.mean_a - baseline) * std::sqrt(n) / r.std_a;
  r.p_value = student_t_two_tailed_p(r.t_stat, static_cast<double>(r.df));
  return r;
}

TTestResult t_test_two_sample(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw InputError("t_test: need at least 2 samples per side");
  TTestResult r;
  r.variant = TTestVariant::two_sample_pooled;
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  r.mean_a = sample_mean(a);
  r.std_a = sample_std(a, r.mean_a);
  const double mean_b = sample_mean(b);
  const double std_b = sample_std(b, mean_b);
  r.df = static_cast<int>(a.size() + b.size()) - 2;
  const double pooled_var =
      ((n1 - 1.0) * r.std_a * r.std_a + (n2 - 1.0) * std_b * std_b) /
      static_cast<double>(r.df);
  const double se = std::sqrt(pooled_var * (1.0 / n1 + 1.0 / n2));
  if (se == 0.0) {
    r.zero_variance = true;
    r.t_stat = r.mean_a > mean_b ? std::numeric_limits<double>::infinity()
              : r.mean_a < mean_b ? -std::numeric_limits<double>::infinity()
                                  : 0.0;
    r.p_value = r.mean_a == mean_b ? 1.0 : 0.0;
    return r;
  }
  r.t_stat = (r.mean_a - mean_b) / se;
  r.p_value = student_t_two_tailed_p(r.t_stat, static_cast<double>(r.df));
  return r;
}

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

// --- expert distribution -----------------------------------------------------

std::vector<HistogramEntry> expert_histogram(
    const std::vector<std::vector<RosterEvent>>& timelines) {
  std::map<std::string, long> counts;
  for (const auto& timeline : timelines)
    for (const auto& event : timeline)
      for (const auto& role : event.roles) ++counts[normalize_role(role)];
  std::vector<HistogramEntry> out;
  out.reserve(counts.size());
  for (const auto& [role, count] : counts) out.push_back({role, count});
  std::sort(out.begin(), out.end(), [](const HistogramEntry& a, const HistogramEntry& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.role < b.role;
  });
  return out;
}

double topk_overlap(const std::vector<HistogramEntry>& a,
                    const std::vector<HistogramEntry>& b, int k, bool* truncated) {
  if (k < 1) throw InputError("topk_overlap: k must be >= 1");
  const int avail =
      static_cast<int>(std::min(a.size(), b.size()));
  int effective_k = std::min(k, avail);
  if (truncated) *truncated = effective_k < k;
  if (effective_k == 0) return 0.0;
  std::set<std::string> top_a, top_b;
  for (int i = 0; i < effective_k; ++i) top_a.insert(a[static_cast<size_t>(i)].role);
  for (int i = 0; i < effective_k; ++i) top_b.insert(b[static_cast<size_t>(i)].role);
  long common = 0;
  for (const auto& role : top_a)
    if (top_b.count(role)) ++common;
  return static_cast<double>(common) / static_cast<double>(effective_k);
}

}  // namespace kamac
