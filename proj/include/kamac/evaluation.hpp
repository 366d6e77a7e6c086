#pragma once
// Metrics, usage summaries, expert-distribution reports, and small-sample
// significance testing.

#include <map>
#include <string>
#include <vector>

#include "kamac/core.hpp"

namespace kamac {

struct ClassCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

struct ConfusionCounts {
  std::map<std::string, ClassCounts> per_class;  // one-vs-rest
  long n_cases = 0;
  long n_correct = 0;
};

// One-vs-rest counting. Abstentions (kAbstainLabel or empty) are wrong for
// every class: fn for the gold class, tn elsewhere. Throws InputError when
// the case_id sets differ.
ConfusionCounts confusion(const std::vector<std::pair<std::string, std::string>>& preds,
                          const std::vector<std::pair<std::string, std::string>>& golds);

enum class AveragingMode { binary, macro_avg };

// Percentages in [0,100], computed at full precision, reported at 2 decimals.
struct MetricRow {
  double acc = 0, prec = 0, spec = 0, recall = 0, avg = 0;
  bool divzero_flag = false;  // some denominator was zero and yielded 0
};

// binary: metrics of the positive class; macro: unweighted per-class means
// with pooled accuracy. Division by zero yields 0 with the flag set.
MetricRow metrics(const ConfusionCounts& counts, AveragingMode mode,
                  const std::string& positive_label = "");

double metric_average(double acc, double prec, double spec, double recall);

// --- significance ------------------------------------------------------------

enum class TTestVariant { one_sample_vs_fixed, two_sample_pooled };

struct TTestResult {
  double mean_a = 0;
  double std_a = 0;  // sample std (n-1 denominator)
  double t_stat = 0;
  double p_value = 1;
  int df = 1;
  TTestVariant variant = TTestVariant::one_sample_vs_fixed;
  bool zero_variance = false;
};

// t = (mean - baseline) * sqrt(n) / std, df = n-1. Throws InputError for n<2.
TTestResult t_test_one_sample(const std::vector<double>& samples, double baseline);

// Classical pooled-variance statistic, df = n1+n2-2.
TTestResult t_test_two_sample(const std::vector<double>& a, const std::vector<double>& b);

// Two-tailed p for the Student t distribution via the regularized
// incomplete beta function (continued fraction, abs accuracy <= 1e-10).
double student_t_two_tailed_p(double t, double df);
double regularized_incomplete_beta(double a, double b, double x);

std::string significance_stars(double p);  // "", "*", "**", "***"

// --- expert distribution -----------------------------------------------------

struct HistogramEntry {
  std::string role;  // normalized
  long count = 0;
};

// Counts over normalized roles, descending by count, ties lexicographic.
std::vector<HistogramEntry> expert_histogram(
    const std::vector<std::vector<RosterEvent>>& timelines);

// |top-k(a) intersect top-k(b)| / k. When k exceeds the available distinct
// roles the overlap is taken over the available set and *truncated is set.
double topk_overlap(const std::vector<HistogramEntry>& a,
                    const std::vector<HistogramEntry>& b, int k,
                    bool* truncated = nullptr);

}  // namespace kamac
