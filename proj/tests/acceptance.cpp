// Acceptance checks: one pass/fail line per criterion, nonzero exit on any
// failure. Criterion 7 shells out to the CLI binary given as argv[1].

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "kamac/datasets.hpp"
#include "kamac/evaluation.hpp"
#include "kamac/gateway.hpp"
#include "kamac/orchestrator.hpp"
#include "kamac/parsing.hpp"

namespace fs = std::filesystem;
using namespace kamac;

namespace {

int failures = 0;

void report(int criterion, const std::string& what, bool ok,
            const std::string& detail = "") {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << criterion << ": " << what;
  if (!ok && !detail.empty()) std::cout << " (" << detail << ")";
  std::cout << "\n";
  if (!ok) ++failures;
}

CaseRecord make_case(const std::string& id = "case-1") {
  CaseRecord c;
  c.case_id = id;
  c.stem = "A 4-year-old presents with fever and rash. What is the most likely diagnosis?";
  c.options = {{"A", "Measles"}, {"B", "Rubella"}, {"C", "Scarlet fever"}, {"D", "Roseola"}};
  c.gold_label = "A";
  return c;
}

// --- criterion 1: average-column arithmetic ----------------------------------

void check_avg_rows() {
  struct Row {
    double acc, prec, spec, recall, avg;
  };
  const std::vector<Row> rows = {
      {79.50, 79.65, 94.86, 79.36, 83.34}, {86.00, 86.28, 14.79, 97.21, 71.07},
      {84.21, 84.82, 96.03, 84.02, 87.27}, {84.67, 86.29, 15.52, 97.32, 70.95},
      {86.49, 86.93, 96.60, 86.38, 89.10}, {86.27, 86.12, 12.17, 99.84, 71.10},
      {80.68, 80.70, 95.15, 80.59, 84.28}, {86.86, 86.81, 31.85, 98.86, 76.09},
      {87.74, 87.92, 96.92, 87.55, 90.03}, {87.01, 88.83, 33.70, 96.21, 76.44},
      {88.14, 88.30, 97.02, 88.11, 90.39}, {87.20, 89.79, 40.52, 95.74, 78.31},
  };
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const double got = metric_average(r.acc, r.prec, r.spec, r.recall);
    if (std::fabs(got - r.avg) > 0.01 + 1e-12) {
      ok = false;
      detail = "expected " + std::to_string(r.avg) + ", got " + std::to_string(got);
    }
  }
  report(1, "average column matches all reference rows within 0.01", ok, detail);
}

// --- criterion 2: significance mapping ---------------------------------------

double t_density(double x, double df) {
  const double c = std::exp(std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0)) /
                   std::sqrt(df * M_PI);
  return c * std::pow(1.0 + x * x / df, -(df + 1.0) / 2.0);
}

double oracle_p(double t, double df) {
  const double a = std::fabs(t);
  auto g = [&](double u) {
    const double one_minus = 1.0 - u;
    return t_density(a + u / one_minus, df) / (one_minus * one_minus);
  };
  const int n = 400000;
  const double h = (1.0 - 1e-12) / n;
  double s = g(0.0) + g(1.0 - 1e-12);
  for (int i = 1; i < n; ++i) s += g(i * h) * (i % 2 ? 4.0 : 2.0);
  return 2.0 * s * h / 3.0;
}

void check_significance() {
  const std::vector<std::pair<double, double>> pairs = {
      {30.07, 0.0011}, {6.92, 0.0202}, {14.02, 0.0051}, {12.26, 0.0066}};
  bool ok = true;
  std::string detail;
  for (const auto& [t, p] : pairs) {
    const double got = student_t_two_tailed_p(t, 2);
    if (std::fabs(got - p) > 1e-4) {
      ok = false;
      detail = "t=" + std::to_string(t) + " -> " + std::to_string(got);
    }
  }
  for (double df : {1.0, 2.0, 5.0, 12.0}) {
    for (double t : {0.8, 2.2, 6.92, 14.02}) {
      const double got = student_t_two_tailed_p(t, df);
      const double want = oracle_p(t, df);
      if (std::fabs(got - want) > 1e-8) {
        ok = false;
        detail = "oracle mismatch at t=" + std::to_string(t) +
                 ", df=" + std::to_string(df);
      }
    }
  }
  report(2, "t->p mapping matches reference pairs and quadrature oracle", ok, detail);
}

// --- criterion 3: scripted end-to-end scenario -------------------------------

ScriptEntry entry(std::optional<Phase> phase, std::optional<int> round,
                  std::optional<std::string> role, std::string content, int times = 1) {
  return {phase, round, std::move(role), std::move(content), times, 0};
}

void check_scenario_s1() {
  ScriptedBackend backend({
      entry(Phase::recruit_initial, std::nullopt, std::nullopt,
            "1. Internist - A physician specializing in internal medicine. - "
            "Hierarchy: Independent"),
      entry(Phase::assess, 0, "Internist", "Likely measles.\nAnswer: (A)"),
      entry(Phase::interact, 1, "Internist", "Yes, I would like to discuss further."),
      entry(Phase::kg_detect, 1, "Internist",
            "Yes. A Cardiologist is needed to evaluate cardiac involvement."),
      entry(Phase::recruit_more, 1, std::nullopt,
            "1. Cardiologist - Heart specialist. - Hierarchy: Independent\n"
            "2. Pathologist - Tissue specialist. - Hierarchy: Independent"),
      entry(Phase::assess, 1, "Cardiologist", "Agree with measles.\nAnswer: (A)"),
      entry(Phase::assess, 1, "Pathologist", "I suspect rubella.\nAnswer: (B)"),
      entry(Phase::interact, 1, "Cardiologist", "Yes, more discussion please."),
      entry(Phase::interact, 1, "Pathologist", "Yes, more discussion please."),
      entry(Phase::update, 1, std::nullopt, "Answer: (A)", 2),
      entry(Phase::update, 1, "Pathologist", "Answer: (B)"),
      entry(Phase::interact, 2, std::nullopt, "No, nothing further.", 3),
      entry(Phase::kg_detect, 2, std::nullopt, "No.", 3),
      entry(Phase::update, 2, std::nullopt, "Answer: (A)", 2),
      entry(Phase::update, 2, "Pathologist", "Answer: (B)"),
      entry(Phase::moderate, std::nullopt, std::nullopt, "Answer: (A)"),
  });
  RunConfig config;
  auto r = run_case(make_case(), config, backend);
  const bool ok = !r.failed && r.ledger.expert_count == 3 && r.rounds_used == 2 &&
                  r.ledger.backend_calls == 22 && r.verdict.label == "A" &&
                  r.ledger.backend_calls <= max_backend_calls(config);
  report(3, "dynamic recruitment scenario: roster 3, rounds 2, 22 calls, majority verdict",
         ok,
         "failed=" + std::to_string(r.failed) + " experts=" +
             std::to_string(r.ledger.expert_count) + " rounds=" +
             std::to_string(r.rounds_used) + " calls=" +
             std::to_string(r.ledger.backend_calls) + " verdict=" + r.verdict.label);
}

// --- criterion 4: termination and bounds under adversarial replies -----------

class RandomBackend : public ChatBackend {
 public:
  explicit RandomBackend(unsigned seed) : rng_(seed) {}

  ChatReply chat(const ChatRequest& request) override {
    request.validate();
    ++calls_;
    ChatReply reply;
    reply.content = random_reply(request.tag.phase);
    reply.prompt_tokens = 10;
    reply.completion_tokens = 5;
    return reply;
  }
  long live_calls() const override { return calls_; }

 private:
  std::string random_roster(int max_items) {
    std::uniform_int_distribution<int> count(0, max_items);
    std::ostringstream os;
    const int n = count(rng_);
    for (int i = 0; i < n; ++i)
      os << (i + 1) << ". Expert" << role_dist_(rng_)
         << " - Randomly generated specialist. - Hierarchy: Independent\n";
    return os.str();
  }

  std::string random_reply(Phase phase) {
    std::uniform_int_distribution<int> pick(0, 9);
    switch (pick(rng_)) {
      case 0: return "Yes, absolutely.";
      case 1: return "No.";
      case 2: return "Answer: (A)";
      case 3: return "Answer: (Q)";  // not a valid label
      case 4: return "<skip recruitment>";
      case 5: return "complete garbage with no structure at all";
      case 6: return "Yes. A Specialist" + std::to_string(role_dist_(rng_)) +
                     " is needed right away.";
      case 7: return random_roster(6);
      case 8: return "maybe, perhaps, unclear";
      default: return "1. Expert" + std::to_string(role_dist_(rng_)) +
                      " - Focused scope. - Hierarchy: Independent";
    }
  }

  std::mt19937 rng_;
  std::uniform_int_distribution<int> role_dist_{0, 40};
  long calls_ = 0;
};

void check_termination() {
  bool ok = true;
  std::string detail;
  std::mt19937 meta(1234);
  std::uniform_int_distribution<int> n_dist(1, 3), r_dist(1, 4), cap_dist(1, 3);
  for (int i = 0; i < 500 && ok; ++i) {
    RunConfig config;
    config.initial_experts_N = n_dist(meta);
    config.max_rounds_R = r_dist(meta);
    config.max_new_per_round = cap_dist(meta);
    RandomBackend backend(static_cast<unsigned>(10000 + i));
    try {
      auto result = run_case(make_case(), config, backend);
      if (result.rounds_used > config.max_rounds_R) {
        ok = false;
        detail = "iteration " + std::to_string(i) + ": rounds_used " +
                 std::to_string(result.rounds_used);
      }
      if (result.ledger.backend_calls > max_backend_calls(config)) {
        ok = false;
        detail = "iteration " + std::to_string(i) + ": " +
                 std::to_string(result.ledger.backend_calls) + " calls > bound " +
                 std::to_string(max_backend_calls(config));
      }
      // the roster only ever grows: every timeline event adds >= 1 role
      long total_roles = 0;
      for (const auto& ev : result.roster_timeline) {
        if (ev.roles.empty()) {
          ok = false;
          detail = "iteration " + std::to_string(i) + ": empty roster event";
        }
        total_roles += static_cast<long>(ev.roles.size());
      }
      if (!result.failed && total_roles != result.ledger.expert_count) {
        ok = false;
        detail = "iteration " + std::to_string(i) + ": timeline sums to " +
                 std::to_string(total_roles) + ", ledger says " +
                 std::to_string(result.ledger.expert_count);
      }
    } catch (const std::exception& e) {
      ok = false;
      detail = "iteration " + std::to_string(i) + ": escaped exception: " + e.what();
    }
  }
  report(4, "500 adversarial runs terminate within bounds, roster only grows", ok, detail);
}

// --- criterion 5: parser behaviors -------------------------------------------

void check_parsers() {
  bool ok = true;
  std::string detail;
  try {
    auto roster = parse_roster(
        "1. Pediatrician - Specializes in the medical care of infants, children, and "
        "adolescents. - Hierarchy: Independent\n\n"
        "2. Cardiologist - Focuses on the diagnosis and treatment of heart and blood "
        "vessel-related conditions. - Hierarchy: Pediatrician > Cardiologist\n\n"
        "3. Pulmonologist - Specializes in the diagnosis and treatment of respiratory "
        "system disorders. - Hierarchy: Independent\n\n"
        "4. Neonatologist - Focuses on the care of newborn infants, especially those who "
        "are born prematurely or have medical issues at birth. - Hierarchy: Independent\n\n"
        "5. Medical Geneticist - Specializes in the study of genes and heredity. - "
        "Hierarchy: Independent");
    if (roster.experts.size() != 5) {
      ok = false;
      detail = "expected 5 experts, got " + std::to_string(roster.experts.size());
    } else if (roster.experts[1].edges.size() != 1 ||
               roster.experts[1].edges[0] !=
                   HierarchyEdge::directed("Pediatrician", "Cardiologist")) {
      ok = false;
      detail = "missing directed edge on the second expert";
    }
    if (!parse_roster("<skip recruitment>").skipped) {
      ok = false;
      detail = "skip sentinel not honored";
    }
    auto dup = parse_roster(
        "1. Internist - One. - Hierarchy: Independent\n"
        "2. Internist - Two. - Hierarchy: Independent");
    if (dup.experts.size() != 1 || dup.warnings.empty()) {
      ok = false;
      detail = "duplicate role not dropped with warning";
    }
    if (parse_final_answer("Answer: (A) on reflection\nAnswer: (B)", {"A", "B"}) != "B") {
      ok = false;
      detail = "last answer did not win";
    }
  } catch (const std::exception& e) {
    ok = false;
    detail = e.what();
  }
  report(5, "roster/skip/duplicate/last-answer parser behaviors", ok, detail);
}

// --- criterion 6: metrics against brute-force recomputation ------------------

void check_metrics_oracle() {
  bool ok = true;
  std::string detail;

  // pinned binary fixture: tp=3 fp=1 fn=1 tn=5
  {
    std::vector<std::pair<std::string, std::string>> preds, golds;
    const char* p = "AAABABBBBB";
    const char* g = "AAAABBBBBB";
    for (int i = 0; i < 10; ++i) {
      preds.emplace_back(std::to_string(i), std::string(1, p[i]));
      golds.emplace_back(std::to_string(i), std::string(1, g[i]));
    }
    auto row = metrics(confusion(preds, golds), AveragingMode::binary, "A");
    auto close = [](double a, double b) { return std::fabs(a - b) < 0.005; };
    if (!(close(row.acc, 80.00) && close(row.prec, 75.00) && close(row.spec, 83.33) &&
          close(row.recall, 75.00))) {
      ok = false;
      detail = "binary fixture mismatch";
    }
  }

  // exhaustive sweep: n <= 6 cases (sampled lengths), 3 classes + abstention
  const std::vector<std::string> classes = {"A", "B", "C"};
  const std::vector<std::string> pred_choices = {"A", "B", "C", kAbstainLabel};
  for (int n = 1; n <= 6 && ok; ++n) {
    const long npred = static_cast<long>(std::pow(4, n));
    const long ngold = static_cast<long>(std::pow(3, n));
    for (long pi = 0; pi < npred && ok; ++pi) {
      for (long gi = 0; gi < ngold && ok; ++gi) {
        std::vector<std::pair<std::string, std::string>> preds, golds;
        long p = pi, g = gi;
        for (int i = 0; i < n; ++i) {
          preds.emplace_back(std::to_string(i), pred_choices[p % 4]);
          golds.emplace_back(std::to_string(i), classes[g % 3]);
          p /= 4;
          g /= 3;
        }
        auto counts = confusion(preds, golds);

        // brute-force recomputation, straight from the definitions
        long correct = 0;
        for (int i = 0; i < n; ++i)
          if (preds[i].second == golds[i].second) ++correct;
        if (counts.n_correct != correct) {
          ok = false;
          detail = "n_correct mismatch";
          break;
        }
        double prec_sum = 0, rec_sum = 0, spec_sum = 0;
        bool expect_flag = false;
        for (const auto& [cls, cc] : counts.per_class) {
          long tp = 0, fp = 0, fn = 0, tn = 0;
          for (int i = 0; i < n; ++i) {
            const bool pc = preds[i].second == cls;
            const bool gc = golds[i].second == cls;
            if (pc && gc) ++tp;
            else if (pc) ++fp;
            else if (gc) ++fn;
            else ++tn;
          }
          if (cc.tp != tp || cc.fp != fp || cc.fn != fn || cc.tn != tn) {
            ok = false;
            detail = "per-class counts mismatch for " + cls;
            break;
          }
          auto ratio = [&](long num, long den) {
            if (den == 0) {
              expect_flag = true;
              return 0.0;
            }
            return static_cast<double>(num) / static_cast<double>(den);
          };
          prec_sum += ratio(tp, tp + fp);
          rec_sum += ratio(tp, tp + fn);
          spec_sum += ratio(tn, tn + fp);
        }
        if (!ok) break;
        auto row = metrics(counts, AveragingMode::macro_avg);
        const double k = static_cast<double>(counts.per_class.size());
        auto close = [](double a, double b) { return std::fabs(a - b) < 1e-9; };
        if (!close(row.acc, 100.0 * correct / n) ||
            !close(row.prec, 100.0 * prec_sum / k) ||
            !close(row.recall, 100.0 * rec_sum / k) ||
            !close(row.spec, 100.0 * spec_sum / k) ||
            !close(row.avg, (row.acc + row.prec + row.spec + row.recall) / 4.0) ||
            row.divzero_flag != expect_flag) {
          ok = false;
          detail = "macro metrics mismatch at n=" + std::to_string(n);
        }
      }
    }
  }
  report(6, "metrics agree with brute-force recomputation and binary fixture", ok, detail);
}

// --- criterion 7: replay determinism through the CLI -------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void check_replay(const std::string& cli) {
  bool ok = true;
  std::string detail;
  const fs::path dir = fs::temp_directory_path() / "kamac-acceptance-replay";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const fs::path script = dir / "script.json";
  {
    std::ofstream out(script);
    out << R"json([
      {"phase": "recruit_initial", "content": "1. Internist - General medicine. - Hierarchy: Independent", "times": -1},
      {"phase": "assess", "content": "Answer: (A)", "times": -1},
      {"phase": "interact", "content": "No.", "times": -1},
      {"phase": "kg_detect", "content": "No.", "times": -1},
      {"phase": "update", "content": "Answer: (A)", "times": -1},
      {"phase": "moderate", "content": "Answer: (A)", "times": -1}
    ])json";
  }
  const std::string dataset = std::string(KAMAC_FIXTURE_DIR) + "/mini_medqa.jsonl";
  auto invoke = [&](const std::string& out_name, const std::string& err_name) {
    const std::string cmd = cli + " run --dataset " + dataset +
                            " --method kamac --mock-script " + script.string() +
                            " --cache-dir " + (dir / "cache").string() + " --out " +
                            (dir / out_name).string() + " 2> " +
                            (dir / err_name).string();
    return std::system(cmd.c_str());
  };
  if (invoke("run1.tsv", "err1.txt") != 0) {
    ok = false;
    detail = "first run exited nonzero: " + slurp(dir / "err1.txt");
  }
  if (ok && invoke("run2.tsv", "err2.txt") != 0) {
    ok = false;
    detail = "second run exited nonzero";
  }
  if (ok) {
    const std::string a = slurp(dir / "run1.tsv");
    const std::string b = slurp(dir / "run2.tsv");
    if (a.empty() || a != b) {
      ok = false;
      detail = "results files differ or are empty";
    }
    const std::string ea = slurp(dir / "run1.tsv.experts.tsv");
    const std::string eb = slurp(dir / "run2.tsv.experts.tsv");
    if (ea != eb) {
      ok = false;
      detail = "experts files differ";
    }
    const std::string err2 = slurp(dir / "err2.txt");
    if (err2.find("live-calls: 0") == std::string::npos) {
      ok = false;
      detail = "second run hit the backend: " + err2;
    }
  }
  fs::remove_all(dir);
  report(7, "replayed run is byte-identical with zero live backend calls", ok, detail);
}

// --- criterion 8: histogram overlap ------------------------------------------

void check_overlap() {
  std::vector<HistogramEntry> a, b;
  for (int i = 0; i < 30; ++i) {
    a.push_back({"shared-or-a-" + std::to_string(i), 100 - i});
    // first 24 roles shared, last 6 differ
    const std::string role =
        i < 24 ? "shared-or-a-" + std::to_string(i) : "only-b-" + std::to_string(i);
    b.push_back({role, 100 - i});
  }
  bool truncated = true;
  const double overlap = topk_overlap(a, b, 30, &truncated);
  const bool ok = std::fabs(overlap - 0.80) < 1e-12 && !truncated;
  report(8, "24-of-30 shared roles yield top-30 overlap 0.80", ok,
         "got " + std::to_string(overlap));
}

// --- criterion 9: baseline contracts -----------------------------------------

void check_baselines() {
  bool ok = true;
  std::string detail;

  ScriptedBackend majority({
      entry(Phase::recruit_initial, std::nullopt, std::nullopt,
            "1. A1 - First. - Hierarchy: Independent\n"
            "2. A2 - Second. - Hierarchy: Independent\n"
            "3. A3 - Third. - Hierarchy: Independent\n"
            "4. A4 - Fourth. - Hierarchy: Independent\n"
            "5. A5 - Fifth. - Hierarchy: Independent"),
      entry(Phase::assess, 0, "A1", "Answer: (A)"),
      entry(Phase::assess, 0, "A2", "Answer: (A)"),
      entry(Phase::assess, 0, "A3", "Answer: (A)"),
      entry(Phase::assess, 0, "A4", "Answer: (B)"),
      entry(Phase::assess, 0, "A5", "Answer: (C)"),
  });
  RunConfig config;
  config.method = Method::static_majority;
  auto vote = run_case(make_case(), config, majority);
  if (vote.failed || vote.verdict.label != "A") {
    ok = false;
    detail = "majority over {A,A,A,B,C} returned " + vote.verdict.label;
  }

  ScriptedBackend single_backend(
      {entry(Phase::assess, std::nullopt, std::nullopt, "Answer: (B)", -1)});
  config.method = Method::single;
  auto single = run_case(make_case(), config, single_backend);
  if (single.failed || single.ledger.backend_calls != 1 ||
      single_backend.live_calls() != 1) {
    ok = false;
    detail = "single-agent made " + std::to_string(single.ledger.backend_calls) + " calls";
  }
  report(9, "majority over {A,A,A,B,C} picks A; single agent uses one call", ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-cli>\n";
    return 2;
  }
  check_avg_rows();
  check_significance();
  check_scenario_s1();
  check_termination();
  check_parsers();
  check_metrics_oracle();
  check_replay(argv[1]);
  check_overlap();
  check_baselines();
  std::cout << (failures == 0 ? "all criteria passed" : "criteria failed") << "\n";
  return failures == 0 ? 0 : 1;
}
