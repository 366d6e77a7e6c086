// Command-line entry point: run experiments, merge reports, significance
// tests, transcript inspection, and prompt dumps.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "kamac/core.hpp"
#include "kamac/datasets.hpp"
#include "kamac/evaluation.hpp"
#include "kamac/gateway.hpp"
#include "kamac/orchestrator.hpp"
#include "kamac/prompts.hpp"

namespace fs = std::filesystem;
using namespace kamac;

namespace {

constexpr const char* kToolVersion = "kamac 0.1.0";

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

struct ResultsRow {
  std::string method;
  std::string dataset;
  double acc = 0, prec = 0, spec = 0, recall = 0, avg = 0;
  double avg_experts = 0, avg_calls = 0, avg_time_s = 0, total_cost = 0;
};

const std::vector<std::string> kResultsColumns = {
    "method", "dataset", "acc",       "prec",      "spec",       "recall",
    "avg",    "experts", "api_calls", "time_s",    "cost"};

void write_results_file(const std::string& path, const ResultsRow& row,
                        AveragingMode averaging) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write results file: " + path);
  out << "# averaging: "
      << (averaging == AveragingMode::macro_avg ? "macro" : "binary") << "\n";
  for (size_t i = 0; i < kResultsColumns.size(); ++i)
    out << (i ? "\t" : "") << kResultsColumns[i];
  out << "\n";
  out << row.method << "\t" << row.dataset << "\t" << fmt2(row.acc) << "\t"
      << fmt2(row.prec) << "\t" << fmt2(row.spec) << "\t" << fmt2(row.recall) << "\t"
      << fmt2(row.avg) << "\t" << fmt2(row.avg_experts) << "\t" << fmt2(row.avg_calls)
      << "\t" << fmt2(row.avg_time_s) << "\t" << fmt2(row.total_cost) << "\n";
}

std::vector<ResultsRow> read_results_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read results file: " + path);
  std::vector<ResultsRow> rows;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream is(line);
    std::string f;
    while (std::getline(is, f, '\t')) fields.push_back(f);
    if (header.empty()) {
      header = fields;
      continue;
    }
    auto get = [&](const std::string& name) -> std::string {
      for (size_t i = 0; i < header.size() && i < fields.size(); ++i)
        if (header[i] == name) return fields[i];
      throw InputError(path + ": missing column '" + name + "'");
    };
    ResultsRow r;
    r.method = get("method");
    r.dataset = get("dataset");
    r.acc = std::stod(get("acc"));
    r.prec = std::stod(get("prec"));
    r.spec = std::stod(get("spec"));
    r.recall = std::stod(get("recall"));
    r.avg = std::stod(get("avg"));
    r.avg_experts = std::stod(get("experts"));
    r.avg_calls = std::stod(get("api_calls"));
    r.avg_time_s = std::stod(get("time_s"));
    r.total_cost = std::stod(get("cost"));
    rows.push_back(r);
  }
  if (rows.empty()) throw InputError(path + ": no result rows");
  return rows;
}

void write_experts_file(const std::string& path, const std::vector<HistogramEntry>& hist) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write experts file: " + path);
  out << "role\tcount\n";
  for (const auto& e : hist) out << e.role << "\t" << e.count << "\n";
}

std::vector<HistogramEntry> read_experts_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read experts file: " + path);
  std::vector<HistogramEntry> hist;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw InputError(path + ": malformed line: " + line);
    hist.push_back({line.substr(0, tab), std::stol(line.substr(tab + 1))});
  }
  return hist;
}

struct RunOptions {
  std::string dataset_path;
  std::string profile = "medqa";
  std::string method = "kamac";
  std::string model = "gpt-4.1-mini";
  int rounds = 3;
  int initial_experts = 1;
  std::string consensus = "vote";
  std::string cache_dir = "cache";
  std::string mock_script;
  int limit = 0;
  int concurrency = 1;
  std::string out = "results.tsv";
  std::string base_url;
  std::string positive_label = "A";
  int static_team = 5;
  double price_prompt = 0;
  double price_completion = 0;
  bool no_recruitment = false;
};

int cmd_run(const RunOptions& opt) {
  DatasetProfile profile = DatasetProfile::from_name(opt.profile);
  if (opt.profile == "prognvqa") profile.positive_label = opt.positive_label;

  RunConfig config;
  config.model_id = opt.model;
  config.max_rounds_R = opt.rounds;
  config.initial_experts_N = opt.initial_experts;
  config.consensus_strategy = opt.consensus == "refine"
                                  ? ConsensusStrategy::ensemble_refinement
                                  : ConsensusStrategy::majority_vote;
  config.method = method_from_string(opt.method);
  config.static_team_size = opt.static_team;
  config.cache_dir = opt.cache_dir;
  config.concurrency_limit = opt.concurrency;
  config.prompt_variant = profile.prompt_variant;
  config.prices = {opt.price_prompt, opt.price_completion};
  config.recruitment_enabled = !opt.no_recruitment;
  config.validate();

  std::vector<CaseRecord> cases = opt.profile == "medqa"
                                      ? load_medqa(opt.dataset_path)
                                      : load_prognvqa(opt.dataset_path);
  if (opt.limit > 0 && static_cast<size_t>(opt.limit) < cases.size())
    cases.resize(static_cast<size_t>(opt.limit));
  if (cases.empty()) throw InputError("dataset is empty");

  std::unique_ptr<ChatBackend> backend;
  if (!opt.mock_script.empty()) {
    std::ifstream script(opt.mock_script);
    if (!script) throw InputError("cannot open mock script: " + opt.mock_script);
    nlohmann::json j;
    script >> j;
    backend = std::make_unique<ScriptedBackend>(ScriptedBackend::entries_from_json(j));
  } else {
    std::string key = env_or_empty("KAMAC_API_KEY");
    if (key.empty()) key = env_or_empty("OPENAI_API_KEY");
    if (key.empty())
      throw InputError("no API key in KAMAC_API_KEY/OPENAI_API_KEY and no --mock-script");
    std::string base = opt.base_url.empty() ? env_or_empty("KAMAC_BASE_URL") : opt.base_url;
    if (base.empty()) base = "https://api.openai.com";
    backend = std::make_unique<HttpBackend>(base, key);
  }

  TranscriptStore store((fs::path(opt.cache_dir) / profile.name / to_string(config.method))
                            .string());
  SystemClock clock;

  std::vector<CaseRunResult> results(cases.size());
  std::atomic<size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= cases.size()) return;
      const CaseRecord& c = cases[i];

      TranscriptDocument doc;
      doc.case_id = c.case_id;
      doc.config_snapshot = nlohmann::json(config);
      doc.tool_version = kToolVersion;
      if (store.exists(c.case_id)) {
        try {
          doc.replies = store.load(c.case_id).replies;
        } catch (const InputError& e) {
          std::lock_guard<std::mutex> lock(log_mutex);
          std::cerr << "warning: ignoring unreadable transcript for " << c.case_id << ": "
                    << e.what() << "\n";
        }
      }

      RetryingBackend retrying(*backend, config.retry_policy, clock);
      CachingGateway gateway(retrying, doc.replies,
                             [&](const std::vector<ReplyRecord>& records) {
                               doc.replies = records;
                               store.save(doc);  // write-through, partial runs persist
                             });
      CaseRunResult result = run_case(c, config, gateway);
      doc.replies = gateway.records();
      doc.messages = result.transcript;
      doc.roster_timeline = result.roster_timeline;
      doc.verdict = result.verdict;
      doc.ledger = result.ledger;
      store.save(doc);

      {
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << c.case_id << ": " << (result.failed ? "FAILED " + result.failure
                                                         : "verdict " + result.verdict.label)
                  << " (calls " << result.ledger.backend_calls << ", experts "
                  << result.ledger.expert_count << ")\n";
        for (const auto& w : gateway.warnings()) std::cerr << "  warning: " << w << "\n";
      }
      results[i] = std::move(result);
    }
  };
  {
    std::vector<std::thread> pool;
    const int workers = std::min<int>(config.concurrency_limit,
                                      static_cast<int>(cases.size()));
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<std::pair<std::string, std::string>> preds, golds;
  std::vector<UsageLedger> ledgers;
  std::vector<std::vector<RosterEvent>> timelines;
  bool any_failed = false;
  for (size_t i = 0; i < cases.size(); ++i) {
    preds.emplace_back(cases[i].case_id, results[i].verdict.label);
    golds.emplace_back(cases[i].case_id, cases[i].gold_label);
    ledgers.push_back(results[i].ledger);
    timelines.push_back(results[i].roster_timeline);
    if (results[i].failed) any_failed = true;
  }

  MetricRow row = metrics(confusion(preds, golds), profile.averaging, profile.positive_label);
  LedgerSummary usage = ledger_merge(ledgers);

  ResultsRow out_row;
  out_row.method = to_string(config.method);
  out_row.dataset = profile.name;
  out_row.acc = row.acc;
  out_row.prec = row.prec;
  out_row.spec = row.spec;
  out_row.recall = row.recall;
  out_row.avg = row.avg;
  out_row.avg_experts = usage.avg_experts;
  out_row.avg_calls = usage.avg_calls;
  out_row.avg_time_s = usage.avg_wall_time_s;
  out_row.total_cost = usage.total_cost;
  write_results_file(opt.out, out_row, profile.averaging);
  write_experts_file(opt.out + ".experts.tsv", expert_histogram(timelines));

  std::cerr << "cases: " << cases.size() << "  acc " << fmt2(row.acc) << "  avg "
            << fmt2(row.avg) << "  avg-experts " << fmt2(usage.avg_experts)
            << "  avg-calls " << fmt2(usage.avg_calls) << "\n";
  std::cerr << "live-calls: " << backend->live_calls() << "\n";
  return any_failed ? 1 : 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& overlap_a,
               const std::string& overlap_b, int topk) {
  if (!inputs.empty()) {
    std::vector<ResultsRow> rows;
    for (const auto& path : inputs)
      for (const auto& r : read_results_file(path)) rows.push_back(r);
    for (const auto& r : rows)
      if (r.dataset != rows.front().dataset)
        throw InputError("incompatible profiles in one merge: " + rows.front().dataset +
                         " vs " + r.dataset);
    std::printf("%-12s %-10s %8s %8s %8s %8s %8s %9s %9s %8s %8s\n", "method", "dataset",
                "acc", "prec", "spec", "recall", "avg", "experts", "calls", "time_s",
                "cost");
    for (const auto& r : rows)
      std::printf("%-12s %-10s %8.2f %8.2f %8.2f %8.2f %8.2f %9.2f %9.2f %8.2f %8.2f\n",
                  r.method.c_str(), r.dataset.c_str(), r.acc, r.prec, r.spec, r.recall,
                  r.avg, r.avg_experts, r.avg_calls, r.avg_time_s, r.total_cost);
  }
  if (!overlap_a.empty() && !overlap_b.empty()) {
    auto a = read_experts_file(overlap_a);
    auto b = read_experts_file(overlap_b);
    bool truncated = false;
    const double overlap = topk_overlap(a, b, topk, &truncated);
    std::printf("top-%d overlap: %.2f%s\n", topk, overlap,
                truncated ? " (fewer distinct roles than k)" : "");
  }
  return 0;
}

int cmd_stats(const std::vector<std::string>& run_files,
              const std::vector<std::string>& baseline_files, bool two_sample) {
  if (run_files.size() < 2) throw InputError("need at least 2 run files");
  if (baseline_files.size() < (two_sample ? 2u : 1u))
    throw InputError("need baseline run files");

  auto collect = [](const std::vector<std::string>& files) {
    std::map<std::string, std::vector<double>> metrics_by_name;
    for (const auto& path : files) {
      const ResultsRow r = read_results_file(path).front();
      metrics_by_name["Acc"].push_back(r.acc / 100.0);
      metrics_by_name["Prec"].push_back(r.prec / 100.0);
      metrics_by_name["Recall"].push_back(r.recall / 100.0);
      metrics_by_name["Spec"].push_back(r.spec / 100.0);
    }
    return metrics_by_name;
  };
  auto runs = collect(run_files);
  auto baseline = collect(baseline_files);

  // The one-sample variant vs the baseline mean is the default: with three
  // repeats it reproduces the printed df=2 statistics; --two-sample selects
  // the pooled independent-sample form.
  std::printf("%-8s %10s %10s %12s %12s %s\n", "Metric", "Mean", "Std", "t-statistic",
              "p-value", "sig");
  for (const auto& name : {"Acc", "Prec", "Recall", "Spec"}) {
    const auto& samples = runs.at(name);
    const auto& base = baseline.at(name);
    TTestResult t;
    if (two_sample) {
      t = t_test_two_sample(samples, base);
    } else {
      double base_mean = 0;
      for (double v : base) base_mean += v;
      base_mean /= static_cast<double>(base.size());
      t = t_test_one_sample(samples, base_mean);
    }
    std::printf("%-8s %10.4f %10.4f %12.2f %12.4f %s\n", name, t.mean_a, t.std_a, t.t_stat,
                t.p_value, significance_stars(t.p_value).c_str());
  }
  return 0;
}

int cmd_inspect(const std::string& cache_dir, const std::string& profile,
                const std::string& method, const std::string& case_id) {
  TranscriptStore store((fs::path(cache_dir) / profile / method).string());
  TranscriptDocument doc = store.load(case_id);
  std::printf("case %s (%s)\n", doc.case_id.c_str(), doc.tool_version.c_str());
  for (const auto& ev : doc.roster_timeline) {
    std::printf("round %d: +%zu expert(s):", ev.round, ev.roles.size());
    for (const auto& r : ev.roles) std::printf(" %s;", r.c_str());
    std::printf("\n");
  }
  for (const auto& m : doc.messages) {
    std::string who = to_string(m.speaker);
    if (!m.agent_role.empty()) who += "(" + m.agent_role + ")";
    std::printf("--- [round %d] %s ---\n%s\n", m.round, who.c_str(), m.content.c_str());
  }
  if (doc.verdict) {
    std::printf("verdict: %s via %s\n", doc.verdict->label.c_str(),
                to_string(doc.verdict->strategy).c_str());
    for (const auto& [role, label] : doc.verdict->per_agent)
      std::printf("  %s -> %s\n", role.c_str(), label.c_str());
  }
  if (doc.ledger)
    std::printf("usage: %ld calls, %d experts, %.2fs\n", doc.ledger->backend_calls,
                doc.ledger->expert_count, doc.ledger->wall_time_s);
  return 0;
}

int cmd_prompt(const std::string& template_name,
               const std::vector<std::string>& bindings_kv) {
  std::map<std::string, std::string> bindings;
  for (const auto& kv : bindings_kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("binding must be name=value: " + kv);
    bindings[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  bindings.emplace("answer_template", kAnswerTemplate);
  bindings.emplace("final_answer_template", kFinalAnswerTemplate);
  auto rendered = render(template_id_from_string(template_name), bindings);
  if (rendered.system_text) std::printf("[system]\n%s\n\n", rendered.system_text->c_str());
  std::printf("[user]\n%s\n", rendered.user_text.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive multi-agent medical decision-making engine"};
  app.require_subcommand(1);

  RunOptions run_opt;
  auto* run = app.add_subcommand("run", "Run a batch of cases");
  run->add_option("--dataset", run_opt.dataset_path, "Dataset file")->required();
  run->add_option("--profile", run_opt.profile, "medqa|prognvqa");
  run->add_option("--method", run_opt.method, "kamac|single|cot|majority|consensus");
  run->add_option("--model", run_opt.model, "Model id");
  run->add_option("--rounds", run_opt.rounds, "Max discussion rounds");
  run->add_option("--initial-experts", run_opt.initial_experts, "Initial expert count");
  run->add_option("--consensus", run_opt.consensus, "vote|refine");
  run->add_option("--cache-dir", run_opt.cache_dir, "Transcript cache directory");
  run->add_option("--mock-script", run_opt.mock_script, "Scripted backend file (offline)");
  run->add_option("--limit", run_opt.limit, "Run only the first N cases");
  run->add_option("--concurrency", run_opt.concurrency, "Concurrent cases");
  run->add_option("--out", run_opt.out, "Results file path");
  run->add_option("--base-url", run_opt.base_url, "Chat-completion base URL");
  run->add_option("--positive-label", run_opt.positive_label,
                  "Positive class for binary metrics");
  run->add_option("--static-team", run_opt.static_team, "Static baseline team size");
  run->add_option("--price-prompt", run_opt.price_prompt, "Price per 1M prompt tokens");
  run->add_option("--price-completion", run_opt.price_completion,
                  "Price per 1M completion tokens");
  run->add_flag("--no-recruitment", run_opt.no_recruitment,
                "Disable mid-discussion recruitment");

  std::vector<std::string> report_inputs;
  std::string overlap_a, overlap_b;
  int topk = 30;
  auto* report = app.add_subcommand("report", "Merge result files into a table");
  report->add_option("--in", report_inputs, "Result files to merge");
  report->add_option("--overlap-a", overlap_a, "First experts file for overlap");
  report->add_option("--overlap-b", overlap_b, "Second experts file for overlap");
  report->add_option("--topk", topk, "Top-k for the overlap statistic");

  std::vector<std::string> stats_runs, stats_baseline;
  bool two_sample = false;
  auto* stats = app.add_subcommand("stats", "Significance tests over repeated runs");
  stats->add_option("--runs", stats_runs, "Result files of the method under test")
      ->required();
  stats->add_option("--baseline-runs", stats_baseline, "Baseline result files")->required();
  stats->add_flag("--two-sample", two_sample, "Pooled two-sample variant");

  std::string inspect_cache = "cache", inspect_profile = "medqa",
              inspect_method = "kamac", inspect_case;
  auto* inspect = app.add_subcommand("inspect", "Pretty-print a case transcript");
  inspect->add_option("case_id", inspect_case, "Case id")->required();
  inspect->add_option("--cache-dir", inspect_cache, "Transcript cache directory");
  inspect->add_option("--profile", inspect_profile, "Dataset profile");
  inspect->add_option("--method", inspect_method, "Method");

  std::string prompt_template;
  std::vector<std::string> prompt_bindings;
  auto* prompt = app.add_subcommand("prompt", "Dump a rendered prompt");
  prompt->add_option("--template", prompt_template, "Template id (P1..P7, VisualCoT)")
      ->required();
  prompt->add_option("--bind", prompt_bindings, "name=value binding");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_opt);
    if (*report) return cmd_report(report_inputs, overlap_a, overlap_b, topk);
    if (*stats) return cmd_stats(stats_runs, stats_baseline, two_sample);
    if (*inspect)
      return cmd_inspect(inspect_cache, inspect_profile, inspect_method, inspect_case);
    if (*prompt) return cmd_prompt(prompt_template, prompt_bindings);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
