#pragma once
// Dataset loaders (multiple-choice QA lines, prognosis tabular files) and
// the versioned per-case transcript store used for deterministic replay.

#include <optional>
#include <string>
#include <vector>

#include "kamac/core.hpp"
#include "kamac/evaluation.hpp"
#include "kamac/gateway.hpp"

namespace kamac {

struct DatasetProfile {
  std::string name;
  std::vector<std::string> option_labels;
  PromptVariant prompt_variant = PromptVariant::medqa;
  std::string positive_label;  // required for binary averaging
  AveragingMode averaging = AveragingMode::macro_avg;

  static DatasetProfile medqa();
  static DatasetProfile prognvqa(const std::string& positive_label = "A");
  static DatasetProfile from_name(const std::string& name);
};

// One JSON record per line: {"question", "options": {label: text},
// "answer_idx", optional "id"}. File order preserved, labels uppercased.
std::vector<CaseRecord> load_medqa(const std::string& path);

// Tab-separated file with a header row. Mandatory columns: case_id,
// survival. Optional: image, bbox (boxes "z0,z1,y0,y1,x0,x1" joined by ';').
// Every clinical variable column present is carried through in the standard
// variable order; unrecognized columns are an error.
std::vector<CaseRecord> load_prognvqa(const std::string& path);

// Column order for prognosis clinical variables.
const std::vector<std::string>& prognvqa_variable_order();

inline const std::string kTranscriptVersion = "kamac-transcript/1";

struct TranscriptDocument {
  std::string version = kTranscriptVersion;
  std::string case_id;
  nlohmann::json config_snapshot;
  std::vector<Message> messages;
  std::vector<RosterEvent> roster_timeline;
  std::optional<Verdict> verdict;
  std::optional<UsageLedger> ledger;
  std::vector<ReplyRecord> replies;
  std::string tool_version;
};

void to_json(nlohmann::json& j, const TranscriptDocument& d);
void from_json(const nlohmann::json& j, TranscriptDocument& d);

// One versioned document per case under a directory. Writes are atomic
// (temp file + rename); loading a truncated file or a version mismatch is
// an explicit error, never a partial object.
class TranscriptStore {
 public:
  explicit TranscriptStore(std::string dir);

  std::string path_for(const std::string& case_id) const;
  bool exists(const std::string& case_id) const;
  void save(const TranscriptDocument& doc) const;
  TranscriptDocument load(const std::string& case_id) const;

 private:
  std::string dir_;
};

}  // namespace kamac
