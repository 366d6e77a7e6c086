#include "kamac/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace kamac {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(s);
  while (std::getline(is, field, sep)) out.push_back(field);
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

Box3D parse_box(const std::string& text, const std::string& case_id) {
  auto parts = split(trim(text), ',');
  if (parts.size() != 6)
    throw InputError("case " + case_id + ": bbox needs 6 comma-separated values, got '" +
                     text + "'");
  Box3D b;
  try {
    b.z_min = std::stod(parts[0]);
    b.z_max = std::stod(parts[1]);
    b.y_min = std::stod(parts[2]);
    b.y_max = std::stod(parts[3]);
    b.x_min = std::stod(parts[4]);
    b.x_max = std::stod(parts[5]);
  } catch (const std::exception&) {
    throw InputError("case " + case_id + ": non-numeric bbox value in '" + text + "'");
  }
  b.validate();
  return b;
}

}  // namespace

DatasetProfile DatasetProfile::medqa() {
  DatasetProfile p;
  p.name = "medqa";
  p.option_labels = {"A", "B", "C", "D", "E"};
  p.prompt_variant = PromptVariant::medqa;
  p.averaging = AveragingMode::macro_avg;
  return p;
}

DatasetProfile DatasetProfile::prognvqa(const std::string& positive_label) {
  DatasetProfile p;
  p.name = "prognvqa";
  p.option_labels = {"A", "B"};
  p.prompt_variant = PromptVariant::progn_strict;
  p.positive_label = positive_label;
  p.averaging = AveragingMode::binary;
  return p;
}

DatasetProfile DatasetProfile::from_name(const std::string& name) {
  if (name == "medqa") return medqa();
  if (name == "prognvqa") return prognvqa();
  throw InputError("unknown dataset profile: " + name);
}

std::vector<CaseRecord> load_medqa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset file: " + path);
  std::vector<CaseRecord> out;
  std::set<std::string> seen_ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": malformed record: " +
                       e.what());
    }
    CaseRecord c;
    try {
      c.case_id = j.value("id", "medqa-" + std::to_string(lineno));
      c.stem = j.at("question").get<std::string>();
      std::vector<std::pair<std::string, std::string>> opts;
      for (const auto& [label, text] : j.at("options").items()) {
        std::string up = label;
        std::transform(up.begin(), up.end(), up.begin(), [](unsigned char ch) {
          return static_cast<char>(std::toupper(ch));
        });
        opts.emplace_back(up, text.get<std::string>());
      }
      std::sort(opts.begin(), opts.end());
      c.options = std::move(opts);
      std::string gold = j.at("answer_idx").get<std::string>();
      std::transform(gold.begin(), gold.end(), gold.begin(), [](unsigned char ch) {
        return static_cast<char>(std::toupper(ch));
      });
      c.gold_label = gold;
      if (j.contains("fewshot_examplers"))
        c.fewshot_examplers = j["fewshot_examplers"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": missing field: " +
                       e.what());
    }
    try {
      c.validate();
    } catch (const ValidationError& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen_ids.insert(c.case_id).second)
      throw InputError(path + ":" + std::to_string(lineno) + ": duplicate case id " +
                       c.case_id);
    out.push_back(std::move(c));
  }
  return out;
}

const std::vector<std::string>& prognvqa_variable_order() {
  static const std::vector<std::string> order = {
      "Age",      "Sex",        "ECOG PS",  "Smoking PY", "Smoking Status",
      "Ds Site",  "Subsite",    "T",        "N",          "M",
      "Stage",    "Path",       "HPV",      "Tx Modality", "Chemo?",
      "Dose",     "Fx",         "Local",    "Regional",   "Distant",
      "2nd Ca",   "ContrastEnhanced"};
  return order;
}

std::vector<CaseRecord> load_prognvqa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset file: " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw InputError(path + ": empty file");
  if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
  const auto header = split(header_line, '\t');

  const auto& var_order = prognvqa_variable_order();
  std::map<std::string, size_t> column;
  for (size_t i = 0; i < header.size(); ++i) column[trim(header[i])] = i;

  std::vector<std::string> missing;
  for (const auto& mandatory : {std::string("case_id"), std::string("survival")})
    if (!column.count(mandatory)) missing.push_back(mandatory);
  if (!missing.empty()) {
    std::string names;
    for (size_t i = 0; i < missing.size(); ++i) names += (i ? ", " : "") + missing[i];
    throw InputError(path + ": missing mandatory columns: " + names);
  }
  for (const auto& [name, _] : column) {
    if (name == "case_id" || name == "survival" || name == "image" || name == "bbox")
      continue;
    if (std::find(var_order.begin(), var_order.end(), name) == var_order.end())
      throw InputError(path + ": unknown column '" + name + "'");
  }

  std::vector<CaseRecord> out;
  std::set<std::string> seen_ids;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() < header.size()) fields.resize(header.size());
    auto get = [&](const std::string& name) -> std::string {
      auto it = column.find(name);
      return it == column.end() ? "" : trim(fields[it->second]);
    };

    CaseRecord c;
    c.case_id = get("case_id");
    if (c.case_id.empty())
      throw InputError(path + ":" + std::to_string(lineno) + ": empty case_id");
    if (!seen_ids.insert(c.case_id).second)
      throw InputError(path + ":" + std::to_string(lineno) + ": duplicate case id " +
                       c.case_id);

    for (const auto& var : var_order)
      if (column.count(var)) c.clinical_vars.emplace_back(var, get(var));

    c.image_ref = get("image");
    c.modality = c.image_ref.empty() ? Modality::text_only : Modality::text_with_image;
    const std::string bbox = get("bbox");
    if (!bbox.empty()) {
      if (c.modality == Modality::text_only)
        throw InputError(path + ":" + std::to_string(lineno) +
                         ": bbox present without image reference");
      for (const auto& one : split(bbox, ';'))
        if (!trim(one).empty()) c.roi_boxes.push_back(parse_box(one, c.case_id));
    }

    std::ostringstream stem;
    stem << "Patient information:";
    for (const auto& [name, value] : c.clinical_vars) stem << "\n" << name << ": " << value;
    stem << "\n\nBased on the clinical information";
    if (c.modality == Modality::text_with_image) stem << " and the CT scan provided";
    stem << ", what is the patient's survival status at the last follow-up?";
    c.stem = stem.str();
    c.options = {{"A", "Alive"}, {"B", "Deceased"}};

    const std::string survival = lower(get("survival"));
    if (survival == "alive") c.gold_label = "A";
    else if (survival == "deceased" || survival == "dead") c.gold_label = "B";
    else
      throw InputError(path + ":" + std::to_string(lineno) + ": unknown survival value '" +
                       get("survival") + "'");

    c.validate();
    out.push_back(std::move(c));
  }
  return out;
}

// --- transcripts -------------------------------------------------------------

void to_json(nlohmann::json& j, const TranscriptDocument& d) {
  j = {{"version", d.version},
       {"case_id", d.case_id},
       {"config", d.config_snapshot},
       {"messages", d.messages},
       {"roster_timeline", d.roster_timeline},
       {"replies", d.replies},
       {"tool_version", d.tool_version}};
  if (d.verdict) j["verdict"] = *d.verdict;
  if (d.ledger) j["ledger"] = *d.ledger;
}

void from_json(const nlohmann::json& j, TranscriptDocument& d) {
  j.at("version").get_to(d.version);
  if (d.version != kTranscriptVersion)
    throw InputError("incompatible transcript version '" + d.version + "', expected '" +
                     kTranscriptVersion + "'");
  j.at("case_id").get_to(d.case_id);
  d.config_snapshot = j.at("config");
  j.at("messages").get_to(d.messages);
  j.at("roster_timeline").get_to(d.roster_timeline);
  j.at("replies").get_to(d.replies);
  j.at("tool_version").get_to(d.tool_version);
  if (j.contains("verdict")) d.verdict = j["verdict"].get<Verdict>();
  if (j.contains("ledger")) d.ledger = j["ledger"].get<UsageLedger>();
}

TranscriptStore::TranscriptStore(std::string dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
}

std::string TranscriptStore::path_for(const std::string& case_id) const {
  std::string safe;
  for (char c : case_id)
    safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return (fs::path(dir_) / (safe + ".json")).string();
}

bool TranscriptStore::exists(const std::string& case_id) const {
  return fs::exists(path_for(case_id));
}

void TranscriptStore::save(const TranscriptDocument& doc) const {
  const std::string path = path_for(doc.case_id);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw InputError("cannot write transcript: " + tmp);
    out << nlohmann::json(doc).dump(2) << "\n";
    if (!out) throw InputError("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

TranscriptDocument TranscriptStore::load(const std::string& case_id) const {
  const std::string path = path_for(case_id);
  std::ifstream in(path);
  if (!in) throw InputError("transcript not found: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("corrupt transcript " + path + ": " + e.what());
  }
  return j.get<TranscriptDocument>();
}

}  // namespace kamac
