#include "kamac/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace kamac {

namespace {

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool is_item_start(const std::string& line, std::string* rest) {
  size_t i = 0;
  while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  size_t d = i;
  while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
  if (d == i) return false;
  if (d >= line.size() || (line[d] != '.' && line[d] != ')')) return false;
  *rest = trim(line.substr(d + 1));
  return true;
}

// Chain grammar: role (== | -> | >) role ... ; commas separate chains.
std::vector<HierarchyEdge> parse_hierarchy_spec(const std::string& spec,
                                                std::vector<std::string>* warnings) {
  std::vector<HierarchyEdge> edges;
  const std::string low = lower(trim(spec));
  if (low.empty() || low == "independent" || low == "independent.") return edges;

  std::istringstream chains(spec);
  std::string chain;
  while (std::getline(chains, chain, ',')) {
    std::vector<std::string> roles;
    std::vector<EdgeKind> ops;
    std::string current;
    size_t i = 0;
    auto flush = [&]() {
      std::string r = trim(current);
      current.clear();
      if (!r.empty()) roles.push_back(r);
      return !r.empty();
    };
    while (i < chain.size()) {
      if (chain.compare(i, 2, "==") == 0) {
        if (flush()) ops.push_back(EdgeKind::peer);
        i += 2;
      } else if (chain.compare(i, 2, "->") == 0) {
        if (flush()) ops.push_back(EdgeKind::directed);
        i += 2;
      } else if (chain[i] == '>') {
        if (flush()) ops.push_back(EdgeKind::directed);
        i += 1;
      } else {
        current.push_back(chain[i]);
        i += 1;
      }
    }
    flush();
    if (roles.size() < 2) {
      if (!roles.empty() && warnings)
        warnings->push_back("hierarchy chain with a single role: '" + trim(chain) + "'");
      continue;
    }
    for (size_t k = 0; k + 1 < roles.size() && k < ops.size(); ++k) {
      if (ops[k] == EdgeKind::peer)
        edges.push_back(HierarchyEdge::peer(roles[k], roles[k + 1]));
      else
        edges.push_back(HierarchyEdge::directed(roles[k], roles[k + 1]));
    }
  }
  return edges;
}

// Splits an item body into role / description, tolerating hyphen and
// em-dash separators.
bool split_role_description(const std::string& body, std::string* role,
                            std::string* description) {
  static const std::vector<std::string> seps = {" - ", " — ", "—", " – "};
  size_t best = std::string::npos;
  size_t sep_len = 0;
  for (const auto& sep : seps) {
    size_t pos = body.find(sep);
    if (pos != std::string::npos && pos < best) {
      best = pos;
      sep_len = sep.size();
    }
  }
  if (best == std::string::npos) return false;
  *role = trim(body.substr(0, best));
  *description = trim(body.substr(best + sep_len));
  return !role->empty();
}

// First standalone "yes"/"no" word token, case-insensitive.
// Returns 1 for yes, 0 for no, -1 when neither occurs.
int scan_yes_no_token(const std::string& text) {
  std::string word;
  auto check = [&]() -> int {
    std::string w = lower(word);
    if (w == "yes") return 1;
    if (w == "no") return 0;
    return -1;
  };
  for (char c : text) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      word.push_back(c);
    } else if (!word.empty()) {
      int v = check();
      if (v >= 0) return v;
      word.clear();
    }
  }
  if (!word.empty()) {
    int v = check();
    if (v >= 0) return v;
  }
  return -1;
}

bool starts_capitalized_role(const std::string& s) {
  return !s.empty() && std::isupper(static_cast<unsigned char>(s[0]));
}

// Scrapes "<Role> is needed", "needs <Role>", and "<Role> - reason" shapes.
std::vector<std::string> extract_requested_roles(const std::string& text) {
  std::vector<std::string> roles;
  std::vector<std::string> seen;
  auto add = [&](const std::string& raw) {
    std::string r = trim(raw);
    while (!r.empty() && (r.back() == '.' || r.back() == ',')) r.pop_back();
    r = trim(r);
    if (r.empty()) return;
    std::string norm;
    try {
      norm = normalize_role(r);
    } catch (const ValidationError&) {
      return;
    }
    if (std::find(seen.begin(), seen.end(), norm) == seen.end()) {
      seen.push_back(norm);
      roles.push_back(r);
    }
  };

  // Capitalized multi-word run starting at position i.
  auto capture_role_at = [&](const std::string& s, size_t i) -> std::string {
    std::string out;
    while (i < s.size()) {
      size_t start = i;
      while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      std::string word = s.substr(start, i - start);
      std::string stripped = word;
      while (!stripped.empty() && (stripped.back() == '.' || stripped.back() == ','))
        stripped.pop_back();
      if (!starts_capitalized_role(stripped)) break;
      out += (out.empty() ? "" : " ") + stripped;
      if (stripped.size() != word.size()) break;  // sentence boundary
      while (i < s.size() && s[i] == ' ') ++i;
    }
    return out;
  };

  for (const std::string& line : split_lines(text)) {
    // "<Role> - <reason>" lines, optionally numbered
    std::string body = line;
    std::string rest;
    if (is_item_start(line, &rest)) body = rest;
    std::string role, desc;
    if (split_role_description(trim(body), &role, &desc) && starts_capitalized_role(role) &&
        !desc.empty())
      add(role);
  }

  const std::vector<std::string> cues = {"needs a ", "needs an ", "needs ",
                                         "need a ",  "need an ",  "requires a ",
                                         "requires an ", "requires "};
  const std::string low = lower(text);
  for (const auto& cue : cues) {
    size_t pos = 0;
    while ((pos = low.find(cue, pos)) != std::string::npos) {
      add(capture_role_at(text, pos + cue.size()));
      pos += cue.size();
    }
  }
  // "A <Role> is needed"
  size_t pos = 0;
  while ((pos = low.find(" is needed", pos)) != std::string::npos) {
    size_t start = text.rfind('\n', pos);
    start = (start == std::string::npos) ? 0 : start + 1;
    // last "a "/"an " before the cue on this line
    std::string segment = low.substr(start, pos - start);
    size_t a = segment.rfind(" a ");
    size_t an = segment.rfind(" an ");
    size_t article = std::string::npos;
    size_t skip = 0;
    if (an != std::string::npos && (a == std::string::npos || an > a)) {
      article = an;
      skip = 4;
    } else if (a != std::string::npos) {
      article = a;
      skip = 3;
    }
    if (article != std::string::npos)
      add(capture_role_at(text.substr(start, pos - start), article + skip));
    pos += 10;
  }
  return roles;
}

}  // namespace

RosterParse parse_roster(const std::string& text) {
  RosterParse out;
  if (lower(text).find("<skip recruitment>") != std::string::npos) {
    out.skipped = true;
    return out;
  }

  // Gather numbered items, folding continuation lines into the current item.
  std::vector<std::string> items;
  for (const std::string& line : split_lines(text)) {
    std::string rest;
    if (is_item_start(line, &rest)) {
      items.push_back(rest);
    } else if (!items.empty() && !trim(line).empty()) {
      std::string cont = trim(line);
      if (cont.rfind("- ", 0) == 0) cont = trim(cont.substr(1));
      items.back() += " - " + cont;
    }
  }

  std::vector<std::string> seen;
  for (const std::string& item : items) {
    std::string body = item;
    std::string hierarchy_spec;
    size_t hpos = body.find("Hierarchy:");
    if (hpos == std::string::npos) hpos = body.find("hierarchy:");
    if (hpos != std::string::npos) {
      hierarchy_spec = trim(body.substr(hpos + 10));
      body = trim(body.substr(0, hpos));
      while (!body.empty() && (body.back() == '-' || body.back() == ' ')) body.pop_back();
    }

    ExpertSpec e;
    std::string role, desc;
    if (!split_role_description(trim(body), &role, &desc) || desc.empty()) {
      out.warnings.push_back("dropped malformed roster item: '" + trim(item) + "'");
      continue;
    }
    e.role = collapse_whitespace(role);
    e.scope = desc;
    std::string norm;
    try {
      norm = e.normalized();
    } catch (const ValidationError&) {
      out.warnings.push_back("dropped roster item with empty role");
      continue;
    }
    if (std::find(seen.begin(), seen.end(), norm) != seen.end()) {
      out.warnings.push_back("dropped duplicate role: '" + e.role + "'");
      continue;
    }
    seen.push_back(norm);
    e.edges = parse_hierarchy_spec(hierarchy_spec, &out.warnings);
    out.experts.push_back(std::move(e));
  }

  if (out.experts.empty())
    throw ParseError("parse_roster: no experts parsed and no skip sentinel");
  return out;
}

KgSignal parse_yes_no(const std::string& text) {
  KgSignal sig;
  const int token = scan_yes_no_token(text);
  if (token < 0) {
    // Fail closed: recruitment mutates the team irreversibly.
    sig.gap = false;
    sig.warnings.push_back("ambiguous yes/no reply; treating as no gap");
    return sig;
  }
  sig.gap = token == 1;
  if (sig.gap) {
    sig.requested_roles = extract_requested_roles(text);
    sig.reason = trim(text);
  }
  return sig;
}

ConsensusSignal parse_consensus(const std::string& text) {
  ConsensusSignal sig;
  const int token = scan_yes_no_token(text);
  if (token < 0) {
    // Fail open: more discussion is bounded by the round cap.
    sig.wants_more_talk = true;
    sig.warnings.push_back("ambiguous yes/no reply; continuing discussion");
    return sig;
  }
  sig.wants_more_talk = token == 1;
  return sig;
}

std::string parse_final_answer(const std::string& text,
                               const std::vector<std::string>& labels) {
  if (labels.empty()) throw InputError("parse_final_answer: empty label set");
  auto is_label = [&](const std::string& l) {
    return std::find(labels.begin(), labels.end(), l) != labels.end();
  };

  std::string found;
  const std::string low = lower(text);
  size_t pos = 0;
  while ((pos = low.find("answer:", pos)) != std::string::npos) {
    size_t i = pos + 7;
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
    bool paren = i < text.size() && text[i] == '(';
    if (paren) ++i;
    if (i < text.size()) {
      std::string candidate(1, text[i]);
      bool bounded = (i + 1 >= text.size()) ||
                     !std::isalnum(static_cast<unsigned char>(text[i + 1]));
      if (paren && i + 1 < text.size() && text[i + 1] == ')') bounded = true;
      if (bounded && is_label(candidate)) found = candidate;  // last wins
    }
    pos += 7;
  }
  if (!found.empty()) return found;

  // Fallback: last standalone "(L)" or bare label token.
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '(' && i + 2 < text.size() && text[i + 2] == ')') {
      std::string candidate(1, text[i + 1]);
      if (is_label(candidate)) found = candidate;
    }
  }
  if (!found.empty()) return found;
  for (size_t i = 0; i < text.size(); ++i) {
    bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
    bool right_ok =
        i + 1 >= text.size() || !std::isalnum(static_cast<unsigned char>(text[i + 1]));
    if (left_ok && right_ok) {
      std::string candidate(1, text[i]);
      if (is_label(candidate)) found = candidate;
    }
  }
  if (!found.empty()) return found;
  throw ParseError("parse_final_answer: no answer label found");
}

std::string serialize_roster(const std::vector<ExpertSpec>& experts) {
  std::ostringstream os;
  for (size_t i = 0; i < experts.size(); ++i) {
    const ExpertSpec& e = experts[i];
    os << (i + 1) << ". " << e.role << " - "
       << (e.scope.empty() ? "(no description)" : e.scope) << " - Hierarchy: ";
    if (e.edges.empty()) {
      os << "Independent";
    } else {
      for (size_t k = 0; k < e.edges.size(); ++k) {
        const HierarchyEdge& edge = e.edges[k];
        if (k) os << ", ";
        os << edge.from_role << (edge.kind == EdgeKind::peer ? " == " : " -> ")
           << edge.to_role;
      }
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace kamac
