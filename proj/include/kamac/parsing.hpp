#pragma once
// Free-text reply parsers: expert rosters with hierarchy specs, yes/no
// signals, and final-answer labels. parse_yes_no and parse_consensus are
// total; roster and answer parsing surface typed errors.

#include <string>
#include <vector>

#include "kamac/core.hpp"

namespace kamac {

struct RosterParse {
  std::vector<ExpertSpec> experts;
  bool skipped = false;  // the reply opted out of recruitment
  std::vector<std::string> warnings;
};

struct KgSignal {
  bool gap = false;
  std::vector<std::string> requested_roles;
  std::string reason;
  std::vector<std::string> warnings;
};

struct ConsensusSignal {
  bool wants_more_talk = false;
  std::vector<std::string> warnings;
};

// Recognizes numbered items `N. Role - Description - Hierarchy: <spec>`.
// Hierarchy grammar: `Independent`, or chains of role names joined by `==`
// (peer) and `>` / `->` (directed). A `<skip recruitment>` sentinel anywhere
// yields skipped=true. Malformed items are dropped with a warning.
// Throws ParseError only when nothing parsed and the sentinel is absent.
RosterParse parse_roster(const std::string& text);

// First standalone yes/no token wins; ambiguity fails closed (gap=false).
// On "yes", requested role candidates are scraped from the remaining text.
KgSignal parse_yes_no(const std::string& text);

// Same token scan; ambiguity fails open (keep discussing, bounded by R).
ConsensusSignal parse_consensus(const std::string& text);

// Last `Answer: (L)` with L in labels wins; falls back to the last
// standalone parenthesized or bare label token. Throws ParseError when no
// label is found (caller records an abstention).
std::string parse_final_answer(const std::string& text,
                               const std::vector<std::string>& labels);

// Serializes a roster back into the numbered-item format parse_roster reads.
std::string serialize_roster(const std::vector<ExpertSpec>& experts);

}  // namespace kamac
