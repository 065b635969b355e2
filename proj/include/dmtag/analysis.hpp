#pragma once

// Read-only corpus analyses of the discourse-marker annotation layer:
// which tags open turns, which conversational moves co-occur with the four
// studied marker words, and how often a turn following a given speech act
// opens with one of them.

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dmtag/corpus.hpp"
#include "dmtag/format.hpp"

namespace dmtag {

// The four marker words tracked by the co-occurrence and adjacency reports.
const std::vector<std::string>& marker_words();  // and, oh, so, well

// Category keys for turn-initial classification, in render order.
const std::vector<std::string>& turn_initial_categories();  // AC..UH_FP, Other

// Two classifications of every turn's opening: `raw` uses the literal first
// token; `filtered` drops turns made only of DM and UH_FP tokens, skips
// leading AC/UH_FP tokens, and classifies the first remaining one. AC and
// UH_FP therefore have no filtered counts (rendered "n.a.").
struct TurnInitialStats {
  std::map<std::string, std::size_t> raw;
  std::map<std::string, std::size_t> filtered;
  std::size_t rawTotal = 0;
  std::size_t filteredTotal = 0;
};

TurnInitialStats turn_initial_counts(const Corpus& c);

// (move, marker word) counts over move-annotated turns whose first
// non-AC/UH_FP token is DM-tagged and one of the four words. Every cell is
// present, zeros included. Fails NoAnnotations when no turn carries a move.
struct MoveCooccurrence {
  std::map<std::pair<Move, std::string>, std::size_t> counts;
  std::size_t annotatedTurns = 0;
};

MoveCooccurrence move_cooccurrence(const Corpus& c);

// For each act-annotated turn with a following turn in the same dialog:
// counts how the FOLLOWING turn opens. A marker column is incremented when
// the following turn's literal first token is DM-tagged and is that word.
// dmTurnPercent is the share of following turns opening with any of the
// four (NaN when the act never occurs before another turn).
struct ActRow {
  std::size_t totalTurns = 0;
  std::map<std::string, std::size_t> markers;
  double dmTurnPercent = 0.0;
};

struct AdjacencyPairReport {
  std::map<Act, ActRow> rows;  // all nine acts present
};

AdjacencyPairReport prior_act_report(const Corpus& c);

std::string render_turn_initial(const TurnInitialStats& s, OutFormat f);
std::string render_move_cooccurrence(const MoveCooccurrence& m, OutFormat f);
std::string render_prior_acts(const AdjacencyPairReport& r, OutFormat f);

}  // namespace dmtag
