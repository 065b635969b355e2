#include "dmtag/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dmtag/detail/textfmt.hpp"
#include "dmtag/error.hpp"

namespace dmtag {

namespace {

using detail::kv_num;
using detail::kv_slug;
using detail::num;
using detail::pad_left;
using detail::pad_right;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_skippable(const PosTag& t) { return t == "AC" || t == "UH_FP"; }

bool is_dm_or_fp(const PosTag& t) { return is_discourse_marker(t) || t == "UH_FP"; }

std::string category_of(const PosTag& t) {
  for (const std::string& cat : turn_initial_categories())
    if (cat == t) return cat;
  return "Other";
}

bool is_marker_word(const std::string& w) {
  const std::vector<std::string>& mw = marker_words();
  return std::find(mw.begin(), mw.end(), w) != mw.end();
}

}  // namespace

const std::vector<std::string>& marker_words() {
  static const std::vector<std::string> words = {"and", "oh", "so", "well"};
  return words;
}

const std::vector<std::string>& turn_initial_categories() {
  static const std::vector<std::string> cats = {"AC", "CC_D", "RB_D", "UH_D", "UH_FP", "Other"};
  return cats;
}

TurnInitialStats turn_initial_counts(const Corpus& c) {
  TurnInitialStats s;
  for (const std::string& cat : turn_initial_categories()) {
    s.raw[cat] = 0;
    if (cat != "AC" && cat != "UH_FP") s.filtered[cat] = 0;
  }
  for (const Dialog& d : c.dialogs) {
    for (const Turn& t : d.turns) {
      ++s.rawTotal;
      ++s.raw[category_of(t.tokens.front().tag)];
      bool allDmFp = true;
      for (const Token& tok : t.tokens)
        if (!is_dm_or_fp(tok.tag)) allDmFp = false;
      if (allDmFp) continue;
      std::size_t i = 0;
      while (is_skippable(t.tokens[i].tag)) ++i;
      ++s.filteredTotal;
      ++s.filtered[category_of(t.tokens[i].tag)];
    }
  }
  return s;
}

MoveCooccurrence move_cooccurrence(const Corpus& c) {
  MoveCooccurrence m;
  for (Move mv : all_moves())
    for (const std::string& w : marker_words()) m.counts[{mv, w}] = 0;
  for (const Dialog& d : c.dialogs) {
    for (const Turn& t : d.turns) {
      if (!t.move) continue;
      ++m.annotatedTurns;
      std::size_t i = 0;
      while (i < t.tokens.size() && is_skippable(t.tokens[i].tag)) ++i;
      if (i == t.tokens.size()) continue;
      const Token& tok = t.tokens[i];
      if (is_discourse_marker(tok.tag) && is_marker_word(tok.word)) ++m.counts[{*t.move, tok.word}];
    }
  }
  if (m.annotatedTurns == 0) fail(Err::NoAnnotations, "no turn carries a move annotation");
  return m;
}

AdjacencyPairReport prior_act_report(const Corpus& c) {
  AdjacencyPairReport r;
  for (Act a : all_acts()) {
    ActRow row;
    for (const std::string& w : marker_words()) row.markers[w] = 0;
    r.rows[a] = row;
  }
  std::size_t pairs = 0;
  for (const Dialog& d : c.dialogs) {
    for (std::size_t t = 0; t + 1 < d.turns.size(); ++t) {
      if (!d.turns[t].act) continue;
      ++pairs;
      ActRow& row = r.rows[*d.turns[t].act];
      ++row.totalTurns;
      const Token& opener = d.turns[t + 1].tokens.front();
      if (is_discourse_marker(opener.tag) && is_marker_word(opener.word))
        ++row.markers[opener.word];
    }
  }
  if (pairs == 0) fail(Err::NoAnnotations, "no act-annotated turn precedes another turn");
  for (auto& [act, row] : r.rows) {
    std::size_t opened = 0;
    for (const auto& [w, n] : row.markers) opened += n;
    row.dmTurnPercent =
        row.totalTurns ? 100.0 * static_cast<double>(opened) / static_cast<double>(row.totalTurns)
                       : kNaN;
  }
  return r;
}

std::string render_turn_initial(const TurnInitialStats& s, OutFormat f) {
  std::ostringstream os;
  auto filteredCell = [&](const std::string& cat) -> std::string {
    auto it = s.filtered.find(cat);
    return it == s.filtered.end() ? "n.a." : std::to_string(it->second);
  };
  switch (f) {
    case OutFormat::Text:
      os << "turn-initial tag distribution\n";
      os << pad_right("", 8) << pad_left("first token", 13) << pad_left("excl. AC/UH_FP", 17)
         << "\n";
      for (const std::string& cat : turn_initial_categories())
        os << pad_right(cat, 8) << pad_left(std::to_string(s.raw.at(cat)), 13)
           << pad_left(filteredCell(cat), 17) << "\n";
      os << pad_right("total", 8) << pad_left(std::to_string(s.rawTotal), 13)
         << pad_left(std::to_string(s.filteredTotal), 17) << "\n";
      break;
    case OutFormat::Csv:
      os << "turn_initial_distribution,first_token,excluding_initial_ac_uhfp\n";
      for (const std::string& cat : turn_initial_categories())
        os << cat << "," << s.raw.at(cat) << "," << filteredCell(cat) << "\n";
      os << "total," << s.rawTotal << "," << s.filteredTotal << "\n";
      break;
    case OutFormat::Kv:
      for (const std::string& cat : turn_initial_categories())
        os << "turn_initial.raw." << kv_slug(cat) << "=" << s.raw.at(cat) << "\n";
      os << "turn_initial.raw.total=" << s.rawTotal << "\n";
      for (const std::string& cat : turn_initial_categories()) {
        if (!s.filtered.count(cat)) continue;
        os << "turn_initial.filtered." << kv_slug(cat) << "=" << s.filtered.at(cat) << "\n";
      }
      os << "turn_initial.filtered.total=" << s.filteredTotal << "\n";
      break;
  }
  return os.str();
}

std::string render_move_cooccurrence(const MoveCooccurrence& m, OutFormat f) {
  std::ostringstream os;
  switch (f) {
    case OutFormat::Text:
      os << "marker words opening move-annotated turns\n";
      os << pad_right("", 22);
      for (const std::string& w : marker_words()) os << pad_left(w, 6);
      os << "\n";
      for (Move mv : all_moves()) {
        os << pad_right(move_name(mv), 22);
        for (const std::string& w : marker_words())
          os << pad_left(std::to_string(m.counts.at({mv, w})), 6);
        os << "\n";
      }
      break;
    case OutFormat::Csv:
      os << "move_cooccurrence";
      for (const std::string& w : marker_words()) os << "," << w;
      os << "\n";
      for (Move mv : all_moves()) {
        os << move_name(mv);
        for (const std::string& w : marker_words()) os << "," << m.counts.at({mv, w});
        os << "\n";
      }
      break;
    case OutFormat::Kv:
      for (Move mv : all_moves())
        for (const std::string& w : marker_words())
          os << "move." << kv_slug(move_name(mv)) << "." << w << "=" << m.counts.at({mv, w})
             << "\n";
      os << "move.annotated_turns=" << m.annotatedTurns << "\n";
      break;
  }
  return os.str();
}

std::string render_prior_acts(const AdjacencyPairReport& r, OutFormat f) {
  std::ostringstream os;
  const PairRole roleOrder[] = {PairRole::Initiates, PairRole::Concludes, PairRole::None};
  auto actsOf = [&](PairRole role) {
    std::vector<Act> acts;
    for (Act a : all_acts())
      if (act_role(a) == role) acts.push_back(a);
    return acts;
  };
  switch (f) {
    case OutFormat::Text:
      os << "openers of the turn after each speech act\n";
      os << pad_right("", 16) << pad_left("turns", 7);
      for (const std::string& w : marker_words()) os << pad_left(w, 6);
      os << pad_left("DM%", 8) << "\n";
      for (PairRole role : roleOrder) {
        os << pair_role_name(role) << " adjacency pair:\n";
        for (Act a : actsOf(role)) {
          const ActRow& row = r.rows.at(a);
          os << "  " << pad_right(act_name(a), 14) << pad_left(std::to_string(row.totalTurns), 7);
          for (const std::string& w : marker_words())
            os << pad_left(std::to_string(row.markers.at(w)), 6);
          os << pad_left(num(row.dmTurnPercent, 1), 8) << "\n";
        }
      }
      break;
    case OutFormat::Csv:
      os << "prior_speech_act,pair_role,turns";
      for (const std::string& w : marker_words()) os << "," << w;
      os << ",dm_turn_percent\n";
      for (PairRole role : roleOrder) {
        for (Act a : actsOf(role)) {
          const ActRow& row = r.rows.at(a);
          os << act_name(a) << "," << pair_role_name(role) << "," << row.totalTurns;
          for (const std::string& w : marker_words()) os << "," << row.markers.at(w);
          os << "," << num(row.dmTurnPercent, 4) << "\n";
        }
      }
      break;
    case OutFormat::Kv:
      for (PairRole role : roleOrder) {
        for (Act a : actsOf(role)) {
          const ActRow& row = r.rows.at(a);
          std::string key = "prior_act." + kv_slug(act_name(a));
          os << key << ".pair_role=" << pair_role_name(role) << "\n";
          os << key << ".turns=" << row.totalTurns << "\n";
          for (const std::string& w : marker_words())
            os << key << "." << w << "=" << row.markers.at(w) << "\n";
          os << key << ".dm_turn_percent=" << kv_num(row.dmTurnPercent) << "\n";
        }
      }
      break;
  }
  return os.str();
}

}  // namespace dmtag
