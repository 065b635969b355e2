#include "dmtag/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "dmtag/error.hpp"

namespace dmtag {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string unescape_word(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == '/') {
      out.push_back('/');
      ++i;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::string escape_word(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '/') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

bool is_discourse_marker(const PosTag& t) {
  return t == "AC" || t == "UH_D" || t == "CC_D" || t == "RB_D";
}

const char* move_name(Move m) {
  switch (m) {
    case Move::Restate: return "Restate";
    case Move::SummarizePlan: return "Summarize Plan";
    case Move::RequestForSummary: return "Request for summary";
    case Move::Conclude: return "Conclude";
    case Move::ElaboratePlan: return "Elaborate Plan";
    case Move::Correction: return "Correction";
    case Move::RespondToNewInfo: return "Respond to new info";
  }
  return "";
}

PairRole act_role(Act a) {
  switch (a) {
    case Act::Check:
    case Act::Request:
    case Act::YNQuestion: return PairRole::Initiates;
    case Act::Respond:
    case Act::YNAnswer:
    case Act::Acknowledge: return PairRole::Concludes;
    case Act::Confirm:
    case Act::Inform:
    case Act::FilledPause: return PairRole::None;
  }
  return PairRole::None;
}

const char* pair_role_name(PairRole r) {
  switch (r) {
    case PairRole::Initiates: return "initiates";
    case PairRole::Concludes: return "concludes";
    case PairRole::None: return "none";
  }
  return "";
}

const char* act_name(Act a) {
  switch (a) {
    case Act::Check: return "Check";
    case Act::Request: return "Request";
    case Act::YNQuestion: return "Y/N Question";
    case Act::Respond: return "Respond";
    case Act::YNAnswer: return "Y/N Answer";
    case Act::Acknowledge: return "Acknowledge";
    case Act::Confirm: return "Confirm";
    case Act::Inform: return "Inform";
    case Act::FilledPause: return "Filled Pause";
  }
  return "";
}

const std::vector<Move>& all_moves() {
  static const std::vector<Move> v = {
      Move::Restate,       Move::SummarizePlan, Move::RequestForSummary, Move::Conclude,
      Move::ElaboratePlan, Move::Correction,    Move::RespondToNewInfo,
  };
  return v;
}

const std::vector<Act>& all_acts() {
  static const std::vector<Act> v = {
      Act::Check,   Act::Request,     Act::YNQuestion, Act::Respond, Act::YNAnswer,
      Act::Acknowledge, Act::Confirm, Act::Inform,     Act::FilledPause,
  };
  return v;
}

std::optional<Move> parse_move(const std::string& label) {
  for (Move m : all_moves())
    if (label == move_name(m)) return m;
  return std::nullopt;
}

std::optional<Act> parse_act(const std::string& label) {
  for (Act a : all_acts())
    if (label == act_name(a)) return a;
  return std::nullopt;
}

std::size_t Corpus::word_count() const {
  std::size_t n = 0;
  for (const Dialog& d : dialogs)
    for (const Turn& t : d.turns) n += t.tokens.size();
  return n;
}

std::size_t Corpus::turn_count() const {
  std::size_t n = 0;
  for (const Dialog& d : dialogs) n += d.turns.size();
  return n;
}

const std::set<PosTag>& stock_tagset() {
  static const std::set<PosTag> tags = {
      "MUMBLE", "UH_D",  "UH_FP", "FRAGMENT", "CC_D",  "DOD",  "DOP",  "DOZ",  "SC",
      "EX",     "WP",    "WRB",   "RB_D",     "AC",    "TURN", "DO",   "HAVE", "BE",
      "VB",     "HAVED", "HAVEZ", "BED",      "VBZ",   "BEZ",  "VBD",  "VBP",  "HAVEP",
      "BEP",    "BEG",   "HAVEG", "BEN",      "PPREP", "RBR",  "PDT",  "RB",   "VBG",
      "VBN",    "RP",    "MD",    "TO",       "DP",    "PRP",  "CC",   "PREP", "JJ",
      "JJS",    "JJR",   "CD",    "DT",       "PRP$",  "WDT",  "NN",   "NNS",  "NNP",
  };
  return tags;
}

Corpus parse_corpus(const std::string& text) { return parse_corpus(text, stock_tagset()); }

Corpus parse_corpus(const std::string& text, const std::set<PosTag>& tagset) {
  Corpus c;
  c.tagset = tagset;
  std::set<std::string> seenIds;
  std::size_t lineNo = 0;
  std::istringstream in(text);
  std::string raw;

  auto where = [&]() { return "line " + std::to_string(lineNo); };

  while (std::getline(in, raw)) {
    ++lineNo;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '%') continue;

    if (line[0] == '#') {
      std::string rest = trim(line.substr(1));
      if (rest.rfind("dialog:", 0) != 0)
        fail(Err::MalformedLine, where() + ": expected '# dialog: <id>'");
      std::string id = trim(rest.substr(7));
      if (id.empty()) fail(Err::MalformedLine, where() + ": empty dialog id");
      if (!seenIds.insert(id).second)
        fail(Err::MalformedLine, where() + ": duplicate dialog id '" + id + "'");
      c.dialogs.push_back(Dialog{id, {}});
      continue;
    }

    if (line[0] == '@') {
      std::size_t colon = line.find(':');
      if (colon == std::string::npos)
        fail(Err::MalformedLine, where() + ": annotation without ':'");
      std::string key = trim(line.substr(1, colon - 1));
      std::string label = trim(line.substr(colon + 1));
      if (c.dialogs.empty() || c.dialogs.back().turns.empty())
        fail(Err::MalformedLine, where() + ": '@" + key + "' without a preceding turn");
      Turn& turn = c.dialogs.back().turns.back();
      if (key == "move") {
        auto m = parse_move(label);
        if (!m) fail(Err::MalformedLine, where() + ": unknown move label '" + label + "'");
        turn.move = m;
      } else if (key == "act") {
        auto a = parse_act(label);
        if (!a) fail(Err::MalformedLine, where() + ": unknown act label '" + label + "'");
        turn.act = a;
      } else {
        fail(Err::MalformedLine, where() + ": unknown annotation '@" + key + "'");
      }
      continue;
    }

    std::size_t colon = line.find(':');
    if (colon == std::string::npos || colon == 0)
      fail(Err::MalformedLine, where() + ": expected '<speaker>: word/TAG ...'");
    std::string speaker = trim(line.substr(0, colon));
    if (speaker.empty()) fail(Err::MalformedLine, where() + ": empty speaker");

    Turn turn;
    turn.speaker = speaker;
    std::istringstream toks(line.substr(colon + 1));
    std::string tok;
    while (toks >> tok) {
      // The tag separator is the last '/' not escaped as "\/".
      std::size_t sep = std::string::npos;
      for (std::size_t i = tok.size(); i-- > 0;) {
        if (tok[i] == '/' && (i == 0 || tok[i - 1] != '\\')) {
          sep = i;
          break;
        }
      }
      if (sep == std::string::npos || sep + 1 == tok.size())
        fail(Err::MalformedLine, where() + ": token '" + tok + "' has no tag");
      std::string word = lowercase(unescape_word(tok.substr(0, sep)));
      std::string tag = tok.substr(sep + 1);
      if (word.empty())
        fail(Err::MalformedLine, where() + ": token '" + tok + "' has an empty word");
      if (tag == kTurnTag)
        fail(Err::UnknownTag, where() + ": '" + kTurnTag + "' is reserved for turn boundaries");
      if (tagset.find(tag) == tagset.end())
        fail(Err::UnknownTag, where() + ": '" + tag + "'");
      turn.tokens.push_back(Token{word, tag});
    }
    if (turn.tokens.empty()) fail(Err::EmptyTurn, where());

    if (c.dialogs.empty()) {
      std::string id = "d" + std::to_string(c.dialogs.size() + 1);
      while (!seenIds.insert(id).second) id += "'";
      c.dialogs.push_back(Dialog{id, {}});
    }
    c.dialogs.back().turns.push_back(std::move(turn));
  }
  return c;
}

std::string render_corpus(const Corpus& c) {
  std::ostringstream out;
  for (const Dialog& d : c.dialogs) {
    out << "# dialog: " << d.id << "\n";
    for (const Turn& t : d.turns) {
      out << t.speaker << ":";
      for (const Token& tok : t.tokens) out << " " << escape_word(tok.word) << "/" << tok.tag;
      out << "\n";
      if (t.move) out << "@move: " << move_name(*t.move) << "\n";
      if (t.act) out << "@act: " << act_name(*t.act) << "\n";
    }
  }
  return out.str();
}

PosTag collapse_tag(const PosTag& t) {
  if (t == "CC_D") return "CC";
  if (t == "RB_D") return "RB";
  if (t == "AC" || t == "UH_D") return "UH_FP";
  return t;
}

Corpus collapse_dm_tags(const Corpus& c) {
  Corpus out = c;
  out.tagset.insert("CC");
  out.tagset.insert("RB");
  out.tagset.insert("UH_FP");
  for (Dialog& d : out.dialogs)
    for (Turn& t : d.turns)
      for (Token& tok : t.tokens) tok.tag = collapse_tag(tok.tag);
  return out;
}

const std::string& Vocabulary::map_word(const PosTag& t, const std::string& w) const {
  static const std::string empty;
  auto it = perTag.find(t);
  if (it == perTag.end()) return empty;
  auto wit = it->second.find(w);
  if (wit != it->second.end()) return *wit;
  wit = it->second.find(kUnknownWord);
  if (wit != it->second.end()) return *wit;
  return empty;
}

Vocabulary build_vocabulary(const Corpus& c, std::size_t minCount) {
  if (minCount == 0) fail(Err::InvalidConfig, "minCount must be positive");
  Vocabulary v;
  v.minCount = minCount;
  std::map<PosTag, std::map<std::string, std::size_t>> counts;
  for (const Dialog& d : c.dialogs)
    for (const Turn& t : d.turns)
      for (const Token& tok : t.tokens) ++counts[tok.tag][tok.word];
  for (const auto& [tag, words] : counts) {
    std::set<std::string>& entry = v.perTag[tag];
    bool anyRare = false;
    for (const auto& [word, n] : words) {
      if (n >= minCount) entry.insert(word);
      else anyRare = true;
    }
    if (anyRare) entry.insert(kUnknownWord);
  }
  return v;
}

namespace {

Corpus subset(const Corpus& c, std::size_t begin, std::size_t end) {
  Corpus out;
  out.tagset = c.tagset;
  out.dialogs.assign(c.dialogs.begin() + begin, c.dialogs.begin() + end);
  return out;
}

}  // namespace

FoldSplit split_folds(const Corpus& c, std::size_t k, std::size_t foldIndex,
                      double heldoutFraction) {
  std::size_t n = c.dialogs.size();
  if (k < 1 || k > n)
    fail(Err::TooFewDialogs,
         "k=" + std::to_string(k) + " with " + std::to_string(n) + " dialogs");
  if (foldIndex >= k) fail(Err::InvalidConfig, "fold index out of range");
  if (heldoutFraction < 0.0 || heldoutFraction >= 1.0)
    fail(Err::InvalidConfig, "heldout fraction must lie in [0, 1)");

  std::size_t lo = foldIndex * n / k;
  std::size_t hi = (foldIndex + 1) * n / k;

  FoldSplit fs;
  fs.k = k;
  fs.foldIndex = foldIndex;
  fs.test = subset(c, lo, hi);

  Corpus rest;
  rest.tagset = c.tagset;
  for (std::size_t i = 0; i < n; ++i)
    if (i < lo || i >= hi) rest.dialogs.push_back(c.dialogs[i]);

  std::size_t m = rest.dialogs.size();
  std::size_t held = 0;
  if (heldoutFraction > 0.0 && m > 0)
    held = std::min(m, std::max<std::size_t>(
                           1, static_cast<std::size_t>(std::llround(heldoutFraction * m))));
  fs.train = subset(rest, 0, m - held);
  fs.heldout = subset(rest, m - held, m);
  return fs;
}

std::pair<Corpus, Corpus> split_heldout(const Corpus& c, double fraction) {
  if (fraction < 0.0 || fraction >= 1.0)
    fail(Err::InvalidConfig, "heldout fraction must lie in [0, 1)");
  std::size_t n = c.dialogs.size();
  std::size_t held = 0;
  if (fraction > 0.0 && n > 0)
    held = std::min(n, std::max<std::size_t>(
                           1, static_cast<std::size_t>(std::llround(fraction * n))));
  return {subset(c, 0, n - held), subset(c, n - held, n)};
}

}  // namespace dmtag
