#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace dmtag {

using PosTag = std::string;

// Reserved pseudo-tag separating turns inside a dialog stream. It is never
// attached to a lexical word; the parser rejects it on tokens.
inline const PosTag kTurnTag = "TURN";

// Class label standing in for words rarer than the vocabulary cutoff.
inline const std::string kUnknownWord = "!unknown";

// Discourse markers are denoted by their POS tag alone: acknowledgments,
// discourse interjections, discourse conjuncts and discourse adverbials.
bool is_discourse_marker(const PosTag& t);

// Conversational-move labels used by the move annotation layer.
enum class Move {
  Restate,
  SummarizePlan,
  RequestForSummary,
  Conclude,
  ElaboratePlan,
  Correction,
  RespondToNewInfo,
};

// Speech-act labels used by the act annotation layer.
enum class Act {
  Check,
  Request,
  YNQuestion,
  Respond,
  YNAnswer,
  Acknowledge,
  Confirm,
  Inform,
  FilledPause,
};

const char* move_name(Move m);
// Whether the act opens an adjacency pair, closes one, or does neither.
enum class PairRole { Initiates, Concludes, None };

PairRole act_role(Act a);
const char* pair_role_name(PairRole r);

const char* act_name(Act a);
std::optional<Move> parse_move(const std::string& label);
std::optional<Act> parse_act(const std::string& label);
const std::vector<Move>& all_moves();
const std::vector<Act>& all_acts();

struct Token {
  std::string word;  // lowercased surface form; never empty
  PosTag tag;
};

struct Turn {
  std::string speaker;
  std::vector<Token> tokens;  // never empty
  std::optional<Move> move;
  std::optional<Act> act;
};

struct Dialog {
  std::string id;  // unique within a corpus
  std::vector<Turn> turns;
};

struct Corpus {
  std::vector<Dialog> dialogs;
  std::set<PosTag> tagset;

  std::size_t word_count() const;
  std::size_t turn_count() const;
};

// The tagset shipped with the toolkit. Callers may pass an extended set to
// parse_corpus when their transcripts use additional tags.
const std::set<PosTag>& stock_tagset();

// Transcript format, one construct per line:
//   # dialog: <id>          starts a dialog
//   <speaker>: w/TAG ...    one turn; words are lowercased, "\/" escapes "/"
//   @move: <label>          annotates the preceding turn
//   @act: <label>           annotates the preceding turn
//   % ...                   comment
// A turn line before any dialog header opens a dialog with a generated id.
Corpus parse_corpus(const std::string& text);
Corpus parse_corpus(const std::string& text, const std::set<PosTag>& tagset);

// Emits the same format; parse(render(parse(x))) == parse(x).
std::string render_corpus(const Corpus& c);

// Rewrites discourse-marker tags to their sentential counterparts:
// CC_D->CC, RB_D->RB, AC->UH_FP, UH_D->UH_FP. Everything else is preserved.
PosTag collapse_tag(const PosTag& t);
Corpus collapse_dm_tags(const Corpus& c);

struct Vocabulary {
  std::map<PosTag, std::set<std::string>> perTag;
  std::size_t minCount = 2;

  // Maps out-of-vocabulary words to kUnknownWord. Returns an empty string
  // when the tag has no entry for the word and no rare-word class either.
  const std::string& map_word(const PosTag& t, const std::string& w) const;
};

// perTag[t] holds the words occurring at least minCount times under t, plus
// kUnknownWord when any word under t fell below the cutoff.
Vocabulary build_vocabulary(const Corpus& c, std::size_t minCount);

struct FoldSplit {
  Corpus train;
  Corpus heldout;
  Corpus test;
  std::size_t k = 0;
  std::size_t foldIndex = 0;
};

// Deterministic dialog-level partition: fold i tests dialogs
// [floor(i*n/k), floor((i+1)*n/k)); the heldout block is carved from the
// tail of the remaining dialogs by heldoutFraction.
FoldSplit split_folds(const Corpus& c, std::size_t k, std::size_t foldIndex,
                      double heldoutFraction = 0.15);

// Same tail rule, used when training without an explicit heldout corpus.
std::pair<Corpus, Corpus> split_heldout(const Corpus& c, double fraction);

}  // namespace dmtag
