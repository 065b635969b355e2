#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmtag/clustering.hpp"
#include "dmtag/corpus.hpp"
#include "dmtag/dtree.hpp"

namespace dmtag {

struct ModelConfig {
  std::size_t historyWindow = 4;
  std::size_t beamWidthDefault = 40;
  std::size_t minCount = 2;
  std::size_t minLeafCount = 8;
  double lambdaGridStep = 0.05;
  double heldoutFraction = 0.15;

  void validate() const;  // raises InvalidConfig
};

// One history position as seen by the probability interfaces. A boundary
// between turns is written as a pseudo-item with tag TURN and empty word.
struct HistoryItem {
  std::string word;
  PosTag tag;
};

struct TaggerModel {
  ModelConfig config;
  std::vector<PosTag> tags;  // observed in training, sorted
  ClassHierarchy posHierarchy;
  std::map<PosTag, ClassHierarchy> wordHierarchies;
  Vocabulary vocab;
  DTree posTree;
  std::map<PosTag, DTree> wordTrees;
  std::size_t posBits = 0;   // padded POS code length
  std::size_t wordBits = 0;  // padded word code length

  // Code lookups derived from the hierarchies at train/load time.
  std::map<PosTag, Code> posCode;
  std::map<std::pair<PosTag, std::string>, Code> wordCode;

  std::uint32_t tag_index(const PosTag& t) const;  // npos32 when absent
  static constexpr std::uint32_t npos32 = 0xffffffffu;
};

// Builds vocabulary, class hierarchies and all probability trees. The model
// tagset is the set of tags observed in trainC; a heldout tag unseen in
// training raises InsufficientData.
TaggerModel train(const Corpus& trainC, const Corpus& heldC, const ModelConfig& cfg);

// Probability of tag t at the position following `history` (nearest item
// last). Sums to 1 over the model tagset.
double pos_probability(const TaggerModel& m, std::span<const HistoryItem> history,
                       const PosTag& t);

// Probability of `word` given tag t at the position following `history`.
// Out-of-vocabulary words map to the tag's rare-word class; sums to 1 over
// the tag's vocabulary.
double word_probability(const TaggerModel& m, std::span<const HistoryItem> history,
                        const PosTag& t, const std::string& word);

struct TagResult {
  std::vector<PosTag> tags;
  double logProb = 0.0;  // joint log2 probability of words and tags
};

// Beam-search decode of one turn. The optional initial history carries the
// preceding dialog context (ending with a TURN item, if any).
TagResult tag_words(const TaggerModel& m, const std::vector<std::string>& words,
                    std::size_t beamWidth);
TagResult tag_words(const TaggerModel& m, const std::vector<std::string>& words,
                    std::size_t beamWidth, std::span<const HistoryItem> initialHistory);

// Per-word perplexity 2^(-(1/N) sum log2 Pr(word|previous words)), with tag
// sequences marginalized over the surviving beam and each step renormalized
// by the beam's mass at the previous position.
double word_perplexity(const TaggerModel& m, const Corpus& c, std::size_t beamWidth);

void save_model(const TaggerModel& m, std::ostream& out);
void save_model(const TaggerModel& m, const std::string& path);
TaggerModel load_model(std::istream& in);
TaggerModel load_model(const std::string& path);

}  // namespace dmtag
