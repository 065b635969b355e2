#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "dmtag/corpus.hpp"
#include "dmtag/error.hpp"
#include "dmtag/model.hpp"

using namespace dmtag;

namespace {

// Small but regular corpus: determiner-noun-verb turns with enough
// repetition that every word clears the count cutoff.
std::string toy_text() {
  std::ostringstream out;
  const char* nouns[] = {"dog", "cat", "engine"};
  const char* verbs[] = {"runs", "sleeps"};
  for (int d = 0; d < 4; ++d) {
    out << "# dialog: d" << d + 1 << "\n";
    for (int t = 0; t < 6; ++t) {
      const char* spk = t % 2 == 0 ? "u" : "s";
      out << spk << ": the/DT " << nouns[(d + t) % 3] << "/NN " << verbs[t % 2] << "/VB\n";
    }
  }
  return out.str();
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.historyWindow = 2;
  cfg.minCount = 2;
  return cfg;
}

TaggerModel toy_model() {
  Corpus all = parse_corpus(toy_text());
  auto [tr, ho] = split_heldout(all, 0.25);
  return train(tr, ho, small_config());
}

// Joint log2 probability of a tagging, composed from the public per-item
// interfaces. Independent of the beam machinery.
double joint_lp(const TaggerModel& m, const std::vector<HistoryItem>& initial,
                const std::vector<std::string>& words, const std::vector<PosTag>& tags) {
  std::vector<HistoryItem> hist = initial;
  double lp = 0.0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    double pp = pos_probability(m, hist, tags[i]);
    double pw = word_probability(m, hist, tags[i], words[i]);
    if (pp <= 0.0 || pw <= 0.0) return -std::numeric_limits<double>::infinity();
    lp += std::log2(pp) + std::log2(pw);
    hist.push_back({words[i], tags[i]});
  }
  return lp;
}

// Exhaustive argmax over all tag sequences with ties broken toward the
// smaller tag-index sequence.
std::pair<std::vector<PosTag>, double> exhaustive_best(const TaggerModel& m,
                                                       const std::vector<HistoryItem>& initial,
                                                       const std::vector<std::string>& words) {
  std::size_t k = m.tags.size();
  std::vector<std::size_t> idx(words.size(), 0);
  std::vector<PosTag> best;
  double bestLp = -std::numeric_limits<double>::infinity();
  for (;;) {
    std::vector<PosTag> tags;
    for (std::size_t i : idx) tags.push_back(m.tags[i]);
    double lp = joint_lp(m, initial, words, tags);
    if (lp > bestLp) {
      bestLp = lp;
      best = tags;
    }
    std::size_t p = words.size();
    while (p > 0 && ++idx[p - 1] == k) idx[--p] = 0;
    if (p == 0) break;
  }
  return {best, bestLp};
}

}  // namespace

TEST_CASE("config validation rejects out-of-range settings") {
  ModelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.historyWindow = 0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = ModelConfig{};
  cfg.minCount = 0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = ModelConfig{};
  cfg.lambdaGridStep = 0.3;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = ModelConfig{};
  cfg.heldoutFraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("training records the observed tagset in sorted order") {
  TaggerModel m = toy_model();
  CHECK(m.tags == std::vector<PosTag>{"DT", "NN", "VB"});
  CHECK(m.tag_index("NN") == 1);
  CHECK(m.tag_index("XX") == TaggerModel::npos32);
  CHECK(m.posBits > 0);
  CHECK(m.wordTrees.size() == 3);
}

TEST_CASE("tag probabilities sum to one over the model tagset") {
  TaggerModel m = toy_model();
  std::vector<std::vector<HistoryItem>> histories = {
      {},
      {{"the", "DT"}},
      {{"the", "DT"}, {"dog", "NN"}},
      {{"runs", "VB"}, {"", kTurnTag}},
      {{"mystery", "XX"}},  // unseen tag still yields a defined context
  };
  for (const auto& h : histories) {
    double sum = 0.0;
    for (const PosTag& t : m.tags) sum += pos_probability(m, h, t);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(pos_probability(m, {}, "XX") == 0.0);
}

TEST_CASE("word probabilities sum to one over each tag's vocabulary") {
  TaggerModel m = toy_model();
  std::vector<HistoryItem> h = {{"the", "DT"}};
  for (const PosTag& t : m.tags) {
    double sum = 0.0;
    for (const std::string& w : m.vocab.perTag.at(t)) {
      if (w == kUnknownWord) sum += word_probability(m, h, t, "zzzz");
      else sum += word_probability(m, h, t, w);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(word_probability(m, h, "XX", "dog"), DomainError);
  try {
    word_probability(m, h, "XX", "dog");
  } catch (const DomainError& e) {
    CHECK(e.code() == Err::NoWordTree);
  }
}

TEST_CASE("words below the cutoff share the rare-word class") {
  // One extra noun stays below minCount, so NN gets a rare class. The extra
  // dialog goes first because the heldout split takes the corpus tail.
  std::string text = "# dialog: extra\nu: the/DT ox/NN runs/VB\n" + toy_text();
  Corpus all = parse_corpus(text);
  auto [tr, ho] = split_heldout(all, 0.2);
  TaggerModel m = train(tr, ho, small_config());
  REQUIRE(m.vocab.perTag.at("NN").count(kUnknownWord) == 1);
  std::vector<HistoryItem> h = {{"the", "DT"}};
  double pOx = word_probability(m, h, "NN", "ox");
  double pNovel = word_probability(m, h, "NN", "never-seen");
  CHECK(pOx > 0.0);
  CHECK(pOx == pNovel);  // both map to the same class
}

TEST_CASE("training validates its inputs") {
  Corpus all = parse_corpus(toy_text());
  auto [tr, ho] = split_heldout(all, 0.25);
  CHECK_THROWS_AS(train(Corpus{}, ho, small_config()), DomainError);
  CHECK_THROWS_AS(train(tr, Corpus{}, small_config()), DomainError);

  // Heldout uses a tag the training half never saw.
  Corpus badHo = parse_corpus("# dialog: h\nu: we/PRP go/VB\n");
  try {
    train(tr, badHo, small_config());
    FAIL("expected InsufficientData");
  } catch (const DomainError& e) {
    CHECK(e.code() == Err::InsufficientData);
  }
}

TEST_CASE("beam decode matches exhaustive search on short turns") {
  TaggerModel m = toy_model();
  std::vector<std::vector<std::string>> inputs = {
      {"the", "dog", "runs"},
      {"dog", "sleeps"},
      {"the", "the", "dog"},
      {"engine", "runs", "the", "cat"},
  };
  for (const auto& words : inputs) {
    auto [bestTags, bestLp] = exhaustive_best(m, {}, words);
    TagResult r = tag_words(m, words, 100);
    CHECK(r.tags == bestTags);
    CHECK(r.logProb == bestLp);  // same arithmetic path, so exact
  }
}

TEST_CASE("initial history shifts the decode") {
  TaggerModel m = toy_model();
  std::vector<HistoryItem> initial = {{"runs", "VB"}, {"", kTurnTag}};
  std::vector<std::string> words = {"the", "cat", "sleeps"};
  auto [bestTags, bestLp] = exhaustive_best(m, initial, words);
  TagResult r = tag_words(m, words, 100, initial);
  CHECK(r.tags == bestTags);
  CHECK(r.logProb == bestLp);
}

TEST_CASE("narrow beams still return a ranked hypothesis") {
  TaggerModel m = toy_model();
  TagResult r = tag_words(m, {"the", "dog", "runs"}, 1);
  CHECK(r.tags.size() == 3);
  CHECK(std::isfinite(r.logProb));
}

TEST_CASE("decode rejects empty input and zero beams") {
  TaggerModel m = toy_model();
  CHECK_THROWS_AS(tag_words(m, {}, 10), DomainError);
  CHECK_THROWS_AS(tag_words(m, {"dog"}, 0), DomainError);
  try {
    tag_words(m, {}, 10);
  } catch (const DomainError& e) {
    CHECK(e.code() == Err::EmptyInput);
  }
}

TEST_CASE("a single uniform tag gives perplexity equal to vocabulary size") {
  // Single-word turns, window 1: the only context feature is the turn
  // boundary. Turn-initial words are uniform (each dialog starts with a
  // different word) and so are the rest, so no split has any gain and the
  // word distribution stays exactly uniform.
  const char* seqs[4] = {
      "red blue green gray gray green blue red",
      "blue gray red green green red gray blue",
      "green red gray blue blue gray red green",
      "gray green blue red red blue green gray",
  };
  std::ostringstream text;
  for (int d = 0; d < 4; ++d) {
    text << "# dialog: d" << d + 1 << "\n";
    std::istringstream words(seqs[d]);
    std::string w;
    int i = 0;
    while (words >> w) text << (i++ % 2 == 0 ? "u" : "s") << ": " << w << "/NN\n";
  }
  Corpus all = parse_corpus(text.str());
  std::ostringstream hoText;
  hoText << "# dialog: h\n";
  {
    std::istringstream words(seqs[0]);
    std::string w;
    int i = 0;
    while (words >> w) hoText << (i++ % 2 == 0 ? "u" : "s") << ": " << w << "/NN\n";
  }
  Corpus ho = parse_corpus(hoText.str());
  ModelConfig cfg = small_config();
  cfg.historyWindow = 1;
  TaggerModel m = train(all, ho, cfg);
  // One tag, four equiprobable words: every step costs exactly 2 bits.
  double ppl = word_perplexity(m, all, 4);
  CHECK(ppl == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("tagging history feeds back into later probabilities") {
  TaggerModel m = toy_model();
  // Nouns follow determiners and never other nouns in the toy corpus.
  std::vector<HistoryItem> afterDt = {{"the", "DT"}};
  std::vector<HistoryItem> afterNn = {{"dog", "NN"}};
  double pNoun = pos_probability(m, afterDt, "NN");
  double pNounAfterNoun = pos_probability(m, afterNn, "NN");
  CHECK(pNoun > pNounAfterNoun);
}

TEST_CASE("perplexity raises on words no tag can emit") {
  // minCount 1 keeps every word, so no tag has a rare-word class and a novel
  // word is unreachable.
  ModelConfig cfg = small_config();
  cfg.minCount = 1;
  Corpus all = parse_corpus(toy_text());
  auto [tr, ho] = split_heldout(all, 0.25);
  TaggerModel m = train(tr, ho, cfg);
  Corpus novel = parse_corpus("# dialog: n\nu: zebra/NN runs/VB\n");
  try {
    word_perplexity(m, novel, 8);
    FAIL("expected ZeroProbability");
  } catch (const DomainError& e) {
    CHECK(e.code() == Err::ZeroProbability);
  }
  CHECK_THROWS_AS(word_perplexity(m, Corpus{}, 8), DomainError);
  CHECK_THROWS_AS(word_perplexity(m, all, 0), DomainError);
}

TEST_CASE("save and load round-trip the model exactly") {
  TaggerModel m = toy_model();
  std::ostringstream saved;
  save_model(m, saved);
  std::istringstream in(saved.str());
  TaggerModel loaded = load_model(in);

  CHECK(loaded.tags == m.tags);
  CHECK(loaded.posBits == m.posBits);
  CHECK(loaded.wordBits == m.wordBits);
  CHECK(loaded.config.historyWindow == m.config.historyWindow);
  CHECK(loaded.vocab.perTag == m.vocab.perTag);
  CHECK(loaded.posCode == m.posCode);
  CHECK(loaded.wordCode == m.wordCode);

  // Probability queries agree bit for bit.
  std::vector<std::vector<HistoryItem>> histories = {
      {},
      {{"the", "DT"}},
      {{"the", "DT"}, {"dog", "NN"}},
      {{"sleeps", "VB"}, {"", kTurnTag}, {"the", "DT"}},
  };
  for (const auto& h : histories) {
    for (const PosTag& t : m.tags) {
      CHECK(pos_probability(m, h, t) == pos_probability(loaded, h, t));
      for (const std::string& w : {std::string("the"), std::string("dog"), std::string("runs")})
        CHECK(word_probability(m, h, t, w) == word_probability(loaded, h, t, w));
    }
  }

  // Saving the loaded model reproduces the byte stream.
  std::ostringstream saved2;
  save_model(loaded, saved2);
  CHECK(saved.str() == saved2.str());

  // Decoding agrees as well.
  TagResult a = tag_words(m, {"the", "engine", "runs"}, 16);
  TagResult b = tag_words(loaded, {"the", "engine", "runs"}, 16);
  CHECK(a.tags == b.tags);
  CHECK(a.logProb == b.logProb);
}

TEST_CASE("file round-trip matches the stream round-trip") {
  TaggerModel m = toy_model();
  std::string path = "model_roundtrip.bin";
  save_model(m, path);
  TaggerModel loaded = load_model(path);
  CHECK(loaded.tags == m.tags);
  CHECK(pos_probability(m, {}, "DT") == pos_probability(loaded, {}, "DT"));
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_model("no_such_dir/model.bin"), std::runtime_error);
}

TEST_CASE("corrupted streams are rejected by name") {
  TaggerModel m = toy_model();
  std::ostringstream saved;
  save_model(m, saved);
  std::string bytes = saved.str();

  auto code_of_load = [](const std::string& data) {
    std::istringstream in(data);
    try {
      load_model(in);
    } catch (const DomainError& e) {
      return e.code();
    }
    return Err::MalformedLine;  // sentinel: no throw
  };

  std::string badMagic = bytes;
  badMagic[0] = 'X';
  CHECK(code_of_load(badMagic) == Err::CorruptModel);

  std::string badVersion = bytes;
  badVersion[4] = 2;  // little-endian version field
  CHECK(code_of_load(badVersion) == Err::UnsupportedVersion);

  std::string truncated = bytes.substr(0, bytes.size() / 2);
  CHECK(code_of_load(truncated) == Err::CorruptModel);

  CHECK(code_of_load(std::string()) == Err::CorruptModel);
}
