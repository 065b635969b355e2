#include "dmtag/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "dmtag/detail/textfmt.hpp"
#include "dmtag/error.hpp"

namespace dmtag {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

void EvalReport::finalize() {
  posErrorRate = words ? 100.0 * static_cast<double>(posErrors) / static_cast<double>(words) : 0.0;
  dmRecall = dmActual ? 100.0 * static_cast<double>(dmCorrect) / static_cast<double>(dmActual) : kNaN;
  dmPrecision =
      dmGuessed ? 100.0 * static_cast<double>(dmCorrect) / static_cast<double>(dmGuessed) : kNaN;
  dmErrors = (dmActual - dmCorrect) + (dmGuessed - dmCorrect);
}

EvalReport evaluate(const TaggerModel& m, const Corpus& test, std::size_t beamWidth,
                    bool strictPos) {
  for (const Dialog& d : test.dialogs)
    for (const Turn& t : d.turns)
      for (const Token& tok : t.tokens)
        if (m.tag_index(tok.tag) == TaggerModel::npos32)
          fail(Err::TagsetMismatch, "test tag '" + tok.tag + "' unknown to the model");

  EvalReport r;
  r.beamWidth = beamWidth;
  for (const Dialog& d : test.dialogs) {
    std::vector<HistoryItem> history;
    for (const Turn& turn : d.turns) {
      if (!history.empty()) history.push_back({"", kTurnTag});
      std::vector<std::string> words;
      for (const Token& tok : turn.tokens) words.push_back(tok.word);
      TagResult decoded = tag_words(m, words, beamWidth, history);
      for (std::size_t i = 0; i < turn.tokens.size(); ++i) {
        const PosTag& ref = turn.tokens[i].tag;
        const PosTag& dec = decoded.tags[i];
        ++r.words;
        if (dec != ref && (strictPos || collapse_tag(dec) != collapse_tag(ref))) ++r.posErrors;
        bool refDm = is_discourse_marker(ref);
        bool decDm = is_discourse_marker(dec);
        if (refDm) ++r.dmActual;
        if (decDm) ++r.dmGuessed;
        if (refDm && decDm) ++r.dmCorrect;
        history.push_back({turn.tokens[i].word, dec});
      }
    }
  }
  r.perplexity = word_perplexity(m, test, beamWidth);
  r.finalize();
  return r;
}

namespace {

EvalReport pool_reports(const std::vector<EvalReport>& folds, std::size_t beamWidth) {
  EvalReport p;
  p.beamWidth = beamWidth;
  double logPplSum = 0.0;
  for (const EvalReport& f : folds) {
    p.words += f.words;
    p.posErrors += f.posErrors;
    p.dmActual += f.dmActual;
    p.dmGuessed += f.dmGuessed;
    p.dmCorrect += f.dmCorrect;
    logPplSum += static_cast<double>(f.words) * std::log2(f.perplexity);
  }
  p.perplexity = p.words ? std::exp2(logPplSum / static_cast<double>(p.words)) : 0.0;
  p.finalize();
  return p;
}

}  // namespace

CrossValReport cross_validate(const Corpus& c, std::size_t k, const ModelConfig& cfg,
                              bool strictPos, std::size_t jobs) {
  cfg.validate();
  CrossValReport r;
  r.k = k;
  r.perFold.resize(k);

  std::atomic<std::size_t> next{0};
  std::mutex errMutex;
  std::exception_ptr firstError;
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= k) return;
      try {
        FoldSplit fold = split_folds(c, k, i, cfg.heldoutFraction);
        TaggerModel m = train(fold.train, fold.heldout, cfg);
        r.perFold[i] = evaluate(m, fold.test, cfg.beamWidthDefault, strictPos);
      } catch (...) {
        std::lock_guard<std::mutex> lock(errMutex);
        if (!firstError) firstError = std::current_exception();
        return;
      }
    }
  };

  std::size_t nThreads = std::max<std::size_t>(1, std::min(jobs, k));
  if (nThreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nThreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (firstError) std::rethrow_exception(firstError);

  r.pooled = pool_reports(r.perFold, cfg.beamWidthDefault);
  return r;
}

AblationReport dm_ablation(const Corpus& c, std::size_t k, const ModelConfig& cfg,
                           bool strictPos, std::size_t jobs) {
  AblationReport r;
  r.k = k;
  r.withDM = cross_validate(c, k, cfg, strictPos, jobs).pooled;
  r.collapsed = cross_validate(collapse_dm_tags(c), k, cfg, strictPos, jobs).pooled;
  r.perplexityDelta = r.collapsed.perplexity - r.withDM.perplexity;
  r.posErrorDelta = static_cast<long long>(r.collapsed.posErrors) -
                    static_cast<long long>(r.withDM.posErrors);
  return r;
}

void GeneratorSpec::validate() const {
  if (dialogCount < 1) fail(Err::InvalidSpec, "dialogCount must be positive");
  if (turnsPerDialog < 1) fail(Err::InvalidSpec, "turnsPerDialog must be positive");
  if (wordEmission.empty()) fail(Err::InvalidSpec, "no emission rows");
  for (const auto& [tag, row] : wordEmission) {
    if (tag == kTurnTag) fail(Err::InvalidSpec, "TURN cannot emit words");
    if (row.empty()) fail(Err::InvalidSpec, "empty emission row for tag '" + tag + "'");
    double sum = 0.0;
    for (const auto& [word, p] : row) {
      if (word.empty()) fail(Err::InvalidSpec, "empty word under tag '" + tag + "'");
      if (p < 0.0) fail(Err::InvalidSpec, "negative emission probability");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      fail(Err::InvalidSpec, "emission row for tag '" + tag + "' does not sum to 1");
  }
  std::map<PosTag, double> rowSum;
  for (const auto& [key, p] : tagTransition) {
    if (p < 0.0) fail(Err::InvalidSpec, "negative transition probability");
    if (key.second == kTurnTag) fail(Err::InvalidSpec, "TURN cannot be a transition target");
    if (!wordEmission.count(key.second))
      fail(Err::InvalidSpec, "transition target '" + key.second + "' has no emission row");
    rowSum[key.first] += p;
  }
  if (!rowSum.count(kTurnTag)) fail(Err::InvalidSpec, "missing TURN (turn-initial) row");
  for (const auto& [from, sum] : rowSum)
    if (std::fabs(sum - 1.0) > 1e-9)
      fail(Err::InvalidSpec, "transition row for '" + from + "' does not sum to 1");
  // Every reachable tag must be able to continue a turn.
  for (const auto& [key, p] : tagTransition)
    if (p > 0.0 && !rowSum.count(key.second))
      fail(Err::InvalidSpec, "tag '" + key.second + "' has no outgoing transitions");
  if (turnLength.empty()) fail(Err::InvalidSpec, "empty turn-length distribution");
  double lenSum = 0.0;
  for (const auto& [len, p] : turnLength) {
    if (len < 1) fail(Err::InvalidSpec, "turn length must be positive");
    if (p < 0.0) fail(Err::InvalidSpec, "negative turn-length probability");
    lenSum += p;
  }
  if (std::fabs(lenSum - 1.0) > 1e-9) fail(Err::InvalidSpec, "turn-length pmf does not sum to 1");
}

namespace {

// Fixed uniform mapping so sampled corpora are identical on every platform.
double next_unit(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

template <typename Map>
const typename Map::key_type& pick(const Map& dist, double u) {
  double cum = 0.0;
  const typename Map::key_type* last = nullptr;
  for (const auto& [key, p] : dist) {
    if (p <= 0.0) continue;
    cum += p;
    last = &key;
    if (u < cum) return key;
  }
  return *last;  // guards accumulated rounding at u ~ 1
}

std::map<PosTag, double> transition_row(const GeneratorSpec& spec, const PosTag& from) {
  std::map<PosTag, double> row;
  auto it = spec.tagTransition.lower_bound({from, ""});
  for (; it != spec.tagTransition.end() && it->first.first == from; ++it)
    row[it->first.second] = it->second;
  return row;
}

}  // namespace

SyntheticResult generate_synthetic(const GeneratorSpec& spec) {
  spec.validate();
  std::mt19937_64 gen(spec.seed);
  std::map<PosTag, std::map<PosTag, double>> rows;
  for (const auto& [key, p] : spec.tagTransition) rows[key.first][key.second] = p;

  SyntheticResult out;
  for (std::size_t d = 0; d < spec.dialogCount; ++d) {
    Dialog dialog;
    dialog.id = "synth" + std::to_string(d + 1);
    for (std::size_t t = 0; t < spec.turnsPerDialog; ++t) {
      Turn turn;
      turn.speaker = t % 2 == 0 ? "u" : "s";
      std::size_t len = pick(spec.turnLength, next_unit(gen));
      PosTag prev = kTurnTag;
      for (std::size_t i = 0; i < len; ++i) {
        const PosTag& tag = pick(rows.at(prev), next_unit(gen));
        const std::string& word = pick(spec.wordEmission.at(tag), next_unit(gen));
        turn.tokens.push_back({word, tag});
        prev = tag;
      }
      dialog.turns.push_back(std::move(turn));
    }
    out.corpus.dialogs.push_back(std::move(dialog));
  }
  for (const auto& [tag, row] : spec.wordEmission) out.corpus.tagset.insert(tag);
  out.corpus.tagset.insert(kTurnTag);
  out.truePerplexity = generator_perplexity(spec, out.corpus);
  return out;
}

double generator_perplexity(const GeneratorSpec& spec, const Corpus& c) {
  spec.validate();
  if (c.word_count() == 0) fail(Err::EmptyInput, "corpus has no words");
  std::vector<PosTag> tags;
  for (const auto& [tag, row] : spec.wordEmission) tags.push_back(tag);

  auto trans = [&](const PosTag& from, const PosTag& to) {
    auto it = spec.tagTransition.find({from, to});
    return it == spec.tagTransition.end() ? 0.0 : it->second;
  };
  auto emit = [&](const PosTag& tag, const std::string& word) {
    auto it = spec.wordEmission.at(tag).find(word);
    return it == spec.wordEmission.at(tag).end() ? 0.0 : it->second;
  };

  double logSum = 0.0;
  std::size_t n = 0;
  for (const Dialog& d : c.dialogs) {
    for (const Turn& turn : d.turns) {
      std::vector<double> alpha(tags.size());
      for (std::size_t i = 0; i < turn.tokens.size(); ++i) {
        const std::string& word = turn.tokens[i].word;
        std::vector<double> next(tags.size(), 0.0);
        for (std::size_t b = 0; b < tags.size(); ++b) {
          double reach = 0.0;
          if (i == 0) {
            reach = trans(kTurnTag, tags[b]);
          } else {
            for (std::size_t a = 0; a < tags.size(); ++a)
              reach += alpha[a] * trans(tags[a], tags[b]);
          }
          next[b] = reach * emit(tags[b], word);
        }
        alpha = std::move(next);
        ++n;
      }
      double p = 0.0;
      for (double a : alpha) p += a;
      if (p <= 0.0) fail(Err::ZeroProbability, "turn not generable by the spec");
      logSum += std::log2(p);
    }
  }
  return std::exp2(-logSum / static_cast<double>(n));
}

GeneratorSpec preset_spec(const std::string& name) {
  GeneratorSpec s;
  if (name == "uniform") {
    s.wordEmission = {
        {"NN", {{"engine", 0.25}, {"boxcar", 0.25}, {"tanker", 0.25}, {"oranges", 0.25}}},
        {"VB", {{"take", 0.25}, {"send", 0.25}, {"load", 0.25}, {"move", 0.25}}},
    };
    s.tagTransition = {
        {{kTurnTag, "NN"}, 0.5}, {{kTurnTag, "VB"}, 0.5},
        {{"NN", "NN"}, 0.5},     {{"NN", "VB"}, 0.5},
        {{"VB", "NN"}, 0.5},     {{"VB", "VB"}, 0.5},
    };
    s.turnLength = {{2, 0.5}, {4, 0.5}};
    s.dialogCount = 20;
    s.turnsPerDialog = 10;
    s.seed = 1;
    return s;
  }
  if (name == "chain") {
    s.wordEmission = {
        {"PRP", {{"we", 0.9}, {"it", 0.1}}},
        {"VB", {{"take", 0.9}, {"send", 0.1}}},
        {"DT", {{"the", 0.9}, {"that", 0.1}}},
        {"NN", {{"engine", 0.9}, {"boxcar", 0.1}}},
    };
    s.tagTransition = {
        {{kTurnTag, "PRP"}, 1.0},
        {{"PRP", "VB"}, 1.0},
        {{"VB", "DT"}, 1.0},
        {{"DT", "NN"}, 1.0},
        {{"NN", "PRP"}, 1.0},
    };
    s.turnLength = {{4, 0.5}, {5, 0.5}};
    s.dialogCount = 30;
    s.turnsPerDialog = 8;
    s.seed = 2;
    return s;
  }
  if (name == "dm-contrast") {
    // "so" is CC_D turn initially and SC after "just"; "well" is UH_D turn
    // initially only. UH_D and UH_FP share their context but not their
    // words, so collapsing them mixes distributions no context can unmix.
    s.wordEmission = {
        {"CC_D", {{"so", 0.6}, {"and", 0.4}}},
        {"UH_D", {{"well", 1.0}}},
        {"UH_FP", {{"um", 0.6}, {"uh", 0.4}}},
        {"CC", {{"and", 1.0}}},
        {"SC", {{"so", 1.0}}},
        {"RB", {{"just", 1.0}}},
        {"PRP", {{"we", 0.6}, {"it", 0.4}}},
        {"VB", {{"take", 0.4}, {"send", 0.3}, {"load", 0.3}}},
        {"NN", {{"engine", 0.4}, {"boxcar", 0.35}, {"oranges", 0.25}}},
    };
    s.tagTransition = {
        {{kTurnTag, "CC_D"}, 0.25},
        {{kTurnTag, "UH_D"}, 0.2},
        {{kTurnTag, "UH_FP"}, 0.15},
        {{kTurnTag, "PRP"}, 0.4},
        {{"CC_D", "PRP"}, 1.0},
        {{"UH_D", "PRP"}, 1.0},
        {{"UH_FP", "PRP"}, 1.0},
        {{"PRP", "VB"}, 1.0},
        {{"VB", "NN"}, 0.55},
        {{"VB", "RB"}, 0.45},
        {{"RB", "SC"}, 1.0},
        {{"SC", "PRP"}, 1.0},
        {{"NN", "CC"}, 0.5},
        {{"NN", "VB"}, 0.25},
        {{"NN", "NN"}, 0.25},
        {{"CC", "NN"}, 1.0},
    };
    s.turnLength = {{3, 0.3}, {5, 0.4}, {7, 0.3}};
    s.dialogCount = 80;
    s.turnsPerDialog = 8;
    s.seed = 7;
    return s;
  }
  fail(Err::InvalidSpec, "unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() { return {"chain", "dm-contrast", "uniform"}; }

namespace {

using detail::kv_num;
using detail::num;
using detail::pad_left;

void eval_kv(std::ostringstream& os, const std::string& prefix, const EvalReport& r) {
  os << prefix << "words=" << r.words << "\n"
     << prefix << "pos_errors=" << r.posErrors << "\n"
     << prefix << "pos_error_rate=" << kv_num(r.posErrorRate) << "\n"
     << prefix << "dm_actual=" << r.dmActual << "\n"
     << prefix << "dm_guessed=" << r.dmGuessed << "\n"
     << prefix << "dm_correct=" << r.dmCorrect << "\n"
     << prefix << "dm_errors=" << r.dmErrors << "\n"
     << prefix << "dm_recall=" << kv_num(r.dmRecall) << "\n"
     << prefix << "dm_precision=" << kv_num(r.dmPrecision) << "\n"
     << prefix << "perplexity=" << kv_num(r.perplexity) << "\n"
     << prefix << "beam_width=" << r.beamWidth << "\n";
}

const char* kEvalCsvHeader =
    "label,words,pos_errors,pos_error_rate,dm_actual,dm_guessed,dm_correct,"
    "dm_errors,dm_recall,dm_precision,perplexity,beam_width\n";

void eval_csv_row(std::ostringstream& os, const std::string& label, const EvalReport& r) {
  os << label << "," << r.words << "," << r.posErrors << "," << num(r.posErrorRate, 4) << ","
     << r.dmActual << "," << r.dmGuessed << "," << r.dmCorrect << "," << r.dmErrors << ","
     << num(r.dmRecall, 4) << "," << num(r.dmPrecision, 4) << "," << num(r.perplexity, 6) << ","
     << r.beamWidth << "\n";
}

void eval_text_block(std::ostringstream& os, const EvalReport& r) {
  os << "POS error rate  " << pad_left(num(r.posErrorRate, 2) + "%", 8) << "  (" << r.posErrors
     << " of " << r.words << ")\n";
  os << "DM recall       " << pad_left(num(r.dmRecall, 2) + (std::isnan(r.dmRecall) ? "" : "%"), 8)
     << "  (" << r.dmCorrect << " of " << r.dmActual << ")\n";
  os << "DM precision    "
     << pad_left(num(r.dmPrecision, 2) + (std::isnan(r.dmPrecision) ? "" : "%"), 8) << "  ("
     << r.dmCorrect << " of " << r.dmGuessed << ")\n";
  os << "DM errors       " << pad_left(std::to_string(r.dmErrors), 8) << "\n";
  os << "Perplexity      " << pad_left(num(r.perplexity, 2), 8) << "\n";
  os << "Beam width      " << pad_left(std::to_string(r.beamWidth), 8) << "\n";
}

void eval_table_row(std::ostringstream& os, const std::string& label, const EvalReport& r) {
  os << pad_left(label, 8) << pad_left(std::to_string(r.words), 8)
     << pad_left(std::to_string(r.posErrors), 8) << pad_left(num(r.posErrorRate, 2), 8)
     << pad_left(num(r.dmRecall, 2), 9) << pad_left(num(r.dmPrecision, 2), 9)
     << pad_left(num(r.perplexity, 2), 10) << "\n";
}

void eval_table_header(std::ostringstream& os) {
  os << pad_left("", 8) << pad_left("words", 8) << pad_left("posErr", 8) << pad_left("rate%", 8)
     << pad_left("dmRec%", 9) << pad_left("dmPrec%", 9) << pad_left("ppl", 10) << "\n";
}

}  // namespace

std::string render_eval(const EvalReport& r, OutFormat f) {
  std::ostringstream os;
  switch (f) {
    case OutFormat::Text:
      eval_text_block(os, r);
      break;
    case OutFormat::Csv:
      os << kEvalCsvHeader;
      eval_csv_row(os, "all", r);
      break;
    case OutFormat::Kv:
      eval_kv(os, "", r);
      break;
  }
  return os.str();
}

std::string render_crossval(const CrossValReport& r, OutFormat f) {
  std::ostringstream os;
  switch (f) {
    case OutFormat::Text:
      os << r.k << "-fold cross validation\n";
      eval_table_header(os);
      for (std::size_t i = 0; i < r.perFold.size(); ++i)
        eval_table_row(os, "fold " + std::to_string(i + 1), r.perFold[i]);
      eval_table_row(os, "pooled", r.pooled);
      break;
    case OutFormat::Csv:
      os << kEvalCsvHeader;
      for (std::size_t i = 0; i < r.perFold.size(); ++i)
        eval_csv_row(os, "fold" + std::to_string(i + 1), r.perFold[i]);
      eval_csv_row(os, "pooled", r.pooled);
      break;
    case OutFormat::Kv:
      os << "k=" << r.k << "\n";
      for (std::size_t i = 0; i < r.perFold.size(); ++i)
        eval_kv(os, "fold" + std::to_string(i + 1) + ".", r.perFold[i]);
      eval_kv(os, "pooled.", r.pooled);
      break;
  }
  return os.str();
}

std::string render_ablation(const AblationReport& r, OutFormat f) {
  std::ostringstream os;
  switch (f) {
    case OutFormat::Text:
      os << r.k << "-fold ablation: DM tagset vs collapsed tagset\n";
      eval_table_header(os);
      eval_table_row(os, "with DM", r.withDM);
      eval_table_row(os, "no DM", r.collapsed);
      os << "perplexity delta (no DM - with DM)  " << num(r.perplexityDelta, 4) << "\n";
      os << "POS error delta  (no DM - with DM)  " << r.posErrorDelta << "\n";
      break;
    case OutFormat::Csv:
      os << kEvalCsvHeader;
      eval_csv_row(os, "with_dm", r.withDM);
      eval_csv_row(os, "no_dm", r.collapsed);
      break;
    case OutFormat::Kv:
      os << "k=" << r.k << "\n";
      eval_kv(os, "with_dm.", r.withDM);
      eval_kv(os, "no_dm.", r.collapsed);
      os << "perplexity_delta=" << kv_num(r.perplexityDelta) << "\n";
      os << "pos_error_delta=" << r.posErrorDelta << "\n";
      break;
  }
  return os.str();
}

}  // namespace dmtag
