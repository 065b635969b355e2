#pragma once

// Scoring of trained models against reference corpora: per-token POS error
// rate, discourse-marker recall/precision, word perplexity, k-fold cross
// validation, and a collapse ablation that retrains without DM tags.
//
// Also hosts the synthetic corpus generator used for oracle testing: a tag
// Markov chain with per-tag word emissions whose exact per-word perplexity
// is computable by the forward algorithm.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dmtag/corpus.hpp"
#include "dmtag/format.hpp"
#include "dmtag/model.hpp"

namespace dmtag {

// Rates are percentages. dmCorrect counts tokens where decoded and reference
// tags are both DM tags (not necessarily the same one). Recall/precision are
// NaN when their denominator is zero; renderers print those as "n.a.".
struct EvalReport {
  std::size_t words = 0;
  std::size_t posErrors = 0;
  double posErrorRate = 0.0;
  std::size_t dmActual = 0;
  std::size_t dmGuessed = 0;
  std::size_t dmCorrect = 0;
  std::size_t dmErrors = 0;
  double dmRecall = 0.0;
  double dmPrecision = 0.0;
  double perplexity = 0.0;
  std::size_t beamWidth = 0;

  // Recomputes the rate fields from the count fields.
  void finalize();
};

// Decodes every turn left to right, threading the decoded tags (never the
// reference ones) across turns of a dialog. With strictPos off, mismatches
// whose tags agree after collapse_tag are not counted as POS errors.
// Fails TagsetMismatch when the test corpus uses a tag the model never saw.
EvalReport evaluate(const TaggerModel& m, const Corpus& test, std::size_t beamWidth,
                    bool strictPos = true);

struct CrossValReport {
  std::size_t k = 0;
  std::vector<EvalReport> perFold;
  EvalReport pooled;  // counts summed over folds, rates recomputed
};

// Trains and scores one model per fold; folds may run concurrently (jobs
// threads) and the report is identical regardless of schedule.
CrossValReport cross_validate(const Corpus& c, std::size_t k, const ModelConfig& cfg,
                              bool strictPos = true, std::size_t jobs = 1);

// Cross-validates on c and on collapse_dm_tags(c) with identical fold
// boundaries. Deltas are collapsed minus withDM, so positive means the DM
// tags helped.
struct AblationReport {
  std::size_t k = 0;
  EvalReport withDM;
  EvalReport collapsed;
  double perplexityDelta = 0.0;
  long long posErrorDelta = 0;
};

AblationReport dm_ablation(const Corpus& c, std::size_t k, const ModelConfig& cfg,
                           bool strictPos = true, std::size_t jobs = 1);

// Tag Markov chain with per-tag word emissions. Transition rows are keyed by
// the previous tag; the row keyed by the TURN pseudo-tag is the turn-initial
// distribution (the chain restarts at every turn). Turn lengths are drawn
// from an explicit pmf, independent of content.
struct GeneratorSpec {
  std::map<std::pair<PosTag, PosTag>, double> tagTransition;
  std::map<PosTag, std::map<std::string, double>> wordEmission;
  std::map<std::size_t, double> turnLength;
  std::size_t dialogCount = 0;
  std::size_t turnsPerDialog = 0;
  std::uint64_t seed = 0;

  void validate() const;  // InvalidSpec on any violated invariant
};

struct SyntheticResult {
  Corpus corpus;
  double truePerplexity = 0.0;  // exact per-word perplexity of the sample
};

// Deterministic given the seed, independent of platform: all draws use a
// fixed mt19937_64 -> [0,1) mapping and inverse-CDF sampling.
SyntheticResult generate_synthetic(const GeneratorSpec& spec);

// Exact per-word perplexity of a corpus under the spec, marginalizing tags
// with the forward algorithm per turn (turn lengths conditioned on, not
// scored). Fails ZeroProbability if the corpus is not generable.
double generator_perplexity(const GeneratorSpec& spec, const Corpus& c);

// Built-in specs: "uniform", "chain", "dm-contrast". The dm-contrast spec
// makes DM identity recoverable from short context ("so" is CC_D turn
// initially and SC after "just"; "well" is UH_D turn initially) while the
// collapsed tagset irrecoverably mixes distinct word distributions.
GeneratorSpec preset_spec(const std::string& name);
std::vector<std::string> preset_names();

std::string render_eval(const EvalReport& r, OutFormat f);
std::string render_crossval(const CrossValReport& r, OutFormat f);
std::string render_ablation(const AblationReport& r, OutFormat f);

}  // namespace dmtag
