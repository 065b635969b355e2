#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dmtag {

// One position of a padded bit code: 0, 1, or absent (pad/unknown).
enum class Bit : std::uint8_t { Zero = 0, One = 1, Absent = 2 };
using Code = std::vector<Bit>;

// One history slot. Codes are padded to the fixed per-model lengths so
// questions can address bit positions uniformly; absent slots carry
// all-absent codes and present=false.
struct ContextSlot {
  Code pos;
  Code word;
  bool present = false;
};

// History slots ordered nearest-first (index 0 is position i-1). Word-level
// trees additionally see the code of the tag being conditioned on.
struct ContextVector {
  std::vector<ContextSlot> history;
  Code currentPos;
  bool hasCurrentPos = false;
};

enum class QField : std::uint8_t { PosBits = 0, WordBits = 1, Presence = 2 };

// Elementary yes/no question about one slot. slot == history size addresses
// the current-POS code (pos bits only).
struct Question {
  std::uint32_t slot = 0;
  QField field = QField::PosBits;
  std::uint32_t bit = 0;

  bool answer(const ContextVector& ctx) const;
};

// All askable questions in tie-break order: by slot, then field
// (pos bits, word bits, presence), then bit index.
std::vector<Question> question_bank(std::size_t window, std::size_t posBits,
                                    std::size_t wordBits, bool withCurrentPos);

struct Event {
  ContextVector ctx;
  std::uint32_t outcome;  // index into the tree's alphabet
};

struct DTreeNode {
  Question q;
  int yes = -1;  // children; leaf iff yes < 0
  int no = -1;
  std::vector<std::uint64_t> counts;  // training outcome counts at this node
  double lambda = 1.0;                // mix weight toward this node's ML estimate
  std::vector<double> smoothed;       // lambda*ML + (1-lambda)*parent smoothed
};

struct DTree {
  std::vector<DTreeNode> nodes;  // node 0 is the root
  std::vector<std::string> alphabet;
  std::size_t window = 0;
  std::size_t posBits = 0;
  std::size_t wordBits = 0;
  bool hasCurrentPos = false;

  std::size_t depth() const;
  std::vector<int> leaf_ids() const;
};

struct GrowConfig {
  std::size_t minLeafCount = 8;
  double lambdaGridStep = 0.05;
  // Floor applied to ML probabilities when scoring heldout events routed
  // through a candidate split, and to zero cells of the per-node ML
  // estimates used in smoothing (renormalized), so no smoothed leaf ever
  // assigns zero to an alphabet outcome.
  double heldoutEpsilon = 1e-6;
};

// Greedy growth from a single root: each leaf takes the bank question with
// the largest training-impurity decrease; the split stands only if both
// children get at least minLeafCount training events and the heldout
// impurity under the children's ML distributions strictly decreases.
DTree grow_tree(const std::vector<Event>& train, const std::vector<Event>& heldout,
                const std::vector<Question>& bank, const std::vector<std::string>& alphabet,
                const GrowConfig& cfg);

// Assigns per-node lambda by grid search on heldout log-likelihood, top
// down; the root interpolates with the uniform distribution. Nodes without
// heldout evidence fall back to their parent (lambda 0). The ML component
// has zero cells floored at heldoutEpsilon and renormalized, so every
// smoothed distribution keeps full support even at lambda 1.
void smooth_tree(DTree& t, const std::vector<Event>& heldout, const GrowConfig& cfg);

int leaf_for(const DTree& t, const ContextVector& ctx);
double probability(const DTree& t, const ContextVector& ctx, std::uint32_t outcome);

// Diagnostic dump: one node per line with question, counts and lambda.
std::string render_tree(const DTree& t);

}  // namespace dmtag
