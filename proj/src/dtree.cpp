#include "dmtag/dtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dmtag/error.hpp"

namespace dmtag {

namespace {

void validate_context(const DTree& t, const ContextVector& ctx) {
  if (ctx.history.size() != t.window || ctx.hasCurrentPos != t.hasCurrentPos)
    fail(Err::ArityMismatch, "context shape does not match the tree");
  for (const ContextSlot& s : ctx.history)
    if (s.pos.size() != t.posBits || s.word.size() != t.wordBits)
      fail(Err::ArityMismatch, "slot code length does not match the tree");
  if (t.hasCurrentPos && ctx.currentPos.size() != t.posBits)
    fail(Err::ArityMismatch, "current-POS code length does not match the tree");
}

// Weighted entropy of an outcome count vector, in event*bits.
double weighted_entropy(const std::vector<std::uint64_t>& counts, std::uint64_t total) {
  if (total == 0) return 0.0;
  double h = 0.0;
  double n = static_cast<double>(total);
  for (std::uint64_t c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / n;
    h -= static_cast<double>(c) * std::log2(p);
  }
  return h;
}

// Heldout impurity of a set of events under an ML distribution: summed
// negative log-likelihood with probabilities floored at eps.
double heldout_impurity(const std::vector<double>& ml, const std::vector<const Event*>& events,
                        double eps) {
  double imp = 0.0;
  for (const Event* e : events) imp -= std::log2(std::max(ml[e->outcome], eps));
  return imp;
}

std::vector<double> ml_dist(const std::vector<std::uint64_t>& counts, std::uint64_t total) {
  std::vector<double> p(counts.size(), 0.0);
  if (total == 0) return p;
  for (std::size_t i = 0; i < counts.size(); ++i)
    p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return p;
}

// ML estimate used for smoothing: zero cells are floored at eps and the mass
// renormalized, so even a lambda of 1 leaves every outcome reachable. Cells
// with events are untouched when the node has full support.
std::vector<double> floored_ml(const std::vector<std::uint64_t>& counts, std::uint64_t total,
                               double eps) {
  std::vector<double> p = ml_dist(counts, total);
  bool floored = false;
  for (double& x : p)
    if (x <= 0.0) {
      x = eps;
      floored = true;
    }
  if (floored) {
    double s = 0.0;
    for (double x : p) s += x;
    for (double& x : p) x /= s;
  }
  return p;
}

}  // namespace

bool Question::answer(const ContextVector& ctx) const {
  if (slot == ctx.history.size()) return ctx.currentPos[bit] == Bit::One;
  const ContextSlot& s = ctx.history[slot];
  switch (field) {
    case QField::PosBits: return s.pos[bit] == Bit::One;
    case QField::WordBits: return s.word[bit] == Bit::One;
    case QField::Presence: return s.present;
  }
  return false;
}

std::vector<Question> question_bank(std::size_t window, std::size_t posBits,
                                    std::size_t wordBits, bool withCurrentPos) {
  std::vector<Question> bank;
  for (std::uint32_t slot = 0; slot < window; ++slot) {
    for (std::uint32_t b = 0; b < posBits; ++b) bank.push_back({slot, QField::PosBits, b});
    for (std::uint32_t b = 0; b < wordBits; ++b) bank.push_back({slot, QField::WordBits, b});
    bank.push_back({slot, QField::Presence, 0});
  }
  if (withCurrentPos)
    for (std::uint32_t b = 0; b < posBits; ++b)
      bank.push_back({static_cast<std::uint32_t>(window), QField::PosBits, b});
  return bank;
}

std::size_t DTree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].yes >= 0) {
      d[nodes[i].yes] = d[i] + 1;
      d[nodes[i].no] = d[i] + 1;
    }
  }
  return best;
}

std::vector<int> DTree::leaf_ids() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].yes < 0) out.push_back(static_cast<int>(i));
  return out;
}

DTree grow_tree(const std::vector<Event>& train, const std::vector<Event>& heldout,
                const std::vector<Question>& bank, const std::vector<std::string>& alphabet,
                const GrowConfig& cfg) {
  if (train.empty()) fail(Err::EmptyTraining, "no training events");
  if (alphabet.empty()) fail(Err::InvalidConfig, "empty outcome alphabet");
  if (cfg.minLeafCount == 0) fail(Err::InvalidConfig, "minLeafCount must be positive");

  DTree t;
  t.alphabet = alphabet;
  const ContextVector& shape = train.front().ctx;
  t.window = shape.history.size();
  t.hasCurrentPos = shape.hasCurrentPos;
  t.posBits = t.window > 0 ? shape.history.front().pos.size()
                           : (t.hasCurrentPos ? shape.currentPos.size() : 0);
  t.wordBits = t.window > 0 ? shape.history.front().word.size() : 0;

  std::size_t k = alphabet.size();
  auto check = [&](const std::vector<Event>& events) {
    for (const Event& e : events) {
      validate_context(t, e.ctx);
      if (e.outcome >= k) fail(Err::InvalidConfig, "outcome index outside the alphabet");
    }
  };
  check(train);
  check(heldout);

  std::vector<std::vector<const Event*>> nodeTrain, nodeHeld;
  nodeTrain.emplace_back();
  nodeHeld.emplace_back();
  for (const Event& e : train) nodeTrain[0].push_back(&e);
  for (const Event& e : heldout) nodeHeld[0].push_back(&e);

  auto tally = [&](const std::vector<const Event*>& events) {
    std::vector<std::uint64_t> counts(k, 0);
    for (const Event* e : events) ++counts[e->outcome];
    return counts;
  };

  t.nodes.push_back(DTreeNode{});
  t.nodes[0].counts = tally(nodeTrain[0]);

  for (std::size_t id = 0; id < t.nodes.size(); ++id) {
    const std::vector<const Event*>& tr = nodeTrain[id];
    std::uint64_t n = tr.size();
    if (n < 2 * cfg.minLeafCount) continue;
    double parentImp = weighted_entropy(t.nodes[id].counts, n);
    if (parentImp <= 0.0) continue;

    // Best question by training-impurity decrease; the bank is already in
    // tie-break order, so the first strict improvement wins ties.
    double bestGain = 0.0;
    std::size_t bestQ = bank.size();
    std::vector<std::uint64_t> yesCounts(k), bestYes;
    for (std::size_t qi = 0; qi < bank.size(); ++qi) {
      std::fill(yesCounts.begin(), yesCounts.end(), 0);
      std::uint64_t nYes = 0;
      for (const Event* e : tr)
        if (bank[qi].answer(e->ctx)) {
          ++yesCounts[e->outcome];
          ++nYes;
        }
      if (nYes == 0 || nYes == n) continue;
      std::vector<std::uint64_t> noCounts(k);
      for (std::size_t o = 0; o < k; ++o) noCounts[o] = t.nodes[id].counts[o] - yesCounts[o];
      double gain = parentImp - weighted_entropy(yesCounts, nYes) -
                    weighted_entropy(noCounts, n - nYes);
      if (gain > bestGain) {
        bestGain = gain;
        bestQ = qi;
        bestYes = yesCounts;
      }
    }
    if (bestQ == bank.size() || bestGain <= 0.0) continue;

    std::vector<const Event*> trYes, trNo, hoYes, hoNo;
    for (const Event* e : tr) (bank[bestQ].answer(e->ctx) ? trYes : trNo).push_back(e);
    if (trYes.size() < cfg.minLeafCount || trNo.size() < cfg.minLeafCount) continue;
    for (const Event* e : nodeHeld[id]) (bank[bestQ].answer(e->ctx) ? hoYes : hoNo).push_back(e);

    std::vector<std::uint64_t> noCounts(k);
    for (std::size_t o = 0; o < k; ++o) noCounts[o] = t.nodes[id].counts[o] - bestYes[o];
    double before = heldout_impurity(ml_dist(t.nodes[id].counts, n), nodeHeld[id],
                                     cfg.heldoutEpsilon);
    double after = heldout_impurity(ml_dist(bestYes, trYes.size()), hoYes, cfg.heldoutEpsilon) +
                   heldout_impurity(ml_dist(noCounts, trNo.size()), hoNo, cfg.heldoutEpsilon);
    if (!(after < before)) continue;

    int yesId = static_cast<int>(t.nodes.size());
    t.nodes[id].q = bank[bestQ];
    t.nodes[id].yes = yesId;
    t.nodes[id].no = yesId + 1;
    t.nodes.push_back(DTreeNode{});
    t.nodes.push_back(DTreeNode{});
    t.nodes[yesId].counts = std::move(bestYes);
    t.nodes[yesId + 1].counts = std::move(noCounts);
    nodeTrain.push_back(std::move(trYes));
    nodeTrain.push_back(std::move(trNo));
    nodeHeld.push_back(std::move(hoYes));
    nodeHeld.push_back(std::move(hoNo));
  }
  return t;
}

void smooth_tree(DTree& t, const std::vector<Event>& heldout, const GrowConfig& cfg) {
  if (heldout.empty()) fail(Err::EmptyHeldout, "no heldout events for smoothing");
  if (t.nodes.empty()) fail(Err::EmptyTraining, "tree has no nodes");
  double step = cfg.lambdaGridStep;
  if (step <= 0.0 || step > 1.0) fail(Err::InvalidConfig, "lambda grid step out of range");
  std::size_t gridN = static_cast<std::size_t>(std::llround(1.0 / step));
  if (std::fabs(static_cast<double>(gridN) * step - 1.0) > 1e-9)
    fail(Err::InvalidConfig, "lambda grid step must divide 1 evenly");

  std::size_t k = t.alphabet.size();
  std::vector<std::vector<const Event*>> nodeHeld(t.nodes.size());
  for (const Event& e : heldout) {
    validate_context(t, e.ctx);
    if (e.outcome >= k) fail(Err::InvalidConfig, "outcome index outside the alphabet");
    // Events contribute to every node on their root-to-leaf path.
    int id = 0;
    for (;;) {
      nodeHeld[id].push_back(&e);
      if (t.nodes[id].yes < 0) break;
      id = t.nodes[id].q.answer(e.ctx) ? t.nodes[id].yes : t.nodes[id].no;
    }
  }

  std::vector<int> parent(t.nodes.size(), -1);
  for (std::size_t i = 0; i < t.nodes.size(); ++i)
    if (t.nodes[i].yes >= 0) {
      parent[t.nodes[i].yes] = static_cast<int>(i);
      parent[t.nodes[i].no] = static_cast<int>(i);
    }

  // Children always carry larger ids than their parent, so a single
  // ascending pass visits parents first.
  for (std::size_t id = 0; id < t.nodes.size(); ++id) {
    DTreeNode& node = t.nodes[id];
    std::uint64_t total = 0;
    for (std::uint64_t c : node.counts) total += c;
    std::vector<double> ml = floored_ml(node.counts, total, cfg.heldoutEpsilon);
    std::vector<double> parentDist;
    if (parent[id] < 0) parentDist.assign(k, 1.0 / static_cast<double>(k));
    else parentDist = t.nodes[parent[id]].smoothed;

    double bestLl = -std::numeric_limits<double>::infinity();
    double bestLambda = 0.0;
    for (std::size_t i = 0; i <= gridN; ++i) {
      double lambda = i == gridN ? 1.0 : static_cast<double>(i) * step;
      double ll = 0.0;
      for (const Event* e : nodeHeld[id]) {
        double p = lambda * ml[e->outcome] + (1.0 - lambda) * parentDist[e->outcome];
        ll += std::log2(p);
      }
      if (ll > bestLl) {
        bestLl = ll;
        bestLambda = lambda;
      }
    }
    node.lambda = bestLambda;
    node.smoothed.resize(k);
    for (std::size_t o = 0; o < k; ++o)
      node.smoothed[o] = bestLambda * ml[o] + (1.0 - bestLambda) * parentDist[o];
  }
}

int leaf_for(const DTree& t, const ContextVector& ctx) {
  if (t.nodes.empty()) fail(Err::EmptyTraining, "tree has no nodes");
  validate_context(t, ctx);
  int id = 0;
  while (t.nodes[id].yes >= 0) id = t.nodes[id].q.answer(ctx) ? t.nodes[id].yes : t.nodes[id].no;
  return id;
}

double probability(const DTree& t, const ContextVector& ctx, std::uint32_t outcome) {
  if (outcome >= t.alphabet.size()) fail(Err::UnknownItem, "outcome index outside the alphabet");
  int leaf = leaf_for(t, ctx);
  if (t.nodes[leaf].smoothed.empty())
    fail(Err::InvalidConfig, "tree queried before smoothing");
  return t.nodes[leaf].smoothed[outcome];
}

std::string render_tree(const DTree& t) {
  std::ostringstream out;
  const char* fieldName[] = {"pos-bit", "word-bit", "present"};
  std::vector<std::size_t> depth(t.nodes.size(), 0);
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    if (t.nodes[i].yes >= 0) {
      depth[t.nodes[i].yes] = depth[i] + 1;
      depth[t.nodes[i].no] = depth[i] + 1;
    }
    for (std::size_t d = 0; d < depth[i]; ++d) out << "  ";
    std::uint64_t total = 0;
    for (std::uint64_t c : t.nodes[i].counts) total += c;
    if (t.nodes[i].yes >= 0) {
      const Question& q = t.nodes[i].q;
      out << "slot " << q.slot << " " << fieldName[static_cast<int>(q.field)] << " " << q.bit;
    } else {
      out << "leaf";
    }
    out << "  n=" << total << " lambda=" << t.nodes[i].lambda << "\n";
  }
  return out.str();
}

}  // namespace dmtag
