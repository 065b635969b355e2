#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dmtag/dtree.hpp"
#include "dmtag/error.hpp"

using namespace dmtag;

namespace {

Code code_of(const std::string& bits) {
  Code c;
  for (char b : bits) c.push_back(b == '1' ? Bit::One : (b == '0' ? Bit::Zero : Bit::Absent));
  return c;
}

ContextSlot slot_of(const std::string& pos, const std::string& word, bool present) {
  return ContextSlot{code_of(pos), code_of(word), present};
}

ContextVector ctx_of(std::vector<ContextSlot> slots) {
  ContextVector ctx;
  ctx.history = std::move(slots);
  return ctx;
}

// Shape used by most tests here: window 1, one pos bit, no word bits.
ContextVector bit_ctx(char posBit) {
  return ctx_of({slot_of(std::string(1, posBit), "", true)});
}

double entropy_bits(const std::vector<std::uint64_t>& counts) {
  double total = 0.0;
  for (std::uint64_t c : counts) total += static_cast<double>(c);
  double h = 0.0;
  for (std::uint64_t c : counts)
    if (c > 0) h -= static_cast<double>(c) * std::log2(static_cast<double>(c) / total);
  return h;
}

}  // namespace

TEST_CASE("question bank enumerates slots, fields and bits in order") {
  std::vector<Question> bank = question_bank(2, 2, 1, false);
  REQUIRE(bank.size() == 8);  // per slot: 2 pos + 1 word + presence
  CHECK(bank[0].slot == 0);
  CHECK(bank[0].field == QField::PosBits);
  CHECK(bank[0].bit == 0);
  CHECK(bank[1].bit == 1);
  CHECK(bank[2].field == QField::WordBits);
  CHECK(bank[3].field == QField::Presence);
  CHECK(bank[4].slot == 1);
  std::vector<Question> wordBank = question_bank(1, 2, 0, true);
  REQUIRE(wordBank.size() == 5);  // 2 pos + presence, then 2 current-pos bits
  CHECK(wordBank[3].slot == 1);   // slot index == window addresses currentPos
  CHECK(wordBank[3].field == QField::PosBits);
  CHECK(wordBank[4].bit == 1);
}

TEST_CASE("questions read bits, absence and the current tag code") {
  ContextVector ctx = ctx_of({slot_of("10", "0", true), slot_of("--", "-", false)});
  ctx.currentPos = code_of("01");
  ctx.hasCurrentPos = true;
  CHECK(Question{0, QField::PosBits, 0}.answer(ctx));
  CHECK(!Question{0, QField::PosBits, 1}.answer(ctx));
  CHECK(!Question{0, QField::WordBits, 0}.answer(ctx));
  CHECK(Question{0, QField::Presence, 0}.answer(ctx));
  CHECK(!Question{1, QField::PosBits, 0}.answer(ctx));  // absent reads as no
  CHECK(!Question{1, QField::Presence, 0}.answer(ctx));
  CHECK(!Question{2, QField::PosBits, 0}.answer(ctx));  // currentPos bit 0
  CHECK(Question{2, QField::PosBits, 1}.answer(ctx));
}

TEST_CASE("a perfectly separating question is chosen and verified by hand") {
  std::vector<std::string> alphabet = {"x", "y"};
  std::vector<Event> train, heldout;
  for (int i = 0; i < 20; ++i) {
    train.push_back({bit_ctx('1'), 0});
    train.push_back({bit_ctx('0'), 1});
  }
  for (int i = 0; i < 5; ++i) {
    heldout.push_back({bit_ctx('1'), 0});
    heldout.push_back({bit_ctx('0'), 1});
  }
  std::vector<Question> bank = question_bank(1, 1, 0, false);
  GrowConfig cfg;
  DTree t = grow_tree(train, heldout, bank, alphabet, cfg);

  // Oracle: of the two askable questions only the pos bit splits at all, and
  // splitting on it removes all training entropy.
  REQUIRE(t.nodes[0].yes >= 0);
  CHECK(t.nodes[0].q.slot == 0);
  CHECK(t.nodes[0].q.field == QField::PosBits);
  CHECK(t.nodes[0].q.bit == 0);
  const DTreeNode& yes = t.nodes[t.nodes[0].yes];
  const DTreeNode& no = t.nodes[t.nodes[0].no];
  CHECK(yes.counts == std::vector<std::uint64_t>{20, 0});
  CHECK(no.counts == std::vector<std::uint64_t>{0, 20});
  CHECK(entropy_bits(yes.counts) + entropy_bits(no.counts) < entropy_bits(t.nodes[0].counts));
  CHECK(t.depth() == 1);

  smooth_tree(t, heldout, cfg);
  CHECK(probability(t, bit_ctx('1'), 0) > 0.9);
  CHECK(probability(t, bit_ctx('0'), 1) > 0.9);
  // Distributions still sum to one after smoothing.
  CHECK(probability(t, bit_ctx('1'), 0) + probability(t, bit_ctx('1'), 1) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("splits leaving a small child are rejected") {
  std::vector<std::string> alphabet = {"x", "y"};
  std::vector<Event> train, heldout;
  // Only 3 events answer yes: below the minimum leaf size of 8.
  for (int i = 0; i < 3; ++i) train.push_back({bit_ctx('1'), 0});
  for (int i = 0; i < 30; ++i) train.push_back({bit_ctx('0'), 1});
  for (int i = 0; i < 4; ++i) {
    heldout.push_back({bit_ctx('1'), 0});
    heldout.push_back({bit_ctx('0'), 1});
  }
  DTree t = grow_tree(train, heldout, question_bank(1, 1, 0, false), alphabet, GrowConfig{});
  CHECK(t.nodes.size() == 1);
  CHECK(t.depth() == 0);
}

TEST_CASE("splits that do not help heldout are rejected") {
  std::vector<std::string> alphabet = {"x", "y"};
  std::vector<Event> train, heldout;
  for (int i = 0; i < 20; ++i) {
    train.push_back({bit_ctx('1'), 0});
    train.push_back({bit_ctx('0'), 1});
  }
  // Heldout says the feature is anti-correlated, so the split hurts.
  for (int i = 0; i < 5; ++i) {
    heldout.push_back({bit_ctx('1'), 1});
    heldout.push_back({bit_ctx('0'), 0});
  }
  DTree t = grow_tree(train, heldout, question_bank(1, 1, 0, false), alphabet, GrowConfig{});
  CHECK(t.nodes.size() == 1);
}

TEST_CASE("no heldout evidence means no splits") {
  std::vector<std::string> alphabet = {"x", "y"};
  std::vector<Event> train;
  for (int i = 0; i < 20; ++i) {
    train.push_back({bit_ctx('1'), 0});
    train.push_back({bit_ctx('0'), 1});
  }
  DTree t = grow_tree(train, {}, question_bank(1, 1, 0, false), alphabet, GrowConfig{});
  CHECK(t.nodes.size() == 1);
}

TEST_CASE("smoothing weight matches an independent grid search") {
  std::vector<std::string> alphabet = {"a", "b"};
  std::vector<Event> train = {{bit_ctx('1'), 0}, {bit_ctx('1'), 0}, {bit_ctx('1'), 0},
                              {bit_ctx('1'), 1}};
  std::vector<Event> heldout = {{bit_ctx('1'), 0}, {bit_ctx('1'), 1}};
  GrowConfig cfg;
  cfg.lambdaGridStep = 0.25;
  DTree t = grow_tree(train, heldout, question_bank(1, 1, 0, false), alphabet, cfg);
  REQUIRE(t.nodes.size() == 1);  // identical contexts cannot split
  smooth_tree(t, heldout, cfg);

  // Root mixes ML {0.75, 0.25} with uniform. Grid search over the heldout
  // pair picks lambda = 0: log2(l*.75+(1-l)*.5) + log2(l*.25+(1-l)*.5) is
  // maximized at the uniform end.
  double bestLl = -1e300;
  double bestLambda = -1.0;
  for (int i = 0; i <= 4; ++i) {
    double l = i == 4 ? 1.0 : 0.25 * i;
    double ll = std::log2(l * 0.75 + (1 - l) * 0.5) + std::log2(l * 0.25 + (1 - l) * 0.5);
    if (ll > bestLl) {
      bestLl = ll;
      bestLambda = l;
    }
  }
  CHECK(bestLambda == 0.0);
  CHECK(t.nodes[0].lambda == bestLambda);
  CHECK(t.nodes[0].smoothed[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.nodes[0].smoothed[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("heldout matching training pushes lambda to 1") {
  std::vector<std::string> alphabet = {"a", "b"};
  std::vector<Event> train, heldout;
  for (int i = 0; i < 9; ++i) train.push_back({bit_ctx('1'), 0});
  train.push_back({bit_ctx('1'), 1});
  for (int i = 0; i < 9; ++i) heldout.push_back({bit_ctx('1'), 0});
  heldout.push_back({bit_ctx('1'), 1});
  GrowConfig cfg;
  DTree t = grow_tree(train, heldout, question_bank(1, 1, 0, false), alphabet, cfg);
  smooth_tree(t, heldout, cfg);
  // ML {0.9, 0.1} beats every mixture with uniform on this heldout set.
  CHECK(t.nodes[0].lambda == 1.0);
  CHECK(t.nodes[0].smoothed[0] == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("ties in the lambda grid pick the smallest lambda") {
  std::vector<std::string> alphabet = {"a", "b"};
  std::vector<Event> train = {{bit_ctx('1'), 0}, {bit_ctx('1'), 1}};
  std::vector<Event> heldout = {{bit_ctx('1'), 0}};
  GrowConfig cfg;
  DTree t = grow_tree(train, heldout, question_bank(1, 1, 0, false), alphabet, cfg);
  smooth_tree(t, heldout, cfg);
  // ML equals uniform, so every lambda scores the same.
  CHECK(t.nodes[0].lambda == 0.0);
}

TEST_CASE("a child with no heldout inherits its parent distribution") {
  std::vector<std::string> alphabet = {"x", "y"};
  std::vector<Event> train, heldout;
  for (int i = 0; i < 20; ++i) {
    train.push_back({bit_ctx('1'), 0});
    train.push_back({bit_ctx('0'), 1});
  }
  for (int i = 0; i < 3; ++i) {
    heldout.push_back({bit_ctx('1'), 0});
    heldout.push_back({bit_ctx('0'), 1});
  }
  GrowConfig cfg;
  DTree t = grow_tree(train, heldout, question_bank(1, 1, 0, false), alphabet, cfg);
  REQUIRE(t.nodes.size() == 3);
  // Re-smooth with heldout covering only the yes side.
  std::vector<Event> oneSided;
  for (int i = 0; i < 3; ++i) oneSided.push_back({bit_ctx('1'), 0});
  smooth_tree(t, oneSided, cfg);
  int yes = t.nodes[0].yes, no = t.nodes[0].no;
  CHECK(t.nodes[no].lambda == 0.0);
  CHECK(t.nodes[no].smoothed == t.nodes[0].smoothed);
  CHECK(t.nodes[yes].lambda == 1.0);
}

TEST_CASE("leaf routing follows question answers") {
  std::vector<std::string> alphabet = {"x", "y"};
  std::vector<Event> train, heldout;
  for (int i = 0; i < 20; ++i) {
    train.push_back({bit_ctx('1'), 0});
    train.push_back({bit_ctx('0'), 1});
  }
  for (int i = 0; i < 5; ++i) {
    heldout.push_back({bit_ctx('1'), 0});
    heldout.push_back({bit_ctx('0'), 1});
  }
  DTree t = grow_tree(train, heldout, question_bank(1, 1, 0, false), alphabet, GrowConfig{});
  REQUIRE(t.nodes.size() == 3);
  CHECK(leaf_for(t, bit_ctx('1')) == t.nodes[0].yes);
  CHECK(leaf_for(t, bit_ctx('0')) == t.nodes[0].no);
}

TEST_CASE("random trees keep their invariants") {
  std::mt19937_64 g(99);
  for (int inst = 0; inst < 20; ++inst) {
    std::size_t k = 2 + g() % 3;
    std::vector<std::string> alphabet;
    for (std::size_t i = 0; i < k; ++i) alphabet.push_back(std::string(1, char('a' + i)));
    std::size_t window = 1 + g() % 2;
    std::size_t posBits = 1 + g() % 2;

    auto randomCtx = [&]() {
      ContextVector ctx;
      for (std::size_t s = 0; s < window; ++s) {
        bool present = g() % 4 != 0;
        std::string bits;
        for (std::size_t b = 0; b < posBits; ++b)
          bits += present ? char('0' + g() % 2) : '-';
        ctx.history.push_back(slot_of(bits, "", present));
      }
      return ctx;
    };
    std::vector<Event> train, heldout;
    for (int i = 0; i < 120; ++i) {
      ContextVector ctx = randomCtx();
      // Outcome biased by the first bit so there is signal to find.
      std::uint32_t outcome =
          (ctx.history[0].pos[0] == Bit::One && g() % 4 != 0) ? 0 : g() % k;
      train.push_back({ctx, outcome});
    }
    for (int i = 0; i < 40; ++i) {
      ContextVector ctx = randomCtx();
      std::uint32_t outcome =
          (ctx.history[0].pos[0] == Bit::One && g() % 4 != 0) ? 0 : g() % k;
      heldout.push_back({ctx, outcome});
    }
    GrowConfig cfg;
    DTree t = grow_tree(train, heldout, question_bank(window, posBits, 0, false), alphabet, cfg);
    smooth_tree(t, heldout, cfg);

    // Every leaf distribution sums to 1 and keeps every outcome reachable.
    for (int leaf : t.leaf_ids()) {
      double sum = 0.0;
      for (double p : t.nodes[leaf].smoothed) {
        CHECK(p > 0.0);
        sum += p;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    // Every accepted split strictly decreased heldout impurity, re-checked
    // from scratch by routing heldout through the tree.
    std::vector<std::vector<Event>> at(t.nodes.size());
    for (const Event& e : heldout) {
      int id = 0;
      at[0].push_back(e);
      while (t.nodes[id].yes >= 0) {
        id = t.nodes[id].q.answer(e.ctx) ? t.nodes[id].yes : t.nodes[id].no;
        at[id].push_back(e);
      }
    }
    auto impurity = [&](int id, const std::vector<Event>& events) {
      double total = 0.0;
      for (std::uint64_t c : t.nodes[id].counts) total += static_cast<double>(c);
      double h = 0.0;
      for (const Event& e : events) {
        double p = total > 0 ? static_cast<double>(t.nodes[id].counts[e.outcome]) / total : 0.0;
        h -= std::log2(std::max(p, cfg.heldoutEpsilon));
      }
      return h;
    };
    for (std::size_t id = 0; id < t.nodes.size(); ++id) {
      if (t.nodes[id].yes < 0) continue;
      double parent = impurity(static_cast<int>(id), at[id]);
      double children = impurity(t.nodes[id].yes, at[t.nodes[id].yes]) +
                        impurity(t.nodes[id].no, at[t.nodes[id].no]);
      CHECK(children < parent);
    }

    // Smoothing never scores heldout worse than the leaf ML estimates it
    // interpolates (zero cells floored and renormalized, as at lambda 1).
    auto leafMl = [&](int leaf) {
      double total = 0.0;
      for (std::uint64_t c : t.nodes[leaf].counts) total += static_cast<double>(c);
      std::vector<double> p(t.alphabet.size(), 0.0);
      bool floored = false;
      for (std::size_t o = 0; o < p.size(); ++o) {
        p[o] = total > 0 ? static_cast<double>(t.nodes[leaf].counts[o]) / total : 0.0;
        if (p[o] <= 0.0) {
          p[o] = cfg.heldoutEpsilon;
          floored = true;
        }
      }
      if (floored) {
        double s = 0.0;
        for (double x : p) s += x;
        for (double& x : p) x /= s;
      }
      return p;
    };
    double llSmoothed = 0.0, llMl = 0.0;
    for (const Event& e : heldout) {
      int leaf = leaf_for(t, e.ctx);
      llSmoothed += std::log2(t.nodes[leaf].smoothed[e.outcome]);
      llMl += std::log2(leafMl(leaf)[e.outcome]);
    }
    CHECK(llSmoothed >= llMl - 1e-9);
  }
}

TEST_CASE("growth and queries validate their inputs") {
  std::vector<std::string> alphabet = {"x", "y"};
  std::vector<Question> bank = question_bank(1, 1, 0, false);
  CHECK_THROWS_AS(grow_tree({}, {}, bank, alphabet, GrowConfig{}), DomainError);
  try {
    grow_tree({}, {}, bank, alphabet, GrowConfig{});
  } catch (const DomainError& e) {
    CHECK(e.code() == Err::EmptyTraining);
  }

  std::vector<Event> train = {{bit_ctx('1'), 0}, {bit_ctx('0'), 1}};
  CHECK_THROWS_AS(grow_tree(train, {}, bank, {}, GrowConfig{}), DomainError);

  std::vector<Event> badOutcome = {{bit_ctx('1'), 7}};
  CHECK_THROWS_AS(grow_tree(badOutcome, {}, bank, alphabet, GrowConfig{}), DomainError);

  GrowConfig zeroLeaf;
  zeroLeaf.minLeafCount = 0;
  CHECK_THROWS_AS(grow_tree(train, {}, bank, alphabet, zeroLeaf), DomainError);

  // Mixed context shapes.
  std::vector<Event> mixed = {{bit_ctx('1'), 0}, {ctx_of({slot_of("1", "", true), slot_of("0", "", true)}), 1}};
  try {
    grow_tree(mixed, {}, bank, alphabet, GrowConfig{});
    FAIL("expected ArityMismatch");
  } catch (const DomainError& e) {
    CHECK(e.code() == Err::ArityMismatch);
  }

  DTree t = grow_tree(train, {}, bank, alphabet, GrowConfig{});
  // Queried before smoothing.
  CHECK_THROWS_AS(probability(t, bit_ctx('1'), 0), DomainError);
  CHECK_THROWS_AS(smooth_tree(t, {}, GrowConfig{}), DomainError);
  try {
    smooth_tree(t, {}, GrowConfig{});
  } catch (const DomainError& e) {
    CHECK(e.code() == Err::EmptyHeldout);
  }

  GrowConfig badStep;
  badStep.lambdaGridStep = 0.3;
  std::vector<Event> heldout = {{bit_ctx('1'), 0}};
  CHECK_THROWS_AS(smooth_tree(t, heldout, badStep), DomainError);

  smooth_tree(t, heldout, GrowConfig{});
  CHECK_THROWS_AS(probability(t, bit_ctx('1'), 9), DomainError);
  CHECK_THROWS_AS(leaf_for(t, ctx_of({slot_of("1", "", true), slot_of("1", "", true)})),
                  DomainError);
}

TEST_CASE("render_tree names questions and leaves") {
  std::vector<std::string> alphabet = {"x", "y"};
  std::vector<Event> train, heldout;
  for (int i = 0; i < 20; ++i) {
    train.push_back({bit_ctx('1'), 0});
    train.push_back({bit_ctx('0'), 1});
  }
  for (int i = 0; i < 5; ++i) {
    heldout.push_back({bit_ctx('1'), 0});
    heldout.push_back({bit_ctx('0'), 1});
  }
  GrowConfig cfg;
  DTree t = grow_tree(train, heldout, question_bank(1, 1, 0, false), alphabet, cfg);
  smooth_tree(t, heldout, cfg);
  std::string dump = render_tree(t);
  CHECK(dump.find("leaf") != std::string::npos);
  CHECK(dump.find("n=") != std::string::npos);
}
