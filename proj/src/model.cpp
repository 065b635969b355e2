#include "dmtag/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "dmtag/detail/binary_io.hpp"
#include "dmtag/error.hpp"

namespace dmtag {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Code absent_code(std::size_t len) { return Code(len, Bit::Absent); }

Code pad_code(const std::string& bits, std::size_t len) {
  Code c = absent_code(len);
  for (std::size_t i = 0; i < bits.size() && i < len; ++i)
    c[i] = bits[i] == '1' ? Bit::One : Bit::Zero;
  return c;
}

// Code of every leaf of a hierarchy, padded to len.
std::map<std::string, Code> leaf_codes(const ClassHierarchy& h, std::size_t len) {
  std::map<std::string, Code> out;
  for (int leaf : h.leaf_ids()) out[h.nodes[leaf].item] = pad_code(bit_code(h, h.nodes[leaf].item), len);
  return out;
}

double log2_sum_exp(const std::vector<double>& logs) {
  double mx = kNegInf;
  for (double x : logs) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : logs) s += std::exp2(x - mx);
  return mx + std::log2(s);
}

struct Hyp {
  std::vector<std::uint32_t> tags;  // decoded tag indices
  std::vector<HistoryItem> items;   // full history including initial context
  double lp = 0.0;
};

bool hyp_order(const Hyp& a, const Hyp& b) {
  if (a.lp != b.lp) return a.lp > b.lp;
  return a.tags < b.tags;
}

}  // namespace

void ModelConfig::validate() const {
  if (historyWindow < 1) fail(Err::InvalidConfig, "history window must be positive");
  if (beamWidthDefault < 1) fail(Err::InvalidConfig, "beam width must be positive");
  if (minCount < 1) fail(Err::InvalidConfig, "minCount must be positive");
  if (minLeafCount < 1) fail(Err::InvalidConfig, "minLeafCount must be positive");
  if (lambdaGridStep <= 0.0 || lambdaGridStep > 1.0)
    fail(Err::InvalidConfig, "lambda grid step out of range");
  double n = 1.0 / lambdaGridStep;
  if (std::fabs(std::llround(n) - n) > 1e-9)
    fail(Err::InvalidConfig, "lambda grid step must divide 1 evenly");
  if (heldoutFraction < 0.0 || heldoutFraction >= 1.0)
    fail(Err::InvalidConfig, "heldout fraction must lie in [0, 1)");
}

std::uint32_t TaggerModel::tag_index(const PosTag& t) const {
  auto it = std::lower_bound(tags.begin(), tags.end(), t);
  if (it == tags.end() || *it != t) return npos32;
  return static_cast<std::uint32_t>(it - tags.begin());
}

namespace {

// Encodes the last `window` history items, nearest first. Items with tags
// the model has never seen get all-absent codes but stay marked present.
ContextVector encode_history(const TaggerModel& m, std::span<const HistoryItem> history) {
  ContextVector ctx;
  std::size_t w = m.config.historyWindow;
  ctx.history.resize(w);
  for (std::size_t j = 0; j < w; ++j) {
    ContextSlot& slot = ctx.history[j];
    if (j >= history.size()) {
      slot.pos = absent_code(m.posBits);
      slot.word = absent_code(m.wordBits);
      slot.present = false;
      continue;
    }
    const HistoryItem& item = history[history.size() - 1 - j];
    slot.present = true;
    auto pc = m.posCode.find(item.tag);
    slot.pos = pc != m.posCode.end() ? pc->second : absent_code(m.posBits);
    if (item.tag == kTurnTag) {
      slot.word = absent_code(m.wordBits);
    } else {
      const std::string& mapped = m.vocab.map_word(item.tag, item.word);
      auto wc = m.wordCode.find({item.tag, mapped});
      slot.word = wc != m.wordCode.end() ? wc->second : absent_code(m.wordBits);
    }
  }
  return ctx;
}

std::vector<HistoryItem> dialog_stream(const Dialog& d) {
  std::vector<HistoryItem> stream;
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    if (t > 0) stream.push_back({"", kTurnTag});
    for (const Token& tok : d.turns[t].tokens) stream.push_back({tok.word, tok.tag});
  }
  return stream;
}

struct EventSets {
  std::vector<Event> pos;
  std::map<PosTag, std::vector<Event>> word;
};

EventSets build_events(const TaggerModel& m, const Corpus& c,
                       const std::map<PosTag, std::map<std::string, std::uint32_t>>& wordIndex) {
  EventSets ev;
  for (const Dialog& d : c.dialogs) {
    std::vector<HistoryItem> stream = dialog_stream(d);
    for (std::size_t i = 0; i < stream.size(); ++i) {
      if (stream[i].tag == kTurnTag) continue;
      std::span<const HistoryItem> before(stream.data(), i);
      ContextVector ctx = encode_history(m, before);
      std::uint32_t tagIdx = m.tag_index(stream[i].tag);
      ev.pos.push_back(Event{ctx, tagIdx});
      // Heldout words outside the tag's vocabulary (no rare class to absorb
      // them) carry no word-tree outcome and are skipped.
      const std::string& mapped = m.vocab.map_word(stream[i].tag, stream[i].word);
      if (mapped.empty()) continue;
      ctx.hasCurrentPos = true;
      ctx.currentPos = m.posCode.at(stream[i].tag);
      ev.word[stream[i].tag].push_back(Event{std::move(ctx), wordIndex.at(stream[i].tag).at(mapped)});
    }
  }
  return ev;
}

}  // namespace

TaggerModel train(const Corpus& trainC, const Corpus& heldC, const ModelConfig& cfg) {
  cfg.validate();
  if (trainC.word_count() == 0) fail(Err::EmptyTraining, "training corpus has no words");
  if (heldC.word_count() == 0) fail(Err::EmptyHeldout, "heldout corpus has no words");

  TaggerModel m;
  m.config = cfg;
  m.vocab = build_vocabulary(trainC, cfg.minCount);
  for (const auto& [tag, words] : m.vocab.perTag) m.tags.push_back(tag);
  std::sort(m.tags.begin(), m.tags.end());

  for (const Dialog& d : heldC.dialogs)
    for (const Turn& t : d.turns)
      for (const Token& tok : t.tokens)
        if (m.tag_index(tok.tag) == TaggerModel::npos32)
          fail(Err::InsufficientData, "tag '" + tok.tag + "' has zero training events");

  m.posHierarchy = cluster_pos(trainC);
  m.wordHierarchies = cluster_words(trainC, m.vocab);
  m.posBits = m.posHierarchy.depth();
  m.wordBits = 0;
  for (const auto& [tag, h] : m.wordHierarchies) m.wordBits = std::max(m.wordBits, h.depth());

  for (const auto& [item, code] : leaf_codes(m.posHierarchy, m.posBits)) m.posCode[item] = code;
  for (const auto& [tag, h] : m.wordHierarchies)
    for (const auto& [word, code] : leaf_codes(h, m.wordBits)) m.wordCode[{tag, word}] = code;

  // Outcome alphabets: sorted tag list for the POS tree, each tag's sorted
  // vocabulary for its word tree.
  std::map<PosTag, std::map<std::string, std::uint32_t>> wordIndex;
  std::map<PosTag, std::vector<std::string>> wordAlphabet;
  for (const auto& [tag, words] : m.vocab.perTag) {
    std::uint32_t i = 0;
    for (const std::string& w : words) {
      wordIndex[tag][w] = i++;
      wordAlphabet[tag].push_back(w);
    }
  }

  EventSets trainEv = build_events(m, trainC, wordIndex);
  EventSets heldEv = build_events(m, heldC, wordIndex);

  GrowConfig gc{cfg.minLeafCount, cfg.lambdaGridStep, 1e-6};
  std::vector<Question> posBank = question_bank(cfg.historyWindow, m.posBits, m.wordBits, false);
  std::vector<Question> wordBank = question_bank(cfg.historyWindow, m.posBits, m.wordBits, true);

  m.posTree = grow_tree(trainEv.pos, heldEv.pos, posBank, m.tags, gc);
  smooth_tree(m.posTree, heldEv.pos, gc);

  for (const PosTag& tag : m.tags) {
    const std::vector<Event>& tr = trainEv.word[tag];
    const std::vector<Event>& ho = heldEv.word[tag];
    DTree wt = grow_tree(tr, ho, wordBank, wordAlphabet[tag], gc);
    // A tag absent from heldout smooths against its training events so its
    // distribution keeps the observed word frequencies.
    smooth_tree(wt, ho.empty() ? tr : ho, gc);
    m.wordTrees[tag] = std::move(wt);
  }
  return m;
}

double pos_probability(const TaggerModel& m, std::span<const HistoryItem> history,
                       const PosTag& t) {
  std::uint32_t idx = m.tag_index(t);
  if (idx == TaggerModel::npos32) return 0.0;
  return probability(m.posTree, encode_history(m, history), idx);
}

double word_probability(const TaggerModel& m, std::span<const HistoryItem> history,
                        const PosTag& t, const std::string& word) {
  auto it = m.wordTrees.find(t);
  if (it == m.wordTrees.end()) fail(Err::NoWordTree, "no word tree for tag '" + t + "'");
  const std::string& mapped = m.vocab.map_word(t, word);
  if (mapped.empty()) return 0.0;
  const std::vector<std::string>& alphabet = it->second.alphabet;
  auto w = std::lower_bound(alphabet.begin(), alphabet.end(), mapped);
  if (w == alphabet.end() || *w != mapped) return 0.0;
  ContextVector ctx = encode_history(m, history);
  ctx.hasCurrentPos = true;
  ctx.currentPos = m.posCode.count(t) ? m.posCode.at(t) : absent_code(m.posBits);
  return probability(it->second, ctx, static_cast<std::uint32_t>(w - alphabet.begin()));
}

namespace {

// Extends every hypothesis by one word over all tags. Returns the log2 of
// the summed extension mass minus the log2 of the incoming beam mass (the
// beam-marginal word probability), or NaN when not requested.
double extend_beam(const TaggerModel& m, std::vector<Hyp>& beam, const std::string& word,
                   std::size_t beamWidth, bool wantMarginal) {
  std::vector<double> inMass;
  std::vector<Hyp> next;
  next.reserve(beam.size() * m.tags.size());
  for (const Hyp& h : beam) {
    if (wantMarginal) inMass.push_back(h.lp);
    ContextVector posCtx = encode_history(m, h.items);
    ContextVector wordCtx = posCtx;
    wordCtx.hasCurrentPos = true;
    for (std::uint32_t ti = 0; ti < m.tags.size(); ++ti) {
      const PosTag& tag = m.tags[ti];
      double pPos = probability(m.posTree, posCtx, ti);
      const DTree& wt = m.wordTrees.at(tag);
      const std::string& mapped = m.vocab.map_word(tag, word);
      double pWord = 0.0;
      if (!mapped.empty()) {
        auto w = std::lower_bound(wt.alphabet.begin(), wt.alphabet.end(), mapped);
        if (w != wt.alphabet.end() && *w == mapped) {
          wordCtx.currentPos = m.posCode.at(tag);
          pWord = probability(wt, wordCtx, static_cast<std::uint32_t>(w - wt.alphabet.begin()));
        }
      }
      double lp = h.lp + (pPos > 0.0 && pWord > 0.0 ? std::log2(pPos) + std::log2(pWord) : kNegInf);
      Hyp ext;
      ext.tags = h.tags;
      ext.tags.push_back(ti);
      ext.items = h.items;
      ext.items.push_back({word, tag});
      ext.lp = lp;
      next.push_back(std::move(ext));
    }
  }
  double marginal = std::numeric_limits<double>::quiet_NaN();
  if (wantMarginal) {
    std::vector<double> outMass;
    for (const Hyp& h : next) outMass.push_back(h.lp);
    marginal = log2_sum_exp(outMass) - log2_sum_exp(inMass);
  }
  std::sort(next.begin(), next.end(), hyp_order);
  if (next.size() > beamWidth) next.resize(beamWidth);
  beam = std::move(next);
  return marginal;
}

}  // namespace

TagResult tag_words(const TaggerModel& m, const std::vector<std::string>& words,
                    std::size_t beamWidth) {
  return tag_words(m, words, beamWidth, {});
}

TagResult tag_words(const TaggerModel& m, const std::vector<std::string>& words,
                    std::size_t beamWidth, std::span<const HistoryItem> initialHistory) {
  if (words.empty()) fail(Err::EmptyInput, "no words to tag");
  if (beamWidth < 1) fail(Err::InvalidConfig, "beam width must be positive");
  std::vector<Hyp> beam(1);
  beam[0].items.assign(initialHistory.begin(), initialHistory.end());
  for (const std::string& word : words) extend_beam(m, beam, word, beamWidth, false);
  const Hyp& best = beam.front();
  TagResult r;
  r.logProb = best.lp;
  for (std::uint32_t ti : best.tags) r.tags.push_back(m.tags[ti]);
  return r;
}

double word_perplexity(const TaggerModel& m, const Corpus& c, std::size_t beamWidth) {
  if (beamWidth < 1) fail(Err::InvalidConfig, "beam width must be positive");
  if (c.word_count() == 0) fail(Err::EmptyInput, "corpus has no words");
  double total = 0.0;
  std::size_t n = 0;
  for (const Dialog& d : c.dialogs) {
    std::vector<Hyp> beam(1);
    for (const Turn& turn : d.turns) {
      if (!beam.front().items.empty())
        for (Hyp& h : beam) h.items.push_back({"", kTurnTag});
      for (const Token& tok : turn.tokens) {
        double marginal = extend_beam(m, beam, tok.word, beamWidth, true);
        if (marginal == kNegInf || std::isnan(marginal))
          fail(Err::ZeroProbability, "word '" + tok.word + "' has zero beam mass");
        total += marginal;
        ++n;
      }
    }
  }
  return std::exp2(-total / static_cast<double>(n));
}

namespace {

constexpr char kMagic[5] = "DMTK";
constexpr std::uint32_t kVersion = 1;

void write_hierarchy(detail::BinaryWriter& w, const ClassHierarchy& h) {
  std::vector<int> leaves = h.leaf_ids();
  w.u32(static_cast<std::uint32_t>(leaves.size()));
  for (int id : leaves) {
    w.str(h.nodes[id].item);
    w.u64(h.nodes[id].count);
    w.str(bit_code(h, h.nodes[id].item));
  }
}

ClassHierarchy read_hierarchy(detail::BinaryReader& r) {
  std::uint32_t n = r.u32();
  if (n == 0) fail(Err::CorruptModel, "hierarchy with no leaves");
  ClassHierarchy h;
  h.nodes.push_back(HierarchyNode{});
  h.roots.push_back(0);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string item = r.str();
    std::uint64_t count = r.u64();
    std::string code = r.str();
    int id = 0;
    for (char b : code) {
      if (b != '0' && b != '1') fail(Err::CorruptModel, "invalid bit code");
      // Look the child up by value: push_back may move the node array.
      int child = b == '0' ? h.nodes[id].top : h.nodes[id].bottom;
      if (child < 0) {
        child = static_cast<int>(h.nodes.size());
        h.nodes.push_back(HierarchyNode{});
        (b == '0' ? h.nodes[id].top : h.nodes[id].bottom) = child;
      }
      id = child;
      if (!h.nodes[id].item.empty()) fail(Err::CorruptModel, "bit code under a leaf");
    }
    if (h.nodes[id].top >= 0 || !h.nodes[id].item.empty())
      fail(Err::CorruptModel, "bit code collision");
    if (item.empty()) fail(Err::CorruptModel, "empty leaf item");
    h.nodes[id].item = item;
    h.nodes[id].count = count;
  }
  // Internal counts are the sums of their leaves; every internal node needs
  // both children for codes to be prefix-free.
  std::vector<int> order;
  for (std::size_t i = 0; i < h.nodes.size(); ++i) order.push_back(static_cast<int>(i));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    HierarchyNode& node = h.nodes[*it];
    if (node.item.empty()) {
      if (node.top < 0 || node.bottom < 0) fail(Err::CorruptModel, "dangling hierarchy node");
      node.count = h.nodes[node.top].count + h.nodes[node.bottom].count;
    }
  }
  return h;
}

void write_tree(detail::BinaryWriter& w, const DTree& t) {
  w.u64(t.window);
  w.u32(static_cast<std::uint32_t>(t.posBits));
  w.u32(static_cast<std::uint32_t>(t.wordBits));
  w.u8(t.hasCurrentPos ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(t.alphabet.size()));
  for (const std::string& s : t.alphabet) w.str(s);
  w.u32(static_cast<std::uint32_t>(t.nodes.size()));
  for (const DTreeNode& n : t.nodes) {
    w.u32(static_cast<std::uint32_t>(n.yes));
    w.u32(static_cast<std::uint32_t>(n.no));
    w.u32(n.q.slot);
    w.u8(static_cast<std::uint8_t>(n.q.field));
    w.u32(n.q.bit);
    w.f64(n.lambda);
    for (std::uint64_t c : n.counts) w.u64(c);
    w.u8(n.smoothed.empty() ? 0 : 1);
    for (double p : n.smoothed) w.f64(p);
  }
}

DTree read_tree(detail::BinaryReader& r) {
  DTree t;
  t.window = r.u64();
  t.posBits = r.u32();
  t.wordBits = r.u32();
  t.hasCurrentPos = r.u8() != 0;
  std::uint32_t k = r.u32();
  for (std::uint32_t i = 0; i < k; ++i) t.alphabet.push_back(r.str());
  std::uint32_t n = r.u32();
  if (n == 0) fail(Err::CorruptModel, "tree with no nodes");
  for (std::uint32_t i = 0; i < n; ++i) {
    DTreeNode node;
    node.yes = static_cast<int>(r.u32());
    node.no = static_cast<int>(r.u32());
    node.q.slot = r.u32();
    node.q.field = static_cast<QField>(r.u8());
    node.q.bit = r.u32();
    node.lambda = r.f64();
    node.counts.resize(k);
    for (std::uint32_t o = 0; o < k; ++o) node.counts[o] = r.u64();
    bool smoothed = r.u8() != 0;
    if (smoothed) {
      node.smoothed.resize(k);
      for (std::uint32_t o = 0; o < k; ++o) node.smoothed[o] = r.f64();
    }
    if (node.yes >= 0 && (static_cast<std::uint32_t>(node.yes) >= n ||
                          static_cast<std::uint32_t>(node.no) >= n))
      fail(Err::CorruptModel, "tree child index out of range");
    t.nodes.push_back(std::move(node));
  }
  return t;
}

}  // namespace

void save_model(const TaggerModel& m, std::ostream& out) {
  detail::BinaryWriter w(out);
  out.write(kMagic, 4);
  w.u32(kVersion);
  w.u64(m.config.historyWindow);
  w.u64(m.config.beamWidthDefault);
  w.u64(m.config.minCount);
  w.u64(m.config.minLeafCount);
  w.f64(m.config.lambdaGridStep);
  w.f64(m.config.heldoutFraction);
  w.u32(static_cast<std::uint32_t>(m.tags.size()));
  for (const PosTag& t : m.tags) w.str(t);
  w.u32(static_cast<std::uint32_t>(m.posBits));
  w.u32(static_cast<std::uint32_t>(m.wordBits));
  write_hierarchy(w, m.posHierarchy);
  w.u32(static_cast<std::uint32_t>(m.wordHierarchies.size()));
  for (const auto& [tag, h] : m.wordHierarchies) {
    w.str(tag);
    write_hierarchy(w, h);
  }
  w.u64(m.vocab.minCount);
  w.u32(static_cast<std::uint32_t>(m.vocab.perTag.size()));
  for (const auto& [tag, words] : m.vocab.perTag) {
    w.str(tag);
    w.u32(static_cast<std::uint32_t>(words.size()));
    for (const std::string& word : words) w.str(word);
  }
  write_tree(w, m.posTree);
  w.u32(static_cast<std::uint32_t>(m.wordTrees.size()));
  for (const auto& [tag, t] : m.wordTrees) {
    w.str(tag);
    write_tree(w, t);
  }
}

void save_model(const TaggerModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  save_model(m, out);
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

TaggerModel load_model(std::istream& in) {
  detail::BinaryReader r(in);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != std::string(kMagic, 4))
    fail(Err::CorruptModel, "bad magic header");
  std::uint32_t version = r.u32();
  if (version != kVersion)
    fail(Err::UnsupportedVersion, "format version " + std::to_string(version));

  TaggerModel m;
  m.config.historyWindow = r.u64();
  m.config.beamWidthDefault = r.u64();
  m.config.minCount = r.u64();
  m.config.minLeafCount = r.u64();
  m.config.lambdaGridStep = r.f64();
  m.config.heldoutFraction = r.f64();
  std::uint32_t nTags = r.u32();
  for (std::uint32_t i = 0; i < nTags; ++i) m.tags.push_back(r.str());
  m.posBits = r.u32();
  m.wordBits = r.u32();
  m.posHierarchy = read_hierarchy(r);
  std::uint32_t nh = r.u32();
  for (std::uint32_t i = 0; i < nh; ++i) {
    std::string tag = r.str();
    m.wordHierarchies[tag] = read_hierarchy(r);
  }
  m.vocab.minCount = r.u64();
  std::uint32_t nv = r.u32();
  for (std::uint32_t i = 0; i < nv; ++i) {
    std::string tag = r.str();
    std::uint32_t nw = r.u32();
    for (std::uint32_t j = 0; j < nw; ++j) m.vocab.perTag[tag].insert(r.str());
  }
  m.posTree = read_tree(r);
  std::uint32_t nt = r.u32();
  for (std::uint32_t i = 0; i < nt; ++i) {
    std::string tag = r.str();
    m.wordTrees[tag] = read_tree(r);
  }

  for (const auto& [item, code] : leaf_codes(m.posHierarchy, m.posBits)) m.posCode[item] = code;
  for (const auto& [tag, h] : m.wordHierarchies)
    for (const auto& [word, code] : leaf_codes(h, m.wordBits)) m.wordCode[{tag, word}] = code;
  return m;
}

TaggerModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  return load_model(in);
}

}  // namespace dmtag
