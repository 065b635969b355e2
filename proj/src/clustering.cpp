#include "dmtag/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dmtag/error.hpp"

namespace dmtag {

namespace {

constexpr char kItemSep = '\x1f';

// One term of the mutual-information sum, from raw counts. n is the bigram
// total; joint <= row and joint <= col always hold.
double q_term(double joint, double row, double col, double n) {
  if (joint <= 0.0) return 0.0;
  return (joint / n) * std::log2((joint * n) / (row * col));
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Greedy agglomeration over a dense class-count table. Classes live in
// stable slots; merging folds slot b into slot a and tombstones b.
class ClusterEngine {
 public:
  ClusterEngine(const BigramStats& s, const MergeConstraint& permitted)
      : permitted_(permitted) {
    if (s.total == 0 || s.unigram.empty()) fail(Err::EmptyStats, "no items to cluster");
    for (const auto& [item, n] : s.unigram) {
      items_.push_back(item);
      leafCount_.push_back(n);
    }
    std::size_t v = items_.size();
    cnt_.assign(v, std::vector<double>(v, 0.0));
    row_.assign(v, 0.0);
    col_.assign(v, 0.0);
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < v; ++i) index[items_[i]] = static_cast<int>(i);
    for (const auto& [pair, n] : s.bigram) {
      auto a = index.find(pair.first);
      auto b = index.find(pair.second);
      if (a == index.end() || b == index.end())
        fail(Err::UnknownItem, "bigram over item missing from unigram counts");
      cnt_[a->second][b->second] += static_cast<double>(n);
      row_[a->second] += static_cast<double>(n);
      col_[b->second] += static_cast<double>(n);
      nb_ += static_cast<double>(n);
    }
    alive_.assign(v, true);
    members_.resize(v);
    nodeOf_.resize(v);
    for (std::size_t i = 0; i < v; ++i) {
      members_[i] = {items_[i]};
      h_.nodes.push_back(HierarchyNode{-1, -1, items_[i], leafCount_[i]});
      nodeOf_[i] = static_cast<int>(i);
    }
  }

  ClassHierarchy run() {
    std::size_t v = items_.size();
    UnionFind groups(v);
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t j = i + 1; j < v; ++j)
        if (allowed(i, j)) groups.unite(static_cast<int>(i), static_cast<int>(j));

    while (merge_step()) {
    }

    std::map<int, int> aliveInGroup;
    std::map<int, std::string> groupRep;
    for (std::size_t i = 0; i < v; ++i) {
      if (!alive_[i]) continue;
      int g = groups.find(static_cast<int>(i));
      ++aliveInGroup[g];
      auto it = groupRep.find(g);
      if (it == groupRep.end() || rep(i) < it->second) groupRep[g] = rep(i);
    }
    for (const auto& [g, n] : aliveInGroup)
      if (n > 1)
        fail(Err::UnmergeableClasses,
             "constraint leaves " + std::to_string(n) + " classes around '" + groupRep[g] + "'");

    // Roots ordered by their smallest member for deterministic output.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < v; ++i)
      if (alive_[i]) order.push_back(i);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return rep(a) < rep(b); });
    for (std::size_t i : order) h_.roots.push_back(nodeOf_[i]);
    return std::move(h_);
  }

 private:
  const std::string& rep(std::size_t i) const { return members_[i].front(); }

  bool allowed(std::size_t i, std::size_t j) const {
    return !permitted_ || permitted_(members_[i], members_[j]);
  }

  double q(std::size_t i, std::size_t j) const {
    return q_term(cnt_[i][j], row_[i], col_[j], nb_);
  }

  // Mutual-information terms touching class i, each counted once.
  double self_terms(std::size_t i) const {
    double s = -q(i, i);
    for (std::size_t k = 0; k < alive_.size(); ++k) {
      if (!alive_[k]) continue;
      s += q(i, k) + q(k, i);
    }
    return s;
  }

  // Loss of average mutual information if i and j were merged.
  double pair_loss(std::size_t i, std::size_t j, double si, double sj) const {
    if (nb_ <= 0.0) return 0.0;
    double before = si + sj - q(i, j) - q(j, i);
    double rm = row_[i] + row_[j];
    double cm = col_[i] + col_[j];
    double after =
        q_term(cnt_[i][i] + cnt_[i][j] + cnt_[j][i] + cnt_[j][j], rm, cm, nb_);
    for (std::size_t k = 0; k < alive_.size(); ++k) {
      if (!alive_[k] || k == i || k == j) continue;
      after += q_term(cnt_[i][k] + cnt_[j][k], rm, col_[k], nb_);
      after += q_term(cnt_[k][i] + cnt_[k][j], row_[k], cm, nb_);
    }
    return before - after;
  }

  bool merge_step() {
    std::size_t v = alive_.size();
    std::vector<double> s(v, 0.0);
    for (std::size_t i = 0; i < v; ++i)
      if (alive_[i]) s[i] = self_terms(i);

    bool found = false;
    std::size_t bi = 0, bj = 0;
    double bestLoss = 0.0;
    std::pair<std::string, std::string> bestKey;
    for (std::size_t i = 0; i < v; ++i) {
      if (!alive_[i]) continue;
      for (std::size_t j = i + 1; j < v; ++j) {
        if (!alive_[j] || !allowed(i, j)) continue;
        double loss = pair_loss(i, j, s[i], s[j]);
        auto key = std::minmax(rep(i), rep(j));
        std::pair<std::string, std::string> k{key.first, key.second};
        if (!found || loss < bestLoss || (loss == bestLoss && k < bestKey)) {
          found = true;
          bi = i;
          bj = j;
          bestLoss = loss;
          bestKey = k;
        }
      }
    }
    if (!found) return false;
    merge(bi, bj);
    return true;
  }

  void merge(std::size_t a, std::size_t b) {
    // Top edge goes to the class with the smaller representative.
    std::size_t top = rep(a) < rep(b) ? a : b;
    std::size_t bottom = top == a ? b : a;
    int node = static_cast<int>(h_.nodes.size());
    h_.nodes.push_back(HierarchyNode{nodeOf_[top], nodeOf_[bottom], "",
                                     h_.nodes[nodeOf_[top]].count +
                                         h_.nodes[nodeOf_[bottom]].count});
    h_.mergeLog.emplace_back(nodeOf_[top], nodeOf_[bottom]);

    std::size_t v = alive_.size();
    double aa = cnt_[a][a] + cnt_[a][b] + cnt_[b][a] + cnt_[b][b];
    for (std::size_t k = 0; k < v; ++k) {
      if (!alive_[k] || k == a || k == b) continue;
      cnt_[a][k] += cnt_[b][k];
      cnt_[k][a] += cnt_[k][b];
    }
    cnt_[a][a] = aa;
    row_[a] += row_[b];
    col_[a] += col_[b];
    alive_[b] = false;

    std::vector<std::string> merged;
    std::merge(members_[a].begin(), members_[a].end(), members_[b].begin(), members_[b].end(),
               std::back_inserter(merged));
    members_[a] = std::move(merged);
    nodeOf_[a] = node;
  }

  MergeConstraint permitted_;
  std::vector<std::string> items_;
  std::vector<std::uint64_t> leafCount_;
  std::vector<std::vector<double>> cnt_;
  std::vector<double> row_, col_;
  double nb_ = 0.0;
  std::vector<bool> alive_;
  std::vector<std::vector<std::string>> members_;
  std::vector<int> nodeOf_;
  ClassHierarchy h_;
};

void walk_codes(const ClassHierarchy& h, int node, std::string& code,
                const std::function<void(int, const std::string&, std::size_t)>& visit,
                std::size_t depth) {
  const HierarchyNode& n = h.nodes[node];
  if (n.top < 0) {
    visit(node, code, depth);
    return;
  }
  code.push_back('0');
  walk_codes(h, n.top, code, visit, depth + 1);
  code.back() = '1';
  walk_codes(h, n.bottom, code, visit, depth + 1);
  code.pop_back();
}

}  // namespace

double average_mutual_information(const ClassPartition& classes, const BigramStats& s) {
  std::map<std::string, int> classOf;
  for (std::size_t c = 0; c < classes.size(); ++c)
    for (const std::string& item : classes[c]) classOf[item] = static_cast<int>(c);
  for (const auto& [item, n] : s.unigram)
    if (classOf.find(item) == classOf.end())
      fail(Err::UnknownItem, "item '" + item + "' not covered by the partition");

  std::size_t c = classes.size();
  std::vector<std::vector<double>> joint(c, std::vector<double>(c, 0.0));
  std::vector<double> row(c, 0.0), col(c, 0.0);
  double nb = 0.0;
  for (const auto& [pair, n] : s.bigram) {
    auto a = classOf.find(pair.first);
    auto b = classOf.find(pair.second);
    if (a == classOf.end() || b == classOf.end())
      fail(Err::UnknownItem, "bigram endpoint not covered by the partition");
    joint[a->second][b->second] += static_cast<double>(n);
    row[a->second] += static_cast<double>(n);
    col[b->second] += static_cast<double>(n);
    nb += static_cast<double>(n);
  }
  if (nb <= 0.0) return 0.0;
  double ami = 0.0;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) ami += q_term(joint[i][j], row[i], col[j], nb);
  return ami;
}

std::size_t ClassHierarchy::depth() const {
  std::size_t best = 0;
  for (int root : roots) {
    std::string code;
    walk_codes(*this, root, code,
               [&](int, const std::string&, std::size_t d) { best = std::max(best, d); }, 0);
  }
  return best;
}

std::vector<int> ClassHierarchy::leaf_ids() const {
  std::vector<int> out;
  for (int root : roots) {
    std::string code;
    walk_codes(*this, root, code, [&](int id, const std::string&, std::size_t) { out.push_back(id); },
               0);
  }
  return out;
}

ClassHierarchy cluster_items(const BigramStats& s, const MergeConstraint& permitted) {
  return ClusterEngine(s, permitted).run();
}

std::string bit_code(const ClassHierarchy& h, const std::string& item) {
  std::string found;
  bool hit = false;
  for (int root : h.roots) {
    std::string code;
    walk_codes(h, root, code,
               [&](int id, const std::string& c, std::size_t) {
                 if (h.nodes[id].item == item) {
                   found = c;
                   hit = true;
                 }
               },
               0);
  }
  if (!hit) fail(Err::UnknownItem, "'" + item + "' is not a leaf of the hierarchy");
  return found;
}

std::string word_item(const PosTag& tag, const std::string& word) {
  return tag + kItemSep + word;
}

std::pair<PosTag, std::string> split_word_item(const std::string& item) {
  std::size_t sep = item.find(kItemSep);
  if (sep == std::string::npos) fail(Err::UnknownItem, "malformed word item");
  return {item.substr(0, sep), item.substr(sep + 1)};
}

namespace {

template <typename ItemFn>
BigramStats collect_stream_stats(const Corpus& c, ItemFn item) {
  BigramStats s;
  for (const Dialog& d : c.dialogs) {
    std::vector<std::string> stream;
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      if (t > 0) stream.push_back(item(Token{"", kTurnTag}));
      for (const Token& tok : d.turns[t].tokens) stream.push_back(item(tok));
    }
    for (std::size_t i = 0; i < stream.size(); ++i) {
      ++s.unigram[stream[i]];
      ++s.total;
      if (i + 1 < stream.size()) ++s.bigram[{stream[i], stream[i + 1]}];
    }
  }
  return s;
}

}  // namespace

BigramStats collect_tag_stats(const Corpus& c) {
  return collect_stream_stats(c, [](const Token& t) { return t.tag; });
}

BigramStats collect_word_stats(const Corpus& c, const Vocabulary& vocab) {
  return collect_stream_stats(c, [&](const Token& t) {
    if (t.tag == kTurnTag) return word_item(kTurnTag, "");
    return word_item(t.tag, vocab.map_word(t.tag, t.word));
  });
}

ClassHierarchy cluster_pos(const Corpus& c) { return cluster_items(collect_tag_stats(c)); }

namespace {

// Copies the subtree under root into a fresh hierarchy, transforming leaf
// items and keeping the original merge order.
ClassHierarchy extract_subtree(const ClassHierarchy& h, int root,
                               const std::function<std::string(const std::string&)>& leafItem) {
  ClassHierarchy out;
  std::map<int, int> remap;
  std::function<int(int)> copy = [&](int id) -> int {
    const HierarchyNode& n = h.nodes[id];
    HierarchyNode copyNode = n;
    if (n.top >= 0) {
      copyNode.top = copy(n.top);
      copyNode.bottom = copy(n.bottom);
    } else {
      copyNode.item = leafItem(n.item);
    }
    int newId = static_cast<int>(out.nodes.size());
    out.nodes.push_back(copyNode);
    remap[id] = newId;
    return newId;
  };
  out.roots.push_back(copy(root));
  for (const auto& [top, bottom] : h.mergeLog) {
    auto t = remap.find(top);
    auto b = remap.find(bottom);
    if (t != remap.end() && b != remap.end()) out.mergeLog.emplace_back(t->second, b->second);
  }
  return out;
}

}  // namespace

std::map<PosTag, ClassHierarchy> cluster_words(const Corpus& c, const Vocabulary& vocab) {
  BigramStats stats = collect_word_stats(c, vocab);
  auto sameTag = [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
    return split_word_item(a.front()).first == split_word_item(b.front()).first;
  };
  ClassHierarchy all = cluster_items(stats, sameTag);

  std::map<PosTag, ClassHierarchy> out;
  for (int root : all.roots) {
    // Every leaf under a root shares one tag by construction.
    int probe = root;
    while (all.nodes[probe].top >= 0) probe = all.nodes[probe].top;
    PosTag tag = split_word_item(all.nodes[probe].item).first;
    if (tag == kTurnTag) continue;
    out[tag] = extract_subtree(all, root,
                               [](const std::string& item) { return split_word_item(item).second; });
  }
  return out;
}

std::string render_hierarchy(const ClassHierarchy& h) {
  std::ostringstream out;
  for (int root : h.roots) {
    std::string code;
    walk_codes(h, root, code,
               [&](int id, const std::string& c, std::size_t depth) {
                 for (std::size_t i = 0; i < depth; ++i) out << "  ";
                 out << (c.empty() ? "-" : c) << " " << h.nodes[id].item << " "
                     << h.nodes[id].count << "\n";
               },
               0);
  }
  return out.str();
}

}  // namespace dmtag
