#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dmtag/corpus.hpp"

namespace dmtag {

// Adjacency counts over an item stream. total is the unigram total; the
// joint used for mutual information is the bigram table.
struct BigramStats {
  std::map<std::string, std::uint64_t> unigram;
  std::map<std::pair<std::string, std::string>, std::uint64_t> bigram;
  std::uint64_t total = 0;
};

using ClassPartition = std::vector<std::vector<std::string>>;

// Average mutual information between adjacent class occurrences, in bits:
// sum over class pairs of p(c1,c2) * log2(p(c1,c2) / (p(c1,.) p(.,c2))),
// with 0 log 0 = 0. Marginals are row/column sums of the class joint.
double average_mutual_information(const ClassPartition& classes, const BigramStats& s);

struct HierarchyNode {
  int top = -1;      // child on the 0 edge
  int bottom = -1;   // child on the 1 edge
  std::string item;  // leaf payload; empty on internal nodes
  std::uint64_t count = 0;
};

// Binary merge hierarchy. Multiple roots remain when a merge constraint
// partitions the items into groups that may not merge with each other.
struct ClassHierarchy {
  std::vector<HierarchyNode> nodes;
  std::vector<int> roots;
  std::vector<std::pair<int, int>> mergeLog;  // (top, bottom) node ids, in merge order

  std::size_t depth() const;  // longest root-to-leaf path, in edges
  std::vector<int> leaf_ids() const;
};

// Permission predicate over the member items of two candidate classes.
using MergeConstraint =
    std::function<bool(const std::vector<std::string>&, const std::vector<std::string>&)>;

// Greedy agglomeration: each step merges the permitted pair losing the least
// average mutual information. Ties pick the pair whose lexicographically
// smallest member names are smallest. Items that the constraint links at the
// start form a group; each group must end in a single class.
ClassHierarchy cluster_items(const BigramStats& s, const MergeConstraint& permitted = {});

// Bit code of a leaf as a '0'/'1' string: edges from its root, top=0.
std::string bit_code(const ClassHierarchy& h, const std::string& item);

// Items of the word-clustering stream are (tag, word) pairs.
std::string word_item(const PosTag& tag, const std::string& word);
std::pair<PosTag, std::string> split_word_item(const std::string& item);

// Streams behind the two clustering runs. TURN separates the turns of a
// dialog; rare words are replaced by their tag's rare-word class.
BigramStats collect_tag_stats(const Corpus& c);
BigramStats collect_word_stats(const Corpus& c, const Vocabulary& vocab);

// POS classing over tag bigrams, TURN included as an ordinary item.
ClassHierarchy cluster_pos(const Corpus& c);

// Word classing with merges restricted to same-tag classes, split into one
// hierarchy per tag over that tag's vocabulary.
std::map<PosTag, ClassHierarchy> cluster_words(const Corpus& c, const Vocabulary& vocab);

// One leaf per line, indented by depth: bit code, item, training count.
std::string render_hierarchy(const ClassHierarchy& h);

}  // namespace dmtag
