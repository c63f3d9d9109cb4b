#pragma once

#include <cstdint>
#include <vector>

#include "treecipher/combinatorics.hpp"
#include "treecipher/tree.hpp"

namespace treecipher {

using ColorId = std::uint32_t;

/// Sorted multiset of the colors of a node's children.
using Signature = std::vector<ColorId>;

/// AHU colors for one batch of trees. Colors are interned in a table shared
/// across the whole batch, so equal ColorId means topologically isomorphic
/// subtrees even across trees. Labels play no part.
class Coloring {
 public:
  ColorId color(std::size_t tree_index, NodeId u) const {
    return colors_[tree_index][u];
  }
  ColorId color(const LabeledTree& t, NodeId u) const {
    return colors_[index_of(t)][u];
  }
  ColorId root_color(std::size_t tree_index) const {
    return colors_[tree_index][0];
  }
  std::size_t index_of(const LabeledTree& t) const;
  std::size_t tree_count() const { return trees_.size(); }
  std::size_t color_count() const { return color_count_; }
  const LabeledTree& tree(std::size_t i) const { return *trees_[i]; }

 private:
  friend Coloring color_trees(const std::vector<const LabeledTree*>& trees);
  std::vector<const LabeledTree*> trees_;
  std::vector<std::vector<ColorId>> colors_;
  std::size_t color_count_ = 0;
};

/// Bottom-up color refinement over all trees at once (nodes bucketed per
/// depth, deepest first). Linear up to the per-node sort of child colors.
Coloring color_trees(const std::vector<const LabeledTree*>& trees);

bool topologically_isomorphic(const LabeledTree& t1, const LabeledTree& t2);

Signature children_signature(const LabeledTree& t, NodeId v, const Coloring& c);

/// N_equiv(t): the number of tree isomorphisms from t onto any tree of its
/// topological class, as the product over nodes of the factorials of the
/// per-color child counts.
struct NEquiv {
  BigInt exact;
  double log10;  // computed from log-factorial sums, not from `exact`
};

NEquiv n_equiv(const LabeledTree& t);
NEquiv n_equiv(const LabeledTree& t, const Coloring& coloring);

}  // namespace treecipher
