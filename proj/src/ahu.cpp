#include "treecipher/ahu.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace treecipher {

namespace {

struct SignatureHash {
  std::size_t operator()(const Signature& s) const {
    std::size_t h = 0x9e3779b97f4a7c15ull;
    for (ColorId c : s) {
      h ^= c + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

}  // namespace

std::size_t Coloring::index_of(const LabeledTree& t) const {
  for (std::size_t i = 0; i < trees_.size(); ++i)
    if (trees_[i] == &t) return i;
  throw std::invalid_argument("Coloring: tree was not part of this session");
}

Coloring color_trees(const std::vector<const LabeledTree*>& trees) {
  if (trees.empty())
    throw std::invalid_argument("color_trees: need at least one tree");
  Coloring out;
  out.trees_ = trees;
  out.colors_.resize(trees.size());

  std::uint32_t max_depth = 0;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    out.colors_[i].assign(trees[i]->size(), 0);
    max_depth = std::max(max_depth, trees[i]->depth());
  }

  // Nodes bucketed per depth, per tree. parent(u) < u, so a simple scan fills
  // the buckets in ascending node order.
  std::vector<std::vector<std::vector<NodeId>>> by_depth(trees.size());
  for (std::size_t i = 0; i < trees.size(); ++i) {
    by_depth[i].resize(max_depth + 1);
    for (NodeId u = 0; u < trees[i]->size(); ++u)
      by_depth[i][trees[i]->depth(u)].push_back(u);
  }

  std::unordered_map<Signature, ColorId, SignatureHash> table;
  Signature key;
  for (std::uint32_t d = max_depth + 1; d-- > 0;) {
    for (std::size_t i = 0; i < trees.size(); ++i) {
      const LabeledTree& t = *trees[i];
      for (NodeId u : by_depth[i][d]) {
        key.clear();
        for (NodeId c : t.children(u)) key.push_back(out.colors_[i][c]);
        std::sort(key.begin(), key.end());
        auto [it, fresh] =
            table.emplace(key, static_cast<ColorId>(table.size()));
        (void)fresh;
        out.colors_[i][u] = it->second;
      }
    }
  }
  out.color_count_ = table.size();
  return out;
}

bool topologically_isomorphic(const LabeledTree& t1, const LabeledTree& t2) {
  if (t1.size() != t2.size()) return false;
  Coloring c = color_trees({&t1, &t2});
  return c.root_color(0) == c.root_color(1);
}

Signature children_signature(const LabeledTree& t, NodeId v,
                             const Coloring& c) {
  std::size_t idx = c.index_of(t);
  Signature s;
  s.reserve(t.degree(v));
  for (NodeId u : t.children(v)) s.push_back(c.color(idx, u));
  std::sort(s.begin(), s.end());
  return s;
}

NEquiv n_equiv(const LabeledTree& t) {
  return n_equiv(t, color_trees({&t}));
}

NEquiv n_equiv(const LabeledTree& t, const Coloring& coloring) {
  std::size_t idx = coloring.index_of(t);
  NEquiv out{1, 0.0};
  std::vector<ColorId> kid_colors;
  for (NodeId u = 0; u < t.size(); ++u) {
    kid_colors.clear();
    for (NodeId c : t.children(u)) kid_colors.push_back(coloring.color(idx, c));
    std::sort(kid_colors.begin(), kid_colors.end());
    std::size_t run = 0;
    for (std::size_t i = 0; i < kid_colors.size(); ++i) {
      ++run;
      if (i + 1 == kid_colors.size() || kid_colors[i + 1] != kid_colors[i]) {
        if (run > 1) {
          out.exact *= factorial(run);
          out.log10 += log10_factorial(run);
        }
        run = 0;
      }
    }
  }
  return out;
}

}  // namespace treecipher
