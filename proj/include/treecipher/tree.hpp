#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace treecipher {

using NodeId = std::uint32_t;
using LabelId = std::uint32_t;

inline constexpr NodeId kNoNode = 0xFFFFFFFFu;

/// Thrown by the text/JSON tree readers; `offset` is the byte position of the
/// first offending character.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string msg, std::size_t offset)
      : std::runtime_error(std::move(msg)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Rooted unordered labeled tree in arena form.
///
/// Nodes are dense ids 0..size()-1 with the root at 0 and parent(u) < u for
/// every non-root u (construction appends children after their parent).
/// Children are kept in storage order; that order is preserved by
/// parse/serialize but carries no meaning, and every algorithm in this
/// library is invariant to it. Instances are immutable once built; sharing
/// a built tree across threads read-only is safe.
class LabeledTree {
 public:
  explicit LabeledTree(std::string_view root_label);

  NodeId add_child(NodeId parent, std::string_view label);

  std::size_t size() const { return parent_.size(); }
  NodeId root() const { return 0; }
  bool is_root(NodeId u) const { return parent_[u] == kNoNode; }
  NodeId parent(NodeId u) const { return parent_[u]; }  // kNoNode for the root
  std::span<const NodeId> children(NodeId u) const { return children_[u]; }
  std::uint32_t degree(NodeId u) const {
    return static_cast<std::uint32_t>(children_[u].size());
  }
  std::uint32_t degree() const { return max_degree_; }
  std::uint32_t depth(NodeId u) const { return depth_[u]; }
  std::uint32_t depth() const { return max_depth_; }
  std::vector<NodeId> leaves() const;

  LabelId label(NodeId u) const { return label_[u]; }
  const std::string& label_text(NodeId u) const { return symbols_[label_[u]]; }
  const std::string& symbol(LabelId id) const { return symbols_[id]; }
  std::size_t symbol_count() const { return symbols_.size(); }

  /// Distinct labels actually carried by nodes, ascending LabelId.
  std::vector<LabelId> alphabet() const;
  /// Same, as strings in LabelId order.
  std::vector<std::string> alphabet_text() const;

  /// New tree over u and all its descendants (preorder ids, fresh symbols).
  LabeledTree subtree(NodeId u) const;

  /// Replace the storage order of u's children. perm must be a permutation
  /// of [0, degree(u)).
  void reorder_children(NodeId u, std::span<const std::uint32_t> perm);

  /// Replace one node's label, interning the symbol if new.
  void relabel(NodeId u, std::string_view new_label);

  /// Structural identity: same shape, same storage order, same label text.
  friend bool operator==(const LabeledTree& a, const LabeledTree& b);

 private:
  LabelId intern_(std::string_view s);

  std::vector<NodeId> parent_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<std::uint32_t> depth_;
  std::vector<LabelId> label_;
  std::vector<std::string> symbols_;
  std::uint32_t max_depth_ = 0;
  std::uint32_t max_degree_ = 0;
};

/// Reads the text format `tree := label | label "(" tree ("," tree)* ")"`,
/// labels [A-Za-z0-9_]+, whitespace between tokens ignored.
LabeledTree parse(std::string_view text);

/// Inverse of parse (children in storage order, no whitespace).
std::string serialize(const LabeledTree& t);

/// JSON interchange form {"label": str, "children": [...]}.
LabeledTree parse_json_tree(std::string_view text);
std::string serialize_json_tree(const LabeledTree& t);

/// Accepts either format, sniffing the first non-space byte.
LabeledTree parse_any(std::string_view text);

}  // namespace treecipher
