#include "treecipher/tree.hpp"

#include <algorithm>
#include <cctype>

#include "json.hpp"

namespace treecipher {

namespace {

bool is_label_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
         (c >= '0' && c <= '9') || c == '_' ||
         static_cast<unsigned char>(c) >= 0x80;  // UTF-8 multibyte labels
}

}  // namespace

LabeledTree::LabeledTree(std::string_view root_label) {
  if (root_label.empty()) throw std::invalid_argument("empty label");
  parent_.push_back(kNoNode);
  children_.emplace_back();
  depth_.push_back(0);
  label_.push_back(intern_(root_label));
}

NodeId LabeledTree::add_child(NodeId parent, std::string_view label) {
  if (parent >= size()) throw std::out_of_range("add_child: bad parent id");
  if (label.empty()) throw std::invalid_argument("empty label");
  NodeId id = static_cast<NodeId>(size());
  parent_.push_back(parent);
  children_.emplace_back();
  depth_.push_back(depth_[parent] + 1);
  label_.push_back(intern_(label));
  children_[parent].push_back(id);
  max_depth_ = std::max(max_depth_, depth_[id]);
  max_degree_ =
      std::max(max_degree_, static_cast<std::uint32_t>(children_[parent].size()));
  return id;
}

LabelId LabeledTree::intern_(std::string_view s) {
  for (std::size_t i = 0; i < symbols_.size(); ++i)
    if (symbols_[i] == s) return static_cast<LabelId>(i);
  symbols_.emplace_back(s);
  return static_cast<LabelId>(symbols_.size() - 1);
}

std::vector<NodeId> LabeledTree::leaves() const {
  std::vector<NodeId> out;
  for (NodeId u = 0; u < size(); ++u)
    if (children_[u].empty()) out.push_back(u);
  return out;
}

std::vector<LabelId> LabeledTree::alphabet() const {
  std::vector<bool> used(symbols_.size(), false);
  for (LabelId id : label_) used[id] = true;
  std::vector<LabelId> out;
  for (std::size_t i = 0; i < used.size(); ++i)
    if (used[i]) out.push_back(static_cast<LabelId>(i));
  return out;
}

std::vector<std::string> LabeledTree::alphabet_text() const {
  std::vector<std::string> out;
  for (LabelId id : alphabet()) out.push_back(symbols_[id]);
  return out;
}

LabeledTree LabeledTree::subtree(NodeId u) const {
  if (u >= size()) throw std::out_of_range("subtree: bad node id");
  LabeledTree out(label_text(u));
  // Preorder walk; maps old ids to new ones, parents before children.
  std::vector<std::pair<NodeId, std::uint32_t>> stack;  // (old id, next child)
  std::vector<NodeId> remap(size(), kNoNode);
  remap[u] = 0;
  stack.push_back({u, 0});
  while (!stack.empty()) {
    auto& [old_id, next] = stack.back();
    if (next < children_[old_id].size()) {
      NodeId c = children_[old_id][next++];
      remap[c] = out.add_child(remap[old_id], label_text(c));
      stack.push_back({c, 0});
    } else {
      stack.pop_back();
    }
  }
  return out;
}

void LabeledTree::reorder_children(NodeId u, std::span<const std::uint32_t> perm) {
  auto& kids = children_[u];
  if (perm.size() != kids.size())
    throw std::invalid_argument("reorder_children: wrong permutation size");
  std::vector<bool> seen(perm.size(), false);
  std::vector<NodeId> next(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || seen[perm[i]])
      throw std::invalid_argument("reorder_children: not a permutation");
    seen[perm[i]] = true;
    next[i] = kids[perm[i]];
  }
  kids = std::move(next);
}

void LabeledTree::relabel(NodeId u, std::string_view new_label) {
  if (u >= size()) throw std::out_of_range("relabel: bad node id");
  if (new_label.empty()) throw std::invalid_argument("empty label");
  label_[u] = intern_(new_label);
}

bool operator==(const LabeledTree& a, const LabeledTree& b) {
  if (a.size() != b.size()) return false;
  // Parallel walk in storage order; node numbering does not matter.
  std::vector<std::pair<NodeId, NodeId>> stack{{a.root(), b.root()}};
  while (!stack.empty()) {
    auto [u, v] = stack.back();
    stack.pop_back();
    if (a.label_text(u) != b.label_text(v)) return false;
    if (a.degree(u) != b.degree(v)) return false;
    for (std::uint32_t i = 0; i < a.degree(u); ++i)
      stack.push_back({a.children(u)[i], b.children(v)[i]});
  }
  return true;
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

LabeledTree parse(std::string_view text) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < text.size() &&
           std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
  };
  auto read_label = [&]() -> std::string_view {
    skip_ws();
    std::size_t start = pos;
    while (pos < text.size() && is_label_char(text[pos])) ++pos;
    if (pos == start) {
      if (start >= text.size())
        throw ParseError("unexpected end of input, expected label", start);
      throw ParseError("expected label", start);
    }
    return text.substr(start, pos - start);
  };

  skip_ws();
  if (pos >= text.size()) throw ParseError("empty input", pos);

  LabeledTree tree(read_label());
  NodeId last = tree.root();
  std::vector<NodeId> open;  // parents with an unclosed '('
  for (;;) {
    skip_ws();
    if (pos >= text.size()) {
      if (!open.empty())
        throw ParseError("unexpected end of input, expected ')'", pos);
      return tree;
    }
    char c = text[pos];
    if (c == '(') {
      ++pos;
      open.push_back(last);
      last = tree.add_child(open.back(), read_label());
    } else if (c == ',') {
      if (open.empty()) throw ParseError("unexpected ','", pos);
      ++pos;
      last = tree.add_child(open.back(), read_label());
    } else if (c == ')') {
      if (open.empty()) throw ParseError("unexpected ')'", pos);
      ++pos;
      last = open.back();
      open.pop_back();
    } else {
      throw ParseError("unexpected character", pos);
    }
  }
}

std::string serialize(const LabeledTree& t) {
  std::string out = t.label_text(t.root());
  std::vector<std::pair<NodeId, std::uint32_t>> stack{{t.root(), 0}};
  while (!stack.empty()) {
    auto& [u, next] = stack.back();
    std::uint32_t deg = t.degree(u);
    if (next < deg) {
      out += (next == 0) ? '(' : ',';
      NodeId c = t.children(u)[next++];
      out += t.label_text(c);
      stack.push_back({c, 0});
    } else {
      if (deg > 0) out += ')';
      stack.pop_back();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON interchange form
// ---------------------------------------------------------------------------

LabeledTree parse_json_tree(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(),
                     e.byte > 0 ? e.byte - 1 : 0);
  }
  auto check_node = [](const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("label") || !j["label"].is_string() ||
        j["label"].get_ref<const std::string&>().empty())
      throw ParseError("JSON tree node needs a non-empty string \"label\"", 0);
    if (j.contains("children") && !j["children"].is_array())
      throw ParseError("JSON tree \"children\" must be an array", 0);
  };
  check_node(doc);
  LabeledTree tree(doc["label"].get_ref<const std::string&>());
  struct Frame {
    const nlohmann::json* node;
    std::size_t next;
    NodeId id;
  };
  std::vector<Frame> stack{{&doc, 0, tree.root()}};
  while (!stack.empty()) {
    Frame& f = stack.back();
    const nlohmann::json* kids =
        f.node->contains("children") ? &(*f.node)["children"] : nullptr;
    if (kids && f.next < kids->size()) {
      const nlohmann::json& child = (*kids)[f.next++];
      check_node(child);
      NodeId id = tree.add_child(f.id, child["label"].get_ref<const std::string&>());
      stack.push_back({&child, 0, id});
    } else {
      stack.pop_back();
    }
  }
  return tree;
}

std::string serialize_json_tree(const LabeledTree& t) {
  // Children have larger ids than parents, so build bottom-up.
  std::vector<nlohmann::json> built(t.size());
  for (NodeId u = static_cast<NodeId>(t.size()); u-- > 0;) {
    nlohmann::json j;
    j["label"] = t.label_text(u);
    nlohmann::json kids = nlohmann::json::array();
    for (NodeId c : t.children(u)) kids.push_back(std::move(built[c]));
    j["children"] = std::move(kids);
    built[u] = std::move(j);
  }
  return built[t.root()].dump();
}

LabeledTree parse_any(std::string_view text) {
  std::size_t pos = 0;
  while (pos < text.size() &&
         std::isspace(static_cast<unsigned char>(text[pos])))
    ++pos;
  if (pos < text.size() && text[pos] == '{') return parse_json_tree(text);
  return parse(text);
}

}  // namespace treecipher
