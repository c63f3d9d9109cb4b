#include "treecipher/oracle.hpp"

#include <algorithm>
#include <cassert>
#include <map>

namespace treecipher {

bool is_tree_isomorphism(const LabeledTree& t1, const LabeledTree& t2,
                         std::span<const NodeId> phi) {
  if (t1.size() != t2.size() || phi.size() != t1.size()) return false;
  std::vector<bool> hit(t2.size(), false);
  for (NodeId u = 0; u < t1.size(); ++u) {
    NodeId v = phi[u];
    if (v >= t2.size() || hit[v]) return false;
    hit[v] = true;
  }
  if (phi[t1.root()] != t2.root()) return false;
  for (NodeId u = 0; u < t1.size(); ++u) {
    if (t1.is_root(u)) continue;
    if (t2.is_root(phi[u])) return false;
    if (phi[t1.parent(u)] != t2.parent(phi[u])) return false;
  }
  return true;
}

std::set<std::pair<std::string, std::string>> induced_relation(
    const LabeledTree& t1, const LabeledTree& t2,
    std::span<const NodeId> phi) {
  std::set<std::pair<std::string, std::string>> rel;
  for (NodeId u = 0; u < t1.size(); ++u)
    rel.insert({t1.label_text(u), t2.label_text(phi[u])});
  return rel;
}

bool relation_is_bijection(
    const std::set<std::pair<std::string, std::string>>& rel) {
  std::map<std::string, int> left, right;
  for (const auto& [x, y] : rel) {
    if (++left[x] > 1) return false;
    if (++right[y] > 1) return false;
  }
  return true;
}

bool is_ciphering(const IsomorphismWitness& w, const LabeledTree& t1,
                  const LabeledTree& t2, CipherMode mode) {
  auto rel = induced_relation(t1, t2, w.phi);
  if (mode == CipherMode::Identity) {
    for (const auto& [x, y] : rel)
      if (x != y) return false;
  }
  return relation_is_bijection(rel);
}

bool is_tree_ciphering(const LabeledTree& t1, const LabeledTree& t2,
                       std::span<const NodeId> phi, CipherMode mode) {
  if (!is_tree_isomorphism(t1, t2, phi)) return false;
  IsomorphismWitness w{std::vector<NodeId>(phi.begin(), phi.end())};
  return is_ciphering(w, t1, t2, mode);
}

namespace {

struct Enumerator {
  const LabeledTree& t1;
  const LabeledTree& t2;
  const Coloring& col;
  std::size_t idx1, idx2;
  const std::function<bool(const IsomorphismWitness&)>& visit;
  std::vector<NodeId> phi;
  std::vector<std::pair<NodeId, NodeId>> pairs;

  // Expands pairs[at..]; returns false when the consumer stopped the stream.
  bool expand(std::size_t at) {
    if (at == pairs.size()) {
      return visit(IsomorphismWitness{phi});
    }
    auto [u, v] = pairs[at];
    std::map<ColorId, std::pair<std::vector<NodeId>, std::vector<NodeId>>>
        groups;
    for (NodeId c : t1.children(u)) groups[col.color(idx1, c)].first.push_back(c);
    for (NodeId c : t2.children(v)) groups[col.color(idx2, c)].second.push_back(c);
    std::vector<const std::pair<std::vector<NodeId>, std::vector<NodeId>>*>
        order;
    for (auto& [color, g] : groups) {
      if (g.first.size() != g.second.size()) return true;  // dead branch
      std::sort(g.first.begin(), g.first.end());
      std::sort(g.second.begin(), g.second.end());
      order.push_back(&g);
    }
    return per_group(at, order, 0);
  }

  bool per_group(
      std::size_t at,
      const std::vector<const std::pair<std::vector<NodeId>,
                                        std::vector<NodeId>>*>& order,
      std::size_t g) {
    if (g == order.size()) return expand(at + 1);
    const auto& [a, b] = *order[g];
    std::vector<NodeId> perm = b;
    do {
      for (std::size_t i = 0; i < a.size(); ++i) {
        phi[a[i]] = perm[i];
        pairs.push_back({a[i], perm[i]});
      }
      bool keep_going = per_group(at, order, g + 1);
      pairs.resize(pairs.size() - a.size());
      if (!keep_going) return false;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return true;
  }
};

}  // namespace

void enumerate_isomorphisms(
    const LabeledTree& t1, const LabeledTree& t2, const Coloring& coloring,
    const std::function<bool(const IsomorphismWitness&)>& visit) {
  if (t1.size() != t2.size()) return;
  std::size_t i1 = coloring.index_of(t1), i2 = coloring.index_of(t2);
  if (coloring.root_color(i1) != coloring.root_color(i2)) return;
  Enumerator e{t1, t2, coloring, i1, i2, visit, {}, {}};
  e.phi.assign(t1.size(), 0);
  e.phi[t1.root()] = t2.root();
  e.pairs.push_back({t1.root(), t2.root()});
  e.expand(0);
}

std::vector<IsomorphismWitness> enumerate_all_isomorphisms(
    const LabeledTree& t1, const LabeledTree& t2, const Coloring& coloring) {
  std::vector<IsomorphismWitness> all;
  enumerate_isomorphisms(t1, t2, coloring, [&](const IsomorphismWitness& w) {
    all.push_back(w);
    return true;
  });
  return all;
}

IsomorphismWitness compose_witness(const IsomorphismWitness& first,
                                   const IsomorphismWitness& second) {
  IsomorphismWitness out;
  out.phi.resize(first.phi.size());
  for (std::size_t u = 0; u < first.phi.size(); ++u)
    out.phi[u] = second.phi[first.phi[u]];
  return out;
}

IsomorphismWitness invert_witness(const IsomorphismWitness& w) {
  IsomorphismWitness out;
  out.phi.resize(w.phi.size());
  for (std::size_t u = 0; u < w.phi.size(); ++u) out.phi[w.phi[u]] = u;
  return out;
}

BruteResult decide_brute(const LabeledTree& t1, const LabeledTree& t2,
                         CipherMode mode, const BigInt& cap) {
  if (t1.size() != t2.size()) return {};
  Coloring col = color_trees({&t1, &t2});
  if (col.root_color(0) != col.root_color(1)) return {};
  if (n_equiv(t1, col).exact > cap)
    throw BruteForceCapExceeded(
        "decide_brute: isomorphism space exceeds the cap; use the engine "
        "with backtracking instead");
  BruteResult res;
  enumerate_isomorphisms(t1, t2, col, [&](const IsomorphismWitness& w) {
    if (is_ciphering(w, t1, t2, mode)) {
      res.isomorphic = true;
      res.witness = w;
      return false;
    }
    return true;
  });
  return res;
}

// ---------------------------------------------------------------------------
// Backtracking completion
// ---------------------------------------------------------------------------

namespace {

struct Choice {
  bool is_bag = true;
  BagId bag = -1;
  CollectionId coll = -1;
  std::uint32_t n = 0;
  std::size_t branching = 0;
};

// Smallest branching factor first; ties go to bags, then lower ids.
std::optional<Choice> pick_choice(const EngineState& st) {
  std::optional<Choice> best;
  auto better = [&](const Choice& c) {
    return !best || c.branching < best->branching ||
           (c.branching == best->branching && c.is_bag && !best->is_bag);
  };
  const auto& bags = st.bags();
  for (BagId b = 0; b < static_cast<BagId>(bags.size()); ++b) {
    if (!bags[b].alive) continue;
    Choice c{true, b, -1, 0, bags[b].left.size()};
    if (better(c)) best = c;
  }
  const auto& colls = st.collections();
  for (CollectionId ci = 0; ci < static_cast<CollectionId>(colls.size());
       ++ci) {
    if (!colls[ci].alive) continue;
    for (const auto& [n, bk] : colls[ci].buckets) {
      if (bk.left.empty()) continue;
      Choice c{false, -1, ci, n, bk.left.size()};
      if (better(c)) best = c;
    }
  }
  return best;
}

bool search(EngineState& st) {
  auto choice = pick_choice(st);
  if (!choice) return true;  // no containers left: everything is mapped
  if (choice->is_bag) {
    const Bag& b = st.bags()[choice->bag];
    NodeId u = *std::min_element(b.left.begin(), b.left.end());
    std::vector<NodeId> cands = b.right;
    std::sort(cands.begin(), cands.end());
    for (NodeId v : cands) {
      std::size_t mark = st.trail_mark();
      if (st.map_nodes(u, v) && st.propagate() && search(st)) return true;
      st.undo_to(mark);
    }
    return false;
  }
  const Bucket& bk = st.collections()[choice->coll].buckets.at(choice->n);
  SubsetId p = *std::min_element(bk.left.begin(), bk.left.end());
  std::vector<SubsetId> cands = bk.right;
  std::sort(cands.begin(), cands.end());
  for (SubsetId q : cands) {
    std::size_t mark = st.trail_mark();
    if (st.apply_subset_pairing(p, q) && st.propagate() && search(st))
      return true;
    st.undo_to(mark);
  }
  return false;
}

}  // namespace

Outcome complete_backtracking(EngineState residual) {
  EngineState& st = residual;
  st.enable_trail();

  Outcome out;
  out.log10_n_equiv = n_equiv(st.t1(), st.coloring()).log10;
  out.stages = st.metrics_log();

  bool found = st.propagate() && search(st);
  out.map_nodes_calls = st.map_nodes_calls();

  if (found) {
    assert(st.all_mapped());
    std::vector<NodeId> total(st.t1().size());
    for (const auto& [u, v] : st.phi().entries()) {
      total[u] = v;
      out.phi.push_back({u, v});
    }
    std::sort(out.phi.begin(), out.phi.end());
    for (const auto& [a, b] : st.f().entries())
      out.f.push_back({st.joint_symbol(a), st.joint_symbol(b)});
    if (!is_tree_ciphering(st.t1(), st.t2(), total, st.mode()))
      throw std::logic_error(
          "backtracking produced a map that is not a tree ciphering");
    out.verdict = Outcome::Verdict::Isomorphic;
    out.n_final = {0.0, BigInt(1)};
    out.r_final = -out.log10_n_equiv;
  } else {
    // Exhausted every completion; no single contradiction to blame.
    out.verdict = Outcome::Verdict::NotIsomorphic;
    out.n_final = {0.0, BigInt(1)};
    out.r_final = -out.log10_n_equiv;
  }
  return out;
}

}  // namespace treecipher
