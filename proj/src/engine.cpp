#include "treecipher/engine.hpp"

#include <algorithm>
#include <cassert>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"
#include "treecipher/oracle.hpp"

namespace treecipher {

const char* to_string(FailReason r) {
  switch (r) {
    case FailReason::ExtBijNodeConflict: return "ext_bij_node_conflict";
    case FailReason::ExtBijLabelConflict: return "ext_bij_label_conflict";
    case FailReason::BagCardinalityMismatch: return "bag_cardinality_mismatch";
    case FailReason::CollectionMismatch: return "collection_mismatch";
    case FailReason::Rule3MissingCounterpart: return "rule3_missing_counterpart";
    case FailReason::TopologyMismatch: return "topology_mismatch";
  }
  return "unknown";
}

const char* to_string(Outcome::Verdict v) {
  switch (v) {
    case Outcome::Verdict::Isomorphic: return "isomorphic";
    case Outcome::Verdict::NotIsomorphic: return "not_isomorphic";
    case Outcome::Verdict::Undecided: return "undecided";
  }
  return "unknown";
}

BigCount search_space_from_profile(
    const std::vector<std::uint64_t>& bag_sizes,
    const std::vector<std::map<std::uint64_t, std::uint64_t>>& collections,
    std::uint32_t exact_digit_cap) {
  BigCount out;
  for (std::uint64_t n : bag_sizes) out.log10 += log10_factorial(n);
  for (const auto& prof : collections)
    for (const auto& [n, cnt] : prof)
      out.log10 += static_cast<double>(cnt) * log10_factorial(n) +
                   log10_factorial(cnt);
  if (exact_digit_cap > 0 &&
      out.log10 <= static_cast<double>(exact_digit_cap)) {
    BigInt e = 1;
    for (std::uint64_t n : bag_sizes) e *= factorial(n);
    for (const auto& prof : collections)
      for (const auto& [n, cnt] : prof)
        e *= boost::multiprecision::pow(factorial(n),
                                        static_cast<unsigned>(cnt)) *
             factorial(cnt);
    out.exact = std::move(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// EngineState: construction
// ---------------------------------------------------------------------------

EngineState::EngineState(const LabeledTree& t1, const LabeledTree& t2,
                         Coloring coloring, CipherMode mode)
    : t1_(&t1), t2_(&t2), coloring_(std::move(coloring)), mode_(mode) {
  assert(coloring_.tree_count() == 2 && &coloring_.tree(0) == t1_ &&
         &coloring_.tree(1) == t2_);

  // Labels from both trees interned into one joint table, so that f can
  // compare them by integer id (and Identity mode means equal ids).
  std::unordered_map<std::string, std::uint32_t> idx;
  auto intern = [&](const std::string& s) {
    auto [it, fresh] = idx.emplace(s, static_cast<std::uint32_t>(idx.size()));
    if (fresh) joint_symbols_.push_back(s);
    return it->second;
  };
  joint_label_1_.reserve(t1.symbol_count());
  for (std::size_t i = 0; i < t1.symbol_count(); ++i)
    joint_label_1_.push_back(intern(t1.symbol(static_cast<LabelId>(i))));
  joint_label_2_.reserve(t2.symbol_count());
  for (std::size_t i = 0; i < t2.symbol_count(); ++i)
    joint_label_2_.push_back(intern(t2.symbol(static_cast<LabelId>(i))));

  phi_ = PartialBijection(t1.size(), t2.size());
  f_ = PartialBijection(joint_symbols_.size(), joint_symbols_.size());
  loc1_.assign(t1.size(), Locator{});
  loc2_.assign(t2.size(), Locator{});
}

void EngineState::build_initial_bag() {
  BagId b = bag_create_();
  for (NodeId u = 0; u < t1_->size(); ++u) bag_add_node_(b, 0, u);
  for (NodeId v = 0; v < t2_->size(); ++v) bag_add_node_(b, 1, v);
  maybe_enqueue_rule1_(b);
}

// ---------------------------------------------------------------------------
// Trail-recorded primitives
// ---------------------------------------------------------------------------

BagId EngineState::bag_create_() {
  bags_.push_back(Bag{creation_counter_++, {}, {}, true});
  rec_({Edit::Kind::BagCreate});
  return static_cast<BagId>(bags_.size()) - 1;
}

void EngineState::bag_kill_(BagId b) {
  assert(bags_[b].left.empty() && bags_[b].right.empty());
  bags_[b].alive = false;
  rec_({Edit::Kind::BagKill, 0, b});
}

void EngineState::bag_add_node_(BagId b, std::uint8_t side, NodeId x) {
  Edit e{Edit::Kind::BagAddNode, side, b, x, 0, 0, loc_(side, x)};
  auto& vec = bag_side_(bags_[b], side);
  vec.push_back(x);
  loc_(side, x) = Locator{Locator::Kind::InBag, b,
                          static_cast<std::uint32_t>(vec.size()) - 1};
  rec_(e);
}

void EngineState::bag_remove_node_(BagId b, std::uint8_t side, NodeId x) {
  auto& vec = bag_side_(bags_[b], side);
  std::uint32_t pos = loc_(side, x).pos;
  assert(loc_(side, x).kind == Locator::Kind::InBag &&
         loc_(side, x).container == b && vec[pos] == x);
  rec_({Edit::Kind::BagRemoveNode, side, b, x, pos});
  if (pos + 1 != vec.size()) {
    NodeId moved = vec.back();
    vec[pos] = moved;
    loc_(side, moved).pos = pos;
  }
  vec.pop_back();
  loc_(side, x) = Locator{};
}

SubsetId EngineState::subset_create_(CollectionId c, std::uint8_t side,
                                     std::uint32_t joint_label) {
  subsets_.push_back(Subset{c, side, joint_label, {}, 0, true});
  ++collections_[c].live_subsets;
  SubsetId s = static_cast<SubsetId>(subsets_.size()) - 1;
  rec_({Edit::Kind::SubsetCreate, side, s});
  return s;
}

void EngineState::subset_kill_(SubsetId s) {
  // The node list is kept as-is; undo only flips liveness.
  subsets_[s].alive = false;
  --collections_[subsets_[s].coll].live_subsets;
  rec_({Edit::Kind::SubsetKill, 0, s});
}

void EngineState::subset_add_node_(SubsetId s, NodeId x) {
  std::uint8_t side = subsets_[s].side;
  Edit e{Edit::Kind::SubsetAddNode, side, s, x, 0, 0, loc_(side, x)};
  auto& vec = subsets_[s].nodes;
  vec.push_back(x);
  loc_(side, x) = Locator{Locator::Kind::InSubset, s,
                          static_cast<std::uint32_t>(vec.size()) - 1};
  rec_(e);
}

void EngineState::subset_remove_node_(SubsetId s, NodeId x) {
  std::uint8_t side = subsets_[s].side;
  auto& vec = subsets_[s].nodes;
  std::uint32_t pos = loc_(side, x).pos;
  assert(loc_(side, x).kind == Locator::Kind::InSubset &&
         loc_(side, x).container == s && vec[pos] == x);
  rec_({Edit::Kind::SubsetRemoveNode, side, s, x, pos});
  if (pos + 1 != vec.size()) {
    NodeId moved = vec.back();
    vec[pos] = moved;
    loc_(side, moved).pos = pos;
  }
  vec.pop_back();
  loc_(side, x) = Locator{};
}

void EngineState::bucket_insert_(CollectionId c, std::uint32_t n,
                                 std::uint8_t side, SubsetId s) {
  auto& vec = bucket_side_(collections_[c].buckets[n], side);
  vec.push_back(s);
  subsets_[s].bucket_pos = static_cast<std::uint32_t>(vec.size()) - 1;
  rec_({Edit::Kind::BucketInsert, side, c, static_cast<std::uint32_t>(s), 0, n});
}

void EngineState::bucket_remove_(CollectionId c, std::uint32_t n,
                                 std::uint8_t side, SubsetId s) {
  auto& vec = bucket_side_(collections_[c].buckets.at(n), side);
  std::uint32_t pos = subsets_[s].bucket_pos;
  assert(vec[pos] == s);
  rec_({Edit::Kind::BucketRemove, side, c, static_cast<std::uint32_t>(s), pos, n});
  if (pos + 1 != vec.size()) {
    SubsetId moved = vec.back();
    vec[pos] = moved;
    subsets_[moved].bucket_pos = pos;
  }
  vec.pop_back();
}

void EngineState::collection_kill_(CollectionId c) {
  collections_[c].alive = false;
  rec_({Edit::Kind::CollectionKill, 0, c});
}

void EngineState::undo_to(std::size_t mark) {
  while (trail_.size() > mark) {
    Edit e = trail_.back();
    trail_.pop_back();
    switch (e.kind) {
      case Edit::Kind::PhiInsert:
        phi_.erase_last();
        break;
      case Edit::Kind::FInsert:
        f_.erase_last();
        break;
      case Edit::Kind::BagCreate:
        assert(bags_.back().left.empty() && bags_.back().right.empty());
        bags_.pop_back();
        break;
      case Edit::Kind::BagKill:
        bags_[e.container].alive = true;
        break;
      case Edit::Kind::BagAddNode: {
        auto& vec = bag_side_(bags_[e.container], e.side);
        assert(vec.back() == e.node);
        vec.pop_back();
        loc_(e.side, e.node) = e.old_loc;
        break;
      }
      case Edit::Kind::BagRemoveNode: {
        auto& vec = bag_side_(bags_[e.container], e.side);
        if (e.pos == vec.size()) {
          vec.push_back(e.node);
        } else {
          NodeId moved = vec[e.pos];
          vec.push_back(moved);
          loc_(e.side, moved).pos = static_cast<std::uint32_t>(vec.size()) - 1;
          vec[e.pos] = e.node;
        }
        loc_(e.side, e.node) =
            Locator{Locator::Kind::InBag, e.container, e.pos};
        break;
      }
      case Edit::Kind::SubsetCreate:
        assert(subsets_.back().nodes.empty());
        --collections_[subsets_.back().coll].live_subsets;
        subsets_.pop_back();
        break;
      case Edit::Kind::SubsetKill:
        subsets_[e.container].alive = true;
        ++collections_[subsets_[e.container].coll].live_subsets;
        break;
      case Edit::Kind::SubsetAddNode: {
        auto& vec = subsets_[e.container].nodes;
        assert(vec.back() == e.node);
        vec.pop_back();
        loc_(e.side, e.node) = e.old_loc;
        break;
      }
      case Edit::Kind::SubsetRemoveNode: {
        auto& vec = subsets_[e.container].nodes;
        if (e.pos == vec.size()) {
          vec.push_back(e.node);
        } else {
          NodeId moved = vec[e.pos];
          vec.push_back(moved);
          loc_(e.side, moved).pos = static_cast<std::uint32_t>(vec.size()) - 1;
          vec[e.pos] = e.node;
        }
        loc_(e.side, e.node) =
            Locator{Locator::Kind::InSubset, e.container, e.pos};
        break;
      }
      case Edit::Kind::BucketInsert: {
        auto& vec =
            bucket_side_(collections_[e.container].buckets.at(e.n), e.side);
        assert(!vec.empty() && vec.back() == static_cast<SubsetId>(e.node));
        vec.pop_back();
        break;
      }
      case Edit::Kind::BucketRemove: {
        auto& vec =
            bucket_side_(collections_[e.container].buckets.at(e.n), e.side);
        SubsetId s = static_cast<SubsetId>(e.node);
        if (e.pos == vec.size()) {
          vec.push_back(s);
        } else {
          SubsetId moved = vec[e.pos];
          vec.push_back(moved);
          subsets_[moved].bucket_pos =
              static_cast<std::uint32_t>(vec.size()) - 1;
          vec[e.pos] = s;
        }
        subsets_[s].bucket_pos = e.pos;
        break;
      }
      case Edit::Kind::CollectionKill:
        collections_[e.container].alive = true;
        break;
    }
  }
  failed_ = false;
  rule1_q_.clear();
  rule2_q_.clear();
  rule3_q_.clear();
  r1_head_ = r2_head_ = r3_head_ = 0;
}

// ---------------------------------------------------------------------------
// Deduction machinery
// ---------------------------------------------------------------------------

void EngineState::maybe_enqueue_rule1_(BagId b) {
  if (bags_[b].alive && bags_[b].left.size() == 1 &&
      bags_[b].right.size() == 1)
    rule1_q_.push_back(b);
}

void EngineState::maybe_enqueue_rule2_(CollectionId c, std::uint32_t n) {
  if (!collections_[c].alive) return;
  auto it = collections_[c].buckets.find(n);
  if (it != collections_[c].buckets.end() && it->second.left.size() == 1 &&
      it->second.right.size() == 1)
    rule2_q_.push_back({c, n});
}

void EngineState::note_f_extended_() {
  rec_({Edit::Kind::FInsert});
  rule3_q_.push_back(f_.entries().back());
}

bool EngineState::map_nodes(NodeId u, NodeId v) {
  for (;;) {
    ++map_nodes_calls_;
    if (phi_.contains(u) && phi_.at(u) == v) return true;

    std::uint32_t la = joint_label(0, u), lb = joint_label(1, v);
    std::size_t f_before = f_.size();
    if (!ext_bij(la, lb, f_, mode_))
      return fail_(FailReason::ExtBijLabelConflict);
    if (f_.size() != f_before) note_f_extended_();

    std::size_t phi_before = phi_.size();
    if (!ext_bij(u, v, phi_, CipherMode::Bijective))
      return fail_(FailReason::ExtBijNodeConflict);
    if (phi_.size() != phi_before) rec_({Edit::Kind::PhiInsert});

    if (!delete_mapped_pair_(u, v)) return false;
    if (!split_children_(u, v)) return false;

    bool ru = t1_->is_root(u), rv = t2_->is_root(v);
    if (ru != rv) return fail_(FailReason::TopologyMismatch);
    if (ru) return true;
    NodeId pu = t1_->parent(u), pv = t2_->parent(v);
    if (phi_.contains(pu) && phi_.at(pu) == pv) return true;
    u = pu;
    v = pv;
  }
}

bool EngineState::delete_mapped_pair_(NodeId u, NodeId v) {
  Locator a = loc1_[u], b = loc2_[v];
  if (a.kind == Locator::Kind::Mapped && b.kind == Locator::Kind::Mapped)
    return true;

  if (a.kind == Locator::Kind::InBag && b.kind == Locator::Kind::InBag) {
    if (a.container != b.container)
      return fail_(FailReason::BagCardinalityMismatch);
    BagId bg = a.container;
    bag_remove_node_(bg, 0, u);
    bag_remove_node_(bg, 1, v);
    if (bags_[bg].left.empty())
      bag_kill_(bg);
    else
      maybe_enqueue_rule1_(bg);
    return true;
  }

  if (a.kind == Locator::Kind::InSubset && b.kind == Locator::Kind::InSubset) {
    SubsetId sp = a.container, sq = b.container;
    if (subsets_[sp].coll != subsets_[sq].coll)
      return fail_(FailReason::CollectionMismatch);
    std::uint32_t n = static_cast<std::uint32_t>(subsets_[sp].nodes.size());
    if (subsets_[sq].nodes.size() != n)
      return fail_(FailReason::CollectionMismatch);
    CollectionId c = subsets_[sp].coll;
    auto shrink = [&](SubsetId s, NodeId x) {
      subset_remove_node_(s, x);
      bucket_remove_(c, n, subsets_[s].side, s);
      if (subsets_[s].nodes.empty())
        subset_kill_(s);
      else
        bucket_insert_(c, n - 1, subsets_[s].side, s);
    };
    shrink(sp, u);
    shrink(sq, v);
    kill_collection_if_empty_(c);
    maybe_enqueue_rule2_(c, n);
    if (n > 1) maybe_enqueue_rule2_(c, n - 1);
    return true;
  }

  // The two nodes live in different kinds of container; removing them would
  // leave both pathological, and no ciphering can pair across containers.
  return fail_((a.kind == Locator::Kind::InBag ||
                b.kind == Locator::Kind::InBag)
                   ? FailReason::BagCardinalityMismatch
                   : FailReason::CollectionMismatch);
}

void EngineState::split_bag_(BagId b, const std::vector<NodeId>& left_part,
                             const std::vector<NodeId>& right_part) {
  BagId nb = bag_create_();
  for (NodeId x : left_part) {
    bag_remove_node_(b, 0, x);
    bag_add_node_(nb, 0, x);
  }
  for (NodeId y : right_part) {
    bag_remove_node_(b, 1, y);
    bag_add_node_(nb, 1, y);
  }
  maybe_enqueue_rule1_(nb);
  maybe_enqueue_rule1_(b);
}

void EngineState::split_subset_(SubsetId s, const std::vector<NodeId>& part) {
  CollectionId c = subsets_[s].coll;
  std::uint8_t side = subsets_[s].side;
  std::uint32_t n = static_cast<std::uint32_t>(subsets_[s].nodes.size());
  std::uint32_t p = static_cast<std::uint32_t>(part.size());
  assert(p > 0 && p < n);
  SubsetId ns = subset_create_(c, side, subsets_[s].joint_label);
  for (NodeId x : part) {
    subset_remove_node_(s, x);
    subset_add_node_(ns, x);
  }
  bucket_remove_(c, n, side, s);
  bucket_insert_(c, n - p, side, s);
  bucket_insert_(c, p, side, ns);
}

bool EngineState::split_children_(NodeId u, NodeId v) {
  std::map<BagId, std::vector<NodeId>> bag_l, bag_r;
  std::map<SubsetId, std::vector<NodeId>> sub_l, sub_r;
  for (NodeId c : t1_->children(u)) {
    const Locator& l = loc1_[c];
    if (l.kind == Locator::Kind::InBag)
      bag_l[l.container].push_back(c);
    else if (l.kind == Locator::Kind::InSubset)
      sub_l[l.container].push_back(c);
  }
  for (NodeId c : t2_->children(v)) {
    const Locator& l = loc2_[c];
    if (l.kind == Locator::Kind::InBag)
      bag_r[l.container].push_back(c);
    else if (l.kind == Locator::Kind::InSubset)
      sub_r[l.container].push_back(c);
  }

  // Bags: both sides must cut the same bag by the same amount.
  {
    std::vector<BagId> keys;
    for (const auto& kv : bag_l) keys.push_back(kv.first);
    for (const auto& kv : bag_r) keys.push_back(kv.first);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    for (BagId b : keys) {
      auto il = bag_l.find(b);
      auto ir = bag_r.find(b);
      std::size_t ls = il == bag_l.end() ? 0 : il->second.size();
      std::size_t rs = ir == bag_r.end() ? 0 : ir->second.size();
      if (ls != rs) return fail_(FailReason::BagCardinalityMismatch);
      if (ls == bags_[b].left.size()) continue;  // whole bag: nothing to cut
      double before = 0;
      if (record_split_events_) before = search_space_size(0).log10;
      std::uint32_t p = static_cast<std::uint32_t>(ls);
      std::uint32_t q = static_cast<std::uint32_t>(bags_[b].left.size()) - p;
      split_bag_(b, il->second, ir->second);
      if (record_split_events_)
        split_events_.push_back(
            {false, p, q, 0, 0, 0, before, search_space_size(0).log10});
    }
  }

  // Collections: split every touched subset, then re-check bucket balance.
  {
    struct PendingSplit {
      std::uint32_t n, p;
      SubsetId s;
      const std::vector<NodeId>* part;
    };
    std::map<CollectionId, std::pair<std::vector<PendingSplit>,
                                     std::vector<PendingSplit>>>
        per_coll;
    for (const auto& [s, part] : sub_l) {
      if (part.size() == subsets_[s].nodes.size()) continue;  // whole subset
      per_coll[subsets_[s].coll].first.push_back(
          {static_cast<std::uint32_t>(subsets_[s].nodes.size()),
           static_cast<std::uint32_t>(part.size()), s, &part});
    }
    for (const auto& [s, part] : sub_r) {
      if (part.size() == subsets_[s].nodes.size()) continue;
      per_coll[subsets_[s].coll].second.push_back(
          {static_cast<std::uint32_t>(subsets_[s].nodes.size()),
           static_cast<std::uint32_t>(part.size()), s, &part});
    }
    for (auto& [c, splits] : per_coll) {
      auto& [lsplits, rsplits] = splits;
      auto order = [](const PendingSplit& a, const PendingSplit& b) {
        return std::tie(a.n, a.p, a.s) < std::tie(b.n, b.p, b.s);
      };
      std::sort(lsplits.begin(), lsplits.end(), order);
      std::sort(rsplits.begin(), rsplits.end(), order);
      bool paired = lsplits.size() == rsplits.size();
      if (paired)
        for (std::size_t i = 0; i < lsplits.size(); ++i)
          paired = paired && lsplits[i].n == rsplits[i].n &&
                   lsplits[i].p == rsplits[i].p;

      std::set<std::uint32_t> touched;
      auto note = [&](const PendingSplit& ps) {
        touched.insert(ps.n);
        touched.insert(ps.p);
        touched.insert(ps.n - ps.p);
      };
      if (paired) {
        for (std::size_t i = 0; i < lsplits.size(); ++i) {
          const PendingSplit &L = lsplits[i], &R = rsplits[i];
          SplitEvent ev{true, L.p, L.n - L.p, 0, 0, 0, 0, 0};
          if (record_split_events_) {
            auto count = [&](std::uint32_t n) -> std::uint32_t {
              auto it = collections_[c].buckets.find(n);
              return it == collections_[c].buckets.end()
                         ? 0
                         : static_cast<std::uint32_t>(it->second.left.size());
            };
            ev.count_pq = count(L.n);
            ev.count_p = count(L.p);
            ev.count_q = count(L.n - L.p);
            ev.log10_before = search_space_size(0).log10;
          }
          split_subset_(L.s, *L.part);
          split_subset_(R.s, *R.part);
          if (record_split_events_) {
            ev.log10_after = search_space_size(0).log10;
            split_events_.push_back(ev);
          }
          note(L);
          note(R);
        }
      } else {
        for (const PendingSplit& ps : lsplits) {
          split_subset_(ps.s, *ps.part);
          note(ps);
        }
        for (const PendingSplit& ps : rsplits) {
          split_subset_(ps.s, *ps.part);
          note(ps);
        }
      }

      for (std::uint32_t n : touched) {
        auto it = collections_[c].buckets.find(n);
        if (it == collections_[c].buckets.end()) continue;
        if (it->second.left.size() != it->second.right.size())
          return fail_(FailReason::CollectionMismatch);
      }
      for (std::uint32_t n : touched) maybe_enqueue_rule2_(c, n);
    }
  }
  return true;
}

void EngineState::extract_pair_to_bag_(SubsetId left, SubsetId right) {
  CollectionId c = subsets_[left].coll;
  std::uint32_t n = static_cast<std::uint32_t>(subsets_[left].nodes.size());
  assert(subsets_[right].coll == c && subsets_[right].nodes.size() == n);
  BagId nb = bag_create_();
  // Copy first: bag_add_node_ rewrites the nodes' locators, not the subset,
  // but iterating a container while moving its members invites trouble.
  std::vector<NodeId> lnodes = subsets_[left].nodes;
  std::vector<NodeId> rnodes = subsets_[right].nodes;
  for (NodeId x : lnodes) bag_add_node_(nb, 0, x);
  for (NodeId y : rnodes) bag_add_node_(nb, 1, y);
  bucket_remove_(c, n, 0, left);
  subset_kill_(left);
  bucket_remove_(c, n, 1, right);
  subset_kill_(right);
  kill_collection_if_empty_(c);
  maybe_enqueue_rule1_(nb);
  maybe_enqueue_rule2_(c, n);
}

void EngineState::kill_collection_if_empty_(CollectionId c) {
  if (collections_[c].alive && collections_[c].live_subsets == 0)
    collection_kill_(c);
}

bool EngineState::rule1_fire_(BagId b) {
  if (!bags_[b].alive || bags_[b].left.size() != 1) return true;  // stale
  return map_nodes(bags_[b].left[0], bags_[b].right[0]);
}

bool EngineState::rule2_fire_(CollectionId c, std::uint32_t n) {
  if (!collections_[c].alive) return true;
  auto it = collections_[c].buckets.find(n);
  if (it == collections_[c].buckets.end() || it->second.left.size() != 1 ||
      it->second.right.size() != 1)
    return true;  // stale
  SubsetId p = it->second.left[0], q = it->second.right[0];
  std::size_t f_before = f_.size();
  if (!ext_bij(subsets_[p].joint_label, subsets_[q].joint_label, f_, mode_))
    return fail_(FailReason::ExtBijLabelConflict);
  if (f_.size() != f_before) note_f_extended_();
  extract_pair_to_bag_(p, q);
  return true;
}

bool EngineState::rule3_recheck_(std::uint32_t a, std::uint32_t b) {
  for (CollectionId c = 0; c < static_cast<CollectionId>(collections_.size());
       ++c) {
    if (!collections_[c].alive) continue;
    SubsetId pa = -1, qb = -1;
    int ca = 0, cb = 0;
    for (const auto& [n, bk] : collections_[c].buckets) {
      for (SubsetId s : bk.left)
        if (subsets_[s].joint_label == a) {
          pa = s;
          ++ca;
        }
      for (SubsetId s : bk.right)
        if (subsets_[s].joint_label == b) {
          qb = s;
          ++cb;
        }
    }
    if (ca == 0 && cb == 0) continue;
    if (ca == 0 || cb == 0) return fail_(FailReason::Rule3MissingCounterpart);
    if (ca != cb) return fail_(FailReason::CollectionMismatch);
    // Several same-label subsets can exist after splits; the pairing is
    // then not forced, so deduce only the unique case.
    if (ca > 1) continue;
    if (subsets_[pa].nodes.size() != subsets_[qb].nodes.size())
      return fail_(FailReason::CollectionMismatch);
    extract_pair_to_bag_(pa, qb);
  }
  return true;
}

bool EngineState::propagate() {
  while (!failed_) {
    if (r3_head_ < rule3_q_.size()) {
      auto [a, b] = rule3_q_[r3_head_++];
      if (!rule3_recheck_(a, b)) return false;
      continue;
    }
    if (r2_head_ < rule2_q_.size()) {
      auto [c, n] = rule2_q_[r2_head_++];
      if (!rule2_fire_(c, n)) return false;
      continue;
    }
    if (r1_head_ < rule1_q_.size()) {
      BagId b = rule1_q_[r1_head_++];
      if (!rule1_fire_(b)) return false;
      continue;
    }
    break;
  }
  if (!failed_) {
    rule1_q_.clear();
    rule2_q_.clear();
    rule3_q_.clear();
    r1_head_ = r2_head_ = r3_head_ = 0;
  }
  return !failed_;
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

template <typename Key, typename KeyFn>
bool EngineState::partition_bags_(KeyFn&& key_of) {
  std::vector<BagId> live;
  for (BagId b = 0; b < static_cast<BagId>(bags_.size()); ++b)
    if (bags_[b].alive) live.push_back(b);
  for (BagId b : live) {
    std::map<Key, std::pair<std::vector<NodeId>, std::vector<NodeId>>> groups;
    for (NodeId x : bags_[b].left) groups[key_of(0, x)].first.push_back(x);
    for (NodeId y : bags_[b].right) groups[key_of(1, y)].second.push_back(y);
    if (groups.size() == 1) continue;  // rebuilt identically: keep the bag
    for (const auto& [k, g] : groups)
      if (g.first.size() != g.second.size())
        return fail_(FailReason::BagCardinalityMismatch);
    for (const auto& [k, g] : groups) {
      BagId nb = bag_create_();
      for (NodeId x : g.first) {
        bag_remove_node_(b, 0, x);
        bag_add_node_(nb, 0, x);
      }
      for (NodeId y : g.second) {
        bag_remove_node_(b, 1, y);
        bag_add_node_(nb, 1, y);
      }
      maybe_enqueue_rule1_(nb);
    }
    bag_kill_(b);
  }
  return true;
}

bool EngineState::apply_depth_filter() {
  return partition_bags_<std::uint32_t>([this](std::uint8_t side, NodeId u) {
    return side == 0 ? t1_->depth(u) : t2_->depth(u);
  });
}

bool EngineState::apply_parents_filter() {
  // Group by the children signature of the parent. The parent identity
  // itself is dropped; MapNodes recovers it through the recursion.
  std::vector<std::optional<Signature>> sig1(t1_->size()), sig2(t2_->size());
  return partition_bags_<Signature>([&](std::uint8_t side, NodeId u) {
    const LabeledTree& t = side == 0 ? *t1_ : *t2_;
    auto& cache = side == 0 ? sig1 : sig2;
    if (t.is_root(u)) return Signature{0xFFFFFFFFu};  // roots map at depth 0
    NodeId p = t.parent(u);
    if (!cache[p]) cache[p] = children_signature(t, p, coloring_);
    return *cache[p];
  });
}

bool EngineState::apply_class_filter() {
  return partition_bags_<ColorId>([this](std::uint8_t side, NodeId u) {
    return coloring_.color(side, u);
  });
}

bool EngineState::rule3_label_bags_(BagId b) {
  std::map<std::uint32_t, std::vector<NodeId>> lp, rp;
  for (NodeId x : bags_[b].left) lp[joint_label(0, x)].push_back(x);
  for (NodeId y : bags_[b].right) rp[joint_label(1, y)].push_back(y);

  // Label pairs already fixed by f become bags of their own.
  std::vector<std::uint32_t> done_left;
  for (const auto& [a, s1] : lp) {
    if (!f_.contains(a)) continue;
    std::uint32_t fb = f_.at(a);
    auto it = rp.find(fb);
    if (it == rp.end()) return fail_(FailReason::Rule3MissingCounterpart);
    if (it->second.size() != s1.size())
      return fail_(FailReason::CollectionMismatch);
    BagId nb = bag_create_();
    for (NodeId x : s1) {
      bag_remove_node_(b, 0, x);
      bag_add_node_(nb, 0, x);
    }
    for (NodeId y : it->second) {
      bag_remove_node_(b, 1, y);
      bag_add_node_(nb, 1, y);
    }
    maybe_enqueue_rule1_(nb);
    done_left.push_back(a);
    rp.erase(it);
  }
  for (std::uint32_t a : done_left) lp.erase(a);
  for (const auto& [fb, s2] : rp)
    if (f_.image_contains(fb))
      return fail_(FailReason::Rule3MissingCounterpart);

  if (lp.empty() && rp.empty()) {
    bag_kill_(b);
    return true;
  }
  if (lp.empty() != rp.empty()) return fail_(FailReason::CollectionMismatch);

  // The rest cannot be paired yet; they become one collection.
  CollectionId c = static_cast<CollectionId>(collections_.size());
  collections_.push_back(Collection{creation_counter_++, {}, 0, true});
  for (const auto& [a, s1] : lp) {
    SubsetId s = subset_create_(c, 0, a);
    for (NodeId x : s1) {
      bag_remove_node_(b, 0, x);
      subset_add_node_(s, x);
    }
    bucket_insert_(c, static_cast<std::uint32_t>(s1.size()), 0, s);
  }
  for (const auto& [fb, s2] : rp) {
    SubsetId s = subset_create_(c, 1, fb);
    for (NodeId y : s2) {
      bag_remove_node_(b, 1, y);
      subset_add_node_(s, y);
    }
    bucket_insert_(c, static_cast<std::uint32_t>(s2.size()), 1, s);
  }
  for (const auto& [n, bk] : collections_[c].buckets)
    if (bk.left.size() != bk.right.size())
      return fail_(FailReason::CollectionMismatch);
  for (const auto& [n, bk] : collections_[c].buckets)
    maybe_enqueue_rule2_(c, n);
  bag_kill_(b);
  return true;
}

bool EngineState::apply_labels_filter() {
  std::vector<BagId> live;
  for (BagId b = 0; b < static_cast<BagId>(bags_.size()); ++b)
    if (bags_[b].alive) live.push_back(b);
  for (BagId b : live)
    if (!rule3_label_bags_(b)) return false;
  return true;
}

bool EngineState::apply_subset_pairing(SubsetId left, SubsetId right) {
  if (left < 0 || right < 0 ||
      left >= static_cast<SubsetId>(subsets_.size()) ||
      right >= static_cast<SubsetId>(subsets_.size()))
    return fail_(FailReason::CollectionMismatch);
  const Subset& p = subsets_[left];
  const Subset& q = subsets_[right];
  if (!p.alive || !q.alive || p.coll != q.coll || p.side != 0 ||
      q.side != 1 || p.nodes.size() != q.nodes.size())
    return fail_(FailReason::CollectionMismatch);
  std::size_t f_before = f_.size();
  if (!ext_bij(p.joint_label, q.joint_label, f_, mode_))
    return fail_(FailReason::ExtBijLabelConflict);
  if (f_.size() != f_before) note_f_extended_();
  extract_pair_to_bag_(left, right);
  return true;
}

// ---------------------------------------------------------------------------
// Metrics and validation
// ---------------------------------------------------------------------------

BigCount EngineState::search_space_size(std::uint32_t exact_digit_cap) const {
  std::vector<std::uint64_t> bag_sizes;
  for (const Bag& b : bags_)
    if (b.alive && !b.left.empty()) bag_sizes.push_back(b.left.size());
  std::vector<std::map<std::uint64_t, std::uint64_t>> colls;
  for (const Collection& c : collections_) {
    if (!c.alive) continue;
    std::map<std::uint64_t, std::uint64_t> prof;
    for (const auto& [n, bk] : c.buckets)
      if (!bk.left.empty()) prof[n] = bk.left.size();
    if (!prof.empty()) colls.push_back(std::move(prof));
  }
  return search_space_from_profile(bag_sizes, colls, exact_digit_cap);
}

void EngineState::record_stage(const std::string& name,
                               std::uint32_t exact_digit_cap) {
  BigCount v = search_space_size(exact_digit_cap);
  metrics_.push_back({name, v.log10, std::move(v.exact)});
}

std::vector<std::string> EngineState::validate() const {
  std::vector<std::string> bad;
  auto complain = [&](std::string s) { bad.push_back(std::move(s)); };

  std::size_t in_containers_l = 0, in_containers_r = 0;
  for (std::uint8_t side = 0; side < 2; ++side) {
    const LabeledTree& t = side == 0 ? *t1_ : *t2_;
    for (NodeId u = 0; u < t.size(); ++u) {
      const Locator& l = side == 0 ? loc1_[u] : loc2_[u];
      switch (l.kind) {
        case Locator::Kind::Mapped: {
          bool ok = side == 0 ? phi_.contains(u) : phi_.image_contains(u);
          if (!ok)
            complain("node marked mapped but not in phi: side " +
                     std::to_string(side) + " node " + std::to_string(u));
          break;
        }
        case Locator::Kind::InBag: {
          (side == 0 ? in_containers_l : in_containers_r)++;
          const Bag& b = bags_[l.container];
          const auto& vec = side == 0 ? b.left : b.right;
          if (!b.alive || l.pos >= vec.size() || vec[l.pos] != u)
            complain("bag locator broken for node " + std::to_string(u));
          break;
        }
        case Locator::Kind::InSubset: {
          (side == 0 ? in_containers_l : in_containers_r)++;
          const Subset& s = subsets_[l.container];
          if (!s.alive || s.side != side || l.pos >= s.nodes.size() ||
              s.nodes[l.pos] != u)
            complain("subset locator broken for node " + std::to_string(u));
          break;
        }
      }
    }
  }
  if (phi_.size() + in_containers_l != t1_->size())
    complain("left nodes are not partitioned between phi and containers");
  if (phi_.size() + in_containers_r != t2_->size())
    complain("right nodes are not partitioned between phi and containers");

  for (std::size_t i = 0; i < bags_.size(); ++i) {
    const Bag& b = bags_[i];
    if (!b.alive) continue;
    if (b.left.empty() || b.left.size() != b.right.size())
      complain("bag " + std::to_string(i) + " unbalanced or empty");
  }

  for (std::size_t i = 0; i < subsets_.size(); ++i) {
    const Subset& s = subsets_[i];
    if (!s.alive) continue;
    if (s.nodes.empty()) complain("empty live subset " + std::to_string(i));
    for (NodeId x : s.nodes)
      if (joint_label(s.side, x) != s.joint_label)
        complain("subset " + std::to_string(i) + " label not uniform");
  }

  for (std::size_t i = 0; i < collections_.size(); ++i) {
    const Collection& c = collections_[i];
    if (!c.alive) {
      if (c.live_subsets != 0)
        complain("dead collection " + std::to_string(i) +
                 " still owns subsets");
      continue;
    }
    std::uint32_t seen = 0;
    for (const auto& [n, bk] : c.buckets) {
      if (bk.left.size() != bk.right.size())
        complain("collection " + std::to_string(i) + " bucket " +
                 std::to_string(n) + " unbalanced");
      for (std::uint8_t side = 0; side < 2; ++side) {
        const auto& vec = side == 0 ? bk.left : bk.right;
        for (std::uint32_t pos = 0; pos < vec.size(); ++pos) {
          const Subset& s = subsets_[vec[pos]];
          ++seen;
          if (!s.alive || s.coll != static_cast<CollectionId>(i) ||
              s.side != side || s.nodes.size() != n || s.bucket_pos != pos)
            complain("collection " + std::to_string(i) +
                     " bucket entry broken at n=" + std::to_string(n));
        }
      }
    }
    if (seen != c.live_subsets)
      complain("collection " + std::to_string(i) + " live_subsets off");
  }

  for (const auto& [u, v] : phi_.entries()) {
    bool ru = t1_->is_root(u), rv = t2_->is_root(v);
    if (ru != rv) complain("phi maps a root to a non-root");
    if (!ru) {
      NodeId pu = t1_->parent(u), pv = t2_->parent(v);
      if (!phi_.contains(pu) || phi_.at(pu) != pv)
        complain("phi violates parent preservation at node " +
                 std::to_string(u));
    }
  }
  return bad;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

Outcome run(const LabeledTree& t1, const LabeledTree& t2,
            const RunOptions& options) {
  Coloring col = color_trees({&t1, &t2});
  NEquiv neq = n_equiv(t1, col);

  Outcome out;
  out.log10_n_equiv = neq.log10;

  if (t1.size() != t2.size() || col.root_color(0) != col.root_color(1)) {
    out.verdict = Outcome::Verdict::NotIsomorphic;
    out.reason = FailReason::TopologyMismatch;
    BigCount initial = search_space_from_profile(
        {t1.size()}, {}, options.exact_digit_cap);
    out.stages.push_back({"initial", initial.log10, initial.exact});
    out.n_final = std::move(initial);
    out.r_final = out.n_final.log10 - neq.log10;
    return out;
  }

  EngineState st(t1, t2, std::move(col), options.mode);
  st.set_record_split_events(options.record_split_events);
  st.build_initial_bag();
  st.record_stage("initial", options.exact_digit_cap);

  struct Stage {
    const char* name;
    bool (EngineState::*fn)();
  };
  static constexpr Stage kStages[] = {
      {"depth", &EngineState::apply_depth_filter},
      {"parents", &EngineState::apply_parents_filter},
      {"equiv_class", &EngineState::apply_class_filter},
      {"labels", &EngineState::apply_labels_filter},
  };

  bool contradiction = false;
  for (const Stage& stage : kStages) {
    if (!((st.*stage.fn)() && st.propagate())) {
      contradiction = true;
      break;
    }
    st.record_stage(stage.name, options.exact_digit_cap);
    if (options.validate_each_stage) {
      auto violations = st.validate();
      if (!violations.empty()) {
        std::ostringstream msg;
        msg << "engine invariant broken after stage " << stage.name << ":";
        for (const auto& v : violations) msg << "\n  " << v;
        throw std::logic_error(msg.str());
      }
    }
    if (st.all_mapped()) break;
  }

  out.stages = st.metrics_log();
  out.map_nodes_calls = st.map_nodes_calls();
  out.split_events = st.split_events();

  if (contradiction) {
    out.verdict = Outcome::Verdict::NotIsomorphic;
    out.reason = st.fail_reason();
    const StageMetric& last = out.stages.back();
    out.n_final = {last.log10_n, last.exact};
    out.r_final = out.n_final.log10 - neq.log10;
    return out;
  }

  out.n_final = st.search_space_size(options.exact_digit_cap);
  out.r_final = out.n_final.log10 - neq.log10;
  for (const auto& [u, v] : st.phi().entries()) out.phi.push_back({u, v});
  std::sort(out.phi.begin(), out.phi.end());
  for (const auto& [a, b] : st.f().entries())
    out.f.push_back({st.joint_symbol(a), st.joint_symbol(b)});

  if (st.all_mapped()) {
    std::vector<NodeId> total(t1.size());
    for (const auto& [u, v] : out.phi) total[u] = v;
    if (!is_tree_ciphering(t1, t2, total, options.mode))
      throw std::logic_error(
          "engine produced a total map that is not a tree ciphering");
    out.verdict = Outcome::Verdict::Isomorphic;
  } else {
    out.verdict = Outcome::Verdict::Undecided;
    out.residual = std::move(st);
  }
  return out;
}

double log_ratio(const EngineState& state, const LabeledTree& t1) {
  return state.search_space_size(0).log10 -
         n_equiv(t1, state.coloring()).log10;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace {

nlohmann::json residual_to_json(const EngineState& st) {
  nlohmann::json j;
  auto bags = nlohmann::json::array();
  for (const Bag& b : st.bags()) {
    if (!b.alive) continue;
    nlohmann::json jb;
    jb["left"] = b.left;
    jb["right"] = b.right;
    bags.push_back(std::move(jb));
  }
  j["bags"] = std::move(bags);
  auto colls = nlohmann::json::array();
  for (const Collection& c : st.collections()) {
    if (!c.alive) continue;
    nlohmann::json by_size = nlohmann::json::object();
    for (const auto& [n, bk] : c.buckets) {
      if (bk.empty()) continue;
      nlohmann::json sides;
      auto dump_side = [&](const std::vector<SubsetId>& ids) {
        auto arr = nlohmann::json::array();
        for (SubsetId s : ids) arr.push_back(st.subsets()[s].nodes);
        return arr;
      };
      sides["left"] = dump_side(bk.left);
      sides["right"] = dump_side(bk.right);
      by_size[std::to_string(n)] = std::move(sides);
    }
    colls.push_back(nlohmann::json{{"by_size", std::move(by_size)}});
  }
  j["collections"] = std::move(colls);
  return j;
}

}  // namespace

std::string outcome_to_json(const Outcome& out, int indent) {
  nlohmann::json j;
  j["verdict"] = to_string(out.verdict);
  if (out.reason) j["reason"] = to_string(*out.reason);
  if (out.verdict != Outcome::Verdict::NotIsomorphic) {
    auto phi = nlohmann::json::array();
    for (const auto& [u, v] : out.phi)
      phi.push_back(nlohmann::json::array({u, v}));
    j["phi"] = std::move(phi);
    auto f = nlohmann::json::array();
    for (const auto& [a, b] : out.f)
      f.push_back(nlohmann::json::array({a, b}));
    j["f"] = std::move(f);
  }
  if (out.residual) j["residual"] = residual_to_json(*out.residual);
  j["log10_N_final"] = out.n_final.log10;
  j["log10_N_equiv"] = out.log10_n_equiv;
  j["r_final"] = out.r_final;
  auto stages = nlohmann::json::array();
  for (const StageMetric& m : out.stages)
    stages.push_back(nlohmann::json{{"name", m.name}, {"log10_N", m.log10_n}});
  j["stages"] = std::move(stages);
  return indent < 0 ? j.dump() : j.dump(indent);
}

}  // namespace treecipher
