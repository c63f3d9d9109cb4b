#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "treecipher/ahu.hpp"
#include "treecipher/combinatorics.hpp"
#include "treecipher/partial_bijection.hpp"
#include "treecipher/tree.hpp"

namespace treecipher {

/// Why a run concluded that no tree ciphering exists.
enum class FailReason {
  ExtBijNodeConflict,
  ExtBijLabelConflict,
  BagCardinalityMismatch,
  CollectionMismatch,
  Rule3MissingCounterpart,
  TopologyMismatch,
};

const char* to_string(FailReason r);

using BagId = std::int32_t;
using SubsetId = std::int32_t;
using CollectionId = std::int32_t;

/// Paired equal-size node sets, one side per tree; members are mutual
/// mapping candidates. An unbalanced bag is a contradiction, never a state.
struct Bag {
  std::uint64_t creation_index = 0;
  std::vector<NodeId> left, right;
  bool alive = true;
};

/// One uniform-label node set inside a collection.
struct Subset {
  CollectionId coll = -1;
  std::uint8_t side = 0;  // 0 = left tree, 1 = right tree
  std::uint32_t joint_label = 0;
  std::vector<NodeId> nodes;
  std::uint32_t bucket_pos = 0;
  bool alive = true;
};

struct Bucket {
  std::vector<SubsetId> left, right;
  bool empty() const { return left.empty() && right.empty(); }
};

/// Uniform-label subsets grouped by cardinality; subsets of equal size are
/// candidates to pair into bags once their labels get related by f.
struct Collection {
  std::uint64_t creation_index = 0;
  std::map<std::uint32_t, Bucket> buckets;  // size n -> subsets of that size
  std::uint32_t live_subsets = 0;
  bool alive = true;
};

/// Where one node currently lives.
struct Locator {
  enum class Kind : std::uint8_t { InBag, InSubset, Mapped };
  Kind kind = Kind::Mapped;
  std::int32_t container = -1;  // BagId or SubsetId
  std::uint32_t pos = 0;        // index in the container's node vector
};

struct StageMetric {
  std::string name;
  double log10_n = 0.0;
  std::optional<BigInt> exact;
};

/// One SplitChildren split with the full before/after recomputation of
/// log10 N, for the search-space accounting checks.
struct SplitEvent {
  bool collection = false;
  std::uint32_t p = 0;  // intersection part
  std::uint32_t q = 0;  // remainder part
  // Pre-split bucket counts (collection splits only).
  std::uint32_t count_pq = 0, count_p = 0, count_q = 0;
  double log10_before = 0.0, log10_after = 0.0;
};

struct RunOptions {
  CipherMode mode = CipherMode::Bijective;
  std::uint32_t exact_digit_cap = 10000;
  bool validate_each_stage = false;
  bool record_split_events = false;
};

/// N(B,C) = prod over bags (#B)! * prod over collections prod_n
/// (n!)^#C(n) * (#C(n))!, given just the container profile.
BigCount search_space_from_profile(
    const std::vector<std::uint64_t>& bag_sizes,
    const std::vector<std::map<std::uint64_t, std::uint64_t>>& collections,
    std::uint32_t exact_digit_cap = 10000);

/// Bags + collections + phi + f + the node locator: the evolving state of
/// one reduction run. Copyable (Undecided outcomes snapshot it); holds
/// non-owning pointers to the two input trees, which must outlive it.
class EngineState {
 public:
  EngineState(const LabeledTree& t1, const LabeledTree& t2, Coloring coloring,
              CipherMode mode);

  const LabeledTree& t1() const { return *t1_; }
  const LabeledTree& t2() const { return *t2_; }
  const Coloring& coloring() const { return coloring_; }
  CipherMode mode() const { return mode_; }

  const PartialBijection& phi() const { return phi_; }
  const PartialBijection& f() const { return f_; }
  const std::vector<Bag>& bags() const { return bags_; }
  const std::vector<Subset>& subsets() const { return subsets_; }
  const std::vector<Collection>& collections() const { return collections_; }
  const Locator& locator(std::uint8_t side, NodeId u) const {
    return side == 0 ? loc1_[u] : loc2_[u];
  }

  bool failed() const { return failed_; }
  FailReason fail_reason() const { return fail_reason_; }
  bool all_mapped() const { return phi_.size() == t1_->size(); }
  std::uint64_t map_nodes_calls() const { return map_nodes_calls_; }

  std::uint32_t joint_label_count() const { return joint_symbols_.size(); }
  std::uint32_t joint_label(std::uint8_t side, NodeId u) const {
    return side == 0 ? joint_label_1_[t1_->label(u)]
                     : joint_label_2_[t2_->label(u)];
  }
  const std::string& joint_symbol(std::uint32_t id) const {
    return joint_symbols_[id];
  }

  /// The paper's MapNodes: relate labels then nodes through ExtBij, pull
  /// both nodes out of their containers, split their children out of every
  /// container they share with non-siblings, then force the parents. False
  /// means the run is a contradiction (fail_reason says why).
  bool map_nodes(NodeId u, NodeId v);

  /// Deduction Rules 1-3 to fixpoint. False on contradiction.
  bool propagate();

  // The four filters of the reduction pipeline, in paper order. Each leaves
  // the rule queues filled; callers run propagate() afterwards.
  void build_initial_bag();
  bool apply_depth_filter();
  bool apply_parents_filter();
  bool apply_class_filter();
  bool apply_labels_filter();

  /// Pair one collection subset with another (a backtracking decision):
  /// relates their labels through ExtBij and turns them into a bag.
  bool apply_subset_pairing(SubsetId left, SubsetId right);

  BigCount search_space_size(std::uint32_t exact_digit_cap = 10000) const;

  void record_stage(const std::string& name, std::uint32_t exact_digit_cap);
  const std::vector<StageMetric>& metrics_log() const { return metrics_; }

  void set_record_split_events(bool on) { record_split_events_ = on; }
  const std::vector<SplitEvent>& split_events() const { return split_events_; }

  /// Trail-based snapshot/undo for backtracking. Recording is off during
  /// plain runs; marks must be taken at rule fixpoints.
  void enable_trail() { trail_enabled_ = true; }
  std::size_t trail_mark() const { return trail_.size(); }
  void undo_to(std::size_t mark);

  /// Structural invariant check; returns human-readable violations (empty
  /// when healthy).
  std::vector<std::string> validate() const;

 private:
  struct Edit {
    enum class Kind : std::uint8_t {
      PhiInsert,
      FInsert,
      BagCreate,
      BagKill,
      BagAddNode,
      BagRemoveNode,
      SubsetCreate,
      SubsetKill,
      SubsetAddNode,
      SubsetRemoveNode,
      BucketInsert,
      BucketRemove,
      CollectionKill,
    };
    Kind kind;
    std::uint8_t side = 0;
    std::int32_t container = -1;
    std::uint32_t node = 0;
    std::uint32_t pos = 0;
    std::uint32_t n = 0;  // bucket key for bucket edits
    Locator old_loc;

    Edit(Kind k, std::uint8_t sd = 0, std::int32_t cont = -1,
         std::uint32_t nd = 0, std::uint32_t ps = 0, std::uint32_t nn = 0,
         Locator old = {})
        : kind(k), side(sd), container(cont), node(nd), pos(ps), n(nn),
          old_loc(old) {}
  };

  // Primitive trail-recorded mutations.
  void rec_(const Edit& e) {
    if (trail_enabled_) trail_.push_back(e);
  }
  BagId bag_create_();
  void bag_kill_(BagId b);
  void bag_add_node_(BagId b, std::uint8_t side, NodeId x);
  void bag_remove_node_(BagId b, std::uint8_t side, NodeId x);
  SubsetId subset_create_(CollectionId c, std::uint8_t side,
                          std::uint32_t joint_label);
  void subset_kill_(SubsetId s);
  void subset_add_node_(SubsetId s, NodeId x);
  void subset_remove_node_(SubsetId s, NodeId x);
  void bucket_insert_(CollectionId c, std::uint32_t n, std::uint8_t side,
                      SubsetId s);
  void bucket_remove_(CollectionId c, std::uint32_t n, std::uint8_t side,
                      SubsetId s);
  void collection_kill_(CollectionId c);

  Locator& loc_(std::uint8_t side, NodeId u) {
    return side == 0 ? loc1_[u] : loc2_[u];
  }
  std::vector<NodeId>& bag_side_(Bag& b, std::uint8_t side) {
    return side == 0 ? b.left : b.right;
  }
  std::vector<SubsetId>& bucket_side_(Bucket& bk, std::uint8_t side) {
    return side == 0 ? bk.left : bk.right;
  }

  bool fail_(FailReason r) {
    failed_ = true;
    fail_reason_ = r;
    return false;
  }

  void maybe_enqueue_rule1_(BagId b);
  void maybe_enqueue_rule2_(CollectionId c, std::uint32_t n);
  void note_f_extended_();

  bool delete_mapped_pair_(NodeId u, NodeId v);
  bool split_children_(NodeId u, NodeId v);
  void split_bag_(BagId b, const std::vector<NodeId>& left_part,
                  const std::vector<NodeId>& right_part);
  void split_subset_(SubsetId s, const std::vector<NodeId>& part);
  void extract_pair_to_bag_(SubsetId left, SubsetId right);
  void kill_collection_if_empty_(CollectionId c);

  bool rule1_fire_(BagId b);
  bool rule2_fire_(CollectionId c, std::uint32_t n);
  bool rule3_recheck_(std::uint32_t a, std::uint32_t b);
  bool rule3_label_bags_(BagId bag);

  template <typename Key, typename KeyFn>
  bool partition_bags_(KeyFn&& key_of);

  const LabeledTree* t1_;
  const LabeledTree* t2_;
  Coloring coloring_;
  CipherMode mode_;

  std::vector<std::uint32_t> joint_label_1_, joint_label_2_;
  std::vector<std::string> joint_symbols_;

  PartialBijection phi_, f_;
  std::vector<Bag> bags_;
  std::vector<Subset> subsets_;
  std::vector<Collection> collections_;
  std::vector<Locator> loc1_, loc2_;
  std::uint64_t creation_counter_ = 0;

  std::vector<BagId> rule1_q_;
  std::vector<std::pair<CollectionId, std::uint32_t>> rule2_q_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> rule3_q_;
  std::size_t r1_head_ = 0, r2_head_ = 0, r3_head_ = 0;

  std::vector<Edit> trail_;
  bool trail_enabled_ = false;

  std::vector<StageMetric> metrics_;
  std::vector<SplitEvent> split_events_;
  bool record_split_events_ = false;
  std::uint64_t map_nodes_calls_ = 0;

  bool failed_ = false;
  FailReason fail_reason_ = FailReason::TopologyMismatch;
};

/// Result of a reduction run (and of the backtracking completer).
struct Outcome {
  enum class Verdict { Isomorphic, NotIsomorphic, Undecided };
  Verdict verdict = Verdict::Undecided;
  std::optional<FailReason> reason;

  // Node pairs (T1 id, T2 id); total for Isomorphic, the deduced part for
  // Undecided, absent for NotIsomorphic.
  std::vector<std::pair<NodeId, NodeId>> phi;
  std::vector<std::pair<std::string, std::string>> f;

  std::optional<EngineState> residual;  // Undecided only

  BigCount n_final;
  double log10_n_equiv = 0.0;
  double r_final = 0.0;
  std::vector<StageMetric> stages;
  std::uint64_t map_nodes_calls = 0;
  std::vector<SplitEvent> split_events;

  bool isomorphic() const { return verdict == Verdict::Isomorphic; }
};

const char* to_string(Outcome::Verdict v);

/// The full pipeline: AHU precheck, one all-nodes bag, then the depth,
/// parents/children-signature, equivalence-class and labels filters with
/// their deduction rules, recording log10 N(B,C) after each stage.
Outcome run(const LabeledTree& t1, const LabeledTree& t2,
            const RunOptions& options = {});

/// r = log10 N(B,C) - log10 N_equiv(T1).
double log_ratio(const EngineState& state, const LabeledTree& t1);

/// Outcome as the machine-readable JSON object emitted by the CLI.
std::string outcome_to_json(const Outcome& out, int indent = -1);

}  // namespace treecipher
