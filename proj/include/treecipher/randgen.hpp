#pragma once

#include <cstdint>
#include <utility>

#include "treecipher/tree.hpp"

namespace treecipher {

/// splitmix64 mixer; used to derive independent per-purpose RNG streams
/// from one user seed, so runs reproduce bit-for-bit across platforms.
std::uint64_t splitmix64(std::uint64_t x);

struct GenConfig {
  std::uint32_t n = 1;
  std::uint32_t alphabet_size = 1;
  std::uint64_t seed = 0;
};

/// The i-th symbol of a generated alphabet: 'a'..'z' while the alphabet
/// fits, "L<i>" beyond that.
std::string alphabet_symbol(std::uint32_t index, std::uint32_t alphabet_size);

/// Random recursive tree: node i attaches to a parent drawn uniformly among
/// the i-1 earlier nodes. Shape only; every label is the placeholder "_".
LabeledTree random_recursive_tree(const GenConfig& cfg);

/// Fresh copy with i.i.d. uniform labels over the configured alphabet.
LabeledTree assign_labels(const LabeledTree& t, const GenConfig& cfg);

LabeledTree random_labeled_tree(const GenConfig& cfg);

/// Same tree, each node's children storage order independently permuted.
LabeledTree shuffled_copy(const LabeledTree& t, std::uint64_t seed);

/// One uniformly chosen node gets a different label drawn uniformly from
/// the labels already present in the tree. Throws std::invalid_argument
/// when the tree carries a single label.
LabeledTree perturb_one_label(const LabeledTree& t, std::uint64_t seed);

enum class Scenario { Similar, Perturbed };
const char* to_string(Scenario s);

/// The experiment protocol: T1 random labeled, T2 its shuffled copy,
/// optionally with one label perturbed (the hardest negative case).
std::pair<LabeledTree, LabeledTree> scenario_pair(const GenConfig& cfg,
                                                  Scenario scenario);

}  // namespace treecipher
