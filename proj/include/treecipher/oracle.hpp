#pragma once

#include <functional>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "treecipher/ahu.hpp"
#include "treecipher/engine.hpp"
#include "treecipher/tree.hpp"

namespace treecipher {

/// One total tree isomorphism, phi[u in T1] = v in T2.
struct IsomorphismWitness {
  std::vector<NodeId> phi;
};

/// Def.1 check: bijection preserving the parent/child relation with roots
/// mapped together.
bool is_tree_isomorphism(const LabeledTree& t1, const LabeledTree& t2,
                         std::span<const NodeId> phi);

/// R_phi, the relation {(label(u), label(phi(u)))} as label-text pairs.
std::set<std::pair<std::string, std::string>> induced_relation(
    const LabeledTree& t1, const LabeledTree& t2, std::span<const NodeId> phi);

bool relation_is_bijection(
    const std::set<std::pair<std::string, std::string>>& rel);

/// Def.2: the witness is a tree ciphering iff R_phi is a bijection
/// (Identity mode: iff it is the identity relation).
bool is_ciphering(const IsomorphismWitness& w, const LabeledTree& t1,
                  const LabeledTree& t2, CipherMode mode);

/// Both checks at once on a raw map.
bool is_tree_ciphering(const LabeledTree& t1, const LabeledTree& t2,
                       std::span<const NodeId> phi, CipherMode mode);

/// Emits every tree isomorphism T1 -> T2 exactly once, built from the roots
/// by matching equal-colored children in all possible ways (children grouped
/// per color, right sides permuted in lexicographic order of sorted ids).
/// The visitor returns false to stop early. Not isomorphic => no emissions.
void enumerate_isomorphisms(
    const LabeledTree& t1, const LabeledTree& t2, const Coloring& coloring,
    const std::function<bool(const IsomorphismWitness&)>& visit);

std::vector<IsomorphismWitness> enumerate_all_isomorphisms(
    const LabeledTree& t1, const LabeledTree& t2, const Coloring& coloring);

/// second after first: (second . first)(u) = second.phi[first.phi[u]].
IsomorphismWitness compose_witness(const IsomorphismWitness& first,
                                   const IsomorphismWitness& second);
IsomorphismWitness invert_witness(const IsomorphismWitness& w);

/// decide_brute refuses inputs whose isomorphism space exceeds the cap.
class BruteForceCapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BruteResult {
  bool isomorphic = false;
  std::optional<IsomorphismWitness> witness;
};

/// Exhaustive ground truth: T1 ~ T2 iff some enumerated isomorphism is a
/// ciphering. Throws BruteForceCapExceeded when N_equiv(T1) > cap.
BruteResult decide_brute(const LabeledTree& t1, const LabeledTree& t2,
                         CipherMode mode = CipherMode::Bijective,
                         const BigInt& cap = BigInt(1000000));

/// Resolves an Undecided engine state by depth-first search over the
/// residual choices (collection subsets pair within their size bucket, bag
/// members pair within their bag), propagating deductions after every
/// decision and undoing through the state's edit trail. Always terminates;
/// the returned verdict is Isomorphic (with a verified witness) or
/// NotIsomorphic.
Outcome complete_backtracking(EngineState residual);

}  // namespace treecipher
