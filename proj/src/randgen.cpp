#include "treecipher/randgen.hpp"

#include <cassert>
#include <limits>
#include <random>
#include <stdexcept>

namespace treecipher {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

namespace {

// Stream tags keep shape / labels / shuffle / perturb draws independent.
constexpr std::uint64_t kShapeStream = 0x7368617065ull;
constexpr std::uint64_t kLabelStream = 0x6c6162656cull;
constexpr std::uint64_t kShuffleStream = 0x7368756666ull;
constexpr std::uint64_t kPerturbStream = 0x70657274ull;

// mt19937_64 plus an unbiased bounded draw (modulo rejection); both are
// fully specified, so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t below(std::uint64_t n) {
    assert(n > 0);
    std::uint64_t m = (std::numeric_limits<std::uint64_t>::max() % n + 1) % n;
    if (m == 0) return eng_() % n;  // n divides 2^64
    std::uint64_t limit = 0 - m;    // wraps to 2^64 - m
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace

std::string alphabet_symbol(std::uint32_t index, std::uint32_t alphabet_size) {
  if (alphabet_size <= 26) return std::string(1, static_cast<char>('a' + index));
  return "L" + std::to_string(index);
}

LabeledTree random_recursive_tree(const GenConfig& cfg) {
  if (cfg.n < 1)
    throw std::invalid_argument("random_recursive_tree: n must be >= 1");
  Rng rng(splitmix64(cfg.seed ^ kShapeStream));
  LabeledTree t("_");
  for (std::uint32_t i = 1; i < cfg.n; ++i)
    t.add_child(static_cast<NodeId>(rng.below(i)), "_");
  return t;
}

LabeledTree assign_labels(const LabeledTree& t, const GenConfig& cfg) {
  if (cfg.alphabet_size < 1)
    throw std::invalid_argument("assign_labels: alphabet_size must be >= 1");
  Rng rng(splitmix64(cfg.seed ^ kLabelStream));
  LabeledTree out = t;
  for (NodeId u = 0; u < out.size(); ++u)
    out.relabel(u, alphabet_symbol(
                       static_cast<std::uint32_t>(rng.below(cfg.alphabet_size)),
                       cfg.alphabet_size));
  return out;
}

LabeledTree random_labeled_tree(const GenConfig& cfg) {
  return assign_labels(random_recursive_tree(cfg), cfg);
}

LabeledTree shuffled_copy(const LabeledTree& t, std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ kShuffleStream));
  LabeledTree out = t;
  std::vector<std::uint32_t> perm;
  for (NodeId u = 0; u < out.size(); ++u) {
    std::uint32_t deg = out.degree(u);
    if (deg < 2) continue;
    perm.resize(deg);
    for (std::uint32_t i = 0; i < deg; ++i) perm[i] = i;
    for (std::uint32_t i = deg - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.below(i + 1)]);
    out.reorder_children(u, perm);
  }
  return out;
}

LabeledTree perturb_one_label(const LabeledTree& t, std::uint64_t seed) {
  std::vector<LabelId> used = t.alphabet();
  if (used.size() < 2)
    throw std::invalid_argument(
        "perturb_one_label: tree carries a single label, nothing to swap in");
  Rng rng(splitmix64(seed ^ kPerturbStream));
  NodeId u = static_cast<NodeId>(rng.below(t.size()));
  std::vector<LabelId> others;
  for (LabelId id : used)
    if (id != t.label(u)) others.push_back(id);
  LabelId pick = others[rng.below(others.size())];
  LabeledTree out = t;
  out.relabel(u, t.symbol(pick));
  return out;
}

const char* to_string(Scenario s) {
  return s == Scenario::Similar ? "similar" : "perturbed";
}

std::pair<LabeledTree, LabeledTree> scenario_pair(const GenConfig& cfg,
                                                  Scenario scenario) {
  LabeledTree t1 = random_labeled_tree(cfg);
  LabeledTree t2 = shuffled_copy(t1, cfg.seed);
  if (scenario == Scenario::Perturbed) t2 = perturb_one_label(t2, cfg.seed);
  return {std::move(t1), std::move(t2)};
}

}  // namespace treecipher
