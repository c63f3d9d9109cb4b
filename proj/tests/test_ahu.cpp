#include <set>

#include "doctest.h"
#include "treecipher/ahu.hpp"
#include "treecipher/oracle.hpp"
#include "treecipher/randgen.hpp"
#include "treecipher/tree.hpp"

using namespace treecipher;

namespace {
// The shape of the swap-count illustration: a root with two two-leaf
// internal children and one leaf child.
const char* kBoxedShape = "r(i(l,l),i(l,l),l)";
const char* kFig9Left = "B(A(A,B),A(C,C),C)";
const char* kFig9Right = "β(α(α,β),α(γ,γ),γ)";
}  // namespace

TEST_CASE("color: single-node tree gets the leaf color") {
  LabeledTree a = parse("A"), b = parse("Z");
  Coloring c = color_trees({&a, &b});
  CHECK(c.color(0, 0) == c.color(1, 0));
  CHECK(c.color_count() == 1);
}

TEST_CASE("color: boxed-shape tree has exactly three classes") {
  LabeledTree t = parse(kBoxedShape);
  Coloring c = color_trees({&t});
  std::set<ColorId> distinct;
  for (NodeId u = 0; u < t.size(); ++u) distinct.insert(c.color(0, u));
  CHECK(distinct.size() == 3);
  // the two internal nodes share a class; all leaves share a class
  CHECK(c.color(0, 1) == c.color(0, 4));
  CHECK(c.color(0, 2) == c.color(0, 7));
  CHECK(c.color(0, 2) != c.color(0, 1));
  CHECK(c.color(0, 0) != c.color(0, 1));
}

TEST_CASE("color: labels are ignored, only topology counts") {
  LabeledTree t1 = parse(kFig9Left), t2 = parse(kFig9Right);
  Coloring c = color_trees({&t1, &t2});
  CHECK(c.root_color(0) == c.root_color(1));
}

TEST_CASE("topologically_isomorphic") {
  LabeledTree t = parse(kFig9Left);
  CHECK(topologically_isomorphic(t, t));
  CHECK(topologically_isomorphic(parse(kFig9Left), parse(kFig9Right)));
  CHECK_FALSE(topologically_isomorphic(parse("A(B)"), parse("A")));
  CHECK_FALSE(topologically_isomorphic(parse("A(B,C)"), parse("A(B(C))")));
}

TEST_CASE("coloring is invariant under children storage order") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    LabeledTree t = random_labeled_tree({25, 3, seed});
    LabeledTree s = shuffled_copy(t, seed + 99);
    Coloring c = color_trees({&t, &s});
    for (NodeId u = 0; u < t.size(); ++u)
      CHECK(c.color(0, u) == c.color(1, u));  // shuffling keeps node ids
  }
}

TEST_CASE("n_equiv: golden values") {
  CHECK(n_equiv(parse("A(A(A(A)))")).exact == 1);
  CHECK(n_equiv(parse(kBoxedShape)).exact == 8);
  CHECK(n_equiv(parse(kFig9Left)).exact == 8);
  CHECK(n_equiv(parse(kFig9Right)).exact == 8);
  CHECK(n_equiv(parse("A")).exact == 1);
}

TEST_CASE("n_equiv: star with k leaves is k!") {
  std::string text = "R";
  for (std::uint32_t k = 1; k <= 6; ++k) {
    text = "R(";
    for (std::uint32_t i = 0; i < k; ++i)
      text += i ? ",x" : "x";
    text += ")";
    LabeledTree star = parse(text);
    NEquiv ne = n_equiv(star);
    CHECK(ne.exact == factorial(k));
    // independent route: enumerate Isom(star, star)
    Coloring c = color_trees({&star, &star});
    CHECK(enumerate_all_isomorphisms(star, star, c).size() == factorial(k));
    CHECK(ne.log10 == doctest::Approx(log10_factorial(k)).epsilon(1e-12));
  }
}

TEST_CASE("n_equiv: exact equals brute-force witness count on small trees") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    GenConfig cfg{2 + static_cast<std::uint32_t>(seed % 6), 1, seed};
    LabeledTree t = random_recursive_tree(cfg);
    LabeledTree s = shuffled_copy(t, seed * 3 + 1);
    Coloring c = color_trees({&t, &s});
    CHECK(n_equiv(t, c).exact ==
          BigInt(enumerate_all_isomorphisms(t, s, c).size()));
  }
}

TEST_CASE("children_signature") {
  LabeledTree t = parse(kFig9Left);
  Coloring c = color_trees({&t});
  CHECK(children_signature(t, 7, c).empty());  // leaf
  // both depth-1 internal A-nodes carry the same two-leaf signature
  Signature s1 = children_signature(t, 1, c);
  Signature s4 = children_signature(t, 4, c);
  CHECK(s1 == s4);
  CHECK(s1.size() == 2);
  CHECK(s1[0] == s1[1]);
  // the root signature holds one leaf color and two internal colors
  Signature sr = children_signature(t, 0, c);
  REQUIRE(sr.size() == 3);
  CHECK(std::count(sr.begin(), sr.end(), c.color(0, 1)) == 2);
  CHECK(std::count(sr.begin(), sr.end(), c.color(0, 7)) == 1);
  CHECK(std::is_sorted(sr.begin(), sr.end()));
}

TEST_CASE("cross-tree comparability after relabeling") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LabeledTree t = random_labeled_tree({20, 4, seed});
    LabeledTree s = shuffled_copy(assign_labels(t, {20, 2, seed + 1}), seed);
    Coloring c = color_trees({&t, &s});
    CHECK(c.root_color(0) == c.root_color(1));
  }
}
