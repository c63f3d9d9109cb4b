#include <algorithm>
#include <set>
#include <string>

#include "doctest.h"
#include "treecipher/randgen.hpp"
#include "treecipher/tree.hpp"

using namespace treecipher;

namespace {
const char* kFig9Left = "B(A(A,B),A(C,C),C)";
const char* kFig9Right = "β(α(α,β),α(γ,γ),γ)";
}  // namespace

TEST_CASE("parse: single node") {
  LabeledTree t = parse("A");
  CHECK(t.size() == 1);
  CHECK(t.label_text(t.root()) == "A");
  CHECK(t.degree(t.root()) == 0);
}

TEST_CASE("parse: the worked-example tree") {
  LabeledTree t = parse(kFig9Left);
  REQUIRE(t.size() == 8);
  CHECK(t.label_text(0) == "B");
  REQUIRE(t.degree(0) == 3);
  NodeId c0 = t.children(0)[0], c1 = t.children(0)[1], c2 = t.children(0)[2];
  CHECK(t.label_text(c0) == "A");
  CHECK(t.label_text(c1) == "A");
  CHECK(t.label_text(c2) == "C");
  CHECK(t.degree(c0) == 2);
  CHECK(t.label_text(t.children(c0)[0]) == "A");
  CHECK(t.label_text(t.children(c0)[1]) == "B");
  CHECK(t.degree(c1) == 2);
  CHECK(t.label_text(t.children(c1)[0]) == "C");
  CHECK(t.label_text(t.children(c1)[1]) == "C");
  CHECK(t.degree(c2) == 0);
}

TEST_CASE("parse: whitespace between tokens is ignored") {
  CHECK(parse(" B ( A ( A , B ) , A ( C , C ) , C ) ") == parse(kFig9Left));
}

TEST_CASE("parse: errors carry byte offsets") {
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("   "), ParseError);
  try {
    parse("A(");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 2);
  }
  try {
    parse("(A)");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 0);
  }
  CHECK_THROWS_AS(parse("A(B,)"), ParseError);
  CHECK_THROWS_AS(parse("A)"), ParseError);
  CHECK_THROWS_AS(parse("A,B"), ParseError);
  CHECK_THROWS_AS(parse("A(B))"), ParseError);
  CHECK_THROWS_AS(parse("A(B"), ParseError);
}

TEST_CASE("serialize: inverse of parse") {
  CHECK(serialize(parse("A")) == "A");
  CHECK(serialize(parse(kFig9Left)) == kFig9Left);
  CHECK(serialize(parse(kFig9Right)) == kFig9Right);
  // storage order is preserved verbatim
  CHECK(serialize(parse("A(C,B)")) == "A(C,B)");
}

TEST_CASE("parse/serialize round-trip on random trees") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    GenConfig cfg{1 + static_cast<std::uint32_t>(seed % 40),
                  1 + static_cast<std::uint32_t>(seed % 5), seed};
    LabeledTree t = random_labeled_tree(cfg);
    CHECK(parse(serialize(t)) == t);
  }
}

TEST_CASE("depth accessor") {
  LabeledTree t = parse(kFig9Left);
  CHECK(t.depth(t.root()) == 0);
  CHECK(t.depth(7) == 1);  // the depth-1 leaf labeled C
  CHECK(t.depth(2) == 2);
  CHECK(t.depth(3) == 2);
  CHECK(t.depth() == 2);
  for (NodeId u = 1; u < t.size(); ++u)
    CHECK(t.depth(u) == t.depth(t.parent(u)) + 1);
}

TEST_CASE("accessors: leaves, alphabet, degree") {
  LabeledTree single = parse("A");
  CHECK(single.leaves() == std::vector<NodeId>{0});

  LabeledTree t = parse(kFig9Left);
  std::vector<std::string> alphabet = t.alphabet_text();
  std::set<std::string> alpha(alphabet.begin(), alphabet.end());
  CHECK(alpha == std::set<std::string>{"A", "B", "C"});
  CHECK(t.degree() == 3);
  CHECK(t.leaves().size() == 5);

  std::size_t degree_sum = 0;
  for (NodeId u = 0; u < t.size(); ++u) degree_sum += t.degree(u);
  CHECK(degree_sum == t.size() - 1);
}

TEST_CASE("parent/children consistency") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    LabeledTree t = random_labeled_tree({30, 3, seed});
    for (NodeId u = 0; u < t.size(); ++u) {
      for (NodeId c : t.children(u)) CHECK(t.parent(c) == u);
      if (!t.is_root(u)) {
        auto kids = t.children(t.parent(u));
        CHECK(std::find(kids.begin(), kids.end(), u) != kids.end());
      }
    }
  }
}

TEST_CASE("subtree") {
  LabeledTree t = parse(kFig9Left);
  CHECK(t.subtree(t.root()) == t);
  LabeledTree sub = t.subtree(1);
  CHECK(serialize(sub) == "A(A,B)");
  CHECK(sub.size() == 3);
  CHECK(serialize(t.subtree(7)) == "C");
}

TEST_CASE("reorder_children") {
  LabeledTree t = parse("A(B,C,D)");
  std::vector<std::uint32_t> perm{2, 0, 1};
  t.reorder_children(0, perm);
  CHECK(serialize(t) == "A(D,B,C)");
  std::vector<std::uint32_t> bad{0, 0, 1};
  CHECK_THROWS_AS(t.reorder_children(0, bad), std::invalid_argument);
  std::vector<std::uint32_t> wrong_size{0, 1};
  CHECK_THROWS_AS(t.reorder_children(0, wrong_size), std::invalid_argument);
}

TEST_CASE("relabel") {
  LabeledTree t = parse("A(B)");
  t.relabel(1, "Z");
  CHECK(serialize(t) == "A(Z)");
  CHECK_THROWS_AS(t.relabel(1, ""), std::invalid_argument);
}

TEST_CASE("JSON form round-trips and is accepted everywhere") {
  LabeledTree t = parse(kFig9Left);
  std::string j = serialize_json_tree(t);
  CHECK(parse_json_tree(j) == t);
  CHECK(parse_any(j) == t);
  CHECK(parse_any(kFig9Left) == t);
  CHECK(parse_any("  {\"label\":\"A\",\"children\":[]}").size() == 1);
  CHECK(parse_json_tree("{\"label\":\"A\"}").size() == 1);
  LabeledTree nested =
      parse_json_tree("{\"label\":\"x\",\"children\":[{\"label\":\"y\","
                      "\"children\":[{\"label\":\"z\"}]}]}");
  CHECK(serialize(nested) == "x(y(z))");
  CHECK_THROWS_AS(parse_json_tree("{\"children\":[]}"), ParseError);
  CHECK_THROWS_AS(parse_json_tree("not json"), ParseError);
  CHECK_THROWS_AS(parse_json_tree("{\"label\":\"\"}"), ParseError);
}
