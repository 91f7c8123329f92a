#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "mvhet/views.hpp"

using namespace mvhet;
using mvtest::make_toy_graph;

TEST_CASE("APA-style metapath validates with length 2") {
  mvtest::ToyGraph toy = make_toy_graph();
  Metapath p = validate_metapath(toy.g, "APA", {"author", "paper", "author"},
                                 {"write", "written_by"});
  REQUIRE(p.length() == 2);
  REQUIRE(p.target_type() == toy.author);
}

TEST_CASE("five-type chains validate like APCPA") {
  GraphBuilder b;
  NodeTypeId a = b.add_node_type("A", 2, 1);
  NodeTypeId p = b.add_node_type("P", 2, 1);
  NodeTypeId c = b.add_node_type("C", 2, 1);
  b.add_relation("ap", a, p, "pa");
  b.add_relation("pc", p, c, "cp");
  b.set_features(a, Mat(2, 1));
  b.set_features(p, Mat(2, 1));
  b.set_features(c, Mat(2, 1));
  HeteroGraph g = b.build();
  Metapath path = validate_metapath(g, "APCPA", {"A", "P", "C", "P", "A"},
                                    {"ap", "pc", "cp", "pa"});
  REQUIRE(path.length() == 4);
}

TEST_CASE("type chain break reports the failing hop") {
  mvtest::ToyGraph toy = make_toy_graph();
  try {
    // second hop misuses write (author->paper) from a paper
    validate_metapath(toy.g, "bad", {"author", "paper", "author"}, {"write", "write"});
    FAIL("expected TypeChainBroken");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::TypeChainBroken);
    REQUIRE(e.level() == 2);
  }
}

TEST_CASE("metapath text chains parse") {
  mvtest::ToyGraph toy = make_toy_graph();
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  REQUIRE(p.length() == 2);
  REQUIRE_THROWS_AS(parse_metapath(toy.g, "x", "author -write-> paper -nope-> author"), Error);
  REQUIRE_THROWS_AS(parse_metapath(toy.g, "x", "author -write->"), Error);
}

TEST_CASE("compiled plans carry one level per hop with in-degree norms") {
  mvtest::ToyGraph toy = make_toy_graph();
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  ViewPlan plan = compile_view(toy.g, p);
  REQUIRE(plan.depth == 2);
  REQUIRE(plan.levels.size() == 2);
  REQUIRE(plan.levels[0].relation == toy.write);
  REQUIRE(plan.levels[0].level_type == toy.paper);
  REQUIRE(plan.levels[0].gather.rows() == 2);  // papers gather from authors
  REQUIRE(plan.levels[1].relation == toy.written_by);
  REQUIRE(plan.levels[1].gather.rows() == 3);
}

TEST_CASE("single-hop metapaths compile to one level") {
  GraphBuilder b;
  NodeTypeId u = b.add_node_type("U", 4, 1);
  auto [uu, uu_rev] = b.add_relation("uu", u, u, "uu_rev");
  (void)uu_rev;
  b.add_edges(uu, {{0, 1}, {1, 2}});
  b.set_features(u, Mat(4, 1));
  HeteroGraph g = b.build();
  ViewPlan plan = compile_view(g, parse_metapath(g, "UU", "U -uu-> U"));
  REQUIRE(plan.depth == 1);
  REQUIRE(plan.levels.size() == 1);
}

TEST_CASE("recompilation yields an identical plan") {
  mvtest::ToyGraph toy = make_toy_graph();
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  REQUIRE(compile_view(toy.g, p) == compile_view(toy.g, p));
}

TEST_CASE("level typing: every level index is in range for its type") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    mvtest::RandomGraph rg = mvtest::make_random_graph(seed);
    for (const Metapath& p : rg.paths) {
      const int target_count = rg.g.type(p.target_type()).count;
      for (int v = 0; v < target_count; ++v) {
        EgoGraph ego = extract_ego_oracle(rg.g, p, v);
        for (std::size_t l = 0; l < ego.level_nodes.size(); ++l)
          for (int node : ego.level_nodes[l]) {
            REQUIRE(node >= 0);
            REQUIRE(node < rg.g.type(p.node_types[l]).count);
          }
      }
    }
  }
}

TEST_CASE("ego graph of the toy APA view matches the edge lists") {
  mvtest::ToyGraph toy = make_toy_graph();
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  EgoGraph ego = extract_ego_oracle(toy.g, p, 0);
  // author 0 wrote papers 0 and 1; their authors are 0,1 (paper 0) and 0,2 (paper 1)
  REQUIRE(ego.level_nodes[2] == std::vector<int>{0});
  REQUIRE(ego.level_nodes[1] == std::vector<int>{0, 1});
  REQUIRE(ego.level_nodes[0] == std::vector<int>{0, 1, 2});
}

TEST_CASE("isolated target yields a singleton ego graph") {
  GraphBuilder b;
  NodeTypeId a = b.add_node_type("a", 2, 1);
  NodeTypeId p = b.add_node_type("p", 2, 1);
  auto [w, wb] = b.add_relation("w", a, p, "wb");
  (void)wb;
  b.add_edges(w, {{1, 1}});
  b.set_features(a, Mat(2, 1));
  b.set_features(p, Mat(2, 1));
  HeteroGraph g = b.build();
  Metapath path = parse_metapath(g, "APA", "a -w-> p -wb-> a");
  for (EgoSemantics sem : {EgoSemantics::Relaxed, EgoSemantics::Strict}) {
    EgoGraph ego = extract_ego_oracle(g, path, 0, sem);
    REQUIRE(ego.level_nodes[2] == std::vector<int>{0});
    REQUIRE(ego.level_nodes[1].empty());
    REQUIRE(ego.level_nodes[0].empty());
  }
}

TEST_CASE("strict equals relaxed when every prefix extends") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    mvtest::RandomGraph rg = mvtest::make_random_graph(seed);
    for (const Metapath& p : rg.paths) {
      const int target_count = rg.g.type(p.target_type()).count;
      for (int v = 0; v < target_count; ++v) {
        EgoGraph relaxed = extract_ego_oracle(rg.g, p, v, EgoSemantics::Relaxed);
        // check whether every node above level 0 has a child
        bool extendable = true;
        for (std::size_t l = 1; l < relaxed.level_nodes.size() && extendable; ++l)
          for (int node : relaxed.level_nodes[l]) {
            bool has_child = false;
            for (const auto& [up, down] : relaxed.level_edges[l]) {
              (void)down;
              has_child = has_child || up == node;
            }
            if (!has_child && !(l == relaxed.level_nodes.size() - 1 && node == v)) {
              extendable = false;
              break;
            }
          }
        EgoGraph strict = extract_ego_oracle(rg.g, p, v, EgoSemantics::Strict);
        if (extendable) {
          REQUIRE(strict.level_nodes == relaxed.level_nodes);
          REQUIRE(strict.level_edges == relaxed.level_edges);
        } else {
          // strict is always a subset of relaxed
          for (std::size_t l = 0; l < strict.level_nodes.size(); ++l)
            for (int node : strict.level_nodes[l])
              REQUIRE(std::find(relaxed.level_nodes[l].begin(), relaxed.level_nodes[l].end(),
                                node) != relaxed.level_nodes[l].end());
        }
      }
    }
  }
}

TEST_CASE("strict keeps only nodes on complete instances") {
  // a -> p chain where author 1 reaches a paper with no other author;
  // build a 3-level path where one mid-level node dangles
  GraphBuilder b;
  NodeTypeId t0 = b.add_node_type("x", 3, 1);
  NodeTypeId t1 = b.add_node_type("y", 3, 1);
  NodeTypeId t2 = b.add_node_type("z", 1, 1);
  auto [r01, r10] = b.add_relation("xy", t0, t1, "yx");
  auto [r12, r21] = b.add_relation("yz", t1, t2, "zy");
  (void)r10, (void)r21;
  // y0 has an x parent, y1 does not; both connect to z0
  b.add_edges(r01, {{0, 0}});
  b.add_edges(r12, {{0, 0}, {1, 0}});
  b.set_features(t0, Mat(3, 1));
  b.set_features(t1, Mat(3, 1));
  b.set_features(t2, Mat(1, 1));
  HeteroGraph g = b.build();
  Metapath path = parse_metapath(g, "XYZ", "x -xy-> y -yz-> z");
  EgoGraph relaxed = extract_ego_oracle(g, path, 0, EgoSemantics::Relaxed);
  EgoGraph strict = extract_ego_oracle(g, path, 0, EgoSemantics::Strict);
  REQUIRE(relaxed.level_nodes[1] == std::vector<int>{0, 1});
  REQUIRE(strict.level_nodes[1] == std::vector<int>{0});  // y1 dangles
  REQUIRE(strict.level_nodes[0] == std::vector<int>{0});
}

TEST_CASE("target type mismatch is rejected") {
  mvtest::ToyGraph toy = make_toy_graph();
  Metapath p = parse_metapath(toy.g, "APA", "author -write-> paper -written_by-> author");
  REQUIRE_THROWS_AS(extract_ego_oracle(toy.g, p, 99), Error);
}
