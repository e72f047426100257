#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "defnet/errors.hpp"
#include "defnet/roadmap.hpp"
#include "fixtures.hpp"

using namespace defnet;

namespace {

LatentVector at(double x, double y = 0.0) {
  LatentVector z(2);
  z << x, y;
  return z;
}

FoldAction tag(double k) { return {{k, 0.0}, {k, 1.0}}; }

struct Synthetic {
  EncodedDataset enc;
  std::vector<BankEntry> bank;

  void add(const LatentVector& z0, const LatentVector& z1, int a, FoldAction u = {}) {
    enc.tuples.push_back({z0, z1, a, u, enc.tuples.size()});
    const ClothState s = new_flat_cloth(2, 2, 0.01);
    bank.push_back({z0, s});
    bank.push_back({z1, s});
  }

  Roadmap build(double eps = 1.0) const { return build_lsr(enc, bank, eps); }
};

// a(0) -> b(1) -> c(2) and a -> d(3) -> c, laid out far apart.
Synthetic square() {
  Synthetic s;
  s.add(at(0), at(100), 1, tag(1));
  s.add(at(100), at(200), 1, tag(2));
  s.add(at(0), at(0, 100), 1, tag(3));
  s.add(at(0, 100), at(200), 1, tag(4));
  return s;
}

std::vector<std::vector<int>> floyd_warshall(const Roadmap& rm) {
  const int n = static_cast<int>(rm.nodes.size());
  constexpr int inf = 1 << 20;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (int i = 0; i < n; ++i) d[i][i] = 0;
  for (const auto& e : rm.edges) {
    for (const auto& w : e.actions) d[w.from][w.to] = std::min(d[w.from][w.to], 1);
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
    }
  }
  return d;
}

// Every path from s to g with exactly `len` hops, by exhaustive search.
std::set<std::vector<int>> brute_paths(const Roadmap& rm, int s, int g, int len) {
  std::set<std::vector<int>> out;
  const auto succ = rm.successors();
  std::vector<int> path{s};
  std::function<void()> walk = [&] {
    if (static_cast<int>(path.size()) == len + 1) {
      if (path.back() == g) out.insert(path);
      return;
    }
    for (int v : succ[static_cast<std::size_t>(path.back())]) {
      path.push_back(v);
      walk();
      path.pop_back();
    }
  };
  walk();
  return out;
}

int node_of_state(const Artifacts& art, const ClothState& s) {
  return map_to_node(art.roadmap, encode(art.model, render(s))).node;
}

}  // namespace

TEST_CASE("epsilon tuning formula") {
  Synthetic s;
  s.add(at(0), at(0), 0);
  s.add(at(5), at(5), 0);
  s.add(at(0), at(10), 1);
  s.add(at(0), at(30), 1);
  CHECK(tune_epsilon(s.enc) == doctest::Approx(5.0));

  Synthetic t;
  t.add(at(0), at(0.5), 0);
  t.add(at(0), at(1.0), 0);
  t.add(at(0), at(3.0), 0);
  t.add(at(0), at(100), 1);
  CHECK(tune_epsilon(t.enc) == doctest::Approx(2.0));
  CHECK(tune_epsilon(t.enc, 10.0) == doctest::Approx(10.0));

  Synthetic only_actions;
  only_actions.add(at(0), at(1), 1);
  CHECK_THROWS_AS(tune_epsilon(only_actions.enc), InsufficientPairs);
  Synthetic only_rest;
  only_rest.add(at(0), at(1), 0);
  CHECK_THROWS_AS(tune_epsilon(only_rest.enc), InsufficientPairs);
}

TEST_CASE("clustering small examples") {
  Synthetic one;
  for (int i = 0; i < 5; ++i) one.add(at(1), at(1), 0);
  const Roadmap r1 = one.build();
  CHECK(r1.nodes.size() == 1);
  CHECK(r1.edges.empty());
  CHECK(r1.nodes[0].members.size() == 10);

  Synthetic two;
  two.add(at(0), at(50), 1, tag(7));
  const Roadmap r2 = two.build();
  REQUIRE(r2.nodes.size() == 2);
  REQUIRE(r2.edges.size() == 1);
  REQUIRE(r2.edges[0].actions.size() == 1);
  CHECK(r2.edges[0].actions[0].u == tag(7));
  CHECK(r2.edges[0].actions[0].from == 0);
  CHECK(r2.edges[0].actions[0].to == 1);

  CHECK_THROWS_AS(two.build(60.0), EpsilonTooLarge);
  CHECK_THROWS_AS(two.build(0.0), EpsilonTooLarge);
  CHECK_THROWS_AS(build_lsr(two.enc, std::span(two.bank).first(1), 1.0), ShapeMismatch);
}

TEST_CASE("no-action pairs merge regardless of distance") {
  Synthetic s;
  s.add(at(0), at(40), 0);
  s.add(at(40), at(80), 1);
  const Roadmap rm = s.build(1.0);
  CHECK(rm.nodes.size() == 2);
  CHECK(rm.node_of[0] == rm.node_of[1]);
  CHECK(rm.nodes[0].centroid.isApprox(at(80.0 / 3.0)));
}

TEST_CASE("corpus roadmap matches the ground-truth transition graph") {
  CorpusOptions opt;
  opt.n_variants = 1;
  opt.perturbs_per_state = 2;
  const Dataset d = build_corpus(opt);
  const EncoderModel m = fit_encoder(d, EncoderVariant::FittedPca);
  const EncodedDataset enc = encode_dataset(m, d);
  const auto bank = make_bank(d, enc);
  const Roadmap rm = build_lsr(enc, bank, tune_epsilon(enc));

  std::vector<int> state_of(bank.size());
  for (std::size_t t = 0; t < d.tuples.size(); ++t) {
    state_of[2 * t] = d.tuples[t].state_id0;
    state_of[2 * t + 1] = d.tuples[t].state_id1;
  }
  const TransitionGraph g = transition_graph(d);
  CHECK(rm.nodes.size() == static_cast<std::size_t>(g.num_states));
  for (std::size_t i = 0; i < bank.size(); ++i) {
    for (std::size_t j = 0; j < bank.size(); ++j) {
      CHECK((rm.node_of[i] == rm.node_of[j]) == (state_of[i] == state_of[j]));
    }
  }

  std::map<int, int> node_for_state;
  for (std::size_t i = 0; i < bank.size(); ++i) node_for_state[state_of[i]] = rm.node_of[i];
  std::set<std::pair<int, int>> mapped;
  for (const auto& [u, v] : g.edges) mapped.insert({node_for_state[u], node_for_state[v]});
  std::set<std::pair<int, int>> witnessed;
  for (const auto& e : rm.edges) {
    for (const auto& w : e.actions) witnessed.insert({w.from, w.to});
  }
  CHECK(witnessed == mapped);
}

TEST_CASE("default corpus has one node per distinct scripted state") {
  const auto& art = fixtures::default_artifacts();
  std::set<int> ids;
  for (const auto& t : art.dataset.tuples) {
    ids.insert(t.state_id0);
    ids.insert(t.state_id1);
  }
  CHECK(art.roadmap.nodes.size() == ids.size());
}

TEST_CASE("node lookup") {
  const auto& rm = fixtures::default_artifacts().roadmap;
  for (const auto& node : rm.nodes) {
    const NodeMatch m = map_to_node(rm, node.centroid);
    CHECK(m.node == node.id);
    CHECK(m.covered);
  }
  LatentVector far = rm.nodes[0].centroid;
  far[0] += 1e3 * rm.epsilon;
  CHECK_FALSE(map_to_node(rm, far).covered);

  Synthetic s;
  s.add(at(-10), at(10), 1);
  const Roadmap two = s.build();
  CHECK(map_to_node(two, at(0)).node == 0);
  CHECK(map_to_node(two, at(0.001)).node == 1);
  CHECK(map_to_node(two, at(0)).distance == doctest::Approx(10.0));
  CHECK_THROWS_AS(map_to_node(Roadmap{}, at(0)), NoPath);
}

TEST_CASE("freshly perturbed known states map to their source node") {
  const auto& art = fixtures::default_artifacts();
  const TransitionGraph g = transition_graph(art.dataset);
  int wrong_node = 0;
  int uncovered = 0;
  for (int id = 0; id < g.num_states; ++id) {
    const ClothState& s = g.states[static_cast<std::size_t>(id)];
    const int source = node_of_state(art, s);
    const TransitionTuple t = make_no_action_pair(s, art.dataset.perturb_scale_m,
                                                  0xfeed + static_cast<std::uint64_t>(id));
    const NodeMatch m = map_to_node(art.roadmap, encode(art.model, t.obs1));
    wrong_node += m.node != source;
    uncovered += !m.covered;
  }
  CHECK(wrong_node == 0);
  CHECK(uncovered == 0);
}

TEST_CASE("all shortest paths on small graphs") {
  const Roadmap rm = square().build();
  CHECK(all_shortest_paths(rm, 2, 2) == std::vector<std::vector<int>>{{2}});
  const auto paths = all_shortest_paths(rm, 0, 2);
  CHECK(paths == std::vector<std::vector<int>>{{0, 1, 2}, {0, 3, 2}});
  CHECK(all_shortest_paths(rm, 0, 2, 1).size() == 1);
  CHECK_THROWS_AS(all_shortest_paths(rm, 0, 9), NoPath);
}

TEST_CASE("traversal follows witnessed directions only") {
  const Roadmap rm = square().build();
  REQUIRE(rm.find_edge(0, 1) != nullptr);
  CHECK(rm.find_edge(1, 0) == rm.find_edge(0, 1));
  CHECK_THROWS_AS(all_shortest_paths(rm, 2, 0), NoPath);
  CHECK_THROWS_AS(all_shortest_paths(rm, 1, 3), NoPath);

  // Witnessing the reverse fold opens the way back.
  Synthetic s = square();
  s.add(at(200), at(100), 1, tag(9));
  const Roadmap both = s.build();
  CHECK(all_shortest_paths(both, 2, 1) == std::vector<std::vector<int>>{{2, 1}});
  CHECK(both.edges.size() == rm.edges.size());
}

TEST_CASE("path lengths equal Floyd-Warshall distances") {
  const Roadmap& rm = fixtures::default_artifacts().roadmap;
  const auto dist = floyd_warshall(rm);
  const int n = static_cast<int>(rm.nodes.size());
  for (int s = 0; s < n; ++s) {
    for (int g = 0; g < n; ++g) {
      if (dist[s][g] >= (1 << 20)) {
        CHECK_THROWS_AS(all_shortest_paths(rm, s, g), NoPath);
        continue;
      }
      for (const auto& p : all_shortest_paths(rm, s, g)) {
        CHECK(static_cast<int>(p.size()) - 1 == dist[s][g]);
        CHECK(p.front() == s);
        CHECK(p.back() == g);
        for (std::size_t i = 0; i + 1 < p.size(); ++i) {
          CHECK(rm.find_edge(p[i], p[i + 1]) != nullptr);
        }
      }
    }
  }
}

TEST_CASE("flat to tier-2 paths match exhaustive enumeration") {
  const auto& art = fixtures::default_artifacts();
  const int flat = node_of_state(art, new_flat_cloth(art.dataset.cloth));
  for (std::uint64_t s = 0; s < kScriptsPerTier; ++s) {
    const int goal = node_of_state(art, fixtures::goal_state(2, s));
    const auto paths = all_shortest_paths(art.roadmap, flat, goal);
    for (const auto& p : paths) CHECK(p.size() == 3);
    const std::set<std::vector<int>> got(paths.begin(), paths.end());
    CHECK(got == brute_paths(art.roadmap, flat, goal, 2));
    CHECK(std::is_sorted(paths.begin(), paths.end()));
  }
}

TEST_CASE("building is idempotent") {
  const auto& art = fixtures::default_artifacts();
  const Roadmap again = build_lsr(art.encoded, art.bank, art.roadmap.epsilon);
  CHECK(again.node_of == art.roadmap.node_of);
  REQUIRE(again.edges.size() == art.roadmap.edges.size());
  for (std::size_t i = 0; i < again.edges.size(); ++i) {
    CHECK(again.edges[i].a == art.roadmap.edges[i].a);
    CHECK(again.edges[i].b == art.roadmap.edges[i].b);
    CHECK(again.edges[i].actions.size() == art.roadmap.edges[i].actions.size());
  }
}

TEST_CASE("node count is non-increasing in epsilon") {
  const auto& art = fixtures::default_artifacts();
  std::size_t previous = art.bank.size() + 1;
  for (int k = 1; k <= 20; ++k) {
    const double eps = art.roadmap.epsilon * k / 20.0;
    const std::size_t count = build_lsr(art.encoded, art.bank, eps).nodes.size();
    CHECK(count <= previous);
    previous = count;
  }
}

TEST_CASE("seeded path choice") {
  const Roadmap rm = square().build();
  const Plan a = plan_between(rm, at(0), at(200), 17);
  const Plan b = plan_between(rm, at(0), at(200), 17);
  CHECK(a.nodes == b.nodes);
  CHECK(a.candidates == 2);
  int first = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    first += plan_between(rm, at(0), at(200), seed).nodes[1] == 1;
  }
  CHECK(first / 1000.0 == doctest::Approx(0.5).epsilon(0.1));
  for (std::size_t count = 1; count < 6; ++count) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) CHECK(seeded_choice(count, seed) < count);
  }
  CHECK(seeded_choice(0, 3) == 0);
}

TEST_CASE("plans from the flat cloth") {
  const auto& art = fixtures::default_artifacts();
  const Observation flat = render(new_flat_cloth(art.dataset.cloth));
  CHECK(plan(art.roadmap, art.model, flat, flat, 0).length() == 0);
  for (int tier = 1; tier <= 4; ++tier) {
    for (std::uint64_t s = 0; s < kScriptsPerTier; ++s) {
      const Observation goal = render(fixtures::goal_state(tier, s));
      const Plan p = plan(art.roadmap, art.model, flat, goal, s);
      CHECK(p.length() == static_cast<std::size_t>(tier));
      CHECK(p.interior.size() == static_cast<std::size_t>(tier - 1));
      CHECK(p.start_covered);
      CHECK(p.goal_covered);
      for (std::size_t i = 0; i < p.interior.size(); ++i) {
        CHECK(p.interior[i] == art.roadmap.nodes[static_cast<std::size_t>(p.nodes[i + 1])]
                                   .representative_state);
      }
    }
  }
}

TEST_CASE("roadmap files round trip") {
  fixtures::TempDir dir;
  const auto& art = fixtures::default_artifacts();
  const RoadmapFileRefs refs{"data.jsonl", "model.json"};
  save_roadmap(art.roadmap, refs, dir.file("out/roadmap.json"));
  const RoadmapFileRefs back_refs = read_roadmap_refs(dir.file("out/roadmap.json"));
  CHECK(back_refs.dataset_path == refs.dataset_path);
  CHECK(back_refs.model_path == refs.model_path);

  const Roadmap back = load_roadmap(dir.file("out/roadmap.json"), art.bank);
  CHECK(back.epsilon == art.roadmap.epsilon);
  CHECK(back.node_of == art.roadmap.node_of);
  REQUIRE(back.nodes.size() == art.roadmap.nodes.size());
  for (std::size_t i = 0; i < back.nodes.size(); ++i) {
    CHECK(back.nodes[i].centroid == art.roadmap.nodes[i].centroid);
    CHECK(back.nodes[i].representative_state == art.roadmap.nodes[i].representative_state);
  }
  CHECK(serialize_roadmap(back, refs) == serialize_roadmap(art.roadmap, refs));

  std::string text = serialize_roadmap(art.roadmap, refs);
  text.replace(text.find("\"version\""), 11, "\"version\":4");
  CHECK_THROWS_AS(parse_roadmap(text, art.bank), FormatError);
  CHECK_THROWS_AS(parse_roadmap(serialize_roadmap(art.roadmap, refs),
                                std::span(art.bank).first(4)),
                  FormatError);
  CHECK_THROWS_AS(load_roadmap(dir.file("none.json"), art.bank), ArtifactMissing);
}

TEST_CASE("dot export lists nodes and witnessed directions") {
  const Roadmap rm = square().build();
  const std::string dot = to_dot(rm);
  CHECK(dot.rfind("digraph", 0) == 0);
  CHECK(dot.find("n0 -> n1;") != std::string::npos);
  CHECK(dot.find("n1 -> n0;") == std::string::npos);
  CHECK(std::count(dot.begin(), dot.end(), '>') == 4);
}
