#include "defnet/roadmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

#include <json.hpp>

#include "defnet/errors.hpp"
#include "defnet/io.hpp"

namespace defnet {

using nlohmann::json;

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

std::vector<int> hop_counts(const std::vector<std::vector<int>>& adj, int source) {
  std::vector<int> hops(adj.size(), -1);
  std::queue<int> q;
  hops[static_cast<std::size_t>(source)] = 0;
  q.push(source);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (hops[static_cast<std::size_t>(v)] < 0) {
        hops[static_cast<std::size_t>(v)] = hops[static_cast<std::size_t>(u)] + 1;
        q.push(v);
      }
    }
  }
  return hops;
}

}  // namespace

std::vector<std::vector<int>> Roadmap::successors() const {
  std::vector<std::vector<int>> out(nodes.size());
  for (const auto& e : edges) {
    for (const auto& w : e.actions) out[static_cast<std::size_t>(w.from)].push_back(w.to);
  }
  for (auto& s : out) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  return out;
}

const RoadmapEdge* Roadmap::find_edge(int u, int v) const {
  const int a = std::min(u, v);
  const int b = std::max(u, v);
  for (const auto& e : edges) {
    if (e.a == a && e.b == b) return &e;
  }
  return nullptr;
}

double tune_epsilon(const EncodedDataset& enc, double c) {
  double min_action = std::numeric_limits<double>::infinity();
  bool have_rest = false;
  for (const auto& t : enc.tuples) {
    if (t.a == 1) {
      min_action = std::min(min_action, (t.z0 - t.z1).norm());
    } else {
      have_rest = true;
    }
  }
  if (!have_rest || !std::isfinite(min_action)) {
    throw InsufficientPairs("epsilon tuning needs both action and no-action pairs");
  }
  const double rest = c * median_pair_distance(enc, 0);
  if (rest <= 0.0) return 0.5 * min_action;
  return std::min(rest, 0.5 * min_action);
}

Roadmap build_lsr(const EncodedDataset& enc, std::span<const BankEntry> bank, double epsilon) {
  if (!(epsilon > 0.0)) throw EpsilonTooLarge("epsilon must be positive");
  if (bank.size() != 2 * enc.tuples.size()) {
    throw ShapeMismatch("bank does not match the encoded dataset");
  }
  const std::size_t n = bank.size();
  DisjointSets sets(n);
  const double eps2 = epsilon * epsilon;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if ((bank[i].z - bank[j].z).squaredNorm() <= eps2) sets.unite(i, j);
    }
  }
  for (std::size_t t = 0; t < enc.tuples.size(); ++t) {
    if (enc.tuples[t].a == 0) sets.unite(2 * t, 2 * t + 1);
  }
  for (std::size_t t = 0; t < enc.tuples.size(); ++t) {
    if (enc.tuples[t].a == 1 && sets.find(2 * t) == sets.find(2 * t + 1)) {
      throw EpsilonTooLarge("action tuple " + std::to_string(enc.tuples[t].source) +
                            " collapses into a single node at epsilon " +
                            std::to_string(epsilon));
    }
  }

  Roadmap rm;
  rm.epsilon = epsilon;
  rm.node_of.assign(n, -1);
  std::vector<int> root_node(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = sets.find(i);
    if (root_node[root] < 0) {
      root_node[root] = static_cast<int>(rm.nodes.size());
      RoadmapNode node;
      node.id = root_node[root];
      rm.nodes.push_back(std::move(node));
    }
    rm.node_of[i] = root_node[root];
    rm.nodes[static_cast<std::size_t>(root_node[root])].members.push_back(i);
  }

  for (auto& node : rm.nodes) {
    node.centroid = LatentVector::Zero(bank[node.members.front()].z.size());
    for (std::size_t i : node.members) node.centroid += bank[i].z;
    node.centroid /= static_cast<double>(node.members.size());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i : node.members) {
      const double d = (bank[i].z - node.centroid).squaredNorm();
      if (d < best) {
        best = d;
        node.representative = i;
      }
    }
    node.representative_state = bank[node.representative].state;
  }

  for (std::size_t t = 0; t < enc.tuples.size(); ++t) {
    if (enc.tuples[t].a != 1) continue;
    const int from = rm.node_of[2 * t];
    const int to = rm.node_of[2 * t + 1];
    const int a = std::min(from, to);
    const int b = std::max(from, to);
    auto it = std::find_if(rm.edges.begin(), rm.edges.end(),
                           [a, b](const RoadmapEdge& e) { return e.a == a && e.b == b; });
    if (it == rm.edges.end()) {
      rm.edges.push_back({a, b, {}});
      it = rm.edges.end() - 1;
    }
    it->actions.push_back({from, to, enc.tuples[t].u});
  }
  std::sort(rm.edges.begin(), rm.edges.end(), [](const RoadmapEdge& x, const RoadmapEdge& y) {
    return std::pair(x.a, x.b) < std::pair(y.a, y.b);
  });
  return rm;
}

NodeMatch map_to_node(const Roadmap& rm, const LatentVector& z) {
  if (rm.nodes.empty()) throw NoPath("roadmap has no nodes");
  NodeMatch best{0, false, std::numeric_limits<double>::infinity()};
  for (const auto& node : rm.nodes) {
    const double d = (node.centroid - z).norm();
    if (d < best.distance) best = {node.id, false, d};
  }
  best.covered = best.distance <= rm.epsilon;
  return best;
}

std::vector<std::vector<int>> all_shortest_paths(const Roadmap& rm, int s, int g,
                                                 std::size_t cap) {
  const int n = static_cast<int>(rm.nodes.size());
  if (s < 0 || s >= n || g < 0 || g >= n) throw NoPath("node id out of range");
  if (s == g) return {{s}};

  const auto succ = rm.successors();
  std::vector<std::vector<int>> pred(succ.size());
  for (int u = 0; u < n; ++u) {
    for (int v : succ[static_cast<std::size_t>(u)]) pred[static_cast<std::size_t>(v)].push_back(u);
  }
  const auto from_s = hop_counts(succ, s);
  const auto to_g = hop_counts(pred, g);
  const int total = from_s[static_cast<std::size_t>(g)];
  if (total < 0) {
    throw NoPath("goal node " + std::to_string(g) + " is unreachable from node " +
                 std::to_string(s));
  }

  std::vector<std::vector<int>> paths;
  std::vector<int> current{s};
  // Depth-first over successors in ascending id order keeps the output
  // lexicographic; only nodes lying on some shortest path are entered.
  auto extend = [&](auto&& self, int u) -> void {
    if (paths.size() >= cap) return;
    if (u == g) {
      paths.push_back(current);
      return;
    }
    const int depth = from_s[static_cast<std::size_t>(u)];
    for (int v : succ[static_cast<std::size_t>(u)]) {
      const auto vi = static_cast<std::size_t>(v);
      if (from_s[vi] == depth + 1 && to_g[vi] >= 0 && from_s[vi] + to_g[vi] == total) {
        current.push_back(v);
        self(self, v);
        current.pop_back();
      }
    }
  };
  extend(extend, s);
  return paths;
}

std::size_t seeded_choice(std::size_t count, std::uint64_t seed) {
  if (count <= 1) return 0;
  std::mt19937_64 rng(mix_seed(seed));
  return std::uniform_int_distribution<std::size_t>(0, count - 1)(rng);
}

Plan plan_between(const Roadmap& rm, const LatentVector& z_start, const LatentVector& z_goal,
                  std::uint64_t seed, std::size_t cap) {
  const NodeMatch start = map_to_node(rm, z_start);
  const NodeMatch goal = map_to_node(rm, z_goal);
  const auto paths = all_shortest_paths(rm, start.node, goal.node, cap);
  Plan p;
  p.start_covered = start.covered;
  p.goal_covered = goal.covered;
  p.candidates = paths.size();
  p.nodes = paths[seeded_choice(paths.size(), seed)];
  for (std::size_t i = 1; i + 1 < p.nodes.size(); ++i) {
    p.interior.push_back(rm.nodes[static_cast<std::size_t>(p.nodes[i])].representative_state);
  }
  return p;
}

Plan plan(const Roadmap& rm, const EncoderModel& m, const Observation& obs_start,
          const Observation& obs_goal, std::uint64_t seed, std::size_t cap) {
  return plan_between(rm, encode(m, obs_start), encode(m, obs_goal), seed, cap);
}

// ---- persistence ----------------------------------------------------------

std::string serialize_roadmap(const Roadmap& rm, const RoadmapFileRefs& refs) {
  json nodes = json::array();
  for (const auto& node : rm.nodes) {
    nodes.push_back({{"id", node.id},
                     {"centroid", std::vector<double>(node.centroid.data(),
                                                      node.centroid.data() + node.centroid.size())},
                     {"representative", {{"tuple", node.representative / 2},
                                         {"side", node.representative % 2}}},
                     {"members", node.members}});
  }
  json edges = json::array();
  for (const auto& e : rm.edges) {
    json actions = json::array();
    for (const auto& w : e.actions) {
      actions.push_back({{"from", w.from}, {"to", w.to}, {"u", action_to_json(w.u)}});
    }
    edges.push_back({{"a", e.a}, {"b", e.b}, {"actions", actions}});
  }
  const json j{{"version", kRoadmapVersion}, {"epsilon", rm.epsilon},
               {"dataset", refs.dataset_path}, {"model", refs.model_path},
               {"bank_size", rm.node_of.size()}, {"nodes", nodes}, {"edges", edges}};
  return j.dump(1) + "\n";
}

void save_roadmap(const Roadmap& rm, const RoadmapFileRefs& refs, const std::string& path) {
  write_file_atomic(path, serialize_roadmap(rm, refs));
}

namespace {

json parse_roadmap_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad roadmap file: ") + e.what());
  }
  const int version = j.value("version", -1);
  if (version != kRoadmapVersion) {
    throw FormatError("unsupported roadmap version " + std::to_string(version));
  }
  return j;
}

}  // namespace

RoadmapFileRefs read_roadmap_refs(const std::string& path) {
  const json j = parse_roadmap_json(read_file(path));
  return {j.value("dataset", std::string{}), j.value("model", std::string{})};
}

Roadmap parse_roadmap(const std::string& text, std::span<const BankEntry> bank) {
  const json j = parse_roadmap_json(text);
  try {
    Roadmap rm;
    rm.epsilon = j.at("epsilon").get<double>();
    const auto bank_size = j.at("bank_size").get<std::size_t>();
    if (bank_size != bank.size()) {
      throw FormatError("roadmap was built on " + std::to_string(bank_size) +
                        " covered states, dataset provides " + std::to_string(bank.size()));
    }
    rm.node_of.assign(bank_size, -1);
    for (const auto& jn : j.at("nodes")) {
      RoadmapNode node;
      node.id = jn.at("id").get<int>();
      const auto c = jn.at("centroid").get<std::vector<double>>();
      node.centroid = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
      node.representative = 2 * jn.at("representative").at("tuple").get<std::size_t>() +
                            jn.at("representative").at("side").get<std::size_t>();
      node.members = jn.at("members").get<std::vector<std::size_t>>();
      if (node.representative >= bank.size()) throw FormatError("representative out of range");
      node.representative_state = bank[node.representative].state;
      for (std::size_t i : node.members) {
        if (i >= bank_size) throw FormatError("member index out of range");
        rm.node_of[i] = node.id;
      }
      if (node.id != static_cast<int>(rm.nodes.size())) throw FormatError("node ids not dense");
      rm.nodes.push_back(std::move(node));
    }
    for (const auto& je : j.at("edges")) {
      RoadmapEdge e{je.at("a").get<int>(), je.at("b").get<int>(), {}};
      for (const auto& ja : je.at("actions")) {
        e.actions.push_back(
            {ja.at("from").get<int>(), ja.at("to").get<int>(), action_from_json(ja.at("u"))});
      }
      rm.edges.push_back(std::move(e));
    }
    return rm;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad roadmap file: ") + e.what());
  }
}

Roadmap load_roadmap(const std::string& path, std::span<const BankEntry> bank) {
  return parse_roadmap(read_file(path), bank);
}

std::string to_dot(const Roadmap& rm) {
  std::ostringstream out;
  out << "digraph lsr {\n";
  for (const auto& node : rm.nodes) {
    out << "  n" << node.id << " [label=\"" << node.id << " (" << node.members.size()
        << ")\"];\n";
  }
  for (const auto& e : rm.edges) {
    std::vector<std::pair<int, int>> dirs;
    for (const auto& w : e.actions) dirs.emplace_back(w.from, w.to);
    std::sort(dirs.begin(), dirs.end());
    dirs.erase(std::unique(dirs.begin(), dirs.end()), dirs.end());
    for (const auto& [f, t] : dirs) {
      out << "  n" << f << " -> n" << t << ";\n";
    }
  }
  out << "}\n";
  return out.str();
}

}  // namespace defnet
