#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "defnet/latent_space.hpp"

namespace defnet {

struct RoadmapNode {
  int id = 0;
  LatentVector centroid;
  /// Bank index of the member whose encoding is nearest the centroid.
  std::size_t representative = 0;
  ClothState representative_state;
  /// Bank indices of the covered states in this cluster, ascending.
  std::vector<std::size_t> members;
};

/// A transition observed in the data, with the direction it was observed in.
struct WitnessedAction {
  int from = 0;
  int to = 0;
  FoldAction u;
};

/// Undirected edge between nodes a < b.
struct RoadmapEdge {
  int a = 0;
  int b = 0;
  std::vector<WitnessedAction> actions;
};

struct Roadmap {
  std::vector<RoadmapNode> nodes;
  std::vector<RoadmapEdge> edges;
  double epsilon = 0.0;
  /// Node of every bank entry.
  std::vector<int> node_of;

  /// Out-neighbours per node, following witnessed directions only. Sorted.
  std::vector<std::vector<int>> successors() const;
  const RoadmapEdge* find_edge(int u, int v) const;
};

inline constexpr double kEpsilonNoActionFactor = 2.0;

/// min(c * median of no-action distances, half the smallest action distance).
/// A zero median leaves only the action term.
double tune_epsilon(const EncodedDataset& enc, double c = kEpsilonNoActionFactor);

/// Clusters covered states (bank order) into connected components of the
/// "within epsilon or no-action pair" relation and links clusters by
/// action tuples. Throws EpsilonTooLarge if an action pair collapses.
Roadmap build_lsr(const EncodedDataset& enc, std::span<const BankEntry> bank, double epsilon);

struct NodeMatch {
  int node = 0;
  bool covered = false;
  double distance = 0.0;
};

NodeMatch map_to_node(const Roadmap& rm, const LatentVector& z);

inline constexpr std::size_t kDefaultPathCap = 64;

/// Every minimum-hop path from s to g along witnessed directions, in
/// lexicographic node-id order, at most `cap` of them.
std::vector<std::vector<int>> all_shortest_paths(const Roadmap& rm, int s, int g,
                                                 std::size_t cap = kDefaultPathCap);

struct Plan {
  std::vector<int> nodes;
  /// Decoded interior states; the endpoints are the caller's own inputs.
  std::vector<ClothState> interior;
  bool start_covered = false;
  bool goal_covered = false;
  std::size_t candidates = 0;

  std::size_t length() const { return nodes.empty() ? 0 : nodes.size() - 1; }
};

/// Index in [0, count) chosen uniformly from `seed`.
std::size_t seeded_choice(std::size_t count, std::uint64_t seed);

Plan plan_between(const Roadmap& rm, const LatentVector& z_start, const LatentVector& z_goal,
                  std::uint64_t seed, std::size_t cap = kDefaultPathCap);
Plan plan(const Roadmap& rm, const EncoderModel& m, const Observation& obs_start,
          const Observation& obs_goal, std::uint64_t seed, std::size_t cap = kDefaultPathCap);

inline constexpr int kRoadmapVersion = 1;

struct RoadmapFileRefs {
  std::string dataset_path;
  std::string model_path;
};

/// Representatives are stored as bank references (tuple index, side) into
/// the dataset file; loading resolves them against `bank`.
std::string serialize_roadmap(const Roadmap& rm, const RoadmapFileRefs& refs);
void save_roadmap(const Roadmap& rm, const RoadmapFileRefs& refs, const std::string& path);
RoadmapFileRefs read_roadmap_refs(const std::string& path);
Roadmap parse_roadmap(const std::string& text, std::span<const BankEntry> bank);
Roadmap load_roadmap(const std::string& path, std::span<const BankEntry> bank);

std::string to_dot(const Roadmap& rm);

}  // namespace defnet
