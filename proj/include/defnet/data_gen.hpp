#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "defnet/cloth_sim.hpp"

namespace defnet {

/// Canonical folds. Each is defined against the bounding box of the current
/// particle positions; the named side or corner is the one that gets picked
/// up. Fold lines fall midway between particle columns (or on the box
/// diagonal), so grid points map onto grid points.
enum class FoldKind {
  HalfLeft,
  HalfRight,
  HalfBottom,
  HalfTop,
  QuarterLeft,
  QuarterRight,
  QuarterBottom,
  QuarterTop,
  DiagonalBottomLeft,
  DiagonalBottomRight,
  DiagonalTopLeft,
  DiagonalTopRight,
};

std::string to_string(FoldKind kind);
FoldKind fold_kind_from_string(const std::string& name);

/// Grasp/place pair realizing `kind` on the current state. Throws
/// InvalidAction when the fold does not apply to the state's footprint (e.g.
/// a diagonal fold of a non-square footprint).
FoldAction grammar_action(const ClothState& state, FoldKind kind);

struct FoldScript {
  int tier = 0;
  std::uint64_t variant_seed = 0;
  std::vector<FoldKind> kinds;
  std::vector<FoldAction> folds;
};

/// Number of distinct scripts available per tier.
inline constexpr int kScriptsPerTier = 4;

FoldScript goal_library(int tier, std::uint64_t variant_seed,
                        const ClothConfig& cloth = {});

struct TransitionTuple {
  ClothState state0;
  ClothState state1;
  Observation obs0;
  Observation obs1;
  int a = 0;
  FoldAction u;
  /// Ground-truth identity of the underlying scripted state on each side;
  /// a no-action pair carries the same id twice.
  int state_id0 = -1;
  int state_id1 = -1;
};

TransitionTuple make_tuple(ClothState state0, ClothState state1, int a,
                           const FoldAction& u, int resolution);

struct Rollout {
  std::vector<TransitionTuple> tuples;
  ClothState goal;
};

inline constexpr double kDefaultDeltaMoveMm = 15.0;

Rollout rollout_scripted(const FoldScript& script, const ClothConfig& cloth = {},
                         int resolution = 64,
                         double delta_move_mm = kDefaultDeltaMoveMm);

TransitionTuple make_no_action_pair(const ClothState& state, double perturb_scale_m,
                                    std::uint64_t seed,
                                    double delta_move_mm = kDefaultDeltaMoveMm,
                                    int resolution = 64);

struct CorpusOptions {
  int n_variants = kScriptsPerTier;
  int perturbs_per_state = 2;
  std::uint64_t seed = 0;
  ClothConfig cloth;
  int resolution = 64;
  double delta_move_mm = kDefaultDeltaMoveMm;
  double perturb_scale_m = kDefaultDeltaMoveMm / 10.0 / 1000.0;
};

struct Dataset {
  std::vector<TransitionTuple> tuples;
  double delta_move_mm = kDefaultDeltaMoveMm;
  std::uint64_t seed = 0;
  ClothConfig cloth;
  int resolution = 64;
  double perturb_scale_m = 0.0;
  int n_variants = 0;
  int perturbs_per_state = 0;
};

Dataset build_corpus(const CorpusOptions& options);

inline constexpr int kDatasetVersion = 1;

void save_dataset(const Dataset& d, const std::string& path);
std::string serialize_dataset(const Dataset& d);
Dataset load_dataset(const std::string& path);
Dataset parse_dataset(const std::string& text);

/// The scripted-state graph recorded during generation: one vertex per
/// ground-truth state id, one directed edge per observed a=1 transition.
struct TransitionGraph {
  int num_states = 0;
  std::set<std::pair<int, int>> edges;
  /// A representative (unperturbed) state for every id.
  std::vector<ClothState> states;
};

TransitionGraph transition_graph(const Dataset& d);

/// Breadth-first hop counts from `source` over the directed edges; -1 when
/// unreachable.
std::vector<int> bfs_hops(const TransitionGraph& g, int source);

/// Goal file: {"version", "tier", "seed", "script", "actions", "state"}.
void save_goal(const FoldScript& script, const ClothState& goal,
               const std::string& path);
ClothState load_goal_state(const std::string& path);

}  // namespace defnet
