#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "defnet/cloth_sim.hpp"
#include "defnet/data_gen.hpp"
#include "defnet/flow_action.hpp"
#include "defnet/latent_space.hpp"
#include "defnet/roadmap.hpp"

namespace defnet {

enum class ExecMode { DeFNet, NoIim, SingleStepFlow, Apm };

std::string to_string(ExecMode mode);
ExecMode exec_mode_from_string(const std::string& name);
/// Comma-separated list, e.g. "defnet,no_iim".
std::vector<ExecMode> parse_modes(const std::string& list);

inline constexpr int kDefaultMaxIters = 8;
inline constexpr double kAblationGraspSigmaM = 0.005;
inline constexpr double kAblationSettleSigmaM = 0.001;

struct EpisodeConfig {
  ExecMode mode = ExecMode::DeFNet;
  int max_iters = kDefaultMaxIters;
  /// Latent success radius; negative means half the roadmap epsilon.
  double tau = -1.0;
  NoiseParams noise;
  /// Path-choice seed; per-step fold noise uses mix_seed(noise.seed, step).
  std::uint64_t seed = 0;
  bool replan_path_each_iter = true;
};

struct IterationTrace {
  std::size_t plan_length = 0;
  int node = -1;
  FoldAction action;
  bool executed = false;
  /// Mean particle distance (mm) between the post-action state and the
  /// sub-goal the action was aiming at.
  double deviation_mm = 0.0;
};

struct EpisodeResult {
  std::vector<FoldAction> actions;
  ClothState final_state;
  double mpde_mm = 0.0;
  double miou = 0.0;
  std::size_t n_actions = 0;
  bool success = false;
  std::vector<IterationTrace> trace;
};

/// Everything an episode reads. The bank and encoded dataset must come from
/// the same dataset/model pair as the roadmap.
struct Artifacts {
  Dataset dataset;
  EncoderModel model;
  EncodedDataset encoded;
  std::vector<BankEntry> bank;
  Roadmap roadmap;
  PickScorer scorer;
};

/// Loads the roadmap file and the dataset and model it references.
Artifacts load_artifacts(const std::string& roadmap_path);

EpisodeResult run_episode(const EpisodeConfig& cfg, const ClothState& start,
                          const ClothState& goal, const Artifacts& art);

/// Re-applies the recorded actions with the per-step noise streams of the
/// episode.
ClothState replay_actions(const ClothState& start, const std::vector<FoldAction>& actions,
                          const NoiseParams& noise);

struct BenchRow {
  int tier = 0;
  std::uint64_t seed = 0;
  ExecMode mode = ExecMode::DeFNet;
  double mpde_mm = 0.0;
  double miou = 0.0;
  std::size_t n_actions = 0;
  bool success = false;
};

struct BenchAggregate {
  int tier = 0;
  ExecMode mode = ExecMode::DeFNet;
  std::size_t count = 0;
  double mpde_mean = 0.0;
  double mpde_std = 0.0;
  double miou_mean = 0.0;
  double miou_std = 0.0;
  double actions_mean = 0.0;
  double success_rate = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<BenchAggregate> aggregates() const;
};

struct BenchOptions {
  std::vector<int> tiers{1, 2, 3, 4};
  int seeds_per_tier = 10;
  std::vector<ExecMode> modes{ExecMode::DeFNet};
  /// Episode template; mode and seeds are filled in per episode.
  EpisodeConfig episode;
  std::uint64_t master_seed = 0;
};

/// Episode (tier, s) aims at goal_library(tier, s) from the flat cloth.
/// Noise and path-choice seeds depend on (master seed, tier, s) only, so all
/// modes see the same noise streams.
BenchReport run_bench(const BenchOptions& options, const Artifacts& art);

inline constexpr const char* kCsvHeader = "tier,seed,mode,mpde_mm,miou,n_actions,success";

std::string bench_to_csv(const BenchReport& r);
std::string aggregates_to_text(const BenchReport& r);

/// One JSON object per iteration.
std::string trace_to_jsonl(const EpisodeResult& r);

}  // namespace defnet
