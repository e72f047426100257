#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "defnet/cloth_sim.hpp"
#include "defnet/data_gen.hpp"
#include "defnet/latent_space.hpp"

namespace defnet {

/// Displacement in pixels, (row, col) order like Pixel.
struct FlowVec {
  double d_row = 0.0;
  double d_col = 0.0;
  double magnitude() const { return std::hypot(d_row, d_col); }
  friend bool operator==(const FlowVec&, const FlowVec&) = default;
};

struct FlowField {
  int resolution = 0;
  std::vector<FlowVec> flow;
  std::vector<std::uint8_t> valid;

  std::size_t index(const Pixel& p) const {
    return static_cast<std::size_t>(p.row) * resolution + p.col;
  }
};

/// Exact flow from known particle correspondences: each pixel carries the
/// displacement of the topmost particle of `current` covering it.
FlowField oracle_flow(const ClothState& current, const ClothState& goal, int resolution = 64);

/// Mean endpoint error over the pixels valid in `truth`.
double epe(const FlowField& predicted, const FlowField& truth);

struct Heatmap {
  int resolution = 0;
  std::vector<double> values;
};

enum class ScorerVariant { Geometric, TrainedLogistic };

std::string to_string(ScorerVariant v);
ScorerVariant scorer_variant_from_string(const std::string& name);

inline constexpr std::size_t kPickFeatures = 3;

/// Weights are (bias, normalized flow magnitude, top-layer flag,
/// normalized distance to the cloth edge).
struct PickScorer {
  ScorerVariant variant = ScorerVariant::Geometric;
  std::array<double, kPickFeatures + 1> weights{};
};

double move_threshold_px(double delta_move_mm, int resolution);

/// Per-pixel features, kPickFeatures per pixel, row-major.
std::vector<double> pick_features(const FlowField& flow, const Observation& obs);

/// Pixels that may be picked: valid flow with magnitude above the threshold.
std::vector<std::uint8_t> pick_mask(const FlowField& flow, double threshold_px);

Heatmap pick_heatmap(const PickScorer& scorer, const FlowField& flow, const Observation& obs,
                     double threshold_px = move_threshold_px(kDefaultDeltaMoveMm, 64));

/// Row-major argmax; std::nullopt when the heatmap is all zero.
std::optional<Pixel> select_pick(const Heatmap& h);

Pixel select_place(const FlowField& flow, const Pixel& pick);

struct ProposedAction {
  FoldAction action;
  Pixel pick;
  Pixel place;
};

std::optional<ProposedAction> propose_action(
    const PickScorer& scorer, const ClothState& current, const ClothState& subgoal,
    int resolution = 64, double delta_move_mm = kDefaultDeltaMoveMm);

/// Mean pixelwise binary cross-entropy, probabilities clamped to
/// [1e-7, 1 - 1e-7].
double bce_pick_loss(const Heatmap& truth, const Heatmap& predicted);

/// Gaussian blob label peaking at 1 on `center`.
Heatmap gaussian_label(int resolution, const Pixel& center, double sigma_px = 2.0);

struct PickSample {
  std::vector<double> features;
  std::vector<std::uint8_t> mask;
  Heatmap label;
};

/// One sample per action tuple: flow state0 -> state1, label centered on
/// the recorded grasp.
std::vector<PickSample> pick_samples(const Dataset& d, std::span<const std::size_t> tuple_indices);

double logistic_loss(const std::array<double, kPickFeatures + 1>& w,
                     std::span<const PickSample> samples);
std::array<double, kPickFeatures + 1> logistic_gradient(
    const std::array<double, kPickFeatures + 1>& w, std::span<const PickSample> samples);
/// Same relative-error convention as the encoder gradient check.
double logistic_gradient_check(const std::array<double, kPickFeatures + 1>& w,
                               std::span<const PickSample> samples);

struct PickTrainOptions {
  int epochs = 400;
  double learning_rate = 20.0;
  std::uint64_t seed = 0;
};

PickScorer train_pick_scorer(std::span<const PickSample> samples,
                             const PickTrainOptions& options = {});
PickScorer train_pick_scorer(const Dataset& d, const PickTrainOptions& options = {});

/// Retrieval baseline: the recorded action whose (before, after) encodings
/// are nearest the query pair.
FoldAction apm_baseline_action(const EncodedDataset& enc, const EncoderModel& m,
                               const Observation& current, const Observation& subgoal);

/// Two-channel text grid: "R\n" then one line per row of "d_row,d_col" cells.
std::string flow_to_text(const FlowField& f);
/// Color-wheel rendering as a binary portable pixmap (P6): hue encodes
/// direction, brightness encodes magnitude; invalid pixels are black.
std::string flow_to_color_wheel(const FlowField& f);

}  // namespace defnet
