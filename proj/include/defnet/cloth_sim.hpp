#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defnet/geometry.hpp"

namespace defnet {

/// Side length of the square workspace, meters. The workspace spans
/// [0, kWorkspaceSize] on both axes.
inline constexpr double kWorkspaceSize = 0.4;

/// Tolerance for the fold-side test: particles closer than this to the fold
/// line (on either side) stay put, so particles sitting on the line are not
/// flipped by rounding in the dot product.
inline constexpr double kFoldLineTolerance = 1e-9;

struct ClothConfig {
  int grid_w = 24;
  int grid_h = 24;
  double spacing_m = 0.01;
  double thickness_m = 0.002;

  friend bool operator==(const ClothConfig&, const ClothConfig&) = default;
};

/// Particle grid. Particle (i, j) lives at index j * grid_w + i, i along x.
struct ClothState {
  int grid_w = 0;
  int grid_h = 0;
  double spacing_m = 0.0;
  double thickness_m = 0.0;
  std::vector<Vec2> positions;
  std::vector<int> layers;

  std::size_t size() const { return positions.size(); }
  double z(std::size_t i) const { return layers[i] * thickness_m; }
  int max_layer() const;
  Vec2 centroid() const;
  ClothConfig config() const { return {grid_w, grid_h, spacing_m, thickness_m}; }
  double grasp_radius() const { return 1.5 * spacing_m; }

  friend bool operator==(const ClothState&, const ClothState&) = default;
};

/// Whether two states agree on every layer and on every position within
/// `tol_m` per coordinate.
bool nearly_equal(const ClothState& a, const ClothState& b, double tol_m = 1e-9);

struct FoldAction {
  Vec2 grasp;
  Vec2 place;
  friend bool operator==(const FoldAction&, const FoldAction&) = default;
};

struct NoiseParams {
  double grasp_sigma_m = 0.0;
  double settle_sigma_m = 0.0;
  std::uint64_t seed = 0;
};

struct FoldOutcome {
  ClothState state;
  bool executed = false;
};

/// Top-down image of the workspace. Pixel (row, col) covers
/// x in [col, col + 1) * pixel_to_meter and y in [row, row + 1) * pixel_to_meter.
struct Observation {
  int resolution = 0;
  double pixel_to_meter = 0.0;
  std::vector<std::uint8_t> occupancy;
  std::vector<double> height;

  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * resolution + col;
  }
  friend bool operator==(const Observation&, const Observation&) = default;
};

ClothState new_flat_cloth(int grid_w, int grid_h, double spacing_m,
                          double thickness_m = 0.002);
ClothState new_flat_cloth(const ClothConfig& config);

/// Reflection fold across the perpendicular bisector of grasp -> place.
/// Particles on the grasp side are mirrored and their stacking order is
/// reversed on top of the current stack (layer l -> 2M + 1 - l).
FoldOutcome apply_fold(const ClothState& state, const FoldAction& action,
                       const NoiseParams& noise = {});

/// For every pixel, the index of the topmost particle whose footprint covers
/// the pixel center, or -1. A particle's footprint is its grid cell: the
/// axis-aligned square of side spacing_m centered on it.
std::vector<int> topmost_particles(const ClothState& state, int resolution);

Observation render(const ClothState& state, int resolution = 64);

Vec2 pixel_center(const Pixel& px, int resolution);
/// Pixel containing the workspace point, clamped to the image.
Pixel pixel_of(const Vec2& point, int resolution);

enum class DistanceMode { Planar, Spatial };

/// Mean per-particle Euclidean distance in millimeters. Spatial mode
/// includes z = layer * thickness.
double mean_particle_distance(const ClothState& state, const ClothState& goal,
                              DistanceMode mode = DistanceMode::Spatial);

double mask_iou(const Observation& a, const Observation& b);

/// Largest planar displacement of any particle, millimeters.
double max_particle_movement(const ClothState& before, const ClothState& after);

/// Binary PGM (P5). The occupancy channel maps to {0, 255}; the height
/// channel is scaled by 255 / max layer.
std::string to_pgm(const Observation& obs, bool height_channel = false);
void write_pgm(const Observation& obs, const std::string& path,
               bool height_channel = false);

}  // namespace defnet
