#include "defnet/cloth_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "defnet/errors.hpp"
#include "defnet/io.hpp"

namespace defnet {

namespace {

void require_same_grid(const ClothState& a, const ClothState& b) {
  if (a.grid_w != b.grid_w || a.grid_h != b.grid_h || a.size() != b.size()) {
    throw ShapeMismatch("cloth grids differ: " + std::to_string(a.grid_w) + "x" +
                        std::to_string(a.grid_h) + " vs " +
                        std::to_string(b.grid_w) + "x" + std::to_string(b.grid_h));
  }
}

bool inside_workspace(const Vec2& p) {
  return p.x >= 0.0 && p.x <= kWorkspaceSize && p.y >= 0.0 &&
         p.y <= kWorkspaceSize;
}

}  // namespace

int ClothState::max_layer() const {
  return layers.empty() ? 0 : *std::max_element(layers.begin(), layers.end());
}

Vec2 ClothState::centroid() const {
  Vec2 c;
  for (const auto& p : positions) c += p;
  return positions.empty() ? c : (1.0 / static_cast<double>(size())) * c;
}

bool nearly_equal(const ClothState& a, const ClothState& b, double tol_m) {
  if (a.grid_w != b.grid_w || a.grid_h != b.grid_h || a.layers != b.layers) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a.positions[i].x - b.positions[i].x) > tol_m ||
        std::abs(a.positions[i].y - b.positions[i].y) > tol_m) {
      return false;
    }
  }
  return true;
}

ClothState new_flat_cloth(int grid_w, int grid_h, double spacing_m,
                          double thickness_m) {
  if (grid_w < 2 || grid_h < 2) {
    throw InvalidCloth("cloth grid must be at least 2x2, got " +
                       std::to_string(grid_w) + "x" + std::to_string(grid_h));
  }
  if (!(spacing_m > 0.0) || !(thickness_m >= 0.0)) {
    throw InvalidCloth("cloth spacing must be positive");
  }
  ClothState s;
  s.grid_w = grid_w;
  s.grid_h = grid_h;
  s.spacing_m = spacing_m;
  s.thickness_m = thickness_m;
  const double x0 = 0.5 * (kWorkspaceSize - (grid_w - 1) * spacing_m);
  const double y0 = 0.5 * (kWorkspaceSize - (grid_h - 1) * spacing_m);
  s.positions.reserve(static_cast<std::size_t>(grid_w) * grid_h);
  for (int j = 0; j < grid_h; ++j) {
    for (int i = 0; i < grid_w; ++i) {
      s.positions.push_back({x0 + i * spacing_m, y0 + j * spacing_m});
    }
  }
  s.layers.assign(s.positions.size(), 0);
  return s;
}

ClothState new_flat_cloth(const ClothConfig& c) {
  return new_flat_cloth(c.grid_w, c.grid_h, c.spacing_m, c.thickness_m);
}

FoldOutcome apply_fold(const ClothState& state, const FoldAction& action,
                       const NoiseParams& noise) {
  if (!inside_workspace(action.grasp) || !inside_workspace(action.place)) {
    throw InvalidAction("fold action leaves the workspace");
  }
  if (noise.grasp_sigma_m < 0.0 || noise.settle_sigma_m < 0.0) {
    throw InvalidAction("noise sigmas must be non-negative");
  }
  std::mt19937_64 rng(mix_seed(noise.seed));
  std::normal_distribution<double> gauss(0.0, 1.0);

  Vec2 grasp = action.grasp;
  if (noise.grasp_sigma_m > 0.0) {
    grasp.x += noise.grasp_sigma_m * gauss(rng);
    grasp.y += noise.grasp_sigma_m * gauss(rng);
  }

  const Vec2 dir = action.place - grasp;
  const double len = norm(dir);
  if (len < 1e-12) return {state, false};

  double nearest = std::numeric_limits<double>::infinity();
  for (const auto& q : state.positions) nearest = std::min(nearest, norm(q - grasp));
  if (nearest > state.grasp_radius()) return {state, false};

  const Vec2 n = (1.0 / len) * dir;
  const Vec2 mid = 0.5 * (grasp + action.place);
  const int top = state.max_layer();

  FoldOutcome out{state, true};
  for (std::size_t i = 0; i < state.size(); ++i) {
    const Vec2& q = state.positions[i];
    const double side = dot(q - mid, n);
    if (side >= -kFoldLineTolerance) continue;
    Vec2 r = q - (2.0 * side) * n;
    if (noise.settle_sigma_m > 0.0) {
      r.x += noise.settle_sigma_m * gauss(rng);
      r.y += noise.settle_sigma_m * gauss(rng);
    }
    out.state.positions[i] = r;
    out.state.layers[i] = 2 * top + 1 - state.layers[i];
  }
  return out;
}

std::vector<int> topmost_particles(const ClothState& state, int resolution) {
  const double pix = kWorkspaceSize / resolution;
  const double half = 0.5 * state.spacing_m;
  std::vector<int> owner(static_cast<std::size_t>(resolution) * resolution, -1);
  std::vector<double> owner_dist(owner.size(), 0.0);

  for (std::size_t i = 0; i < state.size(); ++i) {
    const Vec2& q = state.positions[i];
    // Pixel centers (c + 0.5) * pix inside [q - half, q + half).
    const int c0 = std::max(0, static_cast<int>(std::ceil((q.x - half) / pix - 0.5)));
    const int c1 = std::min(resolution - 1,
                            static_cast<int>(std::ceil((q.x + half) / pix - 0.5)) - 1);
    const int r0 = std::max(0, static_cast<int>(std::ceil((q.y - half) / pix - 0.5)));
    const int r1 = std::min(resolution - 1,
                            static_cast<int>(std::ceil((q.y + half) / pix - 0.5)) - 1);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const std::size_t k = static_cast<std::size_t>(r) * resolution + c;
        const double d = norm(q - Vec2{(c + 0.5) * pix, (r + 0.5) * pix});
        const int cur = owner[k];
        if (cur < 0 || state.layers[i] > state.layers[cur] ||
            (state.layers[i] == state.layers[cur] && d < owner_dist[k])) {
          owner[k] = static_cast<int>(i);
          owner_dist[k] = d;
        }
      }
    }
  }
  return owner;
}

Observation render(const ClothState& state, int resolution) {
  if (resolution < 8) {
    throw ShapeMismatch("render resolution must be at least 8");
  }
  Observation obs;
  obs.resolution = resolution;
  obs.pixel_to_meter = kWorkspaceSize / resolution;
  const auto owner = topmost_particles(state, resolution);
  obs.occupancy.assign(owner.size(), 0);
  obs.height.assign(owner.size(), 0.0);
  for (std::size_t k = 0; k < owner.size(); ++k) {
    if (owner[k] < 0) continue;
    obs.occupancy[k] = 1;
    obs.height[k] = state.layers[static_cast<std::size_t>(owner[k])];
  }
  return obs;
}

Vec2 pixel_center(const Pixel& px, int resolution) {
  const double pix = kWorkspaceSize / resolution;
  return {(px.col + 0.5) * pix, (px.row + 0.5) * pix};
}

Pixel pixel_of(const Vec2& point, int resolution) {
  const double pix = kWorkspaceSize / resolution;
  auto clamp = [resolution](double v) {
    return std::clamp(static_cast<int>(std::floor(v)), 0, resolution - 1);
  };
  return {clamp(point.y / pix), clamp(point.x / pix)};
}

double mean_particle_distance(const ClothState& state, const ClothState& goal,
                              DistanceMode mode) {
  require_same_grid(state, goal);
  if (state.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const Vec2 d = state.positions[i] - goal.positions[i];
    double dz = 0.0;
    if (mode == DistanceMode::Spatial) dz = state.z(i) - goal.z(i);
    total += std::sqrt(d.x * d.x + d.y * d.y + dz * dz);
  }
  return 1000.0 * total / static_cast<double>(state.size());
}

double mask_iou(const Observation& a, const Observation& b) {
  if (a.resolution != b.resolution || a.occupancy.size() != b.occupancy.size()) {
    throw ShapeMismatch("mask resolutions differ: " + std::to_string(a.resolution) +
                        " vs " + std::to_string(b.resolution));
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t k = 0; k < a.occupancy.size(); ++k) {
    const bool pa = a.occupancy[k] != 0;
    const bool pb = b.occupancy[k] != 0;
    inter += (pa && pb) ? 1 : 0;
    uni += (pa || pb) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double max_particle_movement(const ClothState& before, const ClothState& after) {
  require_same_grid(before, after);
  double best = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    best = std::max(best, norm(after.positions[i] - before.positions[i]));
  }
  return 1000.0 * best;
}

std::string to_pgm(const Observation& obs, bool height_channel) {
  std::ostringstream out;
  out << "P5\n" << obs.resolution << ' ' << obs.resolution << "\n255\n";
  double top = 0.0;
  for (double h : obs.height) top = std::max(top, h);
  for (std::size_t k = 0; k < obs.occupancy.size(); ++k) {
    unsigned char v = 0;
    if (!height_channel) {
      v = obs.occupancy[k] ? 255 : 0;
    } else if (top > 0.0) {
      v = static_cast<unsigned char>(std::lround(255.0 * obs.height[k] / top));
    }
    out.put(static_cast<char>(v));
  }
  return out.str();
}

void write_pgm(const Observation& obs, const std::string& path,
               bool height_channel) {
  write_file_atomic(path, to_pgm(obs, height_channel));
}

}  // namespace defnet
