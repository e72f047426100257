#include "defnet/flow_action.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "defnet/errors.hpp"

namespace defnet {

namespace {

constexpr double kProbFloor = 1e-7;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double logit(const std::array<double, kPickFeatures + 1>& w, const double* f) {
  double v = w[0];
  for (std::size_t k = 0; k < kPickFeatures; ++k) v += w[k + 1] * f[k];
  return v;
}

void require_same_resolution(int a, int b, const char* what) {
  if (a != b) {
    throw ShapeMismatch(std::string(what) + " resolutions differ: " + std::to_string(a) +
                        " vs " + std::to_string(b));
  }
}

// Chebyshev distance in pixels from each occupied pixel to the nearest
// unoccupied pixel; the image border counts as unoccupied.
std::vector<int> edge_distance(const Observation& obs) {
  const int n = obs.resolution;
  std::vector<int> dist(obs.occupancy.size(), -1);
  std::deque<std::size_t> q;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const std::size_t k = obs.index(r, c);
      if (!obs.occupancy[k]) {
        dist[k] = 0;
        q.push_back(k);
      } else if (r == 0 || c == 0 || r == n - 1 || c == n - 1) {
        dist[k] = 1;
        q.push_back(k);
      }
    }
  }
  while (!q.empty()) {
    const std::size_t k = q.front();
    q.pop_front();
    const int r = static_cast<int>(k) / n;
    const int c = static_cast<int>(k) % n;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = r + dr;
        const int cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= n || cc >= n) continue;
        const std::size_t kk = obs.index(rr, cc);
        if (dist[kk] < 0) {
          dist[kk] = dist[k] + 1;
          q.push_back(kk);
        }
      }
    }
  }
  return dist;
}

}  // namespace

FlowField oracle_flow(const ClothState& current, const ClothState& goal, int resolution) {
  if (current.grid_w != goal.grid_w || current.grid_h != goal.grid_h ||
      current.size() != goal.size()) {
    throw ShapeMismatch("flow needs matching cloth grids");
  }
  const double pix = kWorkspaceSize / resolution;
  const auto owner = topmost_particles(current, resolution);
  FlowField f;
  f.resolution = resolution;
  f.flow.assign(owner.size(), {});
  f.valid.assign(owner.size(), 0);
  for (std::size_t k = 0; k < owner.size(); ++k) {
    if (owner[k] < 0) continue;
    const auto i = static_cast<std::size_t>(owner[k]);
    const Vec2 d = goal.positions[i] - current.positions[i];
    f.flow[k] = {d.y / pix, d.x / pix};
    f.valid[k] = 1;
  }
  return f;
}

double epe(const FlowField& predicted, const FlowField& truth) {
  require_same_resolution(predicted.resolution, truth.resolution, "flow");
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < truth.flow.size(); ++k) {
    if (!truth.valid[k]) continue;
    total += std::hypot(predicted.flow[k].d_row - truth.flow[k].d_row,
                        predicted.flow[k].d_col - truth.flow[k].d_col);
    ++n;
  }
  if (n == 0) throw EmptyFlow("EPE is undefined without valid flow pixels");
  return total / static_cast<double>(n);
}

std::string to_string(ScorerVariant v) {
  return v == ScorerVariant::Geometric ? "geometric" : "trained-logistic";
}

ScorerVariant scorer_variant_from_string(const std::string& name) {
  if (name == "geometric") return ScorerVariant::Geometric;
  if (name == "trained-logistic") return ScorerVariant::TrainedLogistic;
  throw UnsupportedVariant("unknown pick scorer '" + name + "'");
}

double move_threshold_px(double delta_move_mm, int resolution) {
  return delta_move_mm / 1000.0 / (kWorkspaceSize / resolution);
}

std::vector<double> pick_features(const FlowField& flow, const Observation& obs) {
  require_same_resolution(flow.resolution, obs.resolution, "flow/observation");
  double max_mag = 0.0;
  double top = 0.0;
  for (std::size_t k = 0; k < flow.flow.size(); ++k) {
    if (flow.valid[k]) max_mag = std::max(max_mag, flow.flow[k].magnitude());
    if (obs.occupancy[k]) top = std::max(top, obs.height[k]);
  }
  const auto edge = edge_distance(obs);
  const double edge_scale = 2.0 / obs.resolution;
  std::vector<double> feats(flow.flow.size() * kPickFeatures, 0.0);
  for (std::size_t k = 0; k < flow.flow.size(); ++k) {
    double* f = &feats[k * kPickFeatures];
    if (flow.valid[k] && max_mag > 0.0) f[0] = flow.flow[k].magnitude() / max_mag;
    f[1] = (obs.occupancy[k] && obs.height[k] == top) ? 1.0 : 0.0;
    f[2] = std::max(0, edge[k]) * edge_scale;
  }
  return feats;
}

std::vector<std::uint8_t> pick_mask(const FlowField& flow, double threshold_px) {
  std::vector<std::uint8_t> mask(flow.flow.size(), 0);
  for (std::size_t k = 0; k < flow.flow.size(); ++k) {
    mask[k] = (flow.valid[k] && flow.flow[k].magnitude() > threshold_px) ? 1 : 0;
  }
  return mask;
}

Heatmap pick_heatmap(const PickScorer& scorer, const FlowField& flow, const Observation& obs,
                     double threshold_px) {
  require_same_resolution(flow.resolution, obs.resolution, "flow/observation");
  const auto mask = pick_mask(flow, threshold_px);
  Heatmap h{flow.resolution, std::vector<double>(flow.flow.size(), 0.0)};
  if (scorer.variant == ScorerVariant::Geometric) {
    double peak = 0.0;
    for (std::size_t k = 0; k < mask.size(); ++k) {
      if (mask[k]) {
        h.values[k] = flow.flow[k].magnitude();
        peak = std::max(peak, h.values[k]);
      }
    }
    if (peak > 0.0) {
      for (double& v : h.values) v /= peak;
    }
    return h;
  }
  const auto feats = pick_features(flow, obs);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) h.values[k] = sigmoid(logit(scorer.weights, &feats[k * kPickFeatures]));
  }
  return h;
}

std::optional<Pixel> select_pick(const Heatmap& h) {
  double best = 0.0;
  std::optional<Pixel> pick;
  for (int r = 0; r < h.resolution; ++r) {
    for (int c = 0; c < h.resolution; ++c) {
      const double v = h.values[static_cast<std::size_t>(r) * h.resolution + c];
      if (v > best) {
        best = v;
        pick = Pixel{r, c};
      }
    }
  }
  return pick;
}

Pixel select_place(const FlowField& flow, const Pixel& pick) {
  if (pick.row < 0 || pick.col < 0 || pick.row >= flow.resolution ||
      pick.col >= flow.resolution || !flow.valid[flow.index(pick)]) {
    throw InvalidPick("pick pixel (" + std::to_string(pick.row) + ", " +
                      std::to_string(pick.col) + ") has no flow");
  }
  const FlowVec& f = flow.flow[flow.index(pick)];
  const int last = flow.resolution - 1;
  return {std::clamp(static_cast<int>(std::lround(pick.row + f.d_row)), 0, last),
          std::clamp(static_cast<int>(std::lround(pick.col + f.d_col)), 0, last)};
}

std::optional<ProposedAction> propose_action(const PickScorer& scorer, const ClothState& current,
                                             const ClothState& subgoal, int resolution,
                                             double delta_move_mm) {
  const FlowField flow = oracle_flow(current, subgoal, resolution);
  const Observation obs = render(current, resolution);
  const Heatmap h =
      pick_heatmap(scorer, flow, obs, move_threshold_px(delta_move_mm, resolution));
  const auto pick = select_pick(h);
  if (!pick) return std::nullopt;
  const Pixel place = select_place(flow, *pick);
  return ProposedAction{{pixel_center(*pick, resolution), pixel_center(place, resolution)},
                        *pick,
                        place};
}

double bce_pick_loss(const Heatmap& truth, const Heatmap& predicted) {
  require_same_resolution(truth.resolution, predicted.resolution, "heatmap");
  if (truth.values.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < truth.values.size(); ++k) {
    const double p = std::clamp(predicted.values[k], kProbFloor, 1.0 - kProbFloor);
    const double y = truth.values[k];
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return total / static_cast<double>(truth.values.size());
}

Heatmap gaussian_label(int resolution, const Pixel& center, double sigma_px) {
  Heatmap h{resolution, std::vector<double>(static_cast<std::size_t>(resolution) * resolution)};
  const double inv = 1.0 / (2.0 * sigma_px * sigma_px);
  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) {
      const double dr = r - center.row;
      const double dc = c - center.col;
      h.values[static_cast<std::size_t>(r) * resolution + c] = std::exp(-(dr * dr + dc * dc) * inv);
    }
  }
  return h;
}

std::vector<PickSample> pick_samples(const Dataset& d, std::span<const std::size_t> tuple_indices) {
  const double threshold = move_threshold_px(d.delta_move_mm, d.resolution);
  std::vector<PickSample> out;
  for (std::size_t i : tuple_indices) {
    const auto& t = d.tuples.at(i);
    if (t.a != 1) continue;
    const FlowField flow = oracle_flow(t.state0, t.state1, d.resolution);
    out.push_back({pick_features(flow, t.obs0), pick_mask(flow, threshold),
                   gaussian_label(d.resolution, pixel_of(t.u.grasp, d.resolution))});
  }
  return out;
}

double logistic_loss(const std::array<double, kPickFeatures + 1>& w,
                     std::span<const PickSample> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    Heatmap pred{s.label.resolution, std::vector<double>(s.mask.size(), 0.0)};
    for (std::size_t k = 0; k < s.mask.size(); ++k) {
      if (s.mask[k]) pred.values[k] = sigmoid(logit(w, &s.features[k * kPickFeatures]));
    }
    total += bce_pick_loss(s.label, pred);
  }
  return total / static_cast<double>(samples.size());
}

std::array<double, kPickFeatures + 1> logistic_gradient(
    const std::array<double, kPickFeatures + 1>& w, std::span<const PickSample> samples) {
  std::array<double, kPickFeatures + 1> g{};
  if (samples.empty()) return g;
  for (const auto& s : samples) {
    const double scale = 1.0 / static_cast<double>(s.mask.size() * samples.size());
    for (std::size_t k = 0; k < s.mask.size(); ++k) {
      if (!s.mask[k]) continue;
      const double* f = &s.features[k * kPickFeatures];
      const double p = sigmoid(logit(w, f));
      // Clamped probabilities are constant in the weights.
      if (p <= kProbFloor || p >= 1.0 - kProbFloor) continue;
      const double d = (p - s.label.values[k]) * scale;
      g[0] += d;
      for (std::size_t j = 0; j < kPickFeatures; ++j) g[j + 1] += d * f[j];
    }
  }
  return g;
}

double logistic_gradient_check(const std::array<double, kPickFeatures + 1>& w,
                               std::span<const PickSample> samples) {
  constexpr double kStep = 1e-5;
  const auto g = logistic_gradient(w, samples);
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto up = w;
    auto down = w;
    up[i] += kStep;
    down[i] -= kStep;
    const double fd = (logistic_loss(up, samples) - logistic_loss(down, samples)) / (2.0 * kStep);
    const double denom = std::max({std::abs(g[i]), std::abs(fd), 1e-6});
    worst = std::max(worst, std::abs(g[i] - fd) / denom);
  }
  return worst;
}

PickScorer train_pick_scorer(std::span<const PickSample> samples, const PickTrainOptions& options) {
  PickScorer scorer;
  scorer.variant = ScorerVariant::TrainedLogistic;
  std::mt19937_64 rng(mix_seed(options.seed));
  std::normal_distribution<double> gauss(0.0, 0.01);
  for (double& w : scorer.weights) w = gauss(rng);
  for (int e = 0; e < options.epochs; ++e) {
    const auto g = logistic_gradient(scorer.weights, samples);
    for (std::size_t i = 0; i < g.size(); ++i) scorer.weights[i] -= options.learning_rate * g[i];
  }
  return scorer;
}

PickScorer train_pick_scorer(const Dataset& d, const PickTrainOptions& options) {
  std::vector<std::size_t> all(d.tuples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto samples = pick_samples(d, all);
  return train_pick_scorer(samples, options);
}

FoldAction apm_baseline_action(const EncodedDataset& enc, const EncoderModel& m,
                               const Observation& current, const Observation& subgoal) {
  const LatentVector zc = encode(m, current);
  const LatentVector zs = encode(m, subgoal);
  const LatentTuple* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& t : enc.tuples) {
    if (t.a != 1) continue;
    const double d = (t.z0 - zc).squaredNorm() + (t.z1 - zs).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = &t;
    }
  }
  if (!best) throw InsufficientPairs("action retrieval needs at least one action tuple");
  return best->u;
}

std::string flow_to_text(const FlowField& f) {
  std::ostringstream out;
  out.precision(9);
  out << f.resolution << '\n';
  for (int r = 0; r < f.resolution; ++r) {
    for (int c = 0; c < f.resolution; ++c) {
      const auto& v = f.flow[static_cast<std::size_t>(r) * f.resolution + c];
      out << (c ? " " : "") << v.d_row << ',' << v.d_col;
    }
    out << '\n';
  }
  return out.str();
}

std::string flow_to_color_wheel(const FlowField& f) {
  double peak = 0.0;
  for (std::size_t k = 0; k < f.flow.size(); ++k) {
    if (f.valid[k]) peak = std::max(peak, f.flow[k].magnitude());
  }
  std::ostringstream out;
  out << "P6\n" << f.resolution << ' ' << f.resolution << "\n255\n";
  for (std::size_t k = 0; k < f.flow.size(); ++k) {
    double rgb[3] = {0.0, 0.0, 0.0};
    if (f.valid[k] && peak > 0.0) {
      const double hue = (std::atan2(f.flow[k].d_row, f.flow[k].d_col) + std::numbers::pi) /
                         (2.0 * std::numbers::pi) * 6.0;
      const double value = f.flow[k].magnitude() / peak;
      const int sector = static_cast<int>(hue) % 6;
      const double frac = hue - std::floor(hue);
      const double rise = value * frac;
      const double fall = value * (1.0 - frac);
      const double table[6][3] = {{value, rise, 0}, {fall, value, 0}, {0, value, rise},
                                  {0, fall, value}, {rise, 0, value}, {value, 0, fall}};
      for (int ch = 0; ch < 3; ++ch) rgb[ch] = table[sector][ch];
    }
    for (double ch : rgb) out.put(static_cast<char>(std::lround(255.0 * ch)));
  }
  return out.str();
}

}  // namespace defnet
