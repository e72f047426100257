#include "defnet/data_gen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <random>
#include <sstream>

#include <json.hpp>

#include "defnet/errors.hpp"
#include "defnet/io.hpp"

namespace defnet {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<FoldKind, const char*>, 12> kFoldNames{{
    {FoldKind::HalfLeft, "half_left"},
    {FoldKind::HalfRight, "half_right"},
    {FoldKind::HalfBottom, "half_bottom"},
    {FoldKind::HalfTop, "half_top"},
    {FoldKind::QuarterLeft, "quarter_left"},
    {FoldKind::QuarterRight, "quarter_right"},
    {FoldKind::QuarterBottom, "quarter_bottom"},
    {FoldKind::QuarterTop, "quarter_top"},
    {FoldKind::DiagonalBottomLeft, "diagonal_bottom_left"},
    {FoldKind::DiagonalBottomRight, "diagonal_bottom_right"},
    {FoldKind::DiagonalTopLeft, "diagonal_top_left"},
    {FoldKind::DiagonalTopRight, "diagonal_top_right"},
}};

struct Box {
  double x0, x1, y0, y1;
  int cols, rows;
};

Box footprint(const ClothState& s) {
  Box b{s.positions[0].x, s.positions[0].x, s.positions[0].y, s.positions[0].y, 0, 0};
  for (const auto& p : s.positions) {
    b.x0 = std::min(b.x0, p.x);
    b.x1 = std::max(b.x1, p.x);
    b.y0 = std::min(b.y0, p.y);
    b.y1 = std::max(b.y1, p.y);
  }
  b.cols = static_cast<int>(std::lround((b.x1 - b.x0) / s.spacing_m)) + 1;
  b.rows = static_cast<int>(std::lround((b.y1 - b.y0) / s.spacing_m)) + 1;
  return b;
}

using L = FoldKind;

// Scripts per tier. Prefix states of different scripts are either identical
// or render differently, so every scripted state is recoverable from an
// observation.
const std::vector<std::vector<FoldKind>>& scripts_for_tier(int tier) {
  static const std::array<std::vector<std::vector<FoldKind>>, 4> table{{
      {{L::HalfLeft}, {L::HalfRight}, {L::HalfBottom}, {L::HalfTop}},
      {{L::HalfLeft, L::HalfBottom},
       {L::HalfRight, L::HalfTop},
       {L::HalfBottom, L::HalfRight},
       {L::HalfTop, L::HalfLeft}},
      {{L::HalfLeft, L::HalfBottom, L::DiagonalBottomLeft},
       {L::HalfRight, L::HalfTop, L::DiagonalTopRight},
       {L::QuarterLeft, L::HalfBottom, L::HalfLeft},
       {L::QuarterRight, L::HalfTop, L::HalfRight}},
      {{L::HalfLeft, L::HalfBottom, L::HalfLeft, L::HalfBottom},
       {L::HalfRight, L::HalfTop, L::HalfRight, L::HalfTop},
       {L::HalfBottom, L::HalfRight, L::HalfBottom, L::HalfRight},
       {L::HalfTop, L::HalfLeft, L::HalfTop, L::HalfLeft}},
  }};
  if (tier < 1 || tier > 4) {
    throw InvalidTier("tier must be in 1..4, got " + std::to_string(tier));
  }
  return table[static_cast<std::size_t>(tier - 1)];
}

ClothState jitter(const ClothState& s, double scale, std::mt19937_64& rng) {
  ClothState out = s;
  if (scale <= 0.0) return out;
  std::normal_distribution<double> gauss(0.0, scale);
  for (auto& p : out.positions) {
    p.x += gauss(rng);
    p.y += gauss(rng);
  }
  return out;
}

int action_flag(const ClothState& s0, const ClothState& s1, double delta_move_mm) {
  return max_particle_movement(s0, s1) > delta_move_mm ? 1 : 0;
}

}  // namespace

std::string to_string(FoldKind kind) {
  for (const auto& [k, name] : kFoldNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

FoldKind fold_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kFoldNames) {
    if (name == n) return k;
  }
  throw FormatError("unknown fold kind '" + name + "'");
}

FoldAction grammar_action(const ClothState& state, FoldKind kind) {
  const Box b = footprint(state);
  const double s = state.spacing_m;
  const double xc = 0.5 * (b.x0 + b.x1);
  const double yc = 0.5 * (b.y0 + b.y1);
  auto quarter = [](int n) {
    if (n % 4 != 0) {
      throw InvalidAction("quarter fold needs a multiple of 4 columns, got " +
                          std::to_string(n));
    }
    return 2 * (n / 4) - 1;
  };
  auto square = [&b]() {
    if (b.cols != b.rows) throw InvalidAction("diagonal fold needs a square footprint");
  };
  switch (kind) {
    case L::HalfLeft: return {{b.x0, yc}, {b.x1, yc}};
    case L::HalfRight: return {{b.x1, yc}, {b.x0, yc}};
    case L::HalfBottom: return {{xc, b.y0}, {xc, b.y1}};
    case L::HalfTop: return {{xc, b.y1}, {xc, b.y0}};
    case L::QuarterLeft: return {{b.x0, yc}, {b.x0 + quarter(b.cols) * s, yc}};
    case L::QuarterRight: return {{b.x1, yc}, {b.x1 - quarter(b.cols) * s, yc}};
    case L::QuarterBottom: return {{xc, b.y0}, {xc, b.y0 + quarter(b.rows) * s}};
    case L::QuarterTop: return {{xc, b.y1}, {xc, b.y1 - quarter(b.rows) * s}};
    case L::DiagonalBottomLeft: square(); return {{b.x0, b.y0}, {b.x1, b.y1}};
    case L::DiagonalBottomRight: square(); return {{b.x1, b.y0}, {b.x0, b.y1}};
    case L::DiagonalTopLeft: square(); return {{b.x0, b.y1}, {b.x1, b.y0}};
    case L::DiagonalTopRight: square(); return {{b.x1, b.y1}, {b.x0, b.y0}};
  }
  throw InvalidAction("unknown fold kind");
}

FoldScript goal_library(int tier, std::uint64_t variant_seed, const ClothConfig& cloth) {
  const auto& scripts = scripts_for_tier(tier);
  FoldScript script;
  script.tier = tier;
  script.variant_seed = variant_seed;
  script.kinds = scripts[variant_seed % scripts.size()];
  ClothState state = new_flat_cloth(cloth);
  for (FoldKind kind : script.kinds) {
    const FoldAction action = grammar_action(state, kind);
    script.folds.push_back(action);
    state = apply_fold(state, action).state;
  }
  return script;
}

TransitionTuple make_tuple(ClothState state0, ClothState state1, int a,
                           const FoldAction& u, int resolution) {
  TransitionTuple t;
  t.obs0 = render(state0, resolution);
  t.obs1 = render(state1, resolution);
  t.state0 = std::move(state0);
  t.state1 = std::move(state1);
  t.a = a;
  t.u = u;
  return t;
}

Rollout rollout_scripted(const FoldScript& script, const ClothConfig& cloth,
                         int resolution, double delta_move_mm) {
  if (script.tier < 1 || script.tier > 4 ||
      script.folds.size() != static_cast<std::size_t>(script.tier)) {
    throw InvalidTier("script length must equal its tier");
  }
  Rollout out;
  ClothState state = new_flat_cloth(cloth);
  for (const auto& fold : script.folds) {
    FoldOutcome next = apply_fold(state, fold);
    if (!next.executed) throw InvalidAction("scripted fold missed the cloth");
    const int a = action_flag(state, next.state, delta_move_mm);
    out.tuples.push_back(make_tuple(state, next.state, a, fold, resolution));
    state = std::move(next.state);
  }
  out.goal = std::move(state);
  return out;
}

TransitionTuple make_no_action_pair(const ClothState& state, double perturb_scale_m,
                                    std::uint64_t seed, double delta_move_mm,
                                    int resolution) {
  std::mt19937_64 rng(mix_seed(seed));
  const Vec2 c = state.centroid();
  const FoldAction null_action{c, c};
  for (int attempt = 0; attempt < 100; ++attempt) {
    ClothState moved = jitter(state, perturb_scale_m, rng);
    if (max_particle_movement(state, moved) <= delta_move_mm) {
      return make_tuple(state, std::move(moved), 0, null_action, resolution);
    }
  }
  throw PerturbTooLarge("perturbation scale " + std::to_string(perturb_scale_m) +
                        " m cannot stay within " + std::to_string(delta_move_mm) +
                        " mm after 100 resamples");
}

Dataset build_corpus(const CorpusOptions& options) {
  if (options.n_variants < 1) throw InvalidTier("corpus needs at least one variant");
  Dataset d;
  d.delta_move_mm = options.delta_move_mm;
  d.seed = options.seed;
  d.cloth = options.cloth;
  d.resolution = options.resolution;
  d.perturb_scale_m = options.perturb_scale_m;
  d.n_variants = options.n_variants;
  d.perturbs_per_state = options.perturbs_per_state;

  std::vector<ClothState> distinct;
  auto id_of = [&distinct](const ClothState& s) {
    for (std::size_t i = 0; i < distinct.size(); ++i) {
      if (nearly_equal(distinct[i], s)) return static_cast<int>(i);
    }
    distinct.push_back(s);
    return static_cast<int>(distinct.size() - 1);
  };
  id_of(new_flat_cloth(options.cloth));

  for (int tier = 1; tier <= 4; ++tier) {
    for (int v = 0; v < options.n_variants; ++v) {
      const FoldScript script = goal_library(tier, static_cast<std::uint64_t>(v), options.cloth);
      Rollout r = rollout_scripted(script, options.cloth, options.resolution,
                                   options.delta_move_mm);
      for (auto& t : r.tuples) {
        t.state_id0 = id_of(t.state0);
        t.state_id1 = id_of(t.state1);
        d.tuples.push_back(std::move(t));
      }
    }
  }

  for (std::size_t id = 0; id < distinct.size(); ++id) {
    for (int j = 0; j < options.perturbs_per_state; ++j) {
      TransitionTuple t = make_no_action_pair(
          distinct[id], options.perturb_scale_m, mix_seed(options.seed, id, j),
          options.delta_move_mm, options.resolution);
      t.state_id0 = t.state_id1 = static_cast<int>(id);
      d.tuples.push_back(std::move(t));
    }
  }
  return d;
}

std::string serialize_dataset(const Dataset& d) {
  std::ostringstream out;
  const json header{{"version", kDatasetVersion},
                    {"cloth", cloth_config_to_json(d.cloth)},
                    {"delta_move_mm", d.delta_move_mm},
                    {"seed", d.seed},
                    {"resolution", d.resolution},
                    {"perturb_scale_m", d.perturb_scale_m},
                    {"n_variants", d.n_variants},
                    {"perturbs_per_state", d.perturbs_per_state},
                    {"count", d.tuples.size()}};
  out << header.dump() << '\n';
  for (const auto& t : d.tuples) {
    const json rec{{"state0", state_to_json(t.state0)},
                   {"state1", state_to_json(t.state1)},
                   {"a", t.a},
                   {"u", action_to_json(t.u)},
                   {"id0", t.state_id0},
                   {"id1", t.state_id1}};
    out << rec.dump() << '\n';
  }
  return out.str();
}

void save_dataset(const Dataset& d, const std::string& path) {
  write_file_atomic(path, serialize_dataset(d));
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  Dataset d;
  std::size_t expected = 0;

  if (!std::getline(in, line)) throw FormatError("empty dataset file", 1);
  ++line_no;
  try {
    const json header = json::parse(line);
    const int version = header.at("version").get<int>();
    if (version != kDatasetVersion) {
      throw FormatError("unsupported dataset version " + std::to_string(version) +
                            " (expected " + std::to_string(kDatasetVersion) + ")",
                        line_no);
    }
    d.cloth = cloth_config_from_json(header.at("cloth"));
    d.delta_move_mm = header.at("delta_move_mm").get<double>();
    d.seed = header.at("seed").get<std::uint64_t>();
    d.resolution = header.at("resolution").get<int>();
    d.perturb_scale_m = header.at("perturb_scale_m").get<double>();
    d.n_variants = header.at("n_variants").get<int>();
    d.perturbs_per_state = header.at("perturbs_per_state").get<int>();
    expected = header.at("count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad dataset header: ") + e.what(), line_no);
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      ClothState s0 = state_from_json(rec.at("state0"));
      ClothState s1 = state_from_json(rec.at("state1"));
      TransitionTuple t = make_tuple(std::move(s0), std::move(s1), rec.at("a").get<int>(),
                                     action_from_json(rec.at("u")), d.resolution);
      t.state_id0 = rec.at("id0").get<int>();
      t.state_id1 = rec.at("id1").get<int>();
      if (action_flag(t.state0, t.state1, d.delta_move_mm) != t.a) {
        throw FormatError("action flag contradicts particle movement", line_no);
      }
      d.tuples.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw FormatError(std::string("bad tuple record: ") + e.what(), line_no);
    } catch (const FormatError& e) {
      if (e.line() >= 0) throw;
      throw FormatError(e.what(), line_no);
    } catch (const Error& e) {
      throw FormatError(e.what(), line_no);
    }
  }
  if (d.tuples.size() != expected) {
    throw FormatError("truncated dataset: header promises " + std::to_string(expected) +
                          " tuples, found " + std::to_string(d.tuples.size()),
                      line_no);
  }
  return d;
}

Dataset load_dataset(const std::string& path) { return parse_dataset(read_file(path)); }

TransitionGraph transition_graph(const Dataset& d) {
  TransitionGraph g;
  for (const auto& t : d.tuples) {
    g.num_states = std::max({g.num_states, t.state_id0 + 1, t.state_id1 + 1});
  }
  g.states.resize(static_cast<std::size_t>(g.num_states));
  std::vector<bool> seen(g.states.size(), false);
  auto record = [&](int id, const ClothState& s) {
    if (id >= 0 && !seen[static_cast<std::size_t>(id)]) {
      seen[static_cast<std::size_t>(id)] = true;
      g.states[static_cast<std::size_t>(id)] = s;
    }
  };
  for (const auto& t : d.tuples) {
    // state0 of every tuple and state1 of action tuples are unperturbed.
    record(t.state_id0, t.state0);
    if (t.a == 1) {
      record(t.state_id1, t.state1);
      g.edges.insert({t.state_id0, t.state_id1});
    }
  }
  return g;
}

std::vector<int> bfs_hops(const TransitionGraph& g, int source) {
  std::vector<int> hops(static_cast<std::size_t>(g.num_states), -1);
  std::queue<int> frontier;
  hops[static_cast<std::size_t>(source)] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (auto it = g.edges.lower_bound({u, -1}); it != g.edges.end() && it->first == u; ++it) {
      auto& h = hops[static_cast<std::size_t>(it->second)];
      if (h < 0) {
        h = hops[static_cast<std::size_t>(u)] + 1;
        frontier.push(it->second);
      }
    }
  }
  return hops;
}

void save_goal(const FoldScript& script, const ClothState& goal, const std::string& path) {
  json kinds = json::array();
  json actions = json::array();
  for (std::size_t i = 0; i < script.kinds.size(); ++i) {
    kinds.push_back(to_string(script.kinds[i]));
    actions.push_back(action_to_json(script.folds[i]));
  }
  const json j{{"version", kDatasetVersion}, {"tier", script.tier},
               {"seed", script.variant_seed}, {"script", kinds},
               {"actions", actions},         {"state", state_to_json(goal)}};
  write_file_atomic(path, j.dump() + "\n");
}

ClothState load_goal_state(const std::string& path) {
  const std::string text = read_file(path);
  try {
    const json j = json::parse(text);
    const int version = j.at("version").get<int>();
    if (version != kDatasetVersion) {
      throw FormatError("unsupported goal file version " + std::to_string(version));
    }
    return state_from_json(j.at("state"));
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace defnet
