#include "defnet/executor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "defnet/errors.hpp"
#include "defnet/io.hpp"

namespace defnet {

namespace {

constexpr std::uint64_t kPathStream = 0x9a7e;

struct Episode {
  const EpisodeConfig& cfg;
  const Artifacts& art;
  ClothState current;
  EpisodeResult result;
  int resolution;

  void act(const FoldAction& u, const ClothState& target, std::size_t plan_length, int node) {
    NoiseParams noise = cfg.noise;
    noise.seed = mix_seed(cfg.noise.seed, result.actions.size());
    const FoldOutcome out = apply_fold(current, u, noise);
    current = out.state;
    result.actions.push_back(u);
    result.trace.push_back({plan_length, node, u, out.executed,
                            mean_particle_distance(current, target)});
  }

  bool budget_left() const { return static_cast<int>(result.actions.size()) < cfg.max_iters; }
};

double success_radius(const EpisodeConfig& cfg, const Roadmap& rm) {
  return cfg.tau >= 0.0 ? cfg.tau : rm.epsilon / 2.0;
}

void closed_loop(Episode& ep, const ClothState& goal, const LatentVector& z_goal, double tau) {
  const auto& art = ep.art;
  for (int iter = 0; ep.budget_left(); ++iter) {
    const Observation obs = render(ep.current, ep.resolution);
    const LatentVector z = encode(art.model, obs);
    const std::uint64_t path_seed =
        ep.cfg.replan_path_each_iter ? mix_seed(ep.cfg.seed, kPathStream, iter) : ep.cfg.seed;
    const Plan p = plan_between(art.roadmap, z, z_goal, path_seed);
    if (p.length() == 0 || (z - z_goal).norm() <= tau) return;
    const ClothState& subgoal = p.interior.empty() ? goal : p.interior.front();
    const int node = p.nodes[1];
    if (ep.cfg.mode == ExecMode::Apm) {
      const FoldAction u =
          apm_baseline_action(art.encoded, art.model, obs, render(subgoal, ep.resolution));
      ep.act(u, subgoal, p.length(), node);
      continue;
    }
    const auto proposed = propose_action(art.scorer, ep.current, subgoal, ep.resolution,
                                         art.dataset.delta_move_mm);
    if (!proposed) return;
    ep.act(proposed->action, subgoal, p.length(), node);
  }
}

void open_loop(Episode& ep, const ClothState& start, const ClothState& goal,
               const LatentVector& z_goal) {
  const auto& art = ep.art;
  const LatentVector z = encode(art.model, render(start, ep.resolution));
  const Plan p = plan_between(art.roadmap, z, z_goal, ep.cfg.seed);
  std::vector<const ClothState*> states{&start};
  for (const auto& s : p.interior) states.push_back(&s);
  if (p.length() > 0) states.push_back(&goal);
  for (std::size_t i = 0; i + 1 < states.size() && ep.budget_left(); ++i) {
    const auto proposed = propose_action(art.scorer, *states[i], *states[i + 1], ep.resolution,
                                         art.dataset.delta_move_mm);
    if (!proposed) continue;
    ep.act(proposed->action, *states[i + 1], p.length() - i, p.nodes[i + 1]);
  }
}

void flow_only(Episode& ep, const ClothState& goal) {
  while (ep.budget_left()) {
    const auto proposed = propose_action(ep.art.scorer, ep.current, goal, ep.resolution,
                                         ep.art.dataset.delta_move_mm);
    if (!proposed) return;
    ep.act(proposed->action, goal, 0, -1);
  }
}

}  // namespace

std::string to_string(ExecMode mode) {
  switch (mode) {
    case ExecMode::DeFNet: return "defnet";
    case ExecMode::NoIim: return "no_iim";
    case ExecMode::SingleStepFlow: return "single_step_flow";
    case ExecMode::Apm: return "apm";
  }
  return "?";
}

ExecMode exec_mode_from_string(const std::string& name) {
  for (ExecMode m : {ExecMode::DeFNet, ExecMode::NoIim, ExecMode::SingleStepFlow, ExecMode::Apm}) {
    if (to_string(m) == name) return m;
  }
  throw UnsupportedVariant("unknown mode '" + name + "'");
}

std::vector<ExecMode> parse_modes(const std::string& list) {
  std::vector<ExecMode> modes;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) modes.push_back(exec_mode_from_string(item));
  }
  if (modes.empty()) throw UnsupportedVariant("empty mode list");
  return modes;
}

Artifacts load_artifacts(const std::string& roadmap_path) {
  const RoadmapFileRefs refs = read_roadmap_refs(roadmap_path);
  Artifacts art;
  art.dataset = load_dataset(refs.dataset_path);
  art.model = load_model(refs.model_path);
  art.encoded = encode_dataset(art.model, art.dataset);
  art.bank = make_bank(art.dataset, art.encoded);
  art.roadmap = load_roadmap(roadmap_path, art.bank);
  return art;
}

EpisodeResult run_episode(const EpisodeConfig& cfg, const ClothState& start,
                          const ClothState& goal, const Artifacts& art) {
  if (cfg.max_iters < 1) throw InvalidAction("max_iters must be at least 1");
  Episode ep{cfg, art, start, {}, art.dataset.resolution};
  const Observation obs_goal = render(goal, ep.resolution);
  const LatentVector z_goal = encode(art.model, obs_goal);
  const double tau = success_radius(cfg, art.roadmap);
  try {
    switch (cfg.mode) {
      case ExecMode::DeFNet:
      case ExecMode::Apm: closed_loop(ep, goal, z_goal, tau); break;
      case ExecMode::NoIim: open_loop(ep, start, goal, z_goal); break;
      case ExecMode::SingleStepFlow: flow_only(ep, goal); break;
    }
  } catch (const NoPath&) {
    // The episode stops where it is and counts as a failure below.
  }
  if (static_cast<int>(ep.result.actions.size()) > cfg.max_iters) {
    throw std::logic_error("episode exceeded its iteration bound");
  }

  EpisodeResult& r = ep.result;
  r.final_state = ep.current;
  r.n_actions = r.actions.size();
  r.mpde_mm = mean_particle_distance(r.final_state, goal);
  const Observation obs_final = render(r.final_state, ep.resolution);
  r.miou = mask_iou(obs_final, obs_goal);
  const LatentVector z_final = encode(art.model, obs_final);
  r.success = (z_final - z_goal).norm() <= tau ||
              map_to_node(art.roadmap, z_final).node == map_to_node(art.roadmap, z_goal).node;
  return r;
}

ClothState replay_actions(const ClothState& start, const std::vector<FoldAction>& actions,
                          const NoiseParams& noise) {
  ClothState s = start;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    NoiseParams step = noise;
    step.seed = mix_seed(noise.seed, i);
    s = apply_fold(s, actions[i], step).state;
  }
  return s;
}

std::vector<BenchAggregate> BenchReport::aggregates() const {
  std::map<std::pair<int, int>, std::vector<const BenchRow*>> groups;
  for (const auto& row : rows) groups[{row.tier, static_cast<int>(row.mode)}].push_back(&row);
  std::vector<BenchAggregate> out;
  for (const auto& [key, members] : groups) {
    BenchAggregate a;
    a.tier = key.first;
    a.mode = static_cast<ExecMode>(key.second);
    a.count = members.size();
    const double n = static_cast<double>(a.count);
    for (const BenchRow* r : members) {
      a.mpde_mean += r->mpde_mm / n;
      a.miou_mean += r->miou / n;
      a.actions_mean += static_cast<double>(r->n_actions) / n;
      a.success_rate += (r->success ? 1.0 : 0.0) / n;
    }
    for (const BenchRow* r : members) {
      a.mpde_std += (r->mpde_mm - a.mpde_mean) * (r->mpde_mm - a.mpde_mean) / n;
      a.miou_std += (r->miou - a.miou_mean) * (r->miou - a.miou_mean) / n;
    }
    a.mpde_std = std::sqrt(a.mpde_std);
    a.miou_std = std::sqrt(a.miou_std);
    out.push_back(a);
  }
  return out;
}

BenchReport run_bench(const BenchOptions& options, const Artifacts& art) {
  BenchReport report;
  const ClothState flat = new_flat_cloth(art.dataset.cloth);
  for (int tier : options.tiers) {
    for (int s = 0; s < options.seeds_per_tier; ++s) {
      const auto seed = static_cast<std::uint64_t>(s);
      const FoldScript script = goal_library(tier, seed, art.dataset.cloth);
      const ClothState goal =
          rollout_scripted(script, art.dataset.cloth, art.dataset.resolution,
                           art.dataset.delta_move_mm)
              .goal;
      for (ExecMode mode : options.modes) {
        EpisodeConfig cfg = options.episode;
        cfg.mode = mode;
        cfg.seed = mix_seed(options.master_seed, tier, seed);
        cfg.noise.seed = mix_seed(options.master_seed, tier, seed, 1);
        const EpisodeResult r = run_episode(cfg, flat, goal, art);
        report.rows.push_back({tier, seed, mode, r.mpde_mm, r.miou, r.n_actions, r.success});
      }
    }
  }
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const BenchRow& a, const BenchRow& b) {
    return std::tie(a.tier, a.seed, a.mode) < std::tie(b.tier, b.seed, b.mode);
  });
  return report;
}

std::string bench_to_csv(const BenchReport& r) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  char buf[64];
  for (const auto& row : r.rows) {
    out << row.tier << ',' << row.seed << ',' << to_string(row.mode) << ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", row.mpde_mm, row.miou);
    out << buf << ',' << row.n_actions << ',' << (row.success ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string aggregates_to_text(const BenchReport& r) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-4s %-17s %5s %18s %16s %8s %8s\n", "tier", "mode", "n",
                "mpde_mm", "miou", "actions", "success");
  out << buf;
  for (const auto& a : r.aggregates()) {
    std::snprintf(buf, sizeof buf, "%-4d %-17s %5zu %8.3f +- %6.3f %6.3f +- %5.3f %8.2f %8.2f\n",
                  a.tier, to_string(a.mode).c_str(), a.count, a.mpde_mean, a.mpde_std,
                  a.miou_mean, a.miou_std, a.actions_mean, a.success_rate);
    out << buf;
  }
  return out.str();
}

std::string trace_to_jsonl(const EpisodeResult& r) {
  std::string out;
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const auto& t = r.trace[i];
    const nlohmann::json j{{"iter", i},
                           {"plan_length", t.plan_length},
                           {"node", t.node},
                           {"action", action_to_json(t.action)},
                           {"executed", t.executed},
                           {"deviation_mm", t.deviation_mm}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace defnet
