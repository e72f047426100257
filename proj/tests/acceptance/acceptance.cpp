// Acceptance checks. `acceptance N` runs criterion N; no argument runs all.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "defnet/cli.hpp"
#include "defnet/errors.hpp"
#include "defnet/executor.hpp"

using namespace defnet;

namespace {

constexpr double kMaxRuntime1Sec = 60.0;
constexpr double kMaxMpdeSpacings = 2.0;
constexpr double kMinTier1Miou = 0.95;
constexpr int kAblationSeeds = 50;
constexpr double kAblationGraspMm = 5.0;
constexpr double kTier1AgreementMm = 0.5;
constexpr double kMaxRuntime3Sec = 600.0;
constexpr double kMaxFlowEpePx = 0.5;
constexpr double kGradTolerance = 1e-4;
constexpr int kGradInstances = 10;
constexpr double kAlphaZeroTolerance = 1e-12;
constexpr double kBceTolerance = 1e-9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

const Artifacts& artifacts() {
  static const Artifacts art = [] {
    Artifacts a;
    a.dataset = build_corpus({});
    a.model = fit_encoder(a.dataset, EncoderVariant::FittedPca);
    a.encoded = encode_dataset(a.model, a.dataset);
    a.bank = make_bank(a.dataset, a.encoded);
    a.roadmap = build_lsr(a.encoded, a.bank, tune_epsilon(a.encoded));
    return a;
  }();
  return art;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

BenchReport zero_noise_bench() {
  BenchOptions opt;
  opt.tiers = {1, 2, 3, 4};
  opt.seeds_per_tier = 10;
  return run_bench(opt, artifacts());
}

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const BenchReport r = zero_noise_bench();
  const double secs = seconds_since(t0);
  int wrong = 0;
  for (const auto& row : r.rows) wrong += row.n_actions != static_cast<std::size_t>(row.tier);
  std::string means;
  for (const auto& a : r.aggregates()) means += fmt(" %.1f", a.actions_mean);
  return {wrong == 0 && r.rows.size() == 40 && secs < kMaxRuntime1Sec,
          "mean actions per tier" + means + fmt(", %.0f mismatches, %.2f s", wrong, secs)};
}

Outcome criterion2() {
  const BenchReport r = zero_noise_bench();
  const double limit_mm = kMaxMpdeSpacings * artifacts().dataset.cloth.spacing_m * 1000.0;
  double worst = 0.0;
  for (const auto& row : r.rows) worst = std::max(worst, row.mpde_mm);
  double tier1_miou = 0.0;
  for (const auto& a : r.aggregates()) {
    if (a.tier == 1) tier1_miou = a.miou_mean;
  }
  return {worst < limit_mm && tier1_miou >= kMinTier1Miou,
          fmt("worst mpde %.3f mm (limit %.1f), tier-1 MIoU %.3f (min %.2f)", worst, limit_mm,
              tier1_miou, kMinTier1Miou)};
}

Outcome criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  BenchOptions opt;
  opt.tiers = {1, 2, 3, 4};
  opt.seeds_per_tier = kAblationSeeds;
  opt.modes = {ExecMode::DeFNet, ExecMode::NoIim, ExecMode::SingleStepFlow, ExecMode::Apm};
  opt.episode.noise = {kAblationGraspMm / 1000.0, kAblationSettleSigmaM, 0};
  const BenchReport r = run_bench(opt, artifacts());
  const double secs = seconds_since(t0);

  double pooled[4] = {0, 0, 0, 0};
  double count[4] = {0, 0, 0, 0};
  double tier1[4] = {0, 0, 0, 0};
  for (const auto& row : r.rows) {
    const auto m = static_cast<std::size_t>(row.mode);
    if (row.tier == 1) {
      tier1[m] += row.mpde_mm / kAblationSeeds;
    } else {
      pooled[m] += row.mpde_mm;
      count[m] += 1;
    }
  }
  for (int m = 0; m < 4; ++m) pooled[m] /= count[m];
  const double d = pooled[0], n = pooled[1], s = pooled[2], a = pooled[3];
  const bool order = d < n && n < s;
  const bool vs_apm = d < a;
  const double spread = std::max({tier1[0], tier1[1], tier1[2]}) -
                        std::min({tier1[0], tier1[1], tier1[2]});
  const bool agree = spread <= kTier1AgreementMm;
  std::string detail = fmt("tiers 2-4 mean mpde: defnet %.3f, no_iim %.3f, single_step_flow %.3f, ", d,
                           n, s) +
                       fmt("apm %.3f mm; ", a) +
                       fmt("tier-1 defnet/no_iim/single_step_flow %.3f/%.3f/%.3f mm; ", tier1[0],
                           tier1[1], tier1[2]) +
                       "ordering " + (order ? "ok" : "violated") + ", defnet<apm " +
                       (vs_apm ? "ok" : "violated") + ", tier-1 agreement " +
                       (agree ? "ok" : "violated") + fmt(", %.1f s", secs);
  return {order && vs_apm && agree && secs < kMaxRuntime3Sec, detail};
}

Vec2 reflect(const Vec2& q, const Vec2& g, const Vec2& p) {
  const double len = std::hypot(p.x - g.x, p.y - g.y);
  const double nx = (p.x - g.x) / len;
  const double ny = (p.y - g.y) / len;
  const double s = (q.x - 0.5 * (g.x + p.x)) * nx + (q.y - 0.5 * (g.y + p.y)) * ny;
  return s < -1e-9 ? Vec2{q.x - 2 * s * nx, q.y - 2 * s * ny} : q;
}

Outcome criterion4() {
  const int res = 64;
  const double pix = kWorkspaceSize / res;
  double worst = 0.0;
  int folds = 0;
  bool self_zero = true;
  for (int tier = 1; tier <= 4; ++tier) {
    for (std::uint64_t v = 0; v < kScriptsPerTier; ++v) {
      for (const auto& t : rollout_scripted(goal_library(tier, v)).tuples) {
        const FlowField f = oracle_flow(t.state0, t.state1, res);
        FlowField closed = f;
        const auto owner = topmost_particles(t.state0, res);
        for (std::size_t k = 0; k < owner.size(); ++k) {
          if (owner[k] < 0) continue;
          const Vec2& q = t.state0.positions[static_cast<std::size_t>(owner[k])];
          const Vec2 r = reflect(q, t.u.grasp, t.u.place);
          closed.flow[k] = {(r.y - q.y) / pix, (r.x - q.x) / pix};
        }
        worst = std::max(worst, epe(f, closed));
        self_zero = self_zero && epe(f, f) == 0.0;
        ++folds;
      }
    }
  }
  return {worst < kMaxFlowEpePx && self_zero,
          fmt("%.0f grammar folds, worst EPE %.3g px (limit %.1f), EPE(f,f) ", folds, worst,
              kMaxFlowEpePx) +
              (self_zero ? "= 0" : "!= 0")};
}

Outcome criterion5() {
  const Artifacts& art = artifacts();
  const Roadmap& rm = art.roadmap;
  const TransitionGraph g = transition_graph(art.dataset);

  std::vector<int> state_of(art.bank.size());
  for (std::size_t t = 0; t < art.dataset.tuples.size(); ++t) {
    state_of[2 * t] = art.dataset.tuples[t].state_id0;
    state_of[2 * t + 1] = art.dataset.tuples[t].state_id1;
  }
  bool partition = rm.nodes.size() == static_cast<std::size_t>(g.num_states);
  std::vector<int> node_for_state(static_cast<std::size_t>(g.num_states), -1);
  for (std::size_t i = 0; i < state_of.size(); ++i) {
    int& slot = node_for_state[static_cast<std::size_t>(state_of[i])];
    if (slot < 0) slot = rm.node_of[i];
    partition = partition && slot == rm.node_of[i];
  }
  std::set<int> distinct(node_for_state.begin(), node_for_state.end());
  partition = partition && distinct.size() == node_for_state.size();

  std::set<std::pair<int, int>> expected, witnessed;
  for (const auto& [u, v] : g.edges) {
    expected.insert({node_for_state[static_cast<std::size_t>(u)],
                     node_for_state[static_cast<std::size_t>(v)]});
  }
  for (const auto& e : rm.edges) {
    for (const auto& w : e.actions) witnessed.insert({w.from, w.to});
  }
  const bool edges = expected == witnessed;

  const int n = static_cast<int>(rm.nodes.size());
  const auto succ = rm.successors();
  constexpr int inf = 1 << 20;
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, inf));
  for (int i = 0; i < n; ++i) {
    dist[i][i] = 0;
    for (int j : succ[static_cast<std::size_t>(i)]) dist[i][j] = 1;
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) dist[i][j] = std::min(dist[i][j], dist[i][k] + dist[k][j]);
    }
  }
  bool lengths = true;
  for (int s = 0; s < n; ++s) {
    for (int t = 0; t < n; ++t) {
      try {
        const auto paths = all_shortest_paths(rm, s, t);
        lengths = lengths && static_cast<int>(paths.front().size()) - 1 == dist[s][t];
      } catch (const NoPath&) {
        lengths = lengths && dist[s][t] == inf;
      }
    }
  }

  const int flat = map_to_node(rm, encode(art.model, render(new_flat_cloth(art.dataset.cloth))))
                       .node;
  bool enumeration = true;
  int pairs = 0;
  for (int t = 0; t < n; ++t) {
    if (dist[flat][t] == inf) continue;
    std::set<std::vector<int>> brute;
    std::vector<int> path{flat};
    std::function<void()> walk = [&] {
      if (static_cast<int>(path.size()) == dist[flat][t] + 1) {
        if (path.back() == t) brute.insert(path);
        return;
      }
      for (int v : succ[static_cast<std::size_t>(path.back())]) {
        path.push_back(v);
        walk();
        path.pop_back();
      }
    };
    walk();
    const auto got = all_shortest_paths(rm, flat, t);
    enumeration = enumeration && std::set<std::vector<int>>(got.begin(), got.end()) == brute;
    ++pairs;
  }
  return {partition && edges && lengths && enumeration,
          fmt("%.0f nodes vs %.0f states, %.0f edges; ", n, g.num_states, witnessed.size()) +
              "partition " + (partition ? "ok" : "differs") + ", edges " +
              (edges ? "ok" : "differ") + ", Floyd-Warshall " + (lengths ? "ok" : "differs") +
              fmt(", enumeration over %.0f flat->goal pairs ", pairs) +
              (enumeration ? "ok" : "differs")};
}

Outcome criterion6() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const InputSpec spec{64, 4};

  double worst_vae = 0.0;
  double worst_alpha = 0.0;
  for (int i = 0; i < kGradInstances; ++i) {
    EncoderModel m = init_linear_vae(spec, 3, 0.5 + u(rng), 0.5 + u(rng), 0.3,
                                     static_cast<std::uint64_t>(i));
    std::vector<PairSample> batch;
    for (int b = 0; b < 4; ++b) {
      PairSample p{Eigen::VectorXd(spec.dim()), Eigen::VectorXd(spec.dim()), b % 2};
      for (int k = 0; k < spec.dim(); ++k) {
        p.x1[k] = u(rng);
        p.x2[k] = u(rng);
      }
      batch.push_back(p);
    }
    worst_vae = std::max(worst_vae, gradient_check(m, batch));
    m.alpha = 0.0;
    double vae_mean = 0.0;
    for (const auto& p : batch) vae_mean += 0.5 * (vae_term(m, p.x1) + vae_term(m, p.x2));
    vae_mean /= static_cast<double>(batch.size());
    worst_alpha = std::max(worst_alpha, std::abs(batch_loss(m, batch) - vae_mean));
  }

  const Dataset& d = artifacts().dataset;
  std::vector<std::size_t> actions;
  for (std::size_t i = 0; i < d.tuples.size(); ++i) {
    if (d.tuples[i].a == 1) actions.push_back(i);
  }
  double worst_logistic = 0.0;
  for (int i = 0; i < kGradInstances; ++i) {
    std::vector<std::size_t> pick;
    for (int k = 0; k < 3; ++k) pick.push_back(actions[rng() % actions.size()]);
    const auto samples = pick_samples(d, pick);
    std::array<double, kPickFeatures + 1> w{};
    for (double& v : w) v = gauss(rng);
    worst_logistic = std::max(worst_logistic, logistic_gradient_check(w, samples));
  }

  Heatmap truth{64, std::vector<double>(64 * 64, 0.0)};
  truth.values[100] = 1.0;
  const Heatmap half{64, std::vector<double>(64 * 64, 0.5)};
  const double bce_err = std::abs(bce_pick_loss(truth, half) - std::log(2.0));

  return {worst_vae < kGradTolerance && worst_logistic < kGradTolerance &&
              worst_alpha <= kAlphaZeroTolerance && bce_err <= kBceTolerance,
          fmt("vae grad %.2e, logistic grad %.2e, alpha=0 gap %.2e, BCE-ln2 %.2e", worst_vae,
              worst_logistic, worst_alpha, bce_err)};
}

Outcome criterion7() {
  const EncodedDataset& enc = artifacts().encoded;
  double min_action = 1e300;
  double max_still = 0.0;
  for (const auto& t : enc.tuples) {
    const double dz = (t.z0 - t.z1).norm();
    if (t.a == 1) min_action = std::min(min_action, dz);
    else max_still = std::max(max_still, dz);
  }
  const double eps = tune_epsilon(enc);
  bool builds = true;
  try {
    build_lsr(enc, artifacts().bank, eps);
  } catch (const EpsilonTooLarge&) {
    builds = false;
  }
  return {min_action > max_still && builds,
          fmt("min action distance %.4f, max no-action distance %.4f, epsilon %.4f, ", min_action,
              max_still, eps) +
              (builds ? "roadmap builds" : "EpsilonTooLarge")};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs the CLI pipeline into `dir` and returns the produced files' bytes.
std::vector<std::string> pipeline(const std::filesystem::path& dir) {
  const auto f = [&](const char* name) { return (dir / name).string(); };
  std::ostringstream sink;
  const std::vector<std::vector<std::string>> steps{
      {"gen-data", "--seed", "7", "--out", f("data.jsonl"), "--goals-dir", f("goals")},
      {"fit-encoder", "--seed", "7", "--data", f("data.jsonl"), "--out", f("model.json")},
      {"build-lsr", "--data", f("data.jsonl"), "--model", f("model.json"), "--out",
       f("roadmap.json")},
      {"bench", "--seed", "7", "--roadmap", f("roadmap.json"), "--out", f("bench.csv")},
      {"ablate", "--seed", "7", "--roadmap", f("roadmap.json"), "--seeds", "5", "--out",
       f("ablate.csv")},
  };
  for (const auto& args : steps) {
    if (cli_main(args, sink, sink) != kExitOk) throw std::runtime_error("step failed: " + args[0]);
  }
  return {slurp(f("data.jsonl")), slurp(f("model.json")), slurp(f("roadmap.json")),
          slurp(f("bench.csv")), slurp(f("ablate.csv"))};
}

Outcome criterion8() {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("defnet_acceptance_" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(dir);
  const auto first = pipeline(dir);
  const auto second = pipeline(dir);
  std::filesystem::remove_all(dir);
  int same = 0;
  for (std::size_t i = 0; i < first.size(); ++i) same += first[i] == second[i] && !first[i].empty();
  return {same == static_cast<int>(first.size()),
          fmt("%.0f of %.0f artifacts byte-identical (dataset, model, roadmap, bench CSV, "
              "ablation CSV)",
              same, first.size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3,
                                                       criterion4, criterion5, criterion6,
                                                       criterion7, criterion8};
  std::vector<int> which;
  if (argc > 1) {
    const int k = std::atoi(argv[1]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: acceptance [1-%zu]\n", criteria.size());
      return 2;
    }
    which.push_back(k);
  } else {
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) which.push_back(k);
  }
  int failed = 0;
  for (int k : which) {
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(k - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %d: %s (%s)\n", k, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
