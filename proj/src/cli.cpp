#include "defnet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "defnet/cloth_sim.hpp"
#include "defnet/data_gen.hpp"
#include "defnet/errors.hpp"
#include "defnet/executor.hpp"
#include "defnet/flow_action.hpp"
#include "defnet/io.hpp"
#include "defnet/latent_space.hpp"
#include "defnet/roadmap.hpp"

namespace defnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Splices config entries in as `--key=value` right after the subcommand so
/// that explicit flags, which come later, win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config.empty() || rest.empty()) return rest;
  std::vector<std::string> out{rest.front()};
  for (const auto& [key, value] : read_config(config)) out.push_back("--" + key + "=" + value);
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

struct Common {
  std::uint64_t seed = 0;
};

struct GenDataArgs {
  std::string out = "data.jsonl";
  std::string goals_dir = "goals";
  int variants = kScriptsPerTier;
  int perturbs = 2;
  int grid_w = 24;
  int grid_h = 24;
  double spacing = 0.01;
  int resolution = 64;
  double delta_move_mm = kDefaultDeltaMoveMm;
};

struct FitArgs {
  std::string data = "data.jsonl";
  std::string out = "model.json";
  std::string variant = "fitted-pca";
  int latent_dim = kDefaultLatentDim;
  int downsample = kDefaultDownsample;
  double alpha = 1.0;
  double margin = 0.0;
  int epochs = 200;
  double lr = 1e-4;
};

struct LsrArgs {
  std::string data = "data.jsonl";
  std::string model = "model.json";
  std::string out = "roadmap.json";
  std::string dot;
  double epsilon = -1.0;
};

struct EpisodeArgs {
  std::string roadmap = "roadmap.json";
  std::string start = "flat";
  std::string goal;
  std::string mode = "defnet";
  std::string modes = "defnet";
  std::string tiers = "1-4";
  std::string scorer = "geometric";
  std::string out;
  std::string trace;
  int seeds = 10;
  int max_iters = kDefaultMaxIters;
  double tau = -1.0;
  double grasp_sigma_mm = 0.0;
  double settle_sigma_mm = 0.0;
  bool replan_path = true;
};

void add_episode_options(CLI::App* app, EpisodeArgs& a) {
  app->add_option("--roadmap", a.roadmap, "Roadmap file");
  app->add_option("--max-iters", a.max_iters, "Action budget per episode")->check(CLI::PositiveNumber);
  app->add_option("--tau", a.tau, "Latent success radius (negative: half of epsilon)");
  app->add_option("--grasp-sigma-mm", a.grasp_sigma_mm, "Grasp noise std")->check(CLI::NonNegativeNumber);
  app->add_option("--settle-sigma-mm", a.settle_sigma_mm, "Settle noise std")->check(CLI::NonNegativeNumber);
  app->add_option("--scorer", a.scorer, "geometric or trained-logistic");
  app->add_option("--replan-path", a.replan_path, "Reseed path choice on every replan");
}

EpisodeConfig episode_config(const EpisodeArgs& a, std::uint64_t seed) {
  EpisodeConfig cfg;
  cfg.mode = exec_mode_from_string(a.mode);
  cfg.max_iters = a.max_iters;
  cfg.tau = a.tau;
  cfg.noise = {a.grasp_sigma_mm / 1000.0, a.settle_sigma_mm / 1000.0, seed};
  cfg.seed = seed;
  cfg.replan_path_each_iter = a.replan_path;
  return cfg;
}

Artifacts artifacts_for(const EpisodeArgs& a, std::uint64_t seed) {
  Artifacts art = load_artifacts(a.roadmap);
  if (scorer_variant_from_string(a.scorer) == ScorerVariant::TrainedLogistic) {
    art.scorer = train_pick_scorer(art.dataset, {.seed = seed});
  }
  return art;
}

ClothState start_state(const std::string& spec, const Dataset& d) {
  return spec == "flat" ? new_flat_cloth(d.cloth) : load_goal_state(spec);
}

std::string node_sequence(const std::vector<int>& nodes) {
  std::string s;
  for (std::size_t i = 0; i < nodes.size(); ++i) s += (i ? " -> " : "") + std::to_string(nodes[i]);
  return s;
}

int gen_data(const Common& c, const GenDataArgs& a, std::ostream& out) {
  CorpusOptions opt;
  opt.n_variants = a.variants;
  opt.perturbs_per_state = a.perturbs;
  opt.seed = c.seed;
  opt.cloth.grid_w = a.grid_w;
  opt.cloth.grid_h = a.grid_h;
  opt.cloth.spacing_m = a.spacing;
  opt.resolution = a.resolution;
  opt.delta_move_mm = a.delta_move_mm;
  opt.perturb_scale_m = a.delta_move_mm / 10.0 / 1000.0;
  const Dataset d = build_corpus(opt);
  save_dataset(d, a.out);
  int goals = 0;
  for (int tier = 1; tier <= 4; ++tier) {
    for (int v = 0; v < a.variants; ++v) {
      const FoldScript script = goal_library(tier, static_cast<std::uint64_t>(v), opt.cloth);
      const ClothState goal = rollout_scripted(script, opt.cloth, a.resolution, a.delta_move_mm).goal;
      save_goal(script, goal,
                (std::filesystem::path(a.goals_dir) /
                 ("tier" + std::to_string(tier) + "_" + std::to_string(v) + ".json"))
                    .string());
      ++goals;
    }
  }
  out << "wrote " << d.tuples.size() << " tuples to " << a.out << " and " << goals
      << " goals to " << a.goals_dir << "\n";
  return kExitOk;
}

int fit(const Common& c, const FitArgs& a, std::ostream& out) {
  const Dataset d = load_dataset(a.data);
  EncoderHyper h;
  h.latent_dim = a.latent_dim;
  h.downsample = a.downsample;
  h.alpha = a.alpha;
  h.margin = a.margin;
  h.epochs = a.epochs;
  h.learning_rate = a.lr;
  h.seed = c.seed;
  const EncoderModel m = fit_encoder(d, encoder_variant_from_string(a.variant), h);
  save_model(m, a.out);
  out << "fitted " << to_string(m.variant) << " encoder (latent " << m.latent_dim << ", margin "
      << m.margin << ") to " << a.out << "\n";
  return kExitOk;
}

int build(const LsrArgs& a, std::ostream& out) {
  const Dataset d = load_dataset(a.data);
  const EncoderModel m = load_model(a.model);
  const EncodedDataset enc = encode_dataset(m, d);
  const auto bank = make_bank(d, enc);
  const double eps = a.epsilon > 0.0 ? a.epsilon : tune_epsilon(enc);
  const Roadmap rm = build_lsr(enc, bank, eps);
  save_roadmap(rm, {a.data, a.model}, a.out);
  if (!a.dot.empty()) write_file_atomic(a.dot, to_dot(rm));
  out << "roadmap with " << rm.nodes.size() << " nodes and " << rm.edges.size()
      << " edges (epsilon " << eps << ") written to " << a.out << "\n";
  return kExitOk;
}

int plan_cmd(const Common& c, const EpisodeArgs& a, std::ostream& out) {
  const Artifacts art = load_artifacts(a.roadmap);
  const int r = art.dataset.resolution;
  const ClothState start = start_state(a.start, art.dataset);
  const ClothState goal = load_goal_state(a.goal);
  const Plan p = plan(art.roadmap, art.model, render(start, r), render(goal, r), c.seed);
  out << node_sequence(p.nodes) << "\n";
  return kExitOk;
}

int run_cmd(const Common& c, const EpisodeArgs& a, std::ostream& out) {
  const Artifacts art = artifacts_for(a, c.seed);
  const ClothState start = start_state(a.start, art.dataset);
  const ClothState goal = load_goal_state(a.goal);
  const EpisodeResult r = run_episode(episode_config(a, c.seed), start, goal, art);
  if (!a.trace.empty()) write_file_atomic(a.trace, trace_to_jsonl(r));
  char buf[160];
  std::snprintf(buf, sizeof buf, "mode=%s actions=%zu mpde_mm=%.6f miou=%.6f success=%d\n",
                a.mode.c_str(), r.n_actions, r.mpde_mm, r.miou, r.success ? 1 : 0);
  out << buf;
  return kExitOk;
}

int bench_cmd(const Common& c, const EpisodeArgs& a, std::ostream& out) {
  const Artifacts art = artifacts_for(a, c.seed);
  BenchOptions opt;
  opt.tiers = parse_int_list(a.tiers);
  opt.seeds_per_tier = a.seeds;
  opt.modes = parse_modes(a.modes);
  opt.episode = episode_config(a, c.seed);
  opt.master_seed = c.seed;
  const BenchReport report = run_bench(opt, art);
  if (!a.out.empty()) write_file_atomic(a.out, bench_to_csv(report));
  out << aggregates_to_text(report);
  return kExitOk;
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto dash = item.find('-', 1);
    try {
      if (dash == std::string::npos) {
        values.push_back(std::stoi(item));
      } else {
        const int lo = std::stoi(item.substr(0, dash));
        const int hi = std::stoi(item.substr(dash + 1));
        for (int v = lo; v <= hi; ++v) values.push_back(v);
      }
    } catch (const std::logic_error&) {
      throw InvalidTier("cannot parse list '" + text + "'");
    }
  }
  if (values.empty()) throw InvalidTier("empty list '" + text + "'");
  return values;
}

std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path + ": expected key = value", n);
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return entries;
}

int cli_main(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fabric folding planner: data generation, encoder fitting, roadmap building "
               "and closed-loop execution"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  GenDataArgs gen;
  FitArgs fit_args;
  LsrArgs lsr;
  EpisodeArgs ep;
  EpisodeArgs ab;
  ab.modes = "defnet,no_iim,single_step_flow,apm";
  ab.seeds = 50;
  ab.grasp_sigma_mm = kAblationGraspSigmaM * 1000.0;
  ab.settle_sigma_mm = kAblationSettleSigmaM * 1000.0;

  auto seeded = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Master seed");
    return sub;
  };

  auto* g = seeded(app.add_subcommand("gen-data", "Generate the scripted corpus and goal files"));
  g->add_option("--out", gen.out, "Dataset file");
  g->add_option("--goals-dir", gen.goals_dir, "Directory for goal files");
  g->add_option("--variants", gen.variants, "Rollouts per tier")->check(CLI::PositiveNumber);
  g->add_option("--perturbs", gen.perturbs, "No-action pairs per state")->check(CLI::NonNegativeNumber);
  g->add_option("--grid-w", gen.grid_w, "Particles along x");
  g->add_option("--grid-h", gen.grid_h, "Particles along y");
  g->add_option("--spacing", gen.spacing, "Particle spacing, meters");
  g->add_option("--resolution", gen.resolution, "Image resolution");
  g->add_option("--delta-move-mm", gen.delta_move_mm, "Action threshold");

  auto* f = seeded(app.add_subcommand("fit-encoder", "Fit the latent encoder"));
  f->add_option("--data", fit_args.data, "Dataset file");
  f->add_option("--out", fit_args.out, "Model file");
  f->add_option("--variant", fit_args.variant, "fitted-pca or linear-vae");
  f->add_option("--latent-dim", fit_args.latent_dim, "Latent dimension")->check(CLI::PositiveNumber);
  f->add_option("--downsample", fit_args.downsample, "Pooled grid size per channel")
      ->check(CLI::PositiveNumber);
  f->add_option("--alpha", fit_args.alpha, "Action-loss weight");
  f->add_option("--margin", fit_args.margin, "Action-pair margin (0: derived from data)");
  f->add_option("--epochs", fit_args.epochs, "Linear-VAE epochs");
  f->add_option("--lr", fit_args.lr, "Linear-VAE learning rate");

  auto* b = app.add_subcommand("build-lsr", "Build the latent space roadmap");
  b->add_option("--data", lsr.data, "Dataset file");
  b->add_option("--model", lsr.model, "Model file");
  b->add_option("--out", lsr.out, "Roadmap file");
  b->add_option("--dot", lsr.dot, "Optional Graphviz output");
  b->add_option("--epsilon", lsr.epsilon, "Clustering radius (non-positive: tuned)");

  auto* p = seeded(app.add_subcommand("plan", "Print a roadmap path between two states"));
  p->add_option("--roadmap", ep.roadmap, "Roadmap file");
  p->add_option("--start", ep.start, "'flat' or a goal file");
  p->add_option("--goal", ep.goal, "Goal file")->required();

  auto* r = seeded(app.add_subcommand("run", "Run one episode"));
  add_episode_options(r, ep);
  r->add_option("--start", ep.start, "'flat' or a goal file");
  r->add_option("--goal", ep.goal, "Goal file")->required();
  r->add_option("--mode", ep.mode, "defnet, no_iim, single_step_flow or apm");
  r->add_option("--trace", ep.trace, "Per-iteration JSON-lines trace");

  auto* be = seeded(app.add_subcommand("bench", "Run the tiered benchmark"));
  add_episode_options(be, ep);
  be->add_option("--tiers", ep.tiers, "Tier list, e.g. 1-4");
  be->add_option("--seeds", ep.seeds, "Goal seeds per tier")->check(CLI::PositiveNumber);
  be->add_option("--modes", ep.modes, "Comma-separated modes");
  be->add_option("--out", ep.out, "CSV output");

  auto* a = seeded(app.add_subcommand("ablate", "Benchmark every mode under fold noise"));
  add_episode_options(a, ab);
  a->add_option("--tiers", ab.tiers, "Tier list, e.g. 1-4");
  a->add_option("--seeds", ab.seeds, "Goal seeds per tier")->check(CLI::PositiveNumber);
  a->add_option("--modes", ab.modes, "Comma-separated modes");
  a->add_option("--out", ab.out, "CSV output");

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const ArtifactMissing& e) {
    err << "error: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitArtifact;
  }

  try {
    if (g->parsed()) return gen_data(common, gen, out);
    if (f->parsed()) return fit(common, fit_args, out);
    if (b->parsed()) return build(lsr, out);
    if (p->parsed()) return plan_cmd(common, ep, out);
    if (r->parsed()) return run_cmd(common, ep, out);
    if (be->parsed()) return bench_cmd(common, ep, out);
    if (a->parsed()) return bench_cmd(common, ab, out);
  } catch (const ArtifactMissing& e) {
    err << "error: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace defnet
