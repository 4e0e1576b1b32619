#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qdc/ablate.hpp"
#include "qdc/checkpoint.hpp"
#include "qdc/envs.hpp"
#include "qdc/errors.hpp"
#include "qdc/inference.hpp"
#include "qdc/svg.hpp"
#include "qdc/trainer.hpp"

namespace {

using namespace qdc;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int cmd_gen_data(const std::string& env_name, const std::string& policy,
                 int episodes, uint64_t seed, double noise,
                 const std::string& out_path) {
  auto env = make_env(env_name);
  const BehaviorPolicySpec spec = parse_policy_spec(policy, noise);
  Rng rng(seed);
  const std::vector<Trajectory> trajs =
      env->generate_dataset(spec, episodes, rng);
  save_dataset(trajs, out_path);

  double rmin = trajs[0].total_return(), rmax = rmin;
  for (const auto& t : trajs) {
    rmin = std::min(rmin, t.total_return());
    rmax = std::max(rmax, t.total_return());
  }
  std::cout << "wrote " << trajs.size() << " episodes to " << out_path
            << " (return min " << fmt(rmin) << ", max " << fmt(rmax) << ")\n";

  if (spec.kind == PolicyKind::stitch_mix) {
    const auto* maze = dynamic_cast<const GridMaze*>(env.get());
    if (maze) {
      const StitchCheck check = check_stitch_dataset(*maze, trajs);
      std::cout << "stitch check: no_single_optimal="
                << (check.no_single_optimal ? "yes" : "no")
                << " union_path_exists="
                << (check.union_path_exists ? "yes" : "no") << "\n";
      if (!check.ok()) {
        std::cerr << "stitch-mix dataset failed its precondition\n";
        return 1;
      }
    }
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, double* eta_override,
              uint64_t* seed_override, long* steps_override) {
  TrainConfig cfg = load_train_config(config_path);
  if (eta_override) cfg.eta = *eta_override;
  if (seed_override) cfg.seed = *seed_override;
  if (steps_override) cfg.total_steps = *steps_override;
  cfg.validate();

  const Dataset dataset = load_dataset(data_path);
  const TrainResult result = train(cfg, dataset);

  std::filesystem::create_directories(out_dir);
  const std::string ckpt_path = out_dir + "/checkpoint.json";
  const std::string metrics_path = out_dir + "/metrics.csv";
  save_checkpoint(ckpt_path, cfg, result.policy, result.ensemble,
                  result.stats);
  write_metrics_csv(result.metrics, metrics_path);
  std::cout << "trained " << cfg.total_steps << " steps; wrote " << ckpt_path
            << " and " << metrics_path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& env_name,
             int episodes, uint64_t seed, int candidates,
             const std::string& rtg_mode, const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto env = make_env(env_name);
  if (env->state_dim() != ckpt.state_dim ||
      env->action_dim() != ckpt.action_dim) {
    std::cerr << "checkpoint dims (" << ckpt.state_dim << ","
              << ckpt.action_dim << ") do not match env \"" << env_name
              << "\" (" << env->state_dim() << "," << env->action_dim()
              << ")\n";
    return 1;
  }

  InferenceConfig icfg;
  icfg.candidate_count = candidates;
  icfg.candidate_max_multiplier = ckpt.config.candidate_max_multiplier;
  icfg.selection = rtg_mode == "episode" ? RtgSelection::per_episode
                                         : RtgSelection::per_step;
  icfg.aggregate = parse_q_aggregate(ckpt.config.q_aggregate);
  icfg.stats = ckpt.stats;

  const EvalReport rep = evaluate_policy(ckpt.policy, ckpt.ensemble, *env,
                                         icfg, episodes, seed);
  nlohmann::json j;
  j["raw_return_mean"] = rep.raw_return_mean;
  j["raw_return_std"] = rep.raw_return_std;
  j["normalized_score_mean"] = rep.normalized_score_mean;
  j["normalized_score_std"] = rep.normalized_score_std;
  j["success_rate"] = rep.success_rate;
  const std::string text = j.dump(2);
  std::cout << text << "\n";
  if (!out_path.empty()) {
    const std::string tmp = out_path + ".tmp";
    {
      std::ofstream out(tmp);
      if (!out) throw ConfigError("cannot write report: " + out_path);
      out << text << "\n";
    }
    std::filesystem::rename(tmp, out_path);
  }
  return 0;
}

int cmd_ablate(const std::string& suite, const std::string& out_dir,
               uint64_t seed_base) {
  std::filesystem::create_directories(out_dir);
  AblateOptions opt;
  opt.seed_base = seed_base;
  opt.threads = env_thread_cap();

  if (suite == "stitching") {
    const auto rows = run_stitching_suite(opt);
    const std::string csv = out_dir + "/stitching.csv";
    write_stitching_csv(rows, csv);
    for (const auto& r : rows) {
      std::cout << r.method << " seed " << r.seed << ": score "
                << fmt(r.normalized_score) << ", success rate "
                << fmt(r.success_rate) << "\n";
    }
    std::cout << "wrote " << csv << "\n";
    return 0;
  }
  if (suite == "horizon") {
    const auto rows = run_horizon_suite(opt);
    const std::string csv = out_dir + "/horizon.csv";
    write_horizon_csv(rows, csv);
    for (const auto& r : rows) {
      std::cout << "K=" << r.K << " seed " << r.seed << ": score "
                << fmt(r.normalized_score) << "\n";
    }
    std::cout << "wrote " << csv << "\n";
    return 0;
  }
  throw ConfigError("unknown ablate suite: " + suite);
}

int cmd_plot(const std::string& in_path, const std::string& out_path,
             const std::string& x_col, const std::string& y_cols,
             const std::string& title) {
  std::ifstream in(in_path);
  if (!in) throw ConfigError("cannot open csv: " + in_path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty csv: " + in_path);

  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
  };
  const std::vector<std::string> header = split(line);
  auto col_index = [&](const std::string& name) {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw ConfigError("csv has no column \"" + name + "\"");
  };

  const int xi = col_index(x_col);
  std::vector<std::string> ys = split(y_cols);
  std::vector<SvgSeries> series;
  for (const auto& y : ys) series.push_back({y, {}, {}});
  std::vector<int> yidx;
  for (const auto& y : ys) yidx.push_back(col_index(y));

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    for (size_t s = 0; s < ys.size(); ++s) {
      series[s].x.push_back(std::stod(cells.at(static_cast<size_t>(xi))));
      series[s].y.push_back(
          std::stod(cells.at(static_cast<size_t>(yidx[s]))));
    }
  }
  write_svg_chart(out_path, series, title.empty() ? in_path : title, x_col,
                  ys.size() == 1 ? ys[0] : "value");
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Q-value regularized decision convformer toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
  std::string gen_env, gen_policy, gen_out;
  int gen_episodes = 100;
  uint64_t gen_seed = 0;
  double gen_noise = 0.05;
  gen->add_option("--env", gen_env, "built-in env name or maze JSON path")
      ->required();
  gen->add_option("--policy", gen_policy,
                  "random | noisy-expert | segment-a | segment-b | stitch-mix")
      ->required();
  gen->add_option("--episodes", gen_episodes, "episode count")->required();
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--noise", gen_noise, "per-step random-action probability");
  gen->add_option("--out", gen_out, "output JSON-Lines path")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a policy on a dataset");
  std::string tr_config, tr_data, tr_out;
  double tr_eta = 0.0;
  uint64_t tr_seed = 0;
  long tr_steps = 0;
  tr->add_option("--config", tr_config, "train config JSON")->required();
  tr->add_option("--data", tr_data, "dataset JSON-Lines path")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  auto* eta_opt = tr->add_option("--eta", tr_eta, "override config eta");
  auto* seed_opt = tr->add_option("--seed", tr_seed, "override config seed");
  auto* steps_opt =
      tr->add_option("--total-steps", tr_steps, "override config total_steps");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_env, ev_out, ev_rtg_mode = "per-step";
  int ev_episodes = 30, ev_candidates = 8;
  uint64_t ev_seed = 0;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--env", ev_env, "env name")->required();
  ev->add_option("--episodes", ev_episodes, "rollout count");
  ev->add_option("--seed", ev_seed, "rng seed");
  ev->add_option("--candidates", ev_candidates, "candidate rtg count");
  ev->add_option("--rtg-mode", ev_rtg_mode, "per-step | episode")
      ->check(CLI::IsMember({"per-step", "episode"}));
  ev->add_option("--out", ev_out, "optional JSON report path");

  // ablate
  auto* ab = app.add_subcommand("ablate", "run an ablation suite");
  std::string ab_suite, ab_out;
  uint64_t ab_seed_base = 0;
  ab->add_option("--suite", ab_suite, "stitching | horizon")
      ->required()
      ->check(CLI::IsMember({"stitching", "horizon"}));
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--seed-base", ab_seed_base, "base seed for all cells");

  // plot
  auto* pl = app.add_subcommand("plot", "render a CSV as an SVG line chart");
  std::string pl_in, pl_out, pl_x = "step", pl_y = "bc_loss", pl_title;
  pl->add_option("--in", pl_in, "input csv")->required();
  pl->add_option("--out", pl_out, "output svg")->required();
  pl->add_option("--x", pl_x, "x column");
  pl->add_option("--y", pl_y, "y column(s), comma separated");
  pl->add_option("--title", pl_title, "chart title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gen_env, gen_policy, gen_episodes, gen_seed,
                          gen_noise, gen_out);
    }
    if (tr->parsed()) {
      return cmd_train(tr_config, tr_data, tr_out,
                       eta_opt->count() ? &tr_eta : nullptr,
                       seed_opt->count() ? &tr_seed : nullptr,
                       steps_opt->count() ? &tr_steps : nullptr);
    }
    if (ev->parsed()) {
      return cmd_eval(ev_ckpt, ev_env, ev_episodes, ev_seed, ev_candidates,
                      ev_rtg_mode, ev_out);
    }
    if (ab->parsed()) return cmd_ablate(ab_suite, ab_out, ab_seed_base);
    if (pl->parsed()) return cmd_plot(pl_in, pl_out, pl_x, pl_y, pl_title);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
