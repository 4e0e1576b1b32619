#include "qdc/ablate.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include "qdc/ablate.hpp"
#include "qdc/envs.hpp"
#include "qdc/errors.hpp"
#include "qdc/inference.hpp"

namespace qdc {

namespace {

constexpr const char* kStitchEnv = "maze7x7-umaze";
constexpr int kStitchEpisodes = 120;
constexpr double kStitchNoise = 0.05;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Runs independent jobs on up to `threads` workers; job i writes slot i.
void run_cells(int n, int threads, const std::function<void(int)>& job) {
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min(threads, n);
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) job(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

int env_thread_cap() {
  const char* v = std::getenv("QDC_THREADS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

TrainConfig stitch_train_config(uint64_t seed, double eta, int K) {
  TrainConfig cfg;
  cfg.K = K;
  cfg.d = 16;
  cfg.n_blocks = 1;
  cfg.conv_window = 6;
  cfg.batch_size = 32;
  cfg.total_steps = 3000;
  cfg.policy_lr = 1e-3;
  cfg.critic_lr = 1e-3;
  cfg.gamma = 0.9;
  cfg.polyak_tau = 0.01;
  cfg.eta = eta;
  cfg.rtg_scale = 1.0;
  cfg.candidate_count = eta == 0.0 ? 1 : 8;
  cfg.candidate_max_multiplier = 1.2;
  cfg.seed = seed;
  cfg.eval_every = 1000;
  cfg.env = kStitchEnv;
  cfg.critic_hidden = 64;
  cfg.q_aggregate = "min";
  cfg.eval_episodes = 1;
  return cfg;
}

Dataset make_stitch_dataset(uint64_t seed) {
  auto env = make_env(kStitchEnv);
  Rng rng(seed);
  BehaviorPolicySpec spec{PolicyKind::stitch_mix, kStitchNoise};
  return Dataset::from_trajectories(
      env->generate_dataset(spec, kStitchEpisodes, rng));
}

namespace {

struct CellOutcome {
  double normalized_score = 0;
  double success_rate = 0;
};

CellOutcome run_cell(const TrainConfig& cfg, const Dataset& dataset,
                     int eval_episodes) {
  TrainResult result = train(cfg, dataset);
  auto env = make_env(cfg.env);
  InferenceConfig icfg;
  icfg.candidate_count = cfg.candidate_count;
  icfg.candidate_max_multiplier = cfg.candidate_max_multiplier;
  icfg.selection = RtgSelection::per_step;
  icfg.aggregate = parse_q_aggregate(cfg.q_aggregate);
  icfg.stats = result.stats;
  const EvalReport rep = evaluate_policy(result.policy, result.ensemble, *env,
                                         icfg, eval_episodes, cfg.seed);
  return {rep.normalized_score_mean, rep.success_rate};
}

}  // namespace

std::vector<StitchCellResult> run_stitching_suite(const AblateOptions& opt) {
  const Dataset dataset = make_stitch_dataset(opt.seed_base);

  struct Cell {
    std::string method;
    uint64_t seed;
    double eta;
  };
  std::vector<Cell> cells;
  for (uint64_t s = 1; s <= 3; ++s)
    cells.push_back({"qdc", opt.seed_base + s, 1.0});
  for (uint64_t s = 1; s <= 3; ++s)
    cells.push_back({"dc", opt.seed_base + s, 0.0});

  std::vector<StitchCellResult> rows(cells.size());
  run_cells(static_cast<int>(cells.size()), opt.threads, [&](int i) {
    const Cell& c = cells[static_cast<size_t>(i)];
    const TrainConfig cfg = stitch_train_config(c.seed, c.eta, 8);
    const CellOutcome out = run_cell(cfg, dataset, opt.eval_episodes);
    rows[static_cast<size_t>(i)] =
        {c.method, c.seed, out.normalized_score, out.success_rate};
  });
  return rows;
}

std::vector<HorizonCellResult> run_horizon_suite(const AblateOptions& opt) {
  const Dataset dataset = make_stitch_dataset(opt.seed_base);

  struct Cell {
    int K;
    uint64_t seed;
  };
  std::vector<Cell> cells;
  for (int K : {4, 8, 16})
    for (uint64_t s = 1; s <= 3; ++s) cells.push_back({K, opt.seed_base + s});

  std::vector<HorizonCellResult> rows(cells.size());
  run_cells(static_cast<int>(cells.size()), opt.threads, [&](int i) {
    const Cell& c = cells[static_cast<size_t>(i)];
    const TrainConfig cfg = stitch_train_config(c.seed, 1.0, c.K);
    const CellOutcome out = run_cell(cfg, dataset, opt.eval_episodes);
    rows[static_cast<size_t>(i)] =
        {c.K, c.seed, out.normalized_score, out.success_rate};
  });
  return rows;
}

void write_stitching_csv(const std::vector<StitchCellResult>& rows,
                         const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write: " + path);
    out << "method,seed,normalized_score\n";
    for (const auto& r : rows)
      out << r.method << ',' << r.seed << ',' << fmt(r.normalized_score)
          << '\n';
  }
  std::filesystem::rename(tmp, path);
}

void write_horizon_csv(const std::vector<HorizonCellResult>& rows,
                       const std::string& path) {
  // aggregate seeds: one row per K
  std::map<int, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    acc[r.K].first += r.normalized_score;
    acc[r.K].second += 1;
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write: " + path);
    out << "method,K,normalized_score\n";
    for (const auto& [k, v] : acc)
      out << "qdc," << k << ',' << fmt(v.first / v.second) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace qdc
