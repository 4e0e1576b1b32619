#include "qdc/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "qdc/errors.hpp"

namespace qdc {

std::vector<double> compute_rtg(const std::vector<double>& rewards) {
  if (rewards.empty()) throw UsageError("compute_rtg: empty trajectory");
  std::vector<double> rtg(rewards.size());
  double acc = 0.0;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    acc += rewards[static_cast<size_t>(t)];
    rtg[static_cast<size_t>(t)] = acc;
  }
  return rtg;
}

ContextWindow sample_context(const Trajectory& traj, int t, int K,
                             const DatasetStats& stats) {
  if (t < 0 || t >= traj.length()) {
    throw UsageError("sample_context: t=" + std::to_string(t) +
                     " out of range for trajectory of length " +
                     std::to_string(traj.length()));
  }
  if (K < 1) throw ConfigError("sample_context: K must be >= 1");
  const int sd = traj.state_dim();
  const int ad = traj.action_dim();

  ContextWindow w;
  w.K = K;
  w.state_dim = sd;
  w.action_dim = ad;
  w.rtgs.assign(static_cast<size_t>(K), 0.0);
  w.states.assign(static_cast<size_t>(K), std::vector<double>(sd, 0.0));
  w.actions.assign(static_cast<size_t>(K), std::vector<double>(ad, 0.0));
  w.rewards.assign(static_cast<size_t>(K), 0.0);
  w.timesteps.assign(static_cast<size_t>(K), 0);

  const int lo = std::max(0, t - K + 1);
  w.valid_len = t - lo + 1;
  w.final_step_terminal = (t == traj.length() - 1) && traj.terminal;

  for (int step = lo; step <= t; ++step) {
    const int slot = K - 1 - (t - step);
    w.rtgs[static_cast<size_t>(slot)] = traj.rtg[static_cast<size_t>(step)];
    for (int c = 0; c < sd; ++c) {
      w.states[static_cast<size_t>(slot)][static_cast<size_t>(c)] =
          (traj.states[static_cast<size_t>(step)][static_cast<size_t>(c)] -
           stats.state_mean[static_cast<size_t>(c)]) /
          stats.state_std[static_cast<size_t>(c)];
    }
    w.actions[static_cast<size_t>(slot)] = traj.actions[static_cast<size_t>(step)];
    w.rewards[static_cast<size_t>(slot)] = traj.rewards[static_cast<size_t>(step)];
    w.timesteps[static_cast<size_t>(slot)] = step;
  }
  return w;
}

Dataset Dataset::from_trajectories(std::vector<Trajectory> trajs) {
  if (trajs.empty()) throw ConfigError("dataset is empty");
  Dataset ds;
  for (auto& t : trajs) {
    if (t.rtg.empty()) t.rtg = compute_rtg(t.rewards);
  }
  ds.trajs_ = std::move(trajs);

  const int sd = ds.trajs_[0].state_dim();
  ds.stats_.state_mean.assign(static_cast<size_t>(sd), 0.0);
  ds.stats_.state_std.assign(static_cast<size_t>(sd), 0.0);
  long n = 0;
  for (const auto& t : ds.trajs_) {
    for (const auto& s : t.states) {
      for (int c = 0; c < sd; ++c) ds.stats_.state_mean[static_cast<size_t>(c)] += s[static_cast<size_t>(c)];
      ++n;
    }
  }
  for (int c = 0; c < sd; ++c) ds.stats_.state_mean[static_cast<size_t>(c)] /= static_cast<double>(n);
  for (const auto& t : ds.trajs_) {
    for (const auto& s : t.states) {
      for (int c = 0; c < sd; ++c) {
        const double dv = s[static_cast<size_t>(c)] - ds.stats_.state_mean[static_cast<size_t>(c)];
        ds.stats_.state_std[static_cast<size_t>(c)] += dv * dv;
      }
    }
  }
  for (int c = 0; c < sd; ++c) {
    ds.stats_.state_std[static_cast<size_t>(c)] =
        std::max(std::sqrt(ds.stats_.state_std[static_cast<size_t>(c)] / static_cast<double>(n)), 1e-6);
  }

  ds.stats_.return_max = ds.trajs_[0].total_return();
  ds.stats_.return_min = ds.trajs_[0].total_return();
  ds.cum_steps_.reserve(ds.trajs_.size());
  long cum = 0;
  for (const auto& t : ds.trajs_) {
    ds.stats_.return_max = std::max(ds.stats_.return_max, t.total_return());
    ds.stats_.return_min = std::min(ds.stats_.return_min, t.total_return());
    cum += t.length();
    ds.cum_steps_.push_back(cum);
  }
  ds.total_steps_ = cum;
  return ds;
}

std::vector<ContextWindow> Dataset::sample_batch(int batch_size, int K,
                                                 Rng& rng) const {
  if (empty()) throw ConfigError("sample_batch: empty dataset");
  std::vector<ContextWindow> batch;
  batch.reserve(static_cast<size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const long u = rng.uniform_int(static_cast<int>(total_steps_));
    const auto it = std::upper_bound(cum_steps_.begin(), cum_steps_.end(), u);
    const size_t traj_idx = static_cast<size_t>(it - cum_steps_.begin());
    const long base = traj_idx == 0 ? 0 : cum_steps_[traj_idx - 1];
    const int t = static_cast<int>(u - base);
    batch.push_back(sample_context(trajs_[traj_idx], t, K, stats_));
  }
  return batch;
}

namespace {

std::vector<std::vector<double>> parse_matrix(const nlohmann::json& j,
                                              const char* key, int line) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw ParseError(std::string("missing or non-array \"") + key + "\"", line);
  }
  std::vector<std::vector<double>> out;
  for (const auto& row : j[key]) {
    if (!row.is_array()) {
      throw ParseError(std::string("\"") + key + "\" rows must be arrays", line);
    }
    std::vector<double> r;
    for (const auto& v : row) {
      if (!v.is_number()) {
        throw ParseError(std::string("non-numeric entry in \"") + key + "\"", line);
      }
      r.push_back(v.get<double>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);

  std::vector<Trajectory> trajs;
  std::string linebuf;
  int lineno = 0;
  while (std::getline(in, linebuf)) {
    ++lineno;
    if (linebuf.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(linebuf);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    Trajectory t;
    t.states = parse_matrix(j, "states", lineno);
    t.actions = parse_matrix(j, "actions", lineno);
    if (!j.contains("rewards") || !j["rewards"].is_array()) {
      throw ParseError("missing or non-array \"rewards\"", lineno);
    }
    for (const auto& v : j["rewards"]) {
      if (!v.is_number()) throw ParseError("non-numeric reward", lineno);
      t.rewards.push_back(v.get<double>());
    }
    if (!j.contains("terminal") || !j["terminal"].is_boolean()) {
      throw ParseError("missing or non-boolean \"terminal\"", lineno);
    }
    t.terminal = j["terminal"].get<bool>();

    const size_t T = t.rewards.size();
    if (T == 0) throw ParseError("episode has zero steps", lineno);
    if (t.states.size() != T || t.actions.size() != T) {
      throw ParseError("states/actions/rewards lengths differ: " +
                           std::to_string(t.states.size()) + "/" +
                           std::to_string(t.actions.size()) + "/" +
                           std::to_string(T),
                       lineno);
    }
    for (const auto& s : t.states) {
      if (s.size() != t.states[0].size())
        throw ParseError("ragged state vectors", lineno);
    }
    for (const auto& a : t.actions) {
      if (a.size() != t.actions[0].size())
        throw ParseError("ragged action vectors", lineno);
    }
    if (!trajs.empty()) {
      if (t.states[0].size() != trajs[0].states[0].size() ||
          t.actions[0].size() != trajs[0].actions[0].size()) {
        throw ParseError("episode dimensions differ from earlier episodes",
                         lineno);
      }
    }
    t.rtg = compute_rtg(t.rewards);
    trajs.push_back(std::move(t));
  }
  if (trajs.empty()) throw ConfigError("empty dataset: " + path);
  return Dataset::from_trajectories(std::move(trajs));
}

void save_dataset(const std::vector<Trajectory>& trajs,
                  const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write dataset file: " + path);
    for (const auto& t : trajs) {
      nlohmann::json j;
      j["states"] = t.states;
      j["actions"] = t.actions;
      j["rewards"] = t.rewards;
      j["terminal"] = t.terminal;
      out << j.dump() << "\n";
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace qdc
