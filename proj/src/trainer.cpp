#include "qdc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qdc/errors.hpp"
#include "qdc/inference.hpp"

namespace qdc {

using ad::Tape;
using ad::Tensor;

void TrainConfig::validate() const {
  if (K < 1) throw ConfigError("config: K must be >= 1");
  if (d < 1 || n_blocks < 1 || conv_window < 1)
    throw ConfigError("config: d, N, conv_window must be positive");
  if (batch_size < 1) throw ConfigError("config: batch_size must be positive");
  if (total_steps < 0) throw ConfigError("config: total_steps must be >= 0");
  if (policy_lr <= 0 || critic_lr <= 0)
    throw ConfigError("config: learning rates must be positive");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw ConfigError("config: gamma must be in (0,1)");
  if (!(polyak_tau > 0.0 && polyak_tau <= 1.0))
    throw ConfigError("config: polyak_tau must be in (0,1]");
  if (eta < 0) throw ConfigError("config: eta must be >= 0");
  if (rtg_scale <= 0) throw ConfigError("config: rtg_scale must be positive");
  if (candidate_count < 1)
    throw ConfigError("config: candidate_count must be >= 1");
  if (candidate_max_multiplier < 1.0)
    throw ConfigError("config: candidate_max_multiplier must be >= 1");
  if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
  if (env.empty()) throw ConfigError("config: env must be set");
  if (critic_hidden < 1)
    throw ConfigError("config: critic_hidden must be positive");
  if (eval_episodes < 1)
    throw ConfigError("config: eval_episodes must be >= 1");
  parse_q_aggregate(q_aggregate);
}

TrainConfig train_config_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  static const std::vector<std::string> required = {
      "K",          "d",           "N",
      "conv_window", "batch_size",  "total_steps",
      "policy_lr",  "critic_lr",   "gamma",
      "polyak_tau", "eta",         "rtg_scale",
      "candidate_count", "candidate_max_multiplier", "seed",
      "eval_every", "env"};
  static const std::vector<std::string> optional = {"critic_hidden",
                                                    "q_aggregate",
                                                    "eval_episodes"};
  for (const auto& key : required) {
    if (!j.contains(key))
      throw ConfigError("missing config key \"" + key + "\"");
  }
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    const bool known =
        std::find(required.begin(), required.end(), key) != required.end() ||
        std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) throw ConfigError("unknown config key \"" + key + "\"");
  }

  TrainConfig cfg;
  cfg.K = j["K"].get<int>();
  cfg.d = j["d"].get<int>();
  cfg.n_blocks = j["N"].get<int>();
  cfg.conv_window = j["conv_window"].get<int>();
  cfg.batch_size = j["batch_size"].get<int>();
  cfg.total_steps = j["total_steps"].get<long>();
  cfg.policy_lr = j["policy_lr"].get<double>();
  cfg.critic_lr = j["critic_lr"].get<double>();
  cfg.gamma = j["gamma"].get<double>();
  cfg.polyak_tau = j["polyak_tau"].get<double>();
  cfg.eta = j["eta"].get<double>();
  cfg.rtg_scale = j["rtg_scale"].get<double>();
  cfg.candidate_count = j["candidate_count"].get<int>();
  cfg.candidate_max_multiplier = j["candidate_max_multiplier"].get<double>();
  cfg.seed = j["seed"].get<uint64_t>();
  cfg.eval_every = j["eval_every"].get<long>();
  cfg.env = j["env"].get<std::string>();
  if (j.contains("critic_hidden")) cfg.critic_hidden = j["critic_hidden"].get<int>();
  if (j.contains("q_aggregate")) cfg.q_aggregate = j["q_aggregate"].get<std::string>();
  if (j.contains("eval_episodes")) cfg.eval_episodes = j["eval_episodes"].get<int>();
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return train_config_from_json_text(ss.str());
}

std::string train_config_to_json_text(const TrainConfig& cfg) {
  nlohmann::json j;
  j["K"] = cfg.K;
  j["d"] = cfg.d;
  j["N"] = cfg.n_blocks;
  j["conv_window"] = cfg.conv_window;
  j["batch_size"] = cfg.batch_size;
  j["total_steps"] = cfg.total_steps;
  j["policy_lr"] = cfg.policy_lr;
  j["critic_lr"] = cfg.critic_lr;
  j["gamma"] = cfg.gamma;
  j["polyak_tau"] = cfg.polyak_tau;
  j["eta"] = cfg.eta;
  j["rtg_scale"] = cfg.rtg_scale;
  j["candidate_count"] = cfg.candidate_count;
  j["candidate_max_multiplier"] = cfg.candidate_max_multiplier;
  j["seed"] = cfg.seed;
  j["eval_every"] = cfg.eval_every;
  j["env"] = cfg.env;
  j["critic_hidden"] = cfg.critic_hidden;
  j["q_aggregate"] = cfg.q_aggregate;
  j["eval_episodes"] = cfg.eval_episodes;
  return j.dump(2);
}

namespace {

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::vector<TrainMetricsRow>& rows,
                       const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write metrics file: " + path);
    out << "step,bc_loss,q_term,alpha,critic_loss,eval_return_mean,"
           "eval_return_std\n";
    for (const auto& r : rows) {
      out << r.step << ',' << fmt_full(r.bc_loss) << ',' << fmt_full(r.q_term)
          << ',' << fmt_full(r.alpha) << ',' << fmt_full(r.critic_loss) << ','
          << fmt_full(r.eval_return_mean) << ',' << fmt_full(r.eval_return_std)
          << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

double compute_alpha(const QEnsemble& ensemble,
                     const std::vector<ContextWindow>& batch, double eta,
                     QAggregate agg, double* mean_abs_q_out) {
  if (batch.empty()) throw UsageError("compute_alpha: empty batch");
  const int sd = ensemble.q1().state_dim();
  const int ad = ensemble.q1().action_dim();

  // all logged valid (s,a) pairs in one no-grad forward
  std::vector<double> xs;
  std::vector<int> counts;
  counts.reserve(batch.size());
  for (const ContextWindow& w : batch) {
    int n = 0;
    for (int i = w.first_valid(); i < w.K; ++i) {
      const auto& s = w.states[static_cast<size_t>(i)];
      const auto& a = w.actions[static_cast<size_t>(i)];
      xs.insert(xs.end(), s.begin(), s.end());
      xs.insert(xs.end(), a.begin(), a.end());
      ++n;
    }
    counts.push_back(n);
  }
  const int total = static_cast<int>(xs.size()) / (sd + ad);
  ad::Tape tape(false);
  Tensor sa = Tensor::matrix(total, sd + ad, std::move(xs));
  Tensor v1 = ensemble.q1().forward(tape, sa);
  Tensor v2 = agg == QAggregate::min_pair ? ensemble.q2().forward(tape, sa)
                                          : Tensor();

  double window_sum = 0.0;
  int row = 0;
  for (int n : counts) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i, ++row) {
      const double q = agg == QAggregate::min_pair
                           ? std::min(v1.at(row, 0), v2.at(row, 0))
                           : v1.at(row, 0);
      acc += std::abs(q);
    }
    window_sum += acc / n;
  }
  const double mean_abs_q = window_sum / static_cast<double>(counts.size());
  if (mean_abs_q_out) *mean_abs_q_out = mean_abs_q;
  return eta / std::max(mean_abs_q, 1e-6);
}

Tensor policy_loss(Tape& tape, const PolicyModel& model,
                   const QEnsemble& ensemble,
                   const std::vector<ContextWindow>& batch, double eta,
                   double alpha, QAggregate agg, double* bc_out,
                   double* q_term_out) {
  if (batch.empty()) throw UsageError("policy_loss: empty batch");
  const int K = model.config().K;
  const int sd = model.config().state_dim;
  const int ad = model.config().action_dim;

  // critics as constants so no gradient can reach them
  const bool use_q = eta != 0.0;
  std::optional<QNetwork> q1c, q2c;
  if (use_q) {
    q1c = ensemble.q1().clone(false);
    if (agg == QAggregate::min_pair) q2c = ensemble.q2().clone(false);
  }

  Tensor preds = model.forward_batch(tape, batch);

  // gather all valid prediction rows across the batch
  std::vector<int> valid_rows;
  std::vector<int> counts;
  counts.reserve(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    const ContextWindow& w = batch[b];
    for (int i = w.first_valid(); i < K; ++i)
      valid_rows.push_back(static_cast<int>(b) * K + i);
    counts.push_back(w.valid_len);
  }
  Tensor pred_valid = tape.select_rows(preds, valid_rows);

  const int total = static_cast<int>(valid_rows.size());
  Tensor targets = Tensor::zeros({total, ad});
  Tensor states = Tensor::zeros({total, sd});
  {
    int r = 0;
    for (const ContextWindow& w : batch) {
      for (int i = w.first_valid(); i < K; ++i, ++r) {
        for (int c = 0; c < ad; ++c)
          targets.at(r, c) =
              w.actions[static_cast<size_t>(i)][static_cast<size_t>(c)];
        for (int c = 0; c < sd; ++c)
          states.at(r, c) =
              w.states[static_cast<size_t>(i)][static_cast<size_t>(c)];
      }
    }
  }

  // per-window mse, then mean across windows
  std::vector<Tensor> bc_parts, q_parts;
  bc_parts.reserve(batch.size());
  Tensor qv;
  if (use_q) {
    Tensor sa = tape.concat_cols(states, pred_valid);
    qv = q1c->forward(tape, sa);
    if (agg == QAggregate::min_pair)
      qv = tape.min_elementwise(qv, q2c->forward(tape, sa));
  }
  {
    int r = 0;
    for (size_t b = 0; b < batch.size(); ++b) {
      std::vector<int> rows(static_cast<size_t>(counts[b]));
      for (int i = 0; i < counts[b]; ++i) rows[static_cast<size_t>(i)] = r + i;
      bc_parts.push_back(tape.mse(tape.select_rows(pred_valid, rows),
                                  tape.select_rows(targets, rows)));
      if (use_q) q_parts.push_back(tape.mean(tape.select_rows(qv, rows)));
      r += counts[b];
    }
  }

  Tensor bc = tape.mean(tape.concat_rows(bc_parts));
  if (bc_out) *bc_out = bc.item();
  if (!use_q) {
    if (q_term_out) *q_term_out = 0.0;
    return bc;
  }
  Tensor q_mean = tape.mean(tape.concat_rows(q_parts));
  Tensor q_term = tape.scale(q_mean, alpha);
  if (q_term_out) *q_term_out = q_term.item();
  return tape.sub(bc, q_term);
}

TrainResult train(const TrainConfig& cfg, const Dataset& dataset,
                  TrainMode mode, const TrainHooks* hooks) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("train: empty dataset");

  auto env = make_env(cfg.env);
  const int sd = dataset.trajectories()[0].state_dim();
  const int ad = dataset.trajectories()[0].action_dim();
  if (sd != env->state_dim() || ad != env->action_dim()) {
    throw ConfigError("train: dataset dims (" + std::to_string(sd) + "," +
                      std::to_string(ad) + ") do not match env \"" + cfg.env +
                      "\" (" + std::to_string(env->state_dim()) + "," +
                      std::to_string(env->action_dim()) + ")");
  }

  PolicyConfig pcfg;
  pcfg.K = cfg.K;
  pcfg.d = cfg.d;
  pcfg.n_blocks = cfg.n_blocks;
  pcfg.conv_window = cfg.conv_window;
  pcfg.state_dim = sd;
  pcfg.action_dim = ad;
  pcfg.max_timestep = env->horizon();
  pcfg.rtg_scale = cfg.rtg_scale;

  // independent derived streams: init draws never shift the sampler
  Rng root(cfg.seed);
  Rng policy_rng = root.fork(1);
  Rng q_rng = root.fork(2);
  Rng sampler = root.fork(3);
  Rng eval_rng = root.fork(4);

  const QAggregate agg = parse_q_aggregate(cfg.q_aggregate);

  PolicyModel policy(pcfg, policy_rng);
  QEnsemble ensemble(sd, ad, cfg.critic_hidden, policy, cfg.gamma,
                     cfg.polyak_tau, q_rng);

  ParamList policy_params = policy.params();
  ParamList critic_params = ensemble.online_params();
  Adam policy_opt(policy_params, cfg.policy_lr);
  Adam critic_opt(critic_params, cfg.critic_lr);

  InferenceConfig icfg;
  icfg.candidate_count = cfg.candidate_count;
  icfg.candidate_max_multiplier = cfg.candidate_max_multiplier;
  icfg.selection = RtgSelection::per_step;
  icfg.aggregate = agg;
  icfg.stats = dataset.stats();

  std::vector<TrainMetricsRow> metrics;

  for (long step = 1; step <= cfg.total_steps; ++step) {
    std::vector<ContextWindow> batch =
        dataset.sample_batch(cfg.batch_size, cfg.K, sampler);

    double critic_loss_val = 0.0;
    if (mode == TrainMode::full) {
      Tape tape;
      Tensor closs = critic_loss(tape, ensemble, batch);
      critic_loss_val = closs.item();
      if (!std::isfinite(critic_loss_val))
        throw NumericalError(step, "critic_loss");
      if (closs.requires_grad()) {
        tape.backward(closs);
        clip_global_norm(critic_params, 1.0);
        critic_opt.step();
        critic_opt.zero_grad();
      }
    }

    double mean_abs_q = 0.0;
    const double alpha =
        (mode == TrainMode::full && cfg.eta != 0.0)
            ? compute_alpha(ensemble, batch, cfg.eta, agg, &mean_abs_q)
            : 0.0;
    const double eff_eta = mode == TrainMode::full ? cfg.eta : 0.0;

    double bc_val = 0.0, q_term_val = 0.0;
    {
      Tape tape;
      Tensor loss = policy_loss(tape, policy, ensemble, batch, eff_eta, alpha,
                                agg, &bc_val, &q_term_val);
      if (!std::isfinite(bc_val)) throw NumericalError(step, "bc_loss");
      if (!std::isfinite(q_term_val)) throw NumericalError(step, "q_term");
      tape.backward(loss);
      clip_global_norm(policy_params, 1.0);
      policy_opt.step();
      policy_opt.zero_grad();
    }

    if (mode == TrainMode::full) {
      ensemble.polyak_update(policy, cfg.polyak_tau);
    }

    if (hooks && hooks->on_step) {
      hooks->on_step({step, bc_val, q_term_val, alpha, critic_loss_val,
                      mean_abs_q});
    }

    if (step % cfg.eval_every == 0) {
      double sum = 0.0, sumsq = 0.0;
      for (int ep = 0; ep < cfg.eval_episodes; ++ep) {
        auto e = env->clone();
        const EpisodeResult r =
            run_episode(policy, ensemble, *e, icfg, eval_rng);
        sum += r.episode_return;
        sumsq += r.episode_return * r.episode_return;
      }
      const double m = sum / cfg.eval_episodes;
      const double var = std::max(0.0, sumsq / cfg.eval_episodes - m * m);
      metrics.push_back({step, bc_val, q_term_val, alpha, critic_loss_val, m,
                         std::sqrt(var)});
      if (hooks && hooks->on_log) hooks->on_log(step, policy);
    }
  }

  return TrainResult{cfg, std::move(policy), std::move(ensemble),
                     std::move(metrics), dataset.stats()};
}

}  // namespace qdc
