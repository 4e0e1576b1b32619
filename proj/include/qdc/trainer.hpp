#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qdc/conv_policy.hpp"
#include "qdc/q_module.hpp"
#include "qdc/trajectory.hpp"

namespace qdc {

struct TrainConfig {
  int K = 8;
  int d = 16;
  int n_blocks = 1;     // JSON key "N"
  int conv_window = 6;  // JSON key "conv_window"
  int batch_size = 32;
  long total_steps = 3000;
  double policy_lr = 1e-3;
  double critic_lr = 1e-3;
  double gamma = 0.9;
  double polyak_tau = 0.01;
  double eta = 1.0;
  double rtg_scale = 100.0;
  int candidate_count = 8;
  double candidate_max_multiplier = 1.2;
  uint64_t seed = 0;
  long eval_every = 500;
  std::string env;
  // optional keys
  int critic_hidden = 64;
  std::string q_aggregate = "min";
  int eval_episodes = 3;

  void validate() const;
};

// Strict parse: spec keys required, the three optional keys may be absent,
// anything else is rejected.
TrainConfig load_train_config(const std::string& path);
TrainConfig train_config_from_json_text(const std::string& text);
std::string train_config_to_json_text(const TrainConfig& cfg);

struct TrainMetricsRow {
  long step = 0;
  double bc_loss = 0, q_term = 0, alpha = 0, critic_loss = 0;
  double eval_return_mean = 0, eval_return_std = 0;
};

void write_metrics_csv(const std::vector<TrainMetricsRow>& rows,
                       const std::string& path);

// bc_only disables the critic pathway entirely; with eta=0 the policy
// parameter stream is identical either way.
enum class TrainMode { full, bc_only };

struct StepInfo {
  long step = 0;
  double bc_loss = 0, q_term = 0, alpha = 0, critic_loss = 0;
  double mean_abs_q = 0;  // the alpha denominator before flooring
};

struct TrainHooks {
  std::function<void(const StepInfo&)> on_step;
  std::function<void(long, const PolicyModel&)> on_log;
};

struct TrainResult {
  TrainConfig config;
  PolicyModel policy;
  QEnsemble ensemble;
  std::vector<TrainMetricsRow> metrics;
  DatasetStats stats;
};

// alpha = eta / mean |Q(s,a)| over logged valid pairs (floored at 1e-6),
// treated as a constant. mean_abs_q_out reports the unfloored denominator.
double compute_alpha(const QEnsemble& ensemble,
                     const std::vector<ContextWindow>& batch, double eta,
                     QAggregate agg, double* mean_abs_q_out = nullptr);

// bc_loss - alpha * E[Q(s_i, pi(tau)_i)]. Gradients reach the policy only;
// the critics are evaluated through detached copies.
ad::Tensor policy_loss(ad::Tape& tape, const PolicyModel& model,
                       const QEnsemble& ensemble,
                       const std::vector<ContextWindow>& batch, double eta,
                       double alpha, QAggregate agg, double* bc_out = nullptr,
                       double* q_term_out = nullptr);

TrainResult train(const TrainConfig& cfg, const Dataset& dataset,
                  TrainMode mode = TrainMode::full,
                  const TrainHooks* hooks = nullptr);

}  // namespace qdc
