#pragma once

#include <deque>
#include <vector>

#include "qdc/conv_policy.hpp"
#include "qdc/envs.hpp"
#include "qdc/q_module.hpp"
#include "qdc/rng.hpp"
#include "qdc/trajectory.hpp"

namespace qdc {

// Evenly spaced grid from return_min to max_multiplier * return_max
// (inclusive); a single-point grid sits at the top.
std::vector<double> candidate_rtgs(const DatasetStats& stats, int count,
                                   double max_multiplier);

enum class RtgSelection { per_step, per_episode };

// Rolling deployment-time context: the last K-1 completed steps plus the
// current state. The conditioning rtg of a completed step is whatever
// candidate was actually used for it.
class RolloutContext {
 public:
  RolloutContext(int K, DatasetStats stats, int action_dim);

  void begin(const std::vector<double>& initial_state);
  void advance(double rtg_used, const std::vector<double>& action,
               double reward, const std::vector<double>& next_state);

  // Window conditioned on `current_rtg` at the final slot.
  ContextWindow window(double current_rtg) const;

  const std::vector<double>& current_state() const { return cur_state_; }
  std::vector<double> normalized_current_state() const;
  int timestep() const { return t_; }
  double realized_reward() const { return realized_; }

 private:
  struct PastStep {
    double rtg_used;
    std::vector<double> state;
    std::vector<double> action;
    int timestep;
  };
  int K_;
  DatasetStats stats_;
  int action_dim_;
  std::deque<PastStep> past_;  // at most K-1
  std::vector<double> cur_state_;
  int t_ = 0;
  double realized_ = 0.0;
};

// For each candidate rtg: condition the policy, predict an action, score it
// with the online critics at the current state, and return the best. Ties
// break toward the larger candidate.
std::vector<double> select_action(const PolicyModel& model,
                                  const QEnsemble& ensemble,
                                  const RolloutContext& ctx,
                                  const std::vector<double>& candidates,
                                  QAggregate agg,
                                  double* chosen_rtg = nullptr);

struct InferenceConfig {
  int candidate_count = 8;
  double candidate_max_multiplier = 1.2;
  RtgSelection selection = RtgSelection::per_step;
  QAggregate aggregate = QAggregate::min_pair;
  DatasetStats stats;
};

struct EpisodeResult {
  double episode_return = 0.0;
  int steps = 0;
  bool success = false;
};

// Greedy rollout. Candidate values decrement by realized reward as the
// episode progresses, so a single candidate reduces to plain
// return-conditioned control. rtg_trace, when given, records the
// conditioning value chosen at each step.
EpisodeResult run_episode(const PolicyModel& model, const QEnsemble& ensemble,
                          Env& env, const InferenceConfig& cfg, Rng& rng,
                          std::vector<double>* rtg_trace = nullptr);

struct EvalReport {
  double raw_return_mean = 0;
  double raw_return_std = 0;
  double normalized_score_mean = 0;
  double normalized_score_std = 0;
  double success_rate = 0;
};

// Runs `episodes` rollouts and scores them against the env's exact optimum
// and a seeded random-policy baseline.
EvalReport evaluate_policy(const PolicyModel& model, const QEnsemble& ensemble,
                           const Env& env, const InferenceConfig& cfg,
                           int episodes, uint64_t seed);

}  // namespace qdc
