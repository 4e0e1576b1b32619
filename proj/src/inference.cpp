#include "qdc/inference.hpp"

#include <algorithm>
#include <cmath>

#include "qdc/errors.hpp"

namespace qdc {

std::vector<double> candidate_rtgs(const DatasetStats& stats, int count,
                                   double max_multiplier) {
  if (count < 1) throw ConfigError("candidate_rtgs: count must be >= 1");
  if (max_multiplier < 1.0)
    throw ConfigError("candidate_rtgs: max_multiplier must be >= 1");
  const double hi = max_multiplier * stats.return_max;
  if (count == 1) return {hi};
  std::vector<double> out(static_cast<size_t>(count));
  const double lo = stats.return_min;
  for (int i = 0; i < count; ++i)
    out[static_cast<size_t>(i)] = lo + (hi - lo) * i / (count - 1);
  return out;
}

RolloutContext::RolloutContext(int K, DatasetStats stats, int action_dim)
    : K_(K), stats_(std::move(stats)), action_dim_(action_dim) {
  if (K < 1) throw ConfigError("rollout context: K must be >= 1");
  if (action_dim < 1)
    throw ConfigError("rollout context: action_dim must be >= 1");
}

void RolloutContext::begin(const std::vector<double>& initial_state) {
  past_.clear();
  cur_state_ = initial_state;
  t_ = 0;
  realized_ = 0.0;
}

void RolloutContext::advance(double rtg_used,
                             const std::vector<double>& action, double reward,
                             const std::vector<double>& next_state) {
  past_.push_back({rtg_used, cur_state_, action, t_});
  while (static_cast<int>(past_.size()) > K_ - 1) past_.pop_front();
  cur_state_ = next_state;
  realized_ += reward;
  ++t_;
}

std::vector<double> RolloutContext::normalized_current_state() const {
  std::vector<double> s(cur_state_.size());
  for (size_t c = 0; c < s.size(); ++c)
    s[c] = (cur_state_[c] - stats_.state_mean[c]) / stats_.state_std[c];
  return s;
}

ContextWindow RolloutContext::window(double current_rtg) const {
  const int sd = static_cast<int>(cur_state_.size());
  const int ad = action_dim_;

  ContextWindow w;
  w.K = K_;
  w.state_dim = sd;
  w.action_dim = ad;
  w.valid_len = std::min<int>(static_cast<int>(past_.size()) + 1, K_);
  w.rtgs.assign(static_cast<size_t>(K_), 0.0);
  w.states.assign(static_cast<size_t>(K_), std::vector<double>(static_cast<size_t>(sd), 0.0));
  w.actions.assign(static_cast<size_t>(K_), std::vector<double>(static_cast<size_t>(ad), 0.0));
  w.rewards.assign(static_cast<size_t>(K_), 0.0);
  w.timesteps.assign(static_cast<size_t>(K_), 0);
  w.final_step_terminal = false;

  auto normalize = [this](const std::vector<double>& s) {
    std::vector<double> out(s.size());
    for (size_t c = 0; c < s.size(); ++c)
      out[c] = (s[c] - stats_.state_mean[c]) / stats_.state_std[c];
    return out;
  };

  // current step at the last slot, history before it
  w.rtgs[static_cast<size_t>(K_ - 1)] = current_rtg;
  w.states[static_cast<size_t>(K_ - 1)] = normalize(cur_state_);
  w.timesteps[static_cast<size_t>(K_ - 1)] = t_;

  int slot = K_ - 2;
  for (auto it = past_.rbegin(); it != past_.rend() && slot >= 0; ++it, --slot) {
    w.rtgs[static_cast<size_t>(slot)] = it->rtg_used;
    w.states[static_cast<size_t>(slot)] = normalize(it->state);
    w.actions[static_cast<size_t>(slot)] = it->action;
    w.timesteps[static_cast<size_t>(slot)] = it->timestep;
  }
  return w;
}

std::vector<double> select_action(const PolicyModel& model,
                                  const QEnsemble& ensemble,
                                  const RolloutContext& ctx,
                                  const std::vector<double>& candidates,
                                  QAggregate agg, double* chosen_rtg) {
  if (candidates.empty()) throw UsageError("select_action: no candidates");
  const std::vector<double> s_norm = ctx.normalized_current_state();
  const int sd = static_cast<int>(s_norm.size());
  const int ad = model.config().action_dim;

  std::vector<ContextWindow> windows;
  windows.reserve(candidates.size());
  for (const double cand : candidates) windows.push_back(ctx.window(cand));
  const std::vector<std::vector<double>> a_hats =
      model.predict_last_batch(windows);

  std::vector<double> xs;
  xs.reserve(candidates.size() * static_cast<size_t>(sd + ad));
  for (const auto& a : a_hats) {
    xs.insert(xs.end(), s_norm.begin(), s_norm.end());
    xs.insert(xs.end(), a.begin(), a.end());
  }
  ad::Tape tape(false);
  ad::Tensor sa = ad::Tensor::matrix(static_cast<int>(candidates.size()),
                                     sd + ad, std::move(xs));
  ad::Tensor v1 = ensemble.q1().forward(tape, sa);
  ad::Tensor v2 = agg == QAggregate::min_pair
                      ? ensemble.q2().forward(tape, sa)
                      : ad::Tensor();

  int best = -1;
  double best_score = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const int r = static_cast<int>(i);
    const double score = agg == QAggregate::min_pair
                             ? std::min(v1.at(r, 0), v2.at(r, 0))
                             : v1.at(r, 0);
    if (best < 0 || score > best_score ||
        (score == best_score && candidates[i] > candidates[static_cast<size_t>(best)])) {
      best = r;
      best_score = score;
    }
  }
  if (chosen_rtg) *chosen_rtg = candidates[static_cast<size_t>(best)];
  return a_hats[static_cast<size_t>(best)];
}

EpisodeResult run_episode(const PolicyModel& model, const QEnsemble& ensemble,
                          Env& env, const InferenceConfig& cfg, Rng& rng,
                          std::vector<double>* rtg_trace) {
  (void)rng;  // rollouts are greedy and the envs are deterministic
  const std::vector<double> grid = candidate_rtgs(
      cfg.stats, cfg.candidate_count, cfg.candidate_max_multiplier);

  RolloutContext ctx(model.config().K, cfg.stats,
                     model.config().action_dim);
  ctx.begin(env.reset());

  EpisodeResult result;
  double locked = 0.0;
  bool locked_set = false;
  while (!env.done()) {
    std::vector<double> candidates;
    if (cfg.selection == RtgSelection::per_episode && locked_set) {
      candidates = {locked - ctx.realized_reward()};
    } else {
      candidates.reserve(grid.size());
      for (double c : grid) candidates.push_back(c - ctx.realized_reward());
    }
    double chosen = 0.0;
    const std::vector<double> action =
        select_action(model, ensemble, ctx, candidates, cfg.aggregate, &chosen);
    if (rtg_trace) rtg_trace->push_back(chosen);
    if (!locked_set) {
      // remember the undecremented pick for per-episode mode
      locked = chosen + ctx.realized_reward();
      locked_set = true;
    }
    const StepResult res = env.step(action);
    ctx.advance(chosen, action, res.reward, res.state);
    result.episode_return += res.reward;
    ++result.steps;
  }
  result.success = env.succeeded();
  return result;
}

EvalReport evaluate_policy(const PolicyModel& model, const QEnsemble& ensemble,
                           const Env& env, const InferenceConfig& cfg,
                           int episodes, uint64_t seed) {
  if (episodes < 1) throw ConfigError("evaluate_policy: episodes must be >= 1");
  const double optimal = env.optimal_return();
  const double baseline = random_policy_return(env, 200, seed);

  Rng rng(seed);
  double sum = 0, sumsq = 0, nsum = 0, nsumsq = 0;
  int successes = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    auto e = env.clone();
    const EpisodeResult r = run_episode(model, ensemble, *e, cfg, rng);
    const double ns = normalized_score(r.episode_return, optimal, baseline);
    sum += r.episode_return;
    sumsq += r.episode_return * r.episode_return;
    nsum += ns;
    nsumsq += ns * ns;
    if (r.success) ++successes;
  }
  EvalReport rep;
  rep.raw_return_mean = sum / episodes;
  rep.raw_return_std =
      std::sqrt(std::max(0.0, sumsq / episodes - rep.raw_return_mean * rep.raw_return_mean));
  rep.normalized_score_mean = nsum / episodes;
  rep.normalized_score_std = std::sqrt(std::max(
      0.0, nsumsq / episodes - rep.normalized_score_mean * rep.normalized_score_mean));
  rep.success_rate = static_cast<double>(successes) / episodes;
  return rep;
}

}  // namespace qdc
