#include "qdc/q_module.hpp"

#include <cmath>

#include "qdc/errors.hpp"

namespace qdc {

using ad::Tape;
using ad::Tensor;

QAggregate parse_q_aggregate(const std::string& text) {
  if (text == "min") return QAggregate::min_pair;
  if (text == "q1") return QAggregate::q1_only;
  throw ConfigError("q_aggregate must be \"min\" or \"q1\", got \"" + text +
                    "\"");
}

namespace {

Tensor uniform_init(int rows, int cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Tensor t = Tensor::zeros({rows, cols}, true);
  for (double& v : t.value()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

QNetwork::QNetwork(int state_dim, int action_dim, int hidden, Rng& rng)
    : state_dim_(state_dim), action_dim_(action_dim) {
  if (state_dim < 1 || action_dim < 1 || hidden < 1) {
    throw ConfigError("q network: dimensions must be positive");
  }
  const int in = state_dim + action_dim;
  w1 = uniform_init(in, hidden, rng);
  b1 = Tensor::zeros({hidden}, true);
  w2 = uniform_init(hidden, hidden, rng);
  b2 = Tensor::zeros({hidden}, true);
  w3 = uniform_init(hidden, 1, rng);
  b3 = Tensor::zeros({1}, true);
}

Tensor QNetwork::forward(Tape& tape, const Tensor& sa) const {
  if (sa.cols() != state_dim_ + action_dim_) {
    throw DimensionError("q forward: input " + sa.shape_str() +
                         " does not match state_dim+action_dim=" +
                         std::to_string(state_dim_ + action_dim_));
  }
  Tensor h1 = tape.relu(tape.add_rowwise(tape.matmul(sa, w1), b1));
  Tensor h2 = tape.relu(tape.add_rowwise(tape.matmul(h1, w2), b2));
  return tape.add_rowwise(tape.matmul(h2, w3), b3);
}

double QNetwork::value(const std::vector<double>& state,
                       const std::vector<double>& action) const {
  if (static_cast<int>(state.size()) != state_dim_ ||
      static_cast<int>(action.size()) != action_dim_) {
    throw DimensionError("q value: got state " + std::to_string(state.size()) +
                         ", action " + std::to_string(action.size()) +
                         "; expected " + std::to_string(state_dim_) + ", " +
                         std::to_string(action_dim_));
  }
  std::vector<double> sa(state);
  sa.insert(sa.end(), action.begin(), action.end());
  Tape tape(false);
  return forward(tape, Tensor::matrix(1, state_dim_ + action_dim_, sa)).item();
}

ParamList QNetwork::params(const std::string& prefix) const {
  return {{prefix + ".w1", w1}, {prefix + ".b1", b1}, {prefix + ".w2", w2},
          {prefix + ".b2", b2}, {prefix + ".w3", w3}, {prefix + ".b3", b3}};
}

QNetwork QNetwork::clone(bool requires_grad) const {
  QNetwork copy;
  copy.state_dim_ = state_dim_;
  copy.action_dim_ = action_dim_;
  auto dup = [requires_grad](const Tensor& t) {
    Tensor c = t.detached();
    c.set_requires_grad(requires_grad);
    return c;
  };
  copy.w1 = dup(w1);
  copy.b1 = dup(b1);
  copy.w2 = dup(w2);
  copy.b2 = dup(b2);
  copy.w3 = dup(w3);
  copy.b3 = dup(b3);
  return copy;
}

QEnsemble::QEnsemble(int state_dim, int action_dim, int hidden,
                     const PolicyModel& policy, double gamma,
                     double polyak_tau, Rng& rng)
    : q1_(state_dim, action_dim, hidden, rng),
      q2_(state_dim, action_dim, hidden, rng),
      q1t_(q1_.clone(false)),
      q2t_(q2_.clone(false)),
      policy_target_(policy.clone(false)),
      gamma_(gamma),
      polyak_tau_(polyak_tau) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigError("gamma must be in (0,1)");
  }
  if (!(polyak_tau > 0.0 && polyak_tau <= 1.0)) {
    throw ConfigError("polyak_tau must be in (0,1]");
  }
}

ParamList QEnsemble::online_params() const {
  ParamList out = q1_.params("q1");
  for (auto& p : q2_.params("q2")) out.push_back(p);
  return out;
}

ParamList QEnsemble::q_params() const { return online_params(); }

double QEnsemble::q_value(const std::vector<double>& state,
                          const std::vector<double>& action,
                          QWhich which) const {
  switch (which) {
    case QWhich::q1:
      return q1_.value(state, action);
    case QWhich::q2:
      return q2_.value(state, action);
    case QWhich::min:
      return std::min(q1_.value(state, action), q2_.value(state, action));
    case QWhich::target_min:
      return std::min(q1t_.value(state, action), q2t_.value(state, action));
  }
  throw UsageError("q_value: bad selector");
}

std::vector<double> QEnsemble::target_action(const ContextWindow& w) const {
  if (override_) return override_(w);
  return policy_target_.predict_last(w);
}

void QEnsemble::set_target_action_override(
    std::function<std::vector<double>(const ContextWindow&)> fn) {
  override_ = std::move(fn);
}

void QEnsemble::polyak_update(const PolicyModel& online_policy, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("polyak tau must be in (0,1]");
  ParamList q1p = q1_.params("q1"), q1tp = q1t_.params("q1");
  ParamList q2p = q2_.params("q2"), q2tp = q2t_.params("q2");
  polyak_blend(q1p, q1tp, tau);
  polyak_blend(q2p, q2tp, tau);
  ParamList pp = online_policy.params(), ptp = policy_target_.params();
  polyak_blend(pp, ptp, tau);
}

void QEnsemble::load_q_values(const QNetwork& new_q1, const QNetwork& new_q2) {
  ParamList src1 = new_q1.params("q1"), dst1 = q1_.params("q1");
  ParamList src2 = new_q2.params("q2"), dst2 = q2_.params("q2");
  copy_values(src1, dst1);
  copy_values(src2, dst2);
}

namespace {

std::vector<BellmanTarget> targets_with_bootstrap(const ContextWindow& w,
                                                  double gamma,
                                                  double bootstrap) {
  std::vector<BellmanTarget> out;
  const int K = w.K;
  for (int m = w.first_valid(); m <= K - 2; ++m) {
    double target = 0.0;
    double disc = 1.0;
    for (int j = m; j <= K - 2; ++j) {
      target += disc * w.rewards[static_cast<size_t>(j)];
      disc *= gamma;
    }
    if (w.final_step_terminal) {
      // episode really ends here: the final reward is realized, nothing to
      // bootstrap beyond it
      target += disc * w.rewards[static_cast<size_t>(K - 1)];
    } else {
      target += disc * bootstrap;
    }
    out.push_back({m, target});
  }
  return out;
}

}  // namespace

std::vector<BellmanTarget> bellman_targets(const QEnsemble& ensemble,
                                           const ContextWindow& w) {
  if (w.valid_len < 2) return {};
  const int K = w.K;
  double bootstrap = 0.0;
  if (!w.final_step_terminal) {
    const std::vector<double> a_hat = ensemble.target_action(w);
    bootstrap = std::min(
        ensemble.q1_target().value(w.states[static_cast<size_t>(K - 1)], a_hat),
        ensemble.q2_target().value(w.states[static_cast<size_t>(K - 1)], a_hat));
  }
  return targets_with_bootstrap(w, ensemble.gamma(), bootstrap);
}

Tensor critic_loss(Tape& tape, const QEnsemble& ensemble,
                   const std::vector<ContextWindow>& batch) {
  if (batch.empty()) throw UsageError("critic_loss: empty batch");
  const int sd = ensemble.q1().state_dim();
  const int ad = ensemble.q1().action_dim();

  // bootstrap values for all non-terminal windows in two batched passes:
  // target-policy actions, then target-critic scores
  std::vector<double> bootstraps(batch.size(), 0.0);
  if (!ensemble.has_target_action_override()) {
    std::vector<size_t> need;
    std::vector<ContextWindow> boot_windows;
    for (size_t b = 0; b < batch.size(); ++b) {
      const ContextWindow& w = batch[b];
      if (w.valid_len >= 2 && !w.final_step_terminal) {
        need.push_back(b);
        boot_windows.push_back(w);
      }
    }
    if (!need.empty()) {
      const auto a_hats =
          ensemble.policy_target().predict_last_batch(boot_windows);
      std::vector<double> xs;
      xs.reserve(need.size() * static_cast<size_t>(sd + ad));
      for (size_t i = 0; i < need.size(); ++i) {
        const ContextWindow& w = batch[need[i]];
        const auto& s = w.states[static_cast<size_t>(w.K - 1)];
        xs.insert(xs.end(), s.begin(), s.end());
        xs.insert(xs.end(), a_hats[i].begin(), a_hats[i].end());
      }
      Tape boot_tape(false);
      Tensor sa = Tensor::matrix(static_cast<int>(need.size()), sd + ad,
                                 std::move(xs));
      Tensor v1 = ensemble.q1_target().forward(boot_tape, sa);
      Tensor v2 = ensemble.q2_target().forward(boot_tape, sa);
      for (size_t i = 0; i < need.size(); ++i)
        bootstraps[need[i]] = std::min(v1.at(static_cast<int>(i), 0),
                                       v2.at(static_cast<int>(i), 0));
    }
  }

  std::vector<double> xs;
  std::vector<double> ys;
  int n = 0;
  for (size_t b = 0; b < batch.size(); ++b) {
    const ContextWindow& w = batch[b];
    if (w.valid_len < 2) continue;
    const std::vector<BellmanTarget> targets =
        ensemble.has_target_action_override()
            ? bellman_targets(ensemble, w)
            : targets_with_bootstrap(w, ensemble.gamma(), bootstraps[b]);
    for (const BellmanTarget& bt : targets) {
      const auto& s = w.states[static_cast<size_t>(bt.slot)];
      const auto& a = w.actions[static_cast<size_t>(bt.slot)];
      xs.insert(xs.end(), s.begin(), s.end());
      xs.insert(xs.end(), a.begin(), a.end());
      ys.push_back(bt.value);
      ++n;
    }
  }
  if (n == 0) return Tensor::scalar(0.0);

  Tensor sa = Tensor::matrix(n, sd + ad, std::move(xs));
  Tensor target = Tensor::matrix(n, 1, std::move(ys));
  Tensor l1 = tape.mse(ensemble.q1().forward(tape, sa), target);
  Tensor l2 = tape.mse(ensemble.q2().forward(tape, sa), target);
  return tape.scale(tape.add(l1, l2), 0.5);
}

}  // namespace qdc
