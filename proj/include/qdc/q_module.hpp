#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qdc/conv_policy.hpp"
#include "qdc/optim.hpp"
#include "qdc/tensor.hpp"
#include "qdc/trajectory.hpp"

namespace qdc {

enum class QWhich { q1, q2, min, target_min };

// Which critic value feeds the policy-improvement term and the alpha
// normalization: min of the twin critics (default) or q1 alone.
enum class QAggregate { min_pair, q1_only };

QAggregate parse_q_aggregate(const std::string& text);

// Small MLP critic on concatenated (state, action) rows:
// (sd+ad) -> h -> h -> 1 with ReLU.
class QNetwork {
 public:
  QNetwork(int state_dim, int action_dim, int hidden, Rng& rng);

  // sa: [n x (sd+ad)] -> [n x 1]
  ad::Tensor forward(ad::Tape& tape, const ad::Tensor& sa) const;
  double value(const std::vector<double>& state,
               const std::vector<double>& action) const;

  ParamList params(const std::string& prefix) const;
  QNetwork clone(bool requires_grad) const;

  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }

 private:
  int state_dim_, action_dim_;
  ad::Tensor w1, b1, w2, b2, w3, b3;
  QNetwork() = default;
};

// Twin online critics plus frozen target copies and a target snapshot of
// the policy. Targets receive no gradient and track the online networks via
// Polyak averaging.
class QEnsemble {
 public:
  QEnsemble(int state_dim, int action_dim, int hidden,
            const PolicyModel& policy, double gamma, double polyak_tau,
            Rng& rng);

  double gamma() const { return gamma_; }
  double polyak_tau() const { return polyak_tau_; }

  QNetwork& q1() { return q1_; }
  QNetwork& q2() { return q2_; }
  const QNetwork& q1() const { return q1_; }
  const QNetwork& q2() const { return q2_; }
  const QNetwork& q1_target() const { return q1t_; }
  const QNetwork& q2_target() const { return q2t_; }
  const PolicyModel& policy_target() const { return policy_target_; }

  ParamList online_params() const;  // q1 + q2
  ParamList q_params() const;       // online only, for checkpoints

  double q_value(const std::vector<double>& state,
                 const std::vector<double>& action, QWhich which) const;

  // Action the target policy predicts at the window's final state token.
  // Tests may override this to evaluate a fixed external policy.
  std::vector<double> target_action(const ContextWindow& w) const;
  void set_target_action_override(
      std::function<std::vector<double>(const ContextWindow&)> fn);
  bool has_target_action_override() const {
    return static_cast<bool>(override_);
  }

  // target <- tau * online + (1-tau) * target for both critics and the
  // policy snapshot.
  void polyak_update(const PolicyModel& online_policy, double tau);

  // Replaces online critic values (tests).
  void load_q_values(const QNetwork& new_q1, const QNetwork& new_q2);

 private:
  QNetwork q1_, q2_, q1t_, q2t_;
  PolicyModel policy_target_;
  double gamma_, polyak_tau_;
  std::function<std::vector<double>(const ContextWindow&)> override_;
};

struct BellmanTarget {
  int slot = 0;      // window slot index m
  double value = 0;  // target for Q(s_m, a_m)
};

// n-step targets for every non-final valid slot of the window. The
// bootstrap is the min of the target critics at (s_t, a_hat_t) with a_hat_t
// from the target policy; windows whose final step ends the episode use the
// realized final reward instead of bootstrapping. Computed without gradient
// flow.
std::vector<BellmanTarget> bellman_targets(const QEnsemble& ensemble,
                                           const ContextWindow& w);

// Mean over all (window, m) target pairs and over both critics of the
// squared residual against the logged (s_m, a_m) values. Targets are
// constants; gradient reaches only the online critics.
ad::Tensor critic_loss(ad::Tape& tape, const QEnsemble& ensemble,
                       const std::vector<ContextWindow>& batch);

}  // namespace qdc
