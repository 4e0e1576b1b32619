#pragma once

#include <string>
#include <vector>

#include "qdc/optim.hpp"
#include "qdc/rng.hpp"
#include "qdc/tensor.hpp"
#include "qdc/trajectory.hpp"

namespace qdc {

struct PolicyConfig {
  int K = 8;            // context steps
  int d = 16;           // hidden width
  int n_blocks = 1;     // stacked conv blocks
  int conv_window = 6;  // token-mixing taps (two full timesteps by default)
  int state_dim = 2;
  int action_dim = 2;
  int max_timestep = 1024;  // timestep embedding table size
  double rtg_scale = 100.0;
  double ln_eps = 1e-5;
};

// One residual block: token-mixing causal conv, then a position-wise FFN,
// each behind a layer norm.
struct ConvBlock {
  ad::Tensor ln1_gain, ln1_shift;
  ad::Tensor conv_kernel, conv_bias;  // [w x d], [d]
  ad::Tensor ln2_gain, ln2_shift;
  ad::Tensor ffn_w1, ffn_b1;  // [d x 4d], [4d]
  ad::Tensor ffn_w2, ffn_b2;  // [4d x d], [d]
};

// Return-conditioned convolutional sequence policy. Consumes the
// interleaved (rtg, state, action) token stream of a ContextWindow and
// predicts one action per state token, squashed to [-1,1] by tanh.
class PolicyModel {
 public:
  PolicyModel(const PolicyConfig& cfg, Rng& rng);

  const PolicyConfig& config() const { return cfg_; }

  // Stable-order named parameter list (shared handles, not copies).
  ParamList params() const;

  PolicyModel clone(bool requires_grad) const;

  // Token matrix of shape [(3K-1) x d]: for each step an rtg token and a
  // state token, plus an action token for every step but the last. Padded
  // slots contribute all-zero rows.
  ad::Tensor interleave_embed(ad::Tape& tape, const ContextWindow& w) const;

  // [K x action_dim] action predictions, one per state token.
  ad::Tensor forward(ad::Tape& tape, const ContextWindow& w) const;

  // Whole batch in one graph: windows stack as independent conv blocks.
  // Returns [(B*K) x action_dim]; window b's predictions are rows
  // b*K .. b*K+K-1.
  ad::Tensor forward_batch(ad::Tape& tape,
                           const std::vector<ContextWindow>& batch) const;

  // No-grad prediction at the final state token.
  std::vector<double> predict_last(const ContextWindow& w) const;

  // No-grad final-state-token predictions for many windows at once.
  std::vector<std::vector<double>> predict_last_batch(
      const std::vector<ContextWindow>& batch) const;

 private:
  PolicyConfig cfg_;
  ad::Tensor emb_rtg_w, emb_rtg_b;
  ad::Tensor emb_state_w, emb_state_b;
  ad::Tensor emb_action_w, emb_action_b;
  ad::Tensor emb_timestep;  // [max_timestep x d]
  std::vector<ConvBlock> blocks_;
  ad::Tensor head_w, head_b;

  PolicyModel() = default;
  ad::Tensor embed_batch(ad::Tape& tape,
                         const std::vector<ContextWindow>& batch) const;
};

// Mean over the batch of each window's mean squared action error on valid
// (unpadded) slots.
ad::Tensor bc_loss(ad::Tape& tape, const PolicyModel& model,
                   const std::vector<ContextWindow>& batch);

}  // namespace qdc
