#include "qdc/conv_policy.hpp"

#include <cmath>

#include "qdc/errors.hpp"

namespace qdc {

using ad::Tape;
using ad::Tensor;

namespace {

Tensor uniform_init(int rows, int cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Tensor t = Tensor::zeros({rows, cols}, true);
  for (double& v : t.value()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor normal_init(int rows, int cols, double scale, Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols}, true);
  for (double& v : t.value()) v = scale * rng.normal();
  return t;
}

}  // namespace

PolicyModel::PolicyModel(const PolicyConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.K < 1 || cfg.d < 1 || cfg.n_blocks < 1 || cfg.conv_window < 1 ||
      cfg.state_dim < 1 || cfg.action_dim < 1 || cfg.max_timestep < 1) {
    throw ConfigError("policy config: all dimensions must be positive");
  }
  const int d = cfg.d;

  emb_rtg_w = normal_init(1, d, 0.02, rng);
  emb_rtg_b = Tensor::zeros({d}, true);
  emb_state_w = normal_init(cfg.state_dim, d, 0.02, rng);
  emb_state_b = Tensor::zeros({d}, true);
  emb_action_w = normal_init(cfg.action_dim, d, 0.02, rng);
  emb_action_b = Tensor::zeros({d}, true);
  // zero-initialized so timesteps never seen in training stay inert
  emb_timestep = Tensor::zeros({cfg.max_timestep, d}, true);

  blocks_.reserve(static_cast<size_t>(cfg.n_blocks));
  for (int b = 0; b < cfg.n_blocks; ++b) {
    ConvBlock blk;
    blk.ln1_gain = Tensor::full({d}, 1.0, true);
    blk.ln1_shift = Tensor::zeros({d}, true);
    // near-identity start: delta at the most recent tap
    blk.conv_kernel = Tensor::zeros({cfg.conv_window, d}, true);
    for (int c = 0; c < d; ++c)
      blk.conv_kernel.at(cfg.conv_window - 1, c) = 1.0;
    blk.conv_bias = Tensor::zeros({d}, true);
    blk.ln2_gain = Tensor::full({d}, 1.0, true);
    blk.ln2_shift = Tensor::zeros({d}, true);
    blk.ffn_w1 = uniform_init(d, 4 * d, rng);
    blk.ffn_b1 = Tensor::zeros({4 * d}, true);
    blk.ffn_w2 = uniform_init(4 * d, d, rng);
    blk.ffn_b2 = Tensor::zeros({d}, true);
    blocks_.push_back(std::move(blk));
  }

  head_w = uniform_init(d, cfg.action_dim, rng);
  head_b = Tensor::zeros({cfg.action_dim}, true);
}

ParamList PolicyModel::params() const {
  ParamList out;
  out.push_back({"emb_rtg.w", emb_rtg_w});
  out.push_back({"emb_rtg.b", emb_rtg_b});
  out.push_back({"emb_state.w", emb_state_w});
  out.push_back({"emb_state.b", emb_state_b});
  out.push_back({"emb_action.w", emb_action_w});
  out.push_back({"emb_action.b", emb_action_b});
  out.push_back({"emb_timestep", emb_timestep});
  for (size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    const ConvBlock& blk = blocks_[b];
    out.push_back({p + "ln1.gain", blk.ln1_gain});
    out.push_back({p + "ln1.shift", blk.ln1_shift});
    out.push_back({p + "conv.kernel", blk.conv_kernel});
    out.push_back({p + "conv.bias", blk.conv_bias});
    out.push_back({p + "ln2.gain", blk.ln2_gain});
    out.push_back({p + "ln2.shift", blk.ln2_shift});
    out.push_back({p + "ffn.w1", blk.ffn_w1});
    out.push_back({p + "ffn.b1", blk.ffn_b1});
    out.push_back({p + "ffn.w2", blk.ffn_w2});
    out.push_back({p + "ffn.b2", blk.ffn_b2});
  }
  out.push_back({"head.w", head_w});
  out.push_back({"head.b", head_b});
  return out;
}

PolicyModel PolicyModel::clone(bool requires_grad) const {
  PolicyModel copy;
  copy.cfg_ = cfg_;
  auto dup = [requires_grad](const Tensor& t) {
    Tensor c = t.detached();
    c.set_requires_grad(requires_grad);
    return c;
  };
  copy.emb_rtg_w = dup(emb_rtg_w);
  copy.emb_rtg_b = dup(emb_rtg_b);
  copy.emb_state_w = dup(emb_state_w);
  copy.emb_state_b = dup(emb_state_b);
  copy.emb_action_w = dup(emb_action_w);
  copy.emb_action_b = dup(emb_action_b);
  copy.emb_timestep = dup(emb_timestep);
  copy.blocks_.reserve(blocks_.size());
  for (const ConvBlock& blk : blocks_) {
    ConvBlock c;
    c.ln1_gain = dup(blk.ln1_gain);
    c.ln1_shift = dup(blk.ln1_shift);
    c.conv_kernel = dup(blk.conv_kernel);
    c.conv_bias = dup(blk.conv_bias);
    c.ln2_gain = dup(blk.ln2_gain);
    c.ln2_shift = dup(blk.ln2_shift);
    c.ffn_w1 = dup(blk.ffn_w1);
    c.ffn_b1 = dup(blk.ffn_b1);
    c.ffn_w2 = dup(blk.ffn_w2);
    c.ffn_b2 = dup(blk.ffn_b2);
    copy.blocks_.push_back(std::move(c));
  }
  copy.head_w = dup(head_w);
  copy.head_b = dup(head_b);
  return copy;
}

Tensor PolicyModel::interleave_embed(Tape& tape, const ContextWindow& w) const {
  return embed_batch(tape, {w});
}

Tensor PolicyModel::embed_batch(Tape& tape,
                                const std::vector<ContextWindow>& batch) const {
  const int K = cfg_.K;
  const int d = cfg_.d;
  const int B = static_cast<int>(batch.size());
  for (const ContextWindow& w : batch) {
    if (w.K != K || w.state_dim != cfg_.state_dim ||
        w.action_dim != cfg_.action_dim) {
      throw ConfigError("embed: window (K=" + std::to_string(w.K) +
                        ", sd=" + std::to_string(w.state_dim) +
                        ", ad=" + std::to_string(w.action_dim) +
                        ") does not match model (K=" + std::to_string(K) +
                        ", sd=" + std::to_string(cfg_.state_dim) +
                        ", ad=" + std::to_string(cfg_.action_dim) + ")");
    }
  }
  const int L = 3 * K - 1;

  // inputs as constant matrices; padded slots are zero rows
  Tensor rtg_in = Tensor::zeros({B * K, 1});
  Tensor state_in = Tensor::zeros({B * K, cfg_.state_dim});
  Tensor act_in =
      K > 1 ? Tensor::zeros({B * (K - 1), cfg_.action_dim}) : Tensor();
  std::vector<int> ts_idx(static_cast<size_t>(B * K), 0);
  std::vector<int> ts_head;
  ts_head.reserve(static_cast<size_t>(B * (K - 1)));
  for (int b = 0; b < B; ++b) {
    const ContextWindow& w = batch[static_cast<size_t>(b)];
    for (int i = 0; i < K; ++i) {
      const int r = b * K + i;
      rtg_in.at(r, 0) = w.rtgs[static_cast<size_t>(i)] / cfg_.rtg_scale;
      for (int c = 0; c < cfg_.state_dim; ++c)
        state_in.at(r, c) = w.states[static_cast<size_t>(i)][static_cast<size_t>(c)];
      if (i < K - 1)
        for (int c = 0; c < cfg_.action_dim; ++c)
          act_in.at(b * (K - 1) + i, c) =
              w.actions[static_cast<size_t>(i)][static_cast<size_t>(c)];
      const int ts = w.timesteps[static_cast<size_t>(i)];
      if (ts < 0 || ts >= cfg_.max_timestep) {
        throw ConfigError("timestep " + std::to_string(ts) +
                          " outside embedding table of size " +
                          std::to_string(cfg_.max_timestep));
      }
      ts_idx[static_cast<size_t>(r)] = ts;
      if (i < K - 1) ts_head.push_back(ts);
    }
  }

  Tensor ts_emb = tape.select_rows(emb_timestep, ts_idx);
  Tensor e_rtg = tape.add(
      tape.add_rowwise(tape.matmul(rtg_in, emb_rtg_w), emb_rtg_b), ts_emb);
  Tensor e_state = tape.add(
      tape.add_rowwise(tape.matmul(state_in, emb_state_w), emb_state_b),
      ts_emb);
  Tensor e_act;
  if (K > 1) {
    Tensor ts_emb_head = tape.select_rows(emb_timestep, ts_head);
    e_act = tape.add(
        tape.add_rowwise(tape.matmul(act_in, emb_action_w), emb_action_b),
        ts_emb_head);
  }

  // interleave R_0, s_0, a_0, ..., R_{K-1}, s_{K-1} within each window
  std::vector<Tensor> groups{e_rtg, e_state};
  if (K > 1) groups.push_back(e_act);
  Tensor stacked = tape.concat_rows(groups);
  std::vector<int> perm;
  perm.reserve(static_cast<size_t>(B * L));
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < K; ++i) {
      perm.push_back(b * K + i);
      perm.push_back(B * K + b * K + i);
      if (i < K - 1) perm.push_back(2 * B * K + b * (K - 1) + i);
    }
  }
  Tensor tokens = tape.select_rows(stacked, perm);

  // zero out tokens of padded slots
  Tensor mask = Tensor::zeros({B * L, d});
  for (int b = 0; b < B; ++b) {
    const int first = batch[static_cast<size_t>(b)].first_valid();
    for (int i = first; i < K; ++i) {
      for (int c = 0; c < d; ++c) {
        mask.at(b * L + 3 * i, c) = 1.0;
        mask.at(b * L + 3 * i + 1, c) = 1.0;
        if (i < K - 1) mask.at(b * L + 3 * i + 2, c) = 1.0;
      }
    }
  }
  return tape.mul(tokens, mask);
}

Tensor PolicyModel::forward(Tape& tape, const ContextWindow& w) const {
  return forward_batch(tape, {w});
}

Tensor PolicyModel::forward_batch(Tape& tape,
                                  const std::vector<ContextWindow>& batch) const {
  const int K = cfg_.K;
  const int L = 3 * K - 1;
  const int B = static_cast<int>(batch.size());
  Tensor x = embed_batch(tape, batch);
  for (const ConvBlock& blk : blocks_) {
    Tensor n1 = tape.layer_norm(x, blk.ln1_gain, blk.ln1_shift, cfg_.ln_eps);
    Tensor mixed =
        tape.causal_conv1d_blocks(n1, blk.conv_kernel, blk.conv_bias, L);
    Tensor h = tape.add(mixed, x);

    Tensor n2 = tape.layer_norm(h, blk.ln2_gain, blk.ln2_shift, cfg_.ln_eps);
    Tensor f1 = tape.gelu(
        tape.add_rowwise(tape.matmul(n2, blk.ffn_w1), blk.ffn_b1));
    Tensor f2 = tape.add_rowwise(tape.matmul(f1, blk.ffn_w2), blk.ffn_b2);
    x = tape.add(f2, h);
  }
  // one prediction per state token
  std::vector<int> state_rows;
  state_rows.reserve(static_cast<size_t>(B * K));
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < K; ++i) state_rows.push_back(b * L + 3 * i + 1);
  Tensor at_states = tape.select_rows(x, state_rows);
  return tape.tanh(
      tape.add_rowwise(tape.matmul(at_states, head_w), head_b));
}

std::vector<double> PolicyModel::predict_last(const ContextWindow& w) const {
  Tape tape(false);
  Tensor preds = forward(tape, w);
  std::vector<double> out(static_cast<size_t>(cfg_.action_dim));
  for (int c = 0; c < cfg_.action_dim; ++c) out[static_cast<size_t>(c)] = preds.at(cfg_.K - 1, c);
  return out;
}

std::vector<std::vector<double>> PolicyModel::predict_last_batch(
    const std::vector<ContextWindow>& batch) const {
  Tape tape(false);
  Tensor preds = forward_batch(tape, batch);
  std::vector<std::vector<double>> out(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    out[b].resize(static_cast<size_t>(cfg_.action_dim));
    for (int c = 0; c < cfg_.action_dim; ++c)
      out[b][static_cast<size_t>(c)] =
          preds.at(static_cast<int>(b) * cfg_.K + cfg_.K - 1, c);
  }
  return out;
}

Tensor bc_loss(Tape& tape, const PolicyModel& model,
               const std::vector<ContextWindow>& batch) {
  if (batch.empty()) throw UsageError("bc_loss: empty batch");
  const int K = model.config().K;
  const int ad = model.config().action_dim;
  Tensor preds = model.forward_batch(tape, batch);

  std::vector<Tensor> per_window;
  per_window.reserve(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    const ContextWindow& w = batch[b];
    std::vector<int> valid;
    for (int i = w.first_valid(); i < K; ++i)
      valid.push_back(static_cast<int>(b) * K + i);
    Tensor pred_valid = tape.select_rows(preds, valid);
    Tensor target = Tensor::zeros({static_cast<int>(valid.size()), ad});
    for (size_t r = 0; r < valid.size(); ++r)
      for (int c = 0; c < ad; ++c)
        target.at(static_cast<int>(r), c) =
            w.actions[static_cast<size_t>(w.first_valid() + static_cast<int>(r))]
                     [static_cast<size_t>(c)];
    per_window.push_back(tape.mse(pred_valid, target));
  }
  return tape.mean(tape.concat_rows(per_window));
}

}  // namespace qdc
