#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "qdc/rng.hpp"
#include "qdc/tensor.hpp"
#include "qdc/trajectory.hpp"

namespace qdc::test {

// Central finite difference of eval() with respect to one slot.
inline double fd_grad(const std::function<double()>& eval, double& slot,
                      double h = 1e-5) {
  const double saved = slot;
  slot = saved + h;
  const double up = eval();
  slot = saved - h;
  const double down = eval();
  slot = saved;
  return (up - down) / (2.0 * h);
}

inline bool grad_close(double analytic, double numeric, double rel = 1e-4) {
  const double scale = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
  return std::fabs(analytic - numeric) / scale <= rel;
}

// Checks every entry of every parameter against finite differences of the
// loss builder. The builder must rebuild the whole graph from scratch.
inline bool check_grads(const std::function<double()>& loss_value,
                        const std::function<void()>& backward_once,
                        std::vector<ad::Tensor> params, double rel = 1e-4,
                        double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  backward_once();
  for (auto& p : params) {
    for (long i = 0; i < p.size(); ++i) {
      const double analytic =
          p.has_grad() ? p.grad()[static_cast<size_t>(i)] : 0.0;
      const double numeric =
          fd_grad(loss_value, p.value()[static_cast<size_t>(i)], h);
      if (!grad_close(analytic, numeric, rel)) return false;
    }
  }
  for (auto& p : params) p.zero_grad();
  return true;
}

inline ad::Tensor random_tensor(std::vector<int> shape, Rng& rng,
                                bool requires_grad = true, double scale = 1.0) {
  ad::Tensor t = ad::Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.value()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

inline ContextWindow random_window(int K, int sd, int ad_, Rng& rng,
                                   int max_timestep, bool pad_some = true) {
  ContextWindow w;
  w.K = K;
  w.state_dim = sd;
  w.action_dim = ad_;
  w.valid_len = pad_some ? 1 + rng.uniform_int(K) : K;
  w.rtgs.assign(static_cast<size_t>(K), 0.0);
  w.states.assign(static_cast<size_t>(K), std::vector<double>(static_cast<size_t>(sd), 0.0));
  w.actions.assign(static_cast<size_t>(K), std::vector<double>(static_cast<size_t>(ad_), 0.0));
  w.rewards.assign(static_cast<size_t>(K), 0.0);
  w.timesteps.assign(static_cast<size_t>(K), 0);
  const int first = K - w.valid_len;
  const int t0 = rng.uniform_int(std::max(1, max_timestep - K));
  for (int i = first; i < K; ++i) {
    w.rtgs[static_cast<size_t>(i)] = rng.uniform(-2.0, 2.0);
    for (double& v : w.states[static_cast<size_t>(i)]) v = rng.uniform(-1.0, 1.0);
    for (double& v : w.actions[static_cast<size_t>(i)]) v = rng.uniform(-1.0, 1.0);
    w.rewards[static_cast<size_t>(i)] = rng.uniform(-1.0, 1.0);
    w.timesteps[static_cast<size_t>(i)] = t0 + (i - first);
  }
  w.final_step_terminal = rng.uniform() < 0.3;
  return w;
}

}  // namespace qdc::test
