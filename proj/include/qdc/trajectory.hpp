#pragma once

#include <string>
#include <vector>

#include "qdc/rng.hpp"

namespace qdc {

// One logged episode. `terminal` distinguishes a real episode end from a
// horizon timeout; Bellman targets bootstrap past timeouts but not past
// terminal states.
struct Trajectory {
  std::vector<std::vector<double>> states;   // T x state_dim
  std::vector<std::vector<double>> actions;  // T x action_dim
  std::vector<double> rewards;               // T
  bool terminal = false;
  std::vector<double> rtg;                   // derived suffix sums, length T

  int length() const { return static_cast<int>(rewards.size()); }
  int state_dim() const { return states.empty() ? 0 : static_cast<int>(states[0].size()); }
  int action_dim() const { return actions.empty() ? 0 : static_cast<int>(actions[0].size()); }
  double total_return() const { return rtg.empty() ? 0.0 : rtg[0]; }
};

// Undiscounted suffix sums: out[t] = rewards[t] + out[t+1].
std::vector<double> compute_rtg(const std::vector<double>& rewards);

struct DatasetStats {
  std::vector<double> state_mean;
  std::vector<double> state_std;  // floored at 1e-6
  double return_max = 0.0;
  double return_min = 0.0;
};

// The K-step sub-trajectory fed to the policy. Slots before first_valid()
// are zero padding (episode start); states are normalized, rtgs and rewards
// are raw.
struct ContextWindow {
  int K = 0;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> rtgs;                  // K
  std::vector<std::vector<double>> states;   // K x state_dim
  std::vector<std::vector<double>> actions;  // K x action_dim
  std::vector<double> rewards;               // K
  std::vector<int> timesteps;                // K absolute indices
  int valid_len = 0;
  bool final_step_terminal = false;

  int first_valid() const { return K - valid_len; }
};

ContextWindow sample_context(const Trajectory& traj, int t, int K,
                             const DatasetStats& stats);

class Dataset {
 public:
  Dataset() = default;
  static Dataset from_trajectories(std::vector<Trajectory> trajs);

  const std::vector<Trajectory>& trajectories() const { return trajs_; }
  const DatasetStats& stats() const { return stats_; }
  long total_steps() const { return total_steps_; }
  bool empty() const { return trajs_.empty(); }

  // Uniform over all (trajectory, t) pairs.
  std::vector<ContextWindow> sample_batch(int batch_size, int K,
                                          Rng& rng) const;

 private:
  std::vector<Trajectory> trajs_;
  DatasetStats stats_;
  std::vector<long> cum_steps_;
  long total_steps_ = 0;
};

// JSON-Lines file, one episode object per line:
//   {"states":[[..],..],"actions":[[..],..],"rewards":[..],"terminal":bool}
Dataset load_dataset(const std::string& path);
void save_dataset(const std::vector<Trajectory>& trajs,
                  const std::string& path);

}  // namespace qdc
