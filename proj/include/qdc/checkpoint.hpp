#pragma once

#include <string>

#include "qdc/conv_policy.hpp"
#include "qdc/q_module.hpp"
#include "qdc/trainer.hpp"

namespace qdc {

struct Checkpoint {
  TrainConfig config;
  int state_dim = 0;
  int action_dim = 0;
  int max_timestep = 0;
  DatasetStats stats;
  PolicyModel policy;
  QEnsemble ensemble;
};

// Single JSON document {"format":"qdc-ckpt-v1","config":{..},"dims":{..},
// "stats":{..},"params":{name: nested array},"q_params":{..}}. The dataset
// stats ride along because deployment needs the same state normalization
// and return range the policy was trained with. Written atomically.
void save_checkpoint(const std::string& path, const TrainConfig& cfg,
                     const PolicyModel& policy, const QEnsemble& ensemble,
                     const DatasetStats& stats);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace qdc
