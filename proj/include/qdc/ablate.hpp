#pragma once

#include <string>
#include <vector>

#include "qdc/trainer.hpp"

namespace qdc {

struct AblateOptions {
  uint64_t seed_base = 0;
  int threads = 1;       // parallel independent cells; results merge in a
                         // fixed order either way
  int eval_episodes = 30;
};

struct StitchCellResult {
  std::string method;  // "qdc" or "dc"
  uint64_t seed = 0;
  double normalized_score = 0;
  double success_rate = 0;
};

struct HorizonCellResult {
  int K = 0;
  uint64_t seed = 0;
  double normalized_score = 0;
  double success_rate = 0;
};

// Desk-scale configs for the stitching benchmark; single source of truth
// for both the CLI suite and the acceptance runs.
TrainConfig stitch_train_config(uint64_t seed, double eta, int K);
Dataset make_stitch_dataset(uint64_t seed);

// Trains QDC and the eta=0 ablation on the stitch-mix dataset over three
// seeds. The eta=0 runs are evaluated with a single candidate rtg (pure
// return conditioning).
std::vector<StitchCellResult> run_stitching_suite(const AblateOptions& opt);

// QDC only, K in {4, 8, 16} over three seeds.
std::vector<HorizonCellResult> run_horizon_suite(const AblateOptions& opt);

void write_stitching_csv(const std::vector<StitchCellResult>& rows,
                         const std::string& path);
void write_horizon_csv(const std::vector<HorizonCellResult>& rows,
                       const std::string& path);

int env_thread_cap();  // QDC_THREADS, default 1

}  // namespace qdc
