#pragma once

#include <string>
#include <vector>

#include "qdc/tensor.hpp"

namespace qdc {

struct NamedParam {
  std::string name;
  ad::Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

void zero_grads(ParamList& params);

// Scales all gradients so their joint L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(ParamList& params, double max_norm);

// target <- tau * online + (1 - tau) * target, entry by entry.
// Lists must pair up by position.
void polyak_blend(const ParamList& online, ParamList& target, double tau);

// Hard copy of values from online into target.
void copy_values(const ParamList& online, ParamList& target);

// Standard Adam with bias correction. Moment buffers live here, one pair
// per parameter tensor.
class Adam {
 public:
  explicit Adam(ParamList params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  // Applies one update from the gradients currently in the parameters.
  // Missing (never-touched) gradients count as zero.
  void step();
  void zero_grad();

  long step_count() const { return t_; }
  double lr() const { return lr_; }

 private:
  struct Slot {
    ad::Tensor param;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace qdc
