#include "qdc/optim.hpp"

#include <cmath>

#include "qdc/errors.hpp"

namespace qdc {

void zero_grads(ParamList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

double clip_global_norm(ParamList& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (double& g : p.tensor.grad()) g *= s;
    }
  }
  return norm;
}

void polyak_blend(const ParamList& online, ParamList& target, double tau) {
  if (online.size() != target.size()) {
    throw UsageError("polyak_blend: parameter lists differ in length");
  }
  for (size_t i = 0; i < online.size(); ++i) {
    const auto& src = online[i].tensor.value();
    auto& dst = target[i].tensor.value();
    if (src.size() != dst.size()) {
      throw UsageError("polyak_blend: size mismatch at " + online[i].name);
    }
    for (size_t k = 0; k < src.size(); ++k)
      dst[k] = tau * src[k] + (1.0 - tau) * dst[k];
  }
}

void copy_values(const ParamList& online, ParamList& target) {
  polyak_blend(online, target, 1.0);
}

Adam::Adam(ParamList params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  slots_.reserve(params.size());
  for (auto& p : params) {
    Slot s;
    s.param = p.tensor;
    s.m.assign(p.tensor.value().size(), 0.0);
    s.v.assign(p.tensor.value().size(), 0.0);
    slots_.push_back(std::move(s));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& s : slots_) {
    auto& val = s.param.value();
    const bool has_grad = s.param.has_grad();
    for (size_t i = 0; i < val.size(); ++i) {
      const double g = has_grad ? s.param.grad()[i] : 0.0;
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

}  // namespace qdc
