#include "qdc/tensor.hpp"

#include <cmath>
#include <numeric>
#include <utility>

#include "qdc/errors.hpp"

namespace qdc::ad {

namespace {

long product(const std::vector<int>& shape) {
  long n = 1;
  for (int s : shape) n *= s;
  return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto d = std::make_shared<Data>();
  d->value.assign(static_cast<size_t>(product(shape)), 0.0);
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.value()) v = value;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Tensor t = zeros({1}, requires_grad);
  t.value()[0] = value;
  return t;
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  auto d = std::make_shared<Data>();
  d->shape = {static_cast<int>(values.size())};
  d->value = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> values,
                      bool requires_grad) {
  if (static_cast<long>(values.size()) != static_cast<long>(rows) * cols) {
    throw DimensionError("matrix: " + std::to_string(values.size()) +
                         " values for shape [" + std::to_string(rows) + " x " +
                         std::to_string(cols) + "]");
  }
  auto d = std::make_shared<Data>();
  d->shape = {rows, cols};
  d->value = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

const std::vector<int>& Tensor::shape() const { return d_->shape; }

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (size_t i = 0; i < d_->shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(d_->shape[i]);
  }
  return s + "]";
}

int Tensor::ndim() const { return static_cast<int>(d_->shape.size()); }

long Tensor::size() const { return static_cast<long>(d_->value.size()); }

int Tensor::rows() const { return ndim() == 1 ? 1 : d_->shape[0]; }

int Tensor::cols() const {
  return ndim() == 1 ? d_->shape[0] : d_->shape[1];
}

bool Tensor::requires_grad() const { return d_->requires_grad; }

void Tensor::set_requires_grad(bool v) { d_->requires_grad = v; }

std::vector<double>& Tensor::value() { return d_->value; }

const std::vector<double>& Tensor::value() const { return d_->value; }

double Tensor::item() const {
  if (size() != 1) {
    throw UsageError("item() on non-scalar tensor of shape " + shape_str());
  }
  return d_->value[0];
}

double& Tensor::at(int i) { return d_->value[static_cast<size_t>(i)]; }
double Tensor::at(int i) const { return d_->value[static_cast<size_t>(i)]; }

double& Tensor::at(int i, int j) {
  return d_->value[static_cast<size_t>(i) * cols() + j];
}
double Tensor::at(int i, int j) const {
  return d_->value[static_cast<size_t>(i) * cols() + j];
}

std::vector<double>& Tensor::grad() const {
  if (d_->grad.empty()) d_->grad.assign(d_->value.size(), 0.0);
  return d_->grad;
}

bool Tensor::has_grad() const { return !d_->grad.empty(); }

void Tensor::zero_grad() const { d_->grad.clear(); }

bool Tensor::all_finite() const {
  for (double v : d_->value) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::detached() const {
  auto d = std::make_shared<Data>();
  d->shape = d_->shape;
  d->value = d_->value;
  d->requires_grad = false;
  return Tensor(std::move(d));
}

bool Tape::track(const Tensor& t) const {
  return grad_enabled_ && t.requires_grad();
}

void Tape::record(std::function<void()> fn, const Tensor& out) {
  nodes_.push_back({std::move(fn), out});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw UsageError("backward: loss must be scalar, got shape " +
                     loss.shape_str());
  }
  // intermediates start each pass clean so that repeated calls add exactly
  // one contribution to every leaf
  for (auto& n : nodes_) n.out.zero_grad();
  Tensor l = loss;
  l.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ: " + a.shape_str() +
                         " vs " + b.shape_str());
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n}, track(a) || track(b));
  {
    const double* pa = a.value().data();
    const double* pb = b.value().data();
    double* po = out.value().data();
    for (int i = 0; i < m; ++i) {
      double* po_i = po + static_cast<size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const double av = pa[static_cast<size_t>(i) * k + p];
        if (av == 0.0) continue;
        const double* pb_p = pb + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) po_i[j] += av * pb_p[j];
      }
    }
  }
  if (out.requires_grad()) {
    record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad().data();
      const double* pa = a.value().data();
      const double* pb = b.value().data();
      if (a.requires_grad()) {
        double* ga = a.grad().data();
        for (int i = 0; i < m; ++i) {
          const double* g_i = g + static_cast<size_t>(i) * n;
          for (int p = 0; p < k; ++p) {
            const double* pb_p = pb + static_cast<size_t>(p) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += g_i[j] * pb_p[j];
            ga[static_cast<size_t>(i) * k + p] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        double* gb = b.grad().data();
        for (int p = 0; p < k; ++p) {
          double* gb_p = gb + static_cast<size_t>(p) * n;
          for (int i = 0; i < m; ++i) {
            const double av = pa[static_cast<size_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* g_i = g + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) gb_p[j] += av * g_i[j];
          }
        }
      }
    }, out);
  }
  return out;
}

Tensor Tape::causal_conv1d(const Tensor& x, const Tensor& kernel,
                           const Tensor& bias) {
  return causal_conv1d_blocks(x, kernel, bias, x.rows());
}

Tensor Tape::causal_conv1d_blocks(const Tensor& x, const Tensor& kernel,
                                  const Tensor& bias, int block_len) {
  const int w = kernel.rows();
  if (w < 1) {
    throw ConfigError("causal_conv1d: window must be >= 1, got " +
                      std::to_string(w));
  }
  const int L = x.rows(), d = x.cols();
  if (block_len < 1 || L % block_len != 0) {
    throw DimensionError("causal_conv1d: " + std::to_string(L) +
                         " rows not divisible into blocks of " +
                         std::to_string(block_len));
  }
  if (kernel.cols() != d || bias.size() != d) {
    throw DimensionError("causal_conv1d: x " + x.shape_str() + ", kernel " +
                         kernel.shape_str() + ", bias " + bias.shape_str());
  }
  Tensor out =
      Tensor::zeros({L, d}, track(x) || track(kernel) || track(bias));
  for (int i = 0; i < L; ++i) {
    const int lo = i - i % block_len;  // first row of this block
    for (int c = 0; c < d; ++c) {
      double acc = bias.at(c);
      for (int j = 0; j < w; ++j) {
        const int src = i - (w - 1) + j;
        if (src >= lo) acc += kernel.at(j, c) * x.at(src, c);
      }
      out.at(i, c) = acc;
    }
  }
  if (out.requires_grad()) {
    record([x, kernel, bias, out, L, d, w, block_len]() mutable {
      if (!out.has_grad()) return;
      for (int i = 0; i < L; ++i) {
        const int lo = i - i % block_len;
        for (int c = 0; c < d; ++c) {
          const double g = out.grad()[static_cast<size_t>(i) * d + c];
          if (g == 0.0) continue;
          if (bias.requires_grad()) bias.grad()[static_cast<size_t>(c)] += g;
          for (int j = 0; j < w; ++j) {
            const int src = i - (w - 1) + j;
            if (src < lo) continue;
            if (x.requires_grad())
              x.grad()[static_cast<size_t>(src) * d + c] += kernel.at(j, c) * g;
            if (kernel.requires_grad())
              kernel.grad()[static_cast<size_t>(j) * d + c] += x.at(src, c) * g;
          }
        }
      }
    }, out);
  }
  return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain,
                        const Tensor& shift, double eps) {
  const int L = x.rows(), d = x.cols();
  if (gain.size() != d || shift.size() != d) {
    throw DimensionError("layer_norm: x " + x.shape_str() + ", gain " +
                         gain.shape_str() + ", shift " + shift.shape_str());
  }
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be > 0");
  Tensor out = Tensor::zeros({L, d}, track(x) || track(gain) || track(shift));
  // normalized rows saved for backward
  std::vector<double> xhat(static_cast<size_t>(L) * d);
  std::vector<double> inv_std(static_cast<size_t>(L));
  for (int i = 0; i < L; ++i) {
    double mu = 0.0;
    for (int c = 0; c < d; ++c) mu += x.at(i, c);
    mu /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) {
      const double dv = x.at(i, c) - mu;
      var += dv * dv;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = inv;
    for (int c = 0; c < d; ++c) {
      const double h = (x.at(i, c) - mu) * inv;
      xhat[static_cast<size_t>(i) * d + c] = h;
      out.at(i, c) = gain.at(c) * h + shift.at(c);
    }
  }
  if (out.requires_grad()) {
    record([x, gain, shift, out, L, d, xhat = std::move(xhat),
            inv_std = std::move(inv_std)]() mutable {
      if (!out.has_grad()) return;
      for (int i = 0; i < L; ++i) {
        double sum_dh = 0.0, sum_dh_h = 0.0;
        for (int c = 0; c < d; ++c) {
          const double g = out.grad()[static_cast<size_t>(i) * d + c];
          const double h = xhat[static_cast<size_t>(i) * d + c];
          if (gain.requires_grad()) gain.grad()[static_cast<size_t>(c)] += g * h;
          if (shift.requires_grad()) shift.grad()[static_cast<size_t>(c)] += g;
          const double dh = g * gain.at(c);
          sum_dh += dh;
          sum_dh_h += dh * h;
        }
        if (x.requires_grad()) {
          const double inv = inv_std[static_cast<size_t>(i)];
          for (int c = 0; c < d; ++c) {
            const double g = out.grad()[static_cast<size_t>(i) * d + c];
            const double h = xhat[static_cast<size_t>(i) * d + c];
            const double dh = g * gain.at(c);
            x.grad()[static_cast<size_t>(i) * d + c] +=
                inv * (dh - sum_dh / d - h * sum_dh_h / d);
          }
        }
      }
    }, out);
  }
  return out;
}

Tensor Tape::gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), track(x));
  const long n = x.size();
  for (long i = 0; i < n; ++i) {
    const double v = x.value()[static_cast<size_t>(i)];
    out.value()[static_cast<size_t>(i)] =
        0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  }
  if (out.requires_grad()) {
    record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      constexpr double kInvSqrt2Pi = 0.3989422804014327;
      for (long i = 0; i < n; ++i) {
        const double v = x.value()[static_cast<size_t>(i)];
        const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        x.grad()[static_cast<size_t>(i)] +=
            out.grad()[static_cast<size_t>(i)] * (cdf + v * pdf);
      }
    }, out);
  }
  return out;
}

Tensor Tape::relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), track(x));
  const long n = x.size();
  for (long i = 0; i < n; ++i) {
    const double v = x.value()[static_cast<size_t>(i)];
    out.value()[static_cast<size_t>(i)] = v > 0.0 ? v : 0.0;
  }
  if (out.requires_grad()) {
    record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      for (long i = 0; i < n; ++i) {
        if (x.value()[static_cast<size_t>(i)] > 0.0)
          x.grad()[static_cast<size_t>(i)] += out.grad()[static_cast<size_t>(i)];
      }
    }, out);
  }
  return out;
}

Tensor Tape::tanh(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), track(x));
  const long n = x.size();
  for (long i = 0; i < n; ++i)
    out.value()[static_cast<size_t>(i)] =
        std::tanh(x.value()[static_cast<size_t>(i)]);
  if (out.requires_grad()) {
    record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      for (long i = 0; i < n; ++i) {
        const double y = out.value()[static_cast<size_t>(i)];
        x.grad()[static_cast<size_t>(i)] +=
            out.grad()[static_cast<size_t>(i)] * (1.0 - y * y);
      }
    }, out);
  }
  return out;
}

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch: " +
                         a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape(), track(a) || track(b));
  const long n = a.size();
  for (long i = 0; i < n; ++i)
    out.value()[static_cast<size_t>(i)] =
        a.value()[static_cast<size_t>(i)] + b.value()[static_cast<size_t>(i)];
  if (out.requires_grad()) {
    record([a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      for (long i = 0; i < n; ++i) {
        const double g = out.grad()[static_cast<size_t>(i)];
        if (a.requires_grad()) a.grad()[static_cast<size_t>(i)] += g;
        if (b.requires_grad()) b.grad()[static_cast<size_t>(i)] += g;
      }
    }, out);
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape(), track(a) || track(b));
  const long n = a.size();
  for (long i = 0; i < n; ++i)
    out.value()[static_cast<size_t>(i)] =
        a.value()[static_cast<size_t>(i)] - b.value()[static_cast<size_t>(i)];
  if (out.requires_grad()) {
    record([a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      for (long i = 0; i < n; ++i) {
        const double g = out.grad()[static_cast<size_t>(i)];
        if (a.requires_grad()) a.grad()[static_cast<size_t>(i)] += g;
        if (b.requires_grad()) b.grad()[static_cast<size_t>(i)] -= g;
      }
    }, out);
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape(), track(a) || track(b));
  const long n = a.size();
  for (long i = 0; i < n; ++i)
    out.value()[static_cast<size_t>(i)] =
        a.value()[static_cast<size_t>(i)] * b.value()[static_cast<size_t>(i)];
  if (out.requires_grad()) {
    record([a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      for (long i = 0; i < n; ++i) {
        const double g = out.grad()[static_cast<size_t>(i)];
        if (a.requires_grad())
          a.grad()[static_cast<size_t>(i)] += g * b.value()[static_cast<size_t>(i)];
        if (b.requires_grad())
          b.grad()[static_cast<size_t>(i)] += g * a.value()[static_cast<size_t>(i)];
      }
    }, out);
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape(), track(a));
  const long n = a.size();
  for (long i = 0; i < n; ++i)
    out.value()[static_cast<size_t>(i)] = c * a.value()[static_cast<size_t>(i)];
  if (out.requires_grad()) {
    record([a, out, c, n]() mutable {
      if (!out.has_grad()) return;
      for (long i = 0; i < n; ++i)
        a.grad()[static_cast<size_t>(i)] += c * out.grad()[static_cast<size_t>(i)];
    }, out);
  }
  return out;
}

Tensor Tape::add_rowwise(const Tensor& x, const Tensor& bias) {
  const int L = x.rows(), d = x.cols();
  if (bias.size() != d) {
    throw DimensionError("add_rowwise: x " + x.shape_str() + " vs bias " +
                         bias.shape_str());
  }
  Tensor out = Tensor::zeros({L, d}, track(x) || track(bias));
  for (int i = 0; i < L; ++i)
    for (int c = 0; c < d; ++c) out.at(i, c) = x.at(i, c) + bias.at(c);
  if (out.requires_grad()) {
    record([x, bias, out, L, d]() mutable {
      if (!out.has_grad()) return;
      for (int i = 0; i < L; ++i)
        for (int c = 0; c < d; ++c) {
          const double g = out.grad()[static_cast<size_t>(i) * d + c];
          if (x.requires_grad())
            x.grad()[static_cast<size_t>(i) * d + c] += g;
          if (bias.requires_grad()) bias.grad()[static_cast<size_t>(c)] += g;
        }
    }, out);
  }
  return out;
}

Tensor Tape::mean(const Tensor& x) {
  const long n = x.size();
  double acc = 0.0;
  for (double v : x.value()) acc += v;
  Tensor out = Tensor::scalar(acc / static_cast<double>(n), track(x));
  if (out.requires_grad()) {
    record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0] / static_cast<double>(n);
      for (long i = 0; i < n; ++i) x.grad()[static_cast<size_t>(i)] += g;
    }, out);
  }
  return out;
}

Tensor Tape::sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.value()) acc += v;
  Tensor out = Tensor::scalar(acc, track(x));
  if (out.requires_grad()) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      for (double& gv : x.grad()) gv += g;
    }, out);
  }
  return out;
}

Tensor Tape::mse(const Tensor& a, const Tensor& b) {
  check_same_shape("mse", a, b);
  const long n = a.size();
  double acc = 0.0;
  for (long i = 0; i < n; ++i) {
    const double dv =
        a.value()[static_cast<size_t>(i)] - b.value()[static_cast<size_t>(i)];
    acc += dv * dv;
  }
  Tensor out =
      Tensor::scalar(acc / static_cast<double>(n), track(a) || track(b));
  if (out.requires_grad()) {
    record([a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const double g = 2.0 * out.grad()[0] / static_cast<double>(n);
      for (long i = 0; i < n; ++i) {
        const double dv = a.value()[static_cast<size_t>(i)] -
                          b.value()[static_cast<size_t>(i)];
        if (a.requires_grad()) a.grad()[static_cast<size_t>(i)] += g * dv;
        if (b.requires_grad()) b.grad()[static_cast<size_t>(i)] -= g * dv;
      }
    }, out);
  }
  return out;
}

Tensor Tape::min_elementwise(const Tensor& a, const Tensor& b) {
  check_same_shape("min_elementwise", a, b);
  Tensor out = Tensor::zeros(a.shape(), track(a) || track(b));
  const long n = a.size();
  for (long i = 0; i < n; ++i) {
    const double av = a.value()[static_cast<size_t>(i)];
    const double bv = b.value()[static_cast<size_t>(i)];
    out.value()[static_cast<size_t>(i)] = av <= bv ? av : bv;
  }
  if (out.requires_grad()) {
    record([a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      for (long i = 0; i < n; ++i) {
        const double g = out.grad()[static_cast<size_t>(i)];
        const bool take_a = a.value()[static_cast<size_t>(i)] <=
                            b.value()[static_cast<size_t>(i)];
        if (take_a && a.requires_grad()) a.grad()[static_cast<size_t>(i)] += g;
        if (!take_a && b.requires_grad()) b.grad()[static_cast<size_t>(i)] += g;
      }
    }, out);
  }
  return out;
}

Tensor Tape::concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_rows: no inputs");
  const int d = parts[0].cols();
  int total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    if (p.cols() != d) {
      throw DimensionError("concat_rows: column mismatch: " + p.shape_str() +
                           " vs " + parts[0].shape_str());
    }
    total += p.rows();
    rg = rg || track(p);
  }
  Tensor out = Tensor::zeros({total, d}, rg);
  int r = 0;
  for (const Tensor& p : parts) {
    for (int i = 0; i < p.rows(); ++i, ++r)
      for (int c = 0; c < d; ++c) out.at(r, c) = p.at(i, c);
  }
  if (out.requires_grad()) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    record([held = std::move(held), out, d]() mutable {
      if (!out.has_grad()) return;
      int r = 0;
      for (Tensor& p : held) {
        for (int i = 0; i < p.rows(); ++i, ++r) {
          if (!p.requires_grad()) continue;
          for (int c = 0; c < d; ++c)
            p.grad()[static_cast<size_t>(i) * d + c] +=
                out.grad()[static_cast<size_t>(r) * d + c];
        }
      }
    }, out);
  }
  return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row mismatch: " + a.shape_str() +
                         " vs " + b.shape_str());
  }
  const int L = a.rows(), da = a.cols(), db = b.cols();
  Tensor out = Tensor::zeros({L, da + db}, track(a) || track(b));
  for (int i = 0; i < L; ++i) {
    for (int c = 0; c < da; ++c) out.at(i, c) = a.at(i, c);
    for (int c = 0; c < db; ++c) out.at(i, da + c) = b.at(i, c);
  }
  if (out.requires_grad()) {
    record([a, b, out, L, da, db]() mutable {
      if (!out.has_grad()) return;
      for (int i = 0; i < L; ++i) {
        if (a.requires_grad())
          for (int c = 0; c < da; ++c)
            a.grad()[static_cast<size_t>(i) * da + c] +=
                out.grad()[static_cast<size_t>(i) * (da + db) + c];
        if (b.requires_grad())
          for (int c = 0; c < db; ++c)
            b.grad()[static_cast<size_t>(i) * db + c] +=
                out.grad()[static_cast<size_t>(i) * (da + db) + da + c];
      }
    }, out);
  }
  return out;
}

Tensor Tape::select_rows(const Tensor& x, std::vector<int> indices) {
  const int d = x.cols();
  for (int idx : indices) {
    if (idx < 0 || idx >= x.rows()) {
      throw DimensionError("select_rows: index " + std::to_string(idx) +
                           " out of range for " + x.shape_str());
    }
  }
  Tensor out = Tensor::zeros({static_cast<int>(indices.size()), d}, track(x));
  for (size_t r = 0; r < indices.size(); ++r)
    for (int c = 0; c < d; ++c)
      out.at(static_cast<int>(r), c) = x.at(indices[r], c);
  if (out.requires_grad()) {
    record([x, out, indices = std::move(indices), d]() mutable {
      if (!out.has_grad()) return;
      for (size_t r = 0; r < indices.size(); ++r)
        for (int c = 0; c < d; ++c)
          x.grad()[static_cast<size_t>(indices[r]) * d + c] +=
              out.grad()[r * static_cast<size_t>(d) + c];
    }, out);
  }
  return out;
}

Tensor Tape::embedding_lookup(const Tensor& table, int index) {
  if (index < 0 || index >= table.rows()) {
    throw DimensionError("embedding_lookup: index " + std::to_string(index) +
                         " out of range for table " + table.shape_str());
  }
  const int d = table.cols();
  Tensor out = Tensor::zeros({1, d}, track(table));
  for (int c = 0; c < d; ++c) out.at(0, c) = table.at(index, c);
  if (out.requires_grad()) {
    record([table, out, index, d]() mutable {
      if (!out.has_grad()) return;
      for (int c = 0; c < d; ++c)
        table.grad()[static_cast<size_t>(index) * d + c] +=
            out.grad()[static_cast<size_t>(c)];
    }, out);
  }
  return out;
}

}  // namespace qdc::ad
