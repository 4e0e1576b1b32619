#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qdc::ad {

// A dense 64-bit float tensor. Cheap handle semantics: copying a Tensor
// copies a pointer, not the buffer. Values are written once by the op that
// creates them; gradients accumulate additively during backward passes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(int rows, int cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const std::vector<int>& shape() const;
  std::string shape_str() const;
  int ndim() const;
  long size() const;

  // 2-D accessors; a 1-D tensor behaves as a single row.
  int rows() const;
  int cols() const;

  bool requires_grad() const;
  void set_requires_grad(bool v);

  std::vector<double>& value();
  const std::vector<double>& value() const;
  double item() const;  // scalar tensors only

  double& at(int i);
  double at(int i) const;
  double& at(int i, int j);
  double at(int i, int j) const;

  // Gradient buffer, allocated (zeroed) on first touch. Tensor is a shared
  // handle, so the buffer stays writable through const handles; backward
  // closures accumulate into captured copies.
  std::vector<double>& grad() const;
  bool has_grad() const;
  void zero_grad() const;

  bool all_finite() const;

  // Same values, requires_grad=false, detached from any tape. Used to stop
  // gradient flow into a sub-network (e.g. critics during the policy pass).
  Tensor detached() const;

  bool same_buffer(const Tensor& other) const { return d_ == other.d_; }

 private:
  struct Data {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until needed
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
  explicit Tensor(std::shared_ptr<Data> d) : d_(std::move(d)) {}
};

// Records the forward pass and replays it in reverse for backward().
// One tape per training step; not thread-safe, tensors on a tape must not
// be shared across concurrently running tapes.
class Tape {
 public:
  // grad_enabled=false skips recording entirely (inference-only forward).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tensor matmul(const Tensor& a, const Tensor& b);

  // Depthwise causal convolution over rows: out[i][c] depends only on
  // x[i-w+1..i][c] (missing rows treated as zero).
  Tensor causal_conv1d(const Tensor& x, const Tensor& kernel,
                       const Tensor& bias);

  // Same, but rows form independent blocks of block_len rows (a batch of
  // sequences stacked vertically); the causal window never crosses a block
  // boundary.
  Tensor causal_conv1d_blocks(const Tensor& x, const Tensor& kernel,
                              const Tensor& bias, int block_len);

  // Per-row normalization to mean 0 / variance 1, then gain * y + shift.
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                    double eps);

  Tensor gelu(const Tensor& x);
  Tensor relu(const Tensor& x);
  Tensor tanh(const Tensor& x);

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  // x[L x d] + bias[d] broadcast over rows.
  Tensor add_rowwise(const Tensor& x, const Tensor& bias);

  Tensor mean(const Tensor& x);
  Tensor sum(const Tensor& x);
  Tensor mse(const Tensor& a, const Tensor& b);
  Tensor min_elementwise(const Tensor& a, const Tensor& b);

  Tensor concat_rows(std::span<const Tensor> parts);
  Tensor concat_cols(const Tensor& a, const Tensor& b);
  Tensor select_rows(const Tensor& x, std::vector<int> indices);
  Tensor embedding_lookup(const Tensor& table, int index);

  // Seeds d(loss)/d(loss)=1 and walks the tape in reverse, accumulating
  // into every requires_grad tensor reachable from the recorded ops. Leaf
  // gradients accumulate across calls; intermediate gradients are reset at
  // the start of each pass.
  void backward(const Tensor& loss);

  size_t num_nodes() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    std::function<void()> back;
    Tensor out;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;

  bool track(const Tensor& t) const;
  void record(std::function<void()> fn, const Tensor& out);
};

}  // namespace qdc::ad
