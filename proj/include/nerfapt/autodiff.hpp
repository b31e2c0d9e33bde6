// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace nerfapt::ad {

using Matrix = Eigen::MatrixXd;

/// Graph node. Values are stored channel-major: `value` has one row per
/// channel and `batch * length` columns, column index = b * length + l.
struct Node {
  Matrix value;
  Matrix grad;
  int batch = 1;
  int length = 1;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

/// Handle to a node in a reverse-mode graph. Copying shares the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Matrix value, int batch, int length);
  static Var constant(Matrix value) {
    const int cols = static_cast<int>(value.cols());
    return constant(std::move(value), 1, cols);
  }
  static Var parameter(Matrix value);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  /// Gradient; empty matrix means zero.
  const Matrix& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0, 0); }

  bool requires_grad() const { return node_->requires_grad; }
  int channels() const { return static_cast<int>(node_->value.rows()); }
  int batch() const { return node_->batch; }
  int length() const { return node_->length; }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds an op output. The backward closure is dropped when no input needs
/// a gradient.
Var make_op(Matrix value, int batch, int length, std::vector<Var> inputs,
            std::function<void(Node&)> backward);

/// Reverse sweep from a 1×1 root; seeds d(root) = 1.
void backward(const Var& root);

// Sequence ops (channels × (batch·length)).
Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel);
Var relu(const Var& x);
Var softplus(const Var& x);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(const Var& x, int begin, int count);
Var max_pool2(const Var& x);
Var upsample2(const Var& x);
Var adaptive_avg_pool(const Var& x, int out_length);
Var resize_nearest(const Var& x, int out_length);
/// Average-pools when shrinking, nearest-neighbour when growing.
Var adaptive_resample(const Var& x, int out_length);
Var softmax_sequence(const Var& x);
/// Multiplies every channel of `values` by the single-channel `gate`.
Var gate_multiply(const Var& gate, const Var& values);
Var relayout(const Var& x, int batch, int length);
Var sum_all(const Var& x);

/// Throws NumericalError naming `where` if any value is non-finite.
void check_finite(const Var& x, const std::string& where);

}  // namespace nerfapt::ad
