// Copyright 2026 The nerfapt Authors
// SPDX-License-Identifier: Apache-2.0

#include "nerfapt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "nerfapt/errors.hpp"

namespace nerfapt::ad {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var Var::constant(Matrix value, int batch, int length) {
  auto node = std::make_shared<Node>();
  if (static_cast<long>(batch) * length != value.cols()) {
    throw ConfigError("autodiff: layout does not match column count");
  }
  node->value = std::move(value);
  node->batch = batch;
  node->length = length;
  return Var(std::move(node));
}

Var Var::parameter(Matrix value) {
  Var v = constant(std::move(value));
  v.node()->requires_grad = true;
  return v;
}

Var make_op(Matrix value, int batch, int length, std::vector<Var> inputs,
            std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->batch = batch;
  node->length = length;
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.shared());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (root.value().size() != 1) throw ConfigError("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

namespace {

Matrix im2col(const Matrix& x, int batch, int length, int kernel) {
  const int half = kernel / 2;
  const Eigen::Index cin = x.rows();
  Matrix col = Matrix::Zero(cin * kernel, x.cols());
  for (int k = 0; k < kernel; ++k) {
    const int shift = k - half;
    for (int b = 0; b < batch; ++b) {
      const int lo = std::max(0, -shift);
      const int hi = std::min(length, length - shift);
      if (hi <= lo) continue;
      const Eigen::Index base = static_cast<Eigen::Index>(b) * length;
      for (Eigen::Index c = 0; c < cin; ++c) {
        col.row(c * kernel + k).segment(base + lo, hi - lo) =
            x.row(c).segment(base + lo + shift, hi - lo);
      }
    }
  }
  return col;
}

Matrix col2im(const Matrix& col, Eigen::Index cin, int batch, int length, int kernel) {
  const int half = kernel / 2;
  Matrix x = Matrix::Zero(cin, col.cols());
  for (int k = 0; k < kernel; ++k) {
    const int shift = k - half;
    for (int b = 0; b < batch; ++b) {
      const int lo = std::max(0, -shift);
      const int hi = std::min(length, length - shift);
      if (hi <= lo) continue;
      const Eigen::Index base = static_cast<Eigen::Index>(b) * length;
      for (Eigen::Index c = 0; c < cin; ++c) {
        x.row(c).segment(base + lo + shift, hi - lo) +=
            col.row(c * kernel + k).segment(base + lo, hi - lo);
      }
    }
  }
  return x;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("conv1d: kernel must be odd");
  if (weight.value().cols() != x.channels() * kernel) {
    throw ConfigError("conv1d: weight expects " + std::to_string(weight.value().cols() / kernel) +
                      " input channels, got " + std::to_string(x.channels()));
  }
  const int batch = x.batch();
  const int length = x.length();
  Matrix out;
  if (kernel == 1) {
    out.noalias() = weight.value() * x.value();
  } else {
    out.noalias() = weight.value() * im2col(x.value(), batch, length, kernel);
  }
  if (bias) out.colwise() += bias.value().col(0);

  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  const bool has_bias = static_cast<bool>(bias);
  return make_op(std::move(out), batch, length, std::move(inputs),
                 [kernel, batch, length, has_bias](Node& self) {
                   Node& in = *self.inputs[0];
                   Node& w = *self.inputs[1];
                   const Matrix& g = self.grad;
                   if (kernel == 1) {
                     if (w.requires_grad) w.accumulate(g * in.value.transpose());
                     if (in.requires_grad) in.accumulate(w.value.transpose() * g);
                   } else {
                     if (w.requires_grad) {
                       w.accumulate(g * im2col(in.value, batch, length, kernel).transpose());
                     }
                     if (in.requires_grad) {
                       Matrix dcol = w.value.transpose() * g;
                       in.accumulate(col2im(dcol, in.value.rows(), batch, length, kernel));
                     }
                   }
                   if (has_bias && self.inputs[2]->requires_grad) {
                     self.inputs[2]->accumulate(g.rowwise().sum());
                   }
                 });
}

Var relu(const Var& x) {
  Matrix out = x.value().cwiseMax(0.0);
  return make_op(std::move(out), x.batch(), x.length(), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    in.accumulate((in.value.array() > 0.0).select(self.grad, 0.0));
  });
}

Var softplus(const Var& x) {
  // log(1 + e^x) computed without overflow.
  Matrix out = x.value().unaryExpr([](double v) {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  });
  return make_op(std::move(out), x.batch(), x.length(), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    Matrix sig = in.value.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    in.accumulate(self.grad.cwiseProduct(sig));
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), a.batch(), a.length(), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->accumulate(self.grad);
    }
  });
}

Var scale(const Var& x, double factor) {
  return make_op(x.value() * factor, x.batch(), x.length(), {x}, [factor](Node& self) {
    self.inputs[0]->accumulate(self.grad * factor);
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_channels: nothing to concatenate");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != parts[0].value().cols()) {
      throw ConfigError("concat_channels: column count mismatch");
    }
    rows += p.value().rows();
  }
  Matrix out(rows, parts[0].value().cols());
  Eigen::Index row = 0;
  for (const auto& p : parts) {
    out.middleRows(row, p.value().rows()) = p.value();
    row += p.value().rows();
  }
  return make_op(std::move(out), parts[0].batch(), parts[0].length(), parts, [](Node& self) {
    Eigen::Index r = 0;
    for (auto& in : self.inputs) {
      const Eigen::Index n = in->value.rows();
      if (in->requires_grad) in->accumulate(self.grad.middleRows(r, n));
      r += n;
    }
  });
}

Var slice_channels(const Var& x, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > x.channels()) {
    throw ConfigError("slice_channels: range out of bounds");
  }
  Matrix out = x.value().middleRows(begin, count);
  return make_op(std::move(out), x.batch(), x.length(), {x}, [begin, count](Node& self) {
    Node& in = *self.inputs[0];
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    g.middleRows(begin, count) = self.grad;
    in.accumulate(g);
  });
}

Var max_pool2(const Var& x) {
  const int batch = x.batch();
  const int length = x.length();
  const int out_len = (length + 1) / 2;
  const Eigen::Index rows = x.value().rows();
  Matrix out(rows, static_cast<Eigen::Index>(batch) * out_len);
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(out.size()));
  const Matrix& v = x.value();
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < out_len; ++i) {
      const Eigen::Index oc = static_cast<Eigen::Index>(b) * out_len + i;
      const Eigen::Index c0 = static_cast<Eigen::Index>(b) * length + 2 * i;
      const bool pair = 2 * i + 1 < length;
      for (Eigen::Index r = 0; r < rows; ++r) {
        Eigen::Index best = c0;
        if (pair && v(r, c0 + 1) > v(r, c0)) best = c0 + 1;
        out(r, oc) = v(r, best);
        argmax[static_cast<std::size_t>(oc * rows + r)] = best;
      }
    }
  }
  return make_op(std::move(out), batch, out_len, {x}, [argmax = std::move(argmax)](Node& self) {
    Node& in = *self.inputs[0];
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    const Eigen::Index rows = g.rows();
    for (Eigen::Index oc = 0; oc < self.grad.cols(); ++oc) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        g(r, argmax[static_cast<std::size_t>(oc * rows + r)]) += self.grad(r, oc);
      }
    }
    in.accumulate(g);
  });
}

namespace {

// Per-output-column source mapping used by the length-changing gather ops.
Var gather_sequence(const Var& x, int out_len, const std::vector<std::vector<int>>& sources) {
  const int batch = x.batch();
  const int length = x.length();
  const Matrix& v = x.value();
  Matrix out(v.rows(), static_cast<Eigen::Index>(batch) * out_len);
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < out_len; ++i) {
      const auto& src = sources[static_cast<std::size_t>(i)];
      auto col = out.col(static_cast<Eigen::Index>(b) * out_len + i);
      col.setZero();
      for (int s : src) col += v.col(static_cast<Eigen::Index>(b) * length + s);
      col /= static_cast<double>(src.size());
    }
  }
  return make_op(std::move(out), batch, out_len, {x}, [sources, batch, length, out_len](Node& self) {
    Node& in = *self.inputs[0];
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    for (int b = 0; b < batch; ++b) {
      for (int i = 0; i < out_len; ++i) {
        const auto& src = sources[static_cast<std::size_t>(i)];
        const double w = 1.0 / static_cast<double>(src.size());
        for (int s : src) {
          g.col(static_cast<Eigen::Index>(b) * length + s) +=
              w * self.grad.col(static_cast<Eigen::Index>(b) * out_len + i);
        }
      }
    }
    in.accumulate(g);
  });
}

}  // namespace

Var upsample2(const Var& x) { return resize_nearest(x, 2 * x.length()); }

Var adaptive_avg_pool(const Var& x, int out_length) {
  if (out_length < 1) throw ConfigError("adaptive_avg_pool: output length must be >= 1");
  const int length = x.length();
  std::vector<std::vector<int>> sources(static_cast<std::size_t>(out_length));
  for (int i = 0; i < out_length; ++i) {
    const int start = (i * length) / out_length;
    const int end = ((i + 1) * length + out_length - 1) / out_length;
    for (int s = start; s < end; ++s) sources[static_cast<std::size_t>(i)].push_back(s);
  }
  return gather_sequence(x, out_length, sources);
}

Var resize_nearest(const Var& x, int out_length) {
  if (out_length < 1) throw ConfigError("resize_nearest: output length must be >= 1");
  const int length = x.length();
  std::vector<std::vector<int>> sources(static_cast<std::size_t>(out_length));
  for (int i = 0; i < out_length; ++i) {
    sources[static_cast<std::size_t>(i)].push_back(
        static_cast<int>((static_cast<long>(i) * length) / out_length));
  }
  return gather_sequence(x, out_length, sources);
}

Var adaptive_resample(const Var& x, int out_length) {
  if (out_length == x.length()) return x;
  if (out_length < x.length()) return adaptive_avg_pool(x, out_length);
  return resize_nearest(x, out_length);
}

Var softmax_sequence(const Var& x) {
  const int batch = x.batch();
  const int length = x.length();
  Matrix out(x.value().rows(), x.value().cols());
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(b) * length;
    auto in_block = x.value().middleCols(c0, length);
    Eigen::VectorXd mx = in_block.rowwise().maxCoeff();
    Matrix e = (in_block.colwise() - mx).array().exp().matrix();
    Eigen::VectorXd denom = e.rowwise().sum();
    out.middleCols(c0, length) = e.array().colwise() / denom.array();
  }
  return make_op(out, batch, length, {x}, [batch, length](Node& self) {
    Matrix g(self.value.rows(), self.value.cols());
    for (int b = 0; b < batch; ++b) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(b) * length;
      auto y = self.value.middleCols(c0, length);
      auto gy = self.grad.middleCols(c0, length);
      Eigen::VectorXd dot = y.cwiseProduct(gy).rowwise().sum();
      g.middleCols(c0, length) = y.cwiseProduct((gy.colwise() - dot));
    }
    self.inputs[0]->accumulate(g);
  });
}

Var gate_multiply(const Var& gate, const Var& values) {
  if (gate.channels() != 1 || gate.value().cols() != values.value().cols()) {
    throw ConfigError("gate_multiply: gate must be a single channel matching the values layout");
  }
  Matrix out = values.value().array().rowwise() * gate.value().row(0).array();
  return make_op(std::move(out), values.batch(), values.length(), {gate, values}, [](Node& self) {
    Node& gate = *self.inputs[0];
    Node& vals = *self.inputs[1];
    if (gate.requires_grad) gate.accumulate(self.grad.cwiseProduct(vals.value).colwise().sum());
    if (vals.requires_grad) {
      vals.accumulate((self.grad.array().rowwise() * gate.value.row(0).array()).matrix());
    }
  });
}

Var relayout(const Var& x, int batch, int length) {
  if (static_cast<long>(batch) * length != x.value().cols()) {
    throw ConfigError("relayout: layout does not match column count");
  }
  return make_op(x.value(), batch, length, {x}, [](Node& self) { self.inputs[0]->accumulate(self.grad); });
}

Var sum_all(const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return make_op(std::move(out), 1, 1, {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    in.accumulate(Matrix::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0)));
  });
}

void check_finite(const Var& x, const std::string& where) {
  if (!x.value().allFinite()) throw NumericalError("non-finite activation at " + where);
}

}  // namespace nerfapt::ad
