// SPDX-License-Identifier: Apache-2.0
#include "tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "core/error.hpp"

namespace phonebench::ops {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

using BackwardFn = std::function<void(Node&)>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor record(const char* op, Shape shape, std::vector<double> value,
              std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  for (double v : value) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::Numeric, std::string("non-finite value produced by ") + op);
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (fn) {
    node->requires_grad = true;
    node->leaf = false;
    node->inputs.reserve(inputs.size());
    for (const Tensor* t : inputs) node->inputs.push_back(t->node_ptr());
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    fail(ErrorCode::Dimension, std::string(op) + ": expected rank " + std::to_string(rank) +
                                   ", got " + shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::Dimension,
         std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

ConstMatMap cmap(const Tensor& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return ConstMatMap(t.values().data() + offset, static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

MatMap gmap(Node& n, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MatMap(n.grad_buffer().data() + offset, static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

ConstMatMap cgmap(const Node& n, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return ConstMatMap(n.grad.data() + offset, static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

template <typename F, typename D>
Tensor unary(const char* op, const Tensor& x, F f, D dfdx) {
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [dfdx](Node& self) {
      Node& a = *self.inputs[0];
      if (!a.requires_grad) return;
      auto& ga = a.grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * dfdx(a.value[i], self.value[i]);
    };
  }
  return record(op, x.shape(), std::move(out), {&x}, std::move(fn));
}

inline double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  BackwardFn fn;
  if (tracking({&a, &b})) {
    fn = [](Node& self) {
      for (int k = 0; k < 2; ++k) {
        Node& in = *self.inputs[k];
        if (!in.requires_grad) continue;
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    };
  }
  return record("add", a.shape(), std::move(out), {&a, &b}, std::move(fn));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  BackwardFn fn;
  if (tracking({&a, &b})) {
    fn = [](Node& self) {
      for (int k = 0; k < 2; ++k) {
        Node& in = *self.inputs[k];
        if (!in.requires_grad) continue;
        const double sign = k == 0 ? 1.0 : -1.0;
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
      }
    };
  }
  return record("sub", a.shape(), std::move(out), {&a, &b}, std::move(fn));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  BackwardFn fn;
  if (tracking({&a, &b})) {
    fn = [](Node& self) {
      Node& x = *self.inputs[0];
      Node& y = *self.inputs[1];
      if (x.requires_grad) {
        auto& g = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
      }
      if (y.requires_grad) {
        auto& g = y.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
      }
    };
  }
  return record("mul", a.shape(), std::move(out), {&a, &b}, std::move(fn));
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  require_rank(x, 2, "add_row_bias");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (b.numel() != cols) {
    fail(ErrorCode::Dimension, "add_row_bias: bias " + shape_str(b.shape()) + " vs input " + shape_str(x.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b[c];
  BackwardFn fn;
  if (tracking({&x, &b})) {
    fn = [rows, cols](Node& self) {
      Node& in = *self.inputs[0];
      Node& bias = *self.inputs[1];
      if (in.requires_grad) {
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (bias.requires_grad) {
        auto& g = bias.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
      }
    };
  }
  return record("add_row_bias", x.shape(), std::move(out), {&x, &b}, std::move(fn));
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  require_rank(x, 2, "add_channel_bias");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (b.numel() != rows) {
    fail(ErrorCode::Dimension,
         "add_channel_bias: bias " + shape_str(b.shape()) + " vs input " + shape_str(x.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b[r];
  BackwardFn fn;
  if (tracking({&x, &b})) {
    fn = [rows, cols](Node& self) {
      Node& in = *self.inputs[0];
      Node& bias = *self.inputs[1];
      if (in.requires_grad) {
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (bias.requires_grad) {
        auto& g = bias.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) g[r] += self.grad[r * cols + c];
      }
    };
  }
  return record("add_channel_bias", x.shape(), std::move(out), {&x, &b}, std::move(fn));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    fail(ErrorCode::Dimension,
         "matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MatMap(out.data(), m, n).noalias() = cmap(a, m, k) * cmap(b, k, n);
  BackwardFn fn;
  if (tracking({&a, &b})) {
    fn = [m, k, n](Node& self) {
      Node& x = *self.inputs[0];
      Node& y = *self.inputs[1];
      const auto g = cgmap(self, m, n);
      if (x.requires_grad) {
        gmap(x, m, k).noalias() += g * ConstMatMap(y.value.data(), k, n).transpose();
      }
      if (y.requires_grad) {
        gmap(y, k, n).noalias() += ConstMatMap(x.value.data(), m, k).transpose() * g;
      }
    };
  }
  return record("matmul", {m, n}, std::move(out), {&a, &b}, std::move(fn));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  return b.defined() ? add_row_bias(y, b) : y;
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  MatMap(out.data(), n, m) = cmap(x, m, n).transpose();
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [m, n](Node& self) {
      Node& in = *self.inputs[0];
      if (in.requires_grad) gmap(in, m, n) += cgmap(self, n, m).transpose();
    };
  }
  return record("transpose", {n, m}, std::move(out), {&x}, std::move(fn));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    fail(ErrorCode::Dimension, "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
  }
  return record("reshape", std::move(shape), std::move(out), {&x}, std::move(fn));
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor swish(const Tensor& x) {
  return unary(
      "swish", x, [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor glu(const Tensor& x) {
  require_rank(x, 2, "glu");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (cols % 2 != 0) fail(ErrorCode::Dimension, "glu: odd channel count in " + shape_str(x.shape()));
  const std::size_t half = cols / 2;
  std::vector<double> out(rows * half);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < half; ++c)
      out[r * half + c] = x[r * cols + c] * sigmoid_scalar(x[r * cols + half + c]);
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [rows, cols, half](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < half; ++c) {
          const double a = in.value[r * cols + c];
          const double s = sigmoid_scalar(in.value[r * cols + half + c]);
          const double go = self.grad[r * half + c];
          g[r * cols + c] += go * s;
          g[r * cols + half + c] += go * a * s * (1.0 - s);
        }
      }
    };
  }
  return record("glu", {rows, half}, std::move(out), {&x}, std::move(fn));
}

Tensor mean(const Tensor& x, std::size_t axis) {
  require_rank(x, 2, "mean");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (axis > 1) fail(ErrorCode::Dimension, "mean: axis out of range");
  const std::size_t n_out = axis == 0 ? cols : rows;
  const double inv = 1.0 / static_cast<double>(axis == 0 ? rows : cols);
  std::vector<double> out(n_out, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[axis == 0 ? c : r] += x[r * cols + c] * inv;
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [rows, cols, axis, inv](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[axis == 0 ? c : r] * inv;
    };
  }
  return record("mean", {n_out}, std::move(out), {&x}, std::move(fn));
}

Tensor mean_time(const Tensor& x, std::size_t valid) {
  require_rank(x, 2, "mean_time");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (valid == 0 || valid > cols) fail(ErrorCode::Dimension, "mean_time: invalid frame count");
  const double inv = 1.0 / static_cast<double>(valid);
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < valid; ++c) acc += x[r * cols + c];
    out[r] = acc * inv;
  }
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [rows, cols, valid, inv](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < valid; ++c) g[r * cols + c] += self.grad[r] * inv;
    };
  }
  return record("mean_time", {rows}, std::move(out), {&x}, std::move(fn));
}

Tensor scale_channels(const Tensor& x, const Tensor& s) {
  require_rank(x, 2, "scale_channels");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (s.numel() != rows) {
    fail(ErrorCode::Dimension, "scale_channels: " + shape_str(s.shape()) + " vs " + shape_str(x.shape()));
  }
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] * s[r];
  BackwardFn fn;
  if (tracking({&x, &s})) {
    fn = [rows, cols](Node& self) {
      Node& in = *self.inputs[0];
      Node& sc = *self.inputs[1];
      if (in.requires_grad) {
        auto& g = in.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r * cols + c] * sc.value[r];
      }
      if (sc.requires_grad) {
        auto& g = sc.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) g[r] += self.grad[r * cols + c] * in.value[r * cols + c];
      }
    };
  }
  return record("scale_channels", x.shape(), std::move(out), {&x, &s}, std::move(fn));
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  require_rank(a, 2, "concat");
  require_rank(b, 2, "concat");
  if (axis > 1 || a.dim(1 - axis) != b.dim(1 - axis)) {
    fail(ErrorCode::Dimension, "concat: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                                   " along axis " + std::to_string(axis));
  }
  const std::size_t ra = a.dim(0), ca = a.dim(1), rb = b.dim(0), cb = b.dim(1);
  Shape shape = axis == 0 ? Shape{ra + rb, ca} : Shape{ra, ca + cb};
  std::vector<double> out;
  out.reserve(a.numel() + b.numel());
  if (axis == 0) {
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
  } else {
    for (std::size_t r = 0; r < ra; ++r) {
      out.insert(out.end(), a.values().begin() + r * ca, a.values().begin() + (r + 1) * ca);
      out.insert(out.end(), b.values().begin() + r * cb, b.values().begin() + (r + 1) * cb);
    }
  }
  BackwardFn fn;
  if (tracking({&a, &b})) {
    fn = [axis, ra, ca, cb](Node& self) {
      Node& x = *self.inputs[0];
      Node& y = *self.inputs[1];
      if (axis == 0) {
        if (x.requires_grad) {
          auto& g = x.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (y.requires_grad) {
          auto& g = y.grad_buffer();
          const std::size_t off = ra * ca;
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
        }
      } else {
        const std::size_t width = ca + cb;
        for (std::size_t r = 0; r < ra; ++r) {
          if (x.requires_grad) {
            auto& g = x.grad_buffer();
            for (std::size_t c = 0; c < ca; ++c) g[r * ca + c] += self.grad[r * width + c];
          }
          if (y.requires_grad) {
            auto& g = y.grad_buffer();
            for (std::size_t c = 0; c < cb; ++c) g[r * cb + c] += self.grad[r * width + ca + c];
          }
        }
      }
    };
  }
  return record("concat", std::move(shape), std::move(out), {&a, &b}, std::move(fn));
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (auto& v : g) v += self.grad[0];
    };
  }
  return record("sum", {1}, {acc}, {&x}, std::move(fn));
}

Tensor weighted_sum(const Tensor& x, std::span<const double> w) {
  if (w.size() != x.numel()) fail(ErrorCode::Dimension, "weighted_sum: weight count mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += x[i] * w[i];
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [weights = std::vector<double>(w.begin(), w.end())](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * weights[i];
    };
  }
  return record("weighted_sum", {1}, {acc}, {&x}, std::move(fn));
}

Tensor softmax_masked(const Tensor& scores, const BandMask& mask) {
  return softmax_masked(scores, mask, mask.length());
}

Tensor softmax_masked(const Tensor& scores, const BandMask& mask, std::size_t valid_keys) {
  require_rank(scores, 3, "softmax_masked");
  const std::size_t heads = scores.dim(0), len = scores.dim(1);
  if (scores.dim(2) != len || mask.length() != len) {
    fail(ErrorCode::Dimension, "softmax_masked: scores " + shape_str(scores.shape()) + " vs mask length " +
                                   std::to_string(mask.length()));
  }
  // Padded queries (i >= valid_keys) keep the plain band so their rows stay
  // well-formed; their outputs never reach valid frames.
  auto key_range = [&](std::size_t i) {
    std::size_t lo = mask.first_key(i), hi = mask.last_key(i);
    if (i < valid_keys) hi = std::min(hi, valid_keys);
    return std::pair{lo, hi};
  };
  std::vector<double> out(scores.numel(), 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < len; ++i) {
      const auto [lo, hi] = key_range(i);
      if (lo >= hi) {
        fail(ErrorCode::Contract, "softmax_masked: row " + std::to_string(i) + " has no admissible key");
      }
      const double* row = scores.values().data() + (h * len + i) * len;
      double* dst = out.data() + (h * len + i) * len;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = lo; j < hi; ++j) mx = std::max(mx, row[j]);
      double total = 0.0;
      for (std::size_t j = lo; j < hi; ++j) {
        dst[j] = std::exp(row[j] - mx);
        total += dst[j];
      }
      const double inv = 1.0 / total;
      for (std::size_t j = lo; j < hi; ++j) dst[j] *= inv;
    }
  }
  BackwardFn fn;
  if (tracking({&scores})) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges(len);
    for (std::size_t i = 0; i < len; ++i) ranges[i] = key_range(i);
    fn = [heads, len, ranges = std::move(ranges)](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < len; ++i) {
          const auto [lo, hi] = ranges[i];
          const std::size_t base = (h * len + i) * len;
          double dot = 0.0;
          for (std::size_t j = lo; j < hi; ++j) dot += self.grad[base + j] * self.value[base + j];
          for (std::size_t j = lo; j < hi; ++j) g[base + j] += self.value[base + j] * (self.grad[base + j] - dot);
        }
      }
    };
  }
  return record("softmax_masked", scores.shape(), std::move(out), {&scores}, std::move(fn));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() != 1 && x.rank() != 2) fail(ErrorCode::Dimension, "layer_norm: expected rank 1 or 2");
  if (eps <= 0) fail(ErrorCode::InvalidArgument, "layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  if (gamma.numel() != d || beta.numel() != d) {
    fail(ErrorCode::Dimension, "layer_norm: affine parameters do not match width " + std::to_string(d));
  }
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (xr[c] - mu) * inv_std[r];
      out[r * d + c] = gamma[c] * xhat[r * d + c] + beta[c];
    }
  }
  BackwardFn fn;
  if (tracking({&x, &gamma, &beta})) {
    fn = [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
      Node& in = *self.inputs[0];
      Node& ga = *self.inputs[1];
      Node& be = *self.inputs[2];
      for (std::size_t r = 0; r < rows; ++r) {
        const double* go = self.grad.data() + r * d;
        const double* xh = xhat.data() + r * d;
        if (ga.requires_grad) {
          auto& g = ga.grad_buffer();
          for (std::size_t c = 0; c < d; ++c) g[c] += go[c] * xh[c];
        }
        if (be.requires_grad) {
          auto& g = be.grad_buffer();
          for (std::size_t c = 0; c < d; ++c) g[c] += go[c];
        }
        if (in.requires_grad) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double dxh = go[c] * ga.value[c];
            s1 += dxh;
            s2 += dxh * xh[c];
          }
          auto& g = in.grad_buffer();
          const double n = static_cast<double>(d);
          for (std::size_t c = 0; c < d; ++c) {
            const double dxh = go[c] * ga.value[c];
            g[r * d + c] += inv_std[r] / n * (n * dxh - s1 - xh[c] * s2);
          }
        }
      }
    };
  }
  return record("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta}, std::move(fn));
}

Tensor batch_norm_infer(const Tensor& x, std::span<const double> running_mean, std::span<const double> running_var,
                        const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "batch_norm_infer");
  const std::size_t ch = x.dim(0), len = x.dim(1);
  if (running_mean.size() != ch || running_var.size() != ch || gamma.numel() != ch || beta.numel() != ch) {
    fail(ErrorCode::Dimension, "batch_norm_infer: statistics do not match " + std::to_string(ch) + " channels");
  }
  std::vector<double> mult(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    if (!(running_var[c] >= 0.0)) {
      fail(ErrorCode::InvalidStatistics, "batch_norm_infer: running_var[" + std::to_string(c) + "] is negative");
    }
    mult[c] = 1.0 / std::sqrt(running_var[c] + eps);
  }
  std::vector<double> out(ch * len);
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t t = 0; t < len; ++t)
      out[c * len + t] = gamma[c] * (x[c * len + t] - running_mean[c]) * mult[c] + beta[c];
  BackwardFn fn;
  if (tracking({&x, &gamma, &beta})) {
    fn = [ch, len, mult, rm = std::vector<double>(running_mean.begin(), running_mean.end())](Node& self) {
      Node& in = *self.inputs[0];
      Node& ga = *self.inputs[1];
      Node& be = *self.inputs[2];
      for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t t = 0; t < len; ++t) {
          const double go = self.grad[c * len + t];
          if (in.requires_grad) in.grad_buffer()[c * len + t] += go * ga.value[c] * mult[c];
          if (ga.requires_grad) ga.grad_buffer()[c] += go * (in.value[c * len + t] - rm[c]) * mult[c];
          if (be.requires_grad) be.grad_buffer()[c] += go;
        }
      }
    };
  }
  return record("batch_norm_infer", x.shape(), std::move(out), {&x, &gamma, &beta}, std::move(fn));
}

BatchNormTrainResult batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                                      std::size_t valid) {
  require_rank(x, 2, "batch_norm_train");
  const std::size_t ch = x.dim(0), len = x.dim(1);
  if (gamma.numel() != ch || beta.numel() != ch) {
    fail(ErrorCode::Dimension, "batch_norm_train: affine parameters do not match " + std::to_string(ch) + " channels");
  }
  if (valid == 0 || valid > len) fail(ErrorCode::Dimension, "batch_norm_train: invalid frame count");
  BatchNormTrainResult res;
  res.batch_mean.assign(ch, 0.0);
  res.batch_var.assign(ch, 0.0);
  res.count = valid;
  const double n = static_cast<double>(valid);
  std::vector<double> inv_std(ch);
  std::vector<double> xhat(ch * len, 0.0);
  std::vector<double> out(ch * len, 0.0);
  for (std::size_t c = 0; c < ch; ++c) {
    const double* xr = x.values().data() + c * len;
    double mu = 0.0;
    for (std::size_t t = 0; t < valid; ++t) mu += xr[t];
    mu /= n;
    double var = 0.0;
    for (std::size_t t = 0; t < valid; ++t) var += (xr[t] - mu) * (xr[t] - mu);
    var /= n;
    res.batch_mean[c] = mu;
    res.batch_var[c] = var;
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t t = 0; t < valid; ++t) {
      xhat[c * len + t] = (xr[t] - mu) * inv_std[c];
      out[c * len + t] = gamma[c] * xhat[c * len + t] + beta[c];
    }
  }
  BackwardFn fn;
  if (tracking({&x, &gamma, &beta})) {
    fn = [ch, len, valid, n, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& self) {
      Node& in = *self.inputs[0];
      Node& ga = *self.inputs[1];
      Node& be = *self.inputs[2];
      for (std::size_t c = 0; c < ch; ++c) {
        const double* go = self.grad.data() + c * len;
        const double* xh = xhat.data() + c * len;
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t t = 0; t < valid; ++t) {
          s1 += go[t];
          s2 += go[t] * xh[t];
        }
        if (ga.requires_grad) ga.grad_buffer()[c] += s2;
        if (be.requires_grad) be.grad_buffer()[c] += s1;
        if (in.requires_grad) {
          auto& g = in.grad_buffer();
          const double gm = ga.value[c];
          for (std::size_t t = 0; t < valid; ++t) {
            g[c * len + t] += gm * inv_std[c] / n * (n * go[t] - s1 - xh[t] * s2);
          }
        }
      }
    };
  }
  res.output = record("batch_norm_train", x.shape(), std::move(out), {&x, &gamma, &beta}, std::move(fn));
  return res;
}

Tensor cross_entropy_frames(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy_frames");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  const std::size_t n = labels.size();
  if (n == 0) fail(ErrorCode::InvalidArgument, "cross_entropy_frames: no frames");
  if (n > rows) {
    fail(ErrorCode::Dimension, "cross_entropy_frames: " + std::to_string(n) + " labels for " +
                                   std::to_string(rows) + " frames");
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (labels[t] < 0 || static_cast<std::size_t>(labels[t]) >= classes) {
      fail(ErrorCode::Label, "cross_entropy_frames: label " + std::to_string(labels[t]) + " at frame " +
                                 std::to_string(t) + " outside [0," + std::to_string(classes - 1) + "]");
    }
  }
  std::vector<double> probs(n * classes);
  double loss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double* row = logits.values().data() + t * classes;
    const double mx = *std::max_element(row, row + classes);
    double total = 0.0;
    for (std::size_t k = 0; k < classes; ++k) total += std::exp(row[k] - mx);
    const double lse = mx + std::log(total);
    loss += lse - row[labels[t]];
    for (std::size_t k = 0; k < classes; ++k) probs[t * classes + k] = std::exp(row[k] - lse);
  }
  loss /= static_cast<double>(n);
  BackwardFn fn;
  if (tracking({&logits})) {
    fn = [n, classes, probs = std::move(probs), lab = std::vector<int>(labels.begin(), labels.end())](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      const double scale_factor = self.grad[0] / static_cast<double>(n);
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t k = 0; k < classes; ++k) {
          const double onehot = static_cast<int>(k) == lab[t] ? 1.0 : 0.0;
          g[t * classes + k] += scale_factor * (probs[t * classes + k] - onehot);
        }
      }
    };
  }
  return record("cross_entropy_frames", {1}, {loss}, {&logits}, std::move(fn));
}

namespace {

// cols[(c*k + j) x T_out] = x[c][t*stride + j - padding] (zero outside).
void im2col_1d(const double* x, std::size_t channels, std::size_t len, std::size_t k, std::size_t stride,
               std::size_t padding, std::size_t out_len, double* cols) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t j = 0; j < k; ++j) {
      double* dst = cols + (c * k + j) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(padding);
        dst[t] = (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) ? x[c * len + src] : 0.0;
      }
    }
  }
}

void col2im_1d(const double* cols, std::size_t channels, std::size_t len, std::size_t k, std::size_t stride,
               std::size_t padding, std::size_t out_len, double* dx) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t j = 0; j < k; ++j) {
      const double* src = cols + (c * k + j) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(padding);
        if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) dx[c * len + pos] += src[t];
      }
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding, std::size_t groups) {
  require_rank(x, 2, "conv1d");
  require_rank(w, 3, "conv1d");
  const std::size_t c_in = x.dim(0), len = x.dim(1);
  const std::size_t c_out = w.dim(0), cpg = w.dim(1), k = w.dim(2);
  if (stride == 0) fail(ErrorCode::InvalidArgument, "conv1d: stride must be >= 1");
  if (groups == 0 || c_in % groups != 0 || c_out % groups != 0 || cpg != c_in / groups) {
    fail(ErrorCode::Dimension, "conv1d: input " + shape_str(x.shape()) + " incompatible with weight " +
                                   shape_str(w.shape()) + " at groups=" + std::to_string(groups));
  }
  if (k > len + 2 * padding) {
    fail(ErrorCode::EmptyOutput, "conv1d: kernel " + std::to_string(k) + " exceeds padded length " +
                                     std::to_string(len + 2 * padding));
  }
  const std::size_t out_len = (len + 2 * padding - k) / stride + 1;
  const std::size_t opg = c_out / groups;
  std::vector<double> out(c_out * out_len, 0.0);
  const bool depthwise = cpg == 1 && opg == 1;

  std::vector<double> cols;
  if (depthwise) {
    for (std::size_t c = 0; c < c_out; ++c) {
      const double* xr = x.values().data() + c * len;
      const double* wr = w.values().data() + c * k;
      double* dst = out.data() + c * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(padding);
          if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) acc += wr[j] * xr[src];
        }
        dst[t] = acc;
      }
    }
  } else {
    cols.resize(c_in * k * out_len);
    for (std::size_t g = 0; g < groups; ++g) {
      double* gcols = cols.data() + g * cpg * k * out_len;
      im2col_1d(x.values().data() + g * cpg * len, cpg, len, k, stride, padding, out_len, gcols);
      MatMap(out.data() + g * opg * out_len, opg, out_len).noalias() =
          cmap(w, opg, cpg * k, g * opg * cpg * k) * ConstMatMap(gcols, cpg * k, out_len);
    }
  }

  BackwardFn fn;
  if (tracking({&x, &w})) {
    fn = [=, cols = std::move(cols)](Node& self) {
      Node& in = *self.inputs[0];
      Node& wt = *self.inputs[1];
      if (depthwise) {
        for (std::size_t c = 0; c < c_out; ++c) {
          const double* go = self.grad.data() + c * out_len;
          for (std::size_t t = 0; t < out_len; ++t) {
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t src =
                  static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(padding);
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
              if (wt.requires_grad) wt.grad_buffer()[c * k + j] += go[t] * in.value[c * len + src];
              if (in.requires_grad) in.grad_buffer()[c * len + src] += go[t] * wt.value[c * k + j];
            }
          }
        }
        return;
      }
      std::vector<double> dcols(cpg * k * out_len);
      for (std::size_t g = 0; g < groups; ++g) {
        const auto go = cgmap(self, opg, out_len, g * opg * out_len);
        const ConstMatMap gcols(cols.data() + g * cpg * k * out_len, cpg * k, out_len);
        if (wt.requires_grad) gmap(wt, opg, cpg * k, g * opg * cpg * k).noalias() += go * gcols.transpose();
        if (in.requires_grad) {
          MatMap(dcols.data(), cpg * k, out_len).noalias() =
              ConstMatMap(wt.value.data() + g * opg * cpg * k, opg, cpg * k).transpose() * go;
          col2im_1d(dcols.data(), cpg, len, k, stride, padding, out_len, in.grad_buffer().data() + g * cpg * len);
        }
      }
    };
  }
  return record("conv1d", {c_out, out_len}, std::move(out), {&x, &w}, std::move(fn));
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  const std::size_t c_in = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t c_out = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != c_in) {
    fail(ErrorCode::Dimension, "conv2d: input " + shape_str(x.shape()) + " incompatible with weight " +
                                   shape_str(w.shape()));
  }
  if (stride == 0) fail(ErrorCode::InvalidArgument, "conv2d: stride must be >= 1");
  if (kh > height + 2 * padding || kw > width + 2 * padding) {
    fail(ErrorCode::EmptyOutput, "conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  const std::size_t oh = (height + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (width + 2 * padding - kw) / stride + 1;
  const std::size_t patch = c_in * kh * kw;
  const std::size_t npos = oh * ow;
  std::vector<double> cols(patch * npos);
  const double* xv = x.values().data();
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        double* dst = cols.data() + ((c * kh + i) * kw + j) * npos;
        for (std::size_t y = 0; y < oh; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * stride + i) - static_cast<std::ptrdiff_t>(padding);
          for (std::size_t z = 0; z < ow; ++z) {
            const std::ptrdiff_t sz =
                static_cast<std::ptrdiff_t>(z * stride + j) - static_cast<std::ptrdiff_t>(padding);
            const bool inside = sy >= 0 && sy < static_cast<std::ptrdiff_t>(height) && sz >= 0 &&
                                sz < static_cast<std::ptrdiff_t>(width);
            dst[y * ow + z] = inside ? xv[(c * height + sy) * width + sz] : 0.0;
          }
        }
      }
    }
  }
  std::vector<double> out(c_out * npos);
  MatMap(out.data(), c_out, npos).noalias() = cmap(w, c_out, patch) * ConstMatMap(cols.data(), patch, npos);

  BackwardFn fn;
  if (tracking({&x, &w})) {
    fn = [=, cols = std::move(cols)](Node& self) {
      Node& in = *self.inputs[0];
      Node& wt = *self.inputs[1];
      const auto go = cgmap(self, c_out, npos);
      if (wt.requires_grad) {
        gmap(wt, c_out, patch).noalias() += go * ConstMatMap(cols.data(), patch, npos).transpose();
      }
      if (!in.requires_grad) return;
      std::vector<double> dcols(patch * npos);
      MatMap(dcols.data(), patch, npos).noalias() = ConstMatMap(wt.value.data(), c_out, patch).transpose() * go;
      auto& g = in.grad_buffer();
      for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t i = 0; i < kh; ++i) {
          for (std::size_t j = 0; j < kw; ++j) {
            const double* src = dcols.data() + ((c * kh + i) * kw + j) * npos;
            for (std::size_t y = 0; y < oh; ++y) {
              const std::ptrdiff_t sy =
                  static_cast<std::ptrdiff_t>(y * stride + i) - static_cast<std::ptrdiff_t>(padding);
              if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) continue;
              for (std::size_t z = 0; z < ow; ++z) {
                const std::ptrdiff_t sz =
                    static_cast<std::ptrdiff_t>(z * stride + j) - static_cast<std::ptrdiff_t>(padding);
                if (sz < 0 || sz >= static_cast<std::ptrdiff_t>(width)) continue;
                g[(c * height + sy) * width + sz] += src[y * ow + z];
              }
            }
          }
        }
      }
    };
  }
  return record("conv2d", {c_out, oh, ow}, std::move(out), {&x, &w}, std::move(fn));
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  require_rank(x, 2, "split_heads");
  const std::size_t len = x.dim(0), d = x.dim(1);
  if (heads == 0 || d % heads != 0) {
    fail(ErrorCode::Dimension, "split_heads: width " + std::to_string(d) + " not divisible by " +
                                   std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  std::vector<double> out(x.numel());
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < dh; ++c) out[(h * len + t) * dh + c] = x[t * d + h * dh + c];
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [heads, len, d, dh](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < len; ++t)
          for (std::size_t c = 0; c < dh; ++c) g[t * d + h * dh + c] += self.grad[(h * len + t) * dh + c];
    };
  }
  return record("split_heads", {heads, len, dh}, std::move(out), {&x}, std::move(fn));
}

Tensor merge_heads(const Tensor& x) {
  require_rank(x, 3, "merge_heads");
  const std::size_t heads = x.dim(0), len = x.dim(1), dh = x.dim(2), d = heads * dh;
  std::vector<double> out(x.numel());
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < dh; ++c) out[t * d + h * dh + c] = x[(h * len + t) * dh + c];
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [heads, len, d, dh](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < len; ++t)
          for (std::size_t c = 0; c < dh; ++c) g[(h * len + t) * dh + c] += self.grad[t * d + h * dh + c];
    };
  }
  return record("merge_heads", {len, d}, std::move(out), {&x}, std::move(fn));
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    fail(ErrorCode::Dimension, "bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    MatMap(out.data() + i * m * n, m, n).noalias() = cmap(a, m, k, i * m * k) * cmap(b, k, n, i * k * n);
  }
  BackwardFn fn;
  if (tracking({&a, &b})) {
    fn = [batch, m, k, n](Node& self) {
      Node& x = *self.inputs[0];
      Node& y = *self.inputs[1];
      for (std::size_t i = 0; i < batch; ++i) {
        const auto g = cgmap(self, m, n, i * m * n);
        if (x.requires_grad) {
          gmap(x, m, k, i * m * k).noalias() += g * ConstMatMap(y.value.data() + i * k * n, k, n).transpose();
        }
        if (y.requires_grad) {
          gmap(y, k, n, i * k * n).noalias() += ConstMatMap(x.value.data() + i * m * k, m, k).transpose() * g;
        }
      }
    };
  }
  return record("bmm", {batch, m, n}, std::move(out), {&a, &b}, std::move(fn));
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm_nt");
  require_rank(b, 3, "bmm_nt");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  if (b.dim(0) != batch || b.dim(2) != k) {
    fail(ErrorCode::Dimension, "bmm_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    MatMap(out.data() + i * m * n, m, n).noalias() = cmap(a, m, k, i * m * k) * cmap(b, n, k, i * n * k).transpose();
  }
  BackwardFn fn;
  if (tracking({&a, &b})) {
    fn = [batch, m, k, n](Node& self) {
      Node& x = *self.inputs[0];
      Node& y = *self.inputs[1];
      for (std::size_t i = 0; i < batch; ++i) {
        const auto g = cgmap(self, m, n, i * m * n);
        if (x.requires_grad) {
          gmap(x, m, k, i * m * k).noalias() += g * ConstMatMap(y.value.data() + i * n * k, n, k);
        }
        if (y.requires_grad) {
          gmap(y, n, k, i * n * k).noalias() += g.transpose() * ConstMatMap(x.value.data() + i * m * k, m, k);
        }
      }
    };
  }
  return record("bmm_nt", {batch, m, n}, std::move(out), {&a, &b}, std::move(fn));
}

Tensor lstm_scan(const Tensor& xproj, const Tensor& w_hh, std::size_t valid, bool reverse) {
  require_rank(xproj, 2, "lstm_scan");
  require_rank(w_hh, 2, "lstm_scan");
  const std::size_t len = xproj.dim(0), h = w_hh.dim(0), g4 = 4 * h;
  if (xproj.dim(1) != g4 || w_hh.dim(1) != g4) {
    fail(ErrorCode::Dimension, "lstm_scan: projections " + shape_str(xproj.shape()) + " vs recurrent " +
                                   shape_str(w_hh.shape()));
  }
  if (valid == 0 || valid > len) fail(ErrorCode::Dimension, "lstm_scan: invalid frame count");

  // gates[t] holds activated (i, f, g, o); cell[t] and tanh_cell[t] per step.
  std::vector<double> gates(len * g4, 0.0), cell(len * h, 0.0), tanh_cell(len * h, 0.0);
  std::vector<double> out(len * h, 0.0);
  const ConstMatMap whh = cmap(w_hh, h, g4);
  Eigen::RowVectorXd z(g4);
  std::ptrdiff_t prev = -1;
  for (std::size_t step = 0; step < valid; ++step) {
    const std::size_t t = reverse ? valid - 1 - step : step;
    z = cmap(xproj, 1, g4, t * g4);
    if (prev >= 0) z.noalias() += ConstMatMap(out.data() + prev * h, 1, h) * whh;
    double* gt = gates.data() + t * g4;
    for (std::size_t c = 0; c < h; ++c) {
      gt[c] = sigmoid_scalar(z[c]);
      gt[h + c] = sigmoid_scalar(z[h + c]);
      gt[2 * h + c] = std::tanh(z[2 * h + c]);
      gt[3 * h + c] = sigmoid_scalar(z[3 * h + c]);
      const double c_prev = prev >= 0 ? cell[prev * h + c] : 0.0;
      const double cv = gt[h + c] * c_prev + gt[c] * gt[2 * h + c];
      cell[t * h + c] = cv;
      tanh_cell[t * h + c] = std::tanh(cv);
      out[t * h + c] = gt[3 * h + c] * tanh_cell[t * h + c];
    }
    prev = static_cast<std::ptrdiff_t>(t);
  }

  BackwardFn fn;
  if (tracking({&xproj, &w_hh})) {
    fn = [=, gates = std::move(gates), cell = std::move(cell), tanh_cell = std::move(tanh_cell)](Node& self) {
      Node& xp = *self.inputs[0];
      Node& wr = *self.inputs[1];
      const ConstMatMap whh_v(wr.value.data(), h, g4);
      std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0);
      Eigen::RowVectorXd dz(g4);
      for (std::size_t step = valid; step-- > 0;) {
        const std::size_t t = reverse ? valid - 1 - step : step;
        const bool has_prev = step > 0;
        const std::size_t tp = reverse ? t + 1 : t - 1;
        const double* gt = gates.data() + t * g4;
        for (std::size_t c = 0; c < h; ++c) {
          const double dh = self.grad[t * h + c] + dh_next[c];
          const double ig = gt[c], fg = gt[h + c], gg = gt[2 * h + c], og = gt[3 * h + c];
          const double tc = tanh_cell[t * h + c];
          const double dc = dh * og * (1.0 - tc * tc) + dc_next[c];
          const double c_prev = has_prev ? cell[tp * h + c] : 0.0;
          dz[c] = dc * gg * ig * (1.0 - ig);
          dz[h + c] = dc * c_prev * fg * (1.0 - fg);
          dz[2 * h + c] = dc * ig * (1.0 - gg * gg);
          dz[3 * h + c] = dh * tc * og * (1.0 - og);
          dc_next[c] = dc * fg;
        }
        if (xp.requires_grad) {
          auto& g = xp.grad_buffer();
          for (std::size_t c = 0; c < g4; ++c) g[t * g4 + c] += dz[c];
        }
        if (has_prev) {
          if (wr.requires_grad) {
            gmap(wr, h, g4).noalias() += ConstMatMap(self.value.data() + tp * h, 1, h).transpose() * dz;
          }
          Eigen::Map<Eigen::RowVectorXd>(dh_next.data(), h).noalias() = dz * whh_v.transpose();
        } else {
          std::fill(dh_next.begin(), dh_next.end(), 0.0);
        }
      }
    };
  }
  return record("lstm_scan", {len, h}, std::move(out), {&xproj, &w_hh}, std::move(fn));
}

Tensor mask_rows(const Tensor& x, std::size_t valid) {
  require_rank(x, 2, "mask_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (valid >= rows) return x;
  std::vector<double> out(x.values().begin(), x.values().end());
  std::fill(out.begin() + valid * cols, out.end(), 0.0);
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [valid, cols](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < valid * cols; ++i) g[i] += self.grad[i];
    };
  }
  return record("mask_rows", x.shape(), std::move(out), {&x}, std::move(fn));
}

Tensor mask_cols(const Tensor& x, std::size_t valid) {
  require_rank(x, 2, "mask_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (valid >= cols) return x;
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < rows; ++r) std::fill(out.begin() + r * cols + valid, out.begin() + (r + 1) * cols, 0.0);
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [rows, cols, valid](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < valid; ++c) g[r * cols + c] += self.grad[r * cols + c];
    };
  }
  return record("mask_cols", x.shape(), std::move(out), {&x}, std::move(fn));
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin >= end || end > rows) fail(ErrorCode::Dimension, "slice_rows: invalid range");
  std::vector<double> out(x.values().begin() + begin * cols, x.values().begin() + end * cols);
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [begin, cols](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * cols + i] += self.grad[i];
    };
  }
  return record("slice_rows", {end - begin, cols}, std::move(out), {&x}, std::move(fn));
}

Tensor flatten_time_major(const Tensor& x) {
  require_rank(x, 3, "flatten_time_major");
  const std::size_t ch = x.dim(0), freq = x.dim(1), len = x.dim(2), width = ch * freq;
  std::vector<double> out(x.numel());
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t f = 0; f < freq; ++f)
      for (std::size_t t = 0; t < len; ++t) out[t * width + c * freq + f] = x[(c * freq + f) * len + t];
  BackwardFn fn;
  if (tracking({&x})) {
    fn = [ch, freq, len, width](Node& self) {
      Node& in = *self.inputs[0];
      if (!in.requires_grad) return;
      auto& g = in.grad_buffer();
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t f = 0; f < freq; ++f)
          for (std::size_t t = 0; t < len; ++t) g[(c * freq + f) * len + t] += self.grad[t * width + c * freq + f];
    };
  }
  return record("flatten_time_major", {len, width}, std::move(out), {&x}, std::move(fn));
}

}  // namespace phonebench::ops
