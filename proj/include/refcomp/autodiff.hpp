#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "refcomp/geometry.hpp"
#include "refcomp/param_store.hpp"

namespace refcomp {

namespace kernels {

// The kernels are always called with distinct buffers; restrict lets the
// inner loops vectorize.

/// C (+)= A[M,K] * B[K,N]. Loop order picked so the larger operand streams
/// through cache once.
inline void mm_nn(double* __restrict C, const double* __restrict A,
                  const double* __restrict B, int M, int K, int N,
                  bool accumulate) {
  if (!accumulate)
    for (int i = 0; i < M * N; ++i) C[i] = 0.0;
  if (M <= 32) {
    for (int k = 0; k < K; ++k) {
      const double* brow = B + static_cast<std::size_t>(k) * N;
      for (int i = 0; i < M; ++i) {
        double a = A[static_cast<std::size_t>(i) * K + k];
        double* crow = C + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
    }
  } else {
    for (int i = 0; i < M; ++i) {
      const double* arow = A + static_cast<std::size_t>(i) * K;
      double* crow = C + static_cast<std::size_t>(i) * N;
      for (int k = 0; k < K; ++k) {
        double a = arow[k];
        const double* brow = B + static_cast<std::size_t>(k) * N;
        for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
    }
  }
}

/// C (+)= A[M,K] * B^T where B is [N,K]: rows of A dotted with rows of B.
inline void mm_nt(double* __restrict C, const double* __restrict A,
                  const double* __restrict B, int M, int K, int N,
                  bool accumulate) {
  if (!accumulate)
    for (int i = 0; i < M * N; ++i) C[i] = 0.0;
  if (M <= 32) {
    for (int j = 0; j < N; ++j) {
      const double* brow = B + static_cast<std::size_t>(j) * K;
      for (int i = 0; i < M; ++i) {
        const double* arow = A + static_cast<std::size_t>(i) * K;
        double acc = 0.0;
        for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
        C[static_cast<std::size_t>(i) * N + j] += acc;
      }
    }
  } else {
    for (int i = 0; i < M; ++i) {
      const double* arow = A + static_cast<std::size_t>(i) * K;
      double* crow = C + static_cast<std::size_t>(i) * N;
      for (int j = 0; j < N; ++j) {
        const double* brow = B + static_cast<std::size_t>(j) * K;
        double acc = 0.0;
        for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
        crow[j] += acc;
      }
    }
  }
}

/// C (+)= A^T * B where A is [M,K], B is [M,N], C is [K,N].
inline void mm_tn(double* __restrict C, const double* __restrict A,
                  const double* __restrict B, int M, int K, int N,
                  bool accumulate) {
  if (!accumulate)
    for (int i = 0; i < K * N; ++i) C[i] = 0.0;
  if (static_cast<std::size_t>(K) * N <= (1u << 19)) {
    // Small output: keep C resident, stream A and B once.
    for (int i = 0; i < M; ++i) {
      const double* arow = A + static_cast<std::size_t>(i) * K;
      const double* brow = B + static_cast<std::size_t>(i) * N;
      for (int k = 0; k < K; ++k) {
        double a = arow[k];
        double* crow = C + static_cast<std::size_t>(k) * N;
        for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
    }
  } else {
    // Large output: stream C once, B stays resident (M is small here).
    for (int k = 0; k < K; ++k) {
      double* crow = C + static_cast<std::size_t>(k) * N;
      for (int i = 0; i < M; ++i) {
        double a = A[static_cast<std::size_t>(i) * K + k];
        const double* brow = B + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
    }
  }
}

}  // namespace kernels

using NodeId = int;

enum class Op {
  Constant,
  Param,
  MatMul,
  Affine,  // x*W + b with an optional fused relu
  Add,
  Sub,
  BiasAdd,
  ConcatCols,
  ConcatRows,
  SliceRows,
  Reshape,
  Relu,
  LeakyRelu,
  MaxRows,
  GatherRows,
  SumAll,
  MeanAll,
  RowSums,
  Scale,
  Square,
  Sqrt,
  StopGrad,
};

/// Define-by-run reverse-mode graph over row-major matrices. Forward values
/// are computed eagerly at node creation; backward() walks the tape in
/// reverse, which is a valid topological order because parents always precede
/// children. Graphs are rebuilt every step, never cached.
class Graph {
 public:
  struct Node {
    Op op = Op::Constant;
    int rows = 0, cols = 0;
    NodeId a = -1, b = -1, c = -1;
    std::vector<double> value;
    std::vector<double> grad;      // lazily allocated during backward
    std::vector<int> idx;          // gather indices / argmax memo
    double c0 = 0.0;               // scale factor, leaky slope, or relu flag
    Param* param = nullptr;
    bool needs_grad = false;

    std::size_t count() const {
      return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    }
  };

  const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::vector<double>& value(NodeId id) const { return node(id).value; }
  int rows(NodeId id) const { return node(id).rows; }
  int cols(NodeId id) const { return node(id).cols; }
  double scalar(NodeId id) const {
    const Node& n = node(id);
    if (n.rows != 1 || n.cols != 1)
      throw std::invalid_argument("scalar: node is " + shape_str(id) + ", not 1x1");
    return n.value[0];
  }

  /// Parameter names referenced while building this graph, in first-use order.
  const std::vector<std::string>& touched_params() const { return touched_; }

  void set_check_finite(bool on) { check_finite_ = on; }

  NodeId constant(int rows, int cols, const double* data) {
    Node n;
    n.op = Op::Constant;
    n.rows = rows;
    n.cols = cols;
    n.value.assign(data, data + n.count());
    return push(std::move(n));
  }

  NodeId constant(const PointCloud& cloud) {
    return constant(static_cast<int>(cloud.size()), 3, &cloud.points[0].x);
  }

  NodeId constant_scalar(double v) { return constant(1, 1, &v); }

  NodeId constant_fill(int rows, int cols, double v) {
    Node n;
    n.op = Op::Constant;
    n.rows = rows;
    n.cols = cols;
    n.value.assign(n.count(), v);
    return push(std::move(n));
  }

  /// Parameter leaf. Repeated requests for the same name return the one
  /// existing node, so shared layers appear once per graph and their
  /// gradients accumulate through a single buffer.
  NodeId param(ParamStore& store, const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return it->second;
    Param& p = store.at(name);
    Node n;
    n.op = Op::Param;
    n.rows = static_cast<int>(p.rows());
    n.cols = static_cast<int>(p.cols());
    n.value = p.value;
    n.param = &p;
    n.needs_grad = true;
    touched_.push_back(name);
    NodeId id = push(std::move(n));
    param_nodes_.emplace(name, id);
    return id;
  }

  NodeId matmul(NodeId a, NodeId b) {
    const Node& A = node(a);
    const Node& B = node(b);
    if (A.cols != B.rows)
      throw std::invalid_argument("matmul: inner dims differ, " + shape_str(a) +
                                  " vs " + shape_str(b));
    Node n = make(Op::MatMul, A.rows, B.cols, a, b);
    kernels::mm_nn(n.value.data(), A.value.data(), B.value.data(), A.rows, A.cols,
                   B.cols, false);
    return push(std::move(n));
  }

  /// x*W + bias in one node, optionally rectified. One buffer instead of
  /// three for the hot per-point layers.
  NodeId affine(NodeId x, NodeId w, NodeId bias, bool rectify) {
    const Node& X = node(x);
    const Node& W = node(w);
    const Node& B = node(bias);
    if (X.cols != W.rows)
      throw std::invalid_argument("affine: inner dims differ, " + shape_str(x) +
                                  " vs " + shape_str(w));
    if (B.rows != 1 || B.cols != W.cols)
      throw std::invalid_argument("affine: bias " + shape_str(bias) +
                                  " does not broadcast over " + shape_str(w));
    Node n = make(Op::Affine, X.rows, W.cols, x, w);
    n.c = bias;
    n.needs_grad = n.needs_grad || node(bias).needs_grad;
    n.c0 = rectify ? 1.0 : 0.0;
    kernels::mm_nn(n.value.data(), X.value.data(), W.value.data(), X.rows, X.cols,
                   W.cols, false);
    for (int i = 0; i < n.rows; ++i) {
      double* row = n.value.data() + static_cast<std::size_t>(i) * n.cols;
      for (int j = 0; j < n.cols; ++j) {
        double v = row[j] + B.value[static_cast<std::size_t>(j)];
        row[j] = rectify && v < 0.0 ? 0.0 : v;
      }
    }
    return push(std::move(n));
  }

  NodeId add(NodeId a, NodeId b) { return binary_elementwise(Op::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary_elementwise(Op::Sub, a, b); }

  /// Broadcast a 1 x cols bias over every row.
  NodeId bias_add(NodeId a, NodeId bias) {
    const Node& A = node(a);
    const Node& B = node(bias);
    if (B.rows != 1 || B.cols != A.cols)
      throw std::invalid_argument("bias_add: bias " + shape_str(bias) +
                                  " does not broadcast over " + shape_str(a));
    Node n = make(Op::BiasAdd, A.rows, A.cols, a, bias);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j)
        n.value[static_cast<std::size_t>(i) * A.cols + j] =
            A.value[static_cast<std::size_t>(i) * A.cols + j] + B.value[static_cast<std::size_t>(j)];
    return push(std::move(n));
  }

  NodeId concat_cols(NodeId a, NodeId b) {
    const Node& A = node(a);
    const Node& B = node(b);
    if (A.rows != B.rows)
      throw std::invalid_argument("concat_cols: row mismatch, " + shape_str(a) +
                                  " vs " + shape_str(b));
    Node n = make(Op::ConcatCols, A.rows, A.cols + B.cols, a, b);
    for (int i = 0; i < A.rows; ++i) {
      double* dst = n.value.data() + static_cast<std::size_t>(i) * n.cols;
      const double* pa = A.value.data() + static_cast<std::size_t>(i) * A.cols;
      const double* pb = B.value.data() + static_cast<std::size_t>(i) * B.cols;
      for (int j = 0; j < A.cols; ++j) dst[j] = pa[j];
      for (int j = 0; j < B.cols; ++j) dst[A.cols + j] = pb[j];
    }
    return push(std::move(n));
  }

  NodeId concat_rows(NodeId a, NodeId b) {
    const Node& A = node(a);
    const Node& B = node(b);
    if (A.cols != B.cols)
      throw std::invalid_argument("concat_rows: column mismatch, " + shape_str(a) +
                                  " vs " + shape_str(b));
    Node n = make(Op::ConcatRows, A.rows + B.rows, A.cols, a, b);
    std::copy(A.value.begin(), A.value.end(), n.value.begin());
    std::copy(B.value.begin(), B.value.end(), n.value.begin() + A.value.size());
    return push(std::move(n));
  }

  NodeId stack_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("stack_rows: nothing to stack");
    NodeId acc = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) acc = concat_rows(acc, parts[i]);
    return acc;
  }

  NodeId slice_rows(NodeId a, int row0, int nrows) {
    const Node& A = node(a);
    if (row0 < 0 || nrows < 1 || row0 + nrows > A.rows)
      throw std::invalid_argument("slice_rows: [" + std::to_string(row0) + ", " +
                                  std::to_string(row0 + nrows) + ") out of " +
                                  shape_str(a));
    Node n = make(Op::SliceRows, nrows, A.cols, a);
    n.c0 = row0;
    std::copy(A.value.begin() + static_cast<std::size_t>(row0) * A.cols,
              A.value.begin() + static_cast<std::size_t>(row0 + nrows) * A.cols,
              n.value.begin());
    return push(std::move(n));
  }

  NodeId reshape(NodeId a, int rows, int cols) {
    const Node& A = node(a);
    if (static_cast<std::size_t>(rows) * cols != A.count())
      throw std::invalid_argument("reshape: cannot view " + shape_str(a) + " as (" +
                                  std::to_string(rows) + "x" + std::to_string(cols) + ")");
    Node n = make(Op::Reshape, rows, cols, a);
    n.value = A.value;
    return push(std::move(n));
  }

  NodeId relu(NodeId a) {
    const Node& A = node(a);
    Node n = make(Op::Relu, A.rows, A.cols, a);
    for (std::size_t i = 0; i < A.value.size(); ++i)
      n.value[i] = A.value[i] > 0.0 ? A.value[i] : 0.0;
    return push(std::move(n));
  }

  NodeId leaky_relu(NodeId a, double slope = 0.2) {
    const Node& A = node(a);
    Node n = make(Op::LeakyRelu, A.rows, A.cols, a);
    n.c0 = slope;
    for (std::size_t i = 0; i < A.value.size(); ++i)
      n.value[i] = A.value[i] > 0.0 ? A.value[i] : slope * A.value[i];
    return push(std::move(n));
  }

  /// Column-wise max over rows; the first maximal row wins ties and is the
  /// sole gradient recipient.
  NodeId max_rows(NodeId a) {
    const Node& A = node(a);
    Node n = make(Op::MaxRows, 1, A.cols, a);
    n.idx.assign(static_cast<std::size_t>(A.cols), 0);
    for (int j = 0; j < A.cols; ++j) {
      double best = A.value[static_cast<std::size_t>(j)];
      int best_i = 0;
      for (int i = 1; i < A.rows; ++i) {
        double v = A.value[static_cast<std::size_t>(i) * A.cols + j];
        if (v > best) {
          best = v;
          best_i = i;
        }
      }
      n.value[static_cast<std::size_t>(j)] = best;
      n.idx[static_cast<std::size_t>(j)] = best_i;
    }
    return push(std::move(n));
  }

  NodeId gather_rows(NodeId a, const std::vector<int>& indices) {
    const Node& A = node(a);
    for (int i : indices)
      if (i < 0 || i >= A.rows)
        throw std::invalid_argument("gather_rows: index " + std::to_string(i) +
                                    " out of " + shape_str(a));
    Node n = make(Op::GatherRows, static_cast<int>(indices.size()), A.cols, a);
    n.idx = indices;
    for (std::size_t r = 0; r < indices.size(); ++r)
      std::copy(A.value.begin() + static_cast<std::size_t>(indices[r]) * A.cols,
                A.value.begin() + static_cast<std::size_t>(indices[r] + 1) * A.cols,
                n.value.begin() + r * static_cast<std::size_t>(A.cols));
    return push(std::move(n));
  }

  NodeId sum_all(NodeId a) {
    const Node& A = node(a);
    Node n = make(Op::SumAll, 1, 1, a);
    double acc = 0.0;
    for (double v : A.value) acc += v;
    n.value[0] = acc;
    return push(std::move(n));
  }

  NodeId mean_all(NodeId a) {
    const Node& A = node(a);
    Node n = make(Op::MeanAll, 1, 1, a);
    double acc = 0.0;
    for (double v : A.value) acc += v;
    n.value[0] = acc / static_cast<double>(A.count());
    return push(std::move(n));
  }

  NodeId row_sums(NodeId a) {
    const Node& A = node(a);
    Node n = make(Op::RowSums, A.rows, 1, a);
    for (int i = 0; i < A.rows; ++i) {
      double acc = 0.0;
      const double* row = A.value.data() + static_cast<std::size_t>(i) * A.cols;
      for (int j = 0; j < A.cols; ++j) acc += row[j];
      n.value[static_cast<std::size_t>(i)] = acc;
    }
    return push(std::move(n));
  }

  NodeId scale(NodeId a, double s) {
    const Node& A = node(a);
    Node n = make(Op::Scale, A.rows, A.cols, a);
    n.c0 = s;
    for (std::size_t i = 0; i < A.value.size(); ++i) n.value[i] = s * A.value[i];
    return push(std::move(n));
  }

  NodeId square(NodeId a) {
    const Node& A = node(a);
    Node n = make(Op::Square, A.rows, A.cols, a);
    for (std::size_t i = 0; i < A.value.size(); ++i)
      n.value[i] = A.value[i] * A.value[i];
    return push(std::move(n));
  }

  NodeId sqrt_elem(NodeId a) {
    const Node& A = node(a);
    Node n = make(Op::Sqrt, A.rows, A.cols, a);
    for (std::size_t i = 0; i < A.value.size(); ++i) n.value[i] = std::sqrt(A.value[i]);
    return push(std::move(n));
  }

  /// Identity forward, no gradient flow.
  NodeId stop_gradient(NodeId a) {
    const Node& A = node(a);
    Node n;
    n.op = Op::StopGrad;
    n.rows = A.rows;
    n.cols = A.cols;
    n.a = a;
    n.value = A.value;
    n.needs_grad = false;
    return push(std::move(n));
  }

  /// Reverse pass from a scalar loss. Parameter gradients accumulate into the
  /// store; calling backward twice without zero_grads() doubles them.
  void backward(NodeId loss) {
    Node& L = nodes_[static_cast<std::size_t>(loss)];
    if (L.rows != 1 || L.cols != 1)
      throw std::invalid_argument("backward: loss must be 1x1, got " +
                                  shape_str(loss));
    for (Node& n : nodes_) n.grad.clear();
    L.grad.assign(1, 1.0);
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.empty()) continue;
      propagate(n);
    }
  }

 private:
  Node make(Op op, int rows, int cols, NodeId a, NodeId b = -1) {
    Node n;
    n.op = op;
    n.rows = rows;
    n.cols = cols;
    n.a = a;
    n.b = b;
    n.value.assign(n.count(), 0.0);
    n.needs_grad = (a >= 0 && node(a).needs_grad) || (b >= 0 && node(b).needs_grad);
    return n;
  }

  NodeId push(Node&& n) {
    if (check_finite_) {
      for (double v : n.value)
        if (!std::isfinite(v))
          throw std::runtime_error("non-finite value in forward pass (op " +
                                   std::to_string(static_cast<int>(n.op)) + ")");
    }
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId binary_elementwise(Op op, NodeId a, NodeId b) {
    const Node& A = node(a);
    const Node& B = node(b);
    if (A.rows != B.rows || A.cols != B.cols)
      throw std::invalid_argument(op_name(op) + std::string(": shape mismatch, ") +
                                  shape_str(a) + " vs " + shape_str(b));
    Node n = make(op, A.rows, A.cols, a, b);
    if (op == Op::Add)
      for (std::size_t i = 0; i < A.value.size(); ++i)
        n.value[i] = A.value[i] + B.value[i];
    else
      for (std::size_t i = 0; i < A.value.size(); ++i)
        n.value[i] = A.value[i] - B.value[i];
    return push(std::move(n));
  }

  std::string shape_str(NodeId id) const {
    const Node& n = node(id);
    return "(" + std::to_string(n.rows) + "x" + std::to_string(n.cols) + ")";
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::Add: return "add";
      case Op::Sub: return "sub";
      default: return "op";
    }
  }

  std::vector<double>& grad_of(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad.assign(n.count(), 0.0);
    return n.grad;
  }

  bool wants(NodeId id) const { return id >= 0 && node(id).needs_grad; }

  void propagate(Node& n) {
    switch (n.op) {
      case Op::Constant:
        break;
      case Op::Param:
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
        break;
      case Op::MatMul: {
        const Node& A = node(n.a);
        const Node& B = node(n.b);
        if (wants(n.a))
          kernels::mm_nt(grad_of(n.a).data(), n.grad.data(), B.value.data(), A.rows,
                         B.cols, A.cols, true);
        if (wants(n.b))
          kernels::mm_tn(grad_of(n.b).data(), A.value.data(), n.grad.data(), A.rows,
                         A.cols, B.cols, true);
        break;
      }
      case Op::Affine: {
        const Node& X = node(n.a);
        const Node& W = node(n.b);
        if (n.c0 != 0.0) {
          // Fused relu: mask the upstream gradient in place. n.grad is fully
          // accumulated at this point and is never read again afterwards.
          for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (n.value[i] <= 0.0) n.grad[i] = 0.0;
        }
        if (wants(n.a))
          kernels::mm_nt(grad_of(n.a).data(), n.grad.data(), W.value.data(), X.rows,
                         n.cols, X.cols, true);
        if (wants(n.b))
          kernels::mm_tn(grad_of(n.b).data(), X.value.data(), n.grad.data(), X.rows,
                         X.cols, n.cols, true);
        if (wants(n.c)) {
          auto& gb = grad_of(n.c);
          for (int i = 0; i < n.rows; ++i)
            for (int j = 0; j < n.cols; ++j)
              gb[static_cast<std::size_t>(j)] +=
                  n.grad[static_cast<std::size_t>(i) * n.cols + j];
        }
        break;
      }
      case Op::Add:
        if (wants(n.a)) axpy(grad_of(n.a), 1.0, n.grad);
        if (wants(n.b)) axpy(grad_of(n.b), 1.0, n.grad);
        break;
      case Op::Sub:
        if (wants(n.a)) axpy(grad_of(n.a), 1.0, n.grad);
        if (wants(n.b)) axpy(grad_of(n.b), -1.0, n.grad);
        break;
      case Op::BiasAdd: {
        if (wants(n.a)) axpy(grad_of(n.a), 1.0, n.grad);
        if (wants(n.b)) {
          auto& gb = grad_of(n.b);
          for (int i = 0; i < n.rows; ++i)
            for (int j = 0; j < n.cols; ++j)
              gb[static_cast<std::size_t>(j)] +=
                  n.grad[static_cast<std::size_t>(i) * n.cols + j];
        }
        break;
      }
      case Op::ConcatCols: {
        const Node& A = node(n.a);
        const Node& B = node(n.b);
        if (wants(n.a)) {
          auto& ga = grad_of(n.a);
          for (int i = 0; i < n.rows; ++i)
            for (int j = 0; j < A.cols; ++j)
              ga[static_cast<std::size_t>(i) * A.cols + j] +=
                  n.grad[static_cast<std::size_t>(i) * n.cols + j];
        }
        if (wants(n.b)) {
          auto& gb = grad_of(n.b);
          for (int i = 0; i < n.rows; ++i)
            for (int j = 0; j < B.cols; ++j)
              gb[static_cast<std::size_t>(i) * B.cols + j] +=
                  n.grad[static_cast<std::size_t>(i) * n.cols + A.cols + j];
        }
        break;
      }
      case Op::ConcatRows: {
        const Node& A = node(n.a);
        if (wants(n.a)) {
          auto& ga = grad_of(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
        }
        if (wants(n.b)) {
          auto& gb = grad_of(n.b);
          std::size_t off = A.value.size();
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[off + i];
        }
        break;
      }
      case Op::SliceRows: {
        if (wants(n.a)) {
          auto& ga = grad_of(n.a);
          std::size_t off = static_cast<std::size_t>(n.c0) * n.cols;
          for (std::size_t i = 0; i < n.grad.size(); ++i) ga[off + i] += n.grad[i];
        }
        break;
      }
      case Op::Reshape:
        if (wants(n.a)) axpy(grad_of(n.a), 1.0, n.grad);
        break;
      case Op::Relu: {
        if (wants(n.a)) {
          const Node& A = node(n.a);
          auto& ga = grad_of(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i)
            if (A.value[i] > 0.0) ga[i] += n.grad[i];
        }
        break;
      }
      case Op::LeakyRelu: {
        if (wants(n.a)) {
          const Node& A = node(n.a);
          auto& ga = grad_of(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i)
            ga[i] += (A.value[i] > 0.0 ? 1.0 : n.c0) * n.grad[i];
        }
        break;
      }
      case Op::MaxRows: {
        if (wants(n.a)) {
          auto& ga = grad_of(n.a);
          for (int j = 0; j < n.cols; ++j)
            ga[static_cast<std::size_t>(n.idx[static_cast<std::size_t>(j)]) * n.cols + j] +=
                n.grad[static_cast<std::size_t>(j)];
        }
        break;
      }
      case Op::GatherRows: {
        if (wants(n.a)) {
          auto& ga = grad_of(n.a);
          for (std::size_t r = 0; r < n.idx.size(); ++r) {
            std::size_t src = r * static_cast<std::size_t>(n.cols);
            std::size_t dst = static_cast<std::size_t>(n.idx[r]) * n.cols;
            for (int j = 0; j < n.cols; ++j) ga[dst + j] += n.grad[src + j];
          }
        }
        break;
      }
      case Op::SumAll: {
        if (wants(n.a)) {
          auto& ga = grad_of(n.a);
          double g = n.grad[0];
          for (double& v : ga) v += g;
        }
        break;
      }
      case Op::MeanAll: {
        if (wants(n.a)) {
          auto& ga = grad_of(n.a);
          double g = n.grad[0] / static_cast<double>(ga.size());
          for (double& v : ga) v += g;
        }
        break;
      }
      case Op::RowSums: {
        if (wants(n.a)) {
          const Node& A = node(n.a);
          auto& ga = grad_of(n.a);
          for (int i = 0; i < A.rows; ++i) {
            double g = n.grad[static_cast<std::size_t>(i)];
            double* row = ga.data() + static_cast<std::size_t>(i) * A.cols;
            for (int j = 0; j < A.cols; ++j) row[j] += g;
          }
        }
        break;
      }
      case Op::Scale: {
        if (wants(n.a)) axpy(grad_of(n.a), n.c0, n.grad);
        break;
      }
      case Op::Square: {
        if (wants(n.a)) {
          const Node& A = node(n.a);
          auto& ga = grad_of(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i)
            ga[i] += 2.0 * A.value[i] * n.grad[i];
        }
        break;
      }
      case Op::Sqrt: {
        if (wants(n.a)) {
          auto& ga = grad_of(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i)
            if (n.value[i] > 0.0) ga[i] += 0.5 / n.value[i] * n.grad[i];
        }
        break;
      }
      case Op::StopGrad:
        break;
    }
  }

  static void axpy(std::vector<double>& dst, double a, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
  }

  std::vector<Node> nodes_;
  std::vector<std::string> touched_;
  std::map<std::string, NodeId> param_nodes_;
  bool check_finite_ = false;
};

/// Copy an n x 3 node's values into a point cloud.
inline PointCloud cloud_from_node(const Graph& g, NodeId id) {
  if (g.cols(id) != 3)
    throw std::invalid_argument("cloud_from_node: node is not n x 3");
  PointCloud out;
  const auto& v = g.value(id);
  out.points.resize(static_cast<std::size_t>(g.rows(id)));
  for (std::size_t i = 0; i < out.points.size(); ++i)
    out.points[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return out;
}

}  // namespace refcomp
