#ifndef SPANPSP_TENSOR_HPP
#define SPANPSP_TENSOR_HPP

// Dense row-major tensors of doubles and a reverse-mode tape.
//
// Only rank-1 and rank-2 tensors are needed by the model. Operations record
// a backward rule on the tape of their first argument; Tape::backward then
// walks the nodes in reverse creation order, which is a reverse topological
// order because a node can only reference nodes created before it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spanpsp/utf8.hpp"

namespace spanpsp::ad {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    data_.assign(element_count(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) {
      throw Error("tensor data has " + std::to_string(data_.size()) + " values for shape " +
                  shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Rows of a matrix; a vector counts as one row.
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  Shape shape_;
  std::vector<double> data_;
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, {}); }
  Var variable(Tensor value) { return push(std::move(value), true, {}); }

  /// Records an op output. The node needs a gradient iff any input does.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  Var record(Tensor value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& in : inputs) {
      if (in.tape_ != this) throw Error("op mixes variables from different tapes");
      needs = needs || nodes_[in.id_].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward());
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Moves a node's value out, leaving it empty. Only for nodes no later op reads.
  Tensor release(Var v) { return std::move(nodes_[v.id_].value); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  /// Gradient buffer of a node, zero-initialized on first access.
  Tensor& grad_buffer(std::size_t id) {
    Node& node = nodes_[id];
    if (node.grad.size() != node.value.size()) node.grad = Tensor(node.value.shape());
    return node.grad;
  }

  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty() || nodes_[id].value.empty(); }

  /// Accumulated gradient of a node; zeros if nothing flowed into it.
  Tensor grad(Var v) const {
    const Node& node = nodes_[v.id_];
    if (node.grad.size() == node.value.size()) return node.grad;
    return Tensor(node.value.shape());
  }

  void backward(Var root) {
    if (root.tape_ != this) throw Error("backward root belongs to another tape");
    if (nodes_[root.id_].value.size() != 1) {
      throw Error("backward root must be a scalar, got shape " + shape_string(nodes_[root.id_].value.shape()));
    }
    grad_buffer(root.id_)[0] += 1.0;
    for (std::size_t id = root.id_ + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.backward || node.grad.size() != node.value.size()) continue;
      node.backward(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Tensor value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

inline void require(bool condition, const char* op, const Shape& a, const Shape& b) {
  if (!condition) {
    throw Error(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
  }
}

inline void require_matrix(const Var& x, const char* op) {
  if (x.value().rank() != 2) throw Error(std::string(op) + ": expected a matrix, got " + shape_string(x.shape()));
}

}  // namespace detail

/// a (n x k) times b (k x m).
inline Var matmul(Var a, Var b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::require(A.cols() == B.rows(), "matmul", A.shape(), B.shape());
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  Tensor C({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* c = &C[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = &B[p * m];
      for (std::size_t j = 0; j < m; ++j) c[j] += av * brow[j];
    }
  }
  return a.tape()->record(std::move(C), {a, b}, [a, b, n, k, m](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (tape.requires_grad(a)) {
      Tensor& dA = tape.grad_buffer(a.id());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += G[i * m + j] * B[p * m + j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (tape.requires_grad(b)) {
      Tensor& dB = tape.grad_buffer(b.id());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          for (std::size_t j = 0; j < m; ++j) dB[p * m + j] += av * G[i * m + j];
        }
      }
    }
  });
}

/// a (n x k) times the transpose of b (m x k). Linear layers store weights
/// as (out x in), so `matmul_nt(x, W)` is x W^T.
inline Var matmul_nt(Var a, Var b) {
  detail::require_matrix(a, "matmul_nt");
  detail::require_matrix(b, "matmul_nt");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::require(A.cols() == B.cols(), "matmul_nt", A.shape(), B.shape());
  const std::size_t n = A.rows(), k = A.cols(), m = B.rows();
  Tensor C({n, m});
  if (n < 12) {
    // few rows: the transpose would cost more than the products
    for (std::size_t i = 0; i < n; ++i) {
      const double* a = &A[i * k];
      double* c = &C[i * m];
      std::size_t j = 0;
      for (; j + 4 <= m; j += 4) {
        const double* b0 = &B[j * k];
        const double *b1 = b0 + k, *b2 = b1 + k, *b3 = b2 + k;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
          s0 += a[p] * b0[p];
          s1 += a[p] * b1[p];
          s2 += a[p] * b2[p];
          s3 += a[p] * b3[p];
        }
        c[j] = s0;
        c[j + 1] = s1;
        c[j + 2] = s2;
        c[j + 3] = s3;
      }
      for (; j < m; ++j) {
        const double* b = &B[j * k];
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
        c[j] = s;
      }
    }
  } else {
    std::vector<double> bt(k * m);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t p = 0; p < k; ++p) bt[p * m + j] = B[j * k + p];
    for (std::size_t i = 0; i < n; ++i) {
      double* c = &C[i * m];
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        const double* brow = &bt[p * m];
        for (std::size_t j = 0; j < m; ++j) c[j] += av * brow[j];
      }
    }
  }
  return a.tape()->record(std::move(C), {a, b}, [a, b, n, k, m](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (tape.requires_grad(a)) {
      Tensor& dA = tape.grad_buffer(a.id());
      for (std::size_t i = 0; i < n; ++i) {
        double* da = &dA[i * k];
        for (std::size_t j = 0; j < m; ++j) {
          const double g = G[i * m + j];
          if (g == 0.0) continue;
          const double* brow = &B[j * k];
          for (std::size_t p = 0; p < k; ++p) da[p] += g * brow[p];
        }
      }
    }
    if (tape.requires_grad(b)) {
      Tensor& dB = tape.grad_buffer(b.id());
      for (std::size_t i = 0; i < n; ++i) {
        const double* arow = &A[i * k];
        for (std::size_t j = 0; j < m; ++j) {
          const double g = G[i * m + j];
          if (g == 0.0) continue;
          double* db = &dB[j * k];
          for (std::size_t p = 0; p < k; ++p) db[p] += g * arow[p];
        }
      }
    }
  });
}

inline Var transpose(Var x) {
  detail::require_matrix(x, "transpose");
  const Tensor& X = x.value();
  const std::size_t n = X.rows(), m = X.cols();
  Tensor Y({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) Y[j * n + i] = X[i * m + j];
  return x.tape()->record(std::move(Y), {x}, [x, n, m](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    Tensor& dX = tape.grad_buffer(x.id());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) dX[i * m + j] += G[j * n + i];
  });
}

inline Var add(Var a, Var b) {
  detail::require(a.shape() == b.shape(), "add", a.shape(), b.shape());
  Tensor Y = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] += B[i];
  return a.tape()->record(std::move(Y), {a, b}, [a, b](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    for (Var in : {a, b}) {
      if (!tape.requires_grad(in)) continue;
      Tensor& d = tape.grad_buffer(in.id());
      for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i];
    }
  });
}

inline Var sub(Var a, Var b) {
  detail::require(a.shape() == b.shape(), "sub", a.shape(), b.shape());
  Tensor Y = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] -= B[i];
  return a.tape()->record(std::move(Y), {a, b}, [a, b](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    if (tape.requires_grad(a)) {
      Tensor& d = tape.grad_buffer(a.id());
      for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i];
    }
    if (tape.requires_grad(b)) {
      Tensor& d = tape.grad_buffer(b.id());
      for (std::size_t i = 0; i < G.size(); ++i) d[i] -= G[i];
    }
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::require(a.shape() == b.shape(), "mul", a.shape(), b.shape());
  Tensor Y = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] *= B[i];
  return a.tape()->record(std::move(Y), {a, b}, [a, b](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    if (tape.requires_grad(a)) {
      Tensor& d = tape.grad_buffer(a.id());
      const Tensor& B = b.value();
      for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i] * B[i];
    }
    if (tape.requires_grad(b)) {
      Tensor& d = tape.grad_buffer(b.id());
      const Tensor& A = a.value();
      for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i] * A[i];
    }
  });
}

/// Adds a bias vector to every row of a matrix (the only broadcast supported).
inline Var add_row(Var x, Var bias) {
  const Tensor& X = x.value();
  const Tensor& b = bias.value();
  detail::require(b.rank() == 1 && X.cols() == b.size(), "add_row", X.shape(), b.shape());
  Tensor Y = X;
  const std::size_t n = X.rows(), m = X.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) Y[i * m + j] += b[j];
  return x.tape()->record(std::move(Y), {x, bias}, [x, bias, n, m](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    if (tape.requires_grad(x)) {
      Tensor& d = tape.grad_buffer(x.id());
      for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i];
    }
    if (tape.requires_grad(bias)) {
      Tensor& d = tape.grad_buffer(bias.id());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) d[j] += G[i * m + j];
    }
  });
}

inline Var scale(Var x, double factor) {
  Tensor Y = x.value();
  for (double& v : Y.data()) v *= factor;
  return x.tape()->record(std::move(Y), {x}, [x, factor](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    Tensor& d = tape.grad_buffer(x.id());
    for (std::size_t i = 0; i < G.size(); ++i) d[i] += factor * G[i];
  });
}

inline Var add_constant(Var x, double c) {
  Tensor Y = x.value();
  for (double& v : Y.data()) v += c;
  return x.tape()->record(std::move(Y), {x}, [x](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    Tensor& d = tape.grad_buffer(x.id());
    for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i];
  });
}

/// max(0, x); the subgradient at 0 is 0.
inline Var relu(Var x) {
  Tensor Y = x.value();
  for (double& v : Y.data()) v = v > 0.0 ? v : 0.0;
  return x.tape()->record(std::move(Y), {x}, [x](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    const Tensor& X = x.value();
    Tensor& d = tape.grad_buffer(x.id());
    for (std::size_t i = 0; i < G.size(); ++i) {
      if (X[i] > 0.0) d[i] += G[i];
    }
  });
}

inline Var softmax_rows(Var x) {
  const Tensor& X = x.value();
  const std::size_t n = X.rows(), m = X.cols();
  Tensor Y(X.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = &X[i * m];
    double* yr = &Y[i * m];
    const double mx = *std::max_element(xr, xr + m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    for (std::size_t j = 0; j < m; ++j) yr[j] /= total;
  }
  const std::size_t out_id = x.tape()->size();
  return x.tape()->record(std::move(Y), {x}, [x, n, m, out_id](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    const Tensor& Y = tape.value(out_id);
    Tensor& d = tape.grad_buffer(x.id());
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += G[i * m + j] * Y[i * m + j];
      for (std::size_t j = 0; j < m; ++j) d[i * m + j] += Y[i * m + j] * (G[i * m + j] - dot);
    }
  });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes each row to zero mean and unit variance, then applies gain and bias.
inline Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps) {
  const Tensor& X = x.value();
  const Tensor& g = gain.value();
  const Tensor& b = bias.value();
  const std::size_t n = X.rows(), m = X.cols();
  detail::require(g.size() == m && b.size() == m, "layer_norm", X.shape(), g.shape());
  Tensor Y(X.shape());
  Tensor normalized(X.shape());
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = &X[i * m];
    double mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean += xr[j];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(m);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      const double xhat = (xr[j] - mean) * inv_std[i];
      normalized[i * m + j] = xhat;
      Y[i * m + j] = g[j] * xhat + b[j];
    }
  }
  return x.tape()->record(
      std::move(Y), {x, gain, bias},
      [x, gain, bias, n, m, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          Tape& tape, std::size_t self) {
        const Tensor& G = tape.grad_buffer(self);
        const Tensor& g = gain.value();
        if (tape.requires_grad(gain) || tape.requires_grad(bias)) {
          Tensor* dg = tape.requires_grad(gain) ? &tape.grad_buffer(gain.id()) : nullptr;
          Tensor* db = tape.requires_grad(bias) ? &tape.grad_buffer(bias.id()) : nullptr;
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
              if (dg) (*dg)[j] += G[i * m + j] * normalized[i * m + j];
              if (db) (*db)[j] += G[i * m + j];
            }
          }
        }
        if (tape.requires_grad(x)) {
          Tensor& dX = tape.grad_buffer(x.id());
          const double inv_m = 1.0 / static_cast<double>(m);
          for (std::size_t i = 0; i < n; ++i) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              const double dxhat = G[i * m + j] * g[j];
              mean_dxhat += dxhat;
              mean_dxhat_xhat += dxhat * normalized[i * m + j];
            }
            mean_dxhat *= inv_m;
            mean_dxhat_xhat *= inv_m;
            for (std::size_t j = 0; j < m; ++j) {
              const double dxhat = G[i * m + j] * g[j];
              dX[i * m + j] += inv_std[i] * (dxhat - mean_dxhat - normalized[i * m + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

/// Gathers rows of an embedding table.
inline Var embed_lookup(Var table, std::span<const std::size_t> indices) {
  detail::require_matrix(table, "embed_lookup");
  const Tensor& T = table.value();
  const std::size_t d = T.cols();
  Tensor Y({indices.size(), d});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= T.rows()) {
      throw Error("embed_lookup: index " + std::to_string(indices[r]) + " outside table of " +
                  std::to_string(T.rows()) + " rows");
    }
    std::copy_n(&T[indices[r] * d], d, &Y[r * d]);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return table.tape()->record(std::move(Y), {table}, [table, d, idx = std::move(idx)](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    Tensor& dT = tape.grad_buffer(table.id());
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < d; ++c) dT[idx[r] * d + c] += G[r * d + c];
  });
}

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const std::size_t n = parts[0].value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    detail::require(p.value().rows() == n, "concat_cols", parts[0].shape(), p.shape());
    total += p.value().cols();
  }
  Tensor Y({n, total});
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    const std::size_t w = P.cols();
    for (std::size_t i = 0; i < n; ++i) std::copy_n(&P[i * w], w, &Y[i * total + offset]);
    offsets.push_back(offset);
    offset += w;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape()->record(
      std::move(Y), parts, [inputs, offsets = std::move(offsets), n, total](Tape& tape, std::size_t self) {
        const Tensor& G = tape.grad_buffer(self);
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!tape.requires_grad(inputs[k])) continue;
          Tensor& d = tape.grad_buffer(inputs[k].id());
          const std::size_t w = d.cols();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) d[i * w + j] += G[i * total + offsets[k] + j];
        }
      });
}

inline Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  detail::require_matrix(x, "slice_cols");
  const Tensor& X = x.value();
  const std::size_t n = X.rows(), m = X.cols();
  if (begin + count > m) throw Error("slice_cols: columns [" + std::to_string(begin) + "," +
                                     std::to_string(begin + count) + ") outside " + shape_string(X.shape()));
  Tensor Y({n, count});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(&X[i * m + begin], count, &Y[i * count]);
  return x.tape()->record(std::move(Y), {x}, [x, n, m, begin, count](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    Tensor& d = tape.grad_buffer(x.id());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) d[i * m + begin + j] += G[i * count + j];
  });
}

inline Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  detail::require_matrix(x, "slice_rows");
  const Tensor& X = x.value();
  const std::size_t m = X.cols();
  if (begin + count > X.rows()) throw Error("slice_rows: rows [" + std::to_string(begin) + "," +
                                            std::to_string(begin + count) + ") outside " + shape_string(X.shape()));
  Tensor Y({count, m});
  std::copy_n(&X[begin * m], count * m, &Y[0]);
  return x.tape()->record(std::move(Y), {x}, [x, m, begin, count](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    Tensor& d = tape.grad_buffer(x.id());
    for (std::size_t i = 0; i < count * m; ++i) d[begin * m + i] += G[i];
  });
}

/// Row r of the output is x[pairs[r].second] - x[pairs[r].first].
inline Var row_difference(Var x, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  detail::require_matrix(x, "row_difference");
  const Tensor& X = x.value();
  const std::size_t m = X.cols();
  Tensor Y({pairs.size(), m});
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    const auto [from, to] = pairs[r];
    if (from >= X.rows() || to >= X.rows()) throw Error("row_difference: row index outside " + shape_string(X.shape()));
    const double* a = &X[from * m];
    const double* b = &X[to * m];
    double* y = &Y[r * m];
    for (std::size_t j = 0; j < m; ++j) y[j] = b[j] - a[j];
  }
  std::vector<std::pair<std::size_t, std::size_t>> saved(pairs.begin(), pairs.end());
  return x.tape()->record(std::move(Y), {x}, [x, m, saved = std::move(saved)](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    Tensor& d = tape.grad_buffer(x.id());
    for (std::size_t r = 0; r < saved.size(); ++r) {
      const double* g = &G[r * m];
      double* da = &d[saved[r].first * m];
      double* db = &d[saved[r].second * m];
      for (std::size_t j = 0; j < m; ++j) {
        db[j] += g[j];
        da[j] -= g[j];
      }
    }
  });
}

inline Var sum(Var x) {
  const Tensor& X = x.value();
  double total = 0.0;
  for (double v : X.data()) total += v;
  return x.tape()->record(Tensor({1}, total), {x}, [x](Tape& tape, std::size_t self) {
    const double g = tape.grad_buffer(self)[0];
    Tensor& d = tape.grad_buffer(x.id());
    for (double& v : d.data()) v += g;
  });
}

/// Scalar sum of coef * x[flat index] over the given entries.
struct WeightedEntry {
  std::size_t index;
  double coef;
};

inline Var gather_sum(Var x, std::span<const WeightedEntry> entries) {
  const Tensor& X = x.value();
  double total = 0.0;
  for (const auto& e : entries) {
    if (e.index >= X.size()) throw Error("gather_sum: index outside " + shape_string(X.shape()));
    total += e.coef * X[e.index];
  }
  std::vector<WeightedEntry> saved(entries.begin(), entries.end());
  return x.tape()->record(Tensor({1}, total), {x}, [x, saved = std::move(saved)](Tape& tape, std::size_t self) {
    const double g = tape.grad_buffer(self)[0];
    Tensor& d = tape.grad_buffer(x.id());
    for (const auto& e : saved) d[e.index] += g * e.coef;
  });
}

/// Inverted dropout; identity when rate is 0.
template <typename Rng>
Var dropout(Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw Error("dropout rate must be below 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const double factor = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.value().size());
  for (double& m : mask) m = keep(rng) ? factor : 0.0;
  Tensor Y = x.value();
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] *= mask[i];
  return x.tape()->record(std::move(Y), {x}, [x, mask = std::move(mask)](Tape& tape, std::size_t self) {
    const Tensor& G = tape.grad_buffer(self);
    Tensor& d = tape.grad_buffer(x.id());
    for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<double> per_param;  // max relative error within each parameter tensor
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Builds the scalar to differentiate from leaf variables holding the params.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Tape gradients of f at params, one tensor per parameter.
inline std::vector<Tensor> tape_gradients(const ScalarFn& f, const std::vector<Tensor>& params, double* value = nullptr) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.variable(p));
  const Var out = f(tape, leaves);
  if (value) *value = out.value()[0];
  tape.backward(out);
  std::vector<Tensor> grads;
  grads.reserve(leaves.size());
  for (const Var& v : leaves) grads.push_back(tape.grad(v));
  return grads;
}

inline double evaluate(const ScalarFn& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.constant(p));
  return f(tape, leaves).value()[0];
}

/// evaluate() without copying: the tensors are lent to the tape and taken back.
inline double evaluate_in_place(const ScalarFn& f, std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (auto& p : params) leaves.push_back(tape.constant(std::move(p)));
  auto give_back = [&] {
    for (std::size_t p = 0; p < params.size(); ++p) params[p] = tape.release(leaves[p]);
  };
  double value = 0.0;
  try {
    value = f(tape, leaves).value()[0];
  } catch (...) {
    give_back();
    throw;
  }
  give_back();
  return value;
}

/// Central differences against tape gradients. The error of a coordinate is
/// |g_fd - g_bp| / max(1, |g_fd|, |g_bp|).
inline GradCheckResult grad_check(const ScalarFn& f, std::vector<Tensor> params, double h = 1e-5,
                                  double tol = 1e-4) {
  const auto analytic = tape_gradients(f, params);
  GradCheckResult result;
  result.per_param.assign(params.size(), 0.0);
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + h;
      const double up = evaluate_in_place(f, params);
      params[p][i] = saved - h;
      const double down = evaluate_in_place(f, params);
      params[p][i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double bp = analytic[p][i];
      if (!std::isfinite(fd) || !std::isfinite(bp)) {
        throw Error("grad_check: non-finite value at parameter " + std::to_string(p) + " coordinate " +
                    std::to_string(i));
      }
      const double err = std::abs(fd - bp) / std::max({1.0, std::abs(fd), std::abs(bp)});
      result.per_param[p] = std::max(result.per_param[p], err);
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = p;
        result.worst_index = i;
      }
    }
  }
  result.passed = result.max_rel_error < tol;
  return result;
}

}  // namespace spanpsp::ad

#endif  // SPANPSP_TENSOR_HPP
