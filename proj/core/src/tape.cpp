// Copyright 2026 The svlp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "svlp/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <string>

namespace svlp {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
MatMap<T> as_mat(Tensor<T>& t) {
  return MatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
template <typename T>
ConstMatMap<T> as_mat(const Tensor<T>& t) {
  return ConstMatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
Tape<T>& tape_of(Var<T> a) {
  if (!a.valid()) throw UsageError("operation on an unbound Var");
  return *a.tape();
}

template <typename T>
Tape<T>& tape_of(Var<T> a, Var<T> b) {
  if (a.tape() != b.tape()) throw UsageError("operands recorded on different tapes");
  return tape_of(a);
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

}  // namespace

// ------------------------------------------------------------------- Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  if (!value.all_finite()) throw NumericError("constant has non-finite values");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::param(const ParameterStore<T>& store, std::string_view name) {
  if (store_ != nullptr && store_ != &store) throw UsageError("a tape binds a single ParameterStore");
  const std::size_t entry = store.index_of(name);
  const auto& e = store.entry(entry);
  if (e.frozen) return constant(e.value);
  store_ = &store;
  if (auto it = param_nodes_.find(entry); it != param_nodes_.end()) return Var<T>(this, it->second);
  Node n;
  n.value = e.value;
  n.param_entry = static_cast<long>(entry);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(entry, id);
  return Var<T>(this, id);
}

template <typename T>
Var<T> Tape<T>::push(Tensor<T> value, std::vector<int> inputs, BackwardFn fn, std::string_view op) {
  if (consumed_) throw UsageError("tape already consumed; clear() before reuse");
  if (!value.all_finite()) throw NumericError(std::string(op) + " produced non-finite values");
  Node n;
  n.value = std::move(value);
  for (int in : inputs) n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(in)].requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Tensor<T>& Tape<T>::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
Gradients<T> Tape<T>::backward(Var<T> loss) {
  if (consumed_) throw UsageError("tape already consumed");
  if (loss.tape() != this) throw UsageError("loss was not recorded on this tape");
  if (loss.value().size() != 1) throw ShapeError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  consumed_ = true;
  grad(loss.id())[0] = T(1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || !n.backward || n.grad.shape() != n.value.shape()) continue;
    n.backward(*this, id);
  }
  Gradients<T> out(store_ ? store_->size() : 0);
  for (const auto& [entry, id] : param_nodes_) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.shape() != n.value.shape()) continue;
    const std::size_t off = store_->entry(entry).offset;
    for (std::size_t k = 0; k < n.grad.size(); ++k) out.mut(off + k) += n.grad[k];
  }
  return out;
}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
  param_nodes_.clear();
  store_ = nullptr;
  consumed_ = false;
}

// ------------------------------------------------------------------- ops

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tp = tape_of(a, b);
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  if (A.cols() != B.rows()) shape_fail("matmul", A.shape(), B.shape());
  Tensor<T> out({A.rows(), B.cols()});
  as_mat(out).noalias() = as_mat(A) * as_mat(B);
  const int ia = a.id(), ib = b.id();
  return tp.push(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const auto g = as_mat(static_cast<const Tensor<T>&>(t.grad(self)));
    if (t.requires_grad(ia)) as_mat(t.grad(ia)).noalias() += g * as_mat(t.value(ib)).transpose();
    if (t.requires_grad(ib)) as_mat(t.grad(ib)).noalias() += as_mat(t.value(ia)).transpose() * g;
  }, "matmul");
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  Tape<T>& tp = tape_of(a, b);
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  if (A.cols() != B.cols()) shape_fail("matmul_nt", A.shape(), B.shape());
  Tensor<T> out({A.rows(), B.rows()});
  as_mat(out).noalias() = as_mat(A) * as_mat(B).transpose();
  const int ia = a.id(), ib = b.id();
  return tp.push(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const auto g = as_mat(static_cast<const Tensor<T>&>(t.grad(self)));
    if (t.requires_grad(ia)) as_mat(t.grad(ia)).noalias() += g * as_mat(t.value(ib));
    if (t.requires_grad(ib)) as_mat(t.grad(ib)).noalias() += g.transpose() * as_mat(t.value(ia));
  }, "matmul_nt");
}

template <typename T>
Var<T> transpose(Var<T> a) {
  Tape<T>& tp = tape_of(a);
  const Tensor<T>& A = a.value();
  Tensor<T> out({A.cols(), A.rows()});
  as_mat(out) = as_mat(A).transpose();
  const int ia = a.id();
  return tp.push(std::move(out), {ia}, [ia](Tape<T>& t, int self) {
    as_mat(t.grad(ia)) += as_mat(static_cast<const Tensor<T>&>(t.grad(self))).transpose();
  }, "transpose");
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tp = tape_of(a, b);
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  const int ia = a.id(), ib = b.id();
  if (A.shape() == B.shape()) {
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    return tp.push(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
      const Tensor<T>& g = t.grad(self);
      for (int in : {ia, ib}) {
        if (!t.requires_grad(in)) continue;
        Tensor<T>& gi = t.grad(in);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    }, "add");
  }
  if (B.size() != A.cols()) shape_fail("add", A.shape(), B.shape());
  Tensor<T> out = A;
  const std::size_t cols = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += B[c];
  }
  return tp.push(std::move(out), {ia, ib}, [ia, ib, cols](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
    }
  }, "add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tp = tape_of(a, b);
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  if (A.shape() != B.shape()) shape_fail("sub", A.shape(), B.shape());
  Tensor<T> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  const int ia = a.id(), ib = b.id();
  return tp.push(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  }, "sub");
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tp = tape_of(a, b);
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  if (A.shape() != B.shape()) shape_fail("mul", A.shape(), B.shape());
  Tensor<T> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  const int ia = a.id(), ib = b.id();
  return tp.push(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad(ia);
      const Tensor<T>& vb = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      const Tensor<T>& va = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  }, "mul");
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
  Tape<T>& tp = tape_of(a);
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v *= c;
  const int ia = a.id();
  return tp.push(std::move(out), {ia}, [ia, c](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  }, "scale");
}

template <typename T>
Var<T> scale_by(Var<T> a, Var<T> s) {
  Tape<T>& tp = tape_of(a, s);
  if (s.value().size() != 1) shape_fail("scale_by", a.shape(), s.shape());
  const T c = s.value()[0];
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v *= c;
  const int ia = a.id(), is = s.id();
  return tp.push(std::move(out), {ia, is}, [ia, is](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(ia)) {
      const T c = t.value(is)[0];
      Tensor<T>& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    }
    if (t.requires_grad(is)) {
      const Tensor<T>& va = t.value(ia);
      T acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * va[i];
      t.grad(is)[0] += acc;
    }
  }, "scale_by");
}

template <typename T>
Var<T> exp(Var<T> a) {
  Tape<T>& tp = tape_of(a);
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v = std::exp(v);
  const int ia = a.id();
  return tp.push(std::move(out), {ia}, [ia](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  }, "exp");
}

template <typename T>
Var<T> square(Var<T> a) {
  Tape<T>& tp = tape_of(a);
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v = v * v;
  const int ia = a.id();
  return tp.push(std::move(out), {ia}, [ia](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& x = t.value(ia);
    Tensor<T>& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += T(2) * x[i] * g[i];
  }, "square");
}

template <typename T>
Var<T> sum(Var<T> a) {
  Tape<T>& tp = tape_of(a);
  T acc = 0;
  for (T v : a.value().storage()) acc += v;
  const int ia = a.id();
  return tp.push(Tensor<T>::scalar(acc), {ia}, [ia](Tape<T>& t, int self) {
    const T g = t.grad(self)[0];
    for (auto& v : t.grad(ia).storage()) v += g;
  }, "sum");
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  Tape<T>& tp = tape_of(x, gain);
  const Tensor<T>& X = x.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  if (gain.value().size() != cols || bias.value().size() != cols) {
    shape_fail("layer_norm", X.shape(), gain.shape());
  }
  const Tensor<T>& G = gain.value();
  const Tensor<T>& Bv = bias.value();
  Tensor<T> out(X.shape());
  std::vector<T> xhat(X.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = X.data() + r * cols;
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<T>(cols);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (xr[c] - mean) * is;
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * G[c] + Bv[c];
    }
  }
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return tp.push(std::move(out), {ix, ig, ib},
                 [ix, ig, ib, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& G = t.value(ig);
    if (t.requires_grad(ig)) {
      Tensor<T>& gg = t.grad(ig);
      for (std::size_t i = 0; i < g.size(); ++i) gg[i % cols] += g[i] * xhat[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
    }
    if (t.requires_grad(ix)) {
      Tensor<T>& gx = t.grad(ix);
      std::vector<T> dh(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_dh = 0, mean_dh_h = 0;
        for (std::size_t c = 0; c < cols; ++c) {
          dh[c] = g[r * cols + c] * G[c];
          mean_dh += dh[c];
          mean_dh_h += dh[c] * xhat[r * cols + c];
        }
        mean_dh /= static_cast<T>(cols);
        mean_dh_h /= static_cast<T>(cols);
        for (std::size_t c = 0; c < cols; ++c) {
          gx[r * cols + c] += inv_std[r] * (dh[c] - mean_dh - xhat[r * cols + c] * mean_dh_h);
        }
      }
    }
  }, "layer_norm");
}

template <typename T>
Var<T> softmax(Var<T> x, int axis) {
  const auto nd = static_cast<int>(x.value().ndim());
  if (axis == 0 && nd == 2) return transpose(softmax(transpose(x), -1));
  if (!(axis == -1 || axis == nd - 1 || (axis == 0 && nd <= 1))) {
    throw ShapeError("softmax: unsupported axis " + std::to_string(axis) + " for " + shape_str(x.shape()));
  }
  Tape<T>& tp = tape_of(x);
  const Tensor<T>& X = x.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  Tensor<T> out(X.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = X.data() + r * cols;
    T* yr = out.data() + r * cols;
    T mx = xr[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) z += (yr[c] = std::exp(xr[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) yr[c] /= z;
  }
  const int ix = x.id();
  return tp.push(std::move(out), {ix}, [ix, rows, cols](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  }, "softmax");
}

template <typename T>
Var<T> gelu(Var<T> x) {
  Tape<T>& tp = tape_of(x);
  Tensor<T> out = x.value();
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (auto& v : out.storage()) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  const int ix = x.id();
  return tp.push(std::move(out), {ix}, [ix, inv_sqrt2](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& X = t.value(ix);
    Tensor<T>& gx = t.grad(ix);
    const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = X[i];
      const T d = T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      gx[i] += g[i] * d;
    }
  }, "gelu");
}

template <typename T>
Var<T> l2_normalize(Var<T> x) {
  Tape<T>& tp = tape_of(x);
  const Tensor<T>& X = x.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  Tensor<T> out(X.shape());
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = 0;
    for (std::size_t c = 0; c < cols; ++c) ss += X[r * cols + c] * X[r * cols + c];
    const T n = std::sqrt(ss);
    if (!(n > T(0))) throw NumericError("l2_normalize of a zero vector (row " + std::to_string(r) + ")");
    norms[r] = n;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = X[r * cols + c] / n;
  }
  const int ix = x.id();
  return tp.push(std::move(out), {ix}, [ix, rows, cols, norms = std::move(norms)](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += y[r * cols + c] * g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += (g[r * cols + c] - y[r * cols + c] * dot) / norms[r];
      }
    }
  }, "l2_normalize");
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape<T>& tp = tape_of(parts.front());
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  std::vector<int> ids;
  std::vector<std::size_t> starts;
  for (const auto& p : parts) {
    if (p.tape() != &tp) throw UsageError("operands recorded on different tapes");
    if (p.value().cols() != cols) shape_fail("concat_rows", parts.front().shape(), p.shape());
    ids.push_back(p.id());
    starts.push_back(rows);
    rows += p.value().rows();
  }
  Tensor<T> out({rows, cols});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& v = parts[k].value();
    std::copy(v.storage().begin(), v.storage().end(), out.data() + starts[k] * cols);
  }
  std::vector<int> inputs = ids;
  return tp.push(std::move(out), std::move(inputs), [ids, starts, cols](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Tensor<T>& gk = t.grad(ids[k]);
      const T* src = g.data() + starts[k] * cols;
      for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += src[i];
    }
  }, "concat_rows");
}

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t start, std::size_t count) {
  Tape<T>& tp = tape_of(x);
  const Tensor<T>& X = x.value();
  if (start + count > X.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + shape_str(X.shape()));
  }
  const std::size_t cols = X.cols();
  Tensor<T> out({count, cols});
  std::copy(X.data() + start * cols, X.data() + (start + count) * cols, out.data());
  const int ix = x.id();
  return tp.push(std::move(out), {ix}, [ix, start, cols](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    T* dst = t.grad(ix).data() + start * cols;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }, "slice_rows");
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> index) {
  Tape<T>& tp = tape_of(x);
  const Tensor<T>& X = x.value();
  const std::size_t cols = X.cols();
  Tensor<T> out({index.size(), cols});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= X.rows()) throw ShapeError("gather_rows: row index out of range");
    std::copy(X.data() + index[i] * cols, X.data() + (index[i] + 1) * cols, out.data() + i * cols);
  }
  const int ix = x.id();
  return tp.push(std::move(out), {ix}, [ix, cols, index = std::move(index)](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(ix);
    for (std::size_t i = 0; i < index.size(); ++i) {
      for (std::size_t c = 0; c < cols; ++c) gx[index[i] * cols + c] += g[i * cols + c];
    }
  }, "gather_rows");
}

template <typename T>
Var<T> pick(Var<T> x, std::size_t i) {
  Tape<T>& tp = tape_of(x);
  if (i >= x.value().size()) throw ShapeError("pick: index out of range");
  const int ix = x.id();
  return tp.push(Tensor<T>::scalar(x.value()[i]), {ix}, [ix, i](Tape<T>& t, int self) {
    t.grad(ix)[i] += t.grad(self)[0];
  }, "pick");
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels) {
  Tape<T>& tp = tape_of(logits);
  const Tensor<T>& Z = logits.value();
  const std::size_t n = Z.rows(), k = Z.cols();
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  }
  Tensor<T> probs(Z.shape());
  T loss = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw UsageError("cross_entropy: label " + std::to_string(labels[r]) + " out of range");
    }
    const T* z = Z.data() + r * k;
    std::size_t am = 0;
    for (std::size_t c = 1; c < k; ++c) am = z[c] > z[am] ? c : am;
    const T mx = z[am];
    // log1p keeps confident rows accurate: the max term contributes exactly 1.
    T rest = 0;
    for (std::size_t c = 0; c < k; ++c) rest += c == am ? T(0) : std::exp(z[c] - mx);
    const T lse = mx + std::log1p(rest);
    for (std::size_t c = 0; c < k; ++c) probs[r * k + c] = std::exp(z[c] - lse);
    loss += (mx - z[labels[r]]) + std::log1p(rest);
  }
  loss /= static_cast<T>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  const int iz = logits.id();
  return tp.push(Tensor<T>::scalar(loss), {iz}, [iz, n, k, probs = std::move(probs), lab = std::move(lab)](Tape<T>& t, int self) {
    const T g = t.grad(self)[0] / static_cast<T>(n);
    Tensor<T>& gz = t.grad(iz);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < k; ++c) {
        const T onehot = static_cast<int>(c) == lab[r] ? T(1) : T(0);
        gz[r * k + c] += g * (probs[r * k + c] - onehot);
      }
    }
  }, "cross_entropy");
}

template <typename T>
Var<T> attention(Var<T> qkv, std::size_t n_seq, std::size_t seq_len, std::size_t heads) {
  Tape<T>& tp = tape_of(qkv);
  const Tensor<T>& X = qkv.value();
  if (X.cols() % 3 != 0 || X.rows() != n_seq * seq_len) {
    throw ShapeError("attention: qkv " + shape_str(X.shape()) + " does not hold " + std::to_string(n_seq) +
                     " sequences of length " + std::to_string(seq_len));
  }
  const std::size_t width = X.cols() / 3;
  if (heads == 0 || width % heads != 0) throw ShapeError("attention: width not divisible by heads");
  const std::size_t dh = width / heads;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto L = static_cast<Eigen::Index>(seq_len);
  const auto D = static_cast<Eigen::Index>(dh);
  const Eigen::OuterStride<> in_stride(static_cast<Eigen::Index>(3 * width));
  const Eigen::OuterStride<> out_stride(static_cast<Eigen::Index>(width));

  Tensor<T> out({n_seq * seq_len, width});
  // Attention probabilities, one L x L block per (sequence, head).
  std::vector<T> probs(n_seq * heads * seq_len * seq_len);
  for (std::size_t s = 0; s < n_seq; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      const T* base = X.data() + s * seq_len * 3 * width + h * dh;
      ConstStridedMap<T> Q(base, L, D, in_stride);
      ConstStridedMap<T> K(base + width, L, D, in_stride);
      ConstStridedMap<T> V(base + 2 * width, L, D, in_stride);
      MatMap<T> P(probs.data() + (s * heads + h) * seq_len * seq_len, L, L);
      P.noalias() = (Q * K.transpose()) * inv_scale;
      for (Eigen::Index r = 0; r < L; ++r) {
        const T mx = P.row(r).maxCoeff();
        P.row(r) = (P.row(r).array() - mx).exp();
        P.row(r) /= P.row(r).sum();
      }
      StridedMap<T> O(out.data() + s * seq_len * width + h * dh, L, D, out_stride);
      O.noalias() = P * V;
    }
  }
  const int ix = qkv.id();
  return tp.push(std::move(out), {ix}, [=, probs = std::move(probs)](Tape<T>& t, int self) {
    const Tensor<T>& G = t.grad(self);
    const Tensor<T>& Xv = t.value(ix);
    Tensor<T>& GX = t.grad(ix);
    RowMat<T> dP(L, L);
    for (std::size_t s = 0; s < n_seq; ++s) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t in_off = s * seq_len * 3 * width + h * dh;
        ConstStridedMap<T> Q(Xv.data() + in_off, L, D, in_stride);
        ConstStridedMap<T> K(Xv.data() + in_off + width, L, D, in_stride);
        ConstStridedMap<T> V(Xv.data() + in_off + 2 * width, L, D, in_stride);
        StridedMap<T> dQ(GX.data() + in_off, L, D, in_stride);
        StridedMap<T> dK(GX.data() + in_off + width, L, D, in_stride);
        StridedMap<T> dV(GX.data() + in_off + 2 * width, L, D, in_stride);
        ConstStridedMap<T> dO(G.data() + s * seq_len * width + h * dh, L, D, out_stride);
        ConstMatMap<T> P(probs.data() + (s * heads + h) * seq_len * seq_len, L, L);
        dV.noalias() += P.transpose() * dO;
        dP.noalias() = dO * V.transpose();
        for (Eigen::Index r = 0; r < L; ++r) {
          const T dot = dP.row(r).dot(P.row(r));
          dP.row(r) = P.row(r).cwiseProduct((dP.row(r).array() - dot).matrix());
        }
        dQ.noalias() += (dP * K) * inv_scale;
        dK.noalias() += (dP.transpose() * Q) * inv_scale;
      }
    }
  }, "attention");
}

#define SVLP_INSTANTIATE_OPS(T)                                                            \
  template class Tape<T>;                                                                  \
  template Var<T> matmul(Var<T>, Var<T>);                                                  \
  template Var<T> matmul_nt(Var<T>, Var<T>);                                               \
  template Var<T> transpose(Var<T>);                                                       \
  template Var<T> add(Var<T>, Var<T>);                                                     \
  template Var<T> sub(Var<T>, Var<T>);                                                     \
  template Var<T> mul(Var<T>, Var<T>);                                                     \
  template Var<T> scale(Var<T>, T);                                                        \
  template Var<T> scale_by(Var<T>, Var<T>);                                                \
  template Var<T> exp(Var<T>);                                                             \
  template Var<T> square(Var<T>);                                                          \
  template Var<T> sum(Var<T>);                                                             \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                   \
  template Var<T> softmax(Var<T>, int);                                                    \
  template Var<T> gelu(Var<T>);                                                            \
  template Var<T> l2_normalize(Var<T>);                                                    \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                                 \
  template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                            \
  template Var<T> gather_rows(Var<T>, std::vector<std::size_t>);                           \
  template Var<T> pick(Var<T>, std::size_t);                                               \
  template Var<T> cross_entropy(Var<T>, std::span<const int>);                             \
  template Var<T> attention(Var<T>, std::size_t, std::size_t, std::size_t);

SVLP_INSTANTIATE_OPS(float)
SVLP_INSTANTIATE_OPS(double)

}  // namespace svlp
