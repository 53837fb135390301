#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "uapt/rng.hpp"

// Dense tensors (rank <= 3) with reverse-mode autodiff. Every op records a
// tape node when an input requires grad; backward() replays the tape in
// reverse topological order exactly once. Instantiated with float for
// training and double for the finite-difference verification suite.

namespace uapt {

struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_enabled_flag(); }

// RAII guard: disables tape recording on this thread (inference paths).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled_flag()) { grad_enabled_flag() = false; }
  ~NoGradGuard() { grad_enabled_flag() = prev; }
};

template <typename T>
struct Tensor;

template <typename T>
struct TapeNode {
  const char* op = "";
  std::vector<Tensor<T>> inputs;            // parents in the DAG
  std::shared_ptr<std::vector<T>> out_grad; // grad buffer of the output
  std::function<void()> backward;           // accumulates into input grads
  bool done = false;                        // backward already consumed this node
};

template <typename T>
struct Tensor {
  std::vector<int> dims;
  std::shared_ptr<std::vector<T>> values;
  bool requires_grad = false;
  std::shared_ptr<std::vector<T>> grad;   // same size as values once present
  std::shared_ptr<TapeNode<T>> node;      // null for leaves

  Tensor() : values(std::make_shared<std::vector<T>>()) {}

  Tensor(std::vector<int> d, std::vector<T> v, bool rg = false)
      : dims(std::move(d)),
        values(std::make_shared<std::vector<T>>(std::move(v))),
        requires_grad(rg) {
    check_dims();
    if (requires_grad) grad = std::make_shared<std::vector<T>>(values->size(), T(0));
  }

  static Tensor zeros(std::vector<int> d, bool rg = false) {
    size_t n = numel_of(d);
    return Tensor(std::move(d), std::vector<T>(n, T(0)), rg);
  }

  static Tensor full(std::vector<int> d, T val, bool rg = false) {
    size_t n = numel_of(d);
    return Tensor(std::move(d), std::vector<T>(n, val), rg);
  }

  static Tensor randn(std::vector<int> d, Rng& rng, T stddev, bool rg = false) {
    size_t n = numel_of(d);
    std::vector<T> v(n);
    for (size_t i = 0; i < n; ++i) v[i] = static_cast<T>(rng.next_normal(0.0, static_cast<double>(stddev)));
    return Tensor(std::move(d), std::move(v), rg);
  }

  static size_t numel_of(const std::vector<int>& d) {
    size_t n = 1;
    for (int x : d) {
      if (x <= 0) throw std::invalid_argument("tensor: nonpositive dim");
      n *= static_cast<size_t>(x);
    }
    return n;
  }

  size_t numel() const { return values->size(); }
  int rank() const { return static_cast<int>(dims.size()); }
  int dim(int i) const { return dims[static_cast<size_t>(i)]; }

  T& at(int i) { return (*values)[static_cast<size_t>(i)]; }
  T at(int i) const { return (*values)[static_cast<size_t>(i)]; }
  T& at(int i, int j) { return (*values)[static_cast<size_t>(i) * dims[1] + j]; }
  T at(int i, int j) const { return (*values)[static_cast<size_t>(i) * dims[1] + j]; }

  T scalar() const {
    if (numel() != 1) throw std::invalid_argument("tensor: scalar() on non-scalar");
    return (*values)[0];
  }

  void ensure_grad() {
    if (!grad) grad = std::make_shared<std::vector<T>>(values->size(), T(0));
  }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), T(0));
  }

  // deep copy of values; fresh grad buffer, no tape history
  Tensor clone() const {
    return Tensor(dims, *values, requires_grad);
  }

 private:
  void check_dims() const {
    if (dims.size() > 3) throw std::invalid_argument("tensor: rank > 3 unsupported");
    if (numel_of(dims) != values->size())
      throw std::invalid_argument("tensor: dims/value count mismatch");
  }
};

namespace detail {

template <typename T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (T x : v) {
    if (!std::isfinite(x)) throw NonFiniteError(std::string(op) + ": non-finite output");
  }
}

template <typename T>
bool wants_tape(const Tensor<T>& t) {
  return grad_enabled() && t.requires_grad;
}

// Backward-time accumulation target. Tensors that participate in a recorded
// graph always have their grad buffer allocated up front (constructor for
// leaves, record() for interior nodes), so a missing buffer is a logic error.
template <typename T>
std::vector<T>* grad_sink(const Tensor<T>& t) {
  if (!t.requires_grad) return nullptr;
  if (!t.grad) throw std::logic_error("tensor: grad buffer missing on requires_grad tensor");
  return t.grad.get();
}

// Attach a tape node to `out`. `fn` must accumulate into the grad buffers of
// inputs that require grad, reading the output grad from node->out_grad.
template <typename T>
void record(Tensor<T>& out, const char* op, std::vector<Tensor<T>> inputs,
            std::function<void(const std::vector<T>&)> fn) {
  bool any = false;
  for (const auto& in : inputs) any = any || wants_tape(in);
  if (!any) return;
  out.requires_grad = true;
  out.ensure_grad();
  auto node = std::make_shared<TapeNode<T>>();
  node->op = op;
  node->inputs = std::move(inputs);
  node->out_grad = out.grad;
  auto gbuf = out.grad;
  node->backward = [fn = std::move(fn), gbuf]() { fn(*gbuf); };
  out.node = node;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward

// Reverse topological order over the tape reachable from `loss`, each node
// visited exactly once. Every requires_grad leaf reachable from the loss ends
// up with a populated grad; leaves created with requires_grad keep their
// (zero) grad buffer when unreachable.
template <typename T>
void backward(Tensor<T>& loss) {
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!loss.node && !loss.requires_grad)
    throw std::invalid_argument("backward: loss not connected to a tape");
  if (loss.node && loss.node->done)
    throw std::runtime_error("backward: called twice without reset");

  loss.ensure_grad();
  (*loss.grad)[0] += T(1);

  if (!loss.node) return;

  // iterative post-order DFS
  std::vector<TapeNode<T>*> topo;
  std::unordered_set<TapeNode<T>*> seen;
  std::vector<std::pair<TapeNode<T>*, size_t>> stack;
  stack.emplace_back(loss.node.get(), 0);
  seen.insert(loss.node.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->inputs.size()) {
      TapeNode<T>* child = n->inputs[idx].node.get();
      ++idx;
      if (child && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    if ((*it)->done) throw std::runtime_error("backward: tape node already consumed");
    (*it)->backward();
    (*it)->done = true;
  }
}

// ---------------------------------------------------------------------------
// ops

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: dimension mismatch");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  const T* pa = a.values->data();
  const T* pb = b.values->data();
  T* po = out.values->data();
  for (int i = 0; i < m; ++i) {
    const T* arow = pa + static_cast<size_t>(i) * k;
    T* orow = po + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const T av = arow[l];
      const T* brow = pb + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  detail::check_finite(*out.values, "matmul");
  detail::record<T>(out, "matmul", {a, b},
                    [a, b, m, k, n](const std::vector<T>& g) {
    if (auto* ga = detail::grad_sink(a)) {
      // dA = G * B^T
      const T* pb2 = b.values->data();
      for (int i = 0; i < m; ++i) {
        const T* grow = g.data() + static_cast<size_t>(i) * n;
        T* garow = ga->data() + static_cast<size_t>(i) * k;
        for (int l = 0; l < k; ++l) {
          const T* brow = pb2 + static_cast<size_t>(l) * n;
          T s = T(0);
          for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
          garow[l] += s;
        }
      }
    }
    if (auto* gb = detail::grad_sink(b)) {
      // dB = A^T * G
      const T* pa2 = a.values->data();
      for (int i = 0; i < m; ++i) {
        const T* arow = pa2 + static_cast<size_t>(i) * k;
        const T* grow = g.data() + static_cast<size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
          const T av = arow[l];
          T* gbrow = gb->data() + static_cast<size_t>(l) * n;
          for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dims != b.dims) throw std::invalid_argument("add: dimension mismatch");
  Tensor<T> out = Tensor<T>::zeros(a.dims);
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] + (*b.values)[i];
  detail::check_finite(*out.values, "add");
  detail::record<T>(out, "add", {a, b}, [a, b, n](const std::vector<T>& g) {
    if (auto* ga = detail::grad_sink(a))
      for (size_t i = 0; i < n; ++i) (*ga)[i] += g[i];
    if (auto* gb = detail::grad_sink(b))
      for (size_t i = 0; i < n; ++i) (*gb)[i] += g[i];
  });
  return out;
}

// x: (n, d), bias: (d); the only broadcast in the op set
template <typename T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || x.dim(1) != bias.dim(0))
    throw std::invalid_argument("bias_add: dimension mismatch");
  const int rows = x.dim(0), d = x.dim(1);
  Tensor<T> out = Tensor<T>::zeros(x.dims);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) + bias.at(j);
  detail::check_finite(*out.values, "bias_add");
  detail::record<T>(out, "bias_add", {x, bias},
                    [x, bias, rows, d](const std::vector<T>& g) {
    if (auto* gx = detail::grad_sink(x))
      for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    if (auto* gb = detail::grad_sink(bias))
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < d; ++j) (*gb)[j] += g[static_cast<size_t>(i) * d + j];
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dims != b.dims) throw std::invalid_argument("mul: dimension mismatch");
  Tensor<T> out = Tensor<T>::zeros(a.dims);
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] * (*b.values)[i];
  detail::check_finite(*out.values, "mul");
  detail::record<T>(out, "mul", {a, b}, [a, b, n](const std::vector<T>& g) {
    if (auto* ga = detail::grad_sink(a))
      for (size_t i = 0; i < n; ++i) (*ga)[i] += g[i] * (*b.values)[i];
    if (auto* gb = detail::grad_sink(b))
      for (size_t i = 0; i < n; ++i) (*gb)[i] += g[i] * (*a.values)[i];
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> out = Tensor<T>::zeros(a.dims);
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] * c;
  detail::check_finite(*out.values, "scale");
  detail::record<T>(out, "scale", {a}, [a, c, n](const std::vector<T>& g) {
    if (auto* ga = detail::grad_sink(a))
      for (size_t i = 0; i < n; ++i) (*ga)[i] += g[i] * c;
  });
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int r = parts[0].rank();
  if (r != 2 || (axis != 0 && axis != 1))
    throw std::invalid_argument("concat: rank-2 tensors, axis 0 or 1");
  for (const auto& p : parts) {
    if (p.rank() != 2) throw std::invalid_argument("concat: rank mismatch");
    if (p.dim(1 - axis) != parts[0].dim(1 - axis))
      throw std::invalid_argument("concat: dimension mismatch");
  }
  int total = 0;
  for (const auto& p : parts) total += p.dim(axis);
  std::vector<int> od = parts[0].dims;
  od[static_cast<size_t>(axis)] = total;
  Tensor<T> out = Tensor<T>::zeros(od);
  const int rows = out.dim(0), cols = out.dim(1);
  int off = 0;
  for (const auto& p : parts) {
    if (axis == 0) {
      std::copy(p.values->begin(), p.values->end(),
                out.values->begin() + static_cast<size_t>(off) * cols);
    } else {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < p.dim(1); ++j) out.at(i, off + j) = p.at(i, j);
    }
    off += p.dim(axis);
  }
  detail::record<T>(out, "concat", parts,
                    [parts, axis, rows, cols](const std::vector<T>& g) {
    int off = 0;
    for (const auto& p : parts) {
      if (auto* gp = detail::grad_sink(p)) {
        if (axis == 0) {
          const size_t base = static_cast<size_t>(off) * cols;
          for (size_t i = 0; i < p.numel(); ++i) (*gp)[i] += g[base + i];
        } else {
          const int pc = p.dim(1);
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pc; ++j)
              (*gp)[static_cast<size_t>(i) * pc + j] +=
                  g[static_cast<size_t>(i) * cols + off + j];
        }
      }
      off += p.dim(axis);
    }
  });
  return out;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis) {
  return concat(std::vector<Tensor<T>>{a, b}, axis);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int start, int len) {
  if (x.rank() != 2 || (axis != 0 && axis != 1))
    throw std::invalid_argument("slice: rank-2 tensors, axis 0 or 1");
  if (start < 0 || len <= 0 || start + len > x.dim(axis))
    throw std::invalid_argument("slice: range out of bounds");
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<int> od = x.dims;
  od[static_cast<size_t>(axis)] = len;
  Tensor<T> out = Tensor<T>::zeros(od);
  if (axis == 0) {
    std::copy(x.values->begin() + static_cast<size_t>(start) * cols,
              x.values->begin() + static_cast<size_t>(start + len) * cols,
              out.values->begin());
  } else {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < len; ++j) out.at(i, j) = x.at(i, start + j);
  }
  detail::record<T>(out, "slice", {x},
                    [x, axis, start, len, rows, cols](const std::vector<T>& g) {
    auto* gx = detail::grad_sink(x);
    if (!gx) return;
    if (axis == 0) {
      const size_t base = static_cast<size_t>(start) * cols;
      for (size_t i = 0; i < g.size(); ++i) (*gx)[base + i] += g[i];
    } else {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < len; ++j)
          (*gx)[static_cast<size_t>(i) * cols + start + j] +=
              g[static_cast<size_t>(i) * len + j];
    }
  });
  return out;
}

// Same linear storage, new dims; gradient passes straight through.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> dims) {
  size_t n = 1;
  for (int d : dims) {
    if (d <= 0) throw std::invalid_argument("reshape: non-positive dim");
    n *= static_cast<size_t>(d);
  }
  if (dims.empty() || dims.size() > 3)
    throw std::invalid_argument("reshape: rank must be 1..3");
  if (n != x.numel()) throw std::invalid_argument("reshape: element count mismatch");
  Tensor<T> out(std::move(dims), *x.values);
  detail::record<T>(out, "reshape", {x}, [x](const std::vector<T>& g) {
    if (auto* gx = detail::grad_sink(x))
      for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
  });
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose: rank-2 only");
  const int m = x.dim(0), n = x.dim(1);
  Tensor<T> out = Tensor<T>::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = x.at(i, j);
  detail::record<T>(out, "transpose", {x}, [x, m, n](const std::vector<T>& g) {
    auto* gx = detail::grad_sink(x);
    if (!gx) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        (*gx)[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
  });
  return out;
}

namespace detail {

// Row softmax over columns [0, limit(i)). Entries past the limit get
// probability exactly zero and no gradient, which keeps causal masking exact
// and all stored values finite.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, const char* opname,
                       std::function<int(int)> limit) {
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor<T> out = Tensor<T>::zeros(x.dims);
  for (int i = 0; i < rows; ++i) {
    const int lim = limit(i);
    if (lim <= 0 || lim > cols) throw std::invalid_argument("softmax: empty row");
    T mx = x.at(i, 0);
    for (int j = 1; j < lim; ++j) mx = std::max(mx, x.at(i, j));
    T sum = T(0);
    for (int j = 0; j < lim; ++j) {
      T e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < lim; ++j) out.at(i, j) /= sum;
  }
  detail::check_finite(*out.values, opname);
  auto saved = out.values;  // probabilities reused by the backward rule
  detail::record<T>(out, opname, {x},
                    [x, saved, rows, cols, limit](const std::vector<T>& g) {
    auto* gx = detail::grad_sink(x);
    if (!gx) return;
    const std::vector<T>& p = *saved;
    for (int i = 0; i < rows; ++i) {
      const int lim = limit(i);
      const size_t base = static_cast<size_t>(i) * cols;
      T dot = T(0);
      for (int j = 0; j < lim; ++j) dot += g[base + j] * p[base + j];
      for (int j = 0; j < lim; ++j)
        (*gx)[base + j] += p[base + j] * (g[base + j] - dot);
    }
  });
  return out;
}

}  // namespace detail

// softmax over the last axis of a rank-1 or rank-2 tensor
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.rank() == 1) {
    Tensor<T> row = x;
    row.dims = {1, x.dim(0)};
    Tensor<T> out = detail::softmax_rows(row, "softmax",
                                         [cols = x.dim(0)](int) { return cols; });
    out.dims = {x.dim(0)};
    return out;
  }
  if (x.rank() != 2) throw std::invalid_argument("softmax: rank-1 or rank-2 only");
  const int cols = x.dim(1);
  return detail::softmax_rows(x, "softmax", [cols](int) { return cols; });
}

// Causal row softmax for attention scores (n_q, n_k): row i may attend to
// columns j <= i + (n_k - n_q). Requires n_k >= n_q.
template <typename T>
Tensor<T> causal_softmax(const Tensor<T>& x) {
  if (x.rank() != 2 || x.dim(1) < x.dim(0))
    throw std::invalid_argument("causal_softmax: need n_k >= n_q");
  const int offset = x.dim(1) - x.dim(0);
  return detail::softmax_rows(x, "causal_softmax",
                              [offset](int i) { return i + offset + 1; });
}

// Per-row layer norm over the last axis with affine gain/bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps) {
  if (x.rank() != 2 || gain.rank() != 1 || bias.rank() != 1 ||
      gain.dim(0) != x.dim(1) || bias.dim(0) != x.dim(1))
    throw std::invalid_argument("layer_norm: dimension mismatch");
  if (!(eps > T(0))) throw std::invalid_argument("layer_norm: eps must be > 0");
  const int rows = x.dim(0), d = x.dim(1);
  Tensor<T> out = Tensor<T>::zeros(x.dims);
  std::vector<T> xhat(static_cast<size_t>(rows) * d);
  std::vector<T> rstd(static_cast<size_t>(rows));
  for (int i = 0; i < rows; ++i) {
    T mean = T(0);
    for (int j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= static_cast<T>(d);
    T var = T(0);
    for (int j = 0; j < d; ++j) {
      T c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[static_cast<size_t>(i)] = rs;
    for (int j = 0; j < d; ++j) {
      T xh = (x.at(i, j) - mean) * rs;
      xhat[static_cast<size_t>(i) * d + j] = xh;
      out.at(i, j) = gain.at(j) * xh + bias.at(j);
    }
  }
  detail::check_finite(*out.values, "layer_norm");
  detail::record<T>(out, "layer_norm", {x, gain, bias},
                    [x, gain, bias, rows, d, xhat = std::move(xhat),
                     rstd = std::move(rstd)](const std::vector<T>& g) {
    if (auto* gg = detail::grad_sink(gain))
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < d; ++j)
          (*gg)[j] += g[static_cast<size_t>(i) * d + j] * xhat[static_cast<size_t>(i) * d + j];
    if (auto* gb = detail::grad_sink(bias))
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < d; ++j) (*gb)[j] += g[static_cast<size_t>(i) * d + j];
    if (auto* gx = detail::grad_sink(x)) {
      for (int i = 0; i < rows; ++i) {
        T gdot = T(0), gxdot = T(0);
        for (int j = 0; j < d; ++j) {
          const T gh = g[static_cast<size_t>(i) * d + j] * gain.at(j);
          gdot += gh;
          gxdot += gh * xhat[static_cast<size_t>(i) * d + j];
        }
        gdot /= static_cast<T>(d);
        gxdot /= static_cast<T>(d);
        for (int j = 0; j < d; ++j) {
          const T gh = g[static_cast<size_t>(i) * d + j] * gain.at(j);
          (*gx)[static_cast<size_t>(i) * d + j] +=
              rstd[static_cast<size_t>(i)] *
              (gh - gdot - xhat[static_cast<size_t>(i) * d + j] * gxdot);
        }
      }
    }
  });
  return out;
}

// exact GELU: 0.5 x (1 + erf(x / sqrt(2)))
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.dims);
  const size_t n = x.numel();
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (size_t i = 0; i < n; ++i) {
    const double v = static_cast<double>((*x.values)[i]);
    (*out.values)[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
  }
  detail::check_finite(*out.values, "gelu");
  detail::record<T>(out, "gelu", {x}, [x, n](const std::vector<T>& g) {
    auto* gx = detail::grad_sink(x);
    if (!gx) return;
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    for (size_t i = 0; i < n; ++i) {
      const double v = static_cast<double>((*x.values)[i]);
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
      (*gx)[i] += g[i] * static_cast<T>(cdf + v * pdf);
    }
  });
  return out;
}

// rows of `table` selected by ids -> (len(ids), d)
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw std::invalid_argument("embedding_lookup: table must be rank-2");
  if (ids.empty()) throw std::invalid_argument("embedding_lookup: empty id list");
  const int vocab = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= vocab) throw std::out_of_range("embedding_lookup: id out of range");
  Tensor<T> out = Tensor<T>::zeros({static_cast<int>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy(table.values->begin() + static_cast<size_t>(ids[i]) * d,
              table.values->begin() + static_cast<size_t>(ids[i] + 1) * d,
              out.values->begin() + i * d);
  detail::record<T>(out, "embedding_lookup", {table},
                    [table, ids, d](const std::vector<T>& g) {
    auto* gt = detail::grad_sink(table);
    if (!gt) return;
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < d; ++j)
        (*gt)[static_cast<size_t>(ids[i]) * d + j] += g[i * d + j];
  });
  return out;
}

// Mask-weighted mean NLL: sum_i mask_i * nll_i / sum_i mask_i.
// logits: (n, V); targets, mask: length n.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets,
                        const std::vector<T>& mask) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be rank-2");
  const int n = logits.dim(0), v = logits.dim(1);
  if (targets.size() != static_cast<size_t>(n) || mask.size() != static_cast<size_t>(n))
    throw std::invalid_argument("cross_entropy: targets/mask length mismatch");
  // scalar reductions accumulate in double so long mask-weighted means stay
  // accurate in float mode
  double msum = 0.0;
  for (T m : mask) msum += static_cast<double>(m);
  if (!(msum > 0.0)) throw std::invalid_argument("cross_entropy: mask selects nothing");

  // softmax probabilities saved for backward
  std::vector<T> probs(static_cast<size_t>(n) * v);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    if (mask[static_cast<size_t>(i)] == T(0)) continue;
    const int t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= v) throw std::out_of_range("cross_entropy: target id out of range");
    T mx = logits.at(i, 0);
    for (int j = 1; j < v; ++j) mx = std::max(mx, logits.at(i, j));
    T sum = T(0);
    for (int j = 0; j < v; ++j) {
      T e = std::exp(logits.at(i, j) - mx);
      probs[static_cast<size_t>(i) * v + j] = e;
      sum += e;
    }
    for (int j = 0; j < v; ++j) probs[static_cast<size_t>(i) * v + j] /= sum;
    loss += static_cast<double>(mask[static_cast<size_t>(i)]) *
            (std::log(static_cast<double>(sum)) -
             static_cast<double>(logits.at(i, t) - mx));
  }
  loss /= msum;
  Tensor<T> out({1}, {static_cast<T>(loss)});
  detail::check_finite(*out.values, "cross_entropy");
  detail::record<T>(out, "cross_entropy", {logits},
                    [logits, targets, mask, msum, n, v,
                     probs = std::move(probs)](const std::vector<T>& g) {
    auto* gl = detail::grad_sink(logits);
    if (!gl) return;
    const T go = g[0];
    for (int i = 0; i < n; ++i) {
      const T w = mask[static_cast<size_t>(i)];
      if (w == T(0)) continue;
      const T c = go * w / msum;
      for (int j = 0; j < v; ++j)
        (*gl)[static_cast<size_t>(i) * v + j] += c * probs[static_cast<size_t>(i) * v + j];
      (*gl)[static_cast<size_t>(i) * v + targets[static_cast<size_t>(i)]] -= c;
    }
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T(0);
  for (T v : *x.values) s += v;
  Tensor<T> out({1}, {s});
  detail::check_finite(*out.values, "sum");
  detail::record<T>(out, "sum", {x}, [x](const std::vector<T>& g) {
    if (auto* gx = detail::grad_sink(x))
      for (size_t i = 0; i < x.numel(); ++i) (*gx)[i] += g[0];
  });
  return out;
}

// Inverted dropout; identity when rate == 0. Mask drawn from `rng`.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, Rng& rng) {
  if (rate < T(0) || rate >= T(1)) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (rate == T(0)) return x;
  const size_t n = x.numel();
  std::vector<T> mask(n);
  const T keep = T(1) - rate;
  for (size_t i = 0; i < n; ++i)
    mask[i] = (rng.next_double() < static_cast<double>(rate)) ? T(0) : T(1) / keep;
  Tensor<T> out = Tensor<T>::zeros(x.dims);
  for (size_t i = 0; i < n; ++i) (*out.values)[i] = (*x.values)[i] * mask[i];
  detail::record<T>(out, "dropout", {x}, [x, mask = std::move(mask), n](const std::vector<T>& g) {
    auto* gx = detail::grad_sink(x);
    if (!gx) return;
    for (size_t i = 0; i < n; ++i) (*gx)[i] += g[i] * mask[i];
  });
  return out;
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace uapt
