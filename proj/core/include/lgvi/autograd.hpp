#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lgvi/blas.hpp"
#include "lgvi/tensor.hpp"

namespace lgvi {

// Reverse-mode autodiff over Tensor<S>. Define-by-run: each op returns a new
// node holding its value plus a closure that scatters the node's gradient
// into its parents. Templated on scalar so the same model code runs in f32
// for training and f64 for finite-difference gradient checks.

template <class S>
struct Node;

template <class S>
using Var = std::shared_ptr<Node<S>>;

template <class S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  std::vector<Var<S>> parents;
  std::function<void(Node<S>&)> backward_fn;
  bool requires_grad = false;
  std::string name;

  void ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor<S>::zeros(value.shape);
  }
  void zero_grad() {
    if (grad.numel() > 0) std::fill(grad.data.begin(), grad.data.end(), S(0));
  }
  int64_t numel() const { return value.numel(); }
  const Shape& shape() const { return value.shape; }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

// RAII guard that disables graph construction (used by the sampler loop,
// otherwise every denoising step would chain onto the previous graph).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev; }
};

inline bool grad_enabled() { return detail::grad_enabled; }

template <class S>
Var<S> make_leaf(Tensor<S> value, bool requires_grad = false, std::string name = {}) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && detail::grad_enabled;
  n->name = std::move(name);
  return n;
}

template <class S>
Var<S> constant(Tensor<S> value) {
  return make_leaf(std::move(value), false);
}

template <class S>
Var<S> detach(const Var<S>& v) {
  return make_leaf(v->value, false);
}

template <class S>
bool any_requires_grad(const std::vector<Var<S>>& parents) {
  for (const auto& p : parents)
    if (p->requires_grad) return true;
  return false;
}

// Builds a node; the backward closure is attached only when some parent needs
// gradients and grad mode is on, so forward-only paths stay graph-free.
template <class S>
Var<S> make_op(Tensor<S> value, std::vector<Var<S>> parents,
               std::function<void(Node<S>&)> backward_fn) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  if (detail::grad_enabled && any_requires_grad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

template <class S>
void accumulate(Node<S>& dst, const S* src, int64_t n) {
  dst.ensure_grad();
  S* g = dst.grad.ptr();
  for (int64_t i = 0; i < n; ++i) g[i] += src[i];
}

// Runs backprop from a scalar root. Topological order via iterative DFS.
template <class S>
void backward(const Var<S>& root) {
  if (root->numel() != 1) throw std::invalid_argument("backward: root must be scalar");
  if (!root->requires_grad) return;

  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> visited;
  std::vector<std::pair<Node<S>*, size_t>> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<S>* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad.data[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backward_fn && n->grad.numel() > 0) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a->value, b->value, "add");
  Tensor<S> y = a->value;
  const S* pb = b->value.ptr();
  S* py = y.ptr();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] += pb[i];
  return make_op<S>(std::move(y), {a, b}, [a, b](Node<S>& n) {
    if (a->requires_grad) accumulate(*a, n.grad.ptr(), n.numel());
    if (b->requires_grad) accumulate(*b, n.grad.ptr(), n.numel());
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor<S> y = a->value;
  const S* pb = b->value.ptr();
  S* py = y.ptr();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] -= pb[i];
  return make_op<S>(std::move(y), {a, b}, [a, b](Node<S>& n) {
    if (a->requires_grad) accumulate(*a, n.grad.ptr(), n.numel());
    if (b->requires_grad) {
      b->ensure_grad();
      S* g = b->grad.ptr();
      const S* src = n.grad.ptr();
      for (int64_t i = 0; i < n.numel(); ++i) g[i] -= src[i];
    }
  });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor<S> y = a->value;
  const S* pb = b->value.ptr();
  S* py = y.ptr();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] *= pb[i];
  return make_op<S>(std::move(y), {a, b}, [a, b](Node<S>& n) {
    const S* g = n.grad.ptr();
    if (a->requires_grad) {
      a->ensure_grad();
      S* ga = a->grad.ptr();
      const S* vb = b->value.ptr();
      for (int64_t i = 0; i < n.numel(); ++i) ga[i] += g[i] * vb[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      S* gb = b->grad.ptr();
      const S* va = a->value.ptr();
      for (int64_t i = 0; i < n.numel(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

template <class S>
Var<S> scale(const Var<S>& a, double c) {
  Tensor<S> y = a->value;
  for (auto& v : y.data) v = static_cast<S>(v * c);
  return make_op<S>(std::move(y), {a}, [a, c](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    S* ga = a->grad.ptr();
    const S* g = n.grad.ptr();
    for (int64_t i = 0; i < n.numel(); ++i) ga[i] += static_cast<S>(g[i] * c);
  });
}

template <class S>
Var<S> add_scalar(const Var<S>& a, double c) {
  Tensor<S> y = a->value;
  for (auto& v : y.data) v = static_cast<S>(v + c);
  return make_op<S>(std::move(y), {a}, [a](Node<S>& n) {
    if (a->requires_grad) accumulate(*a, n.grad.ptr(), n.numel());
  });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

// Activations evaluate in the tensor's own precision: float training uses the
// single-precision libm kernels, double gradcheck instances keep full
// precision through the same code.
template <class S>
Var<S> silu(const Var<S>& a) {
  Tensor<S> y = a->value;
  S* py = y.ptr();
  const int64_t n_elems = y.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n_elems; ++i) {
    S x = py[i];
    py[i] = x / (S(1) + std::exp(-x));
  }
  return make_op<S>(std::move(y), {a}, [a](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    S* ga = a->grad.ptr();
    const S* g = n.grad.ptr();
    const S* x = a->value.ptr();
    const int64_t m = n.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
      S s = S(1) / (S(1) + std::exp(-x[i]));
      ga[i] += g[i] * (s * (S(1) + x[i] * (S(1) - s)));
    }
  });
}

template <class S>
Var<S> gelu(const Var<S>& a) {
  constexpr S kInvSqrt2 = S(0.70710678118654752440);
  constexpr S kInvSqrt2Pi = S(0.39894228040143267794);
  Tensor<S> y = a->value;
  S* py = y.ptr();
  const int64_t n_elems = y.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n_elems; ++i) {
    S x = py[i];
    py[i] = x * S(0.5) * (S(1) + std::erf(x * kInvSqrt2));
  }
  return make_op<S>(std::move(y), {a}, [a, kInvSqrt2, kInvSqrt2Pi](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    S* ga = a->grad.ptr();
    const S* g = n.grad.ptr();
    const S* x = a->value.ptr();
    const int64_t m = n.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
      S xi = x[i];
      S phi = S(0.5) * (S(1) + std::erf(xi * kInvSqrt2));
      S pdf = kInvSqrt2Pi * std::exp(S(-0.5) * xi * xi);
      ga[i] += g[i] * (phi + xi * pdf);
    }
  });
}

template <class S>
Var<S> relu(const Var<S>& a) {
  Tensor<S> y = a->value;
  for (auto& v : y.data) v = v > S(0) ? v : S(0);
  return make_op<S>(std::move(y), {a}, [a](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    S* ga = a->grad.ptr();
    const S* g = n.grad.ptr();
    const S* x = a->value.ptr();
    for (int64_t i = 0; i < n.numel(); ++i)
      if (x[i] > S(0)) ga[i] += g[i];
  });
}

template <class S>
Var<S> sigmoid(const Var<S>& a) {
  Tensor<S> y = a->value;
  for (auto& v : y.data) v = S(1) / (S(1) + std::exp(-v));
  return make_op<S>(std::move(y), {a}, [a](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    S* ga = a->grad.ptr();
    const S* g = n.grad.ptr();
    const S* s = n.value.ptr();
    for (int64_t i = 0; i < n.numel(); ++i) ga[i] += static_cast<S>(g[i] * s[i] * (S(1) - s[i]));
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <class S>
Var<S> reshape(const Var<S>& a, Shape shape) {
  Tensor<S> y = a->value.reshaped(std::move(shape));
  return make_op<S>(std::move(y), {a}, [a](Node<S>& n) {
    if (a->requires_grad) accumulate(*a, n.grad.ptr(), n.numel());
  });
}

namespace detail {
inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// Walks the OUTPUT linearly and gathers from the source. An identity suffix
// of the permutation is collapsed into one contiguous block so the common
// head-split/transpose patterns become batched memcpy.
template <class S>
void permute_copy(const S* src, S* dst, const Shape& in_shape, const std::vector<int>& perm,
                  bool accumulate_dst) {
  const int r = static_cast<int>(in_shape.size());
  int keep = r;
  while (keep > 0 && perm[keep - 1] == keep - 1) --keep;
  int64_t inner = 1;
  for (int i = keep; i < r; ++i) inner *= in_shape[i];

  if (keep == 0) {
    if (accumulate_dst)
      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    else
      std::memcpy(dst, src, sizeof(S) * inner);
    return;
  }

  std::vector<int64_t> src_strides(keep);
  {
    int64_t acc = 1;
    for (int i = keep - 1; i >= 0; --i) {
      src_strides[i] = acc;
      acc *= in_shape[i];
    }
  }
  std::vector<int64_t> out_dims(keep), stride_for_out(keep);
  for (int j = 0; j < keep; ++j) {
    out_dims[j] = in_shape[perm[j]];
    stride_for_out[j] = src_strides[perm[j]];
  }

  const int64_t last_n = out_dims[keep - 1];
  const int64_t last_stride = stride_for_out[keep - 1];
  int64_t outer = 1;
  for (int j = 0; j + 1 < keep; ++j) outer *= out_dims[j];

  std::vector<int64_t> idx(keep, 0);
  int64_t base = 0;
  int64_t dst_off = 0;
  for (int64_t o = 0; o < outer; ++o) {
    if (inner == 1) {
      // strided gather along the innermost output axis
      const S* s = src + base;
      if (accumulate_dst)
        for (int64_t j = 0; j < last_n; ++j) dst[dst_off + j] += s[j * last_stride];
      else
        for (int64_t j = 0; j < last_n; ++j) dst[dst_off + j] = s[j * last_stride];
      dst_off += last_n;
    } else {
      for (int64_t j = 0; j < last_n; ++j) {
        const S* s = src + (base + j * last_stride) * inner;
        S* d = dst + dst_off;
        if (accumulate_dst)
          for (int64_t i = 0; i < inner; ++i) d[i] += s[i];
        else
          std::memcpy(d, s, sizeof(S) * inner);
        dst_off += inner;
      }
    }
    for (int j = keep - 2; j >= 0; --j) {
      idx[j]++;
      base += stride_for_out[j];
      if (idx[j] < out_dims[j]) break;
      base -= out_dims[j] * stride_for_out[j];
      idx[j] = 0;
    }
  }
}
}  // namespace detail

template <class S>
Var<S> permute(const Var<S>& a, std::vector<int> perm) {
  const Shape& in_shape = a->value.shape;
  if (perm.size() != in_shape.size()) throw std::invalid_argument("permute: rank mismatch");
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  Tensor<S> y(out_shape);
  detail::permute_copy(a->value.ptr(), y.ptr(), in_shape, perm, false);
  return make_op<S>(std::move(y), {a}, [a, perm, in_shape](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    // inverse scatter: walk src (=a) linearly, read dst offsets
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
    // grad of a at src index += grad of n at permuted index; reuse permute_copy
    // by permuting n.grad back with the inverse permutation.
    detail::permute_copy(n.grad.ptr(), a->grad.ptr(), n.grad.shape, inv, true);
  });
}

template <class S>
Var<S> concat(const Var<S>& a, const Var<S>& b, int axis) {
  const Shape& sa = a->value.shape;
  const Shape& sb = b->value.shape;
  if (sa.size() != sb.size()) throw std::invalid_argument("concat: rank mismatch");
  for (size_t i = 0; i < sa.size(); ++i)
    if (static_cast<int>(i) != axis && sa[i] != sb[i])
      throw std::invalid_argument("concat: shape mismatch off-axis");
  Shape sy = sa;
  sy[axis] += sb[axis];

  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= sa[i];
  int64_t inner = 1;
  for (size_t i = axis + 1; i < sa.size(); ++i) inner *= sa[i];
  int64_t wa = sa[axis] * inner, wb = sb[axis] * inner;

  Tensor<S> y(sy);
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(y.ptr() + o * (wa + wb), a->value.ptr() + o * wa, sizeof(S) * wa);
    std::memcpy(y.ptr() + o * (wa + wb) + wa, b->value.ptr() + o * wb, sizeof(S) * wb);
  }
  return make_op<S>(std::move(y), {a, b}, [a, b, outer, wa, wb](Node<S>& n) {
    const S* g = n.grad.ptr();
    if (a->requires_grad) {
      a->ensure_grad();
      for (int64_t o = 0; o < outer; ++o) {
        S* ga = a->grad.ptr() + o * wa;
        const S* src = g + o * (wa + wb);
        for (int64_t i = 0; i < wa; ++i) ga[i] += src[i];
      }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t o = 0; o < outer; ++o) {
        S* gb = b->grad.ptr() + o * wb;
        const S* src = g + o * (wa + wb) + wa;
        for (int64_t i = 0; i < wb; ++i) gb[i] += src[i];
      }
    }
  });
}

template <class S>
Var<S> slice(const Var<S>& a, int axis, int64_t begin, int64_t end) {
  const Shape& sa = a->value.shape;
  if (begin < 0 || end > sa[axis] || begin >= end) throw std::invalid_argument("slice: bad range");
  Shape sy = sa;
  sy[axis] = end - begin;
  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= sa[i];
  int64_t inner = 1;
  for (size_t i = axis + 1; i < sa.size(); ++i) inner *= sa[i];
  int64_t wa = sa[axis] * inner, wy = (end - begin) * inner, off = begin * inner;

  Tensor<S> y(sy);
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(y.ptr() + o * wy, a->value.ptr() + o * wa + off, sizeof(S) * wy);
  return make_op<S>(std::move(y), {a}, [a, outer, wa, wy, off](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const S* g = n.grad.ptr();
    for (int64_t o = 0; o < outer; ++o) {
      S* ga = a->grad.ptr() + o * wa + off;
      const S* src = g + o * wy;
      for (int64_t i = 0; i < wy; ++i) ga[i] += src[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  const Shape& sa = a->value.shape;
  const Shape& sb = b->value.shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw std::invalid_argument("matmul: bad shapes " + shape_str(sa) + " x " + shape_str(sb));
  int64_t m = sa[0], k = sa[1], n = sb[1];
  Tensor<S> y({m, n});
  gemm(false, false, m, n, k, S(1), a->value.ptr(), k, b->value.ptr(), n, S(0), y.ptr(), n);
  return make_op<S>(std::move(y), {a, b}, [a, b, m, k, n](Node<S>& nn) {
    const S* g = nn.grad.ptr();
    if (a->requires_grad) {
      a->ensure_grad();
      gemm(false, true, m, k, n, S(1), g, n, b->value.ptr(), n, S(1), a->grad.ptr(), k);
    }
    if (b->requires_grad) {
      b->ensure_grad();
      gemm(true, false, k, n, m, S(1), a->value.ptr(), k, g, n, S(1), b->grad.ptr(), n);
    }
  });
}

// x [n, in] @ w [in, out] + bias [out]
template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& bias = nullptr) {
  const Shape& sx = x->value.shape;
  const Shape& sw = w->value.shape;
  if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[0])
    throw std::invalid_argument("linear: bad shapes " + shape_str(sx) + " x " + shape_str(sw));
  int64_t n = sx[0], in = sx[1], out = sw[1];
  Tensor<S> y({n, out});
  gemm(false, false, n, out, in, S(1), x->value.ptr(), in, w->value.ptr(), out, S(0), y.ptr(),
       out);
  if (bias) {
    if (bias->value.numel() != out) throw std::invalid_argument("linear: bias size");
    S* py = y.ptr();
    const S* pb = bias->value.ptr();
    for (int64_t r = 0; r < n; ++r)
      for (int64_t c = 0; c < out; ++c) py[r * out + c] += pb[c];
  }
  std::vector<Var<S>> parents = {x, w};
  if (bias) parents.push_back(bias);
  return make_op<S>(std::move(y), std::move(parents), [x, w, bias, n, in, out](Node<S>& nn) {
    const S* g = nn.grad.ptr();
    if (x->requires_grad) {
      x->ensure_grad();
      gemm(false, true, n, in, out, S(1), g, out, w->value.ptr(), out, S(1), x->grad.ptr(), in);
    }
    if (w->requires_grad) {
      w->ensure_grad();
      gemm(true, false, in, out, n, S(1), x->value.ptr(), in, g, out, S(1), w->grad.ptr(), out);
    }
    if (bias && bias->requires_grad) {
      bias->ensure_grad();
      S* gb = bias->grad.ptr();
      for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < out; ++c) gb[c] += g[r * out + c];
    }
  });
}

namespace detail {
// Small-matrix GEMM used by bmm when per-item work is too small for BLAS
// dispatch overhead to pay off.
template <class S>
void tiny_gemm(bool trans_b, int64_t m, int64_t n, int64_t k, const S* a, const S* b, S* c,
               bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double s = 0;
      if (trans_b) {
        const S* br = b + j * k;
        for (int64_t p = 0; p < k; ++p) s += static_cast<double>(a[i * k + p]) * br[p];
      } else {
        for (int64_t p = 0; p < k; ++p) s += static_cast<double>(a[i * k + p]) * b[p * n + j];
      }
      if (acc)
        c[i * n + j] += static_cast<S>(s);
      else
        c[i * n + j] = static_cast<S>(s);
    }
  }
}
}  // namespace detail

// Batched matmul: a [B, m, k] @ b [B, k, n] -> [B, m, n]; with trans_b,
// b is [B, n, k]. Small per-item shapes (temporal attention) take the
// hand-rolled kernel.
template <class S>
Var<S> bmm(const Var<S>& a, const Var<S>& b, bool trans_b = false) {
  const Shape& sa = a->value.shape;
  const Shape& sb = b->value.shape;
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0]) throw std::invalid_argument("bmm: rank/batch");
  int64_t B = sa[0], m = sa[1], k = sa[2];
  int64_t n = trans_b ? sb[1] : sb[2];
  if ((trans_b ? sb[2] : sb[1]) != k) throw std::invalid_argument("bmm: inner dim");
  Tensor<S> y({B, m, n});
  const bool tiny = m * n * k < 32768;
  const S* pa = a->value.ptr();
  const S* pb = b->value.ptr();
  S* py = y.ptr();
  int64_t stra = m * k, strb = (trans_b ? n * k : k * n), stry = m * n;
  if (tiny) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < B; ++i)
      detail::tiny_gemm(trans_b, m, n, k, pa + i * stra, pb + i * strb, py + i * stry, false);
  } else {
    for (int64_t i = 0; i < B; ++i)
      gemm(false, trans_b, m, n, k, S(1), pa + i * stra, k, pb + i * strb, trans_b ? k : n, S(0),
           py + i * stry, n);
  }
  return make_op<S>(std::move(y), {a, b},
                    [a, b, trans_b, B, m, n, k, stra, strb, stry, tiny](Node<S>& nn) {
    const S* g = nn.grad.ptr();
    if (a->requires_grad) {
      a->ensure_grad();
      S* ga = a->grad.ptr();
      const S* pb2 = b->value.ptr();
      // dA_i = G_i * op(B_i)^T ; with trans_b, dA_i = G_i * B_i
      if (tiny) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < B; ++i)
          detail::tiny_gemm(!trans_b, m, k, n, g + i * stry, pb2 + i * strb, ga + i * stra, true);
      } else {
        for (int64_t i = 0; i < B; ++i)
          gemm(false, !trans_b, m, k, n, S(1), g + i * stry, n, pb2 + i * strb,
               trans_b ? k : n, S(1), ga + i * stra, k);
      }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      S* gb = b->grad.ptr();
      const S* pa2 = a->value.ptr();
      if (tiny) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < B; ++i) {
          // no trans: dB_i = A_i^T G_i  [k,n]; trans: dB_i = G_i^T A_i  [n,k]
          const S* A = pa2 + i * stra;
          const S* G = g + i * stry;
          S* D = gb + i * strb;
          if (!trans_b) {
            for (int64_t p = 0; p < k; ++p)
              for (int64_t j = 0; j < n; ++j) {
                double s = 0;
                for (int64_t r = 0; r < m; ++r)
                  s += static_cast<double>(A[r * k + p]) * G[r * n + j];
                D[p * n + j] += static_cast<S>(s);
              }
          } else {
            for (int64_t j = 0; j < n; ++j)
              for (int64_t p = 0; p < k; ++p) {
                double s = 0;
                for (int64_t r = 0; r < m; ++r)
                  s += static_cast<double>(G[r * n + j]) * A[r * k + p];
                D[j * k + p] += static_cast<S>(s);
              }
          }
        }
      } else {
        for (int64_t i = 0; i < B; ++i) {
          if (!trans_b)
            gemm(true, false, k, n, m, S(1), pa2 + i * stra, k, g + i * stry, n, S(1),
                 gb + i * strb, n);
          else
            gemm(true, false, n, k, m, S(1), g + i * stry, n, pa2 + i * stra, k, S(1),
                 gb + i * strb, k);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Softmax / reductions / losses
// ---------------------------------------------------------------------------

template <class S>
Var<S> softmax_last(const Var<S>& a) {
  const Shape& s = a->value.shape;
  int64_t L = s.back();
  int64_t rows = a->value.numel() / L;
  Tensor<S> y = a->value;
  S* p = y.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    S* row = p + r * L;
    S mx = row[0];
    for (int64_t i = 1; i < L; ++i) mx = std::max(mx, row[i]);
    double sum = 0;  // row sums accumulate in double
    for (int64_t i = 0; i < L; ++i) {
      S e = std::exp(row[i] - mx);
      row[i] = e;
      sum += e;
    }
    S inv = static_cast<S>(1.0 / sum);
    for (int64_t i = 0; i < L; ++i) row[i] *= inv;
  }
  return make_op<S>(std::move(y), {a}, [a, rows, L](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const S* g = n.grad.ptr();
    const S* yv = n.value.ptr();
    S* ga = a->grad.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
      const S* gr = g + r * L;
      const S* yr = yv + r * L;
      S* gar = ga + r * L;
      double dot = 0;
      for (int64_t i = 0; i < L; ++i) dot += static_cast<double>(gr[i]) * yr[i];
      for (int64_t i = 0; i < L; ++i)
        gar[i] += static_cast<S>(yr[i] * (static_cast<double>(gr[i]) - dot));
    }
  });
}

// scores [B, Lq, Lk] + mask [Lq, Lk] broadcast over batch (additive; use
// large negatives for disallowed positions).
template <class S>
Var<S> add_mask2d(const Var<S>& scores, const Tensor<S>& mask) {
  const Shape& s = scores->value.shape;
  if (s.size() != 3 || mask.shape.size() != 2 || s[1] != mask.shape[0] || s[2] != mask.shape[1])
    throw std::invalid_argument("add_mask2d: shapes");
  Tensor<S> y = scores->value;
  int64_t B = s[0], w = s[1] * s[2];
  for (int64_t bi = 0; bi < B; ++bi) {
    S* p = y.ptr() + bi * w;
    const S* m = mask.ptr();
    for (int64_t i = 0; i < w; ++i) p[i] += m[i];
  }
  return make_op<S>(std::move(y), {scores}, [scores](Node<S>& n) {
    if (scores->requires_grad) accumulate(*scores, n.grad.ptr(), n.numel());
  });
}

template <class S>
Var<S> sum_all(const Var<S>& a) {
  double s = 0;
  for (const auto& v : a->value.data) s += v;
  Tensor<S> y({1});
  y.data[0] = static_cast<S>(s);
  return make_op<S>(std::move(y), {a}, [a](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    S g = n.grad.data[0];
    for (auto& v : a->grad.data) v += g;
  });
}

template <class S>
Var<S> mean_all(const Var<S>& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

// Weighted sum with a fixed tensor: used as the random scalar projection in
// gradient checks.
template <class S>
Var<S> dot_const(const Var<S>& a, const Tensor<S>& w) {
  check_same_shape(a->value, w, "dot_const");
  double s = 0;
  const S* pa = a->value.ptr();
  const S* pw = w.ptr();
  for (int64_t i = 0; i < a->value.numel(); ++i)
    s += static_cast<double>(pa[i]) * static_cast<double>(pw[i]);
  Tensor<S> y({1});
  y.data[0] = static_cast<S>(s);
  auto wcopy = std::make_shared<Tensor<S>>(w);
  return make_op<S>(std::move(y), {a}, [a, wcopy](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    S g = n.grad.data[0];
    S* ga = a->grad.ptr();
    const S* pw = wcopy->ptr();
    for (int64_t i = 0; i < a->value.numel(); ++i) ga[i] += g * pw[i];
  });
}

// Mean squared error over all elements.
template <class S>
Var<S> mse_mean(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a->value, b->value, "mse_mean");
  int64_t n = a->value.numel();
  double s = 0;
  const S* pa = a->value.ptr();
  const S* pb = b->value.ptr();
  for (int64_t i = 0; i < n; ++i) {
    double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    s += d * d;
  }
  Tensor<S> y({1});
  y.data[0] = static_cast<S>(s / n);
  return make_op<S>(std::move(y), {a, b}, [a, b, n](Node<S>& nn) {
    double g = nn.grad.data[0] * 2.0 / n;
    const S* pa = a->value.ptr();
    const S* pb = b->value.ptr();
    if (a->requires_grad) {
      a->ensure_grad();
      S* ga = a->grad.ptr();
      for (int64_t i = 0; i < n; ++i) ga[i] += static_cast<S>(g * (pa[i] - pb[i]));
    }
    if (b->requires_grad) {
      b->ensure_grad();
      S* gb = b->grad.ptr();
      for (int64_t i = 0; i < n; ++i) gb[i] += static_cast<S>(g * (pb[i] - pa[i]));
    }
  });
}

// Per-element binary cross entropy on sigmoid(logits) against {0,1} targets,
// averaged over all elements. Numerically stable form.
template <class S>
Var<S> bce_logits_mean(const Var<S>& logits, const Tensor<S>& targets) {
  check_same_shape(logits->value, targets, "bce_logits_mean");
  int64_t n = logits->value.numel();
  const S* z = logits->value.ptr();
  const S* t = targets.ptr();
  double s = 0;
  for (int64_t i = 0; i < n; ++i) {
    double zi = z[i], ti = t[i];
    s += std::max(zi, 0.0) - zi * ti + std::log1p(std::exp(-std::abs(zi)));
  }
  Tensor<S> y({1});
  y.data[0] = static_cast<S>(s / n);
  auto tcopy = std::make_shared<Tensor<S>>(targets);
  return make_op<S>(std::move(y), {logits}, [logits, tcopy, n](Node<S>& nn) {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    double g = nn.grad.data[0] / n;
    S* gl = logits->grad.ptr();
    const S* z = logits->value.ptr();
    const S* t = tcopy->ptr();
    for (int64_t i = 0; i < n; ++i) {
      double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
      gl[i] += static_cast<S>(g * (sig - t[i]));
    }
  });
}

// Token-level cross entropy: logits [L, V], targets [L]; rows with
// mask[l] == 0 are excluded from the mean.
template <class S>
Var<S> cross_entropy_rows(const Var<S>& logits, const std::vector<int>& targets,
                          const std::vector<int>& mask) {
  const Shape& s = logits->value.shape;
  if (s.size() != 2 || static_cast<int64_t>(targets.size()) != s[0] ||
      mask.size() != targets.size())
    throw std::invalid_argument("cross_entropy_rows: shapes");
  int64_t L = s[0], V = s[1];
  int64_t active = 0;
  for (int m : mask) active += (m != 0);
  if (active == 0) throw std::invalid_argument("cross_entropy_rows: no unmasked targets");

  const S* p = logits->value.ptr();
  double total = 0;
  std::vector<double> logz(L), mx(L);
  for (int64_t r = 0; r < L; ++r) {
    if (!mask[r]) continue;
    const S* row = p + r * V;
    double m = row[0];
    for (int64_t i = 1; i < V; ++i) m = std::max(m, static_cast<double>(row[i]));
    double sum = 0;
    for (int64_t i = 0; i < V; ++i) sum += std::exp(static_cast<double>(row[i]) - m);
    mx[r] = m;
    logz[r] = m + std::log(sum);
    total += logz[r] - static_cast<double>(row[targets[r]]);
  }
  Tensor<S> y({1});
  y.data[0] = static_cast<S>(total / active);
  return make_op<S>(std::move(y), {logits},
                    [logits, targets, mask, L, V, active, logz](Node<S>& nn) {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    double g = nn.grad.data[0] / active;
    const S* p = logits->value.ptr();
    S* gl = logits->grad.ptr();
    for (int64_t r = 0; r < L; ++r) {
      if (!mask[r]) continue;
      const S* row = p + r * V;
      S* grow = gl + r * V;
      for (int64_t i = 0; i < V; ++i) {
        double soft = std::exp(static_cast<double>(row[i]) - logz[r]);
        grow[i] += static_cast<S>(g * (soft - (i == targets[r] ? 1.0 : 0.0)));
      }
    }
  });
}

// Embedding lookup: table [V, d], ids [L] -> [L, d].
template <class S>
Var<S> embedding(const Var<S>& table, const std::vector<int>& ids) {
  const Shape& s = table->value.shape;
  if (s.size() != 2) throw std::invalid_argument("embedding: table rank");
  int64_t V = s[0], d = s[1];
  int64_t L = static_cast<int64_t>(ids.size());
  Tensor<S> y({L, d});
  for (int64_t i = 0; i < L; ++i) {
    if (ids[i] < 0 || ids[i] >= V) throw std::out_of_range("embedding: id out of range");
    std::memcpy(y.ptr() + i * d, table->value.ptr() + ids[i] * d, sizeof(S) * d);
  }
  return make_op<S>(std::move(y), {table}, [table, ids, d](Node<S>& n) {
    if (!table->requires_grad) return;
    table->ensure_grad();
    const S* g = n.grad.ptr();
    S* gt = table->grad.ptr();
    for (size_t i = 0; i < ids.size(); ++i) {
      S* dst = gt + static_cast<int64_t>(ids[i]) * d;
      const S* src = g + static_cast<int64_t>(i) * d;
      for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

}  // namespace lgvi
