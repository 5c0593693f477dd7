#pragma once

// Minimal dense-tensor reverse-mode autodiff engine. Tensors have rank <= 3
// (batch x neighbors x feature is the largest layout the models need); each
// op records its backward rule on the active Tape when an input requires
// gradients. A Tape is single-threaded; distinct Tapes may live on distinct
// threads.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dps/rng.hpp"

namespace dps::ad {

struct Shape {
  int rank = 0;
  std::array<int64_t, 3> d{1, 1, 1};

  Shape() = default;
  Shape(std::initializer_list<int64_t> dims) {
    if (dims.size() > 3) throw std::invalid_argument("Shape: rank must be <= 3");
    rank = static_cast<int>(dims.size());
    int i = 0;
    for (int64_t v : dims) d[static_cast<size_t>(i++)] = v;
  }

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank; ++i) n *= d[static_cast<size_t>(i)];
    return n;
  }
  int64_t operator[](int i) const { return d[static_cast<size_t>(i)]; }
  bool operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i) if (d[size_t(i)] != o.d[size_t(i)]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < rank; ++i) {
      if (i) s += ",";
      s += std::to_string(d[static_cast<size_t>(i)]);
    }
    return s + ")";
  }
};

// NaN/Inf diagnostics: on by default in the 64-bit test profile, off for the
// 32-bit train profile.
template <typename T>
inline bool& finite_checks() {
  static bool enabled = sizeof(T) == 8;
  return enabled;
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& s, bool requires_grad = false) {
    Tensor t;
    t.n_ = std::make_shared<TensorNode<T>>();
    t.n_->shape = s;
    t.n_->value.assign(static_cast<size_t>(s.numel()), T(0));
    t.n_->requires_grad = requires_grad;
    if (requires_grad) t.n_->ensure_grad();
    return t;
  }

  static Tensor full(const Shape& s, T v, bool requires_grad = false) {
    Tensor t = zeros(s, requires_grad);
    std::fill(t.n_->value.begin(), t.n_->value.end(), v);
    return t;
  }

  static Tensor from_data(const Shape& s, std::vector<T> data, bool requires_grad = false) {
    if (static_cast<int64_t>(data.size()) != s.numel())
      throw std::invalid_argument("Tensor::from_data: size mismatch for " + s.str());
    Tensor t;
    t.n_ = std::make_shared<TensorNode<T>>();
    t.n_->shape = s;
    t.n_->value = std::move(data);
    t.n_->requires_grad = requires_grad;
    if (requires_grad) t.n_->ensure_grad();
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from_data(Shape{}, {v}, requires_grad);
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int64_t numel() const { return n_->shape.numel(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  void set_requires_grad(bool f) {
    n_->requires_grad = f;
    if (f) n_->ensure_grad();
  }

  std::vector<T>& data() { return n_->value; }
  const std::vector<T>& data() const { return n_->value; }
  std::vector<T>& grad() { return n_->grad; }
  const std::vector<T>& grad() const { return n_->grad; }
  void zero_grad() {
    if (n_) std::fill(n_->grad.begin(), n_->grad.end(), T(0));
  }

  T item() const {
    if (numel() != 1) throw std::logic_error("Tensor::item: tensor is not scalar");
    return n_->value[0];
  }

  T at(int64_t i) const { return n_->value[static_cast<size_t>(i)]; }
  T at(int64_t i, int64_t j) const {
    return n_->value[static_cast<size_t>(i * n_->shape[1] + j)];
  }
  T at(int64_t i, int64_t j, int64_t k) const {
    return n_->value[static_cast<size_t>((i * n_->shape[1] + j) * n_->shape[2] + k)];
  }

  std::shared_ptr<TensorNode<T>> node() const { return n_; }

 private:
  std::shared_ptr<TensorNode<T>> n_;
};

template <typename T>
class Tape {
 public:
  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
  size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // Seeds d(loss)/d(loss)=1, replays backward rules in reverse order, then
  // clears the tape. Gradients accumulate (sum) across fan-out.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) throw std::logic_error("backward: loss must be a scalar");
    loss.node()->ensure_grad();
    loss.node()->grad[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    clear();
  }

  static Tape*& current_slot() {
    thread_local Tape* cur = nullptr;
    return cur;
  }
  static Tape* current() { return current_slot(); }

  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(current_slot()) { current_slot() = &t; }
    ~Scope() { current_slot() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

 private:
  std::vector<std::function<void()>> ops_;
};

namespace detail {

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  if (!finite_checks<T>()) return;
  for (T v : t.data()) {
    if (!std::isfinite(static_cast<double>(v)))
      throw std::runtime_error(std::string(op) + ": produced non-finite value");
  }
}

// Right-aligned numpy-style broadcast of two shapes.
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  Shape out;
  out.rank = std::max(a.rank, b.rank);
  for (int i = 0; i < out.rank; ++i) {
    int ai = a.rank - 1 - i, bi = b.rank - 1 - i;
    int64_t da = ai >= 0 ? a[ai] : 1;
    int64_t db = bi >= 0 ? b[bi] : 1;
    if (da != db && da != 1 && db != 1)
      throw std::invalid_argument(std::string(op) + ": shapes " + a.str() + " and " + b.str() +
                                  " do not broadcast");
    out.d[static_cast<size_t>(out.rank - 1 - i)] = std::max(da, db);
  }
  return out;
}

// Element strides of `s` when right-aligned against an output of shape `out`;
// broadcast dimensions get stride 0.
inline std::array<int64_t, 3> broadcast_strides(const Shape& s, const Shape& out) {
  std::array<int64_t, 3> st{0, 0, 0};
  int64_t run = 1;
  std::array<int64_t, 3> natural{0, 0, 0};
  for (int i = s.rank - 1; i >= 0; --i) {
    natural[static_cast<size_t>(i)] = run;
    run *= s[i];
  }
  for (int i = 0; i < out.rank; ++i) {
    int si = s.rank - out.rank + i;
    if (si < 0 || s[si] == 1)
      st[static_cast<size_t>(i)] = 0;
    else
      st[static_cast<size_t>(i)] = natural[static_cast<size_t>(si)];
  }
  return st;
}

inline std::array<int64_t, 3> padded_dims(const Shape& s) {
  std::array<int64_t, 3> d{1, 1, 1};
  for (int i = 0; i < s.rank; ++i) d[static_cast<size_t>(3 - s.rank + i)] = s[i];
  return d;
}

// Applies fn(out_index, a_index, b_index) over the broadcast iteration space.
template <typename F>
void broadcast_iterate(const Shape& out, const Shape& a, const Shape& b, F&& fn) {
  auto od = padded_dims(out);
  auto as = broadcast_strides(a, out);
  auto bs = broadcast_strides(b, out);
  // Shift strides into the padded rank-3 frame.
  std::array<int64_t, 3> as3{0, 0, 0}, bs3{0, 0, 0};
  for (int i = 0; i < out.rank; ++i) {
    as3[static_cast<size_t>(3 - out.rank + i)] = as[static_cast<size_t>(i)];
    bs3[static_cast<size_t>(3 - out.rank + i)] = bs[static_cast<size_t>(i)];
  }
  int64_t oi = 0;
  for (int64_t i = 0; i < od[0]; ++i)
    for (int64_t j = 0; j < od[1]; ++j)
      for (int64_t k = 0; k < od[2]; ++k, ++oi)
        fn(oi, i * as3[0] + j * as3[1] + k * as3[2], i * bs3[0] + j * bs3[1] + k * bs3[2]);
}

// C(n,m) += or = A(n,k) * B(k,m)
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int64_t n, int64_t k, int64_t m, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, T(0));
  for (int64_t i = 0; i < n; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * m;
    for (int64_t p = 0; p < k; ++p) {
      T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * m;
      for (int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(n,k) += A(n,m) * B(k,m)^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int64_t n, int64_t m, int64_t k) {
  for (int64_t i = 0; i < n; ++i) {
    const T* arow = a + i * m;
    T* crow = c + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T* brow = b + p * m;
      T acc = T(0);
      for (int64_t j = 0; j < m; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// C(k,m) += A(n,k)^T * B(n,m)
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int64_t n, int64_t k, int64_t m) {
  for (int64_t i = 0; i < n; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * m;
    for (int64_t p = 0; p < k; ++p) {
      T av = arow[p];
      if (av == T(0)) continue;
      T* crow = c + p * m;
      for (int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with broadcasting
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd, Bwd bwd) {
  Shape os = detail::broadcast_shape(a.shape(), b.shape(), name);
  Tensor<T> out = Tensor<T>::zeros(os);
  auto an = a.node();
  auto bn = b.node();
  auto on = out.node();

  if (a.shape() == b.shape()) {
    const auto& av = an->value;
    const auto& bv = bn->value;
    auto& ov = on->value;
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  } else {
    detail::broadcast_iterate(os, a.shape(), b.shape(), [&](int64_t oi, int64_t ai, int64_t bi) {
      on->value[static_cast<size_t>(oi)] =
          fwd(an->value[static_cast<size_t>(ai)], bn->value[static_cast<size_t>(bi)]);
    });
  }
  detail::check_finite(out, name);

  Tape<T>* tape = Tape<T>::current();
  if (tape && (a.requires_grad() || b.requires_grad())) {
    on->requires_grad = true;
    on->ensure_grad();
    if (a.requires_grad()) an->ensure_grad();
    if (b.requires_grad()) bn->ensure_grad();
    Shape as = a.shape(), bs = b.shape();
    tape->record([an, bn, on, as, bs, os, bwd] {
      detail::broadcast_iterate(os, as, bs, [&](int64_t oi, int64_t ai, int64_t bi) {
        T g = on->grad[static_cast<size_t>(oi)];
        T da, db;
        bwd(an->value[static_cast<size_t>(ai)], bn->value[static_cast<size_t>(bi)], g, da, db);
        if (an->requires_grad) an->grad[static_cast<size_t>(ai)] += da;
        if (bn->requires_grad) bn->grad[static_cast<size_t>(bi)] += db;
      });
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, "add", [](T x, T y) { return x + y; },
                   [](T, T, T g, T& da, T& db) {
                     da = g;
                     db = g;
                   });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, "sub", [](T x, T y) { return x - y; },
                   [](T, T, T g, T& da, T& db) {
                     da = g;
                     db = -g;
                   });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, "mul", [](T x, T y) { return x * y; },
                   [](T x, T y, T g, T& da, T& db) {
                     da = g * y;
                     db = g * x;
                   });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const Tensor<T>& x, const char* name, Fwd fwd, Bwd bwd) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xn = x.node();
  auto on = out.node();
  for (size_t i = 0; i < xn->value.size(); ++i) on->value[i] = fwd(xn->value[i]);
  detail::check_finite(out, name);

  Tape<T>* tape = Tape<T>::current();
  if (tape && x.requires_grad()) {
    on->requires_grad = true;
    on->ensure_grad();
    xn->ensure_grad();
    tape->record([xn, on, bwd] {
      for (size_t i = 0; i < xn->value.size(); ++i)
        xn->grad[i] += bwd(xn->value[i], on->value[i], on->grad[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary_op(x, "relu", [](T v) { return v > T(0) ? v : T(0); },
                  [](T v, T, T g) { return v > T(0) ? g : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary_op(x, "sigmoid",
                  [](T v) {
                    if (v >= T(0)) {
                      T e = std::exp(-v);
                      return T(1) / (T(1) + e);
                    }
                    T e = std::exp(v);
                    return e / (T(1) + e);
                  },
                  [](T, T y, T g) { return g * y * (T(1) - y); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary_op(x, "exp", [](T v) { return std::exp(v); },
                  [](T, T y, T g) { return g * y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary_op(x, "log", [](T v) { return std::log(v); },
                  [](T v, T, T g) { return g / v; });
}

template <typename T>
Tensor<T> cos(const Tensor<T>& x) {
  return unary_op(x, "cos", [](T v) { return std::cos(v); },
                  [](T v, T, T g) { return -g * std::sin(v); });
}

// Subgradient zero outside [lo, hi].
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary_op(x, "clamp",
                  [lo, hi](T v) { return std::min(hi, std::max(lo, v)); },
                  [lo, hi](T v, T, T g) { return (v > lo && v < hi) ? g : T(0); });
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().rank != 2 || b.shape().rank != 2 || a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: incompatible shapes " + a.shape().str() + " x " +
                                b.shape().str());
  const int64_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  Tensor<T> out = Tensor<T>::zeros(Shape{n, m});
  auto an = a.node(), bn = b.node(), on = out.node();
  detail::gemm_nn(an->value.data(), bn->value.data(), on->value.data(), n, k, m, false);
  detail::check_finite(out, "matmul");

  Tape<T>* tape = Tape<T>::current();
  if (tape && (a.requires_grad() || b.requires_grad())) {
    on->requires_grad = true;
    on->ensure_grad();
    if (a.requires_grad()) an->ensure_grad();
    if (b.requires_grad()) bn->ensure_grad();
    tape->record([an, bn, on, n, k, m] {
      if (an->requires_grad)
        detail::gemm_nt(on->grad.data(), bn->value.data(), an->grad.data(), n, m, k);
      if (bn->requires_grad)
        detail::gemm_tn(an->value.data(), on->grad.data(), bn->grad.data(), n, k, m);
    });
  }
  return out;
}

// Batched matmul: (B,n,k) x (B,k,m) -> (B,n,m); a rank-2 rhs (k,m) broadcasts
// across the batch.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().rank != 3)
    throw std::invalid_argument("bmm: lhs must be rank 3, got " + a.shape().str());
  const int64_t B = a.shape()[0], n = a.shape()[1], k = a.shape()[2];
  const bool shared_rhs = b.shape().rank == 2;
  if (shared_rhs) {
    if (b.shape()[0] != k)
      throw std::invalid_argument("bmm: incompatible shapes " + a.shape().str() + " x " +
                                  b.shape().str());
  } else if (b.shape().rank != 3 || b.shape()[0] != B || b.shape()[1] != k) {
    throw std::invalid_argument("bmm: incompatible shapes " + a.shape().str() + " x " +
                                b.shape().str());
  }
  const int64_t m = shared_rhs ? b.shape()[1] : b.shape()[2];
  Tensor<T> out = Tensor<T>::zeros(Shape{B, n, m});
  auto an = a.node(), bn = b.node(), on = out.node();
  for (int64_t i = 0; i < B; ++i) {
    const T* bp = bn->value.data() + (shared_rhs ? 0 : i * k * m);
    detail::gemm_nn(an->value.data() + i * n * k, bp, on->value.data() + i * n * m, n, k, m,
                    false);
  }
  detail::check_finite(out, "bmm");

  Tape<T>* tape = Tape<T>::current();
  if (tape && (a.requires_grad() || b.requires_grad())) {
    on->requires_grad = true;
    on->ensure_grad();
    if (a.requires_grad()) an->ensure_grad();
    if (b.requires_grad()) bn->ensure_grad();
    tape->record([an, bn, on, B, n, k, m, shared_rhs] {
      for (int64_t i = 0; i < B; ++i) {
        const T* gout = on->grad.data() + i * n * m;
        const T* bp = bn->value.data() + (shared_rhs ? 0 : i * k * m);
        if (an->requires_grad)
          detail::gemm_nt(gout, bp, an->grad.data() + i * n * k, n, m, k);
        if (bn->requires_grad) {
          T* gb = bn->grad.data() + (shared_rhs ? 0 : i * k * m);
          detail::gemm_tn(an->value.data() + i * n * k, gout, gb, n, k, m);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& s) {
  if (s.numel() != x.numel())
    throw std::invalid_argument("reshape: cannot view " + x.shape().str() + " as " + s.str());
  Tensor<T> out = Tensor<T>::from_data(s, x.data());
  auto xn = x.node(), on = out.node();
  Tape<T>* tape = Tape<T>::current();
  if (tape && x.requires_grad()) {
    on->requires_grad = true;
    on->ensure_grad();
    xn->ensure_grad();
    tape->record([xn, on] {
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
  }
  return out;
}

// Concatenation along the last axis; leading dimensions must match.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = parts.front().shape();
  int64_t last = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.rank != s0.rank)
      throw std::invalid_argument("concat: rank mismatch " + s.str() + " vs " + s0.str());
    for (int i = 0; i + 1 < s.rank; ++i)
      if (s[i] != s0[i])
        throw std::invalid_argument("concat: leading dims differ " + s.str() + " vs " + s0.str());
    last += s.rank == 0 ? 1 : s[s.rank - 1];
  }
  Shape os = s0;
  if (os.rank == 0) os = Shape{last};
  else os.d[static_cast<size_t>(os.rank - 1)] = last;

  Tensor<T> out = Tensor<T>::zeros(os);
  auto on = out.node();
  int64_t rows = 1;
  for (int i = 0; i + 1 < s0.rank; ++i) rows *= s0[i];
  int64_t offset = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    const int64_t w = p.shape().rank == 0 ? 1 : p.shape()[p.shape().rank - 1];
    const auto& pv = p.data();
    for (int64_t r = 0; r < rows; ++r)
      std::copy(pv.begin() + r * w, pv.begin() + (r + 1) * w,
                on->value.begin() + r * last + offset);
    offset += w;
    any_grad = any_grad || p.requires_grad();
  }

  Tape<T>* tape = Tape<T>::current();
  if (tape && any_grad) {
    on->requires_grad = true;
    on->ensure_grad();
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
      if (p.requires_grad()) p.node()->ensure_grad();
      nodes.push_back(p.node());
      widths.push_back(p.shape().rank == 0 ? 1 : p.shape()[p.shape().rank - 1]);
    }
    tape->record([nodes, widths, on, rows, last] {
      int64_t off = 0;
      for (size_t pi = 0; pi < nodes.size(); ++pi) {
        auto& node = nodes[pi];
        int64_t w = widths[pi];
        if (node->requires_grad) {
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < w; ++c)
              node->grad[static_cast<size_t>(r * w + c)] +=
                  on->grad[static_cast<size_t>(r * last + off + c)];
        }
        off += w;
      }
    });
  }
  return out;
}

// Contiguous slice along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= s.rank || start < 0 || len < 0 || start + len > s[axis])
    throw std::invalid_argument("slice: bad range on axis " + std::to_string(axis) + " of " +
                                s.str());
  Shape os = s;
  os.d[static_cast<size_t>(axis)] = len;

  // Collapse to (outer, dim, inner) around the sliced axis.
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < s.rank; ++i) inner *= s[i];
  const int64_t dim = s[axis];

  Tensor<T> out = Tensor<T>::zeros(os);
  auto xn = x.node(), on = out.node();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < len; ++i)
      std::copy(xn->value.begin() + (o * dim + start + i) * inner,
                xn->value.begin() + (o * dim + start + i + 1) * inner,
                on->value.begin() + (o * len + i) * inner);

  Tape<T>* tape = Tape<T>::current();
  if (tape && x.requires_grad()) {
    on->requires_grad = true;
    on->ensure_grad();
    xn->ensure_grad();
    tape->record([xn, on, outer, inner, dim, len, start] {
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < len; ++i)
          for (int64_t c = 0; c < inner; ++c)
            xn->grad[static_cast<size_t>((o * dim + start + i) * inner + c)] +=
                on->grad[static_cast<size_t>((o * len + i) * inner + c)];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(Shape{});
  auto xn = x.node(), on = out.node();
  T acc = T(0);
  for (T v : xn->value) acc += v;
  on->value[0] = acc;
  detail::check_finite(out, "sum");
  Tape<T>* tape = Tape<T>::current();
  if (tape && x.requires_grad()) {
    on->requires_grad = true;
    on->ensure_grad();
    xn->ensure_grad();
    tape->record([xn, on] {
      T g = on->grad[0];
      for (auto& v : xn->grad) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  Tensor<T> s = sum(x);
  Tensor<T> scale = Tensor<T>::scalar(T(1) / static_cast<T>(x.numel()));
  return mul(s, scale);
}

// Reduction over one axis; the axis is squeezed out of the result.
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, int axis) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= s.rank) throw std::invalid_argument("sum_axis: bad axis");
  Shape os;
  os.rank = s.rank - 1;
  int oi = 0;
  for (int i = 0; i < s.rank; ++i)
    if (i != axis) os.d[static_cast<size_t>(oi++)] = s[i];

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < s.rank; ++i) inner *= s[i];
  const int64_t dim = s[axis];

  Tensor<T> out = Tensor<T>::zeros(os);
  auto xn = x.node(), on = out.node();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t d = 0; d < dim; ++d)
      for (int64_t c = 0; c < inner; ++c)
        on->value[static_cast<size_t>(o * inner + c)] +=
            xn->value[static_cast<size_t>((o * dim + d) * inner + c)];
  detail::check_finite(out, "sum_axis");

  Tape<T>* tape = Tape<T>::current();
  if (tape && x.requires_grad()) {
    on->requires_grad = true;
    on->ensure_grad();
    xn->ensure_grad();
    tape->record([xn, on, outer, inner, dim] {
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t d = 0; d < dim; ++d)
          for (int64_t c = 0; c < inner; ++c)
            xn->grad[static_cast<size_t>((o * dim + d) * inner + c)] +=
                on->grad[static_cast<size_t>(o * inner + c)];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, int axis) {
  Tensor<T> s = sum_axis(x, axis);
  Tensor<T> scale = Tensor<T>::scalar(T(1) / static_cast<T>(x.shape()[axis]));
  return mul(s, scale);
}

// ---------------------------------------------------------------------------
// Softmax / dropout / gather
// ---------------------------------------------------------------------------

// Softmax over the last axis. `mask` (same shape, 1=keep, 0=masked) may be
// undefined for a full softmax. Masked positions receive -inf before
// normalization; fully masked rows produce all-zero output (and zero grad).
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x, const Tensor<T>& mask = Tensor<T>()) {
  const Shape& s = x.shape();
  if (s.rank == 0) throw std::invalid_argument("masked_softmax: scalar input");
  if (mask.defined() && mask.shape() != s)
    throw std::invalid_argument("masked_softmax: mask shape " + mask.shape().str() +
                                " != input shape " + s.str());
  const int64_t L = s[s.rank - 1];
  const int64_t rows = s.numel() / L;

  Tensor<T> out = Tensor<T>::zeros(s);
  auto xn = x.node(), on = out.node();
  const T* mv = mask.defined() ? mask.data().data() : nullptr;
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = xn->value.data() + r * L;
    const T* mr = mv ? mv + r * L : nullptr;
    T* yr = on->value.data() + r * L;
    T mx = -std::numeric_limits<T>::infinity();
    for (int64_t i = 0; i < L; ++i)
      if (!mr || mr[i] != T(0)) mx = std::max(mx, xr[i]);
    if (mx == -std::numeric_limits<T>::infinity()) continue;  // all masked -> zeros
    T z = T(0);
    for (int64_t i = 0; i < L; ++i) {
      if (!mr || mr[i] != T(0)) {
        yr[i] = std::exp(xr[i] - mx);
        z += yr[i];
      }
    }
    for (int64_t i = 0; i < L; ++i) yr[i] /= z;
  }
  detail::check_finite(out, "masked_softmax");

  Tape<T>* tape = Tape<T>::current();
  if (tape && x.requires_grad()) {
    on->requires_grad = true;
    on->ensure_grad();
    xn->ensure_grad();
    tape->record([xn, on, rows, L] {
      for (int64_t r = 0; r < rows; ++r) {
        const T* yr = on->value.data() + r * L;
        const T* gr = on->grad.data() + r * L;
        T* gx = xn->grad.data() + r * L;
        T dot = T(0);
        for (int64_t i = 0; i < L; ++i) dot += gr[i] * yr[i];
        for (int64_t i = 0; i < L; ++i) gx[i] += yr[i] * (gr[i] - dot);
      }
    });
  }
  return out;
}

// Inverted dropout: scales kept activations by 1/(1-p) in training mode,
// identity otherwise.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, Rng& rng) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  auto keep = std::make_shared<std::vector<uint8_t>>(x.data().size());
  for (auto& k : *keep) k = rng.uniform() >= p ? 1 : 0;

  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xn = x.node(), on = out.node();
  for (size_t i = 0; i < xn->value.size(); ++i)
    on->value[i] = (*keep)[i] ? xn->value[i] * scale : T(0);

  Tape<T>* tape = Tape<T>::current();
  if (tape && x.requires_grad()) {
    on->requires_grad = true;
    on->ensure_grad();
    xn->ensure_grad();
    tape->record([xn, on, keep, scale] {
      for (size_t i = 0; i < xn->grad.size(); ++i)
        if ((*keep)[i]) xn->grad[i] += on->grad[i] * scale;
    });
  }
  return out;
}

// Embedding lookup: rows of `table` (N,D) gathered by `indices`; the output
// shape is indices_shape + (D,). Backward scatter-adds into the table.
template <typename T>
Tensor<T> gather(const Tensor<T>& table, const std::vector<int64_t>& indices,
                 const Shape& index_shape) {
  if (table.shape().rank != 2) throw std::invalid_argument("gather: table must be rank 2");
  if (static_cast<int64_t>(indices.size()) != index_shape.numel())
    throw std::invalid_argument("gather: index count != index shape");
  const int64_t N = table.shape()[0], D = table.shape()[1];
  if (index_shape.rank > 2) throw std::invalid_argument("gather: output rank would exceed 3");
  Shape os;
  os.rank = index_shape.rank + 1;
  for (int i = 0; i < index_shape.rank; ++i) os.d[static_cast<size_t>(i)] = index_shape[i];
  os.d[static_cast<size_t>(os.rank - 1)] = D;

  Tensor<T> out = Tensor<T>::zeros(os);
  auto tn = table.node(), on = out.node();
  for (size_t i = 0; i < indices.size(); ++i) {
    int64_t row = indices[i];
    if (row < 0 || row >= N) throw std::out_of_range("gather: index out of range");
    std::copy(tn->value.begin() + row * D, tn->value.begin() + (row + 1) * D,
              on->value.begin() + static_cast<int64_t>(i) * D);
  }

  Tape<T>* tape = Tape<T>::current();
  if (tape && table.requires_grad()) {
    on->requires_grad = true;
    on->ensure_grad();
    tn->ensure_grad();
    auto idx = std::make_shared<std::vector<int64_t>>(indices);
    tape->record([tn, on, idx, D] {
      for (size_t i = 0; i < idx->size(); ++i) {
        T* dst = tn->grad.data() + (*idx)[i] * D;
        const T* src = on->grad.data() + static_cast<int64_t>(i) * D;
        for (int64_t c = 0; c < D; ++c) dst[c] += src[c];
      }
    });
  }
  return out;
}

}  // namespace dps::ad
