#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace pagan {

// Dense row-major tensors over float or double, plus a define-by-run tape for
// reverse-mode differentiation. A fresh tape is opened per forward pass; ops
// append one record each, and backward() replays the records once in reverse.

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

template <typename T>
class Tape;

template <typename T>
class GradientMap;

// Tape registration state for one logical tensor. Copies of a Tensor share
// the tag (like they share storage), so lifting any copy registers them all
// under one node; fresh tensors, detached views, and clones get new tags.
struct TapeTag {
  std::uint64_t tape_id = 0;
  int node = -1;
};

template <typename T>
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<T>> values;
  bool requires_grad = false;

  // Registration on the currently active tape; maintained lazily by the ops.
  std::shared_ptr<TapeTag> tag = std::make_shared<TapeTag>();

  std::uint64_t tape_id() const { return tag->tape_id; }
  int node() const { return tag->node; }

  Tensor() : values(std::make_shared<std::vector<T>>()) {}

  Tensor(Shape s, std::vector<T> v, bool rg = false)
      : shape(std::move(s)),
        values(std::make_shared<std::vector<T>>(std::move(v))),
        requires_grad(rg) {
    for (int d : shape) {
      if (d <= 0)
        throw std::invalid_argument("Tensor: extents must be positive, got " +
                                    shape_str(shape));
    }
    if (static_cast<std::int64_t>(values->size()) != shape_numel(shape))
      throw std::invalid_argument("Tensor: data size " +
                                  std::to_string(values->size()) +
                                  " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) {
    std::vector<T> v(static_cast<std::size_t>(shape_numel(s)), T(0));
    return Tensor(std::move(s), std::move(v));
  }
  static Tensor full(Shape s, T value) {
    std::vector<T> v(static_cast<std::size_t>(shape_numel(s)), value);
    return Tensor(std::move(s), std::move(v));
  }
  static Tensor ones(Shape s) { return full(std::move(s), T(1)); }
  static Tensor scalar(T value) { return Tensor({1}, {value}); }
  // A trainable leaf.
  static Tensor param(Shape s, std::vector<T> v) {
    return Tensor(std::move(s), std::move(v), true);
  }

  std::int64_t numel() const { return shape_numel(shape); }
  T* data() { return values->data(); }
  const T* data() const { return values->data(); }

  T item() const {
    if (numel() != 1)
      throw std::invalid_argument("Tensor::item: tensor " + shape_str(shape) +
                                  " is not a scalar");
    return (*values)[0];
  }

  // Shares storage but drops gradient tracking; used to freeze parameters so a
  // loss only differentiates through the players it trains.
  Tensor detached() const {
    Tensor t;
    t.shape = shape;
    t.values = values;
    t.requires_grad = false;
    return t;
  }

  Tensor clone() const {
    return Tensor(shape, *values, false);
  }
};

template <typename T>
class GradientMap {
 public:
  bool contains(const Tensor<T>& t) const {
    return t.tape_id() == tape_id_ && t.node() >= 0 &&
           grads_.count(t.node()) > 0;
  }

  const Tensor<T>& at(const Tensor<T>& t) const {
    if (!contains(t))
      throw std::runtime_error(
          "GradientMap::at: tensor has no gradient on this tape");
    return grads_.at(t.node());
  }

  Tensor<T> get_or_zeros(const Tensor<T>& t) const {
    if (contains(t)) return grads_.at(t.node());
    return Tensor<T>::zeros(t.shape);
  }

  std::size_t size() const { return grads_.size(); }

 private:
  template <typename U>
  friend class Tape;
  std::uint64_t tape_id_ = 0;
  std::unordered_map<int, Tensor<T>> grads_;
};

template <typename T>
class Tape {
 public:
  Tape() : id_(++counter()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_; }

  // Registers t as a node (a leaf, unless t already came out of an op on this
  // tape) and returns its node id.
  int lift(const Tensor<T>& t) {
    if (t.tag->tape_id == id_ && t.tag->node >= 0) return t.tag->node;
    node_shapes_.push_back(t.shape);
    node_requires_.push_back(t.requires_grad ? 1 : 0);
    const int n = static_cast<int>(node_shapes_.size()) - 1;
    t.tag->tape_id = id_;
    t.tag->node = n;
    return n;
  }

  void record(int out_node, std::function<void(Tape&)> fn) {
    records_.push_back({out_node, std::move(fn)});
  }

  // Reverse sweep from a scalar root. May be called repeatedly on the same
  // tape; adjoint buffers are reset each time.
  GradientMap<T> backward(const Tensor<T>& root) {
    if (root.numel() != 1)
      throw std::invalid_argument("backward: root must be a scalar, got " +
                                  shape_str(root.shape));
    if (root.tape_id() != id_ || root.node() < 0)
      throw std::runtime_error(
          "backward: root is detached from the active tape");
    adj_.assign(node_shapes_.size(), {});
    has_adj_.assign(node_shapes_.size(), 0);
    const T one = T(1);
    accumulate(root.node(), &one, 1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (has_adj_[static_cast<std::size_t>(it->out)]) it->fn(*this);
    }
    GradientMap<T> gm;
    gm.tape_id_ = id_;
    for (std::size_t n = 0; n < node_shapes_.size(); ++n) {
      if (node_requires_[n] && has_adj_[n]) {
        gm.grads_.emplace(static_cast<int>(n),
                          Tensor<T>(node_shapes_[n], std::move(adj_[n])));
      }
    }
    return gm;
  }

  // Adjoint of a node; only valid inside a record callback for nodes whose
  // adjoint the reverse sweep has already completed.
  const std::vector<T>& grad_of(int node) const {
    return adj_[static_cast<std::size_t>(node)];
  }

  void accumulate(int node, const T* g, std::int64_t n) {
    auto& a = adj_[static_cast<std::size_t>(node)];
    if (!has_adj_[static_cast<std::size_t>(node)]) {
      a.assign(static_cast<std::size_t>(n), T(0));
      has_adj_[static_cast<std::size_t>(node)] = 1;
    }
    for (std::int64_t i = 0; i < n; ++i) a[static_cast<std::size_t>(i)] += g[i];
  }

  std::size_t num_records() const { return records_.size(); }
  std::size_t num_nodes() const { return node_shapes_.size(); }

 private:
  template <typename U>
  friend class TapeScope;

  struct Rec {
    int out;
    std::function<void(Tape&)> fn;
  };

  static std::uint64_t& counter() {
    static std::uint64_t c = 0;
    return c;
  }

  std::uint64_t id_;
  std::vector<Rec> records_;
  std::vector<Shape> node_shapes_;
  std::vector<char> node_requires_;
  std::vector<std::vector<T>> adj_;
  std::vector<char> has_adj_;

  inline static thread_local Tape* current_ = nullptr;
};

// RAII activation of a fresh tape; ops record onto Tape<T>::current().
template <typename T>
class TapeScope {
 public:
  TapeScope() : prev_(Tape<T>::current_) { Tape<T>::current_ = &tape_; }
  ~TapeScope() { Tape<T>::current_ = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  Tape<T>& tape() { return tape_; }

 private:
  Tape<T> tape_;
  Tape<T>* prev_;
};

namespace detail {

// C(n×m) = A(n×k) · B(k×m)
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, int n, int k, int m) {
  std::fill(C, C + static_cast<std::int64_t>(n) * m, T(0));
  for (int i = 0; i < n; ++i) {
    const T* a = A + static_cast<std::int64_t>(i) * k;
    T* c = C + static_cast<std::int64_t>(i) * m;
    for (int l = 0; l < k; ++l) {
      const T av = a[l];
      if (av == T(0)) continue;
      const T* b = B + static_cast<std::int64_t>(l) * m;
      for (int j = 0; j < m; ++j) c[j] += av * b[j];
    }
  }
}

// C(n×m) += A(n×k) · B(m×k)ᵀ
template <typename T>
void gemm_nt_acc(const T* A, const T* B, T* C, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const T* a = A + static_cast<std::int64_t>(i) * k;
    T* c = C + static_cast<std::int64_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const T* b = B + static_cast<std::int64_t>(j) * k;
      T acc = T(0);
      for (int l = 0; l < k; ++l) acc += a[l] * b[l];
      c[j] += acc;
    }
  }
}

// C(k×m) = A(n×k)ᵀ · B(n×m)
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, int n, int k, int m) {
  std::fill(C, C + static_cast<std::int64_t>(k) * m, T(0));
  for (int i = 0; i < n; ++i) {
    const T* a = A + static_cast<std::int64_t>(i) * k;
    const T* b = B + static_cast<std::int64_t>(i) * m;
    for (int l = 0; l < k; ++l) {
      const T av = a[l];
      if (av == T(0)) continue;
      T* c = C + static_cast<std::int64_t>(l) * m;
      for (int j = 0; j < m; ++j) c[j] += av * b[j];
    }
  }
}

inline int mirror_index(int i, int n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

// Unfolds img (C×H×W) into col ((C·kh·kw) × (Ho·Wo)) for a convolution with
// the given stride and zero padding.
template <typename T>
void im2col(const T* img, int C, int H, int W, int kh, int kw, int stride,
            int pad, int Ho, int Wo, T* col) {
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = col + static_cast<std::int64_t>((c * kh + ki) * kw + kj) * Ho * Wo;
        for (int oh = 0; oh < Ho; ++oh) {
          const int h = oh * stride + ki - pad;
          for (int ow = 0; ow < Wo; ++ow) {
            const int w = ow * stride + kj - pad;
            row[oh * Wo + ow] =
                (h >= 0 && h < H && w >= 0 && w < W)
                    ? img[(static_cast<std::int64_t>(c) * H + h) * W + w]
                    : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds col back into img.
template <typename T>
void col2im_acc(const T* col, int C, int H, int W, int kh, int kw, int stride,
                int pad, int Ho, int Wo, T* img) {
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row =
            col + static_cast<std::int64_t>((c * kh + ki) * kw + kj) * Ho * Wo;
        for (int oh = 0; oh < Ho; ++oh) {
          const int h = oh * stride + ki - pad;
          if (h < 0 || h >= H) continue;
          for (int ow = 0; ow < Wo; ++ow) {
            const int w = ow * stride + kj - pad;
            if (w < 0 || w >= W) continue;
            img[(static_cast<std::int64_t>(c) * H + h) * W + w] +=
                row[oh * Wo + ow];
          }
        }
      }
    }
  }
}

// Shared wrapper for elementwise unary ops: f maps a value, df(x, y) is the
// local derivative given input x and output y.
template <typename T, class F, class DF>
Tensor<T> unary_ew(const Tensor<T>& a, F f, DF df) {
  const auto& x = *a.values;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  Tensor<T> o(a.shape, std::move(out));
  o.requires_grad = a.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = tp->lift(a);
    const int on = tp->lift(o);
    tp->record(on, [an, on, ain = a, aout = o, df](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      const auto& xs = *ain.values;
      const auto& ys = *aout.values;
      std::vector<T> gi(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] = g[i] * df(xs[i], ys[i]);
      t.accumulate(an, gi.data(), static_cast<std::int64_t>(gi.size()));
    });
  }
  return o;
}

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return detail::unary_ew(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> exp_t(const Tensor<T>& a) {
  return detail::unary_ew(a, [](T x) { return std::exp(x); },
                          [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log_t(const Tensor<T>& a) {
  for (T x : *a.values) {
    if (!(x > T(0)))
      throw std::domain_error("log: input must be strictly positive");
  }
  return detail::unary_ew(a, [](T x) { return std::log(x); },
                          [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> sqrt_t(const Tensor<T>& a) {
  for (T x : *a.values) {
    if (!(x >= T(0))) throw std::domain_error("sqrt: input must be non-negative");
  }
  // The derivative is guarded at the origin so a zero-norm argument produces a
  // zero-slope subgradient instead of an infinity.
  return detail::unary_ew(
      a, [](T x) { return std::sqrt(x); },
      [](T, T y) { return T(0.5) / std::max(y, T(1e-12)); });
}

template <typename T>
Tensor<T> recip(const Tensor<T>& a) {
  for (T x : *a.values) {
    if (!(x > T(0)))
      throw std::domain_error("recip: input must be strictly positive");
  }
  return detail::unary_ew(a, [](T x) { return T(1) / x; },
                          [](T, T y) { return -y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary_ew(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh_t(const Tensor<T>& a) {
  return detail::unary_ew(a, [](T x) { return std::tanh(x); },
                          [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return detail::unary_ew(
      a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  return detail::unary_ew(
      a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("add", a, b);
  const auto& x = *a.values;
  const auto& y = *b.values;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  Tensor<T> o(a.shape, std::move(out));
  o.requires_grad = a.requires_grad || b.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = a.requires_grad ? tp->lift(a) : -1;
    const int bn = b.requires_grad ? tp->lift(b) : -1;
    const int on = tp->lift(o);
    tp->record(on, [an, bn, on](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      const auto n = static_cast<std::int64_t>(g.size());
      if (an >= 0) t.accumulate(an, g.data(), n);
      if (bn >= 0) t.accumulate(bn, g.data(), n);
    });
  }
  return o;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("sub", a, b);
  const auto& x = *a.values;
  const auto& y = *b.values;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  Tensor<T> o(a.shape, std::move(out));
  o.requires_grad = a.requires_grad || b.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = a.requires_grad ? tp->lift(a) : -1;
    const int bn = b.requires_grad ? tp->lift(b) : -1;
    const int on = tp->lift(o);
    tp->record(on, [an, bn, on](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      const auto n = static_cast<std::int64_t>(g.size());
      if (an >= 0) t.accumulate(an, g.data(), n);
      if (bn >= 0) {
        std::vector<T> gb(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i];
        t.accumulate(bn, gb.data(), n);
      }
    });
  }
  return o;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("mul", a, b);
  const auto& x = *a.values;
  const auto& y = *b.values;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  Tensor<T> o(a.shape, std::move(out));
  o.requires_grad = a.requires_grad || b.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = a.requires_grad ? tp->lift(a) : -1;
    const int bn = b.requires_grad ? tp->lift(b) : -1;
    const int on = tp->lift(o);
    tp->record(on, [an, bn, on, av = a, bv = b](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      const auto n = static_cast<std::int64_t>(g.size());
      if (an >= 0) {
        const auto& yb = *bv.values;
        std::vector<T> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * yb[i];
        t.accumulate(an, ga.data(), n);
      }
      if (bn >= 0) {
        const auto& xa = *av.values;
        std::vector<T> gb(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * xa[i];
        t.accumulate(bn, gb.data(), n);
      }
    });
  }
  return o;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  return detail::unary_ew(a, [c](T x) { return x + c; },
                          [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  return detail::unary_ew(a, [c](T x) { return x * c; },
                          [c](T, T) { return c; });
}

template <typename T>
Tensor<T> sub_from_scalar(T c, const Tensor<T>& a) {
  return detail::unary_ew(a, [c](T x) { return c - x; },
                          [](T, T) { return T(-1); });
}

// Elementwise product with a one-element tensor (the only tensor-tensor
// broadcast supported besides bias addition).
template <typename T>
Tensor<T> scale(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.numel() != 1)
    throw std::invalid_argument("scale: scale factor must be a one-element tensor, got " +
                                shape_str(s.shape));
  const T sv = (*s.values)[0];
  const auto& x = *a.values;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * sv;
  Tensor<T> o(a.shape, std::move(out));
  o.requires_grad = a.requires_grad || s.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = a.requires_grad ? tp->lift(a) : -1;
    const int sn = s.requires_grad ? tp->lift(s) : -1;
    const int on = tp->lift(o);
    tp->record(on, [an, sn, on, av = a, sv](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      if (an >= 0) {
        std::vector<T> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * sv;
        t.accumulate(an, ga.data(), static_cast<std::int64_t>(ga.size()));
      }
      if (sn >= 0) {
        const auto& xa = *av.values;
        T acc = T(0);
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xa[i];
        t.accumulate(sn, &acc, 1);
      }
    });
  }
  return o;
}

// x (N,F) + b (F), or x (N,C,H,W) + b (C) broadcast over samples/pixels.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  std::int64_t groups, chans, inner;
  if (x.shape.size() == 2 && b.shape.size() == 1 && b.shape[0] == x.shape[1]) {
    groups = x.shape[0];
    chans = x.shape[1];
    inner = 1;
  } else if (x.shape.size() == 4 && b.shape.size() == 1 &&
             b.shape[0] == x.shape[1]) {
    groups = x.shape[0];
    chans = x.shape[1];
    inner = static_cast<std::int64_t>(x.shape[2]) * x.shape[3];
  } else {
    throw std::invalid_argument("add_bias: incompatible shapes " +
                                shape_str(x.shape) + " and " +
                                shape_str(b.shape));
  }
  const auto& xs = *x.values;
  const auto& bs = *b.values;
  std::vector<T> out(xs.size());
  std::int64_t idx = 0;
  for (std::int64_t g = 0; g < groups; ++g)
    for (std::int64_t c = 0; c < chans; ++c)
      for (std::int64_t i = 0; i < inner; ++i, ++idx)
        out[static_cast<std::size_t>(idx)] =
            xs[static_cast<std::size_t>(idx)] + bs[static_cast<std::size_t>(c)];
  Tensor<T> o(x.shape, std::move(out));
  o.requires_grad = x.requires_grad || b.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int xn = x.requires_grad ? tp->lift(x) : -1;
    const int bn = b.requires_grad ? tp->lift(b) : -1;
    const int on = tp->lift(o);
    tp->record(on, [xn, bn, on, groups, chans, inner](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      if (xn >= 0)
        t.accumulate(xn, g.data(), static_cast<std::int64_t>(g.size()));
      if (bn >= 0) {
        std::vector<T> gb(static_cast<std::size_t>(chans), T(0));
        std::int64_t idx = 0;
        for (std::int64_t gr = 0; gr < groups; ++gr)
          for (std::int64_t c = 0; c < chans; ++c)
            for (std::int64_t i = 0; i < inner; ++i, ++idx)
              gb[static_cast<std::size_t>(c)] += g[static_cast<std::size_t>(idx)];
        t.accumulate(bn, gb.data(), chans);
      }
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape) + " and " +
                                shape_str(b.shape));
  const int n = a.shape[0], k = a.shape[1], m = b.shape[1];
  std::vector<T> out(static_cast<std::size_t>(static_cast<std::int64_t>(n) * m));
  detail::gemm_nn(a.data(), b.data(), out.data(), n, k, m);
  Tensor<T> o({n, m}, std::move(out));
  o.requires_grad = a.requires_grad || b.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = a.requires_grad ? tp->lift(a) : -1;
    const int bn = b.requires_grad ? tp->lift(b) : -1;
    const int on = tp->lift(o);
    tp->record(on, [an, bn, on, av = a, bv = b, n, k, m](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      if (an >= 0) {
        // dA = G · Bᵀ
        std::vector<T> ga(static_cast<std::size_t>(static_cast<std::int64_t>(n) * k), T(0));
        detail::gemm_nt_acc(g.data(), bv.data(), ga.data(), n, m, k);
        t.accumulate(an, ga.data(), static_cast<std::int64_t>(ga.size()));
      }
      if (bn >= 0) {
        // dB = Aᵀ · G
        std::vector<T> gb(static_cast<std::size_t>(static_cast<std::int64_t>(k) * m));
        detail::gemm_tn(av.data(), g.data(), gb.data(), n, k, m);
        t.accumulate(bn, gb.data(), static_cast<std::int64_t>(gb.size()));
      }
    });
  }
  return o;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.shape.size() != 2)
    throw std::invalid_argument("transpose: expected rank-2 tensor, got " +
                                shape_str(a.shape));
  const int n = a.shape[0], m = a.shape[1];
  const auto& x = *a.values;
  std::vector<T> out(x.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      out[static_cast<std::size_t>(j) * n + i] =
          x[static_cast<std::size_t>(i) * m + j];
  Tensor<T> o({m, n}, std::move(out));
  o.requires_grad = a.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = tp->lift(a);
    const int on = tp->lift(o);
    tp->record(on, [an, on, n, m](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      std::vector<T> ga(g.size());
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i)
          ga[static_cast<std::size_t>(i) * m + j] =
              g[static_cast<std::size_t>(j) * n + i];
      t.accumulate(an, ga.data(), static_cast<std::int64_t>(ga.size()));
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape s) {
  if (shape_numel(s) != a.numel())
    throw std::invalid_argument("reshape: cannot reshape " +
                                shape_str(a.shape) + " to " + shape_str(s));
  Tensor<T> o;
  o.shape = std::move(s);
  o.values = a.values;  // same storage, new extents
  o.requires_grad = a.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = tp->lift(a);
    const int on = tp->lift(o);
    tp->record(on, [an, on](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      t.accumulate(an, g.data(), static_cast<std::int64_t>(g.size()));
    });
  }
  return o;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, const Shape& starts, const Shape& sizes) {
  const std::size_t r = a.shape.size();
  if (starts.size() != r || sizes.size() != r)
    throw std::invalid_argument("slice: starts/sizes rank mismatch with " +
                                shape_str(a.shape));
  for (std::size_t d = 0; d < r; ++d) {
    if (starts[d] < 0 || sizes[d] <= 0 || starts[d] + sizes[d] > a.shape[d])
      throw std::invalid_argument("slice: window " + shape_str(starts) + "+" +
                                  shape_str(sizes) + " out of bounds for " +
                                  shape_str(a.shape));
  }
  std::vector<std::int64_t> stride(r, 1);
  for (std::size_t d = r - 1; d > 0; --d)
    stride[d - 1] = stride[d] * a.shape[d];
  const std::int64_t n_out = shape_numel(sizes);
  const auto& x = *a.values;
  std::vector<T> out(static_cast<std::size_t>(n_out));
  Shape idx(r, 0);
  for (std::int64_t i = 0; i < n_out; ++i) {
    std::int64_t src = 0;
    for (std::size_t d = 0; d < r; ++d)
      src += (starts[d] + idx[d]) * stride[d];
    out[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(src)];
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < sizes[d]) break;
      idx[d] = 0;
    }
  }
  Tensor<T> o(sizes, std::move(out));
  o.requires_grad = a.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = tp->lift(a);
    const int on = tp->lift(o);
    tp->record(on, [an, on, starts, sizes, stride, r,
                    total = a.numel()](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      std::vector<T> ga(static_cast<std::size_t>(total), T(0));
      Shape idx(r, 0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        std::int64_t dst = 0;
        for (std::size_t d = 0; d < r; ++d)
          dst += (starts[d] + idx[d]) * stride[d];
        ga[static_cast<std::size_t>(dst)] = g[i];
        for (std::size_t d = r; d-- > 0;) {
          if (++idx[d] < sizes[d]) break;
          idx[d] = 0;
        }
      }
      t.accumulate(an, ga.data(), total);
    });
  }
  return o;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis) {
  if (a.shape.size() != b.shape.size())
    throw std::invalid_argument("concat: rank mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
  const int r = static_cast<int>(a.shape.size());
  if (axis < 0 || axis >= r)
    throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                " out of range for rank " + std::to_string(r));
  for (int d = 0; d < r; ++d) {
    if (d != axis && a.shape[d] != b.shape[d])
      throw std::invalid_argument("concat: shapes " + shape_str(a.shape) +
                                  " and " + shape_str(b.shape) +
                                  " differ off the concat axis");
  }
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= a.shape[d];
  for (int d = axis + 1; d < r; ++d) inner *= a.shape[d];
  const std::int64_t wa = a.shape[axis] * inner;
  const std::int64_t wb = b.shape[axis] * inner;
  Shape os = a.shape;
  os[axis] += b.shape[axis];
  const auto& xa = *a.values;
  const auto& xb = *b.values;
  std::vector<T> out(static_cast<std::size_t>(outer * (wa + wb)));
  for (std::int64_t g = 0; g < outer; ++g) {
    std::copy_n(xa.begin() + g * wa, wa, out.begin() + g * (wa + wb));
    std::copy_n(xb.begin() + g * wb, wb, out.begin() + g * (wa + wb) + wa);
  }
  Tensor<T> o(std::move(os), std::move(out));
  o.requires_grad = a.requires_grad || b.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = a.requires_grad ? tp->lift(a) : -1;
    const int bn = b.requires_grad ? tp->lift(b) : -1;
    const int on = tp->lift(o);
    tp->record(on, [an, bn, on, outer, wa, wb](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      if (an >= 0) {
        std::vector<T> ga(static_cast<std::size_t>(outer * wa));
        for (std::int64_t gr = 0; gr < outer; ++gr)
          std::copy_n(g.begin() + gr * (wa + wb), wa, ga.begin() + gr * wa);
        t.accumulate(an, ga.data(), static_cast<std::int64_t>(ga.size()));
      }
      if (bn >= 0) {
        std::vector<T> gb(static_cast<std::size_t>(outer * wb));
        for (std::int64_t gr = 0; gr < outer; ++gr)
          std::copy_n(g.begin() + gr * (wa + wb) + wa, wb, gb.begin() + gr * wb);
        t.accumulate(bn, gb.data(), static_cast<std::int64_t>(gb.size()));
      }
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// Reductions and softmax
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  const auto& x = *a.values;
  T acc = T(0);
  for (T v : x) acc += v;
  Tensor<T> o = Tensor<T>::scalar(acc);
  o.requires_grad = a.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = tp->lift(a);
    const int on = tp->lift(o);
    tp->record(on, [an, on, n = a.numel()](Tape<T>& t) {
      const T g0 = t.grad_of(on)[0];
      std::vector<T> ga(static_cast<std::size_t>(n), g0);
      t.accumulate(an, ga.data(), n);
    });
  }
  return o;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const auto& x = *a.values;
  T acc = T(0);
  for (T v : x) acc += v;
  const T inv = T(1) / static_cast<T>(a.numel());
  Tensor<T> o = Tensor<T>::scalar(acc * inv);
  o.requires_grad = a.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = tp->lift(a);
    const int on = tp->lift(o);
    tp->record(on, [an, on, n = a.numel(), inv](Tape<T>& t) {
      const T g0 = t.grad_of(on)[0] * inv;
      std::vector<T> ga(static_cast<std::size_t>(n), g0);
      t.accumulate(an, ga.data(), n);
    });
  }
  return o;
}

// Sums over every axis except the first; out shape is (N, 1).
template <typename T>
Tensor<T> row_sum(const Tensor<T>& a) {
  if (a.shape.empty())
    throw std::invalid_argument("row_sum: expected rank >= 1");
  const int n = a.shape[0];
  const std::int64_t inner = a.numel() / n;
  const auto& x = *a.values;
  std::vector<T> out(static_cast<std::size_t>(n), T(0));
  for (int i = 0; i < n; ++i) {
    T acc = T(0);
    for (std::int64_t j = 0; j < inner; ++j)
      acc += x[static_cast<std::size_t>(i * inner + j)];
    out[static_cast<std::size_t>(i)] = acc;
  }
  Tensor<T> o({n, 1}, std::move(out));
  o.requires_grad = a.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = tp->lift(a);
    const int on = tp->lift(o);
    tp->record(on, [an, on, n, inner](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      std::vector<T> ga(static_cast<std::size_t>(n * inner));
      for (int i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < inner; ++j)
          ga[static_cast<std::size_t>(i * inner + j)] =
              g[static_cast<std::size_t>(i)];
      t.accumulate(an, ga.data(), static_cast<std::int64_t>(ga.size()));
    });
  }
  return o;
}

// Softmax over the last axis (rows are all leading axes flattened).
template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.shape.empty())
    throw std::invalid_argument("softmax: expected rank >= 1");
  const int cols = a.shape.back();
  const std::int64_t rows = a.numel() / cols;
  const auto& x = *a.values;
  std::vector<T> out(x.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * cols;
    T* yr = out.data() + r * cols;
    T mx = xr[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    T z = T(0);
    for (int j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (int j = 0; j < cols; ++j) yr[j] /= z;
  }
  Tensor<T> o(a.shape, std::move(out));
  o.requires_grad = a.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = tp->lift(a);
    const int on = tp->lift(o);
    tp->record(on, [an, on, rows, cols, aout = o](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      const auto& y = *aout.values;
      std::vector<T> ga(g.size());
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* yr = y.data() + r * cols;
        const T* gr = g.data() + r * cols;
        T dot = T(0);
        for (int j = 0; j < cols; ++j) dot += yr[j] * gr[j];
        T* gar = ga.data() + r * cols;
        for (int j = 0; j < cols; ++j) gar[j] = yr[j] * (gr[j] - dot);
      }
      t.accumulate(an, ga.data(), static_cast<std::int64_t>(ga.size()));
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// Spatial ops
// ---------------------------------------------------------------------------

// Reflection padding (edge not repeated) on the trailing two axes of a
// (C,H,W) or (N,C,H,W) tensor.
template <typename T>
Tensor<T> reflect_pad(const Tensor<T>& a, int pad) {
  if (pad < 0) throw std::invalid_argument("reflect_pad: pad must be >= 0");
  if (pad == 0) return a;
  const std::size_t r = a.shape.size();
  if (r != 3 && r != 4)
    throw std::invalid_argument("reflect_pad: expected (C,H,W) or (N,C,H,W), got " +
                                shape_str(a.shape));
  const int H = a.shape[r - 2], W = a.shape[r - 1];
  if (pad >= std::min(H, W))
    throw std::invalid_argument(
        "reflect_pad: pad " + std::to_string(pad) +
        " must be smaller than both spatial extents of " + shape_str(a.shape));
  const std::int64_t planes = a.numel() / (static_cast<std::int64_t>(H) * W);
  const int Ho = H + 2 * pad, Wo = W + 2 * pad;
  Shape os = a.shape;
  os[r - 2] = Ho;
  os[r - 1] = Wo;
  const auto& x = *a.values;
  std::vector<T> out(static_cast<std::size_t>(planes) * Ho * Wo);
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* xi = x.data() + p * H * W;
    T* yo = out.data() + p * Ho * Wo;
    for (int i = 0; i < Ho; ++i) {
      const int si = detail::mirror_index(i - pad, H);
      for (int j = 0; j < Wo; ++j)
        yo[i * Wo + j] = xi[si * W + detail::mirror_index(j - pad, W)];
    }
  }
  Tensor<T> o(std::move(os), std::move(out));
  o.requires_grad = a.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int an = tp->lift(a);
    const int on = tp->lift(o);
    tp->record(on, [an, on, planes, H, W, Ho, Wo, pad](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      std::vector<T> ga(static_cast<std::size_t>(planes) * H * W, T(0));
      for (std::int64_t p = 0; p < planes; ++p) {
        T* gi = ga.data() + p * H * W;
        const T* go = g.data() + p * Ho * Wo;
        for (int i = 0; i < Ho; ++i) {
          const int si = detail::mirror_index(i - pad, H);
          for (int j = 0; j < Wo; ++j)
            gi[si * W + detail::mirror_index(j - pad, W)] += go[i * Wo + j];
        }
      }
      t.accumulate(an, ga.data(), static_cast<std::int64_t>(ga.size()));
    });
  }
  return o;
}

// x (N,Ci,H,W) * w (Co,Ci,kh,kw) -> (N,Co,Ho,Wo), zero padding, floor output
// extents.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
  if (x.shape.size() != 4 || w.shape.size() != 4)
    throw std::invalid_argument("conv2d: expected x (N,C,H,W) and w (Co,Ci,kh,kw), got " +
                                shape_str(x.shape) + " and " + shape_str(w.shape));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
  const int N = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int Co = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  if (w.shape[1] != Ci)
    throw std::invalid_argument("conv2d: channel mismatch " + shape_str(x.shape) +
                                " vs " + shape_str(w.shape));
  if (kh > H + 2 * pad || kw > W + 2 * pad)
    throw std::invalid_argument("conv2d: kernel larger than padded input (" +
                                shape_str(x.shape) + ", " + shape_str(w.shape) +
                                ", pad " + std::to_string(pad) + ")");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  const int K = Ci * kh * kw;
  const int L = Ho * Wo;
  std::vector<T> col(static_cast<std::size_t>(K) * L);
  std::vector<T> out(static_cast<std::size_t>(N) * Co * L);
  for (int n = 0; n < N; ++n) {
    detail::im2col(x.data() + static_cast<std::int64_t>(n) * Ci * H * W, Ci, H,
                   W, kh, kw, stride, pad, Ho, Wo, col.data());
    detail::gemm_nn(w.data(), col.data(),
                    out.data() + static_cast<std::int64_t>(n) * Co * L, Co, K, L);
  }
  Tensor<T> o({N, Co, Ho, Wo}, std::move(out));
  o.requires_grad = x.requires_grad || w.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int xn = x.requires_grad ? tp->lift(x) : -1;
    const int wn = w.requires_grad ? tp->lift(w) : -1;
    const int on = tp->lift(o);
    tp->record(on, [xn, wn, on, xv = x, wv = w, N, Ci, H, W, Co, kh, kw,
                    stride, pad, Ho, Wo, K, L](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      std::vector<T> col(static_cast<std::size_t>(K) * L);
      std::vector<T> gw;
      if (wn >= 0) gw.assign(static_cast<std::size_t>(Co) * K, T(0));
      std::vector<T> gx;
      if (xn >= 0) gx.assign(static_cast<std::size_t>(N) * Ci * H * W, T(0));
      std::vector<T> gcol(static_cast<std::size_t>(K) * L);
      for (int n = 0; n < N; ++n) {
        const T* gn = g.data() + static_cast<std::int64_t>(n) * Co * L;
        if (wn >= 0) {
          detail::im2col(xv.data() + static_cast<std::int64_t>(n) * Ci * H * W,
                         Ci, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
          detail::gemm_nt_acc(gn, col.data(), gw.data(), Co, L, K);
        }
        if (xn >= 0) {
          detail::gemm_tn(wv.data(), gn, gcol.data(), Co, K, L);
          detail::col2im_acc(gcol.data(), Ci, H, W, kh, kw, stride, pad, Ho, Wo,
                             gx.data() + static_cast<std::int64_t>(n) * Ci * H * W);
        }
      }
      if (wn >= 0) t.accumulate(wn, gw.data(), static_cast<std::int64_t>(gw.size()));
      if (xn >= 0) t.accumulate(xn, gx.data(), static_cast<std::int64_t>(gx.size()));
    });
  }
  return o;
}

// x (N,Ci,Hi,Wi) * w (Ci,Co,kh,kw) -> (N,Co,Ho,Wo) with
// Ho = (Hi-1)*stride - 2*pad + kh; the adjoint of conv2d's forward geometry.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, int stride,
                           int pad) {
  if (x.shape.size() != 4 || w.shape.size() != 4)
    throw std::invalid_argument(
        "conv_transpose2d: expected x (N,C,H,W) and w (Ci,Co,kh,kw), got " +
        shape_str(x.shape) + " and " + shape_str(w.shape));
  if (stride < 1)
    throw std::invalid_argument("conv_transpose2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv_transpose2d: pad must be >= 0");
  const int N = x.shape[0], Ci = x.shape[1], Hi = x.shape[2], Wi = x.shape[3];
  const int Co = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  if (w.shape[0] != Ci)
    throw std::invalid_argument("conv_transpose2d: channel mismatch " +
                                shape_str(x.shape) + " vs " + shape_str(w.shape));
  const int Ho = (Hi - 1) * stride - 2 * pad + kh;
  const int Wo = (Wi - 1) * stride - 2 * pad + kw;
  if (Ho < 1 || Wo < 1)
    throw std::invalid_argument("conv_transpose2d: empty output for input " +
                                shape_str(x.shape) + " with kernel " +
                                shape_str(w.shape));
  const int K = Co * kh * kw;
  const int L = Hi * Wi;
  std::vector<T> colbuf(static_cast<std::size_t>(K) * L);
  std::vector<T> out(static_cast<std::size_t>(N) * Co * Ho * Wo, T(0));
  for (int n = 0; n < N; ++n) {
    // col = wᵀ · x_n, then scatter back through the conv geometry.
    detail::gemm_tn(w.data(), x.data() + static_cast<std::int64_t>(n) * Ci * L,
                    colbuf.data(), Ci, K, L);
    detail::col2im_acc(colbuf.data(), Co, Ho, Wo, kh, kw, stride, pad, Hi, Wi,
                       out.data() + static_cast<std::int64_t>(n) * Co * Ho * Wo);
  }
  Tensor<T> o({N, Co, Ho, Wo}, std::move(out));
  o.requires_grad = x.requires_grad || w.requires_grad;
  if (Tape<T>* tp = Tape<T>::current(); tp && o.requires_grad) {
    const int xn = x.requires_grad ? tp->lift(x) : -1;
    const int wn = w.requires_grad ? tp->lift(w) : -1;
    const int on = tp->lift(o);
    tp->record(on, [xn, wn, on, xv = x, wv = w, N, Ci, Hi, Wi, Co, kh, kw,
                    stride, pad, Ho, Wo, K, L](Tape<T>& t) {
      const auto& g = t.grad_of(on);
      std::vector<T> gcol(static_cast<std::size_t>(K) * L);
      std::vector<T> gx;
      if (xn >= 0) gx.assign(static_cast<std::size_t>(N) * Ci * L, T(0));
      std::vector<T> gw;
      if (wn >= 0) gw.assign(static_cast<std::size_t>(Ci) * K, T(0));
      for (int n = 0; n < N; ++n) {
        detail::im2col(g.data() + static_cast<std::int64_t>(n) * Co * Ho * Wo,
                       Co, Ho, Wo, kh, kw, stride, pad, Hi, Wi, gcol.data());
        if (xn >= 0)
          detail::gemm_nn(wv.data(), gcol.data(),
                          gx.data() + static_cast<std::int64_t>(n) * Ci * L, Ci,
                          K, L);
        if (wn >= 0)
          detail::gemm_nt_acc(xv.data() + static_cast<std::int64_t>(n) * Ci * L,
                              gcol.data(), gw.data(), Ci, L, K);
      }
      if (xn >= 0) t.accumulate(xn, gx.data(), static_cast<std::int64_t>(gx.size()));
      if (wn >= 0) t.accumulate(wn, gw.data(), static_cast<std::int64_t>(gw.size()));
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// Small helpers shared across modules
// ---------------------------------------------------------------------------

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : *t.values)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

}  // namespace pagan
