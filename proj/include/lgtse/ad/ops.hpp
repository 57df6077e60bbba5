#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lgtse/ad/graph.hpp"
#include "lgtse/common/error.hpp"
#include "lgtse/common/fft.hpp"
#include "lgtse/common/tensor.hpp"

// Differentiable op library. Each op computes its value eagerly and, when any
// input requires a gradient, registers a closure that pulls from the output
// gradient into the inputs. Stride-1 width loops are kept contiguous so the
// compiler can vectorise them.
namespace lgtse::ad {

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.val(), b.val(), "add");
  Tensor<T> v(a.val().shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] + b.val()[i];
  return make_op<T>(std::move(v), {a, b}, [a, b](Node<T>* self) {
    return [self, a, b]() {
      const Tensor<T>& g = self->grad;
      if (a.node()->requires_grad) {
        Tensor<T>& ga = a.node()->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.node()->requires_grad) {
        Tensor<T>& gb = b.node()->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    };
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.val(), b.val(), "sub");
  Tensor<T> v(a.val().shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] - b.val()[i];
  return make_op<T>(std::move(v), {a, b}, [a, b](Node<T>* self) {
    return [self, a, b]() {
      const Tensor<T>& g = self->grad;
      if (a.node()->requires_grad) {
        Tensor<T>& ga = a.node()->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.node()->requires_grad) {
        Tensor<T>& gb = b.node()->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.val(), b.val(), "mul");
  Tensor<T> v(a.val().shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] * b.val()[i];
  return make_op<T>(std::move(v), {a, b}, [a, b](Node<T>* self) {
    return [self, a, b]() {
      const Tensor<T>& g = self->grad;
      if (a.node()->requires_grad) {
        Tensor<T>& ga = a.node()->ensure_grad();
        const Tensor<T>& bv = b.node()->value;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.node()->requires_grad) {
        Tensor<T>& gb = b.node()->ensure_grad();
        const Tensor<T>& av = a.node()->value;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    };
  });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.val(), b.val(), "div");
  Tensor<T> v(a.val().shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] / b.val()[i];
  return make_op<T>(std::move(v), {a, b}, [a, b](Node<T>* self) {
    return [self, a, b]() {
      const Tensor<T>& g = self->grad;
      const Tensor<T>& av = a.node()->value;
      const Tensor<T>& bv = b.node()->value;
      if (a.node()->requires_grad) {
        Tensor<T>& ga = a.node()->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
      }
      if (b.node()->requires_grad) {
        Tensor<T>& gb = b.node()->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
      }
    };
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T c) {
  Tensor<T> v(a.val().shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] * c;
  return make_op<T>(std::move(v), {a}, [a, c](Node<T>* self) {
    return [self, a, c]() {
      Tensor<T>& ga = a.node()->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) ga[i] += self->grad[i] * c;
    };
  });
}

template <class T>
Var<T> add_const(const Var<T>& a, T c) {
  Tensor<T> v(a.val().shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] + c;
  return make_op<T>(std::move(v), {a}, [a](Node<T>* self) {
    return [self, a]() {
      Tensor<T>& ga = a.node()->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) ga[i] += self->grad[i];
    };
  });
}

// s is a one-element tensor broadcast over x.
template <class T>
Var<T> scalar_mul(const Var<T>& s, const Var<T>& x) {
  if (s.val().size() != 1) throw ShapeError("scalar_mul: scalar operand must have size 1");
  Tensor<T> v(x.val().shape());
  const T sv = s.val()[0];
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = sv * x.val()[i];
  return make_op<T>(std::move(v), {s, x}, [s, x](Node<T>* self) {
    return [self, s, x]() {
      const Tensor<T>& g = self->grad;
      if (s.node()->requires_grad) {
        T acc = T(0);
        const Tensor<T>& xv = x.node()->value;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
        s.node()->ensure_grad()[0] += acc;
      }
      if (x.node()->requires_grad) {
        Tensor<T>& gx = x.node()->ensure_grad();
        const T sv = s.node()->value[0];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sv;
      }
    };
  });
}

// x: (m, n), b: (m) broadcast over columns.
template <class T>
Var<T> add_col_bias(const Var<T>& x, const Var<T>& b) {
  if (x.val().rank() != 2 || b.val().size() != x.val().dim(0))
    throw ShapeError("add_col_bias: bias must match rows");
  const std::size_t m = x.val().dim(0), n = x.val().dim(1);
  Tensor<T> v({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const T bv = b.val()[i];
    const T* src = &x.val().at(i, 0);
    T* dst = &v.at(i, 0);
    for (std::size_t j = 0; j < n; ++j) dst[j] = src[j] + bv;
  }
  return make_op<T>(std::move(v), {x, b}, [x, b, m, n](Node<T>* self) {
    return [self, x, b, m, n]() {
      const Tensor<T>& g = self->grad;
      if (x.node()->requires_grad) {
        Tensor<T>& gx = x.node()->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (b.node()->requires_grad) {
        Tensor<T>& gb = b.node()->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          T acc = T(0);
          const T* grow = &g.at(i, 0);
          for (std::size_t j = 0; j < n; ++j) acc += grow[j];
          gb[i] += acc;
        }
      }
    };
  });
}

template <class T, class F, class DF>
Var<T> unary_op(const Var<T>& a, F f, DF df) {
  Tensor<T> v(a.val().shape());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(a.val()[i]);
  return make_op<T>(std::move(v), {a}, [a, df](Node<T>* self) {
    return [self, a, df]() {
      Tensor<T>& ga = a.node()->ensure_grad();
      const Tensor<T>& av = a.node()->value;
      const Tensor<T>& yv = self->value;
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        ga[i] += self->grad[i] * df(av[i], yv[i]);
    };
  });
}

template <class T>
Var<T> tanh_op(const Var<T>& a) {
  return unary_op(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return unary_op(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  return unary_op(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

// slope is a learnable one-element tensor.
template <class T>
Var<T> prelu(const Var<T>& a, const Var<T>& slope) {
  if (slope.val().size() != 1) throw ShapeError("prelu: slope must have size 1");
  const T s = slope.val()[0];
  Tensor<T> v(a.val().shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const T x = a.val()[i];
    v[i] = x > T(0) ? x : s * x;
  }
  return make_op<T>(std::move(v), {a, slope}, [a, slope](Node<T>* self) {
    return [self, a, slope]() {
      const Tensor<T>& g = self->grad;
      const Tensor<T>& av = a.node()->value;
      const T s = slope.node()->value[0];
      if (a.node()->requires_grad) {
        Tensor<T>& ga = a.node()->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * (av[i] > T(0) ? T(1) : s);
      }
      if (slope.node()->requires_grad) {
        T acc = T(0);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (av[i] <= T(0)) acc += g[i] * av[i];
        slope.node()->ensure_grad()[0] += acc;
      }
    };
  });
}

template <class T>
Var<T> sqrt_eps(const Var<T>& a, T eps) {
  return unary_op(
      a, [eps](T x) { return std::sqrt(x + eps); },
      [](T, T y) { return T(1) / (T(2) * y); });
}

template <class T>
Var<T> log_op(const Var<T>& a) {
  return unary_op(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

// x^p with constant exponent; inputs must stay positive on the grad path.
template <class T>
Var<T> powc(const Var<T>& a, T p) {
  return unary_op(
      a, [p](T x) { return std::pow(x, p); },
      [p](T x, T y) { return x == T(0) ? T(0) : p * y / x; });
}

// ---------------------------------------------------------------------------
// reductions / reshaping
// ---------------------------------------------------------------------------

template <class T>
Var<T> sum_all(const Var<T>& a) {
  T s = T(0);
  for (std::size_t i = 0; i < a.val().size(); ++i) s += a.val()[i];
  Tensor<T> v({1});
  v[0] = s;
  return make_op<T>(std::move(v), {a}, [a](Node<T>* self) {
    return [self, a]() {
      Tensor<T>& ga = a.node()->ensure_grad();
      const T g = self->grad[0];
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
  });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.val().size()));
}

template <class T>
Var<T> dot(const Var<T>& a, const Var<T>& b) {
  return sum_all(mul(a, b));
}

template <class T>
Var<T> reshape(const Var<T>& a, std::vector<std::size_t> shape) {
  if (Tensor<T>::count(shape) != a.val().size())
    throw ShapeError("reshape: element count mismatch");
  Tensor<T> v(shape, a.val().vec());
  return make_op<T>(std::move(v), {a}, [a](Node<T>* self) {
    return [self, a]() {
      Tensor<T>& ga = a.node()->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) ga[i] += self->grad[i];
    };
  });
}

// Slice along the leading axis; contiguous for any rank.
template <class T>
Var<T> slice_axis0(const Var<T>& a, std::size_t lo, std::size_t hi) {
  const auto& sh = a.val().shape();
  if (sh.empty() || hi > sh[0] || lo >= hi) throw ShapeError("slice_axis0: bad range");
  std::size_t inner = 1;
  for (std::size_t i = 1; i < sh.size(); ++i) inner *= sh[i];
  std::vector<std::size_t> oshape = sh;
  oshape[0] = hi - lo;
  Tensor<T> v(oshape);
  std::copy(a.val().data() + lo * inner, a.val().data() + hi * inner, v.data());
  return make_op<T>(std::move(v), {a}, [a, lo, inner](Node<T>* self) {
    return [self, a, lo, inner]() {
      Tensor<T>& ga = a.node()->ensure_grad();
      T* dst = ga.data() + lo * inner;
      for (std::size_t i = 0; i < self->grad.size(); ++i) dst[i] += self->grad[i];
    };
  });
}

template <class T>
Var<T> concat_axis0(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_axis0: empty");
  std::vector<std::size_t> oshape = parts[0].val().shape();
  std::size_t total0 = 0;
  for (const auto& p : parts) {
    const auto& sh = p.val().shape();
    if (sh.size() != oshape.size()) throw ShapeError("concat_axis0: rank mismatch");
    for (std::size_t i = 1; i < sh.size(); ++i)
      if (sh[i] != oshape[i]) throw ShapeError("concat_axis0: trailing dim mismatch");
    total0 += sh[0];
  }
  oshape[0] = total0;
  Tensor<T> v(oshape);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.val().data(), p.val().data() + p.val().size(), v.data() + off);
    off += p.val().size();
  }
  return make_op<T>(std::move(v), parts, [parts](Node<T>* self) {
    return [self, parts]() {
      std::size_t off = 0;
      for (const auto& p : parts) {
        const std::size_t n = p.val().size();
        if (p.node()->requires_grad) {
          Tensor<T>& gp = p.node()->ensure_grad();
          const T* src = self->grad.data() + off;
          for (std::size_t i = 0; i < n; ++i) gp[i] += src[i];
        }
        off += n;
      }
    };
  });
}

// x: (A, B, C) -> (A, C), picking index b along the middle axis.
template <class T>
Var<T> slice_dim1(const Var<T>& x, std::size_t b) {
  const auto& sh = x.val().shape();
  if (sh.size() != 3 || b >= sh[1]) throw ShapeError("slice_dim1: bad index");
  const std::size_t A = sh[0], B = sh[1], C = sh[2];
  Tensor<T> v({A, C});
  for (std::size_t a_ = 0; a_ < A; ++a_)
    std::copy(&x.val().at(a_, b, 0), &x.val().at(a_, b, 0) + C, &v.at(a_, 0));
  return make_op<T>(std::move(v), {x}, [x, b, A, B, C](Node<T>* self) {
    return [self, x, b, A, B, C]() {
      Tensor<T>& gx = x.node()->ensure_grad();
      for (std::size_t a_ = 0; a_ < A; ++a_) {
        T* dst = &gx.at(a_, b, 0);
        const T* src = &self->grad.at(a_, 0);
        for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
      }
    };
  });
}

// parts[b]: (A, C) -> (A, B, C)
template <class T>
Var<T> stack_dim1(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("stack_dim1: empty");
  const std::size_t A = parts[0].val().dim(0), C = parts[0].val().dim(1), B = parts.size();
  Tensor<T> v({A, B, C});
  for (std::size_t b = 0; b < B; ++b) {
    check_same_shape(parts[b].val(), parts[0].val(), "stack_dim1");
    for (std::size_t a_ = 0; a_ < A; ++a_)
      std::copy(&parts[b].val().at(a_, 0), &parts[b].val().at(a_, 0) + C, &v.at(a_, b, 0));
  }
  return make_op<T>(std::move(v), parts, [parts, A, B, C](Node<T>* self) {
    return [self, parts, A, B, C]() {
      for (std::size_t b = 0; b < B; ++b) {
        if (!parts[b].node()->requires_grad) continue;
        Tensor<T>& gp = parts[b].node()->ensure_grad();
        for (std::size_t a_ = 0; a_ < A; ++a_) {
          const T* src = &self->grad.at(a_, b, 0);
          T* dst = &gp.at(a_, 0);
          for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    };
  });
}

// x: (A, B, C) -> (A, B), picking index c along the last axis.
template <class T>
Var<T> slice_dim2(const Var<T>& x, std::size_t c) {
  const auto& sh = x.val().shape();
  if (sh.size() != 3 || c >= sh[2]) throw ShapeError("slice_dim2: bad index");
  const std::size_t A = sh[0], B = sh[1], C = sh[2];
  Tensor<T> v({A, B});
  for (std::size_t a_ = 0; a_ < A; ++a_)
    for (std::size_t b = 0; b < B; ++b) v.at(a_, b) = x.val().at(a_, b, c);
  return make_op<T>(std::move(v), {x}, [x, c, A, B, C](Node<T>* self) {
    return [self, x, c, A, B, C]() {
      Tensor<T>& gx = x.node()->ensure_grad();
      for (std::size_t a_ = 0; a_ < A; ++a_)
        for (std::size_t b = 0; b < B; ++b) gx.at(a_, b, c) += self->grad.at(a_, b);
    };
  });
}

// parts[c]: (A, B) -> (A, B, C)
template <class T>
Var<T> stack_dim2(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("stack_dim2: empty");
  const std::size_t A = parts[0].val().dim(0), B = parts[0].val().dim(1), C = parts.size();
  Tensor<T> v({A, B, C});
  for (std::size_t c = 0; c < C; ++c) {
    check_same_shape(parts[c].val(), parts[0].val(), "stack_dim2");
    for (std::size_t a_ = 0; a_ < A; ++a_)
      for (std::size_t b = 0; b < B; ++b) v.at(a_, b, c) = parts[c].val().at(a_, b);
  }
  return make_op<T>(std::move(v), parts, [parts, A, B, C](Node<T>* self) {
    return [self, parts, A, B, C]() {
      for (std::size_t c = 0; c < C; ++c) {
        if (!parts[c].node()->requires_grad) continue;
        Tensor<T>& gp = parts[c].node()->ensure_grad();
        for (std::size_t a_ = 0; a_ < A; ++a_)
          for (std::size_t b = 0; b < B; ++b) gp.at(a_, b) += self->grad.at(a_, b, c);
      }
    };
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.val().rank() != 2 || b.val().rank() != 2 || a.val().dim(1) != b.val().dim(0))
    throw ShapeError("matmul: " + a.val().shape_str() + " x " + b.val().shape_str());
  const std::size_t m = a.val().dim(0), k = a.val().dim(1), n = b.val().dim(1);
  Tensor<T> v({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* out = &v.at(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a.val().at(i, p);
      const T* brow = &b.val().at(p, 0);
      for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
    }
  }
  return make_op<T>(std::move(v), {a, b}, [a, b, m, k, n](Node<T>* self) {
    return [self, a, b, m, k, n]() {
      const Tensor<T>& g = self->grad;
      if (a.node()->requires_grad) {
        Tensor<T>& ga = a.node()->ensure_grad();
        const Tensor<T>& bv = b.node()->value;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T* grow = &g.at(i, 0);
            const T* brow = &bv.at(p, 0);
            T acc = T(0);
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga.at(i, p) += acc;
          }
      }
      if (b.node()->requires_grad) {
        Tensor<T>& gb = b.node()->ensure_grad();
        const Tensor<T>& av = a.node()->value;
        for (std::size_t p = 0; p < k; ++p) {
          T* gbrow = &gb.at(p, 0);
          for (std::size_t i = 0; i < m; ++i) {
            const T aval = av.at(i, p);
            const T* grow = &g.at(i, 0);
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += aval * grow[j];
          }
        }
      }
    };
  });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  if (a.val().rank() != 2) throw ShapeError("transpose: expected rank 2");
  const std::size_t m = a.val().dim(0), n = a.val().dim(1);
  Tensor<T> v({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v.at(j, i) = a.val().at(i, j);
  return make_op<T>(std::move(v), {a}, [a, m, n](Node<T>* self) {
    return [self, a, m, n]() {
      Tensor<T>& ga = a.node()->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += self->grad.at(j, i);
    };
  });
}

// Column-wise softmax over the leading axis of a (m, n) matrix.
template <class T>
Var<T> softmax_axis0(const Var<T>& a) {
  if (a.val().rank() != 2) throw ShapeError("softmax_axis0: expected rank 2");
  const std::size_t m = a.val().dim(0), n = a.val().dim(1);
  Tensor<T> v({m, n});
  for (std::size_t j = 0; j < n; ++j) {
    T mx = a.val().at(0, j);
    for (std::size_t i = 1; i < m; ++i) mx = std::max(mx, a.val().at(i, j));
    T den = T(0);
    for (std::size_t i = 0; i < m; ++i) {
      const T e = std::exp(a.val().at(i, j) - mx);
      v.at(i, j) = e;
      den += e;
    }
    for (std::size_t i = 0; i < m; ++i) v.at(i, j) /= den;
  }
  return make_op<T>(std::move(v), {a}, [a, m, n](Node<T>* self) {
    return [self, a, m, n]() {
      Tensor<T>& ga = a.node()->ensure_grad();
      const Tensor<T>& y = self->value;
      const Tensor<T>& g = self->grad;
      for (std::size_t j = 0; j < n; ++j) {
        T gy = T(0);
        for (std::size_t i = 0; i < m; ++i) gy += g.at(i, j) * y.at(i, j);
        for (std::size_t i = 0; i < m; ++i)
          ga.at(i, j) += y.at(i, j) * (g.at(i, j) - gy);
      }
    };
  });
}

// out[c,r,t] = sum_f M[r,f] x[c,f,t] for a constant matrix M (R, F).
template <class T>
Var<T> mode1_matmul(const Tensor<T>& m, const Var<T>& x) {
  const auto& sh = x.val().shape();
  if (sh.size() != 3 || m.rank() != 2 || sh[1] != m.dim(1))
    throw ShapeError("mode1_matmul: incompatible shapes");
  const std::size_t C = sh[0], F = sh[1], Tn = sh[2], R = m.dim(0);
  Tensor<T> v({C, R, Tn});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < R; ++r) {
      T* out = &v.at(c, r, 0);
      for (std::size_t f = 0; f < F; ++f) {
        const T w = m.at(r, f);
        if (w == T(0)) continue;
        const T* src = &x.val().at(c, f, 0);
        for (std::size_t t = 0; t < Tn; ++t) out[t] += w * src[t];
      }
    }
  return make_op<T>(std::move(v), {x}, [x, m, C, F, Tn, R](Node<T>* self) {
    return [self, x, m, C, F, Tn, R]() {
      Tensor<T>& gx = x.node()->ensure_grad();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t r = 0; r < R; ++r) {
          const T* g = &self->grad.at(c, r, 0);
          for (std::size_t f = 0; f < F; ++f) {
            const T w = m.at(r, f);
            if (w == T(0)) continue;
            T* dst = &gx.at(c, f, 0);
            for (std::size_t t = 0; t < Tn; ++t) dst[t] += w * g[t];
          }
        }
    };
  });
}

// Fused GRU cell: h' = (1-z) n + z h with r/z/n gates. One node per step
// instead of a dozen; the backward applies the standard cell gradients.
// x: (in, B), h: (hidden, B), w_ih/w_hh: (3h, in/hidden), b: (3h).
template <class T>
Var<T> gru_cell(const Var<T>& x, const Var<T>& h, const Var<T>& w_ih, const Var<T>& w_hh,
                const Var<T>& b_ih, const Var<T>& b_hh) {
  const std::size_t in = x.val().dim(0), batch = x.val().dim(1), H = h.val().dim(0);
  if (h.val().dim(1) != batch || w_ih.val().dim(0) != 3 * H || w_ih.val().dim(1) != in ||
      w_hh.val().dim(0) != 3 * H || w_hh.val().dim(1) != H || b_ih.val().size() != 3 * H ||
      b_hh.val().size() != 3 * H)
    throw ShapeError("gru_cell: inconsistent shapes");

  auto gemm = [](const Tensor<T>& w, const Tensor<T>& v, const Tensor<T>& bias, Tensor<T>& out) {
    const std::size_t m = w.dim(0), k = w.dim(1), n = v.dim(1);
    for (std::size_t i = 0; i < m; ++i) {
      T* __restrict o = &out.at(i, 0);
      const T bv = bias[i];
      for (std::size_t t = 0; t < n; ++t) o[t] = bv;
      for (std::size_t p = 0; p < k; ++p) {
        const T wv = w.at(i, p);
        const T* __restrict src = &v.at(p, 0);
        for (std::size_t t = 0; t < n; ++t) o[t] += wv * src[t];
      }
    }
  };

  Tensor<T> gi({3 * H, batch}), gh({3 * H, batch});
  gemm(w_ih.val(), x.val(), b_ih.val(), gi);
  gemm(w_hh.val(), h.val(), b_hh.val(), gh);

  // Saved activations for the backward pass.
  auto r = std::make_shared<Tensor<T>>(std::vector<std::size_t>{H, batch});
  auto z = std::make_shared<Tensor<T>>(std::vector<std::size_t>{H, batch});
  auto n = std::make_shared<Tensor<T>>(std::vector<std::size_t>{H, batch});
  auto ghn = std::make_shared<Tensor<T>>(std::vector<std::size_t>{H, batch});

  Tensor<T> out({H, batch});
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t t = 0; t < batch; ++t) {
      const T rv = T(1) / (T(1) + std::exp(-(gi.at(i, t) + gh.at(i, t))));
      const T zv = T(1) / (T(1) + std::exp(-(gi.at(H + i, t) + gh.at(H + i, t))));
      const T ghn_v = gh.at(2 * H + i, t);
      const T nv = std::tanh(gi.at(2 * H + i, t) + rv * ghn_v);
      r->at(i, t) = rv;
      z->at(i, t) = zv;
      n->at(i, t) = nv;
      ghn->at(i, t) = ghn_v;
      out.at(i, t) = (T(1) - zv) * nv + zv * h.val().at(i, t);
    }

  return make_op<T>(std::move(out), {x, h, w_ih, w_hh, b_ih, b_hh},
                    [x, h, w_ih, w_hh, b_ih, b_hh, r, z, n, ghn, in, batch, H](Node<T>* self) {
    return [self, x, h, w_ih, w_hh, b_ih, b_hh, r, z, n, ghn, in, batch, H]() {
      const Tensor<T>& go = self->grad;
      const Tensor<T>& hv = h.node()->value;

      // Gate pre-activation gradients.
      Tensor<T> dgi({3 * H, batch}), dgh({3 * H, batch});
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t t = 0; t < batch; ++t) {
          const T g = go.at(i, t);
          const T rv = r->at(i, t), zv = z->at(i, t), nv = n->at(i, t);
          const T dn = g * (T(1) - zv);
          const T dz = g * (hv.at(i, t) - nv);
          const T dan = dn * (T(1) - nv * nv);
          const T daz = dz * zv * (T(1) - zv);
          const T dr = dan * ghn->at(i, t);
          const T dar = dr * rv * (T(1) - rv);
          dgi.at(i, t) = dar;
          dgi.at(H + i, t) = daz;
          dgi.at(2 * H + i, t) = dan;
          dgh.at(i, t) = dar;
          dgh.at(H + i, t) = daz;
          dgh.at(2 * H + i, t) = dan * rv;
        }

      auto accumulate = [&](const Tensor<T>& dg, const Var<T>& w, const Var<T>& b,
                            const Var<T>& v, bool extra_h) {
        if (w.node()->requires_grad) {
          Tensor<T>& gw = w.node()->ensure_grad();
          const std::size_t k = w.node()->value.dim(1);
          for (std::size_t i = 0; i < 3 * H; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const T* __restrict a = &dg.at(i, 0);
              const T* __restrict src = &v.node()->value.at(p, 0);
              T acc = T(0);
              for (std::size_t t = 0; t < batch; ++t) acc += a[t] * src[t];
              gw.at(i, p) += acc;
            }
        }
        if (b.node()->requires_grad) {
          Tensor<T>& gb = b.node()->ensure_grad();
          for (std::size_t i = 0; i < 3 * H; ++i) {
            const T* __restrict a = &dg.at(i, 0);
            T acc = T(0);
            for (std::size_t t = 0; t < batch; ++t) acc += a[t];
            gb[i] += acc;
          }
        }
        if (v.node()->requires_grad) {
          Tensor<T>& gv = v.node()->ensure_grad();
          const std::size_t k = w.node()->value.dim(1);
          for (std::size_t i = 0; i < 3 * H; ++i) {
            const T* __restrict a = &dg.at(i, 0);
            for (std::size_t p = 0; p < k; ++p) {
              const T wv = w.node()->value.at(i, p);
              T* __restrict dst = &gv.at(p, 0);
              for (std::size_t t = 0; t < batch; ++t) dst[t] += wv * a[t];
            }
          }
          if (extra_h) {
            const Tensor<T>& zv = *z;
            for (std::size_t i = 0; i < H; ++i)
              for (std::size_t t = 0; t < batch; ++t)
                gv.at(i, t) += self->grad.at(i, t) * zv.at(i, t);
          }
        }
      };
      accumulate(dgi, w_ih, b_ih, x, false);
      accumulate(dgh, w_hh, b_hh, h, true);
    };
  });
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

struct ConvSpec {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
  std::size_t dil_h = 1, dil_w = 1;
  std::size_t groups = 1;
};

// x: (Cin, H, W), w: (Cout, Cin/groups, kh, kw), b: (Cout). stride_w must be
// 1 (every temporal axis in this project is unstrided).
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, const ConvSpec& cs) {
  const auto& xs = x.val().shape();
  const auto& ws = w.val().shape();
  if (xs.size() != 3 || ws.size() != 4) throw ShapeError("conv2d: bad ranks");
  if (cs.stride_w != 1) throw ShapeError("conv2d: stride_w must be 1");
  const std::size_t Cin = xs[0], H = xs[1], W = xs[2];
  const std::size_t Cout = ws[0], Cpg = ws[1], kh = ws[2], kw = ws[3];
  if (Cin % cs.groups != 0 || Cout % cs.groups != 0 || Cpg != Cin / cs.groups)
    throw ShapeError("conv2d: channel/group mismatch");
  if (b.val().size() != Cout) throw ShapeError("conv2d: bias size mismatch");
  const std::size_t eff_kh = cs.dil_h * (kh - 1) + 1;
  const std::size_t eff_kw = cs.dil_w * (kw - 1) + 1;
  if (H + 2 * cs.pad_h < eff_kh || W + 2 * cs.pad_w < eff_kw)
    throw ShapeError("conv2d: kernel larger than padded input");
  const std::size_t Ho = (H + 2 * cs.pad_h - eff_kh) / cs.stride_h + 1;
  const std::size_t Wo = W + 2 * cs.pad_w - eff_kw + 1;

  const std::size_t copg = Cout / cs.groups;
  auto widx = [Cpg, kh, kw](std::size_t co, std::size_t ci, std::size_t i, std::size_t j) {
    return ((co * Cpg + ci) * kh + i) * kw + j;
  };

  Tensor<T> v({Cout, Ho, Wo});
  for (std::size_t co = 0; co < Cout; ++co) {
    const std::size_t g = co / copg;
    const T bias = b.val()[co];
    for (std::size_t ho = 0; ho < Ho; ++ho) {
      T* out = &v.at(co, ho, 0);
      for (std::size_t t = 0; t < Wo; ++t) out[t] = bias;
      for (std::size_t cil = 0; cil < Cpg; ++cil) {
        const std::size_t ci = g * Cpg + cil;
        for (std::size_t i = 0; i < kh; ++i) {
          const long long hi = static_cast<long long>(ho * cs.stride_h + i * cs.dil_h) -
                               static_cast<long long>(cs.pad_h);
          if (hi < 0 || hi >= static_cast<long long>(H)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const long long off = static_cast<long long>(j * cs.dil_w) -
                                  static_cast<long long>(cs.pad_w);
            const T wv = w.val()[widx(co, cil, i, j)];
            const T* src = &x.val().at(ci, static_cast<std::size_t>(hi), 0);
            const std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
            const std::size_t hi_w =
                std::min<std::size_t>(Wo, W > static_cast<std::size_t>(std::max<long long>(off, 0))
                                              ? W - off
                                              : 0);
            for (std::size_t t = lo; t < hi_w; ++t) out[t] += wv * src[t + off];
          }
        }
      }
    }
  }

  return make_op<T>(std::move(v), {x, w, b},
                    [x, w, b, cs, Cin, H, W, Cout, Cpg, kh, kw, Ho, Wo, copg,
                     widx](Node<T>* self) {
    return [self, x, w, b, cs, Cin, H, W, Cout, Cpg, kh, kw, Ho, Wo, copg, widx]() {
      const Tensor<T>& g = self->grad;
      const bool need_x = x.node()->requires_grad;
      const bool need_w = w.node()->requires_grad;
      const bool need_b = b.node()->requires_grad;
      Tensor<T>* gx = need_x ? &x.node()->ensure_grad() : nullptr;
      Tensor<T>* gw = need_w ? &w.node()->ensure_grad() : nullptr;
      Tensor<T>* gb = need_b ? &b.node()->ensure_grad() : nullptr;

      for (std::size_t co = 0; co < Cout; ++co) {
        const std::size_t grp = co / copg;
        if (need_b) {
          T acc = T(0);
          for (std::size_t ho = 0; ho < Ho; ++ho) {
            const T* grow = &g.at(co, ho, 0);
            for (std::size_t t = 0; t < Wo; ++t) acc += grow[t];
          }
          (*gb)[co] += acc;
        }
        for (std::size_t cil = 0; cil < Cpg; ++cil) {
          const std::size_t ci = grp * Cpg + cil;
          for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j) {
              const T wv = w.node()->value[widx(co, cil, i, j)];
              T wacc = T(0);
              for (std::size_t ho = 0; ho < Ho; ++ho) {
                const long long hi =
                    static_cast<long long>(ho * cs.stride_h + i * cs.dil_h) -
                    static_cast<long long>(cs.pad_h);
                if (hi < 0 || hi >= static_cast<long long>(H)) continue;
                const long long off = static_cast<long long>(j * cs.dil_w) -
                                      static_cast<long long>(cs.pad_w);
                const std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
                const std::size_t hi_w = std::min<std::size_t>(
                    Wo, W > static_cast<std::size_t>(std::max<long long>(off, 0)) ? W - off : 0);
                const T* __restrict grow = &g.at(co, ho, 0);
                const T* __restrict xrow =
                    &x.node()->value.at(ci, static_cast<std::size_t>(hi), 0) + off;
                if (need_w)
                  for (std::size_t t = lo; t < hi_w; ++t) wacc += grow[t] * xrow[t];
                if (need_x) {
                  T* __restrict gxrow = &gx->at(ci, static_cast<std::size_t>(hi), 0) + off;
                  for (std::size_t t = lo; t < hi_w; ++t) gxrow[t] += wv * grow[t];
                }
              }
              if (need_w) (*gw)[widx(co, cil, i, j)] += wacc;
            }
          }
        }
      }
    };
  });
}

// Transposed conv. x: (Cin, H, W), w: (Cin, Cout, kh, kw), stride_w must be 1.
// out: ((H-1)*stride_h - 2 pad_h + kh + outpad_h, W - 2 pad_w + kw - 1).
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b,
                        std::size_t stride_h, std::size_t pad_h, std::size_t pad_w,
                        std::size_t outpad_h) {
  const auto& xs = x.val().shape();
  const auto& ws = w.val().shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[0] != xs[0])
    throw ShapeError("conv_transpose2d: bad shapes");
  const std::size_t Cin = xs[0], H = xs[1], W = xs[2];
  const std::size_t Cout = ws[1], kh = ws[2], kw = ws[3];
  if (b.val().size() != Cout) throw ShapeError("conv_transpose2d: bias size mismatch");
  const long long Ho_ll = static_cast<long long>((H - 1) * stride_h + kh + outpad_h) -
                          2 * static_cast<long long>(pad_h);
  const long long Wo_ll = static_cast<long long>(W + kw - 1) - 2 * static_cast<long long>(pad_w);
  if (Ho_ll <= 0 || Wo_ll <= 0) throw ShapeError("conv_transpose2d: empty output");
  const std::size_t Ho = static_cast<std::size_t>(Ho_ll), Wo = static_cast<std::size_t>(Wo_ll);

  auto widx = [Cout, kh, kw](std::size_t ci, std::size_t co, std::size_t i, std::size_t j) {
    return ((ci * Cout + co) * kh + i) * kw + j;
  };

  Tensor<T> v({Cout, Ho, Wo});
  for (std::size_t co = 0; co < Cout; ++co) {
    const T bias = b.val()[co];
    T* base = &v.at(co, 0, 0);
    for (std::size_t i = 0; i < Ho * Wo; ++i) base[i] = bias;
  }
  for (std::size_t ci = 0; ci < Cin; ++ci) {
    for (std::size_t co = 0; co < Cout; ++co) {
      for (std::size_t i = 0; i < kh; ++i) {
        for (std::size_t hi = 0; hi < H; ++hi) {
          const long long ho = static_cast<long long>(hi * stride_h + i) -
                               static_cast<long long>(pad_h);
          if (ho < 0 || ho >= static_cast<long long>(Ho)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const long long off = static_cast<long long>(j) - static_cast<long long>(pad_w);
            const T wv = w.val()[widx(ci, co, i, j)];
            const T* src = &x.val().at(ci, hi, 0);
            T* out = &v.at(co, static_cast<std::size_t>(ho), 0);
            const std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
            const std::size_t hi_t = std::min<std::size_t>(
                W, Wo > static_cast<std::size_t>(std::max<long long>(off, 0))
                       ? static_cast<std::size_t>(static_cast<long long>(Wo) - off)
                       : 0);
            for (std::size_t t = lo; t < hi_t; ++t) out[t + off] += wv * src[t];
          }
        }
      }
    }
  }

  return make_op<T>(std::move(v), {x, w, b},
                    [x, w, b, stride_h, pad_h, pad_w, Cin, H, W, Cout, kh, kw, Ho, Wo,
                     widx](Node<T>* self) {
    return [self, x, w, b, stride_h, pad_h, pad_w, Cin, H, W, Cout, kh, kw, Ho, Wo, widx]() {
      const Tensor<T>& g = self->grad;
      const bool need_x = x.node()->requires_grad;
      const bool need_w = w.node()->requires_grad;
      const bool need_b = b.node()->requires_grad;
      if (need_b) {
        Tensor<T>& gb = b.node()->ensure_grad();
        for (std::size_t co = 0; co < Cout; ++co) {
          T acc = T(0);
          const T* base = &g.at(co, 0, 0);
          for (std::size_t i = 0; i < Ho * Wo; ++i) acc += base[i];
          gb[co] += acc;
        }
      }
      Tensor<T>* gx = need_x ? &x.node()->ensure_grad() : nullptr;
      Tensor<T>* gw = need_w ? &w.node()->ensure_grad() : nullptr;
      if (!need_x && !need_w) return;
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        for (std::size_t co = 0; co < Cout; ++co) {
          for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j) {
              const T wv = w.node()->value[widx(ci, co, i, j)];
              T wacc = T(0);
              for (std::size_t hi = 0; hi < H; ++hi) {
                const long long ho = static_cast<long long>(hi * stride_h + i) -
                                     static_cast<long long>(pad_h);
                if (ho < 0 || ho >= static_cast<long long>(Ho)) continue;
                const long long off = static_cast<long long>(j) - static_cast<long long>(pad_w);
                const std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
                const std::size_t hi_t = std::min<std::size_t>(
                    W, Wo > static_cast<std::size_t>(std::max<long long>(off, 0))
                           ? static_cast<std::size_t>(static_cast<long long>(Wo) - off)
                           : 0);
                const T* __restrict grow = &g.at(co, static_cast<std::size_t>(ho), 0) + off;
                const T* __restrict xrow = &x.node()->value.at(ci, hi, 0);
                if (need_w)
                  for (std::size_t t = lo; t < hi_t; ++t) wacc += xrow[t] * grow[t];
                if (need_x) {
                  T* __restrict gxrow = &gx->at(ci, hi, 0);
                  for (std::size_t t = lo; t < hi_t; ++t) gxrow[t] += wv * grow[t];
                }
              }
              if (need_w) (*gw)[widx(ci, co, i, j)] += wacc;
            }
          }
        }
      }
    };
  });
}

// Average pooling along the last axis with window == stride == k; a partial
// final window is averaged over its actual width.
template <class T>
Var<T> avg_pool_w(const Var<T>& x, std::size_t k) {
  const auto& sh = x.val().shape();
  if (sh.size() != 3 || k == 0) throw ShapeError("avg_pool_w: bad input");
  const std::size_t C = sh[0], H = sh[1], W = sh[2];
  const std::size_t Wo = (W + k - 1) / k;
  Tensor<T> v({C, H, Wo});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t h = 0; h < H; ++h) {
      const T* src = &x.val().at(c, h, 0);
      T* out = &v.at(c, h, 0);
      for (std::size_t o = 0; o < Wo; ++o) {
        const std::size_t lo = o * k, hi = std::min(W, lo + k);
        T acc = T(0);
        for (std::size_t t = lo; t < hi; ++t) acc += src[t];
        out[o] = acc / static_cast<T>(hi - lo);
      }
    }
  return make_op<T>(std::move(v), {x}, [x, k, C, H, W, Wo](Node<T>* self) {
    return [self, x, k, C, H, W, Wo]() {
      Tensor<T>& gx = x.node()->ensure_grad();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t h = 0; h < H; ++h) {
          T* dst = &gx.at(c, h, 0);
          const T* g = &self->grad.at(c, h, 0);
          for (std::size_t o = 0; o < Wo; ++o) {
            const std::size_t lo = o * k, hi = std::min(W, lo + k);
            const T gv = g[o] / static_cast<T>(hi - lo);
            for (std::size_t t = lo; t < hi; ++t) dst[t] += gv;
          }
        }
    };
  });
}

// Nearest-neighbour upsampling along the last axis back to out_w samples.
template <class T>
Var<T> upsample_w(const Var<T>& x, std::size_t k, std::size_t out_w) {
  const auto& sh = x.val().shape();
  if (sh.size() != 3) throw ShapeError("upsample_w: bad input");
  const std::size_t C = sh[0], H = sh[1], W = sh[2];
  Tensor<T> v({C, H, out_w});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t h = 0; h < H; ++h) {
      const T* src = &x.val().at(c, h, 0);
      T* out = &v.at(c, h, 0);
      for (std::size_t t = 0; t < out_w; ++t) out[t] = src[std::min(t / k, W - 1)];
    }
  return make_op<T>(std::move(v), {x}, [x, k, C, H, W, out_w](Node<T>* self) {
    return [self, x, k, C, H, W, out_w]() {
      Tensor<T>& gx = x.node()->ensure_grad();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t h = 0; h < H; ++h) {
          T* dst = &gx.at(c, h, 0);
          const T* g = &self->grad.at(c, h, 0);
          for (std::size_t t = 0; t < out_w; ++t) dst[std::min(t / k, W - 1)] += g[t];
        }
    };
  });
}

// ---------------------------------------------------------------------------
// spectral ops
// ---------------------------------------------------------------------------

// Complex Hadamard product of two (2F, T) stacked-real/imag tensors.
template <class T>
Var<T> complex_mul(const Var<T>& m, const Var<T>& y) {
  check_same_shape(m.val(), y.val(), "complex_mul");
  const std::size_t F = m.val().dim(0) / 2, Tn = m.val().dim(1);
  if (m.val().dim(0) % 2 != 0) throw ShapeError("complex_mul: rows must be 2F");
  Tensor<T> v(m.val().shape());
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < Tn; ++t) {
      const T mr = m.val().at(f, t), mi = m.val().at(F + f, t);
      const T yr = y.val().at(f, t), yi = y.val().at(F + f, t);
      v.at(f, t) = mr * yr - mi * yi;
      v.at(F + f, t) = mr * yi + mi * yr;
    }
  return make_op<T>(std::move(v), {m, y}, [m, y, F, Tn](Node<T>* self) {
    return [self, m, y, F, Tn]() {
      const Tensor<T>& g = self->grad;
      const Tensor<T>& mv = m.node()->value;
      const Tensor<T>& yv = y.node()->value;
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t t = 0; t < Tn; ++t) {
          const T gr = g.at(f, t), gi = g.at(F + f, t);
          if (m.node()->requires_grad) {
            Tensor<T>& gm = m.node()->ensure_grad();
            gm.at(f, t) += gr * yv.at(f, t) + gi * yv.at(F + f, t);
            gm.at(F + f, t) += -gr * yv.at(F + f, t) + gi * yv.at(f, t);
          }
          if (y.node()->requires_grad) {
            Tensor<T>& gy = y.node()->ensure_grad();
            gy.at(f, t) += gr * mv.at(f, t) + gi * mv.at(F + f, t);
            gy.at(F + f, t) += -gr * mv.at(F + f, t) + gi * mv.at(f, t);
          }
        }
    };
  });
}

// Differentiable magnitude expansion |X|^(1/beta) on a compressed (2F, T)
// spectrum, epsilon-stabilised at zero magnitude.
template <class T>
Var<T> drc_expand_graph(const Var<T>& s, double beta, T eps = T(1e-12)) {
  const std::size_t F = s.val().dim(0) / 2, Tn = s.val().dim(1);
  const T p = static_cast<T>(1.0 / beta - 1.0);
  Tensor<T> v(s.val().shape());
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < Tn; ++t) {
      const T re = s.val().at(f, t), im = s.val().at(F + f, t);
      const T q = std::pow(re * re + im * im + eps, p / T(2));
      v.at(f, t) = re * q;
      v.at(F + f, t) = im * q;
    }
  return make_op<T>(std::move(v), {s}, [s, F, Tn, p, eps](Node<T>* self) {
    return [self, s, F, Tn, p, eps]() {
      Tensor<T>& gs = s.node()->ensure_grad();
      const Tensor<T>& sv = s.node()->value;
      const Tensor<T>& g = self->grad;
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t t = 0; t < Tn; ++t) {
          const T re = sv.at(f, t), im = sv.at(F + f, t);
          const T m2 = re * re + im * im + eps;
          const T q = std::pow(m2, p / T(2));
          const T u = p * std::pow(m2, p / T(2) - T(1));
          const T gr = g.at(f, t), gi = g.at(F + f, t);
          gs.at(f, t) += gr * (q + u * re * re) + gi * (u * re * im);
          gs.at(F + f, t) += gr * (u * re * im) + gi * (q + u * im * im);
        }
    };
  });
}

// Differentiable iSTFT of an uncompressed (2F, T) spectrum; the backward pass
// is the exact adjoint (forward DFT of the windowed, OLA-normalised output
// gradient).
template <class T>
Var<T> istft_graph(const Var<T>& spec, std::size_t fft_size, std::size_t hop,
                   std::size_t length) {
  const std::size_t n_bins = fft_size / 2 + 1;
  if (spec.val().rank() != 2 || spec.val().dim(0) != 2 * n_bins)
    throw ShapeError("istft_graph: spec rows do not match fft size");
  const std::size_t n_frames = spec.val().dim(1);
  const std::size_t pad = fft_size / 2;
  const std::size_t L = length > 0 ? length : (n_frames - 1) * hop;
  const std::vector<T> window = hann_periodic<T>(fft_size);

  std::vector<double> ola(pad + (n_frames - 1) * hop + fft_size, 0.0);
  std::vector<double> wsum(ola.size(), 0.0);
  {
    std::vector<std::complex<T>> buf(fft_size);
    for (std::size_t t = 0; t < n_frames; ++t) {
      for (std::size_t f = 0; f < n_bins; ++f)
        buf[f] = std::complex<T>(spec.val().at(f, t), spec.val().at(n_bins + f, t));
      for (std::size_t f = n_bins; f < fft_size; ++f) buf[f] = std::conj(buf[fft_size - f]);
      fft_inplace(buf, true);
      const std::size_t base = t * hop;
      for (std::size_t i = 0; i < fft_size; ++i) {
        ola[base + i] += static_cast<double>(buf[i].real() * window[i]);
        wsum[base + i] += static_cast<double>(window[i]) * static_cast<double>(window[i]);
      }
    }
  }
  Tensor<T> v({L});
  for (std::size_t n = 0; n < L; ++n) {
    const double den = wsum[pad + n];
    v[n] = den > 1e-12 ? static_cast<T>(ola[pad + n] / den) : T(0);
  }

  auto wsum_shared = std::make_shared<std::vector<double>>(std::move(wsum));
  return make_op<T>(std::move(v), {spec},
                    [spec, fft_size, hop, n_bins, n_frames, pad, L, window,
                     wsum_shared](Node<T>* self) {
    return [self, spec, fft_size, hop, n_bins, n_frames, pad, L, window, wsum_shared]() {
      Tensor<T>& gs = spec.node()->ensure_grad();
      const Tensor<T>& g = self->grad;
      std::vector<double> gpad(pad + (n_frames - 1) * hop + fft_size, 0.0);
      for (std::size_t n = 0; n < L; ++n) {
        const double den = (*wsum_shared)[pad + n];
        if (den > 1e-12) gpad[pad + n] = static_cast<double>(g[n]) / den;
      }
      std::vector<std::complex<T>> buf(fft_size);
      const T inv_n = T(1) / static_cast<T>(fft_size);
      for (std::size_t t = 0; t < n_frames; ++t) {
        const std::size_t base = t * hop;
        for (std::size_t i = 0; i < fft_size; ++i)
          buf[i] = std::complex<T>(static_cast<T>(gpad[base + i]) * window[i], T(0));
        fft_inplace(buf, false);
        for (std::size_t f = 0; f < n_bins; ++f) {
          const T s = (f == 0 || f == n_bins - 1) ? inv_n : T(2) * inv_n;
          gs.at(f, t) += s * buf[f].real();
          if (f != 0 && f != n_bins - 1) gs.at(n_bins + f, t) += s * buf[f].imag();
        }
      }
    };
  });
}

}  // namespace lgtse::ad
