#pragma once

// Forward and backward rules for every primitive. Reductions accumulate in
// double regardless of T so that padding and permutation properties hold to
// tight tolerances in 32-bit mode, and accumulation order is fixed for
// reproducibility.

#include <algorithm>
#include <cmath>

#include "mf/tensor.hpp"

namespace mf {

namespace detail {

// C (n x m) = A (n x k) @ B (k x m), double accumulation, fixed order.
template <typename T>
void mm_nn(const T* a, const T* b, T* c, int n, int k, int m,
           std::vector<double>& acc) {
  acc.assign(static_cast<size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i) {
    double* crow = acc.data() + static_cast<size_t>(i) * m;
    const T* arow = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      double av = static_cast<double>(arow[p]);
      const T* brow = b + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * static_cast<double>(brow[j]);
    }
  }
  for (size_t i = 0; i < acc.size(); ++i) c[i] = static_cast<T>(acc[i]);
}

// Four-lane dot product in double; the fixed lane split keeps accumulation
// order reproducible while letting the compiler vectorize.
template <typename T>
double dot_lanes(const T* x, const T* y, int k) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int p = 0;
  for (; p + 4 <= k; p += 4) {
    s0 += static_cast<double>(x[p]) * static_cast<double>(y[p]);
    s1 += static_cast<double>(x[p + 1]) * static_cast<double>(y[p + 1]);
    s2 += static_cast<double>(x[p + 2]) * static_cast<double>(y[p + 2]);
    s3 += static_cast<double>(x[p + 3]) * static_cast<double>(y[p + 3]);
  }
  for (; p < k; ++p)
    s0 += static_cast<double>(x[p]) * static_cast<double>(y[p]);
  return (s0 + s1) + (s2 + s3);
}

// C (n x m) = A (n x k) @ B^T, B stored (m x k).
template <typename T>
void mm_nt(const T* a, const T* b, T* c, int n, int k, int m,
           std::vector<double>& acc) {
  (void)acc;
  for (int i = 0; i < n; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    T* crow = c + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j)
      crow[j] = static_cast<T>(dot_lanes(arow, b + static_cast<size_t>(j) * k, k));
  }
}

// C (k x m) += A^T (n x k) @ B (n x m), accumulated into existing buffer.
template <typename T>
void mm_tn_accum(const T* a, const T* b, T* c, int n, int k, int m,
                 std::vector<double>& acc) {
  acc.assign(static_cast<size_t>(k) * m, 0.0);
  for (int i = 0; i < n; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    const T* brow = b + static_cast<size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      double av = static_cast<double>(arow[p]);
      double* crow = acc.data() + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * static_cast<double>(brow[j]);
    }
  }
  for (size_t i = 0; i < acc.size(); ++i) c[i] += static_cast<T>(acc[i]);
}

// C (n x m) += A (n x k) @ B (k x m)
template <typename T>
void mm_nn_accum(const T* a, const T* b, T* c, int n, int k, int m,
                 std::vector<double>& acc) {
  acc.assign(static_cast<size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i) {
    double* crow = acc.data() + static_cast<size_t>(i) * m;
    const T* arow = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      double av = static_cast<double>(arow[p]);
      const T* brow = b + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * static_cast<double>(brow[j]);
    }
  }
  for (size_t i = 0; i < acc.size(); ++i) c[i] += static_cast<T>(acc[i]);
}

// C (n x m) += A (n x k) @ B^T with B stored (m x k)
template <typename T>
void mm_nt_accum(const T* a, const T* b, T* c, int n, int k, int m,
                 std::vector<double>& acc) {
  (void)acc;
  for (int i = 0; i < n; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    T* crow = c + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j)
      crow[j] += static_cast<T>(
          dot_lanes(arow, b + static_cast<size_t>(j) * k, k));
  }
}

inline bool same_shape(const std::vector<int>& a, const std::vector<int>& b) {
  return a == b;
}

}  // namespace detail

template <typename T>
Tensor<T> Tape<T>::matmul(const Tensor<T>& a, const Tensor<T>& b,
                          bool transpose_b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  MF_CHECK(as.size() >= 2 && bs.size() >= 2 && bs.size() <= as.size(),
        "matmul: unsupported ranks ", shape_str(as), " x ", shape_str(bs));
  int batch = as.size() == 3 ? as[0] : 1;
  int n = as[as.size() == 3 ? 1 : 0];
  int k = as.back();
  int bk = transpose_b ? bs.back() : bs[bs.size() == 3 ? 1 : 0];
  int m = transpose_b ? bs[bs.size() == 3 ? 1 : 0] : bs.back();
  MF_CHECK(k == bk, "matmul: inner dims differ, ", shape_str(as), " x ",
        shape_str(bs), (transpose_b ? " (b transposed)" : ""));
  bool b_batched = bs.size() == 3;
  if (b_batched)
    MF_CHECK(bs[0] == batch, "matmul: batch dims differ, ", shape_str(as), " x ",
          shape_str(bs));

  std::vector<int> out_shape =
      as.size() == 3 ? std::vector<int>{batch, n, m} : std::vector<int>{n, m};
  auto out = make_op(out_shape, {a.node(), b.node()},
                     [a = a.node(), b = b.node(), transpose_b, batch, n, k, m,
                      b_batched](Node<T>& o) {
                       std::vector<double> acc;
                       size_t a_stride = static_cast<size_t>(n) * k;
                       size_t b_stride =
                           b_batched ? static_cast<size_t>(k) * m : 0;
                       size_t o_stride = static_cast<size_t>(n) * m;
                       for (int bi = 0; bi < batch; ++bi) {
                         const T* go = o.grad.data() + bi * o_stride;
                         const T* av = a->value.data() + bi * a_stride;
                         const T* bv = b->value.data() + bi * b_stride;
                         if (a->requires_grad) {
                           T* ga = a->grad.data() + bi * a_stride;
                           if (!transpose_b)  // dA = dC @ B^T
                             detail::mm_nt_accum(go, bv, ga, n, m, k, acc);
                           else  // dA = dC @ B
                             detail::mm_nn_accum(go, bv, ga, n, m, k, acc);
                         }
                         if (b->requires_grad) {
                           T* gb = b->grad.data() + bi * b_stride;
                           if (!transpose_b)  // dB = A^T @ dC
                             detail::mm_tn_accum(av, go, gb, n, k, m, acc);
                           else  // dB = dC^T @ A
                             detail::mm_tn_accum(go, av, gb, n, m, k, acc);
                         }
                       }
                     });
  std::vector<double> acc;
  size_t a_stride = static_cast<size_t>(n) * k;
  size_t b_stride = b_batched ? static_cast<size_t>(k) * m : 0;
  size_t o_stride = static_cast<size_t>(n) * m;
  for (int bi = 0; bi < batch; ++bi) {
    const T* av = a.value().data() + bi * a_stride;
    const T* bv = b.value().data() + bi * b_stride;
    T* ov = out.value().data() + bi * o_stride;
    if (!transpose_b)
      detail::mm_nn(av, bv, ov, n, k, m, acc);
    else
      detail::mm_nt(av, bv, ov, n, k, m, acc);
  }
  MF_FINITE_CHECK(*out.raw(), "matmul");
  return out;
}

template <typename T>
Tensor<T> Tape<T>::add(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  size_t n = a.numel();
  bool scalar_b = b.numel() == 1;
  bool bias_b = !scalar_b && bs.size() == 1 && bs[0] == as.back();
  MF_CHECK(detail::same_shape(as, bs) || scalar_b || bias_b,
        "add: incompatible shapes ", shape_str(as), " + ", shape_str(bs));
  auto out = make_op(
      as, {a.node(), b.node()},
      [a = a.node(), b = b.node(), n, scalar_b, bias_b](Node<T>& o) {
        if (a->requires_grad)
          for (size_t i = 0; i < n; ++i) a->grad[i] += o.grad[i];
        if (b->requires_grad) {
          if (scalar_b) {
            double s = 0.0;
            for (size_t i = 0; i < n; ++i) s += static_cast<double>(o.grad[i]);
            b->grad[0] += static_cast<T>(s);
          } else if (bias_b) {
            int m = b->shape[0];
            for (int j = 0; j < m; ++j) {
              double s = 0.0;
              for (size_t i = j; i < n; i += m)
                s += static_cast<double>(o.grad[i]);
              b->grad[j] += static_cast<T>(s);
            }
          } else {
            for (size_t i = 0; i < n; ++i) b->grad[i] += o.grad[i];
          }
        }
      });
  const T* av = a.value().data();
  const T* bv = b.value().data();
  T* ov = out.value().data();
  if (scalar_b) {
    for (size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[0];
  } else if (bias_b) {
    int m = bs[0];
    for (size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i % m];
  } else {
    for (size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
  }
  MF_FINITE_CHECK(*out.raw(), "add");
  return out;
}

template <typename T>
Tensor<T> Tape<T>::sub(const Tensor<T>& a, const Tensor<T>& b) {
  MF_CHECK(detail::same_shape(a.shape(), b.shape()), "sub: shapes differ ",
        shape_str(a.shape()), " - ", shape_str(b.shape()));
  size_t n = a.numel();
  auto out =
      make_op(a.shape(), {a.node(), b.node()}, [a = a.node(), b = b.node(),
                                                n](Node<T>& o) {
        if (a->requires_grad)
          for (size_t i = 0; i < n; ++i) a->grad[i] += o.grad[i];
        if (b->requires_grad)
          for (size_t i = 0; i < n; ++i) b->grad[i] -= o.grad[i];
      });
  for (size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] - b.value()[i];
  MF_FINITE_CHECK(*out.raw(), "sub");
  return out;
}

template <typename T>
Tensor<T> Tape<T>::mul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  size_t n = a.numel();
  bool scalar_b = b.numel() == 1;
  bool bias_b = !scalar_b && bs.size() == 1 && bs[0] == as.back();
  MF_CHECK(detail::same_shape(as, bs) || scalar_b || bias_b,
        "mul: incompatible shapes ", shape_str(as), " * ", shape_str(bs));
  auto out = make_op(
      as, {a.node(), b.node()},
      [a = a.node(), b = b.node(), n, scalar_b, bias_b](Node<T>& o) {
        int m = bias_b ? b->shape[0] : 0;
        if (a->requires_grad) {
          for (size_t i = 0; i < n; ++i) {
            T bv = scalar_b ? b->value[0] : (bias_b ? b->value[i % m]
                                                    : b->value[i]);
            a->grad[i] += o.grad[i] * bv;
          }
        }
        if (b->requires_grad) {
          if (scalar_b) {
            double s = 0.0;
            for (size_t i = 0; i < n; ++i)
              s += static_cast<double>(o.grad[i]) *
                   static_cast<double>(a->value[i]);
            b->grad[0] += static_cast<T>(s);
          } else if (bias_b) {
            for (int j = 0; j < m; ++j) {
              double s = 0.0;
              for (size_t i = j; i < n; i += static_cast<size_t>(m))
                s += static_cast<double>(o.grad[i]) *
                     static_cast<double>(a->value[i]);
              b->grad[j] += static_cast<T>(s);
            }
          } else {
            for (size_t i = 0; i < n; ++i) b->grad[i] += o.grad[i] * a->value[i];
          }
        }
      });
  const T* av = a.value().data();
  const T* bv = b.value().data();
  T* ov = out.value().data();
  if (scalar_b) {
    for (size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[0];
  } else if (bias_b) {
    int m = bs[0];
    for (size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i % m];
  } else {
    for (size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
  }
  MF_FINITE_CHECK(*out.raw(), "mul");
  return out;
}

template <typename T>
Tensor<T> Tape<T>::scale(const Tensor<T>& a, T c) {
  size_t n = a.numel();
  auto out = make_op(a.shape(), {a.node()}, [a = a.node(), c, n](Node<T>& o) {
    if (a->requires_grad)
      for (size_t i = 0; i < n; ++i) a->grad[i] += o.grad[i] * c;
  });
  for (size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] * c;
  MF_FINITE_CHECK(*out.raw(), "scale");
  return out;
}

template <typename T>
Tensor<T> Tape<T>::relu(const Tensor<T>& a) {
  size_t n = a.numel();
  auto out = make_op(a.shape(), {a.node()}, [a = a.node(), n](Node<T>& o) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < n; ++i)
      if (a->value[i] > T(0)) a->grad[i] += o.grad[i];
  });
  for (size_t i = 0; i < n; ++i)
    out.value()[i] = a.value()[i] > T(0) ? a.value()[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> Tape<T>::sigmoid(const Tensor<T>& a) {
  size_t n = a.numel();
  auto out = make_op(a.shape(), {a.node()}, [a = a.node(), n](Node<T>& o) {
    if (!a->requires_grad) return;
    // derivative from the input in double: y*(1-y) on a saturated float32
    // output underflows to an exact zero and freezes training
    for (size_t i = 0; i < n; ++i) {
      double x = static_cast<double>(a->value[i]);
      double e = std::exp(-std::abs(x));
      double d = e / ((1.0 + e) * (1.0 + e));
      a->grad[i] += static_cast<T>(static_cast<double>(o.grad[i]) * d);
    }
  });
  for (size_t i = 0; i < n; ++i) {
    double x = static_cast<double>(a.value()[i]);
    out.value()[i] = static_cast<T>(1.0 / (1.0 + std::exp(-x)));
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::exp(const Tensor<T>& a) {
  size_t n = a.numel();
  auto out = make_op(a.shape(), {a.node()}, [a = a.node(), n](Node<T>& o) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < n; ++i) a->grad[i] += o.grad[i] * o.value[i];
  });
  for (size_t i = 0; i < n; ++i)
    out.value()[i] = static_cast<T>(std::exp(static_cast<double>(a.value()[i])));
  return out;
}

template <typename T>
Tensor<T> Tape<T>::log(const Tensor<T>& a) {
  size_t n = a.numel();
  auto out = make_op(a.shape(), {a.node()}, [a = a.node(), n](Node<T>& o) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < n; ++i) a->grad[i] += o.grad[i] / a->value[i];
  });
  for (size_t i = 0; i < n; ++i)
    out.value()[i] = static_cast<T>(std::log(static_cast<double>(a.value()[i])));
  return out;
}

template <typename T>
Tensor<T> Tape<T>::clamp(const Tensor<T>& a, T lo, T hi) {
  size_t n = a.numel();
  auto out =
      make_op(a.shape(), {a.node()}, [a = a.node(), lo, hi, n](Node<T>& o) {
        if (!a->requires_grad) return;
        for (size_t i = 0; i < n; ++i)
          if (a->value[i] > lo && a->value[i] < hi) a->grad[i] += o.grad[i];
      });
  for (size_t i = 0; i < n; ++i)
    out.value()[i] = std::min(hi, std::max(lo, a.value()[i]));
  return out;
}

template <typename T>
Tensor<T> Tape<T>::elem_min(const Tensor<T>& a, const Tensor<T>& b) {
  MF_CHECK(detail::same_shape(a.shape(), b.shape()), "elem_min: shapes differ ",
        shape_str(a.shape()), " vs ", shape_str(b.shape()));
  size_t n = a.numel();
  auto out = make_op(a.shape(), {a.node(), b.node()},
                     [a = a.node(), b = b.node(), n](Node<T>& o) {
                       // ties route to a
                       for (size_t i = 0; i < n; ++i) {
                         if (a->value[i] <= b->value[i]) {
                           if (a->requires_grad) a->grad[i] += o.grad[i];
                         } else if (b->requires_grad) {
                           b->grad[i] += o.grad[i];
                         }
                       }
                     });
  for (size_t i = 0; i < n; ++i)
    out.value()[i] = std::min(a.value()[i], b.value()[i]);
  return out;
}

template <typename T>
Tensor<T> Tape<T>::softmax(const Tensor<T>& a) {
  size_t rows = a.raw()->rows();
  int m = a.raw()->last_dim();
  auto out = make_op(a.shape(), {a.node()}, [a = a.node(), rows, m](Node<T>& o) {
    if (!a->requires_grad) return;
    for (size_t r = 0; r < rows; ++r) {
      const T* y = o.value.data() + r * m;
      const T* g = o.grad.data() + r * m;
      double dot = 0.0;
      for (int j = 0; j < m; ++j)
        dot += static_cast<double>(g[j]) * static_cast<double>(y[j]);
      T* ga = a->grad.data() + r * m;
      for (int j = 0; j < m; ++j)
        ga[j] += static_cast<T>(static_cast<double>(y[j]) *
                                (static_cast<double>(g[j]) - dot));
    }
  });
  for (size_t r = 0; r < rows; ++r) {
    const T* x = a.value().data() + r * m;
    T* y = out.value().data() + r * m;
    double mx = static_cast<double>(x[0]);
    for (int j = 1; j < m; ++j) mx = std::max(mx, static_cast<double>(x[j]));
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      double e = std::exp(static_cast<double>(x[j]) - mx);
      y[j] = static_cast<T>(e);
      sum += e;
    }
    for (int j = 0; j < m; ++j)
      y[j] = static_cast<T>(static_cast<double>(y[j]) / sum);
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::log_softmax(const Tensor<T>& a) {
  size_t rows = a.raw()->rows();
  int m = a.raw()->last_dim();
  auto out = make_op(a.shape(), {a.node()}, [a = a.node(), rows, m](Node<T>& o) {
    if (!a->requires_grad) return;
    for (size_t r = 0; r < rows; ++r) {
      const T* y = o.value.data() + r * m;  // log softmax values
      const T* g = o.grad.data() + r * m;
      double gsum = 0.0;
      for (int j = 0; j < m; ++j) gsum += static_cast<double>(g[j]);
      T* ga = a->grad.data() + r * m;
      for (int j = 0; j < m; ++j)
        ga[j] += static_cast<T>(static_cast<double>(g[j]) -
                                std::exp(static_cast<double>(y[j])) * gsum);
    }
  });
  for (size_t r = 0; r < rows; ++r) {
    const T* x = a.value().data() + r * m;
    T* y = out.value().data() + r * m;
    double mx = static_cast<double>(x[0]);
    for (int j = 1; j < m; ++j) mx = std::max(mx, static_cast<double>(x[j]));
    double sum = 0.0;
    for (int j = 0; j < m; ++j) sum += std::exp(static_cast<double>(x[j]) - mx);
    double lse = mx + std::log(sum);
    for (int j = 0; j < m; ++j)
      y[j] = static_cast<T>(static_cast<double>(x[j]) - lse);
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::layer_norm(const Tensor<T>& a, T eps) {
  size_t rows = a.raw()->rows();
  int m = a.raw()->last_dim();
  auto out =
      make_op(a.shape(), {a.node()}, [a = a.node(), rows, m, eps](Node<T>& o) {
        if (!a->requires_grad) return;
        for (size_t r = 0; r < rows; ++r) {
          const T* x = a->value.data() + r * m;
          const T* y = o.value.data() + r * m;
          const T* g = o.grad.data() + r * m;
          double mean = 0.0;
          for (int j = 0; j < m; ++j) mean += static_cast<double>(x[j]);
          mean /= m;
          double var = 0.0;
          for (int j = 0; j < m; ++j) {
            double d = static_cast<double>(x[j]) - mean;
            var += d * d;
          }
          var /= m;
          double inv_std = 1.0 / std::sqrt(var + static_cast<double>(eps));
          double gmean = 0.0, gymean = 0.0;
          for (int j = 0; j < m; ++j) {
            gmean += static_cast<double>(g[j]);
            gymean += static_cast<double>(g[j]) * static_cast<double>(y[j]);
          }
          gmean /= m;
          gymean /= m;
          T* ga = a->grad.data() + r * m;
          for (int j = 0; j < m; ++j)
            ga[j] += static_cast<T>(
                inv_std * (static_cast<double>(g[j]) - gmean -
                           static_cast<double>(y[j]) * gymean));
        }
      });
  for (size_t r = 0; r < rows; ++r) {
    const T* x = a.value().data() + r * m;
    T* y = out.value().data() + r * m;
    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += static_cast<double>(x[j]);
    mean /= m;
    double var = 0.0;
    for (int j = 0; j < m; ++j) {
      double d = static_cast<double>(x[j]) - mean;
      var += d * d;
    }
    var /= m;
    double inv_std = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (int j = 0; j < m; ++j)
      y[j] = static_cast<T>((static_cast<double>(x[j]) - mean) * inv_std);
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::masked_fill(const Tensor<T>& a,
                               const std::vector<uint8_t>& keep, T fill_value) {
  size_t n = a.numel();
  MF_CHECK(keep.size() == n, "masked_fill: mask size ", keep.size(),
        " != tensor numel ", n);
  auto out =
      make_op(a.shape(), {a.node()}, [a = a.node(), keep, n](Node<T>& o) {
        // masked positions are constants; no gradient flows
        if (!a->requires_grad) return;
        for (size_t i = 0; i < n; ++i)
          if (keep[i]) a->grad[i] += o.grad[i];
      });
  for (size_t i = 0; i < n; ++i)
    out.value()[i] = keep[i] ? a.value()[i] : fill_value;
  return out;
}

template <typename T>
Tensor<T> Tape<T>::slice_last(const Tensor<T>& a, int start, int len) {
  int m = a.raw()->last_dim();
  MF_CHECK(start >= 0 && len > 0 && start + len <= m, "slice_last: range [",
        start, ",", start + len, ") out of last dim ", m);
  size_t rows = a.raw()->rows();
  std::vector<int> shape = a.shape();
  shape.back() = len;
  auto out = make_op(shape, {a.node()},
                     [a = a.node(), rows, m, start, len](Node<T>& o) {
                       if (!a->requires_grad) return;
                       for (size_t r = 0; r < rows; ++r)
                         for (int j = 0; j < len; ++j)
                           a->grad[r * m + start + j] += o.grad[r * len + j];
                     });
  for (size_t r = 0; r < rows; ++r)
    for (int j = 0; j < len; ++j)
      out.value()[r * len + j] = a.value()[r * m + start + j];
  return out;
}

template <typename T>
Tensor<T> Tape<T>::concat_last(const std::vector<Tensor<T>>& parts) {
  MF_CHECK(!parts.empty(), "concat_last: no parts");
  std::vector<int> shape = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    auto s = p.shape();
    s.back() = 0;
    auto s0 = shape;
    s0.back() = 0;
    MF_CHECK(s == s0, "concat_last: leading dims differ ", shape_str(p.shape()),
          " vs ", shape_str(shape));
    total += p.shape().back();
  }
  shape.back() = total;
  size_t rows = parts[0].raw()->rows();
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& p : parts) parents.push_back(p.node());
  auto out = make_op(shape, parents, [parents, rows, total](Node<T>& o) {
    int off = 0;
    for (auto& p : parents) {
      int m = p->shape.back();
      if (p->requires_grad)
        for (size_t r = 0; r < rows; ++r)
          for (int j = 0; j < m; ++j)
            p->grad[r * m + j] += o.grad[r * total + off + j];
      off += m;
    }
  });
  int off = 0;
  for (const auto& p : parts) {
    int m = p.shape().back();
    for (size_t r = 0; r < rows; ++r)
      for (int j = 0; j < m; ++j)
        out.value()[r * total + off + j] = p.value()[r * m + j];
    off += m;
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::reshape(const Tensor<T>& a, std::vector<int> new_shape) {
  size_t n = 1;
  for (int d : new_shape) n *= static_cast<size_t>(d);
  MF_CHECK(n == a.numel(), "reshape: numel mismatch ", shape_str(a.shape()),
        " -> ", shape_str(new_shape));
  auto out = make_op(new_shape, {a.node()}, [a = a.node(), n](Node<T>& o) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < n; ++i) a->grad[i] += o.grad[i];
  });
  out.value() = a.value();
  return out;
}

template <typename T>
Tensor<T> Tape<T>::gather_sum_rows(const Tensor<T>& table,
                                   const std::vector<std::vector<int>>& groups) {
  MF_CHECK(table.shape().size() == 2, "gather_sum_rows: table must be rank 2");
  int v = table.shape()[0];
  int d = table.shape()[1];
  int r = static_cast<int>(groups.size());
  for (const auto& g : groups)
    for (int idx : g)
      MF_CHECK(idx >= 0 && idx < v, "gather_sum_rows: row ", idx,
            " out of table range ", v);
  auto out = make_op({r, d}, {table.node()},
                     [t = table.node(), groups, d, r](Node<T>& o) {
                       if (!t->requires_grad) return;
                       for (int i = 0; i < r; ++i)
                         for (int idx : groups[static_cast<size_t>(i)])
                           for (int j = 0; j < d; ++j)
                             t->grad[idx * d + j] += o.grad[i * d + j];
                     });
  for (int i = 0; i < r; ++i) {
    T* row = out.value().data() + static_cast<size_t>(i) * d;
    for (int idx : groups[static_cast<size_t>(i)]) {
      const T* src = table.value().data() + static_cast<size_t>(idx) * d;
      for (int j = 0; j < d; ++j) row[j] += src[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::masked_sum_last(const Tensor<T>& a,
                                   const std::vector<uint8_t>& keep) {
  size_t n = a.numel();
  MF_CHECK(keep.size() == n, "masked_sum_last: mask size mismatch");
  size_t rows = a.raw()->rows();
  int m = a.raw()->last_dim();
  std::vector<int> shape(a.shape().begin(), a.shape().end() - 1);
  if (shape.empty()) shape = {1};
  auto out =
      make_op(shape, {a.node()}, [a = a.node(), keep, rows, m](Node<T>& o) {
        if (!a->requires_grad) return;
        for (size_t r = 0; r < rows; ++r)
          for (int j = 0; j < m; ++j)
            if (keep[r * m + j]) a->grad[r * m + j] += o.grad[r];
      });
  for (size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int j = 0; j < m; ++j)
      if (keep[r * m + j]) s += static_cast<double>(a.value()[r * m + j]);
    out.value()[r] = static_cast<T>(s);
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::mean_all(const Tensor<T>& a) {
  size_t n = a.numel();
  auto out = make_op({1}, {a.node()}, [a = a.node(), n](Node<T>& o) {
    if (!a->requires_grad) return;
    T g = o.grad[0] / static_cast<T>(n);
    for (size_t i = 0; i < n; ++i) a->grad[i] += g;
  });
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += static_cast<double>(a.value()[i]);
  out.value()[0] = static_cast<T>(s / static_cast<double>(n));
  return out;
}

template <typename T>
Tensor<T> Tape<T>::sum_all(const Tensor<T>& a) {
  size_t n = a.numel();
  auto out = make_op({1}, {a.node()}, [a = a.node(), n](Node<T>& o) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < n; ++i) a->grad[i] += o.grad[0];
  });
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += static_cast<double>(a.value()[i]);
  out.value()[0] = static_cast<T>(s);
  return out;
}

template <typename T>
Tensor<T> Tape<T>::mse(const Tensor<T>& a, const Tensor<T>& b) {
  MF_CHECK(detail::same_shape(a.shape(), b.shape()), "mse: shapes differ ",
        shape_str(a.shape()), " vs ", shape_str(b.shape()));
  size_t n = a.numel();
  auto out = make_op({1}, {a.node(), b.node()},
                     [a = a.node(), b = b.node(), n](Node<T>& o) {
                       T g = o.grad[0] * T(2) / static_cast<T>(n);
                       for (size_t i = 0; i < n; ++i) {
                         T d = a->value[i] - b->value[i];
                         if (a->requires_grad) a->grad[i] += g * d;
                         if (b->requires_grad) b->grad[i] -= g * d;
                       }
                     });
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = static_cast<double>(a.value()[i]) -
               static_cast<double>(b.value()[i]);
    s += d * d;
  }
  out.value()[0] = static_cast<T>(s / static_cast<double>(n));
  return out;
}

template <typename T>
Tensor<T> Tape<T>::mse_masked(const Tensor<T>& a, const Tensor<T>& b,
                              const std::vector<uint8_t>& keep) {
  MF_CHECK(detail::same_shape(a.shape(), b.shape()), "mse_masked: shapes differ ",
        shape_str(a.shape()), " vs ", shape_str(b.shape()));
  size_t n = a.numel();
  MF_CHECK(keep.size() == n, "mse_masked: mask size mismatch");
  size_t count = 0;
  for (uint8_t k : keep) count += k ? 1 : 0;
  MF_CHECK(count > 0, "mse_masked: empty mask");
  auto out = make_op({1}, {a.node(), b.node()},
                     [a = a.node(), b = b.node(), keep, n, count](Node<T>& o) {
                       T g = o.grad[0] * T(2) / static_cast<T>(count);
                       for (size_t i = 0; i < n; ++i) {
                         if (!keep[i]) continue;
                         T d = a->value[i] - b->value[i];
                         if (a->requires_grad) a->grad[i] += g * d;
                         if (b->requires_grad) b->grad[i] -= g * d;
                       }
                     });
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    double d = static_cast<double>(a.value()[i]) -
               static_cast<double>(b.value()[i]);
    s += d * d;
  }
  out.value()[0] = static_cast<T>(s / static_cast<double>(count));
  return out;
}

template <typename T>
Tensor<T> Tape<T>::gaussian_log_prob(const Tensor<T>& mean,
                                     const Tensor<T>& log_sigma,
                                     const Tensor<T>& x,
                                     const std::vector<uint8_t>& keep) {
  MF_CHECK(detail::same_shape(mean.shape(), log_sigma.shape()) &&
            detail::same_shape(mean.shape(), x.shape()),
        "gaussian_log_prob: shapes differ ", shape_str(mean.shape()), " / ",
        shape_str(log_sigma.shape()), " / ", shape_str(x.shape()));
  MF_CHECK(mean.shape().size() == 2, "gaussian_log_prob: expects rank-2 inputs");
  int rows = mean.shape()[0];
  int m = mean.shape()[1];
  MF_CHECK(keep.size() == mean.numel(), "gaussian_log_prob: mask size mismatch");
  constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
  auto out = make_op(
      {rows}, {mean.node(), log_sigma.node(), x.node()},
      [mu = mean.node(), ls = log_sigma.node(), xs = x.node(), keep, rows,
       m](Node<T>& o) {
        for (int r = 0; r < rows; ++r) {
          T g = o.grad[r];
          for (int j = 0; j < m; ++j) {
            size_t i = static_cast<size_t>(r) * m + j;
            if (!keep[i]) continue;
            double inv_var =
                std::exp(-2.0 * static_cast<double>(ls->value[i]));
            double d = static_cast<double>(xs->value[i]) -
                       static_cast<double>(mu->value[i]);
            if (mu->requires_grad)
              mu->grad[i] += static_cast<T>(static_cast<double>(g) * d * inv_var);
            if (ls->requires_grad)
              ls->grad[i] +=
                  static_cast<T>(static_cast<double>(g) * (d * d * inv_var - 1.0));
            if (xs->requires_grad)
              xs->grad[i] -= static_cast<T>(static_cast<double>(g) * d * inv_var);
          }
        }
      });
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
      size_t i = static_cast<size_t>(r) * m + j;
      if (!keep[i]) continue;
      double lsv = static_cast<double>(log_sigma.value()[i]);
      double d = static_cast<double>(x.value()[i]) -
                 static_cast<double>(mean.value()[i]);
      s += -0.5 * kLog2Pi - lsv - 0.5 * d * d * std::exp(-2.0 * lsv);
    }
    out.value()[r] = static_cast<T>(s);
  }
  return out;
}

}  // namespace mf
