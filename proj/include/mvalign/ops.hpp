#pragma once

// Differentiable primitives. Reductions accumulate in double regardless of the
// storage type, and every loop runs in a fixed order so results are
// bit-reproducible.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mvalign/tensor.hpp"

namespace mvalign {

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

template <class T>
inline T* grad_of(TensorNode<T>* n) {
  return n->requires_grad ? n->grad.data() : nullptr;
}

}  // namespace detail

/// C = A·B for A[m×k], B[k×n].
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                  "matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto A = a.data();
  const auto B = b.data();
  std::vector<T> c(m * n);
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const T* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = static_cast<T>(acc[j]);
  }
  return detail::finish_op<T>("matmul", Shape{m, n}, std::move(c), {a.node(), b.node()},
                              [an = a.node().get(), bn = b.node().get(), m, k, n](detail::TensorNode<T>* out) {
                                return [an, bn, out, m, k, n] {
                                  const T* G = out->grad.data();
                                  if (T* gA = detail::grad_of(an)) {
                                    // dA = dC·Bᵀ
                                    for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t p = 0; p < k; ++p) {
                                        double s = 0.0;
                                        for (std::size_t j = 0; j < n; ++j)
                                          s += static_cast<double>(G[i * n + j]) * bn->data[p * n + j];
                                        gA[i * k + p] += static_cast<T>(s);
                                      }
                                    }
                                  }
                                  if (T* gB = detail::grad_of(bn)) {
                                    // dB = Aᵀ·dC
                                    std::vector<double> acc(k * n, 0.0);
                                    for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t p = 0; p < k; ++p) {
                                        const double aip = an->data[i * k + p];
                                        for (std::size_t j = 0; j < n; ++j) acc[p * n + j] += aip * G[i * n + j];
                                      }
                                    }
                                    for (std::size_t q = 0; q < k * n; ++q) gB[q] += static_cast<T>(acc[q]);
                                  }
                                };
                              });
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  detail::require(a.rank() == 2, "transpose: expected a matrix, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  const auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return detail::finish_op<T>("transpose", Shape{n, m}, std::move(out), {a.node()},
                              [an = a.node().get(), m, n](detail::TensorNode<T>* o) {
                                return [an, o, m, n] {
                                  for (std::size_t i = 0; i < m; ++i)
                                    for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += o->grad[j * m + i];
                                };
                              });
}

/// y = x·Wᵀ (+ b) for x[n×in], W[out×in], b[out]. The affine map applied row by row.
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* b = nullptr) {
  detail::require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1),
                  "linear: input " + shape_str(x.shape()) + " does not fit weight " + shape_str(w.shape()));
  const std::size_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (b != nullptr) {
    detail::require(b->rank() == 1 && b->dim(0) == out,
                    "linear: bias " + shape_str(b->shape()) + " does not fit weight " + shape_str(w.shape()));
  }
  const auto X = x.data();
  // Transposed double copy of W keeps the inner loop over outputs contiguous; each output
  // still sums bias + x[0]·w[0] + x[1]·w[1] + ... in input order.
  std::vector<double> wt(in * out);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t c = 0; c < in; ++c) wt[c * out + o] = w.data()[o * in + c];
  std::vector<double> bias(out, 0.0);
  if (b != nullptr)
    for (std::size_t o = 0; o < out; ++o) bias[o] = b->data()[o];
  std::vector<T> y(n * out);
  std::vector<double> acc(out);
  for (std::size_t i = 0; i < n; ++i) {
    const T* xr = &X[i * in];
    std::copy(bias.begin(), bias.end(), acc.begin());
    for (std::size_t c = 0; c < in; ++c) {
      const double xc = xr[c];
      if (xc == 0.0) continue;
      const double* wr = &wt[c * out];
      for (std::size_t o = 0; o < out; ++o) acc[o] += xc * wr[o];
    }
    for (std::size_t o = 0; o < out; ++o) y[i * out + o] = static_cast<T>(acc[o]);
  }
  std::vector<detail::NodePtr<T>> inputs{x.node(), w.node()};
  if (b != nullptr) inputs.push_back(b->node());
  return detail::finish_op<T>(
      "linear", Shape{n, out}, std::move(y), std::move(inputs),
      [xn = x.node().get(), wn = w.node().get(), bn = b ? b->node().get() : nullptr, n, in,
       out](detail::TensorNode<T>* o) {
        return [xn, wn, bn, o, n, in, out] {
          const T* G = o->grad.data();
          if (T* gx = detail::grad_of(xn)) {
            const std::vector<double> wd(wn->data.begin(), wn->data.end());
            std::vector<double> acc(in);
            for (std::size_t i = 0; i < n; ++i) {
              std::fill(acc.begin(), acc.end(), 0.0);
              for (std::size_t q = 0; q < out; ++q) {
                const double g = G[i * out + q];
                if (g == 0.0) continue;
                const double* wr = &wd[q * in];
                for (std::size_t c = 0; c < in; ++c) acc[c] += g * wr[c];
              }
              for (std::size_t c = 0; c < in; ++c) gx[i * in + c] += static_cast<T>(acc[c]);
            }
          }
          if (T* gw = detail::grad_of(wn)) {
            std::vector<double> acc(out * in, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
              const T* xr = &xn->data[i * in];
              for (std::size_t q = 0; q < out; ++q) {
                const double g = G[i * out + q];
                if (g == 0.0) continue;
                double* ar = &acc[q * in];
                for (std::size_t c = 0; c < in; ++c) ar[c] += g * xr[c];
              }
            }
            for (std::size_t q = 0; q < out * in; ++q) gw[q] += static_cast<T>(acc[q]);
          }
          if (bn != nullptr) {
            if (T* gb = detail::grad_of(bn)) {
              std::vector<double> acc(out, 0.0);
              for (std::size_t i = 0; i < n; ++i)
                for (std::size_t q = 0; q < out; ++q) acc[q] += G[i * out + q];
              for (std::size_t q = 0; q < out; ++q) gb[q] += static_cast<T>(acc[q]);
            }
          }
        };
      });
}

template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  return linear(x, w, &b);
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::finish_op<T>("add", a.shape(), std::move(out), {a.node(), b.node()},
                              [an = a.node().get(), bn = b.node().get()](detail::TensorNode<T>* o) {
                                return [an, bn, o] {
                                  if (T* g = detail::grad_of(an))
                                    for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i];
                                  if (T* g = detail::grad_of(bn))
                                    for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i];
                                };
                              });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.shape() == b.shape(), "sub: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::finish_op<T>("sub", a.shape(), std::move(out), {a.node(), b.node()},
                              [an = a.node().get(), bn = b.node().get()](detail::TensorNode<T>* o) {
                                return [an, bn, o] {
                                  if (T* g = detail::grad_of(an))
                                    for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i];
                                  if (T* g = detail::grad_of(bn))
                                    for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] -= o->grad[i];
                                };
                              });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, double s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(a[i] * s);
  return detail::finish_op<T>("scale", a.shape(), std::move(out), {a.node()},
                              [an = a.node().get(), s](detail::TensorNode<T>* o) {
                                return [an, o, s] {
                                  for (std::size_t i = 0; i < o->grad.size(); ++i)
                                    an->grad[i] += static_cast<T>(o->grad[i] * s);
                                };
                              });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
  return detail::finish_op<T>("relu", a.shape(), std::move(out), {a.node()},
                              [an = a.node().get()](detail::TensorNode<T>* o) {
                                return [an, o] {
                                  for (std::size_t i = 0; i < o->grad.size(); ++i)
                                    if (an->data[i] > T(0)) an->grad[i] += o->grad[i];
                                };
                              });
}

/// Numerically stabilised softmax along `axis`.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
  detail::require(axis < x.rank(), "softmax: axis out of range for " + shape_str(x.shape()));
  const std::size_t n = x.dim(axis);
  detail::require(n >= 1, "softmax: empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const auto X = x.data();
  std::vector<T> y(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(X[base + j * inner]));
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) z += std::exp(static_cast<double>(X[base + j * inner]) - mx);
      for (std::size_t j = 0; j < n; ++j)
        y[base + j * inner] = static_cast<T>(std::exp(static_cast<double>(X[base + j * inner]) - mx) / z);
    }
  }
  return detail::finish_op<T>("softmax", x.shape(), std::move(y), {x.node()},
                              [xn = x.node().get(), outer, inner, n](detail::TensorNode<T>* out) {
                                return [xn, out, outer, inner, n] {
                                  // dx = s ⊙ (g − ⟨g, s⟩)
                                  for (std::size_t o = 0; o < outer; ++o) {
                                    for (std::size_t in = 0; in < inner; ++in) {
                                      const std::size_t base = o * n * inner + in;
                                      double dot = 0.0;
                                      for (std::size_t j = 0; j < n; ++j)
                                        dot += static_cast<double>(out->grad[base + j * inner]) *
                                               out->data[base + j * inner];
                                      for (std::size_t j = 0; j < n; ++j) {
                                        const std::size_t q = base + j * inner;
                                        xn->grad[q] += static_cast<T>(out->data[q] * (out->grad[q] - dot));
                                      }
                                    }
                                  }
                                };
                              });
}

/// Concatenation along `axis`; all other extents must agree.
template <class T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat: no operands");
  const Shape& ref = parts.front().shape();
  detail::require(axis < ref.size(), "concat: axis out of range for " + shape_str(ref));
  std::size_t total = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == ref.size();
    for (std::size_t i = 0; ok && i < ref.size(); ++i) ok = i == axis || p.dim(i) == ref[i];
    detail::require(ok, "concat: " + shape_str(p.shape()) + " incompatible with " + shape_str(ref));
    total += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  Shape shape = ref;
  shape[axis] = total;
  std::vector<T> out(shape_numel(shape));
  std::vector<std::size_t> widths;
  std::vector<detail::NodePtr<T>> inputs;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(axis) * inner;
    const auto P = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(&P[o * w], w, &out[o * total * inner + offset]);
    offset += w;
    widths.push_back(w);
    inputs.push_back(p.node());
  }
  std::vector<detail::TensorNode<T>*> raw;
  for (const auto& n : inputs) raw.push_back(n.get());
  return detail::finish_op<T>("concat", std::move(shape), std::move(out), std::move(inputs),
                              [raw, widths, outer, row = total * inner](detail::TensorNode<T>* o) {
                                return [raw, widths, outer, row, o] {
                                  std::size_t off = 0;
                                  for (std::size_t s = 0; s < raw.size(); ++s) {
                                    if (T* g = detail::grad_of(raw[s])) {
                                      for (std::size_t r = 0; r < outer; ++r)
                                        for (std::size_t c = 0; c < widths[s]; ++c)
                                          g[r * widths[s] + c] += o->grad[r * row + off + c];
                                    }
                                    off += widths[s];
                                  }
                                };
                              });
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  detail::require(shape_numel(shape) == x.numel(),
                  "reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  std::vector<T> out(x.data().begin(), x.data().end());
  return detail::finish_op<T>("reshape", std::move(shape), std::move(out), {x.node()},
                              [xn = x.node().get()](detail::TensorNode<T>* o) {
                                return [xn, o] {
                                  for (std::size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += o->grad[i];
                                };
                              });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double s = 0.0;
  for (const T v : x.data()) s += v;
  return detail::finish_op<T>("sum", Shape{}, std::vector<T>{static_cast<T>(s)}, {x.node()},
                              [xn = x.node().get()](detail::TensorNode<T>* o) {
                                return [xn, o] {
                                  const T g = o->grad[0];
                                  for (auto& v : xn->grad) v += g;
                                };
                              });
}

/// Mean squared error between equally shaped tensors.
template <class T>
BasicTensor<T> mse(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  detail::require(pred.shape() == target.shape(),
                  "mse: shapes " + shape_str(pred.shape()) + " and " + shape_str(target.shape()));
  detail::require(pred.numel() > 0, "mse: empty operands");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    s += d * d;
  }
  const double inv_n = 1.0 / static_cast<double>(pred.numel());
  return detail::finish_op<T>("mse", Shape{}, std::vector<T>{static_cast<T>(s * inv_n)},
                              {pred.node(), target.node()},
                              [pn = pred.node().get(), tn = target.node().get(), inv_n](detail::TensorNode<T>* o) {
                                return [pn, tn, o, inv_n] {
                                  const double g = o->grad[0] * 2.0 * inv_n;
                                  T* gp = detail::grad_of(pn);
                                  T* gt = detail::grad_of(tn);
                                  for (std::size_t i = 0; i < pn->data.size(); ++i) {
                                    const double d = static_cast<double>(pn->data[i]) - tn->data[i];
                                    if (gp) gp[i] += static_cast<T>(g * d);
                                    if (gt) gt[i] -= static_cast<T>(g * d);
                                  }
                                };
                              });
}

/// out[p, j] = ⟨q[p, :], k[p, j, :]⟩ for q[P×d], k[P×N×d].
template <class T>
BasicTensor<T> rowdot(const BasicTensor<T>& q, const BasicTensor<T>& k) {
  detail::require(q.rank() == 2 && k.rank() == 3 && k.dim(0) == q.dim(0) && k.dim(2) == q.dim(1),
                  "rowdot: " + shape_str(q.shape()) + " against " + shape_str(k.shape()));
  const std::size_t P = q.dim(0), N = k.dim(1), d = q.dim(1);
  const auto Q = q.data();
  const auto K = k.data();
  std::vector<T> out(P * N);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t j = 0; j < N; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += static_cast<double>(Q[p * d + c]) * K[(p * N + j) * d + c];
      out[p * N + j] = static_cast<T>(s);
    }
  return detail::finish_op<T>("rowdot", Shape{P, N}, std::move(out), {q.node(), k.node()},
                              [qn = q.node().get(), kn = k.node().get(), P, N, d](detail::TensorNode<T>* o) {
                                return [qn, kn, o, P, N, d] {
                                  T* gq = detail::grad_of(qn);
                                  T* gk = detail::grad_of(kn);
                                  for (std::size_t p = 0; p < P; ++p) {
                                    for (std::size_t c = 0; c < d; ++c) {
                                      double s = 0.0;
                                      for (std::size_t j = 0; j < N; ++j) {
                                        const double g = o->grad[p * N + j];
                                        s += g * kn->data[(p * N + j) * d + c];
                                        if (gk) gk[(p * N + j) * d + c] += static_cast<T>(g * qn->data[p * d + c]);
                                      }
                                      if (gq) gq[p * d + c] += static_cast<T>(s);
                                    }
                                  }
                                };
                              });
}

/// out[p, :] = Σ_j a[p, j]·v[p, j, :] for a[P×N], v[P×N×d].
template <class T>
BasicTensor<T> weighted_sum(const BasicTensor<T>& a, const BasicTensor<T>& v) {
  detail::require(a.rank() == 2 && v.rank() == 3 && v.dim(0) == a.dim(0) && v.dim(1) == a.dim(1),
                  "weighted_sum: " + shape_str(a.shape()) + " against " + shape_str(v.shape()));
  const std::size_t P = a.dim(0), N = a.dim(1), d = v.dim(2);
  const auto A = a.data();
  const auto V = v.data();
  std::vector<T> out(P * d);
  std::vector<double> acc(d);
  for (std::size_t p = 0; p < P; ++p) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < N; ++j) {
      const double w = A[p * N + j];
      for (std::size_t c = 0; c < d; ++c) acc[c] += w * V[(p * N + j) * d + c];
    }
    for (std::size_t c = 0; c < d; ++c) out[p * d + c] = static_cast<T>(acc[c]);
  }
  return detail::finish_op<T>("weighted_sum", Shape{P, d}, std::move(out), {a.node(), v.node()},
                              [an = a.node().get(), vn = v.node().get(), P, N, d](detail::TensorNode<T>* o) {
                                return [an, vn, o, P, N, d] {
                                  T* ga = detail::grad_of(an);
                                  T* gv = detail::grad_of(vn);
                                  for (std::size_t p = 0; p < P; ++p) {
                                    for (std::size_t j = 0; j < N; ++j) {
                                      const std::size_t row = (p * N + j) * d;
                                      double s = 0.0;
                                      const double w = an->data[p * N + j];
                                      for (std::size_t c = 0; c < d; ++c) {
                                        const double g = o->grad[p * d + c];
                                        s += g * vn->data[row + c];
                                        if (gv) gv[row + c] += static_cast<T>(w * g);
                                      }
                                      if (ga) ga[p * N + j] += static_cast<T>(s);
                                    }
                                  }
                                };
                              });
}

/// Zeroes every row r of x[R×...] with keep[r] == 0. The mask is not differentiated.
template <class T>
BasicTensor<T> mask_rows(const BasicTensor<T>& x, std::span<const unsigned char> keep) {
  detail::require(x.rank() >= 1 && keep.size() == x.dim(0),
                  "mask_rows: mask of " + std::to_string(keep.size()) + " rows for " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0);
  const std::size_t width = rows ? x.numel() / rows : 0;
  std::vector<T> out(x.numel(), T(0));
  const auto X = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    if (keep[r]) std::copy_n(&X[r * width], width, &out[r * width]);
  std::vector<unsigned char> mask(keep.begin(), keep.end());
  return detail::finish_op<T>("mask_rows", x.shape(), std::move(out), {x.node()},
                              [xn = x.node().get(), mask = std::move(mask), width](detail::TensorNode<T>* o) {
                                return [xn, o, mask, width] {
                                  for (std::size_t r = 0; r < mask.size(); ++r)
                                    if (mask[r])
                                      for (std::size_t c = 0; c < width; ++c)
                                        xn->grad[r * width + c] += o->grad[r * width + c];
                                };
                              });
}

/// Nearest-neighbour 2× upsampling of an [H×W×C] map.
template <class T>
BasicTensor<T> upsample2x(const BasicTensor<T>& x) {
  detail::require(x.rank() == 3, "upsample2x: expected [H×W×C], got " + shape_str(x.shape()));
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const std::size_t H2 = 2 * H, W2 = 2 * W;
  std::vector<T> out(H2 * W2 * C);
  const auto X = x.data();
  for (std::size_t y = 0; y < H2; ++y)
    for (std::size_t xx = 0; xx < W2; ++xx)
      std::copy_n(&X[((y / 2) * W + xx / 2) * C], C, &out[(y * W2 + xx) * C]);
  return detail::finish_op<T>("upsample2x", Shape{H2, W2, C}, std::move(out), {x.node()},
                              [xn = x.node().get(), W, C, H2, W2](detail::TensorNode<T>* o) {
                                return [xn, o, W, C, H2, W2] {
                                  for (std::size_t y = 0; y < H2; ++y)
                                    for (std::size_t xx = 0; xx < W2; ++xx)
                                      for (std::size_t c = 0; c < C; ++c)
                                        xn->grad[((y / 2) * W + xx / 2) * C + c] += o->grad[(y * W2 + xx) * C + c];
                                };
                              });
}

/// Two-layer perceptron W2·relu(W1·x + b1) + b2, applied to a vector x[in] or to each row of x[n×in].
template <class T>
BasicTensor<T> mlp2(const BasicTensor<T>& x, const BasicTensor<T>& w1, const BasicTensor<T>& b1,
                    const BasicTensor<T>& w2, const BasicTensor<T>& b2) {
  detail::require(w1.rank() == 2 && w2.rank() == 2 && w2.dim(1) == w1.dim(0),
                  "mlp2: hidden widths " + shape_str(w1.shape()) + " and " + shape_str(w2.shape()) + " disagree");
  if (x.rank() == 1) {
    detail::require(x.dim(0) == w1.dim(1),
                    "mlp2: input width " + std::to_string(x.dim(0)) + " vs " + shape_str(w1.shape()));
    const auto y = mlp2(reshape(x, Shape{1, x.dim(0)}), w1, b1, w2, b2);
    return reshape(y, Shape{w2.dim(0)});
  }
  const auto h = relu(linear(x, w1, b1));
  return linear(h, w2, b2);
}

}  // namespace mvalign
