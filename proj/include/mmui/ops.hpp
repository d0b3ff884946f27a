#pragma once

// Differentiable kernels used by the detector. All kernels are single-threaded
// and use a fixed reduction order, so forward results are reproducible bit for bit.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmui/tensor.hpp"

namespace mmui {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using CMatMap = Eigen::Map<const RowMat<T>>;

template <class T, class A>
CMatMap<T> cmat(const std::vector<T, A>& v, std::size_t rows, std::size_t cols) {
  return CMatMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <class T, class A>
MatMap<T> mat(std::vector<T, A>& v, std::size_t rows, std::size_t cols) {
  return MatMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <class T>
void require_rank(const Tensor<T>& t, std::size_t r, const char* op) {
  if (t.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(t.shape()));
  }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class T>
void require_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw ContractError(std::string(op) + ": non-finite input");
  }
}

template <class T>
std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  const auto padded = static_cast<long long>(in + 2 * pad);
  const auto kk = static_cast<long long>(k);
  if (padded < kk) return 0;
  return static_cast<std::size_t>((padded - kk) / static_cast<long long>(stride) + 1);
}

}  // namespace detail

/// C = A·B for A[M,K], B[K,N].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  auto out = make_result<T>({m, n}, {a, b});
  detail::mat(out.node()->data, m, n).noalias() =
      detail::cmat(a.node()->data, m, k) * detail::cmat(b.node()->data, k, n);
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, k, n](TensorNode<T>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      auto dc = detail::cmat(self.grad, m, n);
      if (pa.requires_grad) detail::mat(pa.grad, m, k).noalias() += dc * detail::cmat(pb.data, k, n).transpose();
      if (pb.requires_grad) detail::mat(pb.grad, k, n).noalias() += detail::cmat(pa.data, m, k).transpose() * dc;
    };
  }
  return out;
}

template <class T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  detail::require_rank(a, 2, "transpose2d");
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto out = make_result<T>({c, r}, {a});
  detail::mat(out.node()->data, c, r) = detail::cmat(a.node()->data, r, c).transpose();
  if (out.requires_grad()) {
    out.node()->backward_fn = [r, c](TensorNode<T>& self) {
      detail::mat(self.parents[0]->grad, r, c) += detail::cmat(self.grad, c, r).transpose();
    };
  }
  return out;
}

/// Same data under a new shape of equal element count.
template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  auto out = make_result<T>(std::move(shape), {a});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  if (out.requires_grad()) {
    out.node()->backward_fn = [](TensorNode<T>& self) {
      auto& g = self.parents[0]->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
  }
  return out;
}

/// Cross-correlation of x[Cin,H,W] with w[Cout,Cin,k,k] plus bias b[Cout].
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                 std::size_t pad) {
  detail::require_rank(x, 3, "conv2d input");
  detail::require_rank(w, 4, "conv2d weight");
  detail::require_rank(b, 1, "conv2d bias");
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin || w.dim(3) != k) {
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()));
  }
  if (b.dim(0) != cout) throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " for " + std::to_string(cout) + " outputs");
  if (k % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t ho = detail::conv_out_extent<T>(h, k, stride, pad);
  const std::size_t wo = detail::conv_out_extent<T>(wd, k, stride, pad);
  if (ho < 1 || wo < 1) {
    throw ConfigError("conv2d: output extent < 1 for input " + shape_str(x.shape()) + ", k=" + std::to_string(k) +
                      ", stride=" + std::to_string(stride) + ", pad=" + std::to_string(pad));
  }
  const std::size_t patch = cin * k * k;
  const std::size_t npos = ho * wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  // im2col: row (ci,ki,kj), column output position.
  auto cols = std::make_shared<Buffer<T>>();
  if (!direct) {
    cols->assign(patch * npos, T{0});
    const auto& xd = x.node()->data;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          T* row = cols->data() + ((ci * k + ki) * k + kj) * npos;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long long iy = static_cast<long long>(oy * stride + ki) - static_cast<long long>(pad);
            if (iy < 0 || iy >= static_cast<long long>(h)) continue;
            const T* src = xd.data() + (ci * h + static_cast<std::size_t>(iy)) * wd;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long long ix = static_cast<long long>(ox * stride + kj) - static_cast<long long>(pad);
              if (ix >= 0 && ix < static_cast<long long>(wd)) row[oy * wo + ox] = src[ix];
            }
          }
        }
      }
    }
  }

  auto out = make_result<T>({cout, ho, wo}, {x, w, b});
  {
    auto o = detail::mat(out.node()->data, cout, npos);
    const auto& src = direct ? x.node()->data : *cols;
    o.noalias() = detail::cmat(w.node()->data, cout, patch) * detail::cmat(src, patch, npos);
    const auto& bd = b.node()->data;
    for (std::size_t co = 0; co < cout; ++co) o.row(static_cast<Eigen::Index>(co)).array() += bd[co];
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [=](TensorNode<T>& self) {
      auto& px = *self.parents[0];
      auto& pw = *self.parents[1];
      auto& pb = *self.parents[2];
      auto dout = detail::cmat(self.grad, cout, npos);
      const auto& colsrc = direct ? px.data : *cols;
      if (pw.requires_grad) detail::mat(pw.grad, cout, patch).noalias() += dout * detail::cmat(colsrc, patch, npos).transpose();
      if (pb.requires_grad) {
        for (std::size_t co = 0; co < cout; ++co) pb.grad[co] += dout.row(static_cast<Eigen::Index>(co)).sum();
      }
      if (!px.requires_grad) return;
      if (direct) {
        detail::mat(px.grad, patch, npos).noalias() += detail::cmat(pw.data, cout, patch).transpose() * dout;
        return;
      }
      Buffer<T> dcols(patch * npos);
      detail::mat(dcols, patch, npos).noalias() = detail::cmat(pw.data, cout, patch).transpose() * dout;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t ki = 0; ki < k; ++ki) {
          for (std::size_t kj = 0; kj < k; ++kj) {
            const T* row = dcols.data() + ((ci * k + ki) * k + kj) * npos;
            for (std::size_t oy = 0; oy < ho; ++oy) {
              const long long iy = static_cast<long long>(oy * stride + ki) - static_cast<long long>(pad);
              if (iy < 0 || iy >= static_cast<long long>(h)) continue;
              T* dst = px.grad.data() + (ci * h + static_cast<std::size_t>(iy)) * wd;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const long long ix = static_cast<long long>(ox * stride + kj) - static_cast<long long>(pad);
                if (ix >= 0 && ix < static_cast<long long>(wd)) dst[ix] += row[oy * wo + ox];
              }
            }
          }
        }
      }
    };
  }
  return out;
}

/// Per-channel learnable affine y = x·scale[c] + shift[c] over x[C,...].
template <class T>
Tensor<T> affine_channels(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift) {
  if (x.rank() < 1 || scale.numel() != x.dim(0) || shift.numel() != x.dim(0)) {
    throw ShapeError("affine_channels: " + shape_str(x.shape()) + " with scale " + shape_str(scale.shape()) +
                     " shift " + shape_str(shift.shape()));
  }
  const std::size_t c = x.dim(0), inner = x.numel() / c;
  auto out = make_result<T>(x.shape(), {x, scale, shift});
  {
    const auto& xd = x.node()->data;
    auto& od = out.node()->data;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T s = scale[ch], t = shift[ch];
      for (std::size_t i = 0; i < inner; ++i) od[ch * inner + i] = xd[ch * inner + i] * s + t;
    }
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [c, inner](TensorNode<T>& self) {
      auto& px = *self.parents[0];
      auto& ps = *self.parents[1];
      auto& pt = *self.parents[2];
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* g = self.grad.data() + ch * inner;
        const T* xv = px.data.data() + ch * inner;
        if (px.requires_grad) {
          T* dx = px.grad.data() + ch * inner;
          const T s = ps.data[ch];
          for (std::size_t i = 0; i < inner; ++i) dx[i] += g[i] * s;
        }
        if (ps.requires_grad) {
          T acc{0};
          for (std::size_t i = 0; i < inner; ++i) acc += g[i] * xv[i];
          ps.grad[ch] += acc;
        }
        if (pt.requires_grad) {
          T acc{0};
          for (std::size_t i = 0; i < inner; ++i) acc += g[i];
          pt.grad[ch] += acc;
        }
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto out = make_result<T>(x.shape(), {x});
  auto& od = out.node()->data;
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = detail::stable_sigmoid(x[i]);
  if (out.requires_grad()) {
    out.node()->backward_fn = [](TensorNode<T>& self) {
      auto& px = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T s = self.data[i];
        px.grad[i] += self.grad[i] * s * (T{1} - s);
      }
    };
  }
  return out;
}

/// x·sigmoid(x).
template <class T>
Tensor<T> silu(const Tensor<T>& x) {
  auto out = make_result<T>(x.shape(), {x});
  auto& od = out.node()->data;
  const auto& xd = x.node()->data;
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[i] * detail::stable_sigmoid(xd[i]);
  if (out.requires_grad()) {
    out.node()->backward_fn = [](TensorNode<T>& self) {
      auto& px = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T v = px.data[i];
        const T s = detail::stable_sigmoid(v);
        px.grad[i] += self.grad[i] * (s + v * s * (T{1} - s));
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  auto out = make_result<T>(a.shape(), {a, b});
  auto& od = out.node()->data;
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a[i] + b[i];
  if (out.requires_grad()) {
    out.node()->backward_fn = [](TensorNode<T>& self) {
      for (std::size_t p = 0; p < 2; ++p) {
        auto& pn = *self.parents[p];
        if (!pn.requires_grad) continue;
        for (std::size_t i = 0; i < self.grad.size(); ++i) pn.grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

/// Elementwise product.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  auto out = make_result<T>(a.shape(), {a, b});
  auto& od = out.node()->data;
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a[i] * b[i];
  if (out.requires_grad()) {
    out.node()->backward_fn = [](TensorNode<T>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.data[i];
        if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.data[i];
      }
    };
  }
  return out;
}

/// Multiplication by a constant.
template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto out = make_result<T>(a.shape(), {a});
  auto& od = out.node()->data;
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a[i] * s;
  if (out.requires_grad()) {
    out.node()->backward_fn = [s](TensorNode<T>& self) {
      auto& pa = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * s;
    };
  }
  return out;
}

/// Multiplication by a learnable one-element tensor.
template <class T>
Tensor<T> scale_by(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.numel() != 1) throw ShapeError("scale_by: scalar expected, got " + shape_str(s.shape()));
  auto out = make_result<T>(a.shape(), {a, s});
  const T sv = s[0];
  auto& od = out.node()->data;
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = a[i] * sv;
  if (out.requires_grad()) {
    out.node()->backward_fn = [](TensorNode<T>& self) {
      auto& pa = *self.parents[0];
      auto& ps = *self.parents[1];
      const T sv = ps.data[0];
      T acc{0};
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (pa.requires_grad) pa.grad[i] += self.grad[i] * sv;
        acc += self.grad[i] * pa.data[i];
      }
      if (ps.requires_grad) ps.grad[0] += acc;
    };
  }
  return out;
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  auto out = make_result<T>({1}, {a});
  T acc{0};
  for (T v : a.data()) acc += v;
  out[0] = acc;
  if (out.requires_grad()) {
    out.node()->backward_fn = [](TensorNode<T>& self) {
      auto& pa = *self.parents[0];
      for (auto& g : pa.grad) g += self.grad[0];
    };
  }
  return out;
}

/// Concatenation of [Ci,H,W] tensors along the channel axis, in argument order.
template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  std::size_t ctot = 0;
  for (const auto& p : parts) {
    detail::require_rank(p, 3, "concat_channels");
    if (p.dim(1) != parts[0].dim(1) || p.dim(2) != parts[0].dim(2)) {
      throw ShapeError("concat_channels: spatial mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    ctot += p.dim(0);
  }
  auto out = make_result<T>({ctot, parts[0].dim(1), parts[0].dim(2)}, parts);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.numel();
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [](TensorNode<T>& self) {
      std::size_t off = 0;
      for (auto& p : self.parents) {
        if (p->requires_grad) {
          for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += self.grad[off + i];
        }
        off += p->data.size();
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  return concat_channels<T>(std::vector<Tensor<T>>{a, b});
}

template <class T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  detail::require_rank(x, 3, "upsample_nearest2x");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto out = make_result<T>({c, 2 * h, 2 * w}, {x});
  auto& od = out.node()->data;
  const auto& xd = x.node()->data;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) od[(ch * 2 * h + y) * 2 * w + xx] = xd[(ch * h + y / 2) * w + xx / 2];
    }
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [c, h, w](TensorNode<T>& self) {
      auto& px = *self.parents[0];
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < 2 * h; ++y) {
          for (std::size_t xx = 0; xx < 2 * w; ++xx) {
            px.grad[(ch * h + y / 2) * w + xx / 2] += self.grad[(ch * 2 * h + y) * 2 * w + xx];
          }
        }
      }
    };
  }
  return out;
}

/// Max pooling with implicit -inf padding. Ties resolve to the first element in scan order.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t k, std::size_t stride, std::size_t pad) {
  detail::require_rank(x, 3, "maxpool2d");
  if (stride == 0 || k == 0) throw ConfigError("maxpool2d: kernel and stride must be positive");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t ho = detail::conv_out_extent<T>(h, k, stride, pad);
  const std::size_t wo = detail::conv_out_extent<T>(w, k, stride, pad);
  if (ho < 1 || wo < 1) throw ConfigError("maxpool2d: output extent < 1 for " + shape_str(x.shape()));
  auto out = make_result<T>({c, ho, wo}, {x});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(c * ho * wo);
  const auto& xd = x.node()->data;
  auto& od = out.node()->data;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_i = 0;
        bool any = false;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
          if (iy < 0 || iy >= static_cast<long long>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long long ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
            if (ix < 0 || ix >= static_cast<long long>(w)) continue;
            const std::size_t idx = (ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
            if (!any || xd[idx] > best) {
              best = xd[idx];
              best_i = idx;
              any = true;
            }
          }
        }
        const std::size_t o = (ch * ho + oy) * wo + ox;
        od[o] = best;
        (*argmax)[o] = static_cast<std::uint32_t>(best_i);
      }
    }
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [argmax](TensorNode<T>& self) {
      auto& px = *self.parents[0];
      for (std::size_t o = 0; o < self.grad.size(); ++o) px.grad[(*argmax)[o]] += self.grad[o];
    };
  }
  return out;
}

/// Row-wise softmax over x[M,N] with per-row max subtraction.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  detail::require_rank(x, 2, "softmax_rows");
  detail::require_finite(x, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  auto out = make_result<T>(x.shape(), {x});
  auto& od = out.node()->data;
  for (std::size_t r = 0; r < m; ++r) {
    const T* xr = x.data().data() + r * n;
    T* yr = od.data() + r * n;
    const T mx = *std::max_element(xr, xr + n);
    T z{0};
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [m, n](TensorNode<T>& self) {
      auto& px = *self.parents[0];
      for (std::size_t r = 0; r < m; ++r) {
        const T* y = self.data.data() + r * n;
        const T* g = self.grad.data() + r * n;
        T dot{0};
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        T* dx = px.grad.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return out;
}

/// Mean binary cross-entropy on logits, log-sum-exp stable.
template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  detail::require_same_shape(logits, targets, "bce_with_logits");
  for (T t : targets.data()) {
    if (!(t >= T{0} && t <= T{1})) throw ContractError("bce_with_logits: target outside [0,1]");
  }
  auto out = make_result<T>({1}, {logits});
  const std::size_t n = logits.numel();
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T x = logits[i], t = targets[i];
    acc += std::max(x, T{0}) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  out[0] = acc / static_cast<T>(n);
  if (out.requires_grad()) {
    auto tgt = targets.detach();
    out.node()->backward_fn = [tgt, n](TensorNode<T>& self) {
      auto& px = *self.parents[0];
      const T g = self.grad[0] / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) px.grad[i] += g * (detail::stable_sigmoid(px.data[i]) - tgt[i]);
    };
  }
  return out;
}

}  // namespace mmui
