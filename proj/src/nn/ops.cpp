#include "vtg/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vtg/simd/kernels.hpp"

namespace vtg::nn {
namespace {

template <typename T>
void check_same(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a->value.shape() == b->value.shape(), std::string(op) + ": shape mismatch " + shape_string(a->value.shape()) +
                                                    " vs " + shape_string(b->value.shape()));
}

template <typename T>
void add_into(Node<T>& target, const Tensor<T>& g) {
  if (!target.requires_grad) return;
  auto& buf = target.grad_buffer();
  T* out = buf.data();
  const T* in = g.data();
  for (int64_t i = 0; i < buf.numel(); ++i) out[i] += in[i];
}

// Column buffer [C*k*k, Ho*Wo] for one image.
template <typename T>
void im2col(const T* x, int64_t channels, int64_t height, int64_t width, int k, int stride, int pad, int64_t out_h,
            int64_t out_w, T* col) {
  for (int64_t c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + ((c * k + ky) * k + kx) * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          T* dst = row + oy * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = x + (c * height + iy) * width;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int64_t channels, int64_t height, int64_t width, int k, int stride, int pad,
                int64_t out_h, int64_t out_w, T* x) {
  for (int64_t c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + ((c * k + ky) * k + kx) * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          T* dst = x + (c * height + iy) * width;
          const T* src = row + oy * out_w;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "add");
  Tensor<T> out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    add_into(*self.parents[0], self.grad);
    add_into(*self.parents[1], self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "sub");
  Tensor<T> out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    add_into(*self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same(a, b, "mul");
  Tensor<T> out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a->value;
  for (auto& v : out.storage()) v *= factor;
  return make_result<T>(std::move(out), {a}, [factor](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Var<T> mul_const(const Var<T>& a, const Tensor<T>& c) {
  require(a->value.shape() == c.shape(), "mul_const: shape mismatch");
  Tensor<T> out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c[i];
  return make_result<T>(std::move(out), {a}, [c](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * c[i];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a->value.reshaped(std::move(shape));
  return make_result<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x->value;
  for (auto& v : out.storage()) v = v > T(0) ? v : T(0);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i)
      if (self.parents[0]->value[i] > T(0)) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> silu(const Var<T>& x) {
  Tensor<T> out = x->value;
  for (auto& v : out.storage()) v = v / (T(1) + std::exp(-v));
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto& in = self.parents[0]->value;
    for (int64_t i = 0; i < g.numel(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-in[i]));
      g[i] += self.grad[i] * s * (T(1) + in[i] * (T(1) - s));
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  Tensor<T> out = x->value;
  for (auto& v : out.storage()) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    constexpr T inv_sqrt2 = T(0.70710678118654752440);
    const T inv_sqrt_2pi = T(0.5) * T(std::numbers::inv_sqrtpi) * T(std::numbers::sqrt2);
    auto& g = self.parents[0]->grad_buffer();
    const auto& in = self.parents[0]->value;
    for (int64_t i = 0; i < g.numel(); ++i) {
      const T v = in[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var<T> add_channel_vector(const Var<T>& x, const Var<T>& v) {
  const auto& s = x->value.shape();
  require(x->value.rank() == 4 && v->value.rank() == 2 && v->value.dim(0) == s[0] && v->value.dim(1) == s[1],
          "add_channel_vector: expected x [N,C,H,W] and v [N,C]");
  const int64_t plane = s[2] * s[3];
  Tensor<T> out = x->value;
  for (int64_t nc = 0; nc < s[0] * s[1]; ++nc) {
    const T add = v->value[nc];
    T* p = out.data() + nc * plane;
    for (int64_t i = 0; i < plane; ++i) p[i] += add;
  }
  return make_result<T>(std::move(out), {x, v}, [plane](Node<T>& self) {
    add_into(*self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (int64_t nc = 0; nc < g.numel(); ++nc) {
        T acc = 0;
        const T* p = self.grad.data() + nc * plane;
        for (int64_t i = 0; i < plane; ++i) acc += p[i];
        g[nc] += acc;
      }
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  require(x->value.rank() == 4 && w->value.rank() == 4 && ws[1] == xs[1] && ws[2] == ws[3],
          "conv2d: incompatible shapes x " + shape_string(xs) + " w " + shape_string(ws));
  const int64_t n = xs[0], c = xs[1], h = xs[2], wd = xs[3];
  const int64_t o = ws[0];
  const int k = static_cast<int>(ws[2]);
  const int64_t oh = (h + 2 * pad - k) / stride + 1;
  const int64_t ow = (wd + 2 * pad - k) / stride + 1;
  require(oh > 0 && ow > 0, "conv2d: output would be empty");
  const int64_t ckk = c * k * k;
  const int64_t plane = oh * ow;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  Tensor<T> out({n, o, oh, ow});
  std::vector<T> col(direct ? 0 : static_cast<size_t>(ckk * plane));
  for (int64_t i = 0; i < n; ++i) {
    const T* xi = x->value.data() + i * c * h * wd;
    const T* src = xi;
    if (!direct) {
      im2col(xi, c, h, wd, k, stride, pad, oh, ow, col.data());
      src = col.data();
    }
    T* yi = out.data() + i * o * plane;
    simd::gemm<T>(false, false, o, plane, ckk, w->value.data(), ckk, src, plane, yi, plane, false);
    if (bias)
      for (int64_t oc = 0; oc < o; ++oc) {
        const T b = bias->value[oc];
        for (int64_t p = 0; p < plane; ++p) yi[oc * plane + p] += b;
      }
  }

  return make_result<T>(std::move(out), {x, w, bias}, [=](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    Node<T>* pb = self.parents[2].get();
    std::vector<T> cols(direct ? 0 : static_cast<size_t>(ckk * plane));
    std::vector<T> dcol(direct ? 0 : static_cast<size_t>(ckk * plane));
    for (int64_t i = 0; i < n; ++i) {
      const T* dy = self.grad.data() + i * o * plane;
      const T* xi = px.value.data() + i * c * h * wd;
      const T* src = xi;
      if (!direct) {
        im2col(xi, c, h, wd, k, stride, pad, oh, ow, cols.data());
        src = cols.data();
      }
      if (pw.requires_grad)
        simd::gemm<T>(false, true, o, ckk, plane, dy, plane, src, plane, pw.grad_buffer().data(), ckk, true);
      if (pb && pb->requires_grad) {
        auto& gb = pb->grad_buffer();
        for (int64_t oc = 0; oc < o; ++oc) {
          T acc = 0;
          for (int64_t p = 0; p < plane; ++p) acc += dy[oc * plane + p];
          gb[oc] += acc;
        }
      }
      if (px.requires_grad) {
        T* dx = px.grad_buffer().data() + i * c * h * wd;
        if (direct) {
          simd::gemm<T>(true, false, ckk, plane, o, pw.value.data(), ckk, dy, plane, dx, plane, true);
        } else {
          simd::gemm<T>(true, false, ckk, plane, o, pw.value.data(), ckk, dy, plane, dcol.data(), plane, false);
          col2im_add(dcol.data(), c, h, wd, k, stride, pad, oh, ow, dx);
        }
      }
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  const int64_t in = w->value.dim(0 + 1);
  const int64_t outf = w->value.dim(0);
  require(x->value.rank() >= 1 && x->value.dim(-1) == in,
          "linear: input " + shape_string(x->value.shape()) + " vs weight " + shape_string(w->value.shape()));
  const int64_t rows = x->value.numel() / in;
  Shape shape = x->value.shape();
  shape.back() = outf;
  Tensor<T> out(shape);
  simd::gemm<T>(false, true, rows, outf, in, x->value.data(), in, w->value.data(), in, out.data(), outf, false);
  if (bias)
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < outf; ++j) out[r * outf + j] += bias->value[j];
  return make_result<T>(std::move(out), {x, w, bias}, [rows, in, outf](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    Node<T>* pb = self.parents[2].get();
    const T* dy = self.grad.data();
    if (px.requires_grad)
      simd::gemm<T>(false, false, rows, in, outf, dy, outf, pw.value.data(), in, px.grad_buffer().data(), in, true);
    if (pw.requires_grad)
      simd::gemm<T>(true, false, outf, in, rows, dy, outf, px.value.data(), in, pw.grad_buffer().data(), in, true);
    if (pb && pb->requires_grad) {
      auto& gb = pb->grad_buffer();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < outf; ++j) gb[j] += dy[r * outf + j];
    }
  });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool ta, bool tb) {
  require(a->value.rank() == 3 && b->value.rank() == 3 && a->value.dim(0) == b->value.dim(0), "bmm: expected [B, ., .]");
  const int64_t batch = a->value.dim(0);
  const int64_t m = ta ? a->value.dim(2) : a->value.dim(1);
  const int64_t k = ta ? a->value.dim(1) : a->value.dim(2);
  const int64_t kb = tb ? b->value.dim(2) : b->value.dim(1);
  const int64_t n = tb ? b->value.dim(1) : b->value.dim(2);
  require(k == kb, "bmm: inner dimensions differ");
  const int64_t lda = a->value.dim(2), ldb = b->value.dim(2);
  const int64_t sa = m * k, sb = k * n, sc = m * n;
  Tensor<T> out({batch, m, n});
  for (int64_t i = 0; i < batch; ++i)
    simd::gemm<T>(ta, tb, m, n, k, a->value.data() + i * sa, lda, b->value.data() + i * sb, ldb, out.data() + i * sc, n,
                  false);
  return make_result<T>(std::move(out), {a, b}, [=](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (int64_t i = 0; i < batch; ++i) {
      const T* dc = self.grad.data() + i * sc;
      const T* as = pa.value.data() + i * sa;
      const T* bs = pb.value.data() + i * sb;
      if (pa.requires_grad) {
        T* da = pa.grad_buffer().data() + i * sa;
        if (!ta)
          simd::gemm<T>(false, !tb, m, k, n, dc, n, bs, ldb, da, k, true);
        else
          simd::gemm<T>(tb, true, k, m, n, bs, ldb, dc, n, da, m, true);
      }
      if (pb.requires_grad) {
        T* db = pb.grad_buffer().data() + i * sb;
        if (!tb)
          simd::gemm<T>(!ta, false, k, n, m, as, lda, dc, n, db, n, true);
        else
          simd::gemm<T>(true, ta, n, k, m, dc, n, as, lda, db, k, true);
      }
    }
  });
}

template <typename T>
Var<T> softmax_last(const Var<T>& x) {
  const int64_t d = x->value.dim(-1);
  const int64_t rows = x->value.numel() / d;
  Tensor<T> out = x->value;
  for (int64_t r = 0; r < rows; ++r) {
    T* p = out.data() + r * d;
    const T mx = *std::max_element(p, p + d);
    T total = 0;
    for (int64_t j = 0; j < d; ++j) total += (p[j] = std::exp(p[j] - mx));
    for (int64_t j = 0; j < d; ++j) p[j] /= total;
  }
  return make_result<T>(std::move(out), {x}, [rows, d](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * d;
      const T* dy = self.grad.data() + r * d;
      T inner = 0;
      for (int64_t j = 0; j < d; ++j) inner += y[j] * dy[j];
      for (int64_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (dy[j] - inner);
    }
  });
}

namespace {

// Shared normalisation backward: dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)).
template <typename T>
void normalize_backward(const T* dxhat, const T* xhat, T rstd, int64_t count, T* dx) {
  T m1 = 0, m2 = 0;
  for (int64_t i = 0; i < count; ++i) {
    m1 += dxhat[i];
    m2 += dxhat[i] * xhat[i];
  }
  m1 /= T(count);
  m2 /= T(count);
  for (int64_t i = 0; i < count; ++i) dx[i] += rstd * (dxhat[i] - m1 - xhat[i] * m2);
}

}  // namespace

template <typename T>
Var<T> group_norm(const Var<T>& x, int groups, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const auto& s = x->value.shape();
  require(x->value.rank() == 4 && s[1] % groups == 0, "group_norm: channels must divide into groups");
  const int64_t n = s[0], c = s[1], plane = s[2] * s[3];
  const int64_t cpg = c / groups;
  const int64_t count = cpg * plane;
  Tensor<T> xhat(s);
  std::vector<T> rstd(static_cast<size_t>(n * groups));
  Tensor<T> out(s);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t g = 0; g < groups; ++g) {
      const int64_t base = (i * c + g * cpg) * plane;
      const T* src = x->value.data() + base;
      T mean = 0;
      for (int64_t j = 0; j < count; ++j) mean += src[j];
      mean /= T(count);
      T var = 0;
      for (int64_t j = 0; j < count; ++j) var += (src[j] - mean) * (src[j] - mean);
      var /= T(count);
      const T r = T(1) / std::sqrt(var + eps);
      rstd[static_cast<size_t>(i * groups + g)] = r;
      for (int64_t j = 0; j < count; ++j) {
        const int64_t ch = g * cpg + j / plane;
        const T xh = (src[j] - mean) * r;
        xhat[base + j] = xh;
        out[base + j] = xh * gamma->value[ch] + beta->value[ch];
      }
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta},
                        [=, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
                          auto& px = *self.parents[0];
                          auto& pg = *self.parents[1];
                          auto& pbeta = *self.parents[2];
                          std::vector<T> dxhat(static_cast<size_t>(count));
                          for (int64_t i = 0; i < n; ++i) {
                            for (int64_t g = 0; g < groups; ++g) {
                              const int64_t base = (i * c + g * cpg) * plane;
                              for (int64_t j = 0; j < count; ++j) {
                                const int64_t ch = g * cpg + j / plane;
                                const T dy = self.grad[base + j];
                                if (pg.requires_grad) pg.grad_buffer()[ch] += dy * xhat[base + j];
                                if (pbeta.requires_grad) pbeta.grad_buffer()[ch] += dy;
                                dxhat[static_cast<size_t>(j)] = dy * pg.value[ch];
                              }
                              if (px.requires_grad)
                                normalize_backward(dxhat.data(), xhat.data() + base, rstd[static_cast<size_t>(i * groups + g)],
                                                   count, px.grad_buffer().data() + base);
                            }
                          }
                        });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const int64_t d = x->value.dim(-1);
  const int64_t rows = x->value.numel() / d;
  Tensor<T> xhat(x->value.shape());
  std::vector<T> rstd(static_cast<size_t>(rows));
  Tensor<T> out(x->value.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = x->value.data() + r * d;
    T mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += src[j];
    mean /= T(d);
    T var = 0;
    for (int64_t j = 0; j < d; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= T(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[static_cast<size_t>(r)] = rs;
    for (int64_t j = 0; j < d; ++j) {
      const T xh = (src[j] - mean) * rs;
      xhat[r * d + j] = xh;
      out[r * d + j] = xh * gamma->value[j] + beta->value[j];
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta},
                        [=, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
                          auto& px = *self.parents[0];
                          auto& pg = *self.parents[1];
                          auto& pbeta = *self.parents[2];
                          std::vector<T> dxhat(static_cast<size_t>(d));
                          for (int64_t r = 0; r < rows; ++r) {
                            for (int64_t j = 0; j < d; ++j) {
                              const T dy = self.grad[r * d + j];
                              if (pg.requires_grad) pg.grad_buffer()[j] += dy * xhat[r * d + j];
                              if (pbeta.requires_grad) pbeta.grad_buffer()[j] += dy;
                              dxhat[static_cast<size_t>(j)] = dy * pg.value[j];
                            }
                            if (px.requires_grad)
                              normalize_backward(dxhat.data(), xhat.data() + r * d, rstd[static_cast<size_t>(r)], d,
                                                 px.grad_buffer().data() + r * d);
                          }
                        });
}

template <typename T>
Var<T> max_pool2x2(const Var<T>& x) {
  const auto& s = x->value.shape();
  require(x->value.rank() == 4 && s[2] % 2 == 0 && s[3] % 2 == 0, "max_pool2x2: needs even spatial dims");
  const int64_t nc = s[0] * s[1], h = s[2], w = s[3], oh = h / 2, ow = w / 2;
  Tensor<T> out({s[0], s[1], oh, ow});
  std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
  for (int64_t p = 0; p < nc; ++p) {
    const T* src = x->value.data() + p * h * w;
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t xx = 0; xx < ow; ++xx) {
        int64_t best = (2 * y) * w + 2 * xx;
        for (int64_t dy = 0; dy < 2; ++dy)
          for (int64_t dx = 0; dx < 2; ++dx) {
            const int64_t idx = (2 * y + dy) * w + 2 * xx + dx;
            if (src[idx] > src[best]) best = idx;
          }
        const int64_t o = (p * oh + y) * ow + xx;
        out[o] = src[best];
        argmax[static_cast<size_t>(o)] = p * h * w + best;
      }
  }
  return make_result<T>(std::move(out), {x}, [argmax = std::move(argmax)](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[static_cast<int64_t>(o)];
  });
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  const auto& s = x->value.shape();
  require(x->value.rank() == 4, "upsample_nearest2x: expected NCHW");
  const int64_t nc = s[0] * s[1], h = s[2], w = s[3];
  Tensor<T> out({s[0], s[1], 2 * h, 2 * w});
  for (int64_t p = 0; p < nc; ++p)
    for (int64_t y = 0; y < 2 * h; ++y)
      for (int64_t xx = 0; xx < 2 * w; ++xx) out[(p * 2 * h + y) * 2 * w + xx] = x->value[(p * h + y / 2) * w + xx / 2];
  return make_result<T>(std::move(out), {x}, [nc, h, w](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t p = 0; p < nc; ++p)
      for (int64_t y = 0; y < 2 * h; ++y)
        for (int64_t xx = 0; xx < 2 * w; ++xx) g[(p * h + y / 2) * w + xx / 2] += self.grad[(p * 2 * h + y) * 2 * w + xx];
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const auto& s = x->value.shape();
  require(x->value.rank() == 4, "global_avg_pool: expected NCHW");
  const int64_t nc = s[0] * s[1], plane = s[2] * s[3];
  Tensor<T> out({s[0], s[1]});
  for (int64_t p = 0; p < nc; ++p) {
    T acc = 0;
    for (int64_t i = 0; i < plane; ++i) acc += x->value[p * plane + i];
    out[p] = acc / T(plane);
  }
  return make_result<T>(std::move(out), {x}, [nc, plane](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t p = 0; p < nc; ++p) {
      const T v = self.grad[p] / T(plane);
      for (int64_t i = 0; i < plane; ++i) g[p * plane + i] += v;
    }
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  require(a->value.rank() == 4 && b->value.rank() == 4 && sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3],
          "concat_channels: shape mismatch " + shape_string(sa) + " vs " + shape_string(sb));
  const int64_t n = sa[0], plane = sa[2] * sa[3];
  const int64_t ca = sa[1] * plane, cb = sb[1] * plane;
  Tensor<T> out({n, sa[1] + sb[1], sa[2], sa[3]});
  for (int64_t i = 0; i < n; ++i) {
    std::copy_n(a->value.data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(b->value.data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  return make_result<T>(std::move(out), {a, b}, [n, ca, cb](Node<T>& self) {
    for (int part = 0; part < 2; ++part) {
      auto& p = *self.parents[static_cast<size_t>(part)];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      const int64_t len = part == 0 ? ca : cb;
      const int64_t off = part == 0 ? 0 : ca;
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < len; ++j) g[i * len + j] += self.grad[i * (ca + cb) + off + j];
    }
  });
}

template <typename T>
Var<T> nchw_to_tokens(const Var<T>& x) {
  const auto& s = x->value.shape();
  const int64_t n = s[0], c = s[1], l = s[2] * s[3];
  Tensor<T> out({n, l, c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t p = 0; p < l; ++p) out[(i * l + p) * c + ch] = x->value[(i * c + ch) * l + p];
  return make_result<T>(std::move(out), {x}, [n, c, l](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t p = 0; p < l; ++p) g[(i * c + ch) * l + p] += self.grad[(i * l + p) * c + ch];
  });
}

template <typename T>
Var<T> tokens_to_nchw(const Var<T>& x, int64_t height, int64_t width) {
  const auto& s = x->value.shape();
  const int64_t n = s[0], l = s[1], c = s[2];
  require(l == height * width, "tokens_to_nchw: token count does not match spatial size");
  Tensor<T> out({n, c, height, width});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t p = 0; p < l; ++p) out[(i * c + ch) * l + p] = x->value[(i * l + p) * c + ch];
  return make_result<T>(std::move(out), {x}, [n, c, l](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t p = 0; p < l; ++p) g[(i * l + p) * c + ch] += self.grad[(i * c + ch) * l + p];
  });
}

template <typename T>
Var<T> split_heads(const Var<T>& x, int heads) {
  const auto& s = x->value.shape();
  const int64_t n = s[0], l = s[1], hd = s[2], d = hd / heads;
  require(hd % heads == 0, "split_heads: width not divisible by heads");
  Tensor<T> out({n * heads, l, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t p = 0; p < l; ++p)
      for (int64_t h = 0; h < heads; ++h)
        std::copy_n(x->value.data() + (i * l + p) * hd + h * d, d, out.data() + ((i * heads + h) * l + p) * d);
  return make_result<T>(std::move(out), {x}, [n, l, hd, d, heads](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t p = 0; p < l; ++p)
        for (int64_t h = 0; h < heads; ++h)
          for (int64_t j = 0; j < d; ++j) g[(i * l + p) * hd + h * d + j] += self.grad[((i * heads + h) * l + p) * d + j];
  });
}

template <typename T>
Var<T> merge_heads(const Var<T>& x, int heads) {
  const auto& s = x->value.shape();
  const int64_t n = s[0] / heads, l = s[1], d = s[2], hd = d * heads;
  Tensor<T> out({n, l, hd});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t p = 0; p < l; ++p)
      for (int64_t h = 0; h < heads; ++h)
        std::copy_n(x->value.data() + ((i * heads + h) * l + p) * d, d, out.data() + (i * l + p) * hd + h * d);
  return make_result<T>(std::move(out), {x}, [n, l, hd, d, heads](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t p = 0; p < l; ++p)
        for (int64_t h = 0; h < heads; ++h)
          for (int64_t j = 0; j < d; ++j) g[((i * heads + h) * l + p) * d + j] += self.grad[(i * l + p) * hd + h * d + j];
  });
}

template <typename T>
Var<T> l2_normalize_rows(const Var<T>& x) {
  require(x->value.rank() == 2, "l2_normalize_rows: expected [N, D]");
  const int64_t rows = x->value.dim(0), d = x->value.dim(1);
  Tensor<T> out = x->value;
  std::vector<T> norms(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    T* p = out.data() + r * d;
    T ss = 0;
    for (int64_t j = 0; j < d; ++j) ss += p[j] * p[j];
    const T norm = std::max(std::sqrt(ss), T(1e-12));
    norms[static_cast<size_t>(r)] = norm;
    for (int64_t j = 0; j < d; ++j) p[j] /= norm;
  }
  return make_result<T>(std::move(out), {x}, [rows, d, norms = std::move(norms)](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * d;
      const T* dy = self.grad.data() + r * d;
      T inner = 0;
      for (int64_t j = 0; j < d; ++j) inner += y[j] * dy[j];
      const T inv = T(1) / norms[static_cast<size_t>(r)];
      for (int64_t j = 0; j < d; ++j) g[r * d + j] += (dy[j] - y[j] * inner) * inv;
    }
  });
}

template <typename T>
Var<T> masked_mse(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& mask) {
  const auto& s = pred->value.shape();
  require(target.shape() == s, "masked_mse: target shape " + shape_string(target.shape()) + " vs " + shape_string(s));
  int64_t channels = 1, plane = pred->value.numel(), batch = 1;
  if (!mask.empty()) {
    require(pred->value.rank() == 4 && mask.rank() == 4 && mask.dim(0) == s[0] && mask.dim(1) == 1 &&
                mask.dim(2) == s[2] && mask.dim(3) == s[3],
            "masked_mse: mask " + shape_string(mask.shape()) + " does not match prediction " + shape_string(s));
    batch = s[0];
    channels = s[1];
    plane = s[2] * s[3];
  }
  T kept = 0;
  if (mask.empty()) {
    kept = T(pred->value.numel());
  } else {
    for (int64_t i = 0; i < mask.numel(); ++i) kept += mask[i];
    kept *= T(channels);
  }
  // Mask value broadcast over channels, or 1 without a mask.
  auto weight = [channels, plane](const Tensor<T>& m, int64_t idx) -> T {
    if (m.empty()) return T(1);
    const int64_t n = idx / (channels * plane);
    return m[n * plane + idx % plane];
  };
  (void)batch;
  T total = 0;
  for (int64_t i = 0; i < pred->value.numel(); ++i) {
    const T r = weight(mask, i) * (pred->value[i] - target[i]);
    total += r * r;
  }
  Tensor<T> out({1}, kept > T(0) ? total / kept : T(0));
  return make_result<T>(std::move(out), {pred}, [target, mask, kept, weight](Node<T>& self) {
    if (kept <= T(0)) return;
    auto& g = self.parents[0]->grad_buffer();
    const T upstream = self.grad[0] * T(2) / kept;
    const auto& p = self.parents[0]->value;
    for (int64_t i = 0; i < g.numel(); ++i) {
      const T w = weight(mask, i);
      g[i] += upstream * w * w * (p[i] - target[i]);
    }
  });
}

template <typename T>
Var<T> infonce_slots(const Var<T>& anchor, const Var<T>& positive, const Tensor<T>& bank,
                     const std::vector<int64_t>& slots, T tau) {
  require(tau > T(0), "infonce: temperature must be positive");
  check_same(anchor, positive, "infonce");
  const int64_t b = anchor->value.dim(0), d = anchor->value.dim(1);
  require(bank.rank() == 2 && bank.dim(1) == d, "infonce: bank width differs from embedding width");
  const int64_t k = bank.dim(0);
  require(static_cast<int64_t>(slots.size()) == b, "infonce: one designated slot per row");
  std::vector<int64_t> owner(static_cast<size_t>(k), -1);
  for (int64_t r = 0; r < b; ++r) {
    const int64_t s = slots[static_cast<size_t>(r)];
    require(s >= 0 && s < k, "infonce: designated slot outside the bank");
    require(owner[static_cast<size_t>(s)] < 0, "infonce: designated slots must be distinct");
    owner[static_cast<size_t>(s)] = r;
  }
  for (const Tensor<T>* t : std::initializer_list<const Tensor<T>*>{&anchor->value, &positive->value, &bank})
    for (T v : t->storage())
      if (!std::isfinite(v)) fail(ErrorCode::numeric, "infonce: non-finite embedding value");

  Tensor<T> view = bank;
  for (int64_t r = 0; r < b; ++r)
    std::copy(positive->value.data() + r * d, positive->value.data() + (r + 1) * d,
              view.data() + slots[static_cast<size_t>(r)] * d);
  // probs[r, j] = softmax_j(a_r . view_j / tau)
  Tensor<T> probs({b, k});
  simd::gemm<T>(false, true, b, k, d, anchor->value.data(), d, view.data(), d, probs.data(), k, false);
  Tensor<T> out({b});
  for (int64_t r = 0; r < b; ++r) {
    T* pr = probs.data() + r * k;
    const int64_t s = slots[static_cast<size_t>(r)];
    for (int64_t j = 0; j < k; ++j) pr[j] /= tau;
    const T mx = *std::max_element(pr, pr + k);
    T rest = 0;
    for (int64_t j = 0; j < k; ++j)
      if (j != s) rest += std::exp(pr[j] - mx);
    const T self = std::exp(pr[s] - mx);
    // log1p keeps the nearly-solved case (loss ~ 1e-12) accurate.
    out[r] = pr[s] == mx ? std::log1p(rest) : (mx - pr[s]) + std::log(self + rest);
    const T lse = mx + std::log(self + rest);
    for (int64_t j = 0; j < k; ++j) pr[j] = std::exp(pr[j] - lse);
  }
  return make_result<T>(std::move(out), {anchor, positive},
                        [b, d, k, tau, slots, view = std::move(view), probs = std::move(probs)](Node<T>& self) {
                          auto& pa = *self.parents[0];
                          auto& pp = *self.parents[1];
                          // coef[r, j] = g_r / tau * (probs[r, j] - [j == slot_r])
                          std::vector<T> coef(static_cast<size_t>(b * k));
                          for (int64_t r = 0; r < b; ++r) {
                            const T g = self.grad[r] / tau;
                            for (int64_t j = 0; j < k; ++j) coef[static_cast<size_t>(r * k + j)] = g * probs[r * k + j];
                            coef[static_cast<size_t>(r * k + slots[static_cast<size_t>(r)])] -= g;
                          }
                          if (pa.requires_grad) {
                            auto& ga = pa.grad_buffer();
                            simd::gemm<T>(false, false, b, d, k, coef.data(), k, view.data(), d, ga.data(), d, true);
                          }
                          if (pp.requires_grad) {
                            auto& gp = pp.grad_buffer();
                            for (int64_t q = 0; q < b; ++q) {
                              const int64_t s = slots[static_cast<size_t>(q)];
                              for (int64_t r = 0; r < b; ++r) {
                                const T c = coef[static_cast<size_t>(r * k + s)];
                                for (int64_t j = 0; j < d; ++j) gp[q * d + j] += c * pa.value[r * d + j];
                              }
                            }
                          }
                        });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total = 0;
  for (T v : x->value.storage()) total += v;
  return make_result<T>(Tensor<T>({1}, total), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / T(x->value.numel()));
}

#define VTG_INSTANTIATE_OPS(T)                                                                   \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> scale<T>(const Var<T>&, T);                                                    \
  template Var<T> mul_const<T>(const Var<T>&, const Tensor<T>&);                                 \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                              \
  template Var<T> relu<T>(const Var<T>&);                                                        \
  template Var<T> silu<T>(const Var<T>&);                                                        \
  template Var<T> gelu<T>(const Var<T>&);                                                        \
  template Var<T> add_channel_vector<T>(const Var<T>&, const Var<T>&);                           \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);              \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                        \
  template Var<T> bmm<T>(const Var<T>&, const Var<T>&, bool, bool);                              \
  template Var<T> softmax_last<T>(const Var<T>&);                                                \
  template Var<T> group_norm<T>(const Var<T>&, int, const Var<T>&, const Var<T>&, T);            \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);                 \
  template Var<T> max_pool2x2<T>(const Var<T>&);                                                 \
  template Var<T> upsample_nearest2x<T>(const Var<T>&);                                          \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                             \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                              \
  template Var<T> nchw_to_tokens<T>(const Var<T>&);                                              \
  template Var<T> tokens_to_nchw<T>(const Var<T>&, int64_t, int64_t);                            \
  template Var<T> split_heads<T>(const Var<T>&, int);                                            \
  template Var<T> merge_heads<T>(const Var<T>&, int);                                            \
  template Var<T> l2_normalize_rows<T>(const Var<T>&);                                           \
  template Var<T> masked_mse<T>(const Var<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Var<T> infonce_slots<T>(const Var<T>&, const Var<T>&, const Tensor<T>&, const std::vector<int64_t>&, T); \
  template Var<T> mean<T>(const Var<T>&);                                                        \
  template Var<T> sum<T>(const Var<T>&);

VTG_INSTANTIATE_OPS(float)
VTG_INSTANTIATE_OPS(double)

}  // namespace vtg::nn
