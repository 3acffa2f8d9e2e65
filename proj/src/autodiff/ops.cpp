#include "autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "common/error.hpp"

namespace rsg::ad {

using detail::make_result;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_defined(const char* op, const Tensor& t) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined input tensor");
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require_defined(op, a);
  require_defined(op, b);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  require_defined(op, t);
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     " input, got shape " + to_string(t.shape()));
  }
}

// Applies f(x) elementwise with derivative df(x, y) used in backward.
template <typename F, typename DF>
Tensor unary(const char* op, const Tensor& x, F f, DF df) {
  require_defined(op, x);
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto xi = x.impl();
  return make_result(op, x.shape(), std::move(out), {x}, [xi, df](std::span<const double> g) {
    if (!xi->requires_grad) return;
    auto gx = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xi->values[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result("add", a.shape(), std::move(out), {a, b}, [ai, bi](std::span<const double> g) {
    if (ai->requires_grad) {
      auto ga = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bi->requires_grad) {
      auto gb = bi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result("sub", a.shape(), std::move(out), {a, b}, [ai, bi](std::span<const double> g) {
    if (ai->requires_grad) {
      auto ga = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bi->requires_grad) {
      auto gb = bi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result("mul", a.shape(), std::move(out), {a, b}, [ai, bi](std::span<const double> g) {
    if (ai->requires_grad) {
      auto ga = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bi->values[i];
    }
    if (bi->requires_grad) {
      auto gb = bi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ai->values[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result("div", a.shape(), std::move(out), {a, b}, [ai, bi](std::span<const double> g) {
    if (ai->requires_grad) {
      auto ga = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bi->values[i];
    }
    if (bi->requires_grad) {
      auto gb = bi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = bi->values[i];
        gb[i] -= g[i] * ai->values[i] / (d * d);
      }
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary("scale", x, [factor](double v) { return v * factor; },
               [factor](double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary("add_scalar", x, [offset](double v) { return v + offset; },
               [](double) { return 1.0; });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
  return unary("abs", x, [](double v) { return std::abs(v); },
               [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& x, double floor) {
  return unary("log", x, [floor](double v) { return std::log(v > floor ? v : floor); },
               [floor](double v) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return unary("clamp_min", x, [floor](double v) { return v > floor ? v : floor; },
               [floor](double v) { return v > floor ? 1.0 : 0.0; });
}

Tensor pow(const Tensor& x, double exponent) {
  return unary(
      "pow", x, [exponent](double v) { return std::pow(v, exponent); },
      [exponent](double v) {
        if (exponent == 0.0) return 0.0;
        if (v == 0.0) {
          if (exponent > 1.0) return 0.0;
          if (exponent == 1.0) return 1.0;
          return std::numeric_limits<double>::infinity();
        }
        return exponent * std::pow(v, exponent - 1.0);
      });
}

Tensor sum(const Tensor& x) {
  require_defined("sum", x);
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto xi = x.impl();
  return make_result("sum", {}, {s}, {x}, [xi](std::span<const double> g) {
    if (!xi->requires_grad) return;
    auto gx = xi->grad_buffer();
    for (double& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  require_defined("mean", x);
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double n = static_cast<double>(x.numel());
  auto xi = x.impl();
  return make_result("mean", {}, {s / n}, {x}, [xi, n](std::span<const double> g) {
    if (!xi->requires_grad) return;
    auto gx = xi->grad_buffer();
    for (double& v : gx) v += g[0] / n;
  });
}

Tensor sum_per_row(const Tensor& x) {
  require_defined("sum_per_row", x);
  if (x.rank() < 1) throw ShapeError("sum_per_row: scalar input");
  const std::size_t rows = x.dim(0);
  const std::size_t width = rows ? x.numel() / rows : 0;
  auto xv = x.values();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < width; ++k) out[r] += xv[r * width + k];
  auto xi = x.impl();
  return make_result("sum_per_row", {rows}, std::move(out), {x},
                     [xi, width](std::span<const double> g) {
                       if (!xi->requires_grad) return;
                       auto gx = xi->grad_buffer();
                       for (std::size_t r = 0; r < g.size(); ++r)
                         for (std::size_t k = 0; k < width; ++k) gx[r * width + k] += g[r];
                     });
}

Tensor softmax(const Tensor& x) {
  require_defined("softmax", x);
  if (x.rank() != 1 && x.rank() != 2) {
    throw ShapeError("softmax: expected [M] or [N, M], got " + to_string(x.shape()));
  }
  const std::size_t cols = x.shape().back();
  const std::size_t rows = cols ? x.numel() / cols : 0;
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(in[c] - mx);
      z += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  auto xi = x.impl();
  std::vector<double> probs = out;
  return make_result("softmax", x.shape(), std::move(out), {x},
                     [xi, probs = std::move(probs), rows, cols](std::span<const double> g) {
                       if (!xi->requires_grad) return;
                       auto gx = xi->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = probs.data() + r * cols;
                         const double* gr = g.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * y[c];
                         for (std::size_t c = 0; c < cols; ++c)
                           gx[r * cols + c] += y[c] * (gr[c] - dot);
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  const std::size_t n = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{out_f}) {
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  std::vector<double> out(n * out_f);
  ConstMatrixMap X(x.values().data(), n, in);
  ConstMatrixMap Wm(weight.values().data(), out_f, in);
  MatrixMap Y(out.data(), n, out_f);
  Y.noalias() = X * Wm.transpose();
  if (bias.defined()) {
    auto bv = bias.values();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t o = 0; o < out_f; ++o) Y(r, o) += bv[o];
  }
  auto xi = x.impl(), wi = weight.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return make_result("linear", {n, out_f}, std::move(out), {x, weight, bias},
                     [xi, wi, bi, n, in, out_f](std::span<const double> g) {
                       ConstMatrixMap G(g.data(), n, out_f);
                       if (xi->requires_grad) {
                         MatrixMap GX(xi->grad_buffer().data(), n, in);
                         GX.noalias() += G * ConstMatrixMap(wi->values.data(), out_f, in);
                       }
                       if (wi->requires_grad) {
                         MatrixMap GW(wi->grad_buffer().data(), out_f, in);
                         GW.noalias() += G.transpose() * ConstMatrixMap(xi->values.data(), n, in);
                       }
                       if (bi && bi->requires_grad) {
                         auto gb = bi->grad_buffer();
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t o = 0; o < out_f; ++o) gb[o] += G(r, o);
                       }
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " has " + std::to_string(c) +
                     " channels but weight " + to_string(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1)));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (h + 2 * padding < kh || w + 2 * padding < kw) {
    throw ShapeError("conv2d: kernel " + to_string(weight.shape()) + " larger than padded input " +
                     to_string(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{o}) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (w + 2 * padding - kw) / stride + 1;
  const std::size_t k = c * kh * kw, l = ho * wo, cols_n = n * l;

  // im2col: row = (channel, ky, kx), column = (sample, oy, ox).
  auto cols = std::make_shared<std::vector<double>>(k * cols_n, 0.0);
  auto xv = x.values();
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* row = cols->data() + ((ci * kh + ky) * kw + kx) * cols_n;
        for (std::size_t s = 0; s < n; ++s) {
          const double* plane = xv.data() + (s * c + ci) * h * w;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              row[s * l + oy * wo + ox] = plane[iy * w + ix];
            }
          }
        }
      }

  RowMatrix prod(o, cols_n);
  prod.noalias() = ConstMatrixMap(weight.values().data(), o, k) * ConstMatrixMap(cols->data(), k, cols_n);
  std::vector<double> out(n * o * l);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t oc = 0; oc < o; ++oc) {
      const double b = bias.defined() ? bias.values()[oc] : 0.0;
      double* dst = out.data() + (s * o + oc) * l;
      for (std::size_t p = 0; p < l; ++p) dst[p] = prod(oc, s * l + p) + b;
    }

  auto xi = x.impl(), wi = weight.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return make_result(
      "conv2d", {n, o, ho, wo}, std::move(out), {x, weight, bias},
      [=](std::span<const double> g) {
        RowMatrix G(o, cols_n);
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t oc = 0; oc < o; ++oc) {
            const double* src = g.data() + (s * o + oc) * l;
            for (std::size_t p = 0; p < l; ++p) G(oc, s * l + p) = src[p];
          }
        if (wi->requires_grad) {
          MatrixMap GW(wi->grad_buffer().data(), o, k);
          GW.noalias() += G * ConstMatrixMap(cols->data(), k, cols_n).transpose();
        }
        if (bi && bi->requires_grad) {
          auto gb = bi->grad_buffer();
          for (std::size_t oc = 0; oc < o; ++oc) gb[oc] += G.row(oc).sum();
        }
        if (xi->requires_grad) {
          RowMatrix GC(k, cols_n);
          GC.noalias() = ConstMatrixMap(wi->values.data(), o, k).transpose() * G;
          auto gx = xi->grad_buffer();
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::size_t r = (ci * kh + ky) * kw + kx;
                for (std::size_t s = 0; s < n; ++s) {
                  double* plane = gx.data() + (s * c + ci) * h * w;
                  for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                      const long ix =
                          static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
                      if (ix < 0 || ix >= static_cast<long>(w)) continue;
                      plane[iy * w + ix] += GC(r, s * l + oy * wo + ox);
                    }
                  }
                }
              }
        }
      });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank("global_avg_pool", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw ShapeError("global_avg_pool: empty spatial extent " + to_string(x.shape()));
  auto xv = x.values();
  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += xv[i * hw + p];
    out[i] = s / static_cast<double>(hw);
  }
  auto xi = x.impl();
  return make_result("global_avg_pool", {n, c}, std::move(out), {x},
                     [xi, hw](std::span<const double> g) {
                       if (!xi->requires_grad) return;
                       auto gx = xi->grad_buffer();
                       const double inv = 1.0 / static_cast<double>(hw);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         for (std::size_t p = 0; p < hw; ++p) gx[i * hw + p] += g[i] * inv;
                     });
}

Tensor upsample(const Tensor& v, std::size_t height, std::size_t width) {
  require_rank("upsample", v, 2);
  const std::size_t n = v.dim(0), d = v.dim(1), hw = height * width;
  auto vv = v.values();
  std::vector<double> out(n * d * hw);
  for (std::size_t i = 0; i < n * d; ++i) std::fill_n(out.data() + i * hw, hw, vv[i]);
  auto vi = v.impl();
  return make_result("upsample", {n, d, height, width}, std::move(out), {v},
                     [vi, hw](std::span<const double> g) {
                       if (!vi->requires_grad) return;
                       auto gv = vi->grad_buffer();
                       for (std::size_t i = 0; i < gv.size(); ++i)
                         for (std::size_t p = 0; p < hw; ++p) gv[i] += g[i * hw + p];
                     });
}

Tensor channel_norm(const Tensor& x) {
  require_rank("channel_norm", x, 4);
  const std::size_t n = x.dim(0), d = x.dim(1), h = x.dim(2), w = x.dim(3), hw = h * w;
  auto xv = x.values();
  std::vector<double> out(n * hw, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < hw; ++p) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        double v = xv[(s * d + c) * hw + p];
        acc += v * v;
      }
      out[s * hw + p] = std::sqrt(acc);
    }
  auto xi = x.impl();
  std::vector<double> norms = out;
  return make_result("channel_norm", {n, h, w}, std::move(out), {x},
                     [xi, norms = std::move(norms), n, d, hw](std::span<const double> g) {
                       if (!xi->requires_grad) return;
                       auto gx = xi->grad_buffer();
                       for (std::size_t s = 0; s < n; ++s)
                         for (std::size_t p = 0; p < hw; ++p) {
                           const double nr = norms[s * hw + p];
                           if (nr == 0.0) continue;
                           const double f = g[s * hw + p] / nr;
                           for (std::size_t c = 0; c < d; ++c) {
                             const std::size_t i = (s * d + c) * hw + p;
                             gx[i] += f * xi->values[i];
                           }
                         }
                     });
}

Tensor channel_dot(const Tensor& a, const Tensor& b) {
  require_same_shape("channel_dot", a, b);
  require_rank("channel_dot", a, 4);
  const std::size_t n = a.dim(0), d = a.dim(1), h = a.dim(2), w = a.dim(3), hw = h * w;
  auto av = a.values(), bv = b.values();
  std::vector<double> out(n * hw, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t i = (s * d + c) * hw + p;
        out[s * hw + p] += av[i] * bv[i];
      }
  auto ai = a.impl(), bi = b.impl();
  return make_result("channel_dot", {n, h, w}, std::move(out), {a, b},
                     [ai, bi, n, d, hw](std::span<const double> g) {
                       for (std::size_t s = 0; s < n; ++s)
                         for (std::size_t c = 0; c < d; ++c)
                           for (std::size_t p = 0; p < hw; ++p) {
                             const std::size_t i = (s * d + c) * hw + p;
                             const double gi = g[s * hw + p];
                             if (ai->requires_grad) ai->grad_buffer()[i] += gi * bi->values[i];
                             if (bi->requires_grad) bi->grad_buffer()[i] += gi * ai->values[i];
                           }
                     });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank("concat_channels", a, 4);
  require_rank("concat_channels", b, 4);
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  const std::size_t sa = ca * hw, sb = cb * hw;
  std::vector<double> out(n * (sa + sb));
  auto av = a.values(), bv = b.values();
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(av.data() + s * sa, sa, out.data() + s * (sa + sb));
    std::copy_n(bv.data() + s * sb, sb, out.data() + s * (sa + sb) + sa);
  }
  auto ai = a.impl(), bi = b.impl();
  return make_result("concat_channels", {n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b},
                     [ai, bi, n, sa, sb](std::span<const double> g) {
                       for (std::size_t s = 0; s < n; ++s) {
                         const double* src = g.data() + s * (sa + sb);
                         if (ai->requires_grad) {
                           auto ga = ai->grad_buffer();
                           for (std::size_t i = 0; i < sa; ++i) ga[s * sa + i] += src[i];
                         }
                         if (bi->requires_grad) {
                           auto gb = bi->grad_buffer();
                           for (std::size_t i = 0; i < sb; ++i) gb[s * sb + i] += src[sa + i];
                         }
                       }
                     });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_defined("concat_rows", a);
  require_defined("concat_rows", b);
  if (a.rank() < 1 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ShapeError("concat_rows: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<double> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  auto ai = a.impl(), bi = b.impl();
  const std::size_t na = a.numel();
  return make_result("concat_rows", std::move(shape), std::move(out), {a, b},
                     [ai, bi, na](std::span<const double> g) {
                       if (ai->requires_grad) {
                         auto ga = ai->grad_buffer();
                         for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                       }
                       if (bi->requires_grad) {
                         auto gb = bi->grad_buffer();
                         for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
                       }
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_defined("gather_rows", x);
  if (x.rank() < 1) throw ShapeError("gather_rows: scalar input");
  const std::size_t n = x.dim(0);
  const std::size_t width = n ? x.numel() / n : 0;
  for (auto r : rows) {
    if (r >= n) {
      throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for shape " +
                       to_string(x.shape()));
    }
  }
  Shape shape = x.shape();
  shape[0] = rows.size();
  std::vector<double> out(rows.size() * width);
  auto xv = x.values();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(xv.data() + rows[i] * width, width, out.data() + i * width);
  auto xi = x.impl();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result("gather_rows", std::move(shape), std::move(out), {x},
                     [xi, idx = std::move(idx), width](std::span<const double> g) {
                       if (!xi->requires_grad) return;
                       auto gx = xi->grad_buffer();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t k = 0; k < width; ++k)
                           gx[idx[i] * width + k] += g[i * width + k];
                     });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> index) {
  require_rank("pick", x, 2);
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (index.size() != n) {
    throw ShapeError("pick: " + std::to_string(index.size()) + " indices for shape " +
                     to_string(x.shape()));
  }
  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (index[r] >= m) {
      throw ShapeError("pick: column " + std::to_string(index[r]) + " out of range for shape " +
                       to_string(x.shape()));
    }
    out[r] = x.values()[r * m + index[r]];
  }
  auto xi = x.impl();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result("pick", {n}, std::move(out), {x},
                     [xi, idx = std::move(idx), m](std::span<const double> g) {
                       if (!xi->requires_grad) return;
                       auto gx = xi->grad_buffer();
                       for (std::size_t r = 0; r < idx.size(); ++r) gx[r * m + idx[r]] += g[r];
                     });
}

Tensor column_block(const Tensor& x, std::span<const std::size_t> start, std::size_t width) {
  require_rank("column_block", x, 2);
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (start.size() != n) {
    throw ShapeError("column_block: " + std::to_string(start.size()) + " offsets for shape " +
                     to_string(x.shape()));
  }
  std::vector<double> out(n * width);
  for (std::size_t r = 0; r < n; ++r) {
    if (start[r] + width > m) {
      throw ShapeError("column_block: block at " + std::to_string(start[r]) + " of width " +
                       std::to_string(width) + " exceeds shape " + to_string(x.shape()));
    }
    std::copy_n(x.values().data() + r * m + start[r], width, out.data() + r * width);
  }
  auto xi = x.impl();
  std::vector<std::size_t> offs(start.begin(), start.end());
  return make_result("column_block", {n, width}, std::move(out), {x},
                     [xi, offs = std::move(offs), m, width](std::span<const double> g) {
                       if (!xi->requires_grad) return;
                       auto gx = xi->grad_buffer();
                       for (std::size_t r = 0; r < offs.size(); ++r)
                         for (std::size_t k = 0; k < width; ++k)
                           gx[r * m + offs[r] + k] += g[r * width + k];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined("reshape", x);
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  auto xi = x.impl();
  return make_result("reshape", std::move(shape), std::move(out), {x},
                     [xi](std::span<const double> g) {
                       if (!xi->requires_grad) return;
                       auto gx = xi->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::span<double> running_mean, std::span<double> running_var, bool training,
                  double momentum, double eps) {
  require_rank("batch_norm", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} || running_mean.size() != c ||
      running_var.size() != c) {
    throw ShapeError("batch_norm: parameters do not match " + std::to_string(c) +
                     " channels of input " + to_string(x.shape()));
  }
  const std::size_t m = n * hw;
  if (training && m < 2) throw ShapeError("batch_norm: need at least 2 values per channel");
  auto xv = x.values();
  std::vector<double> mu(c), inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < hw; ++p) s += xv[(b * c + ch) * hw + p];
      const double mean_c = s / static_cast<double>(m);
      double v = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < hw; ++p) {
          const double d = xv[(b * c + ch) * hw + p] - mean_c;
          v += d * d;
        }
      const double var_c = v / static_cast<double>(m);
      mu[ch] = mean_c;
      inv_std[ch] = 1.0 / std::sqrt(var_c + eps);
      running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean_c;
      running_var[ch] = (1.0 - momentum) * running_var[ch] +
                        momentum * var_c * static_cast<double>(m) / static_cast<double>(m - 1);
    } else {
      mu[ch] = running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(running_var[ch] + eps);
    }
  }
  std::vector<double> xhat(xv.size()), out(xv.size());
  auto gv = gamma.values(), bv = beta.values();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t i = (b * c + ch) * hw + p;
        xhat[i] = (xv[i] - mu[ch]) * inv_std[ch];
        out[i] = gv[ch] * xhat[i] + bv[ch];
      }
  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  return make_result(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::span<const double> g) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t p = 0; p < hw; ++p) {
              const std::size_t i = (b * c + ch) * hw + p;
              sum_g += g[i];
              sum_gx += g[i] * xhat[i];
            }
          if (bi->requires_grad) bi->grad_buffer()[ch] += sum_g;
          if (gi->requires_grad) gi->grad_buffer()[ch] += sum_gx;
          if (!xi->requires_grad) continue;
          auto gx = xi->grad_buffer();
          const double gam = gi->values[ch];
          const double md = static_cast<double>(m);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t p = 0; p < hw; ++p) {
              const std::size_t i = (b * c + ch) * hw + p;
              if (training) {
                gx[i] += gam * inv_std[ch] * (g[i] - sum_g / md - xhat[i] * sum_gx / md);
              } else {
                gx[i] += gam * inv_std[ch] * g[i];
              }
            }
        }
      });
}

}  // namespace rsg::ad
