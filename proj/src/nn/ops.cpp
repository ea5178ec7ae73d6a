#include "recon/nn/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <utility>

#include "recon/errors.hpp"
#include "recon/mri_ops.hpp"

namespace recon::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Var& a, const Var& b, const char* what) {
  if (!a->value.same_shape(b->value))
    throw DimensionError(std::string(what) + ": shape mismatch " +
                         shape_str(a->value.shape) + " vs " +
                         shape_str(b->value.shape));
}

void accumulate(Node* node, const Tensor& g) {
  if (!node->needs_grad) return;
  Tensor& dst = node->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst.data[i] += g.data[i];
}

// Gathers conv patches: cols is (Cin*kh*kw) x (Ho*Wo), row-major.
void im2col(const double* x, int cin, int h, int w, int kh, int kw, int stride,
            int pad, int ho, int wo, double* cols) {
  const std::size_t patch = static_cast<std::size_t>(ho) * wo;
  for (int ci = 0; ci < cin; ++ci) {
    const double* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        double* row =
            cols + (static_cast<std::size_t>(ci) * kh * kw + ky * kw + kx) * patch;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* out = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::memset(out, 0, sizeof(double) * static_cast<std::size_t>(wo));
            continue;
          }
          const double* in = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            out[ox] = (ix >= 0 && ix < w) ? in[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col.
void col2im_add(const double* cols, int cin, int h, int w, int kh, int kw,
                int stride, int pad, int ho, int wo, double* x) {
  const std::size_t patch = static_cast<std::size_t>(ho) * wo;
  for (int ci = 0; ci < cin; ++ci) {
    double* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const double* row =
            cols + (static_cast<std::size_t>(ci) * kh * kw + ky * kw + kx) * patch;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          double* out = plane + static_cast<std::size_t>(iy) * w;
          const double* in = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
  Var node = make_op(std::move(out), {a, b});
  Node* raw = node.get();
  node->backward_fn = [raw] {
    accumulate(raw->parents[0].get(), raw->grad);
    accumulate(raw->parents[1].get(), raw->grad);
  };
  return node;
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b->value.data[i];
  Var node = make_op(std::move(out), {a, b});
  Node* raw = node.get();
  node->backward_fn = [raw] {
    accumulate(raw->parents[0].get(), raw->grad);
    Node* b_node = raw->parents[1].get();
    if (b_node->needs_grad) {
      Tensor& dst = b_node->ensure_grad();
      for (std::size_t i = 0; i < raw->grad.size(); ++i)
        dst.data[i] -= raw->grad.data[i];
    }
  };
  return node;
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  for (double& v : out.data) v *= s;
  Var node = make_op(std::move(out), {a});
  Node* raw = node.get();
  node->backward_fn = [raw, s] {
    Node* a_node = raw->parents[0].get();
    if (!a_node->needs_grad) return;
    Tensor& dst = a_node->ensure_grad();
    for (std::size_t i = 0; i < raw->grad.size(); ++i)
      dst.data[i] += s * raw->grad.data[i];
  };
  return node;
}

Var leaky_relu(const Var& x, double negative_slope) {
  Tensor out = x->value;
  for (double& v : out.data)
    if (v < 0.0) v *= negative_slope;
  Var node = make_op(std::move(out), {x});
  Node* raw = node.get();
  node->backward_fn = [raw, negative_slope] {
    Node* x_node = raw->parents[0].get();
    if (!x_node->needs_grad) return;
    Tensor& dst = x_node->ensure_grad();
    const Tensor& xin = x_node->value;
    for (std::size_t i = 0; i < raw->grad.size(); ++i)
      dst.data[i] +=
          raw->grad.data[i] * (xin.data[i] < 0.0 ? negative_slope : 1.0);
  };
  return node;
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  if (x->value.ndim() != 4) throw DimensionError("conv2d input must be 4D");
  if (w->value.ndim() != 4) throw DimensionError("conv2d weight must be 4D");
  const int n = x->value.dim(0), cin = x->value.dim(1);
  const int h = x->value.dim(2), wd = x->value.dim(3);
  const int cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  if (w->value.dim(1) != cin)
    throw DimensionError("conv2d: weight expects " +
                         std::to_string(w->value.dim(1)) + " input channels, got " +
                         std::to_string(cin));
  if (b->value.ndim() != 1 || b->value.dim(0) != cout)
    throw DimensionError("conv2d: bias shape mismatch");
  if (stride < 1 || pad < 0) throw DimensionError("conv2d: bad stride/pad");
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho < 1 || wo < 1) throw DimensionError("conv2d: empty output");

  const std::size_t k_rows = static_cast<std::size_t>(cin) * kh * kw;
  const std::size_t patch = static_cast<std::size_t>(ho) * wo;
  const std::size_t in_plane = static_cast<std::size_t>(cin) * h * wd;
  const std::size_t out_plane = static_cast<std::size_t>(cout) * patch;

  Tensor out = Tensor::zeros({n, cout, ho, wo});
  std::vector<double> cols(k_rows * patch);
  CMapMat wm(w->value.data.data(), cout, static_cast<Eigen::Index>(k_rows));
  for (int i = 0; i < n; ++i) {
    im2col(x->value.data.data() + static_cast<std::size_t>(i) * in_plane, cin, h,
           wd, kh, kw, stride, pad, ho, wo, cols.data());
    CMapMat cm(cols.data(), static_cast<Eigen::Index>(k_rows),
               static_cast<Eigen::Index>(patch));
    MapMat om(out.data.data() + static_cast<std::size_t>(i) * out_plane, cout,
              static_cast<Eigen::Index>(patch));
    om.noalias() = wm * cm;
    for (int co = 0; co < cout; ++co)
      om.row(co).array() += b->value.data[static_cast<std::size_t>(co)];
  }

  Var node = make_op(std::move(out), {x, w, b});
  Node* raw = node.get();
  node->backward_fn = [raw, n, cin, h, wd, cout, kh, kw, stride, pad, ho, wo,
                       k_rows, patch, in_plane, out_plane] {
    Node* xn = raw->parents[0].get();
    Node* wn = raw->parents[1].get();
    Node* bn = raw->parents[2].get();
    CMapMat wm(wn->value.data.data(), cout, static_cast<Eigen::Index>(k_rows));
    std::vector<double> cols(k_rows * patch);

    if (bn->needs_grad) {
      Tensor& gb = bn->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double* g =
            raw->grad.data.data() + static_cast<std::size_t>(i) * out_plane;
        for (int co = 0; co < cout; ++co) {
          double s = 0.0;
          const double* row = g + static_cast<std::size_t>(co) * patch;
          for (std::size_t p = 0; p < patch; ++p) s += row[p];
          gb.data[static_cast<std::size_t>(co)] += s;
        }
      }
    }

    // Weight gradient recomputes the patch matrix instead of caching it; the
    // extra gather is cheaper than holding cols for every conv in the tape.
    if (wn->needs_grad) {
      Tensor& gw = wn->ensure_grad();
      MapMat gwm(gw.data.data(), cout, static_cast<Eigen::Index>(k_rows));
      for (int i = 0; i < n; ++i) {
        im2col(xn->value.data.data() + static_cast<std::size_t>(i) * in_plane,
               cin, h, wd, kh, kw, stride, pad, ho, wo, cols.data());
        CMapMat cm(cols.data(), static_cast<Eigen::Index>(k_rows),
                   static_cast<Eigen::Index>(patch));
        CMapMat gm(raw->grad.data.data() + static_cast<std::size_t>(i) * out_plane,
                   cout, static_cast<Eigen::Index>(patch));
        gwm.noalias() += gm * cm.transpose();
      }
    }

    if (xn->needs_grad) {
      Tensor& gx = xn->ensure_grad();
      for (int i = 0; i < n; ++i) {
        CMapMat gm(raw->grad.data.data() + static_cast<std::size_t>(i) * out_plane,
                   cout, static_cast<Eigen::Index>(patch));
        MapMat cm(cols.data(), static_cast<Eigen::Index>(k_rows),
                  static_cast<Eigen::Index>(patch));
        cm.noalias() = wm.transpose() * gm;
        col2im_add(cols.data(), cin, h, wd, kh, kw, stride, pad, ho, wo,
                   gx.data.data() + static_cast<std::size_t>(i) * in_plane);
      }
    }
  };
  return node;
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x->value.ndim() != 2 || w->value.ndim() != 2 || b->value.ndim() != 1)
    throw DimensionError("linear: expected 2D input, 2D weight, 1D bias");
  const int n = x->value.dim(0), d = x->value.dim(1), o = w->value.dim(0);
  if (w->value.dim(1) != d || b->value.dim(0) != o)
    throw DimensionError("linear: weight/bias shapes inconsistent with input");

  Tensor out = Tensor::zeros({n, o});
  {
    CMapMat xm(x->value.data.data(), n, d);
    CMapMat wm(w->value.data.data(), o, d);
    MapMat om(out.data.data(), n, o);
    om.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < o; ++j)
        om(i, j) += b->value.data[static_cast<std::size_t>(j)];
  }

  Var node = make_op(std::move(out), {x, w, b});
  Node* raw = node.get();
  node->backward_fn = [raw, n, d, o] {
    Node* xn = raw->parents[0].get();
    Node* wn = raw->parents[1].get();
    Node* bn = raw->parents[2].get();
    CMapMat gm(raw->grad.data.data(), n, o);
    if (xn->needs_grad) {
      CMapMat wm(wn->value.data.data(), o, d);
      MapMat gx(xn->ensure_grad().data.data(), n, d);
      gx.noalias() += gm * wm;
    }
    if (wn->needs_grad) {
      CMapMat xm(xn->value.data.data(), n, d);
      MapMat gw(wn->ensure_grad().data.data(), o, d);
      gw.noalias() += gm.transpose() * xm;
    }
    if (bn->needs_grad) {
      Tensor& gb = bn->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < o; ++j)
          gb.data[static_cast<std::size_t>(j)] += gm(i, j);
    }
  };
  return node;
}

Var flatten(const Var& x) {
  if (x->value.ndim() < 2) throw DimensionError("flatten: need at least 2 axes");
  const int n = x->value.dim(0);
  const int rest = static_cast<int>(x->value.size()) / n;
  Tensor out = Tensor::from({n, rest}, x->value.data);
  Var node = make_op(std::move(out), {x});
  Node* raw = node.get();
  node->backward_fn = [raw] {
    accumulate(raw->parents[0].get(), raw->grad);  // same element order
  };
  return node;
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw DimensionError("concat_channels: no inputs");
  const int n = xs[0]->value.dim(0);
  const int h = xs[0]->value.dim(2), w = xs[0]->value.dim(3);
  int c_total = 0;
  for (const auto& x : xs) {
    if (x->value.ndim() != 4 || x->value.dim(0) != n || x->value.dim(2) != h ||
        x->value.dim(3) != w)
      throw DimensionError("concat_channels: incompatible input shapes");
    c_total += x->value.dim(1);
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  Tensor out = Tensor::zeros({n, c_total, h, w});
  for (int i = 0; i < n; ++i) {
    std::size_t dst_c = 0;
    for (const auto& x : xs) {
      const int c = x->value.dim(1);
      const double* src = x->value.data.data() +
                          static_cast<std::size_t>(i) * c * plane;
      double* dst = out.data.data() +
                    (static_cast<std::size_t>(i) * c_total + dst_c) * plane;
      std::memcpy(dst, src, sizeof(double) * static_cast<std::size_t>(c) * plane);
      dst_c += static_cast<std::size_t>(c);
    }
  }

  std::vector<Var> parents(xs.begin(), xs.end());
  Var node = make_op(std::move(out), std::move(parents));
  Node* raw = node.get();
  node->backward_fn = [raw, n, c_total, plane] {
    for (int i = 0; i < n; ++i) {
      std::size_t src_c = 0;
      for (auto& parent : raw->parents) {
        const int c = parent->value.dim(1);
        if (parent->needs_grad) {
          Tensor& dst = parent->ensure_grad();
          const double* src =
              raw->grad.data.data() +
              (static_cast<std::size_t>(i) * c_total + src_c) * plane;
          double* out = dst.data.data() + static_cast<std::size_t>(i) * c * plane;
          for (std::size_t j = 0; j < static_cast<std::size_t>(c) * plane; ++j)
            out[j] += src[j];
        }
        src_c += static_cast<std::size_t>(c);
      }
    }
  };
  return node;
}

Var magnitude_pair(const Var& x) {
  if (x->value.ndim() != 4 || x->value.dim(1) != 2)
    throw DimensionError("magnitude_pair: expected [N, 2, H, W]");
  const int n = x->value.dim(0), h = x->value.dim(2), w = x->value.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  constexpr double kEps = 1e-24;

  Tensor out = Tensor::zeros({n, 1, h, w});
  for (int i = 0; i < n; ++i) {
    const double* re = x->value.data.data() + static_cast<std::size_t>(i) * 2 * plane;
    const double* im = re + plane;
    double* dst = out.data.data() + static_cast<std::size_t>(i) * plane;
    for (std::size_t p = 0; p < plane; ++p)
      dst[p] = std::sqrt(re[p] * re[p] + im[p] * im[p] + kEps);
  }

  Var node = make_op(std::move(out), {x});
  Node* raw = node.get();
  node->backward_fn = [raw, n, plane] {
    Node* xn = raw->parents[0].get();
    if (!xn->needs_grad) return;
    Tensor& gx = xn->ensure_grad();
    for (int i = 0; i < n; ++i) {
      const double* re =
          xn->value.data.data() + static_cast<std::size_t>(i) * 2 * plane;
      const double* im = re + plane;
      const double* mag = raw->value.data.data() + static_cast<std::size_t>(i) * plane;
      const double* g = raw->grad.data.data() + static_cast<std::size_t>(i) * plane;
      double* gre = gx.data.data() + static_cast<std::size_t>(i) * 2 * plane;
      double* gim = gre + plane;
      for (std::size_t p = 0; p < plane; ++p) {
        gre[p] += g[p] * re[p] / mag[p];
        gim[p] += g[p] * im[p] / mag[p];
      }
    }
  };
  return node;
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x->value.data) s += v;
  Var node = make_op(Tensor::scalar(s), {x});
  Node* raw = node.get();
  node->backward_fn = [raw] {
    Node* xn = raw->parents[0].get();
    if (!xn->needs_grad) return;
    Tensor& gx = xn->ensure_grad();
    const double g = raw->grad.data[0];
    for (double& v : gx.data) v += g;
  };
  return node;
}

Var mean(const Var& x) {
  if (x->value.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x->value.size()));
}

Var sum_sq_diff(const Var& a, const Var& b) {
  require_same_shape(a, b, "sum_sq_diff");
  double s = 0.0;
  for (std::size_t i = 0; i < a->value.size(); ++i) {
    const double d = a->value.data[i] - b->value.data[i];
    s += d * d;
  }
  Var node = make_op(Tensor::scalar(s), {a, b});
  Node* raw = node.get();
  node->backward_fn = [raw] {
    Node* an = raw->parents[0].get();
    Node* bn = raw->parents[1].get();
    const double g = raw->grad.data[0];
    for (std::size_t i = 0; i < an->value.size(); ++i) {
      const double d = 2.0 * g * (an->value.data[i] - bn->value.data[i]);
      if (an->needs_grad) an->ensure_grad().data[i] += d;
      if (bn->needs_grad) bn->ensure_grad().data[i] -= d;
    }
  };
  return node;
}

Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta,
                Tensor& running_mean, Tensor& running_var, bool use_batch_stats,
                bool update_running, double momentum, double eps) {
  if (x->value.ndim() != 4) throw DimensionError("batchnorm2d input must be 4D");
  const int n = x->value.dim(0), c = x->value.dim(1);
  const int h = x->value.dim(2), w = x->value.dim(3);
  if (gamma->value.size() != static_cast<std::size_t>(c) ||
      beta->value.size() != static_cast<std::size_t>(c) ||
      running_mean.size() != static_cast<std::size_t>(c) ||
      running_var.size() != static_cast<std::size_t>(c))
    throw DimensionError("batchnorm2d: per-channel arrays must have C entries");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t per_channel = static_cast<std::size_t>(n) * plane;

  std::vector<double> mu(static_cast<std::size_t>(c));
  std::vector<double> inv_std(static_cast<std::size_t>(c));
  auto channel_ptr = [&](const Tensor& t, int i, int ch) {
    return t.data.data() +
           (static_cast<std::size_t>(i) * c + static_cast<std::size_t>(ch)) * plane;
  };

  if (use_batch_stats) {
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double* p = channel_ptr(x->value, i, ch);
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
      }
      const double m = s / static_cast<double>(per_channel);
      double var = 0.0;
      for (int i = 0; i < n; ++i) {
        const double* p = channel_ptr(x->value, i, ch);
        for (std::size_t j = 0; j < plane; ++j) {
          const double d = p[j] - m;
          var += d * d;
        }
      }
      var /= static_cast<double>(per_channel);
      mu[static_cast<std::size_t>(ch)] = m;
      inv_std[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(var + eps);
      if (update_running) {
        // Running variance uses the unbiased estimate, as is conventional.
        const double unbiased =
            per_channel > 1
                ? var * static_cast<double>(per_channel) /
                      static_cast<double>(per_channel - 1)
                : var;
        running_mean.data[static_cast<std::size_t>(ch)] =
            (1.0 - momentum) * running_mean.data[static_cast<std::size_t>(ch)] +
            momentum * m;
        running_var.data[static_cast<std::size_t>(ch)] =
            (1.0 - momentum) * running_var.data[static_cast<std::size_t>(ch)] +
            momentum * unbiased;
      }
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mu[static_cast<std::size_t>(ch)] =
          running_mean.data[static_cast<std::size_t>(ch)];
      inv_std[static_cast<std::size_t>(ch)] =
          1.0 / std::sqrt(running_var.data[static_cast<std::size_t>(ch)] + eps);
    }
  }

  // Normalized activations are needed by both passes; keep one copy.
  auto xhat = std::make_shared<Tensor>(Tensor::zeros(x->value.shape));
  Tensor out = Tensor::zeros(x->value.shape);
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const double* p = channel_ptr(x->value, i, ch);
      double* xh = xhat->data.data() +
                   (static_cast<std::size_t>(i) * c + ch) * plane;
      double* o = out.data.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
      const double m = mu[static_cast<std::size_t>(ch)];
      const double is = inv_std[static_cast<std::size_t>(ch)];
      const double g = gamma->value.data[static_cast<std::size_t>(ch)];
      const double b = beta->value.data[static_cast<std::size_t>(ch)];
      for (std::size_t j = 0; j < plane; ++j) {
        xh[j] = (p[j] - m) * is;
        o[j] = g * xh[j] + b;
      }
    }
  }

  Var node = make_op(std::move(out), {x, gamma, beta});
  Node* raw = node.get();
  node->backward_fn = [raw, xhat, inv_std = std::move(inv_std), n, c, plane,
                       per_channel, use_batch_stats] {
    Node* xn = raw->parents[0].get();
    Node* gn = raw->parents[1].get();
    Node* bn = raw->parents[2].get();
    for (int ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int i = 0; i < n; ++i) {
        const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
        const double* dy = raw->grad.data.data() + off;
        const double* xh = xhat->data.data() + off;
        for (std::size_t j = 0; j < plane; ++j) {
          sum_dy += dy[j];
          sum_dy_xhat += dy[j] * xh[j];
        }
      }
      if (gn->needs_grad)
        gn->ensure_grad().data[static_cast<std::size_t>(ch)] += sum_dy_xhat;
      if (bn->needs_grad)
        bn->ensure_grad().data[static_cast<std::size_t>(ch)] += sum_dy;
      if (!xn->needs_grad) continue;

      const double g = gn->value.data[static_cast<std::size_t>(ch)];
      const double is = inv_std[static_cast<std::size_t>(ch)];
      Tensor& gx = xn->ensure_grad();
      if (use_batch_stats) {
        const double inv_m = 1.0 / static_cast<double>(per_channel);
        for (int i = 0; i < n; ++i) {
          const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
          const double* dy = raw->grad.data.data() + off;
          const double* xh = xhat->data.data() + off;
          double* dx = gx.data.data() + off;
          for (std::size_t j = 0; j < plane; ++j)
            dx[j] += g * is *
                     (dy[j] - inv_m * sum_dy - xh[j] * inv_m * sum_dy_xhat);
        }
      } else {
        for (int i = 0; i < n; ++i) {
          const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
          const double* dy = raw->grad.data.data() + off;
          double* dx = gx.data.data() + off;
          for (std::size_t j = 0; j < plane; ++j) dx[j] += g * is * dy[j];
        }
      }
    }
  };
  return node;
}

Tensor image_to_tensor(const mri::ComplexImage& img) {
  const int h = img.height(), w = img.width();
  Tensor t = Tensor::zeros({2, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < plane; ++i) {
    t.data[i] = img.data()[i].real();
    t.data[plane + i] = img.data()[i].imag();
  }
  return t;
}

Tensor images_to_batch(const std::vector<const mri::ComplexImage*>& imgs) {
  if (imgs.empty()) throw DimensionError("images_to_batch: empty batch");
  const int h = imgs[0]->height(), w = imgs[0]->width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor t = Tensor::zeros({static_cast<int>(imgs.size()), 2, h, w});
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    if (imgs[n]->height() != h || imgs[n]->width() != w)
      throw DimensionError("images_to_batch: inconsistent shapes");
    double* re = t.data.data() + n * 2 * plane;
    double* im = re + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      re[i] = imgs[n]->data()[i].real();
      im[i] = imgs[n]->data()[i].imag();
    }
  }
  return t;
}

mri::ComplexImage tensor_to_image(const Tensor& t, int n) {
  int h = 0, w = 0;
  std::size_t offset = 0;
  if (t.ndim() == 3 && t.dim(0) == 2) {
    h = t.dim(1);
    w = t.dim(2);
    if (n != 0) throw DimensionError("tensor_to_image: 3D tensor has one image");
  } else if (t.ndim() == 4 && t.dim(1) == 2) {
    h = t.dim(2);
    w = t.dim(3);
    if (n < 0 || n >= t.dim(0))
      throw DimensionError("tensor_to_image: batch index out of range");
    offset = static_cast<std::size_t>(n) * 2 * h * w;
  } else {
    throw DimensionError("tensor_to_image: expected [2,H,W] or [N,2,H,W], got " +
                         shape_str(t.shape));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  mri::ComplexImage img(h, w);
  for (std::size_t i = 0; i < plane; ++i)
    img.at(static_cast<int>(i / w), static_cast<int>(i % w)) =
        mri::Cplx{t.data[offset + i], t.data[offset + plane + i]};
  return img;
}

Var dc_residual(const Var& m, const Var& lambda,
                const std::vector<const mri::CoilKSpace*>& k_u,
                const std::vector<const mri::SensitivityMaps*>& maps,
                const std::vector<const mri::SamplingMask*>& masks) {
  if (m->value.ndim() != 4 || m->value.dim(1) != 2)
    throw DimensionError("dc_residual: image batch must be [N, 2, H, W]");
  if (lambda->value.size() != 1)
    throw DimensionError("dc_residual: lambda must be scalar");
  const int n = m->value.dim(0), h = m->value.dim(2), w = m->value.dim(3);
  if (k_u.size() != static_cast<std::size_t>(n) || maps.size() != k_u.size() ||
      masks.size() != k_u.size())
    throw DimensionError("dc_residual: physics arrays must match batch size");
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  for (int i = 0; i < n; ++i) {
    if (k_u[static_cast<std::size_t>(i)]->height() != h ||
        k_u[static_cast<std::size_t>(i)]->width() != w ||
        maps[static_cast<std::size_t>(i)]->coils() !=
            k_u[static_cast<std::size_t>(i)]->coils())
      throw DimensionError("dc_residual: physics shapes inconsistent");
    // The unit assumes measured data outside the mask is zero; feeding an
    // unmasked k-space silently changes the minimization problem.
    const auto* k = k_u[static_cast<std::size_t>(i)];
    const auto* mask = masks[static_cast<std::size_t>(i)];
    for (int col = 0; col < w; ++col) {
      if (mask->column_acquired(col)) continue;
      for (int coil = 0; coil < k->coils(); ++coil)
        for (int r = 0; r < h; ++r)
          if (k->at(coil, r, col) != mri::Cplx{0.0, 0.0})
            throw InvalidStateError(
                "dc_residual: undersampled k-space carries energy outside its "
                "mask");
    }
  }

  const double lam = lambda->value.data[0];
  // Residual images r_n are kept for both output scaling and the lambda
  // gradient.
  auto residuals = std::make_shared<std::vector<mri::ComplexImage>>();
  residuals->reserve(static_cast<std::size_t>(n));
  Tensor out = Tensor::zeros(m->value.shape);
  for (int i = 0; i < n; ++i) {
    mri::ComplexImage mi = tensor_to_image(m->value, i);
    mri::CoilKSpace pred = mri::forward_model(
        mi, *maps[static_cast<std::size_t>(i)], *masks[static_cast<std::size_t>(i)]);
    const auto* ku = k_u[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < pred.size(); ++j)
      pred.data()[j] -= ku->data()[j];
    mri::ComplexImage r =
        mri::adjoint_recon(pred, *maps[static_cast<std::size_t>(i)]);
    double* re = out.data.data() + static_cast<std::size_t>(i) * 2 * plane;
    double* im = re + plane;
    for (std::size_t j = 0; j < plane; ++j) {
      re[j] = lam * r.data()[j].real();
      im[j] = lam * r.data()[j].imag();
    }
    residuals->push_back(std::move(r));
  }

  Var node = make_op(std::move(out), {m, lambda});
  Node* raw = node.get();
  node->backward_fn = [raw, residuals, maps, masks, n, plane] {
    Node* mn = raw->parents[0].get();
    Node* ln = raw->parents[1].get();
    const double lam = ln->value.data[0];
    for (int i = 0; i < n; ++i) {
      const double* gre =
          raw->grad.data.data() + static_cast<std::size_t>(i) * 2 * plane;
      const double* gim = gre + plane;
      if (ln->needs_grad) {
        const mri::ComplexImage& r = (*residuals)[static_cast<std::size_t>(i)];
        double s = 0.0;
        for (std::size_t j = 0; j < plane; ++j)
          s += gre[j] * r.data()[j].real() + gim[j] * r.data()[j].imag();
        ln->ensure_grad().data[0] += s;
      }
      if (mn->needs_grad) {
        // The normal operator A*A is self-adjoint, so the pullback of the
        // residual map is the map itself (applied to the upstream gradient).
        mri::ComplexImage g(static_cast<int>(raw->value.dim(2)),
                            static_cast<int>(raw->value.dim(3)));
        for (std::size_t j = 0; j < plane; ++j)
          g.data()[j] = mri::Cplx{gre[j], gim[j]};
        mri::CoilKSpace gk = mri::forward_model(
            g, *maps[static_cast<std::size_t>(i)],
            *masks[static_cast<std::size_t>(i)]);
        mri::ComplexImage bg =
            mri::adjoint_recon(gk, *maps[static_cast<std::size_t>(i)]);
        Tensor& gm = mn->ensure_grad();
        double* dre = gm.data.data() + static_cast<std::size_t>(i) * 2 * plane;
        double* dim = dre + plane;
        for (std::size_t j = 0; j < plane; ++j) {
          dre[j] += lam * bg.data()[j].real();
          dim[j] += lam * bg.data()[j].imag();
        }
      }
    }
  };
  return node;
}

}  // namespace recon::nn
