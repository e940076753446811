#include "msui2i/core/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace msui2i {

namespace {

thread_local bool g_grad_enabled = true;

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

Var make_node(Tensor value, std::vector<Var> parents) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg && g_grad_enabled;
  if (n->requires_grad) n->parents = std::move(parents);
  return n;
}

void check_chw(const Var& x, const char* what) {
  MSUI2I_REQUIRE(x->value.rank() == 3, std::string(what) + ": expected a CHW tensor");
}

// Maps padded coordinates to source spatial indices; -1 marks zero padding.
// Reflection mirrors about the edge pixel (no edge repeat).
std::vector<int> pad_index_map(int h, int w, int ph, int pw, PadMode mode) {
  const int hp = h + 2 * ph, wp = w + 2 * pw;
  std::vector<int> map(static_cast<size_t>(hp) * wp, -1);
  for (int y = 0; y < hp; ++y) {
    int sy = y - ph;
    if (mode == PadMode::Reflect) {
      if (sy < 0) sy = -sy;
      if (sy >= h) sy = 2 * h - 2 - sy;
    }
    for (int x = 0; x < wp; ++x) {
      int sx = x - pw;
      if (mode == PadMode::Reflect) {
        if (sx < 0) sx = -sx;
        if (sx >= w) sx = 2 * w - 2 - sx;
      }
      if (sy >= 0 && sy < h && sx >= 0 && sx < w) map[static_cast<size_t>(y) * wp + x] = sy * w + sx;
    }
  }
  return map;
}

// col: (OH*OW) x (Cin*kh*kw), row-major.
void im2col(const Tensor& x, const std::vector<int>& pmap, int wp, int kh, int kw, int stride,
            int oh, int ow, std::vector<double>& col) {
  const int cin = x.dim(0);
  const int64_t plane = static_cast<int64_t>(x.dim(1)) * x.dim(2);
  const int64_t kcols = static_cast<int64_t>(cin) * kh * kw;
  col.assign(static_cast<size_t>(oh) * ow * kcols, 0.0);
  const double* xd = x.data();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* row = col.data() + (static_cast<int64_t>(oy) * ow + ox) * kcols;
      for (int ky = 0; ky < kh; ++ky) {
        const int py = oy * stride + ky;
        const int* mrow = pmap.data() + static_cast<size_t>(py) * wp + ox * stride;
        for (int kx = 0; kx < kw; ++kx) {
          const int src = mrow[kx];
          if (src < 0) continue;
          double* cell = row + ky * kw + kx;
          for (int c = 0; c < cin; ++c) cell[static_cast<int64_t>(c) * kh * kw] = xd[c * plane + src];
        }
      }
    }
  }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

Var make_leaf(Tensor value, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

Var make_const(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var detach(const Var& v) { return make_const(v->value); }

void backward(const Var& root) {
  MSUI2I_REQUIRE(root->value.numel() == 1, "backward root must be scalar");
  if (!root->requires_grad) return;

  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
  MSUI2I_REQUIRE(a->value.same_shape(b->value), "add: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  auto n = make_node(std::move(out), {a, b});
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      for (int pi = 0; pi < 2; ++pi) {
        Node& p = *self.parents[pi];
        if (!p.requires_grad) continue;
        p.ensure_grad();
        for (int64_t i = 0; i < p.grad.numel(); ++i) p.grad[i] += self.grad[i];
      }
    };
  return n;
}

Var sub(const Var& a, const Var& b) {
  MSUI2I_REQUIRE(a->value.same_shape(b->value), "sub: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  auto n = make_node(std::move(out), {a, b});
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node& a = *self.parents[0];
      Node& b = *self.parents[1];
      if (a.requires_grad) {
        a.ensure_grad();
        for (int64_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += self.grad[i];
      }
      if (b.requires_grad) {
        b.ensure_grad();
        for (int64_t i = 0; i < b.grad.numel(); ++i) b.grad[i] -= self.grad[i];
      }
    };
  return n;
}

Var mul(const Var& a, const Var& b) {
  MSUI2I_REQUIRE(a->value.same_shape(b->value), "mul: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  auto n = make_node(std::move(out), {a, b});
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node& a = *self.parents[0];
      Node& b = *self.parents[1];
      if (a.requires_grad) {
        a.ensure_grad();
        for (int64_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += self.grad[i] * b.value[i];
      }
      if (b.requires_grad) {
        b.ensure_grad();
        for (int64_t i = 0; i < b.grad.numel(); ++i) b.grad[i] += self.grad[i] * a.value[i];
      }
    };
  return n;
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backward_fn = [s](Node& self) {
      Node& a = *self.parents[0];
      a.ensure_grad();
      for (int64_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += self.grad[i] * s;
    };
  return n;
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
  auto n = make_node(std::move(out), {a});
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node& a = *self.parents[0];
      a.ensure_grad();
      for (int64_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += self.grad[i];
    };
  return n;
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0 ? out[i] : 0.0;
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int64_t i = 0; i < x.grad.numel(); ++i)
        if (x.value[i] > 0) x.grad[i] += self.grad[i];
    };
  return n;
}

Var leaky_relu(const Var& x, double slope) {
  Tensor out = x->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0 ? out[i] : slope * out[i];
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [slope](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int64_t i = 0; i < x.grad.numel(); ++i)
        x.grad[i] += self.grad[i] * (x.value[i] > 0 ? 1.0 : slope);
    };
  return n;
}

Var tanh_op(const Var& x) {
  Tensor out = x->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int64_t i = 0; i < x.grad.numel(); ++i) {
        const double y = self.value[i];
        x.grad[i] += self.grad[i] * (1.0 - y * y);
      }
    };
  return n;
}

Var abs_op(const Var& x) {
  Tensor out = x->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(out[i]);
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int64_t i = 0; i < x.grad.numel(); ++i) {
        const double v = x.value[i];
        if (v > 0)
          x.grad[i] += self.grad[i];
        else if (v < 0)
          x.grad[i] -= self.grad[i];
      }
    };
  return n;
}

Var square(const Var& x) {
  Tensor out = x->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= out[i];
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int64_t i = 0; i < x.grad.numel(); ++i) x.grad[i] += self.grad[i] * 2.0 * x.value[i];
    };
  return n;
}

Var sqrt_shift(const Var& x, double eps) {
  Tensor out = x->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(out[i] + eps);
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int64_t i = 0; i < x.grad.numel(); ++i)
        x.grad[i] += self.grad[i] * 0.5 / self.value[i];
    };
  return n;
}

// ---------------------------------------------------------------------------
// Structure

Var concat_channels(const std::vector<Var>& parts) {
  MSUI2I_REQUIRE(!parts.empty(), "concat_channels: empty input");
  for (const auto& p : parts) check_chw(p, "concat_channels");
  const int h = parts[0]->value.dim(1), w = parts[0]->value.dim(2);
  int ctotal = 0;
  for (const auto& p : parts) {
    MSUI2I_REQUIRE(p->value.dim(1) == h && p->value.dim(2) == w,
                   "concat_channels: spatial dims differ");
    ctotal += p->value.dim(0);
  }
  Tensor out({ctotal, h, w});
  int64_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data(), p->value.data() + p->value.numel(), out.data() + off);
    off += p->value.numel();
  }
  auto n = make_node(std::move(out), parts);
  if (n->requires_grad)
    n->backward_fn = [](Node& self) {
      int64_t off = 0;
      for (auto& pv : self.parents) {
        Node& p = *pv;
        const int64_t cnt = p.value.numel();
        if (p.requires_grad) {
          p.ensure_grad();
          for (int64_t i = 0; i < cnt; ++i) p.grad[i] += self.grad[off + i];
        }
        off += cnt;
      }
    };
  return n;
}

Var slice_channels(const Var& x, int from, int count) {
  check_chw(x, "slice_channels");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  MSUI2I_REQUIRE(from >= 0 && count > 0 && from + count <= c, "slice_channels: out of range");
  Tensor out({count, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  std::copy(x->value.data() + from * plane, x->value.data() + (from + count) * plane, out.data());
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [from, plane](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) x.grad[from * plane + i] += self.grad[i];
    };
  return n;
}

Var channel_mean(const Var& x) {
  check_chw(x, "channel_mean");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor out({1, h, w});
  for (int ci = 0; ci < c; ++ci)
    for (int64_t i = 0; i < plane; ++i) out[i] += x->value[ci * plane + i];
  const double inv = 1.0 / c;
  for (int64_t i = 0; i < plane; ++i) out[i] *= inv;
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [c, plane, inv](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < plane; ++i) x.grad[ci * plane + i] += self.grad[i] * inv;
    };
  return n;
}

Var upsample_nearest_to(const Var& x, int oh, int ow) {
  check_chw(x, "upsample_nearest_to");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  MSUI2I_REQUIRE(oh >= h && ow >= w, "upsample_nearest_to: output smaller than input");
  Tensor out({c, oh, ow});
  for (int ci = 0; ci < c; ++ci)
    for (int oy = 0; oy < oh; ++oy) {
      const int sy = static_cast<int>(static_cast<int64_t>(oy) * h / oh);
      for (int ox = 0; ox < ow; ++ox) {
        const int sx = static_cast<int>(static_cast<int64_t>(ox) * w / ow);
        out.at(ci, oy, ox) = x->value.at(ci, sy, sx);
      }
    }
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [c, h, w, oh, ow](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < oh; ++oy) {
          const int sy = static_cast<int>(static_cast<int64_t>(oy) * h / oh);
          for (int ox = 0; ox < ow; ++ox) {
            const int sx = static_cast<int>(static_cast<int64_t>(ox) * w / ow);
            x.grad.at(ci, sy, sx) += self.grad.at(ci, oy, ox);
          }
        }
    };
  return n;
}

Var upsample_nearest(const Var& x, int factor) {
  MSUI2I_REQUIRE(factor >= 1, "upsample_nearest: factor must be >= 1");
  return upsample_nearest_to(x, x->value.dim(1) * factor, x->value.dim(2) * factor);
}

Var adaptive_avg_pool(const Var& x, int bh, int bw) {
  check_chw(x, "adaptive_avg_pool");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  MSUI2I_REQUIRE(bh >= 1 && bw >= 1 && bh <= h && bw <= w, "adaptive_avg_pool: bad bin grid");
  auto lo = [](int i, int in, int bins) { return static_cast<int>(static_cast<int64_t>(i) * in / bins); };
  auto hi = [](int i, int in, int bins) {
    return static_cast<int>((static_cast<int64_t>(i + 1) * in + bins - 1) / bins);
  };
  Tensor out({c, bh, bw});
  for (int ci = 0; ci < c; ++ci)
    for (int by = 0; by < bh; ++by)
      for (int bx = 0; bx < bw; ++bx) {
        double s = 0.0;
        const int y0 = lo(by, h, bh), y1 = hi(by, h, bh);
        const int x0 = lo(bx, w, bw), x1 = hi(bx, w, bw);
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) s += x->value.at(ci, y, xx);
        out.at(ci, by, bx) = s / ((y1 - y0) * (x1 - x0));
      }
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [c, h, w, bh, bw, lo, hi](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int by = 0; by < bh; ++by)
          for (int bx = 0; bx < bw; ++bx) {
            const int y0 = lo(by, h, bh), y1 = hi(by, h, bh);
            const int x0 = lo(bx, w, bw), x1 = hi(bx, w, bw);
            const double g = self.grad.at(ci, by, bx) / ((y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y)
              for (int xx = x0; xx < x1; ++xx) x.grad.at(ci, y, xx) += g;
          }
    };
  return n;
}

Var mean_all(const Var& x) {
  const int64_t n_el = x->value.numel();
  MSUI2I_REQUIRE(n_el > 0, "mean_all: empty tensor");
  double s = 0.0;
  for (int64_t i = 0; i < n_el; ++i) s += x->value[i];
  auto n = make_node(Tensor::scalar(s / n_el), {x});
  if (n->requires_grad)
    n->backward_fn = [n_el](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      const double g = self.grad[0] / n_el;
      for (int64_t i = 0; i < n_el; ++i) x.grad[i] += g;
    };
  return n;
}

// ---------------------------------------------------------------------------
// Conv / norm

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, PadMode mode) {
  check_chw(x, "conv2d");
  MSUI2I_REQUIRE(w->value.rank() == 4, "conv2d: weight must be (Cout,Cin,kh,kw)");
  MSUI2I_REQUIRE(b->value.rank() == 1 && b->value.dim(0) == w->value.dim(0),
                 "conv2d: bias shape mismatch");
  const int cin = x->value.dim(0), h = x->value.dim(1), ww = x->value.dim(2);
  const int cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  MSUI2I_REQUIRE(w->value.dim(1) == cin, "conv2d: input channel mismatch");
  MSUI2I_REQUIRE(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  if (mode == PadMode::Reflect) MSUI2I_REQUIRE(pad < h && pad < ww, "conv2d: reflect pad too large");
  const int oh = conv_out_dim(h, kh, stride, pad);
  const int ow = conv_out_dim(ww, kw, stride, pad);
  MSUI2I_REQUIRE(oh >= 1 && ow >= 1, "conv2d: undersized input");

  const int wp = ww + 2 * pad;
  auto pmap = pad_index_map(h, ww, pad, pad, mode);
  std::vector<double> col;
  im2col(x->value, pmap, wp, kh, kw, stride, oh, ow, col);

  const int64_t pcount = static_cast<int64_t>(oh) * ow;
  const int64_t kcols = static_cast<int64_t>(cin) * kh * kw;
  Tensor out({cout, oh, ow});
  {
    CMapRM colm(col.data(), pcount, kcols);
    CMapRM wm(w->value.data(), cout, kcols);
    MatRM y = colm * wm.transpose();  // (P, Cout)
    for (int c = 0; c < cout; ++c) {
      const double bias = b->value[c];
      double* od = out.data() + static_cast<int64_t>(c) * pcount;
      for (int64_t p = 0; p < pcount; ++p) od[p] = y(p, c) + bias;
    }
  }

  auto n = make_node(std::move(out), {x, w, b});
  if (n->requires_grad) {
    n->backward_fn = [cin, h, ww, cout, kh, kw, stride, pad, oh, ow, wp,
                      pmap = std::move(pmap)](Node& self) {
      Node& x = *self.parents[0];
      Node& w = *self.parents[1];
      Node& b = *self.parents[2];
      const int64_t pcount = static_cast<int64_t>(oh) * ow;
      const int64_t kcols = static_cast<int64_t>(cin) * kh * kw;

      // dY as (P, Cout)
      MatRM dy(pcount, cout);
      for (int c = 0; c < cout; ++c) {
        const double* gd = self.grad.data() + static_cast<int64_t>(c) * pcount;
        for (int64_t p = 0; p < pcount; ++p) dy(p, c) = gd[p];
      }

      if (b.requires_grad) {
        b.ensure_grad();
        for (int c = 0; c < cout; ++c) b.grad[c] += dy.col(c).sum();
      }
      if (w.requires_grad) {
        std::vector<double> col;
        im2col(x.value, pmap, wp, kh, kw, stride, oh, ow, col);
        CMapRM colm(col.data(), pcount, kcols);
        w.ensure_grad();
        MapRM wg(w.grad.data(), cout, kcols);
        wg.noalias() += dy.transpose() * colm;
      }
      if (x.requires_grad) {
        CMapRM wm(w.value.data(), cout, kcols);
        MatRM dcol = dy * wm;  // (P, kcols)
        x.ensure_grad();
        double* xg = x.grad.data();
        const int64_t plane = static_cast<int64_t>(h) * ww;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            const int64_t p = static_cast<int64_t>(oy) * ow + ox;
            for (int ky = 0; ky < kh; ++ky) {
              const int py = oy * stride + ky;
              const int* mrow = pmap.data() + static_cast<size_t>(py) * wp + ox * stride;
              for (int kx = 0; kx < kw; ++kx) {
                const int src = mrow[kx];
                if (src < 0) continue;
                for (int c = 0; c < cin; ++c)
                  xg[c * plane + src] += dcol(p, static_cast<int64_t>(c) * kh * kw + ky * kw + kx);
              }
            }
          }
      }
    };
  }
  return n;
}

Var depthwise_conv_fixed(const Var& x, const Tensor& kernel) {
  check_chw(x, "depthwise_conv_fixed");
  MSUI2I_REQUIRE(kernel.rank() == 2, "depthwise_conv_fixed: kernel must be 2D");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const int kh = kernel.dim(0), kw = kernel.dim(1);
  MSUI2I_REQUIRE(kh % 2 == 1 && kw % 2 == 1, "depthwise_conv_fixed: kernel must be odd-sized");
  const int ph = kh / 2, pw = kw / 2;
  MSUI2I_REQUIRE(ph < h && pw < w, "depthwise_conv_fixed: kernel too large for input");

  auto pmap = pad_index_map(h, w, ph, pw, PadMode::Reflect);
  const int wp = w + 2 * pw;
  Tensor out({c, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const double* xd = x->value.data() + ci * plane;
    double* od = out.data() + ci * plane;
    for (int oy = 0; oy < h; ++oy)
      for (int ox = 0; ox < w; ++ox) {
        double s = 0.0;
        for (int ky = 0; ky < kh; ++ky) {
          const int* mrow = pmap.data() + static_cast<size_t>(oy + ky) * wp + ox;
          for (int kx = 0; kx < kw; ++kx) {
            const int src = mrow[kx];
            if (src >= 0) s += kernel.at(ky, kx) * xd[src];
          }
        }
        od[static_cast<int64_t>(oy) * w + ox] = s;
      }
  }

  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [c, h, w, kh, kw, wp, plane, kernel, pmap = std::move(pmap)](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int ci = 0; ci < c; ++ci) {
        const double* gd = self.grad.data() + ci * plane;
        double* xg = x.grad.data() + ci * plane;
        for (int oy = 0; oy < h; ++oy)
          for (int ox = 0; ox < w; ++ox) {
            const double g = gd[static_cast<int64_t>(oy) * w + ox];
            if (g == 0.0) continue;
            for (int ky = 0; ky < kh; ++ky) {
              const int* mrow = pmap.data() + static_cast<size_t>(oy + ky) * wp + ox;
              for (int kx = 0; kx < kw; ++kx) {
                const int src = mrow[kx];
                if (src >= 0) xg[src] += g * kernel.at(ky, kx);
              }
            }
          }
      }
    };
  return n;
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  check_chw(x, "instance_norm");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  MSUI2I_REQUIRE(gamma->value.rank() == 1 && gamma->value.dim(0) == c, "instance_norm: gamma shape");
  MSUI2I_REQUIRE(beta->value.rank() == 1 && beta->value.dim(0) == c, "instance_norm: beta shape");
  const int64_t plane = static_cast<int64_t>(h) * w;

  Tensor out({c, h, w});
  std::vector<double> mean(c), istd(c);
  for (int ci = 0; ci < c; ++ci) {
    const double* xd = x->value.data() + ci * plane;
    double m = 0.0;
    for (int64_t i = 0; i < plane; ++i) m += xd[i];
    m /= plane;
    double v = 0.0;
    for (int64_t i = 0; i < plane; ++i) {
      const double d = xd[i] - m;
      v += d * d;
    }
    v /= plane;
    mean[ci] = m;
    istd[ci] = 1.0 / std::sqrt(v + eps);
    const double g = gamma->value[ci], b = beta->value[ci];
    double* od = out.data() + ci * plane;
    for (int64_t i = 0; i < plane; ++i) od[i] = g * (xd[i] - m) * istd[ci] + b;
  }

  auto n = make_node(std::move(out), {x, gamma, beta});
  if (n->requires_grad)
    n->backward_fn = [c, plane, mean = std::move(mean), istd = std::move(istd)](Node& self) {
      Node& x = *self.parents[0];
      Node& gamma = *self.parents[1];
      Node& beta = *self.parents[2];
      for (int ci = 0; ci < c; ++ci) {
        const double* xd = x.value.data() + ci * plane;
        const double* gd = self.grad.data() + ci * plane;
        const double m = mean[ci], is = istd[ci];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int64_t i = 0; i < plane; ++i) {
          const double xhat = (xd[i] - m) * is;
          sum_dy += gd[i];
          sum_dy_xhat += gd[i] * xhat;
        }
        if (gamma.requires_grad) {
          gamma.ensure_grad();
          gamma.grad[ci] += sum_dy_xhat;
        }
        if (beta.requires_grad) {
          beta.ensure_grad();
          beta.grad[ci] += sum_dy;
        }
        if (x.requires_grad) {
          x.ensure_grad();
          double* xg = x.grad.data() + ci * plane;
          const double g = gamma.value[ci];
          const double mean_dy = sum_dy / plane;
          const double mean_dy_xhat = sum_dy_xhat / plane;
          for (int64_t i = 0; i < plane; ++i) {
            const double xhat = (xd[i] - m) * is;
            xg[i] += g * is * (gd[i] - mean_dy - xhat * mean_dy_xhat);
          }
        }
      }
    };
  return n;
}

Var softmax_channels(const Var& x) {
  check_chw(x, "softmax_channels");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor out({c, h, w});
  for (int64_t i = 0; i < plane; ++i) {
    double mx = x->value[i];
    for (int ci = 1; ci < c; ++ci) mx = std::max(mx, x->value[ci * plane + i]);
    double z = 0.0;
    for (int ci = 0; ci < c; ++ci) {
      const double e = std::exp(x->value[ci * plane + i] - mx);
      out[ci * plane + i] = e;
      z += e;
    }
    const double inv = 1.0 / z;
    for (int ci = 0; ci < c; ++ci) out[ci * plane + i] *= inv;
  }
  auto n = make_node(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [c, plane](Node& self) {
      Node& x = *self.parents[0];
      x.ensure_grad();
      for (int64_t i = 0; i < plane; ++i) {
        double dot = 0.0;
        for (int ci = 0; ci < c; ++ci) dot += self.grad[ci * plane + i] * self.value[ci * plane + i];
        for (int ci = 0; ci < c; ++ci) {
          const double y = self.value[ci * plane + i];
          x.grad[ci * plane + i] += y * (self.grad[ci * plane + i] - dot);
        }
      }
    };
  return n;
}

Var nll_indexed(const Var& prob, const Tensor& labels, double clamp) {
  check_chw(prob, "nll_indexed");
  MSUI2I_REQUIRE(labels.rank() == 2, "nll_indexed: labels must be HxW");
  const int c = prob->value.dim(0), h = prob->value.dim(1), w = prob->value.dim(2);
  MSUI2I_REQUIRE(labels.dim(0) == h && labels.dim(1) == w, "nll_indexed: label dims mismatch");
  const int64_t plane = static_cast<int64_t>(h) * w;
  double loss = 0.0;
  for (int64_t i = 0; i < plane; ++i) {
    const int cls = static_cast<int>(labels[i]);
    MSUI2I_REQUIRE(cls >= 0 && cls < c, "nll_indexed: class id out of range");
    loss -= std::log(std::max(prob->value[cls * plane + i], clamp));
  }
  auto n = make_node(Tensor::scalar(loss / plane), {prob});
  if (n->requires_grad)
    n->backward_fn = [plane, labels, clamp](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      const double g = self.grad[0] / plane;
      for (int64_t i = 0; i < plane; ++i) {
        const int cls = static_cast<int>(labels[i]);
        const double pv = p.value[cls * plane + i];
        if (pv > clamp) p.grad[cls * plane + i] -= g / pv;
      }
    };
  return n;
}

}  // namespace msui2i
