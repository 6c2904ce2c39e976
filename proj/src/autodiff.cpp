#include "jitterlab/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace jitterlab {

namespace {

void check_2d_matmul(const Tensor& a, const Tensor& b, bool b_transposed) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw ShapeMismatch("matmul needs rank-2 operands");
  int inner_b = b_transposed ? b.shape[1] : b.shape[0];
  if (a.shape[1] != inner_b)
    throw ShapeMismatch("matmul " + shape_str(a.shape) + " x " + shape_str(b.shape));
}

}  // namespace

int Graph::push(Tensor val, bool rg, std::function<void()> back) {
  Node n;
  n.val = std::move(val);
  n.requires_grad = rg && grad_enabled_;
  if (n.requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::leaf(Tensor t, bool requires_grad) {
  return push(std::move(t), requires_grad, nullptr);
}

int Graph::leaf_ref(const Tensor* t, bool requires_grad) {
  Node n;
  n.ext = t;
  n.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Graph::grad(int id) {
  Node& n = nodes_[id];
  if (!n.grad_alloc) {
    n.grad = Tensor(val(id).shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

void Graph::accumulate(int id, const Tensor& delta) {
  Tensor& g = grad(id);
  for (int64_t i = 0; i < delta.numel(); ++i) g.values[i] += delta.values[i];
}

int Graph::add(int a, int b) {
  const Tensor &ta = val(a), &tb = val(b);
  if (!ta.same_shape(tb))
    throw ShapeMismatch("add " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out.values[i] += tb.values[i];
  bool rg = requires_grad(a) || requires_grad(b);
  int id = push(std::move(out), rg, nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a, b] {
      const Tensor& g = grad(id);
      if (requires_grad(a)) accumulate(a, g);
      if (requires_grad(b)) accumulate(b, g);
    };
  }
  return id;
}

int Graph::add_bias(int a, int bias) {
  const Tensor &ta = val(a), &tb = val(bias);
  if (ta.cols() != static_cast<int>(tb.numel()))
    throw ShapeMismatch("add_bias " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out = ta;
  int n = ta.rows(), d = ta.cols();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) += tb.values[j];
  bool rg = requires_grad(a) || requires_grad(bias);
  int id = push(std::move(out), rg, nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a, bias, n, d] {
      const Tensor& g = grad(id);
      if (requires_grad(a)) accumulate(a, g);
      if (requires_grad(bias)) {
        Tensor& gb = grad(bias);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) gb.values[j] += g.at(i, j);
      }
    };
  }
  return id;
}

int Graph::mul(int a, int b) {
  const Tensor &ta = val(a), &tb = val(b);
  if (!ta.same_shape(tb))
    throw ShapeMismatch("mul " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out.values[i] *= tb.values[i];
  bool rg = requires_grad(a) || requires_grad(b);
  int id = push(std::move(out), rg, nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a, b] {
      const Tensor& g = grad(id);
      if (requires_grad(a)) {
        Tensor& ga = grad(a);
        const Tensor& tb2 = val(b);
        for (int64_t i = 0; i < g.numel(); ++i) ga.values[i] += g.values[i] * tb2.values[i];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad(b);
        const Tensor& ta2 = val(a);
        for (int64_t i = 0; i < g.numel(); ++i) gb.values[i] += g.values[i] * ta2.values[i];
      }
    };
  }
  return id;
}

int Graph::scale(int a, double c) {
  Tensor out = val(a);
  for (auto& v : out.values) v = static_cast<real>(v * c);
  int id = push(std::move(out), requires_grad(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a, c] {
      const Tensor& g = grad(id);
      Tensor& ga = grad(a);
      for (int64_t i = 0; i < g.numel(); ++i)
        ga.values[i] += static_cast<real>(g.values[i] * c);
    };
  }
  return id;
}

int Graph::matmul(int a, int b) {
  const Tensor &ta = val(a), &tb = val(b);
  check_2d_matmul(ta, tb, false);
  int n = ta.shape[0], k = ta.shape[1], m = tb.shape[1];
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    const real* arow = ta.values.data() + static_cast<size_t>(i) * k;
    real* crow = out.values.data() + static_cast<size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      real aik = arow[kk];
      const real* brow = tb.values.data() + static_cast<size_t>(kk) * m;
      for (int j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
  bool rg = requires_grad(a) || requires_grad(b);
  int id = push(std::move(out), rg, nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a, b, n, k, m] {
      const Tensor& g = grad(id);
      if (requires_grad(a)) {
        Tensor& ga = grad(a);
        const Tensor& tb2 = val(b);
        for (int i = 0; i < n; ++i) {
          const real* grow = g.values.data() + static_cast<size_t>(i) * m;
          real* garow = ga.values.data() + static_cast<size_t>(i) * k;
          for (int kk = 0; kk < k; ++kk) {
            const real* brow = tb2.values.data() + static_cast<size_t>(kk) * m;
            real acc = 0;
            for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
            garow[kk] += acc;
          }
        }
      }
      if (requires_grad(b)) {
        Tensor& gb = grad(b);
        const Tensor& ta2 = val(a);
        for (int i = 0; i < n; ++i) {
          const real* arow = ta2.values.data() + static_cast<size_t>(i) * k;
          const real* grow = g.values.data() + static_cast<size_t>(i) * m;
          for (int kk = 0; kk < k; ++kk) {
            real aik = arow[kk];
            real* gbrow = gb.values.data() + static_cast<size_t>(kk) * m;
            for (int j = 0; j < m; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
    };
  }
  return id;
}

int Graph::matmul_nt(int a, int b) {
  const Tensor &ta = val(a), &tb = val(b);
  check_2d_matmul(ta, tb, true);
  int n = ta.shape[0], k = ta.shape[1], m = tb.shape[0];
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    const real* arow = ta.values.data() + static_cast<size_t>(i) * k;
    real* crow = out.values.data() + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const real* brow = tb.values.data() + static_cast<size_t>(j) * k;
      real acc = 0;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = acc;
    }
  }
  bool rg = requires_grad(a) || requires_grad(b);
  int id = push(std::move(out), rg, nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a, b, n, k, m] {
      const Tensor& g = grad(id);
      if (requires_grad(a)) {
        Tensor& ga = grad(a);
        const Tensor& tb2 = val(b);
        for (int i = 0; i < n; ++i) {
          const real* grow = g.values.data() + static_cast<size_t>(i) * m;
          real* garow = ga.values.data() + static_cast<size_t>(i) * k;
          for (int j = 0; j < m; ++j) {
            real gij = grow[j];
            const real* brow = tb2.values.data() + static_cast<size_t>(j) * k;
            for (int kk = 0; kk < k; ++kk) garow[kk] += gij * brow[kk];
          }
        }
      }
      if (requires_grad(b)) {
        Tensor& gb = grad(b);
        const Tensor& ta2 = val(a);
        for (int i = 0; i < n; ++i) {
          const real* grow = g.values.data() + static_cast<size_t>(i) * m;
          const real* arow = ta2.values.data() + static_cast<size_t>(i) * k;
          for (int j = 0; j < m; ++j) {
            real gij = grow[j];
            real* gbrow = gb.values.data() + static_cast<size_t>(j) * k;
            for (int kk = 0; kk < k; ++kk) gbrow[kk] += gij * arow[kk];
          }
        }
      }
    };
  }
  return id;
}

int Graph::relu(int a) {
  Tensor out = val(a);
  for (auto& v : out.values) v = std::max(v, real(0));
  int id = push(std::move(out), requires_grad(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a] {
      const Tensor& g = grad(id);
      const Tensor& ta = val(a);
      Tensor& ga = grad(a);
      for (int64_t i = 0; i < g.numel(); ++i)
        if (ta.values[i] > real(0)) ga.values[i] += g.values[i];
    };
  }
  return id;
}

int Graph::embedding(int table, std::vector<int> ids) {
  const Tensor& tt = val(table);
  if (tt.shape.size() != 2) throw ShapeMismatch("embedding table must be rank 2");
  int v = tt.shape[0], d = tt.shape[1];
  int n = static_cast<int>(ids.size());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    int row = ids[i];
    if (row < 0 || row >= v) throw ShapeMismatch("embedding id out of range");
    std::copy_n(tt.values.data() + static_cast<size_t>(row) * d, d,
                out.values.data() + static_cast<size_t>(i) * d);
  }
  int id = push(std::move(out), requires_grad(table), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, table, ids = std::move(ids), d] {
      const Tensor& g = grad(id);
      Tensor& gt = grad(table);
      for (size_t i = 0; i < ids.size(); ++i) {
        const real* grow = g.values.data() + i * d;
        real* trow = gt.values.data() + static_cast<size_t>(ids[i]) * d;
        for (int j = 0; j < d; ++j) trow[j] += grow[j];
      }
    };
  }
  return id;
}

int Graph::layer_norm(int a, int gain, int bias) {
  constexpr double kEps = 1e-5;
  const Tensor& ta = val(a);
  int n = ta.rows(), d = ta.cols();
  if (val(gain).numel() != d || val(bias).numel() != d)
    throw ShapeMismatch("layer_norm gain/bias size " + std::to_string(d));
  Tensor xhat({n, d});
  std::vector<real> inv_std(static_cast<size_t>(n));
  Tensor out({n, d});
  const Tensor &tg = val(gain), &tb = val(bias);
  for (int i = 0; i < n; ++i) {
    const real* x = ta.values.data() + static_cast<size_t>(i) * d;
    double mu = 0;
    for (int j = 0; j < d; ++j) mu += x[j];
    mu /= d;
    double var = 0;
    for (int j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= d;
    double is = 1.0 / std::sqrt(var + kEps);
    inv_std[i] = static_cast<real>(is);
    for (int j = 0; j < d; ++j) {
      real xh = static_cast<real>((x[j] - mu) * is);
      xhat.at(i, j) = xh;
      out.at(i, j) = tg.values[j] * xh + tb.values[j];
    }
  }
  bool rg = requires_grad(a) || requires_grad(gain) || requires_grad(bias);
  int id = push(std::move(out), rg, nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a, gain, bias, n, d, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)] {
      const Tensor& g = grad(id);
      const Tensor& tg = val(gain);
      if (requires_grad(gain)) {
        Tensor& gg = grad(gain);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) gg.values[j] += g.at(i, j) * xhat.at(i, j);
      }
      if (requires_grad(bias)) {
        Tensor& gb = grad(bias);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) gb.values[j] += g.at(i, j);
      }
      if (requires_grad(a)) {
        Tensor& ga = grad(a);
        for (int i = 0; i < n; ++i) {
          double sum_dxh = 0, sum_dxh_xh = 0;
          for (int j = 0; j < d; ++j) {
            double dxh = static_cast<double>(g.at(i, j)) * tg.values[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xhat.at(i, j);
          }
          for (int j = 0; j < d; ++j) {
            double dxh = static_cast<double>(g.at(i, j)) * tg.values[j];
            double dx = (dxh - sum_dxh / d - xhat.at(i, j) * sum_dxh_xh / d) * inv_std[i];
            ga.at(i, j) += static_cast<real>(dx);
          }
        }
      }
    };
  }
  return id;
}

int Graph::softmax_rows(int a) {
  const Tensor& ta = val(a);
  int n = ta.rows(), d = ta.cols();
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    const real* x = ta.values.data() + static_cast<size_t>(i) * d;
    real* y = out.values.data() + static_cast<size_t>(i) * d;
    real xmax = x[0];
    for (int j = 1; j < d; ++j) xmax = std::max(xmax, x[j]);
    double sum = 0;
    for (int j = 0; j < d; ++j) {
      double e = std::exp(static_cast<double>(x[j] - xmax));
      y[j] = static_cast<real>(e);
      sum += e;
    }
    for (int j = 0; j < d; ++j) y[j] = static_cast<real>(y[j] / sum);
  }
  int id = push(std::move(out), requires_grad(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a, n, d] {
      const Tensor& g = grad(id);
      const Tensor& y = val(id);
      Tensor& ga = grad(a);
      for (int i = 0; i < n; ++i) {
        double dot = 0;
        for (int j = 0; j < d; ++j) dot += static_cast<double>(g.at(i, j)) * y.at(i, j);
        for (int j = 0; j < d; ++j)
          ga.at(i, j) += static_cast<real>(y.at(i, j) * (static_cast<double>(g.at(i, j)) - dot));
      }
    };
  }
  return id;
}

int Graph::slice_rows(int a, int r0, int r1) {
  const Tensor& ta = val(a);
  int d = ta.cols();
  if (r0 < 0 || r1 > ta.rows() || r0 > r1) throw ShapeMismatch("slice_rows range");
  Tensor out({r1 - r0, d});
  std::copy_n(ta.values.data() + static_cast<size_t>(r0) * d, static_cast<size_t>(r1 - r0) * d,
              out.values.data());
  int id = push(std::move(out), requires_grad(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a, r0, d] {
      const Tensor& g = grad(id);
      Tensor& ga = grad(a);
      real* dst = ga.values.data() + static_cast<size_t>(r0) * d;
      for (int64_t i = 0; i < g.numel(); ++i) dst[i] += g.values[i];
    };
  }
  return id;
}

int Graph::slice_cols(int a, int c0, int c1) {
  const Tensor& ta = val(a);
  int n = ta.rows(), d = ta.cols();
  if (c0 < 0 || c1 > d || c0 > c1) throw ShapeMismatch("slice_cols range");
  int w = c1 - c0;
  Tensor out({n, w});
  for (int i = 0; i < n; ++i)
    std::copy_n(ta.values.data() + static_cast<size_t>(i) * d + c0, w,
                out.values.data() + static_cast<size_t>(i) * w);
  int id = push(std::move(out), requires_grad(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a, c0, n, d, w] {
      const Tensor& g = grad(id);
      Tensor& ga = grad(a);
      for (int i = 0; i < n; ++i) {
        const real* src = g.values.data() + static_cast<size_t>(i) * w;
        real* dst = ga.values.data() + static_cast<size_t>(i) * d + c0;
        for (int j = 0; j < w; ++j) dst[j] += src[j];
      }
    };
  }
  return id;
}

int Graph::concat_rows(const std::vector<int>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  int d = val(parts[0]).cols();
  int total = 0;
  bool rg = false;
  for (int p : parts) {
    if (val(p).cols() != d) throw ShapeMismatch("concat_rows column mismatch");
    total += val(p).rows();
    rg = rg || requires_grad(p);
  }
  Tensor out({total, d});
  int row = 0;
  for (int p : parts) {
    const Tensor& tp = val(p);
    std::copy_n(tp.values.data(), tp.numel(), out.values.data() + static_cast<size_t>(row) * d);
    row += tp.rows();
  }
  int id = push(std::move(out), rg, nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, parts, d] {
      const Tensor& g = grad(id);
      int row = 0;
      for (int p : parts) {
        int rows = val(p).rows();
        if (requires_grad(p)) {
          Tensor& gp = grad(p);
          const real* src = g.values.data() + static_cast<size_t>(row) * d;
          for (int64_t i = 0; i < gp.numel(); ++i) gp.values[i] += src[i];
        }
        row += rows;
      }
    };
  }
  return id;
}

int Graph::concat_cols(const std::vector<int>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  int n = val(parts[0]).rows();
  int total = 0;
  bool rg = false;
  for (int p : parts) {
    if (val(p).rows() != n) throw ShapeMismatch("concat_cols row mismatch");
    total += val(p).cols();
    rg = rg || requires_grad(p);
  }
  Tensor out({n, total});
  int col = 0;
  for (int p : parts) {
    const Tensor& tp = val(p);
    int w = tp.cols();
    for (int i = 0; i < n; ++i)
      std::copy_n(tp.values.data() + static_cast<size_t>(i) * w, w,
                  out.values.data() + static_cast<size_t>(i) * total + col);
    col += w;
  }
  int id = push(std::move(out), rg, nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, parts, n, total] {
      const Tensor& g = grad(id);
      int col = 0;
      for (int p : parts) {
        int w = val(p).cols();
        if (requires_grad(p)) {
          Tensor& gp = grad(p);
          for (int i = 0; i < n; ++i) {
            const real* src = g.values.data() + static_cast<size_t>(i) * total + col;
            real* dst = gp.values.data() + static_cast<size_t>(i) * w;
            for (int j = 0; j < w; ++j) dst[j] += src[j];
          }
        }
        col += w;
      }
    };
  }
  return id;
}

int Graph::pad_cols(int a, int new_cols, real fill) {
  const Tensor& ta = val(a);
  int n = ta.rows(), d = ta.cols();
  if (new_cols < d) throw ShapeMismatch("pad_cols shrinks");
  Tensor out({n, new_cols});
  for (int i = 0; i < n; ++i) {
    real* row = out.values.data() + static_cast<size_t>(i) * new_cols;
    std::copy_n(ta.values.data() + static_cast<size_t>(i) * d, d, row);
    std::fill(row + d, row + new_cols, fill);
  }
  int id = push(std::move(out), requires_grad(a), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, a, n, d, new_cols] {
      const Tensor& g = grad(id);
      Tensor& ga = grad(a);
      for (int i = 0; i < n; ++i) {
        const real* src = g.values.data() + static_cast<size_t>(i) * new_cols;
        real* dst = ga.values.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  }
  return id;
}

int Graph::dropout(int a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw ShapeMismatch("dropout rate must be below 1");
  const Tensor& ta = val(a);
  Tensor mask(ta.shape);
  const real keep_scale = static_cast<real>(1.0 / (1.0 - rate));
  for (auto& v : mask.values) v = rng.uniform() < rate ? real(0) : keep_scale;
  int m = leaf(std::move(mask));
  return mul(a, m);
}

int Graph::nll_rows(int logits, std::vector<int> targets) {
  const Tensor& tz = val(logits);
  int n = tz.rows(), v = tz.cols();
  if (static_cast<int>(targets.size()) != n)
    throw ShapeMismatch("nll_rows: " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(n) + " rows");
  Tensor probs({n, v});
  double loss = 0;
  for (int i = 0; i < n; ++i) {
    int t = targets[i];
    if (t < 0 || t >= v) throw ShapeMismatch("nll_rows target out of range");
    const real* z = tz.values.data() + static_cast<size_t>(i) * v;
    real* p = probs.values.data() + static_cast<size_t>(i) * v;
    real zmax = z[0];
    for (int j = 1; j < v; ++j) zmax = std::max(zmax, z[j]);
    double sum = 0;
    for (int j = 0; j < v; ++j) {
      double e = std::exp(static_cast<double>(z[j] - zmax));
      p[j] = static_cast<real>(e);
      sum += e;
    }
    for (int j = 0; j < v; ++j) p[j] = static_cast<real>(p[j] / sum);
    loss -= std::log(std::max(static_cast<double>(p[t]), 1e-300));
  }
  loss /= n;
  int id = push(Tensor::scalar(static_cast<real>(loss)), requires_grad(logits), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, logits, targets = std::move(targets), n, v,
                       probs = std::move(probs)] {
      const real gout = grad(id).values[0];
      Tensor& gz = grad(logits);
      const real inv_n = static_cast<real>(1.0 / n);
      for (int i = 0; i < n; ++i) {
        const real* p = probs.values.data() + static_cast<size_t>(i) * v;
        real* g = gz.values.data() + static_cast<size_t>(i) * v;
        for (int j = 0; j < v; ++j) g[j] += gout * inv_n * p[j];
        g[targets[i]] -= gout * inv_n;
      }
    };
  }
  return id;
}

int Graph::soft_ce_rows(int student_logits, Tensor teacher_logits, double temperature) {
  if (temperature <= 0.0) throw NonPositiveTemperature();
  const Tensor& ts = val(student_logits);
  if (!ts.same_shape(teacher_logits))
    throw ShapeMismatch("soft_ce_rows " + shape_str(ts.shape) + " vs " +
                        shape_str(teacher_logits.shape));
  int n = ts.rows(), v = ts.cols();
  const double t = temperature;

  auto tempered_softmax = [t, v](const real* z, real* p) {
    double zmax = -1e300;
    for (int j = 0; j < v; ++j) zmax = std::max(zmax, static_cast<double>(z[j]));
    double sum = 0;
    for (int j = 0; j < v; ++j) {
      double e = std::exp((static_cast<double>(z[j]) - zmax) / t);
      p[j] = static_cast<real>(e);
      sum += e;
    }
    for (int j = 0; j < v; ++j) p[j] = static_cast<real>(p[j] / sum);
  };

  Tensor q({n, v}), p({n, v});
  double loss = 0;
  for (int i = 0; i < n; ++i) {
    const size_t off = static_cast<size_t>(i) * v;
    tempered_softmax(teacher_logits.values.data() + off, q.values.data() + off);
    tempered_softmax(ts.values.data() + off, p.values.data() + off);
    for (int j = 0; j < v; ++j) {
      double pj = std::max(static_cast<double>(p.values[off + j]), 1e-300);
      loss -= static_cast<double>(q.values[off + j]) * std::log(pj);
    }
  }
  loss = loss / n * t * t;
  int id = push(Tensor::scalar(static_cast<real>(loss)), requires_grad(student_logits), nullptr);
  if (nodes_[id].requires_grad) {
    nodes_[id].back = [this, id, student_logits, n, v, t, q = std::move(q), p = std::move(p)] {
      const real gout = grad(id).values[0];
      Tensor& gz = grad(student_logits);
      const real coef = static_cast<real>(t / n);
      for (int64_t i = 0; i < gz.numel(); ++i)
        gz.values[i] += gout * coef * (p.values[i] - q.values[i]);
    };
  }
  return id;
}

void Graph::backward(int loss) {
  if (!val(loss).is_scalar()) throw NonScalarLoss();
  grad(loss).values[0] = real(1);
  for (int i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.back && n.grad_alloc) n.back();
  }
}

}  // namespace jitterlab
