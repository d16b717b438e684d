#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsyn/autograd.hpp"
#include "rsyn/error.hpp"
#include "rsyn/kernels.hpp"

namespace rsyn {

namespace {

using BackwardFn = std::function<void(Node&)>;

Var make_result(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  Tape* tape = nullptr;
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      n->requires_grad = true;
      tape = in.node()->tape;
    }
  }
  if (n->requires_grad) {
    for (const auto& in : inputs) n->inputs.push_back(in.shared());
    n->backward = std::move(backward);
    n->tape = tape;
    tape->record(n);
  }
  return Var(n);
}

Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

void accumulate(Node& target, const Tensor& g) {
  if (!target.requires_grad) return;
  auto& buf = target.grad_buffer();
  kernels::active().axpy(1.0, g.ptr(), buf.ptr(), g.size());
}

struct MatmulPlan {
  Shape out_shape;
  std::size_t m = 0, n = 0, k = 0;
  std::vector<std::size_t> a_off, b_off;  // per output batch item, in matrices
  bool flat = false;                      // single gemm over stacked a
};

MatmulPlan plan_matmul(const Shape& as, const Shape& bs, bool trans_b) {
  auto fail = [&] {
    return DimensionError("matmul shape mismatch: " + to_string(as) + " x " + to_string(bs) +
                          (trans_b ? "^T" : ""));
  };
  if (as.size() < 2 || bs.size() < 2) throw fail();
  MatmulPlan p;
  p.m = as[as.size() - 2];
  p.k = as.back();
  const std::size_t bk = trans_b ? bs.back() : bs[bs.size() - 2];
  p.n = trans_b ? bs[bs.size() - 2] : bs.back();
  if (bk != p.k) throw fail();

  const std::size_t ra = as.size() - 2, rb = bs.size() - 2, r = std::max(ra, rb);
  Shape batch(r), abatch(r, 1), bbatch(r, 1);
  for (std::size_t i = 0; i < ra; ++i) abatch[r - ra + i] = as[i];
  for (std::size_t i = 0; i < rb; ++i) bbatch[r - rb + i] = bs[i];
  for (std::size_t i = 0; i < r; ++i) {
    if (abatch[i] == bbatch[i] || bbatch[i] == 1) {
      batch[i] = abatch[i];
    } else if (abatch[i] == 1) {
      batch[i] = bbatch[i];
    } else {
      throw fail();
    }
  }
  const std::size_t nb = numel(batch);
  p.flat = numel(bbatch) == 1 && numel(abatch) == nb;
  p.a_off.resize(nb);
  p.b_off.resize(nb);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t t = 0; t < nb; ++t) {
    std::size_t ao = 0, bo = 0;
    for (std::size_t i = 0; i < r; ++i) {
      ao = ao * abatch[i] + (abatch[i] == 1 ? 0 : idx[i]);
      bo = bo * bbatch[i] + (bbatch[i] == 1 ? 0 : idx[i]);
    }
    p.a_off[t] = ao;
    p.b_off[t] = bo;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < batch[i]) break;
      idx[i] = 0;
    }
  }
  p.out_shape = batch;
  p.out_shape.push_back(p.m);
  p.out_shape.push_back(p.n);
  return p;
}

Var batched_matmul(const Var& a, const Var& b, bool trans_b) {
  auto plan = std::make_shared<MatmulPlan>(plan_matmul(a.shape(), b.shape(), trans_b));
  const auto& K = kernels::active();
  Tensor out(plan->out_shape, 0.0);
  const std::size_t m = plan->m, n = plan->n, k = plan->k;
  const std::size_t ldb = trans_b ? k : n;
  const double* A = a.value().ptr();
  const double* B = b.value().ptr();
  if (plan->flat) {
    K.gemm(false, trans_b, m * plan->a_off.size(), n, k, A, k, B, ldb, out.ptr(), n);
  } else {
    for (std::size_t t = 0; t < plan->a_off.size(); ++t) {
      K.gemm(false, trans_b, m, n, k, A + plan->a_off[t] * m * k, k, B + plan->b_off[t] * k * n,
             ldb, out.ptr() + t * m * n, n);
    }
  }
  return make_result(std::move(out), {a, b}, [plan, trans_b](Node& self) {
    const auto& K = kernels::active();
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    const std::size_t m = plan->m, n = plan->n, k = plan->k;
    const std::size_t ldb = trans_b ? k : n;
    const double* G = self.grad.ptr();
    const double* A = na.value.ptr();
    const double* B = nb.value.ptr();
    const std::size_t items = plan->flat ? 1 : plan->a_off.size();
    const std::size_t rows = plan->flat ? m * plan->a_off.size() : m;
    for (std::size_t t = 0; t < items; ++t) {
      const std::size_t ao = plan->flat ? 0 : plan->a_off[t] * m * k;
      const std::size_t bo = plan->flat ? 0 : plan->b_off[t] * k * n;
      const double* Gt = G + (plan->flat ? 0 : t * m * n);
      if (na.requires_grad) {
        // dA = dC * op(B)^T
        K.gemm(false, !trans_b, rows, k, n, Gt, n, B + bo, ldb, na.grad_buffer().ptr() + ao, k);
      }
      if (nb.requires_grad) {
        if (trans_b) {
          // dB (n x k) = dC^T * A
          K.gemm(true, false, n, k, rows, Gt, n, A + ao, k, nb.grad_buffer().ptr() + bo, k);
        } else {
          // dB (k x n) = A^T * dC
          K.gemm(true, false, k, n, rows, A + ao, k, Gt, n, nb.grad_buffer().ptr() + bo, n);
        }
      }
    }
  });
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<long>(small.size()));
}

template <class F, class D>
Var unary(const Var& x, F f, D df) {
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(std::move(out), {x}, [df](Node& self) {
    Node& in = input(self, 0);
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(in.value[i], self.value[i]);
  });
}

}  // namespace

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Tensor permute_values(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) throw DimensionError("permute: axes rank mismatch for " + to_string(s));
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw DimensionError("permute: invalid axes for " + to_string(s));
    seen[a] = true;
  }
  Shape os(r);
  for (std::size_t i = 0; i < r; ++i) os[i] = s[axes[i]];
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_stride[i] = in_stride[i + 1] * s[i + 1];

  Tensor out(os);
  // Copy contiguous runs when the innermost axis is preserved.
  const bool inner_kept = axes.back() == r - 1;
  const std::size_t run = inner_kept ? s.back() : 1;
  const std::size_t outer_rank = inner_kept ? r - 1 : r;
  std::vector<std::size_t> idx(outer_rank, 0);
  const std::size_t count = out.size() / run;
  double* dst = out.ptr();
  const double* src = x.ptr();
  for (std::size_t t = 0; t < count; ++t) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < outer_rank; ++i) off += idx[i] * in_stride[axes[i]];
    std::copy_n(src + off, run, dst + t * run);
    for (std::size_t i = outer_rank; i-- > 0;) {
      if (++idx[i] < os[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

namespace ops {

Var matmul(const Var& a, const Var& b) { return batched_matmul(a, b, false); }
Var matmul_bt(const Var& a, const Var& b) { return batched_matmul(a, b, true); }

Var add(const Var& a, const Var& b) {
  if (!is_suffix(b.shape(), a.shape())) {
    if (is_suffix(a.shape(), b.shape())) return add(b, a);
    throw DimensionError("add: cannot broadcast " + to_string(b.shape()) + " onto " +
                         to_string(a.shape()));
  }
  Tensor out = a.value();
  const std::size_t inner = b.value().size();
  const auto& K = kernels::active();
  for (std::size_t off = 0; off < out.size(); off += inner) {
    K.axpy(1.0, b.value().ptr(), out.ptr() + off, inner);
  }
  return make_result(std::move(out), {a, b}, [inner](Node& self) {
    accumulate(input(self, 0), self.grad);
    Node& nb = input(self, 1);
    if (!nb.requires_grad) return;
    const auto& K = kernels::active();
    auto& g = nb.grad_buffer();
    for (std::size_t off = 0; off < self.grad.size(); off += inner) {
      K.axpy(1.0, self.grad.ptr() + off, g.ptr(), inner);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("sub: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    accumulate(input(self, 0), self.grad);
    Node& nb = input(self, 1);
    if (!nb.requires_grad) return;
    kernels::active().axpy(-1.0, self.grad.ptr(), nb.grad_buffer().ptr(), self.grad.size());
  });
}

Var mul(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

Var scale(const Var& x, double s) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= s;
  return make_result(std::move(out), {x}, [s](Node& self) {
    Node& in = input(self, 0);
    kernels::active().axpy(s, self.grad.ptr(), in.grad_buffer().ptr(), self.grad.size());
  });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var softplus(const Var& x) {
  return unary(x, softplus_value, [](double in, double) {
    // sigmoid, evaluated without overflow
    if (in >= 0.0) return 1.0 / (1.0 + std::exp(-in));
    const double e = std::exp(in);
    return e / (1.0 + e);
  });
}

Var dropout(const Var& x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must be in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] *= (*mask)[i];
  }
  return make_result(std::move(out), {x}, [mask](Node& self) {
    auto& g = input(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

Var softmax_lastdim(const Var& x) {
  const std::size_t n = x.shape().back();
  Tensor out = x.value();
  for (std::size_t off = 0; off < out.size(); off += n) {
    double* row = out.ptr() + off;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
  }
  return make_result(std::move(out), {x}, [n](Node& self) {
    auto& g = input(self, 0).grad_buffer();
    const auto& K = kernels::active();
    for (std::size_t off = 0; off < self.value.size(); off += n) {
      const double* y = self.value.ptr() + off;
      const double* dy = self.grad.ptr() + off;
      const double d = K.dot(y, dy, n);
      for (std::size_t j = 0; j < n; ++j) g[off + j] += y[j] * (dy[j] - d);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("layer_norm: affine params " + to_string(gamma.shape()) + "/" +
                         to_string(beta.shape()) + " do not match feature width " + std::to_string(d));
  }
  const std::size_t rows = x.value().size() / d;
  auto xhat = std::make_shared<Tensor>(x.shape());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  Tensor out(x.shape());
  const double* gv = gamma.value().ptr();
  const double* bv = beta.value().ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.value().ptr() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (in[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, [d, rows, xhat, rstd](Node& self) {
    Node& nx = input(self, 0);
    Node& ng = input(self, 1);
    Node& nb = input(self, 2);
    const double* gv = ng.value.ptr();
    std::vector<double> dh(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dy = self.grad.ptr() + r * d;
      const double* h = xhat->ptr() + r * d;
      if (ng.requires_grad) {
        auto& gg = ng.grad_buffer();
        for (std::size_t j = 0; j < d; ++j) gg[j] += dy[j] * h[j];
      }
      if (nb.requires_grad) {
        auto& gb = nb.grad_buffer();
        for (std::size_t j = 0; j < d; ++j) gb[j] += dy[j];
      }
      if (nx.requires_grad) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dh[j] = dy[j] * gv[j];
          m1 += dh[j];
          m2 += dh[j] * h[j];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        double* gx = nx.grad_buffer().ptr() + r * d;
        const double rs = (*rstd)[r];
        for (std::size_t j = 0; j < d; ++j) gx[j] += rs * (dh[j] - m1 - h[j] * m2);
      }
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) { accumulate(input(self, 0), self.grad); });
}

Var permute(const Var& x, const std::vector<std::size_t>& axes) {
  Tensor out = permute_values(x.value(), axes);
  std::vector<std::size_t> inverse(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) inverse[axes[i]] = i;
  return make_result(std::move(out), {x}, [inverse](Node& self) {
    accumulate(input(self, 0), permute_values(self.grad, inverse));
  });
}

Var sum(const Var& x) {
  Tensor out = Tensor::scalar(kernels::active().sum(x.value().ptr(), x.value().size()));
  return make_result(std::move(out), {x}, [](Node& self) {
    auto& g = input(self, 0).grad_buffer();
    const double s = self.grad[0];
    for (auto& v : g.data()) v += s;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var mse_loss(const Var& pred, const Var& target) {
  if (pred.shape() != target.shape()) {
    throw ContractError("mse_loss: prediction " + to_string(pred.shape()) + " vs target " +
                        to_string(target.shape()));
  }
  const std::size_t n = pred.value().size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = pred.value()[i] - target.value()[i];
    s += e * e;
  }
  return make_result(Tensor::scalar(s / static_cast<double>(n)), {pred, target}, [n](Node& self) {
    Node& np = input(self, 0);
    Node& nt = input(self, 1);
    const double c = 2.0 * self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double e = c * (np.value[i] - nt.value[i]);
      if (np.requires_grad) np.grad_buffer()[i] += e;
      if (nt.requires_grad) nt.grad_buffer()[i] -= e;
    }
  });
}

}  // namespace ops
}  // namespace rsyn
