#include "recam/ops.hpp"

#include <cmath>

#include "recam/errors.hpp"
#include "recam/kernels.hpp"

namespace recam {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
  }
}

int64_t last_dim(const Tensor& x) {
  if (x.ndim() == 0) throw DimensionError("operation requires at least 1 dimension");
  return x.dim(static_cast<int>(x.ndim() - 1));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + a.shape_str() + " vs " +
                         b.shape_str());
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);

  if (should_record(a, b)) {
    out.set_grad_enabled(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record(on, [an, bn, on, m, k, n] {
      const double* dy = on->ensure_grad().data();
      if (an->grad_enabled) {
        kernels::matmul_nt(dy, bn->data.data(), an->ensure_grad().data(), m, n, k);
      }
      if (bn->grad_enabled) {
        kernels::matmul_tn(an->data.data(), dy, bn->ensure_grad().data(), m, k, n);
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = out.numel();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];

  if (should_record(a, b)) {
    out.set_grad_enabled(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record(on, [an, bn, on, n] {
      const double* dy = on->ensure_grad().data();
      if (an->grad_enabled) {
        double* da = an->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) da[i] += dy[i];
      }
      if (bn->grad_enabled) {
        double* db = bn->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) db[i] += dy[i];
      }
    });
  }
  return out;
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& bias) {
  const int64_t d = last_dim(x);
  if (bias.ndim() != 1 || bias.dim(0) != d) {
    throw DimensionError("add_row_broadcast: bias " + bias.shape_str() +
                         " does not match rows of " + x.shape_str());
  }
  const int64_t rows = x.numel() / d;
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  const double* pb = bias.data().data();
  double* po = out.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < d; ++j) po[r * d + j] = px[r * d + j] + pb[j];
  }

  if (should_record(x, bias)) {
    out.set_grad_enabled(true);
    auto xn = x.node(), bn = bias.node(), on = out.node();
    Tape::active()->record(on, [xn, bn, on, rows, d] {
      const double* dy = on->ensure_grad().data();
      if (xn->grad_enabled) {
        double* dx = xn->ensure_grad().data();
        const int64_t n = rows * d;
        for (int64_t i = 0; i < n; ++i) dx[i] += dy[i];
      }
      if (bn->grad_enabled) {
        double* db = bn->ensure_grad().data();
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t j = 0; j < d; ++j) db[j] += dy[r * d + j];
        }
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = out.numel();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];

  if (should_record(a, b)) {
    out.set_grad_enabled(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::active()->record(on, [an, bn, on, n] {
      const double* dy = on->ensure_grad().data();
      if (an->grad_enabled) {
        double* da = an->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) da[i] += dy[i] * bn->data[i];
      }
      if (bn->grad_enabled) {
        double* db = bn->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) db[i] += dy[i] * an->data[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  const int64_t n = out.numel();
  const double* px = x.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < n; ++i) po[i] = c * px[i];

  if (should_record(x)) {
    out.set_grad_enabled(true);
    auto xn = x.node(), on = out.node();
    Tape::active()->record(on, [xn, on, c, n] {
      const double* dy = on->ensure_grad().data();
      double* dx = xn->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) dx[i] += c * dy[i];
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  const int64_t d = last_dim(x);
  if (d < 1) throw DimensionError("softmax_rows: trailing dimension must be >= 1");
  const int64_t rows = x.numel() / d;
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.data().data();
  const bool par = backend() == Backend::OpenMP;
#pragma omp parallel for if (par) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = px + r * d;
    double* o = po + r * d;
    double m = in[0];
    for (int64_t j = 1; j < d; ++j) m = std::max(m, in[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      o[j] = std::exp(in[j] - m);
      sum += o[j];
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < d; ++j) o[j] *= inv;
  }

  if (should_record(x)) {
    out.set_grad_enabled(true);
    auto xn = x.node(), on = out.node();
    Tape::active()->record(on, [xn, on, rows, d] {
      const double* dy = on->ensure_grad().data();
      const double* p = on->data.data();
      double* dx = xn->ensure_grad().data();
      const bool par2 = backend() == Backend::OpenMP;
#pragma omp parallel for if (par2) schedule(static)
      for (int64_t r = 0; r < rows; ++r) {
        const int64_t base = r * d;
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += p[base + j] * dy[base + j];
        for (int64_t j = 0; j < d; ++j) {
          dx[base + j] += p[base + j] * (dy[base + j] - s);
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const int64_t d = last_dim(x);
  if (gain.ndim() != 1 || gain.dim(0) != d || bias.ndim() != 1 || bias.dim(0) != d) {
    throw DimensionError("layer_norm: gain " + gain.shape_str() + " / bias " +
                         bias.shape_str() + " do not match " + x.shape_str());
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const int64_t rows = x.numel() / d;
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  const double* pg = gain.data().data();
  const double* pb = bias.data().data();
  double* po = out.data().data();
  const bool par = backend() == Backend::OpenMP;
#pragma omp parallel for if (par) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = px + r * d;
    double* o = po + r * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = in[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < d; ++j) {
      o[j] = (in[j] - mean) * inv * pg[j] + pb[j];
    }
  }

  if (Tape::active() &&
      (x.grad_enabled() || gain.grad_enabled() || bias.grad_enabled())) {
    out.set_grad_enabled(true);
    auto xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    Tape::active()->record(on, [xn, gn, bn, on, rows, d, eps] {
      const double* dy = on->ensure_grad().data();
      const double* in = xn->data.data();
      const double* g = gn->data.data();
      double* dx = xn->grad_enabled ? xn->ensure_grad().data() : nullptr;
      const bool par2 = backend() == Backend::OpenMP && dx != nullptr;
#pragma omp parallel for if (par2) schedule(static)
      for (int64_t r = 0; r < (dx ? rows : 0); ++r) {
        const int64_t base = r * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += in[base + j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
          const double c = in[base + j] - mean;
          var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int64_t j = 0; j < d; ++j) {
          const double xhat = (in[base + j] - mean) * inv;
          const double dxhat = dy[base + j] * g[j];
          mean_dxhat += dxhat;
          mean_dxhat_xhat += dxhat * xhat;
        }
        mean_dxhat /= static_cast<double>(d);
        mean_dxhat_xhat /= static_cast<double>(d);
        for (int64_t j = 0; j < d; ++j) {
          const double xhat = (in[base + j] - mean) * inv;
          const double dxhat = dy[base + j] * g[j];
          dx[base + j] += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
        }
      }
      if (gn->grad_enabled || bn->grad_enabled) {
        double* dg = gn->grad_enabled ? gn->ensure_grad().data() : nullptr;
        double* db = bn->grad_enabled ? bn->ensure_grad().data() : nullptr;
        for (int64_t r = 0; r < rows; ++r) {
          const int64_t base = r * d;
          double mean = 0.0;
          for (int64_t j = 0; j < d; ++j) mean += in[base + j];
          mean /= static_cast<double>(d);
          double var = 0.0;
          for (int64_t j = 0; j < d; ++j) {
            const double c = in[base + j] - mean;
            var += c * c;
          }
          var /= static_cast<double>(d);
          const double inv = 1.0 / std::sqrt(var + eps);
          for (int64_t j = 0; j < d; ++j) {
            if (dg) dg[j] += dy[base + j] * (in[base + j] - mean) * inv;
            if (db) db[j] += dy[base + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const int64_t n = out.numel();
  const double* px = x.data().data();
  double* po = out.data().data();
  const bool par = backend() == Backend::OpenMP;
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    po[i] = 0.5 * px[i] * (1.0 + std::erf(px[i] * kInvSqrt2));
  }

  if (should_record(x)) {
    out.set_grad_enabled(true);
    auto xn = x.node(), on = out.node();
    Tape::active()->record(on, [xn, on, n] {
      const double* dy = on->ensure_grad().data();
      const double* in = xn->data.data();
      double* dx = xn->ensure_grad().data();
      const bool par2 = backend() == Backend::OpenMP;
#pragma omp parallel for if (par2) schedule(static)
      for (int64_t i = 0; i < n; ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(in[i] * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * in[i] * in[i]);
        dx[i] += dy[i] * (cdf + in[i] * pdf);
      }
    });
  }
  return out;
}

Tensor embedding_gather(const Tensor& table, const std::vector<int64_t>& ids) {
  if (table.ndim() != 2) {
    throw DimensionError("embedding_gather: table must be 2-D, got " + table.shape_str());
  }
  const int64_t v = table.dim(0), d = table.dim(1);
  for (int64_t id : ids) {
    if (id < 0 || id >= v) {
      throw VocabError("embedding_gather: id " + std::to_string(id) +
                           " outside vocabulary of size " + std::to_string(v),
                       id);
    }
  }
  const int64_t n = static_cast<int64_t>(ids.size());
  Tensor out = Tensor::zeros({n, d});
  const double* pt = table.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < n; ++i) {
    const double* row = pt + ids[static_cast<size_t>(i)] * d;
    double* o = po + i * d;
    for (int64_t j = 0; j < d; ++j) o[j] = row[j];
  }

  if (should_record(table)) {
    out.set_grad_enabled(true);
    auto tn = table.node(), on = out.node();
    auto idv = ids;
    Tape::active()->record(on, [tn, on, idv, d] {
      const double* dy = on->ensure_grad().data();
      double* dt = tn->ensure_grad().data();
      for (size_t i = 0; i < idv.size(); ++i) {
        double* row = dt + idv[i] * d;
        const double* g = dy + static_cast<int64_t>(i) * d;
        for (int64_t j = 0; j < d; ++j) row[j] += g[j];
      }
    });
  }
  return out;
}

Tensor matvec(const Tensor& x, const Tensor& v) {
  if (x.ndim() != 2 || v.ndim() != 1 || x.dim(1) != v.dim(0)) {
    throw DimensionError("matvec: incompatible shapes " + x.shape_str() + " vs " +
                         v.shape_str());
  }
  const int64_t n = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros({n});
  const double* px = x.data().data();
  const double* pv = v.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < d; ++j) acc += px[i * d + j] * pv[j];
    po[i] = acc;
  }

  if (should_record(x, v)) {
    out.set_grad_enabled(true);
    auto xn = x.node(), vn = v.node(), on = out.node();
    Tape::active()->record(on, [xn, vn, on, n, d] {
      const double* dy = on->ensure_grad().data();
      if (xn->grad_enabled) {
        double* dx = xn->ensure_grad().data();
        const double* pv2 = vn->data.data();
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < d; ++j) dx[i * d + j] += dy[i] * pv2[j];
        }
      }
      if (vn->grad_enabled) {
        double* dv = vn->ensure_grad().data();
        const double* px2 = xn->data.data();
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < d; ++j) dv[j] += dy[i] * px2[i * d + j];
        }
      }
    });
  }
  return out;
}

Tensor mean_stack(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("mean_stack: empty tensor list");
  for (const Tensor& t : xs) require_same_shape(xs.front(), t, "mean_stack");
  const int64_t n = xs.front().numel();
  const double factor = 1.0 / static_cast<double>(xs.size());
  Tensor out = Tensor::zeros(xs.front().shape());
  double* po = out.data().data();
  for (const Tensor& t : xs) {
    const double* p = t.data().data();
    for (int64_t i = 0; i < n; ++i) po[i] += p[i];
  }
  for (int64_t i = 0; i < n; ++i) po[i] *= factor;

  bool any_grad = false;
  for (const Tensor& t : xs) any_grad = any_grad || t.grad_enabled();
  if (Tape::active() && any_grad) {
    out.set_grad_enabled(true);
    std::vector<std::shared_ptr<detail::TensorNode>> nodes;
    nodes.reserve(xs.size());
    for (const Tensor& t : xs) nodes.push_back(t.node());
    auto on = out.node();
    Tape::active()->record(on, [nodes, on, n, factor] {
      const double* dy = on->ensure_grad().data();
      for (const auto& xn : nodes) {
        if (!xn->grad_enabled) continue;
        double* dx = xn->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) dx[i] += factor * dy[i];
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  const int64_t n = x.numel();
  const double* px = x.data().data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += px[i];
  Tensor out = Tensor::scalar(acc);

  if (should_record(x)) {
    out.set_grad_enabled(true);
    auto xn = x.node(), on = out.node();
    Tape::active()->record(on, [xn, on, n] {
      const double dy = on->ensure_grad()[0];
      double* dx = xn->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) dx[i] += dy;
    });
  }
  return out;
}

Tensor cross_entropy_with_logits(const Tensor& logits, int64_t gold) {
  if (logits.ndim() != 1) {
    throw DimensionError("cross_entropy_with_logits: logits must be 1-D, got " +
                         logits.shape_str());
  }
  const int64_t k = logits.dim(0);
  if (gold < 0 || gold >= k) {
    throw IndexError("cross_entropy_with_logits: label " + std::to_string(gold) +
                     " outside [0, " + std::to_string(k) + ")");
  }
  const double* pf = logits.data().data();
  double m = pf[0];
  for (int64_t j = 1; j < k; ++j) m = std::max(m, pf[j]);
  double sum = 0.0;
  for (int64_t j = 0; j < k; ++j) sum += std::exp(pf[j] - m);
  const double lse = m + std::log(sum);
  Tensor out = Tensor::scalar(lse - pf[gold]);

  if (should_record(logits)) {
    out.set_grad_enabled(true);
    auto fn = logits.node(), on = out.node();
    Tape::active()->record(on, [fn, on, k, gold, m, sum] {
      const double dy = on->ensure_grad()[0];
      double* df = fn->ensure_grad().data();
      const double* f = fn->data.data();
      for (int64_t j = 0; j < k; ++j) {
        const double p = std::exp(f[j] - m) / sum;
        df[j] += dy * (p - (j == gold ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const int64_t n = x.numel();
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask = Tensor::zeros(x.shape());
  double* pm = mask.data().data();
  for (int64_t i = 0; i < n; ++i) {
    pm[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  }
  return mul(x, mask);
}

}  // namespace recam
