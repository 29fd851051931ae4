#include "recam/attention.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <memory>

#include "recam/errors.hpp"
#include "recam/kernels.hpp"

namespace recam::attn {

namespace {

std::atomic<int64_t> g_score_ops{0};
std::atomic<int64_t> g_peak_weight_bytes{0};

void note_kernel_call(int64_t score_ops, int64_t weight_bytes) {
  g_score_ops.fetch_add(score_ops, std::memory_order_relaxed);
  int64_t seen = g_peak_weight_bytes.load(std::memory_order_relaxed);
  while (weight_bytes > seen &&
         !g_peak_weight_bytes.compare_exchange_weak(seen, weight_bytes,
                                                    std::memory_order_relaxed)) {
  }
}

constexpr double kMaskValue = -1e30;

// Admitted-key layout for the sparse kernels: cols[offsets[i]..offsets[i+1])
// are the key positions of query row i, ascending.
struct SparseLayout {
  std::vector<int64_t> offsets;
  std::vector<int64_t> cols;
  int64_t nnz() const { return static_cast<int64_t>(cols.size()); }
};

SparseLayout build_layout(const AttentionPattern& pattern) {
  SparseLayout layout;
  const int64_t n = pattern.seq_len;
  layout.offsets.assign(static_cast<size_t>(n) + 1, 0);
  for (int64_t i = 0; i < n; ++i) {
    layout.offsets[static_cast<size_t>(i) + 1] =
        layout.offsets[static_cast<size_t>(i)] + pattern.row_size(i);
  }
  layout.cols.reserve(static_cast<size_t>(layout.offsets.back()));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j : pattern.row(i)) layout.cols.push_back(j);
  }
  return layout;
}

// Everything the backward pass needs from the forward pass.
struct AttnCache {
  int64_t n = 0, d = 0, heads = 0, dh = 0;
  double scale = 1.0;
  bool dense = false;
  bool use_global_proj = false;
  std::vector<uint8_t> role;      // 1 where the global projection set applies
  std::vector<uint8_t> global_flag;  // 1 where the position has global reach
  int64_t half_width = -1;        // band radius; -1 for the full pattern
  SparseLayout layout;            // sparse kinds only
  std::vector<double> q, k, v;    // [n x d]
  std::vector<double> ctx;        // [n x d], pre output-projection
  std::vector<double> weights;    // dense: heads*n*n, sparse: heads*nnz
};

// out[i,:] = bias + sum_k x[i,k] * W[k,:], selecting the projection set per
// row by role. Fixed k-ascending accumulation keeps the result independent
// of the thread count.
void project_rows(const double* x, int64_t n, int64_t d, const double* w,
                  const double* b, const double* wg, const double* bg,
                  const std::vector<uint8_t>& role, double* out) {
  const bool par = backend() == Backend::OpenMP;
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const bool g = role[static_cast<size_t>(i)] != 0;
    const double* wm = g ? wg : w;
    const double* bm = g ? bg : b;
    double* o = out + i * d;
    for (int64_t j = 0; j < d; ++j) o[j] = bm[j];
    const double* xr = x + i * d;
    for (int64_t kk = 0; kk < d; ++kk) {
      const double xv = xr[kk];
      const double* wr = wm + kk * d;
      for (int64_t j = 0; j < d; ++j) o[j] += xv * wr[j];
    }
  }
}

void check_inputs(const Tensor& x, const AttentionParams& params,
                  int64_t pattern_len) {
  if (x.ndim() != 2) {
    throw DimensionError("attention: input must be 2-D, got " + x.shape_str());
  }
  const int64_t d = params.model_dim();
  if (x.dim(1) != d) {
    throw DimensionError("attention: input width " + std::to_string(x.dim(1)) +
                         " does not match model width " + std::to_string(d));
  }
  if (x.dim(0) != pattern_len) {
    throw DimensionError("attention: sequence length " + std::to_string(x.dim(0)) +
                         " does not match pattern length " +
                         std::to_string(pattern_len));
  }
  if (d % params.heads != 0) {
    throw ConfigError("attention: width " + std::to_string(d) +
                      " not divisible by " + std::to_string(params.heads) +
                      " heads");
  }
}

bool any_param_grad(const AttentionParams& p) {
  bool g = p.wq.grad_enabled() || p.bq.grad_enabled() || p.wk.grad_enabled() ||
           p.bk.grad_enabled() || p.wv.grad_enabled() || p.bv.grad_enabled() ||
           p.wo.grad_enabled() || p.bo.grad_enabled();
  if (p.has_global_projections) {
    g = g || p.wq_g.grad_enabled() || p.bq_g.grad_enabled() ||
        p.wk_g.grad_enabled() || p.bk_g.grad_enabled() ||
        p.wv_g.grad_enabled() || p.bv_g.grad_enabled();
  }
  return g;
}

void add_column_sums(const double* m, int64_t rows, int64_t cols,
                     const std::vector<uint8_t>* role, uint8_t which,
                     double* out) {
  for (int64_t i = 0; i < rows; ++i) {
    if (role && (*role)[static_cast<size_t>(i)] != which) continue;
    const double* r = m + i * cols;
    for (int64_t j = 0; j < cols; ++j) out[j] += r[j];
  }
}

// Splits rows of src by role into the matching destination (zero rows in the
// other), so weight gradients can be formed with plain matmuls.
void split_by_role(const std::vector<double>& src, int64_t n, int64_t d,
                   const std::vector<uint8_t>& role, std::vector<double>& local,
                   std::vector<double>& global) {
  local.assign(src.size(), 0.0);
  global.assign(src.size(), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    auto* dst = role[static_cast<size_t>(i)] ? global.data() : local.data();
    std::copy(src.begin() + i * d, src.begin() + (i + 1) * d, dst + i * d);
  }
}

Tensor attention_impl(const Tensor& x, const AttentionParams& params,
                      const AttentionPattern& pattern, bool dense_kind) {
  check_inputs(x, params, pattern.seq_len);

  auto cache = std::make_shared<AttnCache>();
  AttnCache& c = *cache;
  c.n = x.dim(0);
  c.d = params.model_dim();
  c.heads = params.heads;
  c.dh = c.d / c.heads;
  c.scale = 1.0 / std::sqrt(static_cast<double>(c.dh));
  c.dense = dense_kind;
  c.half_width = pattern.is_full() ? -1 : pattern.half_width();

  c.global_flag.assign(static_cast<size_t>(c.n), 0);
  for (int64_t g : pattern.global_indices) c.global_flag[static_cast<size_t>(g)] = 1;
  c.use_global_proj =
      params.has_global_projections && !pattern.global_indices.empty();
  if (c.use_global_proj) {
    c.role = c.global_flag;
  } else {
    c.role.assign(static_cast<size_t>(c.n), 0);
  }

  const int64_t n = c.n, d = c.d, dh = c.dh, heads = c.heads;

  c.q.resize(static_cast<size_t>(n * d));
  c.k.resize(static_cast<size_t>(n * d));
  c.v.resize(static_cast<size_t>(n * d));
  const double* px = x.data().data();
  const double* wqg = c.use_global_proj ? params.wq_g.data().data() : nullptr;
  const double* bqg = c.use_global_proj ? params.bq_g.data().data() : nullptr;
  const double* wkg = c.use_global_proj ? params.wk_g.data().data() : nullptr;
  const double* bkg = c.use_global_proj ? params.bk_g.data().data() : nullptr;
  const double* wvg = c.use_global_proj ? params.wv_g.data().data() : nullptr;
  const double* bvg = c.use_global_proj ? params.bv_g.data().data() : nullptr;
  project_rows(px, n, d, params.wq.data().data(), params.bq.data().data(), wqg,
               bqg, c.role, c.q.data());
  project_rows(px, n, d, params.wk.data().data(), params.bk.data().data(), wkg,
               bkg, c.role, c.k.data());
  project_rows(px, n, d, params.wv.data().data(), params.bv.data().data(), wvg,
               bvg, c.role, c.v.data());

  int64_t score_ops = 0;
  if (c.dense) {
    c.weights.assign(static_cast<size_t>(heads * n * n), 0.0);
    score_ops = n * n;
  } else {
    c.layout = build_layout(pattern);
    c.weights.assign(static_cast<size_t>(heads * c.layout.nnz()), 0.0);
    score_ops = c.layout.nnz();
  }
  note_kernel_call(score_ops,
                   static_cast<int64_t>(c.weights.size() * sizeof(double)));

  c.ctx.assign(static_cast<size_t>(n * d), 0.0);
  const int64_t r = c.half_width;
  const bool par = backend() == Backend::OpenMP;
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    std::vector<double> scores;
    for (int64_t h = 0; h < heads; ++h) {
      const double* qi = c.q.data() + i * d + h * dh;
      double* ctx_i = c.ctx.data() + i * d + h * dh;
      if (c.dense) {
        scores.resize(static_cast<size_t>(n));
        const bool row_global = c.global_flag[static_cast<size_t>(i)] != 0;
        for (int64_t j = 0; j < n; ++j) {
          const double* kj = c.k.data() + j * d + h * dh;
          double s = 0.0;
          for (int64_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
          s *= c.scale;
          const bool allowed = r < 0 || row_global ||
                               c.global_flag[static_cast<size_t>(j)] != 0 ||
                               std::llabs(i - j) <= r;
          if (!allowed) s += kMaskValue;
          scores[static_cast<size_t>(j)] = s;
        }
        double m = scores[0];
        for (int64_t j = 1; j < n; ++j) m = std::max(m, scores[static_cast<size_t>(j)]);
        double sum = 0.0;
        double* wrow = c.weights.data() + h * n * n + i * n;
        for (int64_t j = 0; j < n; ++j) {
          wrow[j] = std::exp(scores[static_cast<size_t>(j)] - m);
          sum += wrow[j];
        }
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < n; ++j) {
          wrow[j] *= inv;
          const double* vj = c.v.data() + j * d + h * dh;
          for (int64_t t = 0; t < dh; ++t) ctx_i[t] += wrow[j] * vj[t];
        }
      } else {
        const int64_t begin = c.layout.offsets[static_cast<size_t>(i)];
        const int64_t end = c.layout.offsets[static_cast<size_t>(i) + 1];
        const int64_t len = end - begin;
        scores.resize(static_cast<size_t>(len));
        for (int64_t idx = 0; idx < len; ++idx) {
          const int64_t j = c.layout.cols[static_cast<size_t>(begin + idx)];
          const double* kj = c.k.data() + j * d + h * dh;
          double s = 0.0;
          for (int64_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
          scores[static_cast<size_t>(idx)] = s * c.scale;
        }
        double m = scores[0];
        for (int64_t idx = 1; idx < len; ++idx) {
          m = std::max(m, scores[static_cast<size_t>(idx)]);
        }
        double sum = 0.0;
        double* wrow = c.weights.data() + h * c.layout.nnz() + begin;
        for (int64_t idx = 0; idx < len; ++idx) {
          wrow[idx] = std::exp(scores[static_cast<size_t>(idx)] - m);
          sum += wrow[idx];
        }
        const double inv = 1.0 / sum;
        for (int64_t idx = 0; idx < len; ++idx) {
          wrow[idx] *= inv;
          const int64_t j = c.layout.cols[static_cast<size_t>(begin + idx)];
          const double* vj = c.v.data() + j * d + h * dh;
          for (int64_t t = 0; t < dh; ++t) ctx_i[t] += wrow[idx] * vj[t];
        }
      }
    }
  }

  Tensor out = Tensor::zeros({n, d});
  kernels::matmul_nn(c.ctx.data(), params.wo.data().data(), out.data().data(), n,
                     d, d);
  {
    const double* bo = params.bo.data().data();
    double* po = out.data().data();
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < d; ++j) po[i * d + j] += bo[j];
    }
  }

  const bool record =
      Tape::active() != nullptr && (x.grad_enabled() || any_param_grad(params));
  if (record) {
    out.set_grad_enabled(true);
    Tensor xt = x;
    AttentionParams p = params;
    auto on = out.node();
    Tape::active()->record(on, [cache, xt, p, on] {
      const AttnCache& cc = *cache;
      const int64_t n2 = cc.n, d2 = cc.d, dh2 = cc.dh, heads2 = cc.heads;
      const double* dy = on->ensure_grad().data();

      // Output projection.
      std::vector<double> dctx(static_cast<size_t>(n2 * d2), 0.0);
      kernels::matmul_nt(dy, p.wo.data().data(), dctx.data(), n2, d2, d2);
      if (p.wo.grad_enabled()) {
        kernels::matmul_tn(cc.ctx.data(), dy, p.wo.node()->ensure_grad().data(),
                           n2, d2, d2);
      }
      if (p.bo.grad_enabled()) {
        add_column_sums(dy, n2, d2, nullptr, 0, p.bo.node()->ensure_grad().data());
      }

      // Scores and weights. Row-parallel part first (private to row i), then
      // a serial pass for the cross-row key/value accumulations so the
      // result does not depend on the thread count.
      std::vector<double> dq(static_cast<size_t>(n2 * d2), 0.0);
      std::vector<double> dk(static_cast<size_t>(n2 * d2), 0.0);
      std::vector<double> dv(static_cast<size_t>(n2 * d2), 0.0);
      std::vector<double> dscore(cc.weights.size(), 0.0);
      const int64_t nnz = cc.dense ? 0 : cc.layout.nnz();
      const bool par2 = backend() == Backend::OpenMP;
#pragma omp parallel for if (par2) schedule(static)
      for (int64_t i = 0; i < n2; ++i) {
        std::vector<double> dw_buf;
        for (int64_t h = 0; h < heads2; ++h) {
          const double* dc = dctx.data() + i * d2 + h * dh2;
          const int64_t begin = cc.dense ? i * n2 : cc.layout.offsets[static_cast<size_t>(i)];
          const int64_t len = cc.dense
                                  ? n2
                                  : cc.layout.offsets[static_cast<size_t>(i) + 1] - begin;
          const double* wrow = cc.weights.data() + (cc.dense ? h * n2 * n2 : h * nnz) + begin;
          double* dsrow = dscore.data() + (cc.dense ? h * n2 * n2 : h * nnz) + begin;
          dw_buf.resize(static_cast<size_t>(len));
          double sdot = 0.0;
          for (int64_t idx = 0; idx < len; ++idx) {
            const int64_t j = cc.dense ? idx : cc.layout.cols[static_cast<size_t>(begin + idx)];
            const double* vj = cc.v.data() + j * d2 + h * dh2;
            double dwv = 0.0;
            for (int64_t t = 0; t < dh2; ++t) dwv += dc[t] * vj[t];
            dw_buf[static_cast<size_t>(idx)] = dwv;
            sdot += wrow[idx] * dwv;
          }
          double* dqi = dq.data() + i * d2 + h * dh2;
          for (int64_t idx = 0; idx < len; ++idx) {
            const int64_t j = cc.dense ? idx : cc.layout.cols[static_cast<size_t>(begin + idx)];
            const double ds = wrow[idx] * (dw_buf[static_cast<size_t>(idx)] - sdot);
            dsrow[idx] = ds;
            const double* kj = cc.k.data() + j * d2 + h * dh2;
            const double f = ds * cc.scale;
            for (int64_t t = 0; t < dh2; ++t) dqi[t] += f * kj[t];
          }
        }
      }
      for (int64_t i = 0; i < n2; ++i) {
        for (int64_t h = 0; h < heads2; ++h) {
          const double* dc = dctx.data() + i * d2 + h * dh2;
          const int64_t begin = cc.dense ? i * n2 : cc.layout.offsets[static_cast<size_t>(i)];
          const int64_t len = cc.dense
                                  ? n2
                                  : cc.layout.offsets[static_cast<size_t>(i) + 1] - begin;
          const double* wrow = cc.weights.data() + (cc.dense ? h * n2 * n2 : h * nnz) + begin;
          const double* dsrow = dscore.data() + (cc.dense ? h * n2 * n2 : h * nnz) + begin;
          const double* qi = cc.q.data() + i * d2 + h * dh2;
          for (int64_t idx = 0; idx < len; ++idx) {
            const int64_t j = cc.dense ? idx : cc.layout.cols[static_cast<size_t>(begin + idx)];
            double* dkj = dk.data() + j * d2 + h * dh2;
            double* dvj = dv.data() + j * d2 + h * dh2;
            const double f = dsrow[idx] * cc.scale;
            for (int64_t t = 0; t < dh2; ++t) {
              dkj[t] += f * qi[t];
              dvj[t] += wrow[idx] * dc[t];
            }
          }
        }
      }

      // Back through the input projections, routing each row's gradient to
      // the projection set that produced it.
      const double* px2 = xt.data().data();
      double* dxg = xt.grad_enabled() ? xt.node()->ensure_grad().data() : nullptr;
      auto back_projection = [&](const std::vector<double>& dm, const Tensor& w,
                                 const Tensor& b, const Tensor& w_g,
                                 const Tensor& b_g) {
        if (!cc.use_global_proj) {
          if (dxg) kernels::matmul_nt(dm.data(), w.data().data(), dxg, n2, d2, d2);
          if (w.grad_enabled()) {
            kernels::matmul_tn(px2, dm.data(), w.node()->ensure_grad().data(), n2,
                               d2, d2);
          }
          if (b.grad_enabled()) {
            add_column_sums(dm.data(), n2, d2, nullptr, 0,
                            b.node()->ensure_grad().data());
          }
          return;
        }
        std::vector<double> dm_local, dm_global;
        split_by_role(dm, n2, d2, cc.role, dm_local, dm_global);
        if (dxg) {
          kernels::matmul_nt(dm_local.data(), w.data().data(), dxg, n2, d2, d2);
          kernels::matmul_nt(dm_global.data(), w_g.data().data(), dxg, n2, d2, d2);
        }
        if (w.grad_enabled()) {
          kernels::matmul_tn(px2, dm_local.data(), w.node()->ensure_grad().data(),
                             n2, d2, d2);
        }
        if (w_g.grad_enabled()) {
          kernels::matmul_tn(px2, dm_global.data(),
                             w_g.node()->ensure_grad().data(), n2, d2, d2);
        }
        if (b.grad_enabled()) {
          add_column_sums(dm.data(), n2, d2, &cc.role, 0,
                          b.node()->ensure_grad().data());
        }
        if (b_g.grad_enabled()) {
          add_column_sums(dm.data(), n2, d2, &cc.role, 1,
                          b_g.node()->ensure_grad().data());
        }
      };
      back_projection(dq, p.wq, p.bq, p.wq_g, p.bq_g);
      back_projection(dk, p.wk, p.bk, p.wk_g, p.bk_g);
      back_projection(dv, p.wv, p.bv, p.wv_g, p.bv_g);
    });
  }
  return out;
}

}  // namespace

bool AttentionPattern::is_global(int64_t i) const {
  return std::binary_search(global_indices.begin(), global_indices.end(), i);
}

bool AttentionPattern::allows(int64_t i, int64_t j) const {
  if (is_full()) return true;
  return std::llabs(i - j) <= half_width() || is_global(i) || is_global(j);
}

std::vector<int64_t> AttentionPattern::row(int64_t i) const {
  if (i < 0 || i >= seq_len) {
    throw IndexError("pattern row " + std::to_string(i) + " outside [0, " +
                     std::to_string(seq_len) + ")");
  }
  std::vector<int64_t> out;
  if (is_full() || is_global(i)) {
    out.resize(static_cast<size_t>(seq_len));
    for (int64_t j = 0; j < seq_len; ++j) out[static_cast<size_t>(j)] = j;
    return out;
  }
  const int64_t lo = std::max<int64_t>(0, i - half_width());
  const int64_t hi = std::min<int64_t>(seq_len - 1, i + half_width());
  size_t g = 0;
  // Merge the band with the globals, ascending, without duplicates.
  while (g < global_indices.size() && global_indices[g] < lo) {
    out.push_back(global_indices[g++]);
  }
  for (int64_t j = lo; j <= hi; ++j) out.push_back(j);
  while (g < global_indices.size() && global_indices[g] <= hi) ++g;
  while (g < global_indices.size()) out.push_back(global_indices[g++]);
  return out;
}

int64_t AttentionPattern::row_size(int64_t i) const {
  if (is_full() || is_global(i)) return seq_len;
  const int64_t lo = std::max<int64_t>(0, i - half_width());
  const int64_t hi = std::min<int64_t>(seq_len - 1, i + half_width());
  const int64_t band = hi - lo + 1;
  const auto first = std::lower_bound(global_indices.begin(), global_indices.end(), lo);
  const auto last = std::upper_bound(global_indices.begin(), global_indices.end(), hi);
  const int64_t in_band = last - first;
  return band + static_cast<int64_t>(global_indices.size()) - in_band;
}

AttentionPattern build_pattern(int64_t seq_len, int64_t window,
                               std::vector<int64_t> global_indices) {
  if (seq_len <= 0) throw ConfigError("pattern: sequence length must be positive");
  if (window != AttentionPattern::kFull) {
    if (window < 1) throw ConfigError("pattern: window must be positive");
    if (window % 2 == 0) {
      throw ConfigError("pattern: window must be odd, got " + std::to_string(window));
    }
  }
  std::sort(global_indices.begin(), global_indices.end());
  global_indices.erase(std::unique(global_indices.begin(), global_indices.end()),
                       global_indices.end());
  for (int64_t g : global_indices) {
    if (g < 0 || g >= seq_len) {
      throw IndexError("pattern: global index " + std::to_string(g) +
                       " outside [0, " + std::to_string(seq_len) + ")");
    }
  }
  AttentionPattern p;
  p.seq_len = seq_len;
  p.window = window;
  p.global_indices = std::move(global_indices);
  return p;
}

int64_t effective_odd_window(int64_t configured) {
  if (configured < 1) throw ConfigError("window must be positive");
  return configured % 2 == 1 ? configured : configured + 1;
}

void AttentionParams::set_grad_enabled(bool enabled) {
  for (Tensor& t : tensors()) t.set_grad_enabled(enabled);
}

std::vector<Tensor> AttentionParams::tensors() {
  std::vector<Tensor> out = {wq, bq, wk, bk, wv, bv, wo, bo};
  if (has_global_projections) {
    for (const Tensor& t : {wq_g, bq_g, wk_g, bk_g, wv_g, bv_g}) out.push_back(t);
  }
  return out;
}

AttentionParams AttentionParams::init(int64_t d, int64_t heads, const Rng& rng,
                                      bool separate_global_projections) {
  if (heads < 1 || d % heads != 0) {
    throw ConfigError("attention params: width " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  AttentionParams p;
  p.heads = heads;
  auto draw = [&](const char* name) {
    Rng child = rng.split(name);
    return Tensor::randn({d, d}, child, 0.02);
  };
  p.wq = draw("wq");
  p.bq = Tensor::zeros({d});
  p.wk = draw("wk");
  p.bk = Tensor::zeros({d});
  p.wv = draw("wv");
  p.bv = Tensor::zeros({d});
  p.wo = draw("wo");
  p.bo = Tensor::zeros({d});
  p.has_global_projections = separate_global_projections;
  if (separate_global_projections) {
    p.wq_g = p.wq.clone();
    p.bq_g = p.bq.clone();
    p.wk_g = p.wk.clone();
    p.bk_g = p.bk.clone();
    p.wv_g = p.wv.clone();
    p.bv_g = p.bv.clone();
  }
  return p;
}

Tensor dense_attention(const Tensor& x, const AttentionParams& params,
                       const AttentionPattern& pattern) {
  return attention_impl(x, params, pattern, /*dense_kind=*/true);
}

Tensor windowed_attention(const Tensor& x, const AttentionParams& params,
                          int64_t window) {
  AttentionPattern pattern = build_pattern(x.dim(0), window);
  return attention_impl(x, params, pattern, /*dense_kind=*/false);
}

Tensor global_augmented_attention(const Tensor& x, const AttentionParams& params,
                                  const AttentionPattern& pattern) {
  if (pattern.is_full()) {
    throw ContractError("global_augmented_attention requires a banded pattern");
  }
  return attention_impl(x, params, pattern, /*dense_kind=*/false);
}

KernelId kernel_from_string(const std::string& name) {
  if (name == "dense") return KernelId::Dense;
  if (name == "windowed") return KernelId::Windowed;
  if (name == "windowed_global" || name == "global") return KernelId::GlobalAugmented;
  throw ConfigError("unknown attention kernel '" + name + "'");
}

std::string kernel_name(KernelId id) {
  switch (id) {
    case KernelId::Dense:
      return "dense";
    case KernelId::Windowed:
      return "windowed";
    case KernelId::GlobalAugmented:
      return "windowed_global";
  }
  throw ConfigError("unknown attention kernel id");
}

int64_t count_score_ops(KernelId id, int64_t n, int64_t w, int64_t g) {
  if (n <= 0) throw ConfigError("count_score_ops: n must be positive");
  switch (id) {
    case KernelId::Dense:
      return n * n;
    case KernelId::Windowed: {
      AttentionPattern p = build_pattern(n, w);
      int64_t total = 0;
      for (int64_t i = 0; i < n; ++i) total += p.row_size(i);
      return total;
    }
    case KernelId::GlobalAugmented: {
      if (g < 0 || g > n) throw ConfigError("count_score_ops: bad global count");
      std::vector<int64_t> globals;
      for (int64_t i = n - g; i < n; ++i) globals.push_back(i);
      AttentionPattern p = build_pattern(n, w, std::move(globals));
      int64_t total = 0;
      for (int64_t i = 0; i < n; ++i) total += p.row_size(i);
      return total;
    }
  }
  throw ConfigError("unknown attention kernel id");
}

void reset_kernel_stats() {
  g_score_ops.store(0, std::memory_order_relaxed);
  g_peak_weight_bytes.store(0, std::memory_order_relaxed);
}

KernelStats kernel_stats() {
  KernelStats s;
  s.score_ops = g_score_ops.load(std::memory_order_relaxed);
  s.peak_weight_bytes = g_peak_weight_bytes.load(std::memory_order_relaxed);
  return s;
}

namespace reference {

Tensor masked_attention(const Tensor& x, const AttentionParams& params,
                        const AttentionPattern& pattern) {
  check_inputs(x, params, pattern.seq_len);
  const int64_t n = x.dim(0), d = params.model_dim();
  const int64_t heads = params.heads, dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool use_global =
      params.has_global_projections && !pattern.global_indices.empty();

  auto project_one = [&](int64_t i, const Tensor& w, const Tensor& b,
                         const Tensor& w_g, const Tensor& b_g,
                         std::vector<double>& out) {
    const bool g = use_global && pattern.is_global(i);
    const Tensor& wm = g ? w_g : w;
    const Tensor& bm = g ? b_g : b;
    for (int64_t j = 0; j < d; ++j) {
      double acc = bm(j);
      for (int64_t kk = 0; kk < d; ++kk) acc += x(i, kk) * wm(kk, j);
      out[static_cast<size_t>(i * d + j)] = acc;
    }
  };

  std::vector<double> q(static_cast<size_t>(n * d)), k(q.size()), v(q.size());
  for (int64_t i = 0; i < n; ++i) {
    project_one(i, params.wq, params.bq, params.wq_g, params.bq_g, q);
    project_one(i, params.wk, params.bk, params.wk_g, params.bk_g, k);
    project_one(i, params.wv, params.bv, params.wv_g, params.bv_g, v);
  }

  std::vector<double> ctx(static_cast<size_t>(n * d), 0.0);
  std::vector<double> scores(static_cast<size_t>(n));
  for (int64_t h = 0; h < heads; ++h) {
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t t = 0; t < dh; ++t) {
          s += q[static_cast<size_t>(i * d + h * dh + t)] *
               k[static_cast<size_t>(j * d + h * dh + t)];
        }
        s *= scale;
        if (!pattern.allows(i, j)) s += kMaskValue;
        scores[static_cast<size_t>(j)] = s;
      }
      double m = scores[0];
      for (int64_t j = 1; j < n; ++j) m = std::max(m, scores[static_cast<size_t>(j)]);
      double sum = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        scores[static_cast<size_t>(j)] = std::exp(scores[static_cast<size_t>(j)] - m);
        sum += scores[static_cast<size_t>(j)];
      }
      for (int64_t j = 0; j < n; ++j) {
        const double wij = scores[static_cast<size_t>(j)] / sum;
        for (int64_t t = 0; t < dh; ++t) {
          ctx[static_cast<size_t>(i * d + h * dh + t)] +=
              wij * v[static_cast<size_t>(j * d + h * dh + t)];
        }
      }
    }
  }

  Tensor out = Tensor::zeros({n, d});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      double acc = params.bo(j);
      for (int64_t kk = 0; kk < d; ++kk) acc += ctx[static_cast<size_t>(i * d + kk)] * params.wo(kk, j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

}  // namespace reference

}  // namespace recam::attn
