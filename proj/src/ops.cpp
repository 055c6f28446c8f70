#include "ahl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ahl/errors.hpp"

namespace ahl {

namespace {

bool needs_grad(const Tensor& t) { return t.requires_grad(); }

template <typename... T>
bool any_needs_grad(const T&... ts) {
  return (needs_grad(ts) || ...);
}

void require_rank_at_least(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() < r) {
    throw DimensionError(std::string(op) + ": expected rank >= " + std::to_string(r) + ", got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m,k] += dC[m,n] * B[k,n]^T
void gemm_nt_acc(const double* dc, const double* b, double* da, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* drow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += drow[j] * brow[j];
      da[i * k + p] += s;
    }
  }
}

// dB[k,n] += A[m,k]^T * dC[m,n]
void gemm_tn_acc(const double* a, const double* dc, double* db, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* drow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* brow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) brow[j] += av * drow[j];
    }
  }
}

struct BatchPlan {
  Shape out_batch;
  std::vector<std::size_t> a_offset;  // matrix index into a for each output matrix
  std::vector<std::size_t> b_offset;
};

BatchPlan plan_batches(const Shape& a_shape, const Shape& b_shape) {
  const std::size_t ar = a_shape.size() - 2;
  const std::size_t br = b_shape.size() - 2;
  const std::size_t r = std::max(ar, br);
  BatchPlan plan;
  plan.out_batch.assign(r, 1);
  std::vector<std::size_t> a_dims(r, 1), b_dims(r, 1);
  for (std::size_t i = 0; i < ar; ++i) a_dims[r - ar + i] = a_shape[i];
  for (std::size_t i = 0; i < br; ++i) b_dims[r - br + i] = b_shape[i];
  for (std::size_t i = 0; i < r; ++i) {
    if (a_dims[i] != b_dims[i] && a_dims[i] != 1 && b_dims[i] != 1) {
      throw DimensionError("matmul: batch dims not broadcastable " + shape_str(a_shape) + " x " +
                           shape_str(b_shape));
    }
    plan.out_batch[i] = std::max(a_dims[i], b_dims[i]);
  }
  const std::size_t count = shape_numel(plan.out_batch);
  plan.a_offset.resize(count);
  plan.b_offset.resize(count);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < count; ++flat) {
    std::size_t ao = 0, bo = 0;
    for (std::size_t i = 0; i < r; ++i) {
      ao = ao * a_dims[i] + (a_dims[i] == 1 ? 0 : idx[i]);
      bo = bo * b_dims[i] + (b_dims[i] == 1 ? 0 : idx[i]);
    }
    plan.a_offset[flat] = ao;
    plan.b_offset[flat] = bo;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < plan.out_batch[i]) break;
      idx[i] = 0;
    }
  }
  return plan;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank_at_least(a, 2, "matmul");
  require_rank_at_least(b, 2, "matmul");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const std::size_t m = as[as.size() - 2], k = as.back();
  const std::size_t k2 = bs[bs.size() - 2], n = bs.back();
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(as) + " x " + shape_str(bs));
  }
  auto plan = plan_batches(as, bs);
  Shape out_shape = plan.out_batch;
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<double> out(shape_numel(out_shape), 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t t = 0; t < plan.a_offset.size(); ++t) {
    gemm_acc(av + plan.a_offset[t] * m * k, bv + plan.b_offset[t] * k * n, out.data() + t * m * n, m, k, n);
  }
  const bool rg = any_needs_grad(a, b);
  Tensor c = Tensor::from(std::move(out_shape), std::move(out), rg);
  if (rg) {
    tape.record([a, b, c, plan = std::move(plan), m, k, n]() mutable {
      if (!c.has_grad()) return;
      const double* dc = c.grad().data();
      if (a.requires_grad()) {
        double* da = a.mutable_grad().data();
        const double* bv = b.values().data();
        for (std::size_t t = 0; t < plan.a_offset.size(); ++t) {
          gemm_nt_acc(dc + t * m * n, bv + plan.b_offset[t] * k * n, da + plan.a_offset[t] * m * k, m, k, n);
        }
      }
      if (b.requires_grad()) {
        double* db = b.mutable_grad().data();
        const double* av = a.values().data();
        for (std::size_t t = 0; t < plan.a_offset.size(); ++t) {
          gemm_tn_acc(av + plan.a_offset[t] * m * k, dc + t * m * n, db + plan.b_offset[t] * k * n, m, k, n);
        }
      }
    });
  }
  return c;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_rank_at_least(a, 2, "transpose");
  Shape shape = a.shape();
  const std::size_t r = shape[shape.size() - 2], c = shape.back();
  std::swap(shape[shape.size() - 2], shape.back());
  const std::size_t mats = a.numel() / (r * c);
  std::vector<double> out(a.numel());
  const double* av = a.values().data();
  for (std::size_t t = 0; t < mats; ++t) {
    const double* src = av + t * r * c;
    double* dst = out.data() + t * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  }
  Tensor y = Tensor::from(std::move(shape), std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    tape.record([a, y, r, c, mats]() mutable {
      if (!y.has_grad()) return;
      const double* dy = y.grad().data();
      double* da = a.mutable_grad().data();
      for (std::size_t t = 0; t < mats; ++t)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) da[t * r * c + i * c + j] += dy[t * r * c + j * r + i];
    });
  }
  return y;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const bool rg = any_needs_grad(a, b);
  Tensor y = Tensor::from(a.shape(), std::move(out), rg);
  if (rg) {
    tape.record([a, b, y]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto g = t->mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
      }
    });
  }
  return y;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_rank_at_least(x, 1, "add_bias");
  const std::size_t d = x.shape().back();
  if (bias.numel() != d) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
  }
  std::vector<double> out(x.numel());
  auto xv = x.values();
  auto bv = bias.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % d];
  const bool rg = any_needs_grad(x, bias);
  Tensor y = Tensor::from(x.shape(), std::move(out), rg);
  if (rg) {
    tape.record([x, bias, y, d]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      if (x.requires_grad()) {
        auto g = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
      }
      if (bias.requires_grad()) {
        auto g = bias.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) g[i % d] += dy[i];
      }
    });
  }
  return y;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  Tensor y = Tensor::from(x.shape(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record([x, y, factor]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * factor;
    });
  }
  return y;
}

Tensor relu(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  Tensor y = Tensor::from(x.shape(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record([x, y]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto xv = x.values();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0.0) g[i] += dy[i];
    });
  }
  return y;
}

namespace {
constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

Tensor gelu(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + kGeluC * v * v * v)));
  }
  Tensor y = Tensor::from(x.shape(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record([x, y]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto xv = x.values();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xv[i];
        const double t = std::tanh(kSqrt2OverPi * (v + kGeluC * v * v * v));
        const double dt = (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
        g[i] += dy[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
      }
    });
  }
  return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor y = Tensor::scalar(s, x.requires_grad());
  if (x.requires_grad()) {
    tape.record([x, y]() mutable {
      if (!y.has_grad()) return;
      const double dy = y.grad()[0];
      for (double& g : x.mutable_grad()) g += dy;
    });
  }
  return y;
}

namespace {

Tensor softmax_impl(Tape& tape, const Tensor& logits, const Tensor* mask) {
  require_rank_at_least(logits, 1, "softmax");
  if (mask) require_same_shape(logits, *mask, "masked_softmax_rows");
  const std::size_t n = logits.shape().back();
  const std::size_t rows = n ? logits.numel() / n : 0;
  auto lv = logits.values();
  std::span<const double> mv = mask ? mask->values() : std::span<const double>{};
  std::vector<double> out(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    double mx = -std::numeric_limits<double>::infinity();
    bool any_open = !mask;
    for (std::size_t j = 0; j < n; ++j) {
      double z = lv[base + j];
      if (mask) {
        z += mv[base + j];
        if (mv[base + j] > 0.5 * kMaskedLogit) any_open = true;
      }
      out[base + j] = z;
      mx = std::max(mx, z);
    }
    if (!any_open) {
      throw DegenerateRowError("masked_softmax_rows: row " + std::to_string(r) + " is fully masked");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[base + j] = std::exp(out[base + j] - mx);
      total += out[base + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[base + j] /= total;
  }
  const bool rg = logits.requires_grad() || (mask && mask->requires_grad());
  Tensor y = Tensor::from(logits.shape(), std::move(out), rg);
  if (rg) {
    Tensor m = mask ? *mask : Tensor();
    tape.record([logits, m, y, n, rows]() mutable {
      if (!y.has_grad()) return;
      auto p = y.values();
      auto dp = y.grad();
      std::span<double> gl = logits.requires_grad() ? logits.mutable_grad() : std::span<double>{};
      std::span<double> gm = (m.defined() && m.requires_grad()) ? m.mutable_grad() : std::span<double>{};
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += p[base + j] * dp[base + j];
        for (std::size_t j = 0; j < n; ++j) {
          const double gz = p[base + j] * (dp[base + j] - dot);
          if (!gl.empty()) gl[base + j] += gz;
          if (!gm.empty()) gm[base + j] += gz;
        }
      }
    });
  }
  return y;
}

}  // namespace

Tensor masked_softmax_rows(Tape& tape, const Tensor& logits, const Tensor& additive_mask) {
  return softmax_impl(tape, logits, &additive_mask);
}

Tensor softmax_rows(Tape& tape, const Tensor& logits) { return softmax_impl(tape, logits, nullptr); }

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias) {
  require_rank_at_least(x, 1, "layer_norm");
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " vs input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<double> xhat(x.numel()), inv_std(rows), out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mean) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  const bool rg = any_needs_grad(x, gain, bias);
  Tensor y = Tensor::from(x.shape(), std::move(out), rg);
  if (rg) {
    tape.record([x, gain, bias, y, xhat = std::move(xhat), inv_std = std::move(inv_std), d, rows]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto gv = gain.values();
      if (gain.requires_grad()) {
        auto g = gain.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) g[i % d] += dy[i] * xhat[i];
      }
      if (bias.requires_grad()) {
        auto g = bias.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) g[i % d] += dy[i];
      }
      if (x.requires_grad()) {
        auto g = x.mutable_grad();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dy[r * d + j] * gv[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[r * d + j];
          }
          mean_dxhat *= inv_d;
          mean_dxhat_xhat *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dy[r * d + j] * gv[j];
            g[r * d + j] += inv_std[r] * (dxh - mean_dxhat - xhat[r * d + j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return y;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [batch, c], got " + shape_str(logits.shape()));
  const std::size_t batch = logits.dim(0), c = logits.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw IndexError("cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(c) + ")");
    }
  }
  auto lv = logits.values();
  std::vector<double> probs(logits.numel());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = lv.data() + b * c;
    const std::size_t top = static_cast<std::size_t>(std::max_element(row, row + c) - row);
    const double mx = row[top];
    // log1p over the non-max terms keeps a confident loss accurate to its own
    // ulp instead of the ulp of 1.
    double rest = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (j != top) rest += std::exp(row[j] - mx);
    const double tail = std::log1p(rest);
    for (std::size_t j = 0; j < c; ++j) probs[b * c + j] = std::exp(row[j] - mx - tail);
    loss += (mx - row[labels[b]]) + tail;
  }
  loss /= static_cast<double>(batch);
  Tensor out = Tensor::scalar(loss, logits.requires_grad());
  if (logits.requires_grad()) {
    std::vector<int> ys(labels.begin(), labels.end());
    tape.record([logits, out, probs = std::move(probs), ys = std::move(ys), batch, c]() mutable {
      if (!out.has_grad()) return;
      const double scale = out.grad()[0] / static_cast<double>(batch);
      auto g = logits.mutable_grad();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < c; ++j)
          g[b * c + j] += scale * (probs[b * c + j] - (static_cast<int>(j) == ys[b] ? 1.0 : 0.0));
    });
  }
  return out;
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be [V, d], got " + shape_str(table.shape()));
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside [0," + std::to_string(vocab) + ")");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  Tensor y = Tensor::from({ids.size(), d}, std::move(out), table.requires_grad());
  if (table.requires_grad()) {
    std::vector<int> idv(ids.begin(), ids.end());
    tape.record([table, y, idv = std::move(idv), d]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto g = table.mutable_grad();
      for (std::size_t i = 0; i < idv.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) g[static_cast<std::size_t>(idv[i]) * d + j] += dy[i * d + j];
    });
  }
  return y;
}

Tensor leading_rows(Tape& tape, const Tensor& x, std::size_t count) {
  if (x.rank() != 2 || count > x.dim(0)) {
    throw DimensionError("leading_rows: cannot take " + std::to_string(count) + " rows of " + shape_str(x.shape()));
  }
  const std::size_t d = x.dim(1);
  auto xv = x.values();
  std::vector<double> out(xv.begin(), xv.begin() + static_cast<std::ptrdiff_t>(count * d));
  Tensor y = Tensor::from({count, d}, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record([x, y]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
    });
  }
  return y;
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t start, std::size_t width) {
  if (x.rank() != 2 || start + width > x.dim(1)) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + "," + std::to_string(start + width) +
                         ") of " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), d = x.dim(1);
  auto xv = x.values();
  std::vector<double> out(n * width);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(xv.data() + i * d + start, width, out.data() + i * width);
  Tensor y = Tensor::from({n, width}, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    tape.record([x, y, start, width, n, d]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < width; ++j) g[i * d + start + j] += dy[i * width + j];
    });
  }
  return y;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts.front().dim(0);
  std::size_t d = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != n) {
      throw DimensionError("concat_cols: part " + shape_str(p.shape()) + " does not have " + std::to_string(n) + " rows");
    }
    d += p.dim(1);
    rg = rg || p.requires_grad();
  }
  std::vector<double> out(n * d);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    auto pv = p.values();
    for (std::size_t i = 0; i < n; ++i) std::copy_n(pv.data() + i * w, w, out.data() + i * d + off);
    off += w;
  }
  Tensor y = Tensor::from({n, d}, std::move(out), rg);
  if (rg) {
    tape.record([parts, y, n, d]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        const std::size_t w = p.dim(1);
        if (p.requires_grad()) {
          auto g = p.mutable_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * w + j] += dy[i * d + off + j];
        }
        off += w;
      }
    });
  }
  return y;
}

}  // namespace ahl
