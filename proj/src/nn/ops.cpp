#include "mpa/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mpa/error.hpp"
#include "mpa/nn/kernels.hpp"

namespace mpa::nn {

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a 2-D tensor, got " + shape_str(t.shape()));
  }
}

void gemm(const kernels::Gemm& g, const float* a, const float* b, float* c) {
  kernels::gemm(kernels::default_exec(), g, a, b, c);
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ShapeError("matmul " + shape_str(av.shape()) + " * " + shape_str(bv.shape()));
  }
  Tensor out({m, n});
  gemm({false, false, m, n, k, false}, av.data().data(), bv.data().data(), out.data().data());
  return a.tape->push(std::move(out), {a, b}, [a, b, m, n, k](Tape& t, int self) {
    const float* g = t.grad(self).data();
    if (t.requires_grad(a.id)) {
      gemm({false, true, m, k, n, true}, g, t.value(b.id).data().data(), t.grad(a.id).data());
    }
    if (t.requires_grad(b.id)) {
      gemm({true, false, k, n, m, true}, t.value(a.id).data().data(), g, t.grad(b.id).data());
    }
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul_nt");
  require_rank2(bv, "matmul_nt");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
  if (bv.dim(1) != k) {
    throw ShapeError("matmul_nt " + shape_str(av.shape()) + " * " + shape_str(bv.shape()) + "^T");
  }
  Tensor out({m, n});
  gemm({false, true, m, n, k, false}, av.data().data(), bv.data().data(), out.data().data());
  return a.tape->push(std::move(out), {a, b}, [a, b, m, n, k](Tape& t, int self) {
    const float* g = t.grad(self).data();
    if (t.requires_grad(a.id)) {
      gemm({false, false, m, k, n, true}, g, t.value(b.id).data().data(), t.grad(a.id).data());
    }
    if (t.requires_grad(b.id)) {
      gemm({true, false, n, k, m, true}, g, t.value(a.id).data().data(), t.grad(b.id).data());
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() == bv.shape()) {
    Tensor out = av;
    auto o = out.data();
    auto bd = bv.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
    return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
      const auto& g = t.grad(self);
      for (Var v : {a, b}) {
        if (!t.requires_grad(v.id)) continue;
        auto& dv = t.grad(v.id);
        for (std::size_t i = 0; i < g.size(); ++i) dv[i] += g[i];
      }
    });
  }
  if (av.rank() == 2 && bv.rank() == 1 && bv.dim(0) == av.dim(1)) {
    const std::size_t m = av.dim(0), n = av.dim(1);
    Tensor out = av;
    for (std::size_t r = 0; r < m; ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < n; ++c) row[c] += bv[c];
    }
    return a.tape->push(std::move(out), {a, b}, [a, b, m, n](Tape& t, int self) {
      const auto& g = t.grad(self);
      if (t.requires_grad(a.id)) {
        auto& da = t.grad(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (t.requires_grad(b.id)) {
        auto& db = t.grad(b.id);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) db[c] += g[r * n + c];
        }
      }
    });
  }
  throw ShapeError("add " + shape_str(av.shape()) + " + " + shape_str(bv.shape()));
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ShapeError("mul " + shape_str(av.shape()) + " * " + shape_str(bv.shape()));
  }
  Tensor out = av;
  auto o = out.data();
  auto bd = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(a.id)) {
      auto& da = t.grad(a.id);
      auto bd = t.value(b.id).data();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bd[i];
    }
    if (t.requires_grad(b.id)) {
      auto& db = t.grad(b.id);
      auto ad = t.value(a.id).data();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * ad[i];
    }
  });
}

Var scale(Var a, float s) {
  Tensor out = a.value();
  for (float& v : out.data()) v *= s;
  return a.tape->push(std::move(out), {a}, [a, s](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& da = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * s;
  });
}

Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) {
    throw ShapeError("softmax axis " + std::to_string(axis) + " out of range for " +
                     shape_str(xv.shape()));
  }
  std::size_t outer = 1, inner = 1;
  const std::size_t len = xv.dim(axis);
  for (std::size_t i = 0; i < axis; ++i) outer *= xv.dim(i);
  for (std::size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);

  Tensor out(xv.shape());
  auto in = xv.data();
  auto o = out.data();
  for (std::size_t p = 0; p < outer; ++p) {
    for (std::size_t q = 0; q < inner; ++q) {
      const std::size_t base = p * len * inner + q;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, in[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const float e = std::exp(in[base + i * inner] - mx);
        o[base + i * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t i = 0; i < len; ++i) {
        o[base + i * inner] = static_cast<float>(o[base + i * inner] * inv);
      }
    }
  }
  return x.tape->push(std::move(out), {x}, [x, outer, inner, len](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto y = t.value(self).data();
    auto& dx = t.grad(x.id);
    for (std::size_t p = 0; p < outer; ++p) {
      for (std::size_t q = 0; q < inner; ++q) {
        const std::size_t base = p * len * inner + q;
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          dot += static_cast<double>(g[base + i * inner]) * y[base + i * inner];
        }
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t j = base + i * inner;
          dx[j] += static_cast<float>(y[j] * (g[j] - dot));
        }
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, float eps) {
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  const std::size_t n = xv.cols();
  const std::size_t rows = xv.numel() / n;
  if (gv.rank() != 1 || gv.dim(0) != n || bv.shape() != gv.shape()) {
    throw ShapeError("layer_norm over " + shape_str(xv.shape()) + " with gain " +
                     shape_str(gv.shape()) + " and bias " + shape_str(bv.shape()));
  }
  Tensor out(xv.shape());
  std::vector<float> xhat(xv.numel());
  std::vector<float> rstd(rows);
  auto in = xv.data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = in.data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += xr[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = xr[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + static_cast<double>(eps));
    rstd[r] = static_cast<float>(rs);
    for (std::size_t c = 0; c < n; ++c) {
      const float h = static_cast<float>((xr[c] - mean) * rs);
      xhat[r * n + c] = h;
      o[r * n + c] = h * gv[c] + bv[c];
    }
  }
  return x.tape->push(
      std::move(out), {x, gain, bias},
      [x, gain, bias, n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& t, int self) {
        const auto& g = t.grad(self);
        const Tensor& gv = t.value(gain.id);
        if (t.requires_grad(gain.id)) {
          auto& dg = t.grad(gain.id);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < n; ++c) dg[c] += g[r * n + c] * xhat[r * n + c];
          }
        }
        if (t.requires_grad(bias.id)) {
          auto& db = t.grad(bias.id);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < n; ++c) db[c] += g[r * n + c];
          }
        }
        if (t.requires_grad(x.id)) {
          auto& dx = t.grad(x.id);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dh = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              const double dh = static_cast<double>(g[r * n + c]) * gv[c];
              mean_d += dh;
              mean_dh += dh * xhat[r * n + c];
            }
            mean_d /= static_cast<double>(n);
            mean_dh /= static_cast<double>(n);
            for (std::size_t c = 0; c < n; ++c) {
              const double dh = static_cast<double>(g[r * n + c]) * gv[c];
              dx[r * n + c] +=
                  static_cast<float>(rstd[r] * (dh - mean_d - xhat[r * n + c] * mean_dh));
            }
          }
        }
      });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (float& v : out.data()) {
    v = static_cast<float>(0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)));
  }
  return x.tape->push(std::move(out), {x}, [x](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto in = t.value(x.id).data();
    auto& dx = t.grad(x.id);
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx[i] += static_cast<float>(g[i] * (cdf + v * pdf));
    }
  });
}

std::size_t conv1d_output_length(std::size_t t, std::size_t stride) {
  return (t + stride - 1) / stride;
}

Var conv1d(Var x, Var kernel, Var bias, std::size_t stride) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  const Tensor& bv = bias.value();
  require_rank2(xv, "conv1d");
  if (stride == 0) throw ShapeError("conv1d stride must be positive");
  if (kv.rank() != 3 || kv.dim(1) != xv.dim(1) || bv.rank() != 1 || bv.dim(0) != kv.dim(2)) {
    throw ShapeError("conv1d input " + shape_str(xv.shape()) + " kernel " + shape_str(kv.shape()) +
                     " bias " + shape_str(bv.shape()));
  }
  const std::size_t t_in = xv.dim(0), c_in = xv.dim(1);
  const std::size_t k = kv.dim(0), c_out = kv.dim(2);
  const std::size_t t_out = conv1d_output_length(t_in, stride);
  const std::size_t pad = (k - 1) / 2;
  const std::size_t width = k * c_in;

  // im2col: row r holds the k input frames feeding output r, zero padded.
  std::vector<float> cols(t_out * width, 0.0f);
  auto in = xv.data();
  for (std::size_t r = 0; r < t_out; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const long src = static_cast<long>(r * stride + j) - static_cast<long>(pad);
      if (src < 0 || src >= static_cast<long>(t_in)) continue;
      std::copy_n(in.data() + static_cast<std::size_t>(src) * c_in, c_in,
                  cols.data() + r * width + j * c_in);
    }
  }
  Tensor out({t_out, c_out});
  for (std::size_t r = 0; r < t_out; ++r) std::copy_n(bv.data().data(), c_out, out.row(r).data());
  gemm({false, false, t_out, c_out, width, true}, cols.data(), kv.data().data(), out.data().data());

  return x.tape->push(
      std::move(out), {x, kernel, bias},
      [x, kernel, bias, t_in, c_in, k, c_out, t_out, pad, width, stride,
       cols = std::move(cols)](Tape& t, int self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(bias.id)) {
          auto& db = t.grad(bias.id);
          for (std::size_t r = 0; r < t_out; ++r) {
            for (std::size_t c = 0; c < c_out; ++c) db[c] += g[r * c_out + c];
          }
        }
        if (t.requires_grad(kernel.id)) {
          gemm({true, false, width, c_out, t_out, true}, cols.data(), g.data(),
               t.grad(kernel.id).data());
        }
        if (t.requires_grad(x.id)) {
          std::vector<float> dcols(t_out * width);
          gemm({false, true, t_out, width, c_out, false}, g.data(),
               t.value(kernel.id).data().data(), dcols.data());
          auto& dx = t.grad(x.id);
          for (std::size_t r = 0; r < t_out; ++r) {
            for (std::size_t j = 0; j < k; ++j) {
              const long src = static_cast<long>(r * stride + j) - static_cast<long>(pad);
              if (src < 0 || src >= static_cast<long>(t_in)) continue;
              float* d = dx.data() + static_cast<std::size_t>(src) * c_in;
              const float* s = dcols.data() + r * width + j * c_in;
              for (std::size_t c = 0; c < c_in; ++c) d[c] += s[c];
            }
          }
        }
      });
}

Var embedding(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  require_rank2(tv, "embedding");
  if (ids.empty()) throw ShapeError("embedding lookup with no ids");
  const std::size_t v = tv.dim(0), d = tv.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw InvalidInput("token id " + std::to_string(id) + " outside embedding table of " +
                         std::to_string(v) + " rows");
    }
  }
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return table.tape->push(std::move(out), {table}, [table, d, idv = std::move(idv)](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& dt = t.grad(table.id);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      float* dst = dt.data() + static_cast<std::size_t>(idv[i]) * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += g[i * d + c];
    }
  });
}

Var slice_cols(Var x, std::size_t start, std::size_t len) {
  const Tensor& xv = x.value();
  require_rank2(xv, "slice_cols");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (len == 0 || start + len > n) {
    throw ShapeError("slice_cols [" + std::to_string(start) + ", +" + std::to_string(len) +
                     ") of " + shape_str(xv.shape()));
  }
  Tensor out({m, len});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(xv.data().data() + r * n + start, len, out.row(r).data());
  }
  return x.tape->push(std::move(out), {x}, [x, m, n, start, len](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& dx = t.grad(x.id);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < len; ++c) dx[r * n + start + c] += g[r * len + c];
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t m = parts[0].value().rows();
  std::size_t n = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    require_rank2(p.value(), "concat_cols");
    if (p.value().dim(0) != m) throw ShapeError("concat_cols row count mismatch");
    widths.push_back(p.value().dim(1));
    n += widths.back();
  }
  Tensor out({m, n});
  std::size_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& pv = parts[i].value();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(pv.data().data() + r * widths[i], widths[i], out.row(r).data() + off);
    }
    off += widths[i];
  }
  return parts[0].tape->push(std::move(out), parts, [parts, widths, m, n](Tape& t, int self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (t.requires_grad(parts[i].id)) {
        auto& dp = t.grad(parts[i].id);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < widths[i]; ++c) dp[r * widths[i] + c] += g[r * n + off + c];
        }
      }
      off += widths[i];
    }
  });
}

Var transpose(Var x) {
  const Tensor& xv = x.value();
  require_rank2(xv, "transpose");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  Tensor out({n, m});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out.at(c, r) = xv.at(r, c);
  }
  return x.tape->push(std::move(out), {x}, [x, m, n](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& dx = t.grad(x.id);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += g[c * m + r];
    }
  });
}

Var dropout(Var x, float p, const DropoutKey& key) {
  if (p <= 0.0f) return x;
  if (p >= 1.0f) throw InvalidInput("dropout probability must be < 1");
  const Tensor& xv = x.value();
  const float keep_scale = 1.0f / (1.0f - p);
  const std::uint64_t base = mix_key({key.seed, key.layer, key.step, key.stream});
  std::vector<float> mask(xv.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = unit_float(splitmix64(base + i)) < p ? 0.0f : keep_scale;
  }
  Tensor out = xv;
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= mask[i];
  return x.tape->push(std::move(out), {x}, [x, mask = std::move(mask)](Tape& t, int self) {
    const auto& g = t.grad(self);
    auto& dx = t.grad(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (float v : x.value().data()) s += v;
  return x.tape->push(Tensor({1}, {static_cast<float>(s)}), {x}, [x](Tape& t, int self) {
    const float g = t.grad(self)[0];
    for (float& d : t.grad(x.id)) d += g;
  });
}

double log_sum_exp(std::span<const float> logits) {
  float mx = -std::numeric_limits<float>::infinity();
  for (float v : logits) mx = std::max(mx, v);
  double s = 0.0;
  for (float v : logits) s += std::exp(static_cast<double>(v) - mx);
  return mx + std::log(s);
}

double log_softmax_at(std::span<const float> logits, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw InvalidInput("target id " + std::to_string(target) + " outside " +
                       std::to_string(logits.size()) + " logits");
  }
  return static_cast<double>(logits[static_cast<std::size_t>(target)]) - log_sum_exp(logits);
}

Var cross_entropy(Var logits, std::span<const int> targets, const std::vector<bool>& position_mask,
                  Reduction reduction) {
  const Tensor& lv = logits.value();
  require_rank2(lv, "cross_entropy");
  const std::size_t rows = lv.dim(0), v = lv.dim(1);
  if (targets.size() != rows || position_mask.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(rows) + " rows, " +
                     std::to_string(targets.size()) + " targets, " +
                     std::to_string(position_mask.size()) + " mask entries");
  }
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!position_mask[r]) continue;
    ++count;
    total -= log_softmax_at(lv.row(r), targets[r]);
  }
  if (count == 0) throw InvalidInput("cross_entropy mask selects no positions");
  const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(count) : 1.0;
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.tape->push(
      Tensor({1}, {static_cast<float>(total * norm)}), {logits},
      [logits, rows, v, norm, tg = std::move(tg), mask = position_mask](Tape& t, int self) {
        const double g = t.grad(self)[0] * norm;
        const Tensor& lv = t.value(logits.id);
        auto& dl = t.grad(logits.id);
        for (std::size_t r = 0; r < rows; ++r) {
          if (!mask[r]) continue;
          auto row = lv.row(r);
          const double lse = log_sum_exp(row);
          for (std::size_t c = 0; c < v; ++c) {
            double p = std::exp(static_cast<double>(row[c]) - lse);
            if (static_cast<int>(c) == tg[r]) p -= 1.0;
            dl[r * v + c] += static_cast<float>(g * p);
          }
        }
      });
}

Var masked_mse(Var pred, std::span<const float> targets, const std::vector<bool>& position_mask,
               Reduction reduction) {
  const Tensor& pv = pred.value();
  const std::size_t rows = pv.numel();
  if (pv.cols() != 1 && pv.rank() == 2) throw ShapeError("masked_mse expects [l x 1] predictions");
  if (targets.size() != rows || position_mask.size() != rows) {
    throw ShapeError("masked_mse length mismatch");
  }
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!position_mask[r]) continue;
    ++count;
    const double d = static_cast<double>(pv[r]) - targets[r];
    total += d * d;
  }
  if (count == 0) throw InvalidInput("masked_mse mask selects no positions");
  const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(count) : 1.0;
  std::vector<float> tg(targets.begin(), targets.end());
  return pred.tape->push(
      Tensor({1}, {static_cast<float>(total * norm)}), {pred},
      [pred, rows, norm, tg = std::move(tg), mask = position_mask](Tape& t, int self) {
        const double g = t.grad(self)[0] * norm;
        const Tensor& pv = t.value(pred.id);
        auto& dp = t.grad(pred.id);
        for (std::size_t r = 0; r < rows; ++r) {
          if (!mask[r]) continue;
          dp[r] += static_cast<float>(g * 2.0 * (static_cast<double>(pv[r]) - tg[r]));
        }
      });
}

}  // namespace mpa::nn
