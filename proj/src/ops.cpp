#include "tarot/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "tarot/errors.hpp"

namespace tarot::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap view(std::span<const double> data, std::size_t r, std::size_t c) {
  return ConstMap(data.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MutMap view(std::vector<double>& data, std::size_t r, std::size_t c) {
  return MutMap(data.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void accumulate(std::vector<double>* dst, std::span<const double> src, double factor = 1.0) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += factor * src[i];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  view(out, m, n).noalias() = view(a.data(), m, k) * view(b.data(), k, n);
  return Tensor::make_result({m, n}, std::move(out), {a, b},
                             [a, b, m, k, n](std::span<const double> g, std::span<std::vector<double>*> in) {
                               auto gm = view(g, m, n);
                               if (in[0]) view(*in[0], m, k).noalias() += gm * view(b.data(), k, n).transpose();
                               if (in[1]) view(*in[1], k, n).noalias() += view(a.data(), m, k).transpose() * gm;
                             });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  view(out, c, r) = view(a.data(), r, c).transpose();
  return Tensor::make_result({c, r}, std::move(out), {a},
                             [r, c](std::span<const double> g, std::span<std::vector<double>*> in) {
                               view(*in[0], r, c) += view(g, c, r).transpose();
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b},
                             [](std::span<const double> g, std::span<std::vector<double>*> in) {
                               accumulate(in[0], g);
                               accumulate(in[1], g);
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b},
                             [](std::span<const double> g, std::span<std::vector<double>*> in) {
                               accumulate(in[0], g);
                               accumulate(in[1], g, -1.0);
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b},
                             [a, b](std::span<const double> g, std::span<std::vector<double>*> in) {
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 if (in[0]) (*in[0])[i] += g[i] * b.data()[i];
                                 if (in[1]) (*in[1])[i] += g[i] * a.data()[i];
                               }
                             });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_rank2(a, "add_bias");
  require_rank2(bias, "add_bias");
  const std::size_t r = a.rows(), c = a.cols();
  if (bias.rows() != 1 || bias.cols() != c) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " does not broadcast over " +
                     shape_string(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bias.data()[j];
  return Tensor::make_result(a.shape(), std::move(out), {a, bias},
                             [r, c](std::span<const double> g, std::span<std::vector<double>*> in) {
                               accumulate(in[0], g);
                               if (in[1]) {
                                 for (std::size_t i = 0; i < r; ++i)
                                   for (std::size_t j = 0; j < c; ++j) (*in[1])[j] += g[i * c + j];
                               }
                             });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [factor](std::span<const double> g, std::span<std::vector<double>*> in) {
                               accumulate(in[0], g, factor);
                             });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const Tensor& p : parts) require_rank2(p, "concat");
  const std::size_t other = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    const std::size_t o = axis == 0 ? p.cols() : p.rows();
    if (o != other) {
      throw ShapeError("concat: incompatible shapes " + shape_string(parts[0].shape()) + " and " +
                       shape_string(p.shape()));
    }
    total += axis == 0 ? p.rows() : p.cols();
  }
  const Shape out_shape = axis == 0 ? Shape{total, other} : Shape{other, total};
  std::vector<double> out(total * other);
  std::vector<std::size_t> extents;
  extents.reserve(parts.size());
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t r = p.rows(), c = p.cols();
    if (axis == 0) {
      std::copy(p.data().begin(), p.data().end(), out.begin() + static_cast<std::ptrdiff_t>(offset * c));
      extents.push_back(r);
      offset += r;
    } else {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * total + offset + j] = p.data()[i * c + j];
      extents.push_back(c);
      offset += c;
    }
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return Tensor::make_result(
      out_shape, std::move(out), std::move(inputs),
      [axis, other, total, extents](std::span<const double> g, std::span<std::vector<double>*> in) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < extents.size(); ++p) {
          const std::size_t e = extents[p];
          if (in[p]) {
            auto& dst = *in[p];
            if (axis == 0) {
              for (std::size_t i = 0; i < e * other; ++i) dst[i] += g[off * other + i];
            } else {
              for (std::size_t i = 0; i < other; ++i)
                for (std::size_t j = 0; j < e; ++j) dst[i * e + j] += g[i * total + off + j];
            }
          }
          off += e;
        }
      });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor row_slice(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "row_slice");
  if (begin >= end || end > a.rows()) {
    throw ShapeError("row_slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for shape " + shape_string(a.shape()));
  }
  const std::size_t c = a.cols();
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                          a.data().begin() + static_cast<std::ptrdiff_t>(end * c));
  return Tensor::make_result({end - begin, c}, std::move(out), {a},
                             [begin, c](std::span<const double> g, std::span<std::vector<double>*> in) {
                               auto& dst = *in[0];
                               for (std::size_t i = 0; i < g.size(); ++i) dst[begin * c + i] += g[i];
                             });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank2(a, "gather_rows");
  if (rows.empty()) throw ShapeError("gather_rows: empty row list");
  const std::size_t n = a.rows(), c = a.cols();
  std::vector<double> out(rows.size() * c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for shape " +
                       shape_string(a.shape()));
    }
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * c), c,
                out.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return Tensor::make_result({rows.size(), c}, std::move(out), {a},
                             [idx, c](std::span<const double> g, std::span<std::vector<double>*> in) {
                               auto& dst = *in[0];
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t j = 0; j < c; ++j) dst[idx[i] * c + j] += g[i * c + j];
                             });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids) {
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0) throw ShapeError("embedding_lookup: negative id");
    rows[i] = static_cast<std::size_t>(ids[i]);
  }
  return gather_rows(table, rows);
}

Tensor mean_over_axis(const Tensor& a, std::size_t axis) {
  require_rank2(a, "mean_over_axis");
  if (axis > 1) throw ShapeError("mean_over_axis: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t len = axis == 0 ? r : c;
  if (len == 0) throw ShapeError("mean_over_axis: empty axis");
  const Shape out_shape = axis == 0 ? Shape{1, c} : Shape{r, 1};
  std::vector<double> out(axis == 0 ? c : r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += a.data()[i * c + j];
  for (double& v : out) v /= static_cast<double>(len);
  return Tensor::make_result(out_shape, std::move(out), {a},
                             [axis, r, c, len](std::span<const double> g, std::span<std::vector<double>*> in) {
                               auto& dst = *in[0];
                               const double inv = 1.0 / static_cast<double>(len);
                               for (std::size_t i = 0; i < r; ++i)
                                 for (std::size_t j = 0; j < c; ++j)
                                   dst[i * c + j] += g[axis == 0 ? j : i] * inv;
                             });
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({}, {s}, {a}, [](std::span<const double> g, std::span<std::vector<double>*> in) {
    for (double& d : *in[0]) d += g[0];
  });
}

Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor softmax_over_axis(const Tensor& a, std::size_t axis) {
  require_rank2(a, "softmax_over_axis");
  if (axis > 1) throw ShapeError("softmax_over_axis: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t len = axis == 0 ? r : c, count = axis == 0 ? c : r;
  if (len == 0) throw ShapeError("softmax_over_axis: empty axis");
  const std::size_t stride = axis == 0 ? c : 1, group_stride = axis == 0 ? 1 : c;
  std::vector<double> out(a.numel());
  for (std::size_t gi = 0; gi < count; ++gi) {
    const std::size_t base = gi * group_stride;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, a.data()[base + k * stride]);
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double e = std::exp(a.data()[base + k * stride] - mx);
      out[base + k * stride] = e;
      z += e;
    }
    for (std::size_t k = 0; k < len; ++k) out[base + k * stride] /= z;
  }
  std::vector<double> y = out;
  return Tensor::make_result(
      a.shape(), std::move(out), {a},
      [y = std::move(y), len, count, stride, group_stride](std::span<const double> g,
                                                           std::span<std::vector<double>*> in) {
        auto& dst = *in[0];
        for (std::size_t gi = 0; gi < count; ++gi) {
          const std::size_t base = gi * group_stride;
          double dot = 0.0;
          for (std::size_t k = 0; k < len; ++k) dot += g[base + k * stride] * y[base + k * stride];
          for (std::size_t k = 0; k < len; ++k) {
            const std::size_t i = base + k * stride;
            dst[i] += y[i] * (g[i] - dot);
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2(x, "layer_norm");
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.numel() != c || bias.numel() != c) {
    throw ShapeError("layer_norm: affine parameters " + shape_string(gain.shape()) + " / " +
                     shape_string(bias.shape()) + " do not match " + shape_string(x.shape()));
  }
  std::vector<double> xhat(r * c), inv_std(r), out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += x.data()[i * c + j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x.data()[i * c + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (x.data()[i * c + j] - mean) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gain.data()[j] + bias.data()[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [gain, xhat = std::move(xhat), inv_std = std::move(inv_std), r, c](std::span<const double> g,
                                                                         std::span<std::vector<double>*> in) {
        for (std::size_t i = 0; i < r; ++i) {
          if (in[0]) {
            double mean_gh = 0.0, mean_gh_xhat = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double gh = g[i * c + j] * gain.data()[j];
              mean_gh += gh;
              mean_gh_xhat += gh * xhat[i * c + j];
            }
            mean_gh /= static_cast<double>(c);
            mean_gh_xhat /= static_cast<double>(c);
            for (std::size_t j = 0; j < c; ++j) {
              const double gh = g[i * c + j] * gain.data()[j];
              (*in[0])[i * c + j] += inv_std[i] * (gh - mean_gh - xhat[i * c + j] * mean_gh_xhat);
            }
          }
          for (std::size_t j = 0; j < c; ++j) {
            if (in[1]) (*in[1])[j] += g[i * c + j] * xhat[i * c + j];
            if (in[2]) (*in[2])[j] += g[i * c + j];
          }
        }
      });
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  }
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [a](std::span<const double> g, std::span<std::vector<double>*> in) {
                               const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 const double x = a.data()[i];
                                 const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
                                 const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
                                 (*in[0])[i] += g[i] * (cdf + x * pdf);
                               }
                             });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  std::vector<double> y = out;
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [y = std::move(y)](std::span<const double> g, std::span<std::vector<double>*> in) {
                               for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * y[i] * (1.0 - y[i]);
                             });
}

Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != a.numel()) {
    throw ShapeError("masked_fill: mask of length " + std::to_string(mask.size()) +
                     " does not match shape " + shape_string(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [m = std::move(m)](std::span<const double> g, std::span<std::vector<double>*> in) {
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 if (!m[i]) (*in[0])[i] += g[i];
                             });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets) {
  require_rank2(logits, "cross_entropy");
  const std::size_t n = logits.rows(), c = logits.cols();
  if (targets.size() != n || n == 0) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_string(logits.shape()));
  }
  std::vector<double> probs(n * c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c) {
      throw ShapeError("cross_entropy: target " + std::to_string(targets[i]) + " outside " + std::to_string(c) +
                       " classes");
    }
    const double* row = logits.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
    total += lse - row[targets[i]];
  }
  std::vector<std::int64_t> t(targets.begin(), targets.end());
  return Tensor::make_result(
      {}, {total / static_cast<double>(n)}, {logits},
      [probs = std::move(probs), t = std::move(t), n, c](std::span<const double> g, std::span<std::vector<double>*> in) {
        const double f = g[0] / static_cast<double>(n);
        auto& dst = *in[0];
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) dst[i * c + j] += f * probs[i * c + j];
          dst[i * c + static_cast<std::size_t>(t[i])] -= f;
        }
      });
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  const std::size_t n = logits.numel();
  if (targets.size() != n || n == 0) {
    throw ShapeError("bce_with_logits: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_string(logits.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = logits.data()[i], y = targets[i];
    // -[y log s(x) + (1-y) log(1-s(x))] = max(x,0) - x y + log(1 + e^{-|x|})
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  std::vector<double> y(targets.begin(), targets.end());
  return Tensor::make_result({}, {total / static_cast<double>(n)}, {logits},
                             [logits, y = std::move(y), n](std::span<const double> g,
                                                           std::span<std::vector<double>*> in) {
                               const double f = g[0] / static_cast<double>(n);
                               for (std::size_t i = 0; i < n; ++i) {
                                 const double x = logits.data()[i];
                                 const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                                 (*in[0])[i] += f * (s - y[i]);
                               }
                             });
}

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::span<const std::uint8_t> key_mask) {
  require_rank2(q, "scaled_dot_attention");
  require_rank2(k, "scaled_dot_attention");
  require_rank2(v, "scaled_dot_attention");
  if (q.cols() != k.cols()) {
    throw ShapeError("scaled_dot_attention: query dim " + shape_string(q.shape()) + " vs key dim " +
                     shape_string(k.shape()));
  }
  if (k.rows() != v.rows()) {
    throw ShapeError("scaled_dot_attention: keys " + shape_string(k.shape()) + " vs values " +
                     shape_string(v.shape()));
  }
  const std::size_t m = q.rows(), n = k.rows();
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (!key_mask.empty()) {
    if (key_mask.size() != n) {
      throw ShapeError("scaled_dot_attention: key mask length " + std::to_string(key_mask.size()) + " for " +
                       std::to_string(n) + " keys");
    }
    if (std::all_of(key_mask.begin(), key_mask.end(), [](std::uint8_t b) { return b != 0; })) {
      throw std::invalid_argument("scaled_dot_attention: every key is masked");
    }
    std::vector<std::uint8_t> full(m * n);
    for (std::size_t i = 0; i < m; ++i) std::copy(key_mask.begin(), key_mask.end(), full.begin() + i * n);
    scores = masked_fill(scores, full, -std::numeric_limits<double>::infinity());
  }
  Tensor weights = softmax_over_axis(scores, 1);
  return {matmul(weights, v), weights};
}

}  // namespace tarot::ops
