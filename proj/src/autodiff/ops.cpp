#include "gmint/autodiff/ops.h"

#include <Eigen/Core>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <memory>

#include "gmint/common/errors.h"

namespace gmint::ad {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

constexpr double kProbFloor = 1e-300;
const double kSigmoidHi = std::nextafter(1.0, 0.0);

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

std::string op_shape_error(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b);
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<long>(tail.size()));
}

ConstMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(bv.rank() == 2 && av.inner() == bv.dim(0), op_shape_error("matmul", av.shape(), bv.shape()));
  const std::size_t m = av.outer(), k = bv.dim(0), n = bv.dim(1);
  Shape out_shape(av.shape().begin(), av.shape().end() - 1);
  out_shape.push_back(n);
  Tensor out(out_shape);
  as_matrix(out, m, n).noalias() = as_matrix(av, m, k) * as_matrix(bv, k, n);
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape& tape, const Tensor& g) {
    auto gm = as_matrix(g, m, n);
    if (Tensor* ga = tape.grad_sink(a))
      as_matrix(*ga, m, k).noalias() += gm * as_matrix(b.value(), k, n).transpose();
    if (Tensor* gb = tape.grad_sink(b))
      as_matrix(*gb, k, n).noalias() += as_matrix(a.value(), m, k).transpose() * gm;
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(is_suffix(av.shape(), bv.shape()), op_shape_error("add", av.shape(), bv.shape()));
  Tensor out = av;
  const std::size_t period = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % period];
  return a.tape().record(std::move(out), {a, b}, [a, b, period](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = tape.grad_sink(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % period] += g[i];
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.shape() == bv.shape(), op_shape_error("mul", av.shape(), bv.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (Tensor* ga = tape.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    if (Tensor* gb = tape.grad_sink(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.tape().record(std::move(out), {a}, [a, factor](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_sink(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * factor;
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    if (Tensor* gx = tape.grad_sink(x))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0.0) (*gx)[i] += g[i];
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) {
    double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    v = std::clamp(s, DBL_MIN, kSigmoidHi);
  }
  auto saved = std::make_shared<Tensor>(out);
  return x.tape().record(std::move(out), {x}, [x, saved](Tape& tape, const Tensor& g) {
    const Tensor& s = *saved;
    if (Tensor* gx = tape.grad_sink(x))
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * s[i] * (1.0 - s[i]);
  });
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  const std::size_t rows = xv.outer(), cols = xv.inner();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * cols;
    double* o = out.data().data() + r * cols;
    double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  auto probs = std::make_shared<Tensor>(out);
  return x.tape().record(std::move(out), {x}, [x, probs, rows, cols](Tape& tape, const Tensor& g) {
    Tensor* gx = tape.grad_sink(x);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* p = probs->data().data() + r * cols;
      const double* gr = g.data().data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * p[c];
      double* dst = gx->data().data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += p[c] * (gr[c] - dot);
    }
  });
}

Var embedding_lookup(Var table, const TokenBatch& ids) {
  const Tensor& tv = table.value();
  require(tv.rank() == 2, "embedding_lookup: table must be rank 2, got " + to_string(tv.shape()));
  require(ids.ids.size() == ids.batch * ids.length && ids.batch > 0 && ids.length > 0,
          "embedding_lookup: token batch is inconsistent");
  const std::size_t vocab = tv.dim(0), width = tv.dim(1);
  for (int id : ids.ids)
    require(id >= 0 && static_cast<std::size_t>(id) < vocab,
            "embedding_lookup: token id " + std::to_string(id) + " outside vocabulary of " +
                std::to_string(vocab));
  Tensor out({ids.batch, ids.length, width});
  for (std::size_t i = 0; i < ids.ids.size(); ++i)
    std::copy_n(tv.data().data() + static_cast<std::size_t>(ids.ids[i]) * width, width,
                out.data().data() + i * width);
  return table.tape().record(std::move(out), {table}, [table, ids, width](Tape& tape, const Tensor& g) {
    Tensor* gt = tape.grad_sink(table);
    if (!gt) return;
    for (std::size_t i = 0; i < ids.ids.size(); ++i) {
      double* dst = gt->data().data() + static_cast<std::size_t>(ids.ids[i]) * width;
      const double* src = g.data().data() + i * width;
      for (std::size_t e = 0; e < width; ++e) dst[e] += src[e];
    }
  });
}

Var mean_pool(Var x, const Tensor& mask) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3 && mask.rank() == 2 && mask.dim(0) == xv.dim(0) && mask.dim(1) == xv.dim(1),
          op_shape_error("mean_pool", xv.shape(), mask.shape()));
  const std::size_t batch = xv.dim(0), len = xv.dim(1), width = xv.dim(2);
  std::vector<double> weights(batch * len, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    double count = 0.0;
    for (std::size_t t = 0; t < len; ++t) count += mask[b * len + t] != 0.0 ? 1.0 : 0.0;
    if (count == 0.0) continue;
    for (std::size_t t = 0; t < len; ++t)
      weights[b * len + t] = mask[b * len + t] != 0.0 ? 1.0 / count : 0.0;
  }
  Tensor out({batch, width});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < len; ++t) {
      double w = weights[b * len + t];
      if (w == 0.0) continue;
      const double* src = xv.data().data() + (b * len + t) * width;
      double* dst = out.data().data() + b * width;
      for (std::size_t e = 0; e < width; ++e) dst[e] += w * src[e];
    }
  return x.tape().record(std::move(out), {x},
                         [x, weights = std::move(weights), batch, len, width](Tape& tape, const Tensor& g) {
                           Tensor* gx = tape.grad_sink(x);
                           if (!gx) return;
                           for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t t = 0; t < len; ++t) {
                               double w = weights[b * len + t];
                               if (w == 0.0) continue;
                               double* dst = gx->data().data() + (b * len + t) * width;
                               const double* src = g.data().data() + b * width;
                               for (std::size_t e = 0; e < width; ++e) dst[e] += w * src[e];
                             }
                         });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t width = xv.inner(), rows = xv.outer();
  require(gamma.shape() == Shape{width} && beta.shape() == Shape{width},
          op_shape_error("layer_norm", xv.shape(), gamma.shape()));
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  auto normed = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * width;
    double mu = 0.0;
    for (std::size_t e = 0; e < width; ++e) mu += in[e];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t e = 0; e < width; ++e) var += (in[e] - mu) * (in[e] - mu);
    var /= static_cast<double>(width);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t e = 0; e < width; ++e) {
      double h = (in[e] - mu) * is;
      (*normed)[r * width + e] = h;
      out[r * width + e] = gv[e] * h + bv[e];
    }
  }
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, normed, inv_std, rows, width](Tape& tape, const Tensor& g) {
        const Tensor& gv = gamma.value();
        Tensor* gx = tape.grad_sink(x);
        Tensor* gg = tape.grad_sink(gamma);
        Tensor* gb = tape.grad_sink(beta);
        const double n = static_cast<double>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* h = normed->data().data() + r * width;
          const double* gr = g.data().data() + r * width;
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t e = 0; e < width; ++e) {
            double dh = gr[e] * gv[e];
            mean_dh += dh;
            mean_dh_h += dh * h[e];
            if (gg) (*gg)[e] += gr[e] * h[e];
            if (gb) (*gb)[e] += gr[e];
          }
          mean_dh /= n;
          mean_dh_h /= n;
          if (!gx) continue;
          double* dst = gx->data().data() + r * width;
          for (std::size_t e = 0; e < width; ++e)
            dst[e] += (*inv_std)[r] * (gr[e] * gv[e] - mean_dh - h[e] * mean_dh_h);
        }
      });
}

Var scaled_dot_attention(Var q, Var k, Var v, std::size_t num_heads, const Tensor* key_mask) {
  const Tensor& qv = q.value();
  require(qv.rank() == 3 && k.shape() == qv.shape() && v.shape() == qv.shape(),
          op_shape_error("scaled_dot_attention", qv.shape(), k.shape()));
  const std::size_t batch = qv.dim(0), len = qv.dim(1), width = qv.dim(2);
  require(num_heads > 0 && width % num_heads == 0,
          "scaled_dot_attention: width " + std::to_string(width) + " not divisible by " +
              std::to_string(num_heads) + " heads");
  if (key_mask)
    require(key_mask->shape() == Shape{batch, len},
            op_shape_error("scaled_dot_attention mask", qv.shape(), key_mask->shape()));
  const std::size_t head_dim = width / num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();

  // probs[b][h][i][j]
  auto probs = std::make_shared<std::vector<double>>(batch * num_heads * len * len, 0.0);
  Tensor out(qv.shape());
  auto at = [width](std::size_t b, std::size_t t, std::size_t len_) { return (b * len_ + t) * width; };
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < num_heads; ++h) {
      const std::size_t off = h * head_dim;
      for (std::size_t i = 0; i < len; ++i) {
        double* p = probs->data() + ((b * num_heads + h) * len + i) * len;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < len; ++j) {
          if (key_mask && (*key_mask)[b * len + j] == 0.0) continue;
          double s = 0.0;
          for (std::size_t d = 0; d < head_dim; ++d)
            s += qv[at(b, i, len) + off + d] * kv[at(b, j, len) + off + d];
          p[j] = s * inv_sqrt;
          mx = std::max(mx, p[j]);
        }
        if (mx == -std::numeric_limits<double>::infinity()) continue;
        double total = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          if (key_mask && (*key_mask)[b * len + j] == 0.0) continue;
          total += (p[j] = std::exp(p[j] - mx));
        }
        for (std::size_t j = 0; j < len; ++j) {
          if (key_mask && (*key_mask)[b * len + j] == 0.0) continue;
          p[j] /= total;
          for (std::size_t d = 0; d < head_dim; ++d)
            out[at(b, i, len) + off + d] += p[j] * vv[at(b, j, len) + off + d];
        }
      }
    }

  return q.tape().record(
      std::move(out), {q, k, v},
      [q, k, v, probs, batch, len, width, num_heads, head_dim, inv_sqrt, at](Tape& tape, const Tensor& g) {
        const Tensor& qv = q.value();
        const Tensor& kv = k.value();
        const Tensor& vv = v.value();
        Tensor* gq = tape.grad_sink(q);
        Tensor* gk = tape.grad_sink(k);
        Tensor* gv = tape.grad_sink(v);
        std::vector<double> dp(len), ds(len);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < num_heads; ++h) {
            const std::size_t off = h * head_dim;
            for (std::size_t i = 0; i < len; ++i) {
              const double* p = probs->data() + ((b * num_heads + h) * len + i) * len;
              const double* go = g.data().data() + at(b, i, len) + off;
              double dot = 0.0;
              for (std::size_t j = 0; j < len; ++j) {
                double acc = 0.0;
                for (std::size_t d = 0; d < head_dim; ++d) acc += go[d] * vv[at(b, j, len) + off + d];
                dp[j] = acc;
                dot += acc * p[j];
                if (gv && p[j] != 0.0)
                  for (std::size_t d = 0; d < head_dim; ++d) (*gv)[at(b, j, len) + off + d] += p[j] * go[d];
              }
              for (std::size_t j = 0; j < len; ++j) ds[j] = p[j] * (dp[j] - dot) * inv_sqrt;
              for (std::size_t j = 0; j < len; ++j) {
                if (ds[j] == 0.0) continue;
                for (std::size_t d = 0; d < head_dim; ++d) {
                  if (gq) (*gq)[at(b, i, len) + off + d] += ds[j] * kv[at(b, j, len) + off + d];
                  if (gk) (*gk)[at(b, j, len) + off + d] += ds[j] * qv[at(b, i, len) + off + d];
                }
              }
            }
          }
      });
}

Var binary_cross_entropy(Var probs, const std::vector<double>& targets) {
  const Tensor& pv = probs.value();
  require(pv.size() == targets.size(), "binary_cross_entropy: " + std::to_string(pv.size()) +
                                           " probabilities but " + std::to_string(targets.size()) +
                                           " targets");
  Tensor out({pv.size()});
  for (std::size_t i = 0; i < pv.size(); ++i) {
    double p = std::clamp(pv[i], kProbFloor, 1.0 - 1e-16);
    out[i] = -(targets[i] * std::log(p) + (1.0 - targets[i]) * std::log1p(-p));
  }
  return probs.tape().record(std::move(out), {probs}, [probs, targets](Tape& tape, const Tensor& g) {
    Tensor* gp = tape.grad_sink(probs);
    if (!gp) return;
    const Tensor& pv = probs.value();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      double p = std::clamp(pv[i], kProbFloor, 1.0 - 1e-16);
      (*gp)[i] += g[i] * (-targets[i] / p + (1.0 - targets[i]) / (1.0 - p));
    }
  });
}

Var categorical_cross_entropy(Var probs, const std::vector<int>& labels) {
  const Tensor& pv = probs.value();
  const std::size_t rows = pv.outer(), cols = pv.inner();
  require(rows == labels.size(), "categorical_cross_entropy: " + std::to_string(rows) +
                                     " rows but " + std::to_string(labels.size()) + " labels");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < cols,
            "categorical_cross_entropy: label " + std::to_string(y) + " outside " +
                std::to_string(cols) + " classes");
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r)
    out[r] = -std::log(std::max(pv[r * cols + static_cast<std::size_t>(labels[r])], kProbFloor));
  return probs.tape().record(std::move(out), {probs}, [probs, labels, cols](Tape& tape, const Tensor& g) {
    Tensor* gp = tape.grad_sink(probs);
    if (!gp) return;
    const Tensor& pv = probs.value();
    for (std::size_t r = 0; r < labels.size(); ++r) {
      std::size_t idx = r * cols + static_cast<std::size_t>(labels[r]);
      (*gp)[idx] -= g[r] / std::max(pv[idx], kProbFloor);
    }
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape().record(Tensor::scalar(total), {x}, [x](Tape& tape, const Tensor& g) {
    if (Tensor* gx = tape.grad_sink(x))
      for (auto& v : gx->data()) v += g[0];
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

}  // namespace gmint::ad
