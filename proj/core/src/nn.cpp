#include "sou/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "sou/error.hpp"

namespace sou::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Spatial view of a batch tensor: rank 2 (N, C) is treated as (N, C, 1, 1).
struct Nchw {
  std::size_t n, c, h, w;
};

Nchw nchw(const Tensor& t) {
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1), 1, 1};
  throw ShapeError("expected a rank-2 or rank-4 tensor, got " + shape_str(t.shape));
}

void im2col(const double* x, std::size_t c, std::size_t h, std::size_t w, RowMat& col) {
  col.resize(static_cast<Eigen::Index>(c * 9), static_cast<Eigen::Index>(h * w));
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double* plane = x + ci * h * w;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* row = col.data() + ((ci * 3 + ky) * 3 + kx) * h * w;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          double* dst = row + y * w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t x0 = 0; x0 < w; ++x0) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x0 + kx) - 1;
            dst[x0] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? 0.0
                                                                       : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im(const RowMat& col, std::size_t c, std::size_t h, std::size_t w, double* dx) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    double* plane = dx + ci * h * w;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* row = col.data() + ((ci * 3 + ky) * 3 + kx) * h * w;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * w;
          const double* src = row + y * w;
          for (std::size_t x0 = 0; x0 < w; ++x0) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x0 + kx) - 1;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[x0];
          }
        }
      }
    }
  }
}

// ---- forward ---------------------------------------------------------------

Tensor conv_forward(const Conv3x3& L, const Tensor& x) {
  const auto [n, c, h, w] = nchw(x);
  Tensor y({n, L.out_ch, h, w});
  ConstMapMat wm(L.weight.data(), static_cast<Eigen::Index>(L.out_ch),
                 static_cast<Eigen::Index>(L.in_ch * 9));
  ConstMapVec b(L.bias.data(), static_cast<Eigen::Index>(L.out_ch));
  RowMat col;
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data.data() + i * c * h * w, c, h, w, col);
    MapMat out(y.data.data() + i * L.out_ch * h * w, static_cast<Eigen::Index>(L.out_ch),
               static_cast<Eigen::Index>(h * w));
    out.noalias() = wm * col;
    out.colwise() += b;
  }
  return y;
}

Tensor batchnorm_forward(const BatchNorm& L, const Tensor& x, Mode mode, LayerCache& cache) {
  const auto [n, c, h, w] = nchw(x);
  const std::size_t hw = h * w;
  const double m = static_cast<double>(n * hw);
  Tensor y(x.shape);
  cache.aux.assign(x.size(), 0.0);
  cache.mean.assign(c, 0.0);
  cache.var.assign(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::train) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.data.data() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) mean += p[k];
      }
      mean /= m;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.data.data() + (i * c + ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) var += (p[k] - mean) * (p[k] - mean);
      }
      var /= m;
    } else {
      mean = L.running_mean[ch];
      var = L.running_var[ch];
    }
    cache.mean[ch] = mean;
    cache.var[ch] = var;
    const double inv = 1.0 / std::sqrt(var + L.eps);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        const double xh = (x.data[off + k] - mean) * inv;
        cache.aux[off + k] = xh;
        y.data[off + k] = L.gamma[ch] * xh + L.beta[ch];
      }
    }
  }
  return y;
}

Tensor maxpool_forward(const Tensor& x, LayerCache& cache) {
  const auto [n, c, h, w] = nchw(x);
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor y({n, c, oh, ow});
  cache.index.assign(y.size(), 0);
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* in = x.data.data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t k = (2 * oy + dy) * w + 2 * ox + dx;
            if (in[k] > in[best]) best = k;
          }
        }
        const std::size_t o = p * oh * ow + oy * ow + ox;
        y.data[o] = in[best];
        cache.index[o] = p * h * w + best;
      }
    }
  }
  return y;
}

Tensor dense_forward(const Dense& L, const Tensor& x) {
  const std::size_t n = x.dim(0);
  Tensor y({n, L.out_dim});
  ConstMapMat xm(x.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(L.in_dim));
  ConstMapMat wm(L.weight.data(), static_cast<Eigen::Index>(L.out_dim),
                 static_cast<Eigen::Index>(L.in_dim));
  MapMat ym(y.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(L.out_dim));
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += ConstMapVec(L.bias.data(), static_cast<Eigen::Index>(L.out_dim)).transpose();
  return y;
}

// ---- backward --------------------------------------------------------------

Tensor conv_backward(const Conv3x3& L, const LayerCache& cache, const Tensor& dy,
                     std::vector<double>& dw, std::vector<double>& db) {
  const Tensor& x = cache.input;
  const auto [n, c, h, w] = nchw(x);
  Tensor dx(x.shape);
  dw.assign(L.weight.size(), 0.0);
  db.assign(L.bias.size(), 0.0);
  ConstMapMat wm(L.weight.data(), static_cast<Eigen::Index>(L.out_ch),
                 static_cast<Eigen::Index>(L.in_ch * 9));
  MapMat dwm(dw.data(), static_cast<Eigen::Index>(L.out_ch), static_cast<Eigen::Index>(L.in_ch * 9));
  Eigen::Map<Eigen::VectorXd> dbv(db.data(), static_cast<Eigen::Index>(L.out_ch));
  RowMat col, dcol;
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data.data() + i * c * h * w, c, h, w, col);
    ConstMapMat g(dy.data.data() + i * L.out_ch * h * w, static_cast<Eigen::Index>(L.out_ch),
                  static_cast<Eigen::Index>(h * w));
    dwm.noalias() += g * col.transpose();
    dbv += g.rowwise().sum();
    dcol.noalias() = wm.transpose() * g;
    col2im(dcol, c, h, w, dx.data.data() + i * c * h * w);
  }
  return dx;
}

Tensor batchnorm_backward(const BatchNorm& L, const LayerCache& cache, const Tensor& dy, Mode mode,
                          std::vector<double>& dgamma, std::vector<double>& dbeta) {
  const auto [n, c, h, w] = nchw(dy);
  const std::size_t hw = h * w;
  const double m = static_cast<double>(n * hw);
  Tensor dx(dy.shape);
  dgamma.assign(c, 0.0);
  dbeta.assign(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        sum_dy += dy.data[off + k];
        sum_dy_xh += dy.data[off + k] * cache.aux[off + k];
      }
    }
    dgamma[ch] = sum_dy_xh;
    dbeta[ch] = sum_dy;
    const double inv = 1.0 / std::sqrt(cache.var[ch] + L.eps);
    const double g = L.gamma[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        if (mode == Mode::train) {
          dx.data[off + k] =
              g * inv / m * (m * dy.data[off + k] - sum_dy - cache.aux[off + k] * sum_dy_xh);
        } else {
          dx.data[off + k] = g * inv * dy.data[off + k];
        }
      }
    }
  }
  return dx;
}

Tensor dense_backward(const Dense& L, const LayerCache& cache, const Tensor& dy,
                      std::vector<double>& dw, std::vector<double>& db) {
  const std::size_t n = dy.dim(0);
  const Tensor& x = cache.input;
  dw.assign(L.weight.size(), 0.0);
  db.assign(L.bias.size(), 0.0);
  ConstMapMat xm(x.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(L.in_dim));
  ConstMapMat gm(dy.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(L.out_dim));
  ConstMapMat wm(L.weight.data(), static_cast<Eigen::Index>(L.out_dim),
                 static_cast<Eigen::Index>(L.in_dim));
  MapMat(dw.data(), static_cast<Eigen::Index>(L.out_dim), static_cast<Eigen::Index>(L.in_dim))
      .noalias() = gm.transpose() * xm;
  Eigen::Map<Eigen::RowVectorXd>(db.data(), static_cast<Eigen::Index>(L.out_dim)) = gm.colwise().sum();
  Tensor dx(x.shape);
  MapMat(dx.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(L.in_dim))
      .noalias() = gm * wm;
  return dx;
}

void check_labels(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("logits must be (batch, classes)");
  if (labels.size() != logits.dim(0)) {
    throw ShapeError("label count " + std::to_string(labels.size()) + " does not match batch " +
                     std::to_string(logits.dim(0)));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.dim(1)) {
      throw ConfigError("label " + std::to_string(y) + " out of range [0, " +
                        std::to_string(logits.dim(1)) + ")");
    }
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  data.assign(n, fill);
}

std::size_t ModelGraph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters(*this)) n += p.size();
  return n;
}

std::vector<std::vector<std::size_t>> layer_shapes(const ModelGraph& model) {
  std::vector<std::vector<std::size_t>> shapes;
  std::vector<std::size_t> s = model.input_shape;
  if (s.empty()) throw ShapeError("model has no input shape");
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const std::string where = "layer " + std::to_string(i) + ": ";
    std::visit(
        overloaded{
            [&](const Conv3x3& L) {
              if (s.size() != 3 || s[0] != L.in_ch) {
                throw ShapeError(where + "conv expects (" + std::to_string(L.in_ch) +
                                 ", H, W), got " + shape_str(s));
              }
              if (L.weight.size() != L.out_ch * L.in_ch * 9 || L.bias.size() != L.out_ch) {
                throw ShapeError(where + "conv parameter sizes inconsistent");
              }
              s[0] = L.out_ch;
            },
            [&](const BatchNorm& L) {
              if (s.empty() || s[0] != L.channels) {
                throw ShapeError(where + "batch norm expects " + std::to_string(L.channels) +
                                 " channels, got " + shape_str(s));
              }
              for (const auto* v : {&L.gamma, &L.beta, &L.running_mean, &L.running_var}) {
                if (v->size() != L.channels) throw ShapeError(where + "batch norm sizes inconsistent");
              }
            },
            [&](const ReLU&) {},
            [&](const Dropout& L) {
              if (!(L.p >= 0.0 && L.p < 1.0)) throw ShapeError(where + "dropout p must be in [0, 1)");
            },
            [&](const MaxPool2x2&) {
              if (s.size() != 3 || s[1] < 2 || s[2] < 2) {
                throw ShapeError(where + "max pool needs (C, H>=2, W>=2), got " + shape_str(s));
              }
              s[1] /= 2;
              s[2] /= 2;
            },
            [&](const GlobalAvgPool&) {
              if (s.size() != 3) throw ShapeError(where + "global pool needs (C, H, W)");
              s = {s[0]};
            },
            [&](const Flatten&) {
              std::size_t n = 1;
              for (auto d : s) n *= d;
              s = {n};
            },
            [&](const Dense& L) {
              if (s.size() != 1 || s[0] != L.in_dim) {
                throw ShapeError(where + "dense expects (" + std::to_string(L.in_dim) + "), got " +
                                 shape_str(s));
              }
              if (L.weight.size() != L.in_dim * L.out_dim || L.bias.size() != L.out_dim) {
                throw ShapeError(where + "dense parameter sizes inconsistent");
              }
              s = {L.out_dim};
            },
        },
        model.layers[i]);
    shapes.push_back(s);
  }
  return shapes;
}

std::vector<std::span<double>> parameters(ModelGraph& model) {
  std::vector<std::span<double>> out;
  for (auto& layer : model.layers) {
    if (auto* c = std::get_if<Conv3x3>(&layer)) {
      out.emplace_back(c->weight);
      out.emplace_back(c->bias);
    } else if (auto* b = std::get_if<BatchNorm>(&layer)) {
      out.emplace_back(b->gamma);
      out.emplace_back(b->beta);
    } else if (auto* d = std::get_if<Dense>(&layer)) {
      out.emplace_back(d->weight);
      out.emplace_back(d->bias);
    }
  }
  return out;
}

std::vector<std::span<const double>> parameters(const ModelGraph& model) {
  std::vector<std::span<const double>> out;
  for (const auto& p : parameters(const_cast<ModelGraph&>(model))) out.emplace_back(p);
  return out;
}

ForwardResult forward(const ModelGraph& model, const Tensor& x, Mode mode, std::mt19937_64* rng) {
  if (x.rank() != model.input_shape.size() + 1 ||
      !std::equal(model.input_shape.begin(), model.input_shape.end(), x.shape.begin() + 1)) {
    throw ShapeError("input " + shape_str(x.shape) + " does not match model input (batch, " +
                     shape_str(model.input_shape).substr(1));
  }
  if (x.dim(0) == 0) throw ShapeError("empty batch");
  ForwardResult r;
  r.mode = mode;
  r.cache.resize(model.layers.size());
  Tensor cur = x;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    LayerCache& cache = r.cache[i];
    cache.input = cur;
    cur = std::visit(
        overloaded{
            [&](const Conv3x3& L) { return conv_forward(L, cur); },
            [&](const BatchNorm& L) { return batchnorm_forward(L, cur, mode, cache); },
            [&](const ReLU&) {
              Tensor y = cur;
              for (double& v : y.data) v = v > 0.0 ? v : 0.0;
              return y;
            },
            [&](const MaxPool2x2&) { return maxpool_forward(cur, cache); },
            [&](const Dropout& L) {
              if (mode == Mode::eval || L.p == 0.0) return cur;
              if (rng == nullptr) throw ConfigError("train-mode dropout needs a random generator");
              Tensor y = cur;
              cache.aux.resize(y.size());
              const double keep = 1.0 / (1.0 - L.p);
              for (std::size_t k = 0; k < y.size(); ++k) {
                cache.aux[k] = uniform01(*rng) >= L.p ? keep : 0.0;
                y.data[k] *= cache.aux[k];
              }
              return y;
            },
            [&](const GlobalAvgPool&) {
              const auto [n, c, h, w] = nchw(cur);
              Tensor y({n, c});
              for (std::size_t p = 0; p < n * c; ++p) {
                double s = 0.0;
                for (std::size_t k = 0; k < h * w; ++k) s += cur.data[p * h * w + k];
                y.data[p] = s / static_cast<double>(h * w);
              }
              return y;
            },
            [&](const Flatten&) {
              Tensor y = cur;
              y.shape = {cur.dim(0), cur.size() / cur.dim(0)};
              return y;
            },
            [&](const Dense& L) { return dense_forward(L, cur); },
        },
        model.layers[i]);
  }
  r.logits = std::move(cur);
  return r;
}

Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = p.data.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (std::size_t j = 0; j < k; ++j) row[j] /= s;
  }
  return p;
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    total += mx + std::log(s) - row[labels[i]];
  }
  return total / static_cast<double>(n);
}

Tensor cross_entropy_grad(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  Tensor g = softmax(logits);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    g.data[i * k + static_cast<std::size_t>(labels[i])] -= 1.0;
    for (std::size_t j = 0; j < k; ++j) g.data[i * k + j] /= static_cast<double>(n);
  }
  return g;
}

Gradients backward(const ModelGraph& model, const ForwardResult& fwd, std::span<const int> labels) {
  return backward_from_logits(model, fwd, cross_entropy_grad(fwd.logits, labels));
}

Gradients backward_from_logits(const ModelGraph& model, const ForwardResult& fwd,
                               const Tensor& logit_grad) {
  if (fwd.cache.size() != model.layers.size()) {
    throw ConfigError("backward: cache has " + std::to_string(fwd.cache.size()) +
                      " layers, model has " + std::to_string(model.layers.size()));
  }
  const auto shapes = layer_shapes(model);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& in = fwd.cache[i].input.shape;
    const auto& expect = i == 0 ? model.input_shape : shapes[i - 1];
    if (in.size() != expect.size() + 1 || !std::equal(expect.begin(), expect.end(), in.begin() + 1)) {
      throw ConfigError("backward: stale cache for layer " + std::to_string(i));
    }
  }
  if (logit_grad.shape != fwd.logits.shape) throw ShapeError("backward: logit gradient shape mismatch");

  Gradients g;
  std::vector<std::vector<std::vector<double>>> per_layer(model.layers.size());
  Tensor dy = logit_grad;
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const LayerCache& cache = fwd.cache[li];
    auto& pg = per_layer[li];
    dy = std::visit(
        overloaded{
            [&](const Conv3x3& L) {
              pg.resize(2);
              return conv_backward(L, cache, dy, pg[0], pg[1]);
            },
            [&](const BatchNorm& L) {
              pg.resize(2);
              return batchnorm_backward(L, cache, dy, fwd.mode, pg[0], pg[1]);
            },
            [&](const ReLU&) {
              Tensor dx = dy;
              for (std::size_t k = 0; k < dx.size(); ++k) {
                if (!(cache.input.data[k] > 0.0)) dx.data[k] = 0.0;
              }
              return dx;
            },
            [&](const MaxPool2x2&) {
              Tensor dx(cache.input.shape);
              for (std::size_t k = 0; k < dy.size(); ++k) dx.data[cache.index[k]] += dy.data[k];
              return dx;
            },
            [&](const Dropout& L) {
              if (fwd.mode == Mode::eval || L.p == 0.0) return dy;
              Tensor dx = dy;
              for (std::size_t k = 0; k < dx.size(); ++k) dx.data[k] *= cache.aux[k];
              return dx;
            },
            [&](const GlobalAvgPool&) {
              const auto [n, c, h, w] = nchw(cache.input);
              Tensor dx(cache.input.shape);
              const double scale = 1.0 / static_cast<double>(h * w);
              for (std::size_t p = 0; p < n * c; ++p) {
                for (std::size_t k = 0; k < h * w; ++k) dx.data[p * h * w + k] = dy.data[p] * scale;
              }
              return dx;
            },
            [&](const Flatten&) {
              Tensor dx = dy;
              dx.shape = cache.input.shape;
              return dx;
            },
            [&](const Dense& L) {
              pg.resize(2);
              return dense_backward(L, cache, dy, pg[0], pg[1]);
            },
        },
        model.layers[li]);
  }
  for (auto& pg : per_layer) {
    for (auto& v : pg) g.params.push_back(std::move(v));
  }
  g.input = std::move(dy);
  return g;
}

void update_running_stats(ModelGraph& model, const ForwardResult& fwd) {
  if (fwd.mode != Mode::train) return;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto* bn = std::get_if<BatchNorm>(&model.layers[i]);
    if (!bn) continue;
    const auto [n, c, h, w] = nchw(fwd.cache[i].input);
    const double m = static_cast<double>(n * h * w);
    const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      bn->running_mean[ch] = (1.0 - bn->momentum) * bn->running_mean[ch] + bn->momentum * fwd.cache[i].mean[ch];
      bn->running_var[ch] =
          (1.0 - bn->momentum) * bn->running_var[ch] + bn->momentum * fwd.cache[i].var[ch] * unbias;
    }
  }
}

Tensor predict_proba(const ModelGraph& model, const Tensor& x, std::size_t batch_size) {
  const std::size_t n = x.dim(0);
  const std::size_t per = x.size() / n;
  Tensor out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t bs = std::min(batch_size, n - start);
    std::vector<std::size_t> shape = x.shape;
    shape[0] = bs;
    Tensor xb(shape);
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(start * per), bs * per, xb.data.begin());
    const Tensor p = softmax(forward(model, xb, Mode::eval).logits);
    if (out.shape.empty()) out = Tensor({n, p.dim(1)});
    std::copy(p.data.begin(), p.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(start * p.dim(1)));
  }
  return out;
}

}  // namespace sou::nn
