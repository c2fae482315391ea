#include <algorithm>
#include <cmath>
#include <numeric>

#include "sou/error.hpp"
#include "sou/nn.hpp"

namespace sou::nn {
namespace {

void fill_uniform(std::vector<double>& v, double bound, std::mt19937_64& rng) {
  for (double& x : v) x = (2.0 * uniform01(rng) - 1.0) * bound;
}

Conv3x3 conv(std::size_t in, std::size_t out) {
  Conv3x3 c;
  c.in_ch = in;
  c.out_ch = out;
  c.weight.assign(out * in * 9, 0.0);
  c.bias.assign(out, 0.0);
  return c;
}

BatchNorm batchnorm(std::size_t ch) {
  BatchNorm b;
  b.channels = ch;
  b.gamma.assign(ch, 1.0);
  b.beta.assign(ch, 0.0);
  b.running_mean.assign(ch, 0.0);
  b.running_var.assign(ch, 1.0);
  return b;
}

Dense dense(std::size_t in, std::size_t out) {
  Dense d;
  d.in_dim = in;
  d.out_dim = out;
  d.weight.assign(in * out, 0.0);
  d.bias.assign(out, 0.0);
  return d;
}

void conv_block(ModelGraph& m, std::size_t in, std::size_t out, double p) {
  m.layers.emplace_back(conv(in, out));
  m.layers.emplace_back(batchnorm(out));
  m.layers.emplace_back(ReLU{});
  m.layers.emplace_back(MaxPool2x2{});
  m.layers.emplace_back(Dropout{p});
}

}  // namespace

void initialize(ModelGraph& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& layer : model.layers) {
    if (auto* c = std::get_if<Conv3x3>(&layer)) {
      fill_uniform(c->weight, std::sqrt(6.0 / static_cast<double>(c->in_ch * 9)), rng);
      std::fill(c->bias.begin(), c->bias.end(), 0.0);
    } else if (auto* d = std::get_if<Dense>(&layer)) {
      fill_uniform(d->weight, std::sqrt(6.0 / static_cast<double>(d->in_dim)), rng);
      std::fill(d->bias.begin(), d->bias.end(), 0.0);
    } else if (auto* b = std::get_if<BatchNorm>(&layer)) {
      std::fill(b->gamma.begin(), b->gamma.end(), 1.0);
      std::fill(b->beta.begin(), b->beta.end(), 0.0);
      std::fill(b->running_mean.begin(), b->running_mean.end(), 0.0);
      std::fill(b->running_var.begin(), b->running_var.end(), 1.0);
    }
  }
}

ModelGraph make_gender_model(const GenderArch& a, std::uint64_t seed) {
  ModelGraph m;
  m.input_shape = {a.in_channels, a.height, a.width};
  conv_block(m, a.in_channels, a.c1, a.dropout);
  conv_block(m, a.c1, a.c2, a.dropout);
  m.layers.emplace_back(GlobalAvgPool{});
  m.layers.emplace_back(dense(a.c2, a.hidden));
  m.layers.emplace_back(ReLU{});
  m.layers.emplace_back(dense(a.hidden, a.classes));
  layer_shapes(m);
  initialize(m, seed);
  return m;
}

ModelGraph make_diagnosis_model(const DiagnosisArch& a, std::uint64_t seed) {
  ModelGraph m;
  m.input_shape = {a.in_channels, a.height, a.width};
  conv_block(m, a.in_channels, a.c1, a.dropout);
  conv_block(m, a.c1, a.c2, a.dropout);
  conv_block(m, a.c2, a.c3, a.dropout);
  m.layers.emplace_back(Flatten{});
  const std::size_t flat = a.c3 * (a.height / 8) * (a.width / 8);
  m.layers.emplace_back(dense(flat, a.hidden));
  m.layers.emplace_back(ReLU{});
  m.layers.emplace_back(dense(a.hidden, a.classes));
  layer_shapes(m);
  initialize(m, seed);
  return m;
}

AdamState AdamState::for_model(const ModelGraph& model, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& p : parameters(model)) {
    s.m.emplace_back(p.size(), 0.0);
    s.v.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<const std::span<double>> params,
               const std::vector<std::vector<double>>& grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam: parameter, gradient and moment block counts differ");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (grads[b].size() != params[b].size() || state.m[b].size() != params[b].size() ||
        state.v[b].size() != params[b].size()) {
      throw ShapeError("adam: block " + std::to_string(b) + " size mismatch");
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.m[b];
    auto& v = state.v[b];
    const auto& g = grads[b];
    auto p = params[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void adam_step(ModelGraph& model, const std::vector<std::vector<double>>& grads, AdamState& state) {
  const auto params = parameters(model);
  adam_step(std::span<const std::span<double>>(params), grads, state);
}

Tensor Dataset::batch(std::span<const std::size_t> rows) const {
  const std::size_t per = inputs.size() / inputs.dim(0);
  std::vector<std::size_t> shape = inputs.shape;
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

TrainHistory train(ModelGraph& model, const Dataset& data, const TrainConfig& cfg) {
  TrainHistory history;
  if (data.size() == 0) throw ConfigError("train: empty dataset");
  if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (data.inputs.rank() == 0 || data.inputs.dim(0) != data.size()) {
    throw ShapeError("train: inputs and labels disagree on sample count");
  }
  const std::size_t n_classes = layer_shapes(model).back().front();
  for (int y : data.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
      throw ConfigError("train: label " + std::to_string(y) + " out of range");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  AdamState adam = AdamState::for_model(model, cfg.lr);
  std::vector<std::size_t> order(data.size());
  std::vector<int> labels;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    model.mode = Mode::train;
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
      for (std::size_t i = order.size(); i-- > 1;) {
        std::swap(order[i], order[rng() % (i + 1)]);
      }
    }
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> rows(order.data() + start, bs);
      labels.resize(bs);
      for (std::size_t i = 0; i < bs; ++i) labels[i] = data.labels[rows[i]];

      const auto fwd = forward(model, data.batch(rows), Mode::train, &rng);
      total += cross_entropy(fwd.logits, labels) * static_cast<double>(bs);
      const auto grads = backward(model, fwd, labels);
      adam_step(model, grads.params, adam);
      update_running_stats(model, fwd);
      if (epoch == 0) history.batch_sizes.push_back(bs);
    }
    history.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  model.mode = Mode::eval;
  return history;
}

}  // namespace sou::nn
