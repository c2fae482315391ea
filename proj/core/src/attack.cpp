#include "sou/attack.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sou/error.hpp"

namespace sou {
namespace {

double sgn(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

// x + step * sgn(grad); elements with a zero sign or zero step keep their bits.
void sign_step(std::vector<double>& x, const std::vector<double>& grad, double step) {
  if (step == 0.0) return;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = sgn(grad[i]);
    if (s != 0.0) x[i] += step * s;
  }
}

double linf(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void check_input(const nn::ModelGraph& model, const FeatureTensor& x) {
  const auto& s = model.input_shape;
  if (s.size() != 3 || s[0] != 1 || s[1] != x.n_mels() || s[2] != x.n_frames()) {
    throw ShapeError("attack: feature tensor " + std::to_string(x.n_mels()) + "x" +
                     std::to_string(x.n_frames()) + " does not match the model input");
  }
  if (model.mode != nn::Mode::eval) throw ConfigError("attack: model must be in eval mode");
}

}  // namespace

std::string to_string(AttackMethod m) { return m == AttackMethod::pgd ? "pgd" : "fgsm"; }

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("attack: epsilon must be >= 0");
  if (!(alpha >= 0.0)) throw ConfigError("attack: alpha must be >= 0");
  if (iterations < 1) throw ConfigError("attack: iterations must be >= 1");
}

std::vector<double> project_linf(const std::vector<double>& x_adv, const std::vector<double>& x_orig,
                                 double eps) {
  if (x_adv.size() != x_orig.size()) throw ShapeError("project_linf: shape mismatch");
  if (eps == 0.0) return x_orig;
  std::vector<double> out = x_adv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = x_adv[i] - x_orig[i];
    if (d > eps) {
      out[i] = x_orig[i] + eps;
    } else if (d < -eps) {
      out[i] = x_orig[i] - eps;
    }
  }
  return out;
}

FeatureTensor project_linf(const FeatureTensor& x_adv, const FeatureTensor& x_orig, double eps) {
  if (x_adv.n_mels() != x_orig.n_mels() || x_adv.n_frames() != x_orig.n_frames()) {
    throw ShapeError("project_linf: shape mismatch");
  }
  FeatureTensor out = x_adv;
  out.values.values = project_linf(x_adv.values.values, x_orig.values.values, eps);
  return out;
}

LossGrad input_gradient(const nn::ModelGraph& model, const std::vector<double>& x, int label) {
  std::vector<std::size_t> shape{1};
  shape.insert(shape.end(), model.input_shape.begin(), model.input_shape.end());
  nn::Tensor t(shape);
  if (t.size() != x.size()) throw ShapeError("input_gradient: input size mismatch");
  t.data = x;
  const int labels[1] = {label};
  const auto fwd = nn::forward(model, t, nn::Mode::eval);
  LossGrad r;
  r.loss = nn::cross_entropy(fwd.logits, labels);
  r.grad = nn::backward(model, fwd, labels).input.data;
  return r;
}

PerturbationResult fgsm(const nn::ModelGraph& model, const FeatureTensor& x, int label, double eps) {
  check_input(model, x);
  if (!(eps >= 0.0)) throw ConfigError("fgsm: epsilon must be >= 0");
  const auto lg = input_gradient(model, x.values.values, label);
  PerturbationResult r;
  r.x_adv = x;
  sign_step(r.x_adv.values.values, lg.grad, eps);
  r.linf_delta = linf(r.x_adv.values.values, x.values.values);
  r.loss_trace = {lg.loss};
  return r;
}

PerturbationResult pgd(const nn::ModelGraph& model, const FeatureTensor& x, int label,
                       const AttackConfig& cfg) {
  check_input(model, x);
  cfg.validate();
  const auto& x0 = x.values.values;
  std::vector<double> cur = x0;
  if (cfg.random_start && cfg.epsilon > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    for (double& v : cur) v += (2.0 * nn::uniform01(rng) - 1.0) * cfg.epsilon;
    cur = project_linf(cur, x0, cfg.epsilon);
  }
  PerturbationResult r;
  r.loss_trace.reserve(cfg.iterations);
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const auto lg = input_gradient(model, cur, label);
    r.loss_trace.push_back(lg.loss);
    sign_step(cur, lg.grad, cfg.alpha);
    cur = project_linf(cur, x0, cfg.epsilon);
  }
  r.x_adv = x;
  r.x_adv.values.values = std::move(cur);
  r.linf_delta = linf(r.x_adv.values.values, x0);
  return r;
}

std::vector<PerturbationResult> protect_dataset(const nn::ModelGraph& model,
                                                const std::vector<LabeledFeature>& items,
                                                const AttackConfig& cfg) {
  cfg.validate();
  std::vector<PerturbationResult> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    try {
      if (cfg.method == AttackMethod::fgsm) {
        out.push_back(fgsm(model, items[i].features, items[i].label, cfg.epsilon));
      } else {
        AttackConfig item_cfg = cfg;
        item_cfg.seed = cfg.seed ^ (0x9E3779B97F4A7C15ull * (i + 1));
        out.push_back(pgd(model, items[i].features, items[i].label, item_cfg));
      }
    } catch (const Error& e) {
      throw Error("protect_dataset: item " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sou
