#pragma once

// Protective perturbation of classifier inputs: untargeted FGSM and
// L-infinity projected gradient ascent on the cross-entropy of the true label.

#include <cstdint>
#include <string>
#include <vector>

#include "sou/features.hpp"
#include "sou/nn.hpp"

namespace sou {

enum class AttackMethod { pgd, fgsm };

std::string to_string(AttackMethod m);

struct AttackConfig {
  double epsilon = 0.1;
  double alpha = 0.0005;
  std::size_t iterations = 20;
  AttackMethod method = AttackMethod::pgd;
  bool random_start = false;
  std::uint64_t seed = 0;  // random start only

  void validate() const;
};

struct PerturbationResult {
  FeatureTensor x_adv;
  double linf_delta = 0.0;
  std::vector<double> loss_trace;
};

/// Elementwise clamp of x_adv - x_orig to [-eps, eps]. Elements already inside
/// the ball are returned bitwise unchanged.
std::vector<double> project_linf(const std::vector<double>& x_adv, const std::vector<double>& x_orig,
                                 double eps);
FeatureTensor project_linf(const FeatureTensor& x_adv, const FeatureTensor& x_orig, double eps);

/// Loss and input gradient of the mean cross-entropy for a single example.
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};
LossGrad input_gradient(const nn::ModelGraph& model, const std::vector<double>& x, int label);

PerturbationResult fgsm(const nn::ModelGraph& model, const FeatureTensor& x, int label, double eps);

PerturbationResult pgd(const nn::ModelGraph& model, const FeatureTensor& x, int label,
                       const AttackConfig& cfg);

struct LabeledFeature {
  FeatureTensor features;
  int label = 0;
};

/// Perturbs every item independently, preserving order. With random_start the
/// per-item noise seed is derived from cfg.seed and the item index.
std::vector<PerturbationResult> protect_dataset(const nn::ModelGraph& model,
                                                const std::vector<LabeledFeature>& items,
                                                const AttackConfig& cfg);

}  // namespace sou
