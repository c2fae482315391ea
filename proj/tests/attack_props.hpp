#pragma once

// Randomized invariant sweep over PGD / FGSM.

#include <cmath>
#include <cstring>
#include <random>
#include <string>

#include "gradcheck.hpp"
#include "sou/attack.hpp"

namespace sou::test {

struct AttackSweep {
  std::size_t instances = 0;
  std::size_t bound_violations = 0;
  std::size_t eps0_mismatches = 0;
  std::size_t fgsm_mismatches = 0;
  double worst_excess = 0.0;  // max of linf - min(eps, alpha*T)
};

inline bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

inline AttackSweep sweep_attacks(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * nn::uniform01(rng); };
  AttackSweep s;
  for (std::size_t i = 0; i < n; ++i) {
    nn::GenderArch arch;
    arch.height = 4 + rng() % 5;
    arch.width = 4 + rng() % 5;
    arch.c1 = 2;
    arch.c2 = 3;
    arch.hidden = 4;
    const auto model = nn::make_gender_model(arch, rng());

    FeatureTensor x;
    x.values = Matrix(arch.height, arch.width);
    std::normal_distribution<double> g(0.0, 1.0 + 10.0 * nn::uniform01(rng));
    for (auto& v : x.values.values) v = g(rng);
    const int label = static_cast<int>(rng() % 2);

    AttackConfig cfg;
    cfg.epsilon = uni(0.0, 0.5);
    cfg.alpha = uni(0.0, 0.1);
    cfg.iterations = 1 + rng() % 10;

    const auto r = pgd(model, x, label, cfg);
    const double bound = std::min(cfg.epsilon, cfg.alpha * static_cast<double>(cfg.iterations));
    double linf = 0.0;
    for (std::size_t k = 0; k < x.values.values.size(); ++k) {
      linf = std::max(linf, std::abs(r.x_adv.values.values[k] - x.values.values[k]));
    }
    s.worst_excess = std::max(s.worst_excess, linf - bound);
    if (linf > bound + 1e-12) ++s.bound_violations;

    AttackConfig zero = cfg;
    zero.epsilon = 0.0;
    if (!bitwise_equal(pgd(model, x, label, zero).x_adv.values.values, x.values.values) ||
        !bitwise_equal(fgsm(model, x, label, 0.0).x_adv.values.values, x.values.values)) {
      ++s.eps0_mismatches;
    }

    AttackConfig one = cfg;
    one.iterations = 1;
    one.alpha = cfg.epsilon;
    if (!bitwise_equal(pgd(model, x, label, one).x_adv.values.values,
                       fgsm(model, x, label, cfg.epsilon).x_adv.values.values)) {
      ++s.fgsm_mismatches;
    }
    ++s.instances;
  }
  return s;
}

}  // namespace sou::test
