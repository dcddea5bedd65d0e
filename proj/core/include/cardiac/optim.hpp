#pragma once

// Variance-rectified Adam. When the rectification term rho_t is <= 4 the step
// falls back to bias-corrected momentum without second-moment scaling.

#include <cmath>
#include <string>
#include <vector>

#include "cardiac/params.hpp"

namespace cardiac {

inline double cosine_lr_mult(int epoch, int total_epochs) {
  return 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / total_epochs));
}

template <class T>
class RAdam {
 public:
  explicit RAdam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                 bool rectified = true)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), rectified_(rectified) {}

  long step_count() const { return t_; }

  void step(ParamMap<T>& params, double lr_mult = 1.0) {
    if (slots_.size() != params.items.size()) {
      slots_.clear();
      for (auto& [_, p] : params.items) slots_.push_back(Slot{std::vector<double>(p.size(), 0.0),
                                                              std::vector<double>(p.size(), 0.0)});
    }
    ++t_;
    const double t = static_cast<double>(t_);
    const double b1t = std::pow(beta1_, t);
    const double b2t = std::pow(beta2_, t);
    const double rho_inf = 2.0 / (1.0 - beta2_) - 1.0;
    const double rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t);
    const bool adapt = !rectified_ || rho_t > 4.0;
    double rect = 1.0;
    if (rectified_ && adapt)
      rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                       ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
    const double lr = lr_ * lr_mult;

    for (size_t pi = 0; pi < params.items.size(); ++pi) {
      auto& [name, p] = params.items[pi];
      auto& slot = slots_[pi];
      const auto& g = p.grad();
      for (size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        if (!std::isfinite(gi))
          throw NumericalError("non-finite gradient in parameter " + name);
        slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * gi;
        slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * gi * gi;
        const double m_hat = slot.m[i] / (1.0 - b1t);
        double update;
        if (rectified_ && !adapt) {
          update = lr * m_hat;
        } else {
          const double v_hat = std::sqrt(slot.v[i] / (1.0 - b2t));
          update = lr * rect * m_hat / (v_hat + eps_);
        }
        p.data()[i] = static_cast<T>(static_cast<double>(p.data()[i]) - update);
      }
    }
  }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  bool rectified_;
  long t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace cardiac
