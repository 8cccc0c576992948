#pragma once

#include "gid/autodiff.hpp"

#include <cmath>
#include <vector>

namespace gid::nn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept per parameter in the
/// registration order of the parameter list.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamOptions opts = {})
      : params_(std::move(params)), opts_(opts) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  /// Applies one update from the accumulated `grad` buffers. Throws
  /// TrainingError naming the first parameter with a non-finite gradient,
  /// before touching any parameter.
  void step(double lr) {
    for (auto* p : params_) {
      for (T g : p->grad.values()) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw TrainingError("non-finite gradient in parameter " + p->name);
        }
      }
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      if (p.grad.size() != p.value.size()) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = static_cast<double>(p.grad[k]);
        m[k] = opts_.beta1 * m[k] + (1.0 - opts_.beta1) * g;
        v[k] = opts_.beta2 * v[k] + (1.0 - opts_.beta2) * g * g;
        const double mhat = m[k] / c1;
        const double vhat = v[k] / c2;
        p.value[k] = static_cast<T>(static_cast<double>(p.value[k]) - lr * mhat / (std::sqrt(vhat) + opts_.eps));
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  std::size_t steps() const { return steps_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamOptions opts_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t steps_ = 0;
};

/// Global L2 norm of all gradients.
template <typename T>
double grad_norm(const std::vector<Parameter<T>*>& params) {
  double acc = 0.0;
  for (auto* p : params) {
    for (T g : p->grad.values()) acc += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(acc);
}

/// Rescales gradients so their global norm is at most `max_norm`; returns the
/// norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (std::isfinite(norm) && norm > max_norm) {
    const T k = static_cast<T>(max_norm / norm);
    for (auto* p : params) {
      for (T& g : p->grad.values()) g *= k;
    }
  }
  return norm;
}

/// Cosine decay from `base` to zero over `total` steps.
inline double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total == 0) return base;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return 0.5 * base * (1.0 + std::cos(3.14159265358979323846 * t));
}

}  // namespace gid::nn
