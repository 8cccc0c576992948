#pragma once

// Central finite-difference oracle for the tape's analytic gradients.
//
// Each probe draws a random unit direction u over every checked input and
// parameter, then compares the analytic directional derivative <grad, u> of
// L = sum(w * f(x)) (w a fixed random weighting of the outputs) against
// (L(x + eps u) - L(x - eps u)) / (2 eps). Only forward evaluations feed the
// numeric side, so it is independent of every backward rule.

#include "gid/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace gid::nn {

struct GradCheckResult {
  std::string name;
  std::size_t probes = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  std::size_t probes = 20;
  double eps = 1e-5;
  double tolerance = 1e-6;
  std::uint64_t seed = 1;
};

/// `fn` builds the output on the given tape from the input leaves (one per
/// entry of `inputs`); parameters in `params` are read through tape.param.
using GradFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

inline GradCheckResult check_gradients(const std::string& name, const GradFn& fn,
                                       std::vector<Tensor<double>> inputs,
                                       const std::vector<Parameter<double>*>& params,
                                       const GradCheckOptions& opt = {}) {
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto evaluate = [&](bool with_grad, std::vector<Tensor<double>>* input_grads,
                      const std::vector<double>* weights,
                      std::vector<double>* weights_out) -> double {
    Tape<double> tape;
    tape.set_grad_enabled(with_grad);
    std::vector<Var<double>> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    Var<double> out = fn(tape, leaves);
    const Tensor<double>& ov = out.value();
    if (weights_out != nullptr) {
      weights_out->resize(ov.size());
      for (double& w : *weights_out) w = normal(rng);
      weights = weights_out;
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < ov.size(); ++i) loss += (*weights)[i] * ov[i];
    if (with_grad) {
      Var<double> w = tape.constant(Tensor<double>(ov.shape(), *weights));
      Var<double> total = tape.record(
          Tensor<double>::scalar(loss), {out},
          [out, w](const Tensor<double>& g, Tape<double>& t) {
            Tensor<double>& go = t.grad_of(out);
            const Tensor<double>& wv = t.value(w);
            for (std::size_t i = 0; i < go.size(); ++i) go[i] += g[0] * wv[i];
          });
      for (auto* p : params) p->zero_grad();
      tape.backward(total);
      for (const auto& leaf : leaves) input_grads->push_back(tape.grad(leaf));
    }
    return loss;
  };

  std::vector<double> weights;
  std::vector<Tensor<double>> input_grads;
  evaluate(true, &input_grads, nullptr, &weights);
  std::vector<Tensor<double>> param_grads;
  for (auto* p : params) param_grads.push_back(p->grad);

  const std::vector<Tensor<double>> base_inputs = inputs;
  std::vector<Tensor<double>> base_params;
  for (auto* p : params) base_params.push_back(p->value);

  GradCheckResult result;
  result.name = name;
  result.tolerance = opt.tolerance;
  for (std::size_t probe = 0; probe < opt.probes; ++probe) {
    std::vector<Tensor<double>> dir_in;
    std::vector<Tensor<double>> dir_par;
    double analytic = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor<double> u(inputs[i].shape());
      for (std::size_t k = 0; k < u.size(); ++k) {
        u[k] = normal(rng);
        analytic += u[k] * input_grads[i][k];
      }
      dir_in.push_back(std::move(u));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<double> u(params[i]->value.shape());
      for (std::size_t k = 0; k < u.size(); ++k) {
        u[k] = normal(rng);
        analytic += u[k] * (param_grads[i].size() == u.size() ? param_grads[i][k] : 0.0);
      }
      dir_par.push_back(std::move(u));
    }
    auto shift = [&](double step) {
      for (std::size_t i = 0; i < inputs.size(); ++i)
        for (std::size_t k = 0; k < inputs[i].size(); ++k)
          inputs[i][k] = base_inputs[i][k] + step * dir_in[i][k];
      for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t k = 0; k < params[i]->value.size(); ++k)
          params[i]->value[k] = base_params[i][k] + step * dir_par[i][k];
    };
    // Unit-length direction, so the step size is eps regardless of how many
    // values are perturbed.
    double norm2 = 0.0;
    for (const auto& u : dir_in)
      for (double v : u.values()) norm2 += v * v;
    for (const auto& u : dir_par)
      for (double v : u.values()) norm2 += v * v;
    const double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 1.0;
    for (auto& u : dir_in)
      for (double& v : u.values()) v *= inv;
    for (auto& u : dir_par)
      for (double& v : u.values()) v *= inv;
    analytic *= inv;
    shift(opt.eps);
    const double plus = evaluate(false, nullptr, &weights, nullptr);
    shift(-opt.eps);
    const double minus = evaluate(false, nullptr, &weights, nullptr);
    shift(0.0);
    const double numeric = (plus - minus) / (2.0 * opt.eps);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic - numeric) / denom);
    ++result.probes;
  }
  result.passed = result.max_rel_error < opt.tolerance;
  return result;
}

}  // namespace gid::nn
