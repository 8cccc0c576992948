#pragma once

// Layer building blocks shared by the denoiser and the pose predictor.

#include "gid/ops.hpp"

#include <random>
#include <string>

namespace gid::nn {

enum class Init { xavier, zero };

template <typename T>
struct Linear {
  Parameter<T>* weight = nullptr;  // [in, out]
  Parameter<T>* bias = nullptr;    // [out]

  Var<T> operator()(const Var<T>& x) const;
};

template <typename T>
Linear<T> make_linear(ParameterStore<T>& store, const std::string& name, std::size_t in,
                      std::size_t out, std::mt19937_64& rng, Init init = Init::xavier);

template <typename T>
struct LayerNorm {
  Parameter<T>* gain = nullptr;
  Parameter<T>* bias = nullptr;

  Var<T> operator()(const Var<T>& x) const;
};

template <typename T>
LayerNorm<T> make_layer_norm(ParameterStore<T>& store, const std::string& name, std::size_t dim);

/// Projected multi-head self-attention over [N, L, d].
template <typename T>
struct MultiHeadAttention {
  Linear<T> query, key, value, out;
  std::size_t heads = 1;

  Var<T> operator()(const Var<T>& x, bool causal) const;
};

/// Post-norm transformer block: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
template <typename T>
struct TransformerBlock {
  MultiHeadAttention<T> attn;
  LayerNorm<T> norm1;
  Linear<T> ff1, ff2;
  LayerNorm<T> norm2;

  Var<T> operator()(const Var<T>& x, bool causal) const;
};

template <typename T>
TransformerBlock<T> make_block(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                               std::size_t heads, std::size_t ff_hidden, std::mt19937_64& rng);

/// Runs `block` along the time axis of x[B, T, M, d] (one sequence per sensor).
template <typename T>
Var<T> temporal(const TransformerBlock<T>& block, const Var<T>& x, bool causal);

/// Runs `block` along the sensor axis of x[B, T, M, d] (one set per frame).
template <typename T>
Var<T> spatial(const TransformerBlock<T>& block, const Var<T>& x);

}  // namespace gid::nn
