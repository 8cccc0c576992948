#include "gid/nn.hpp"

#include <cmath>

namespace gid::nn {

template <typename T>
Var<T> Linear<T>::operator()(const Var<T>& x) const {
  Tape<T>& tape = x.tape();
  return linear(x, tape.param(*weight), tape.param(*bias));
}

template <typename T>
Linear<T> make_linear(ParameterStore<T>& store, const std::string& name, std::size_t in,
                      std::size_t out, std::mt19937_64& rng, Init init) {
  Linear<T> l;
  l.weight = &store.add(name + ".weight", Shape{in, out});
  l.bias = &store.add(name + ".bias", Shape{out});
  if (init == Init::xavier) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (T& w : l.weight->value.values()) w = static_cast<T>(u(rng));
  }
  return l;
}

template <typename T>
Var<T> LayerNorm<T>::operator()(const Var<T>& x) const {
  Tape<T>& tape = x.tape();
  return layer_norm(x, tape.param(*gain), tape.param(*bias));
}

template <typename T>
LayerNorm<T> make_layer_norm(ParameterStore<T>& store, const std::string& name, std::size_t dim) {
  LayerNorm<T> ln;
  ln.gain = &store.add(name + ".gain", Shape{dim});
  ln.gain->value.fill(T(1));
  ln.bias = &store.add(name + ".bias", Shape{dim});
  return ln;
}

template <typename T>
Var<T> MultiHeadAttention<T>::operator()(const Var<T>& x, bool causal) const {
  return out(attention(query(x), key(x), value(x), heads, causal));
}

template <typename T>
Var<T> TransformerBlock<T>::operator()(const Var<T>& x, bool causal) const {
  Var<T> h = norm1(add(x, attn(x, causal)));
  return norm2(add(h, ff2(gelu(ff1(h)))));
}

template <typename T>
TransformerBlock<T> make_block(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                               std::size_t heads, std::size_t ff_hidden, std::mt19937_64& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError(name + ": model dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  TransformerBlock<T> b;
  b.attn.query = make_linear(store, name + ".attn.query", dim, dim, rng);
  b.attn.key = make_linear(store, name + ".attn.key", dim, dim, rng);
  b.attn.value = make_linear(store, name + ".attn.value", dim, dim, rng);
  b.attn.out = make_linear(store, name + ".attn.out", dim, dim, rng);
  b.attn.heads = heads;
  b.norm1 = make_layer_norm(store, name + ".norm1", dim);
  b.ff1 = make_linear(store, name + ".ff1", dim, ff_hidden, rng);
  b.ff2 = make_linear(store, name + ".ff2", ff_hidden, dim, rng);
  b.norm2 = make_layer_norm(store, name + ".norm2", dim);
  return b;
}

template <typename T>
Var<T> temporal(const TransformerBlock<T>& block, const Var<T>& x, bool causal) {
  const Shape s = x.shape();
  if (s.size() != 4) throw ShapeError("temporal: expected [B, T, M, d], got " + to_string(s));
  const std::size_t B = s[0], Tn = s[1], M = s[2], d = s[3];
  Var<T> seq = reshape(permute(x, {0, 2, 1, 3}), Shape{B * M, Tn, d});
  Var<T> y = block(seq, causal);
  return permute(reshape(y, Shape{B, M, Tn, d}), {0, 2, 1, 3});
}

template <typename T>
Var<T> spatial(const TransformerBlock<T>& block, const Var<T>& x) {
  const Shape s = x.shape();
  if (s.size() != 4) throw ShapeError("spatial: expected [B, T, M, d], got " + to_string(s));
  const std::size_t B = s[0], Tn = s[1], M = s[2], d = s[3];
  Var<T> y = block(reshape(x, Shape{B * Tn, M, d}), false);
  return reshape(y, s);
}

#define GID_INSTANTIATE_NN(T)                                                                    \
  template struct Linear<T>;                                                                     \
  template struct LayerNorm<T>;                                                                  \
  template struct MultiHeadAttention<T>;                                                         \
  template struct TransformerBlock<T>;                                                           \
  template Linear<T> make_linear(ParameterStore<T>&, const std::string&, std::size_t,            \
                                 std::size_t, std::mt19937_64&, Init);                           \
  template LayerNorm<T> make_layer_norm(ParameterStore<T>&, const std::string&, std::size_t);    \
  template TransformerBlock<T> make_block(ParameterStore<T>&, const std::string&, std::size_t,   \
                                          std::size_t, std::size_t, std::mt19937_64&);           \
  template Var<T> temporal(const TransformerBlock<T>&, const Var<T>&, bool);                     \
  template Var<T> spatial(const TransformerBlock<T>&, const Var<T>&);

GID_INSTANTIATE_NN(float)
GID_INSTANTIATE_NN(double)

}  // namespace gid::nn
