#include "gid/ops.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <limits>

namespace gid::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using SMapR = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CSMapR = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;

bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void require_suffix(const Shape& a, const Shape& b, const char* op) {
  if (!is_suffix(a, b)) {
    throw ShapeError(std::string(op) + ": " + to_string(b) + " does not broadcast over " +
                     to_string(a));
  }
}

std::array<std::size_t, 4> pad4(const Shape& s) {
  std::array<std::size_t, 4> out{1, 1, 1, 1};
  std::copy(s.begin(), s.end(), out.begin() + (4 - s.size()));
  return out;
}

std::array<std::size_t, 4> strides4(const std::array<std::size_t, 4>& d) {
  return {d[1] * d[2] * d[3], d[2] * d[3], d[3], 1};
}

// Leading product and trailing product around `axis`.
std::pair<std::size_t, std::size_t> outer_inner(const Shape& s, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, inner};
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <typename T>
Tensor<T> permute_values(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out_shape[i] = in[perm[i]];
  Tensor<T> out(out_shape);
  // Express input strides in output-axis order, padded to four axes.
  const std::size_t pad = 4 - in.size();
  std::array<std::size_t, 4> in_stride_full{};
  {
    std::size_t s = 1;
    for (std::size_t i = in.size(); i-- > 0;) {
      in_stride_full[i] = s;
      s *= in[i];
    }
  }
  std::array<std::size_t, 4> od = pad4(out_shape);
  std::array<std::size_t, 4> is{0, 0, 0, 0};
  for (std::size_t i = 0; i < in.size(); ++i) is[pad + i] = in_stride_full[perm[i]];
  const T* src = x.data();
  T* dst = out.data();
  std::size_t o = 0;
  for (std::size_t a = 0; a < od[0]; ++a)
    for (std::size_t b = 0; b < od[1]; ++b)
      for (std::size_t c = 0; c < od[2]; ++c) {
        const std::size_t base = a * is[0] + b * is[1] + c * is[2];
        for (std::size_t e = 0; e < od[3]; ++e) dst[o++] = src[base + e * is[3]];
      }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// structural

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](const Tensor<T>& g, Tape<T>& tape) {
    Tensor<T>& gx = tape.grad_of(x);
    const T* s = g.data();
    T* d = gx.data();
    for (std::size_t i = 0; i < gx.size(); ++i) d[i] += s[i];
  });
}

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm) {
  if (perm.size() != x.shape().size()) throw ShapeError("permute: rank mismatch");
  std::vector<std::size_t> inverse(perm.size());
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || seen[perm[i]]) throw ShapeError("permute: invalid permutation");
    seen[perm[i]] = true;
    inverse[perm[i]] = i;
  }
  Tensor<T> out = permute_values(x.value(), perm);
  return x.tape().record(std::move(out), {x},
                         [x, inverse](const Tensor<T>& g, Tape<T>& tape) {
                           add_into(tape.grad_of(x), permute_values(g, inverse));
                         });
}

template <typename T>
Var<T> expand(const Var<T>& x, Shape shape) {
  const Shape& in = x.shape();
  if (in.size() != shape.size()) {
    throw ShapeError("expand: rank mismatch " + to_string(in) + " -> " + to_string(shape));
  }
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != shape[i] && in[i] != 1) {
      throw ShapeError("expand: cannot expand " + to_string(in) + " to " + to_string(shape));
    }
  }
  const auto od = pad4(shape);
  const auto id = pad4(in);
  const auto is = strides4(id);
  std::array<std::size_t, 4> step{};
  for (int i = 0; i < 4; ++i) step[i] = id[i] == 1 ? 0 : is[i];
  Tensor<T> out(shape);
  const T* src = x.value().data();
  T* dst = out.data();
  std::size_t o = 0;
  for (std::size_t a = 0; a < od[0]; ++a)
    for (std::size_t b = 0; b < od[1]; ++b)
      for (std::size_t c = 0; c < od[2]; ++c)
        for (std::size_t e = 0; e < od[3]; ++e)
          dst[o++] = src[a * step[0] + b * step[1] + c * step[2] + e * step[3]];
  return x.tape().record(std::move(out), {x}, [x, od, step](const Tensor<T>& g, Tape<T>& tape) {
    T* gx = tape.grad_of(x).data();
    const T* gs = g.data();
    std::size_t o = 0;
    for (std::size_t a = 0; a < od[0]; ++a)
      for (std::size_t b = 0; b < od[1]; ++b)
        for (std::size_t c = 0; c < od[2]; ++c)
          for (std::size_t e = 0; e < od[3]; ++e)
            gx[a * step[0] + b * step[1] + c * step[2] + e * step[3]] += gs[o++];
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = xs.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw ShapeError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
    out_shape[axis] += s[axis];
  }
  const auto [outer, inner] = outer_inner(first, axis);
  Tensor<T> out(out_shape);
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<std::size_t> widths;
  std::size_t col = 0;
  for (const auto& x : xs) {
    const std::size_t w = x.dim(axis) * inner;
    const T* src = x.value().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * w, src + (o + 1) * w, out.data() + o * out_row + col);
    }
    widths.push_back(w);
    col += w;
  }
  return xs.front().tape().record_many(
      std::move(out), xs,
      [xs, widths, outer = outer, out_row](const Tensor<T>& g, Tape<T>& tape) {
        std::size_t col = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
          const std::size_t w = widths[i];
          if (tape.requires_grad(xs[i])) {
            T* gx = tape.grad_of(xs[i]).data();
            for (std::size_t o = 0; o < outer; ++o) {
              const T* src = g.data() + o * out_row + col;
              for (std::size_t k = 0; k < w; ++k) gx[o * w + k] += src[k];
            }
          }
          col += w;
        }
      });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of " + to_string(s));
  }
  const auto [outer, inner] = outer_inner(s, axis);
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const std::size_t in_row = s[axis] * inner;
  const std::size_t w = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Tensor<T> out(out_shape);
  const T* src = x.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(src + o * in_row + off, src + o * in_row + off + w, out.data() + o * w);
  }
  return x.tape().record(std::move(out), {x},
                         [x, outer = outer, in_row, w, off](const Tensor<T>& g, Tape<T>& tape) {
                           T* gx = tape.grad_of(x).data();
                           for (std::size_t o = 0; o < outer; ++o) {
                             const T* gs = g.data() + o * w;
                             T* d = gx + o * in_row + off;
                             for (std::size_t k = 0; k < w; ++k) d[k] += gs[k];
                           }
                         });
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_suffix(a.shape(), b.shape(), "add");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const std::size_t bn = bv.size();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0, j = 0; i < av.size(); ++i, j = (j + 1 == bn ? 0 : j + 1)) {
    out[i] = av[i] + bv[j];
  }
  return a.tape().record(std::move(out), {a, b}, [a, b, bn](const Tensor<T>& g, Tape<T>& tape) {
    if (tape.requires_grad(a)) add_into(tape.grad_of(a), g);
    if (tape.requires_grad(b)) {
      T* gb = tape.grad_of(b).data();
      for (std::size_t i = 0, j = 0; i < g.size(); ++i, j = (j + 1 == bn ? 0 : j + 1)) gb[j] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "sub");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](const Tensor<T>& g, Tape<T>& tape) {
    if (tape.requires_grad(a)) add_into(tape.grad_of(a), g);
    if (tape.requires_grad(b)) {
      T* gb = tape.grad_of(b).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_suffix(a.shape(), b.shape(), "mul");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const std::size_t bn = bv.size();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0, j = 0; i < av.size(); ++i, j = (j + 1 == bn ? 0 : j + 1)) {
    out[i] = av[i] * bv[j];
  }
  return a.tape().record(std::move(out), {a, b}, [a, b, bn](const Tensor<T>& g, Tape<T>& tape) {
    const Tensor<T>& av = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    if (tape.requires_grad(a)) {
      T* ga = tape.grad_of(a).data();
      for (std::size_t i = 0, j = 0; i < g.size(); ++i, j = (j + 1 == bn ? 0 : j + 1)) ga[i] += g[i] * bv[j];
    }
    if (tape.requires_grad(b)) {
      T* gb = tape.grad_of(b).data();
      for (std::size_t i = 0, j = 0; i < g.size(); ++i, j = (j + 1 == bn ? 0 : j + 1)) gb[j] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T s) {
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * s;
  return x.tape().record(std::move(out), {x}, [x, s](const Tensor<T>& g, Tape<T>& tape) {
    T* gx = tape.grad_of(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return x.tape().record(std::move(out), {x}, [x](const Tensor<T>& g, Tape<T>& tape) {
    const Tensor<T>& xv = tape.value(x);
    T* gx = tape.grad_of(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > T(0)) gx[i] += g[i];
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T c = T(0.044715);
  const Tensor<T>& xv = x.value();
  const auto n = static_cast<Eigen::Index>(xv.size());
  Tensor<T> out(x.shape());
  Eigen::Map<const Arr> xa(xv.data(), n);
  Eigen::Map<Arr>(out.data(), n) = T(0.5) * xa * (T(1) + (k * (xa + c * xa.cube())).tanh());
  return x.tape().record(std::move(out), {x}, [x, n, k, c](const Tensor<T>& g, Tape<T>& tape) {
    Eigen::Map<const Arr> xa(tape.value(x).data(), n);
    Eigen::Map<const Arr> ga(g.data(), n);
    const Arr x2 = xa.square();
    const Arr t = (k * (xa + c * xa * x2)).tanh();
    Eigen::Map<Arr>(tape.grad_of(x).data(), n) +=
        ga * (T(0.5) * (T(1) + t) + T(0.5) * xa * (T(1) - t * t) * k * (T(1) + T(3) * c * x2));
  });
}


template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
  return x.tape().record(std::move(out), {x}, [x](const Tensor<T>& g, Tape<T>& tape) {
    const Tensor<T>& xv = tape.value(x);
    T* gx = tape.grad_of(x).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-xv[i]));
      gx[i] += g[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = T(0);
  for (T v : x.value().values()) acc += v;
  return x.tape().record(Tensor<T>::scalar(acc), {x}, [x](const Tensor<T>& g, Tape<T>& tape) {
    T* gx = tape.grad_of(x).data();
    const T gv = g[0];
    for (std::size_t i = 0; i < tape.value(x).size(); ++i) gx[i] += gv;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().size();
  return scale(sum(x), T(1) / static_cast<T>(n));
}

template <typename T>
Var<T> mae(const Var<T>& pred, const Var<T>& target) {
  require_same(pred.shape(), target.shape(), "mae");
  const Tensor<T>& p = pred.value();
  const Tensor<T>& t = target.value();
  // Accumulate in double so float and double runs agree closely.
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(static_cast<double>(p[i]) - t[i]);
  const T n = static_cast<T>(p.size());
  return pred.tape().record(
      Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(p.size()))), {pred, target},
      [pred, target, n](const Tensor<T>& g, Tape<T>& tape) {
        const Tensor<T>& p = tape.value(pred);
        const Tensor<T>& t = tape.value(target);
        const T k = g[0] / n;
        auto sign = [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); };
        if (tape.requires_grad(pred)) {
          T* gp = tape.grad_of(pred).data();
          for (std::size_t i = 0; i < p.size(); ++i) gp[i] += k * sign(p[i] - t[i]);
        }
        if (tape.requires_grad(target)) {
          T* gt = tape.grad_of(target).data();
          for (std::size_t i = 0; i < p.size(); ++i) gt[i] -= k * sign(p[i] - t[i]);
        }
      });
}

// ---------------------------------------------------------------------------
// linear algebra

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) throw ShapeError("matmul: operands need rank >= 2");
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t kb = bs[bs.size() - 2];
  const std::size_t n = bs.back();
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(as) + " x " + to_string(bs));
  }
  Shape out_shape = as;
  out_shape.back() = n;
  Tensor<T> out(out_shape);
  if (bs.size() == 2) {
    const std::size_t rows = a.value().size() / k;
    MapR<T>(out.data(), rows, n).noalias() =
        CMapR<T>(a.value().data(), rows, k) * CMapR<T>(b.value().data(), k, n);
    return a.tape().record(std::move(out), {a, b}, [a, b, rows, k, n](const Tensor<T>& g, Tape<T>& tape) {
      CMapR<T> gm(g.data(), rows, n);
      if (tape.requires_grad(a)) {
        MapR<T>(tape.grad_of(a).data(), rows, k).noalias() +=
            gm * CMapR<T>(tape.value(b).data(), k, n).transpose();
      }
      if (tape.requires_grad(b)) {
        MapR<T>(tape.grad_of(b).data(), k, n).noalias() +=
            CMapR<T>(tape.value(a).data(), rows, k).transpose() * gm;
      }
    });
  }
  if (!std::equal(as.begin(), as.end() - 2, bs.begin(), bs.end() - 2)) {
    throw ShapeError("matmul: leading axes differ, " + to_string(as) + " x " + to_string(bs));
  }
  const std::size_t batch = a.value().size() / (m * k);
  for (std::size_t i = 0; i < batch; ++i) {
    MapR<T>(out.data() + i * m * n, m, n).noalias() =
        CMapR<T>(a.value().data() + i * m * k, m, k) * CMapR<T>(b.value().data() + i * k * n, k, n);
  }
  return a.tape().record(std::move(out), {a, b}, [a, b, batch, m, k, n](const Tensor<T>& g, Tape<T>& tape) {
    for (std::size_t i = 0; i < batch; ++i) {
      CMapR<T> gm(g.data() + i * m * n, m, n);
      if (tape.requires_grad(a)) {
        MapR<T>(tape.grad_of(a).data() + i * m * k, m, k).noalias() +=
            gm * CMapR<T>(tape.value(b).data() + i * k * n, k, n).transpose();
      }
      if (tape.requires_grad(b)) {
        MapR<T>(tape.grad_of(b).data() + i * k * n, k, n).noalias() +=
            CMapR<T>(tape.value(a).data() + i * m * k, m, k).transpose() * gm;
      }
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape& ws = weight.shape();
  if (ws.size() != 2 || x.shape().back() != ws[0]) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " + to_string(ws));
  }
  if (bias.shape() != Shape{ws[1]}) {
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " does not match weight " + to_string(ws));
  }
  const std::size_t in = ws[0];
  const std::size_t out_dim = ws[1];
  const std::size_t rows = x.value().size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Tensor<T> out(out_shape);
  MapR<T> om(out.data(), rows, out_dim);
  om.noalias() = CMapR<T>(x.value().data(), rows, in) * CMapR<T>(weight.value().data(), in, out_dim);
  om.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value().data(), out_dim);
  return x.tape().record(
      std::move(out), {x, weight, bias},
      [x, weight, bias, rows, in, out_dim](const Tensor<T>& g, Tape<T>& tape) {
        CMapR<T> gm(g.data(), rows, out_dim);
        if (tape.requires_grad(x)) {
          MapR<T>(tape.grad_of(x).data(), rows, in).noalias() +=
              gm * CMapR<T>(tape.value(weight).data(), in, out_dim).transpose();
        }
        if (tape.requires_grad(weight)) {
          MapR<T>(tape.grad_of(weight).data(), in, out_dim).noalias() +=
              CMapR<T>(tape.value(x).data(), rows, in).transpose() * gm;
        }
        if (tape.requires_grad(bias)) {
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(tape.grad_of(bias).data(), out_dim) +=
              gm.colwise().sum();
        }
      });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight) {
  return matmul(x, weight);
}

// ---------------------------------------------------------------------------
// normalization / attention

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("softmax: axis out of range");
  const auto [outer, inner] = outer_inner(s, axis);
  const std::size_t n = s[axis];
  const Tensor<T>& xv = x.value();
  Tensor<T> out(s);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      T total = T(0);
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  // Backward recomputes the probabilities from x rather than storing them.
  return x.tape().record(std::move(out), {x},
                         [x, outer = outer, inner = inner, n](const Tensor<T>& g, Tape<T>& tape) {
                           const Tensor<T>& xv = tape.value(x);
                           T* gx = tape.grad_of(x).data();
                           std::vector<T> p(n);
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t i = 0; i < inner; ++i) {
                               const std::size_t base = o * n * inner + i;
                               T mx = -std::numeric_limits<T>::infinity();
                               for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
                               T total = T(0);
                               for (std::size_t j = 0; j < n; ++j) {
                                 p[j] = std::exp(xv[base + j * inner] - mx);
                                 total += p[j];
                               }
                               T dot = T(0);
                               for (std::size_t j = 0; j < n; ++j) {
                                 p[j] /= total;
                                 dot += p[j] * g[base + j * inner];
                               }
                               for (std::size_t j = 0; j < n; ++j) {
                                 gx[base + j * inner] += p[j] * (g[base + j * inner] - dot);
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  const Shape& s = x.shape();
  const std::size_t n = s.back();
  if (n < 2) throw ShapeError("layer_norm: last axis must have length >= 2");
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw ShapeError("layer_norm: gain/bias must have shape [" + std::to_string(n) + "]");
  }
  const std::size_t rows = x.value().size() / n;
  const T* xv = x.value().data();
  const T* gv = gain.value().data();
  const T* bv = bias.value().data();
  Tensor<T> out(s);
  Tensor<T> xhat(s);
  Tensor<T> rstd(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * n;
    T mu = T(0);
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (row[j] - mu) * rs;
      xhat[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), rstd = std::move(rstd), rows, n](const Tensor<T>& g,
                                                                            Tape<T>& tape) {
        const T* gv = tape.value(gain).data();
        if (tape.requires_grad(gain) || tape.requires_grad(bias)) {
          T* gg = tape.requires_grad(gain) ? tape.grad_of(gain).data() : nullptr;
          T* gb = tape.requires_grad(bias) ? tape.grad_of(bias).data() : nullptr;
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < n; ++j) {
              if (gg) gg[j] += g[r * n + j] * xhat[r * n + j];
              if (gb) gb[j] += g[r * n + j];
            }
          }
        }
        if (tape.requires_grad(x)) {
          T* gx = tape.grad_of(x).data();
          const T inv_n = T(1) / static_cast<T>(n);
          for (std::size_t r = 0; r < rows; ++r) {
            T sum_d = T(0), sum_dh = T(0);
            for (std::size_t j = 0; j < n; ++j) {
              const T d = g[r * n + j] * gv[j];
              sum_d += d;
              sum_dh += d * xhat[r * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const T d = g[r * n + j] * gv[j];
              gx[r * n + j] += rstd[r] * (d - inv_n * sum_d - xhat[r * n + j] * inv_n * sum_dh);
            }
          }
        }
      });
}

namespace {

template <typename T>
void attention_forward_probs(const T* q, const T* k, std::size_t L, std::size_t d, std::size_t dh,
                             std::size_t h, bool causal, MatR<T>& probs) {
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  CSMapR<T> qm(q + h * dh, L, dh, Eigen::OuterStride<>(d));
  CSMapR<T> km(k + h * dh, L, dh, Eigen::OuterStride<>(d));
  probs.noalias() = (qm * km.transpose()) * scale;
  const auto n = static_cast<Eigen::Index>(L);
  if (causal) {
    for (Eigen::Index i = 0; i < n; ++i) probs.row(i).tail(n - i - 1).setConstant(-std::numeric_limits<T>::infinity());
  }
  const Eigen::Matrix<T, Eigen::Dynamic, 1> mx = probs.rowwise().maxCoeff();
  probs = (probs.colwise() - mx).array().exp().matrix();
  if (causal) {
    for (Eigen::Index i = 0; i < n; ++i) probs.row(i).tail(n - i - 1).setZero();
  }
  const Eigen::Array<T, Eigen::Dynamic, 1> total = probs.rowwise().sum().array();
  probs = (probs.array().colwise() / total).matrix();
}

void check_attention_shapes(const Shape& q, const Shape& k, const Shape& v, std::size_t heads) {
  if (q.size() != 3) throw ShapeError("attention: q must be [N, L, d], got " + to_string(q));
  require_same(q, k, "attention");
  require_same(q, v, "attention");
  if (heads == 0 || q[2] % heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(q[2]) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

}  // namespace

template <typename T>
Tensor<T> attention_probs(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads, bool causal) {
  check_attention_shapes(q.shape(), k.shape(), k.shape(), heads);
  const std::size_t N = q.dim(0), L = q.dim(1), d = q.dim(2), dh = d / heads;
  Tensor<T> out(Shape{N, heads, L, L});
  MatR<T> p(L, L);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t h = 0; h < heads; ++h) {
      attention_forward_probs(q.data() + n * L * d, k.data() + n * L * d, L, d, dh, h, causal, p);
      std::copy(p.data(), p.data() + L * L, out.data() + (n * heads + h) * L * L);
    }
  }
  return out;
}

template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads, bool causal) {
  check_attention_shapes(q.shape(), k.shape(), v.shape(), heads);
  const std::size_t N = q.dim(0), L = q.dim(1), d = q.dim(2), dh = d / heads;
  Tensor<T> out(q.shape());
  const bool keep = q.tape().grad_enabled();
  Tensor<T> saved = keep ? Tensor<T>(Shape{N, heads, L, L}) : Tensor<T>(Shape{1});
  MatR<T> p(L, L);
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t base = n * L * d;
    for (std::size_t h = 0; h < heads; ++h) {
      attention_forward_probs(q.value().data() + base, k.value().data() + base, L, d, dh, h, causal, p);
      CSMapR<T> vm(v.value().data() + base + h * dh, L, dh, Eigen::OuterStride<>(d));
      SMapR<T> om(out.data() + base + h * dh, L, dh, Eigen::OuterStride<>(d));
      om.noalias() = p * vm;
      if (keep) std::copy(p.data(), p.data() + L * L, saved.data() + (n * heads + h) * L * L);
    }
  }
  return q.tape().record(
      std::move(out), {q, k, v},
      [q, k, v, heads, N, L, d, dh, saved = std::move(saved)](const Tensor<T>& g, Tape<T>& tape) {
        const T scale = T(1) / std::sqrt(static_cast<T>(dh));
        const bool gq = tape.requires_grad(q), gk = tape.requires_grad(k), gv = tape.requires_grad(v);
        T* dq = gq ? tape.grad_of(q).data() : nullptr;
        T* dk = gk ? tape.grad_of(k).data() : nullptr;
        T* dv = gv ? tape.grad_of(v).data() : nullptr;
        MatR<T> dp(L, L);
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t base = n * L * d;
          for (std::size_t h = 0; h < heads; ++h) {
            CMapR<T> p(saved.data() + (n * heads + h) * L * L, L, L);
            const Eigen::OuterStride<> st(d);
            CSMapR<T> go(g.data() + base + h * dh, L, dh, st);
            CSMapR<T> qm(tape.value(q).data() + base + h * dh, L, dh, st);
            CSMapR<T> km(tape.value(k).data() + base + h * dh, L, dh, st);
            CSMapR<T> vm(tape.value(v).data() + base + h * dh, L, dh, st);
            if (gv) SMapR<T>(dv + base + h * dh, L, dh, st).noalias() += p.transpose() * go;
            if (!gq && !gk) continue;
            dp.noalias() = go * vm.transpose();
            // dS = P .* (dP - rowsum(dP .* P))
            for (std::size_t i = 0; i < L; ++i) {
              T dot = T(0);
              for (std::size_t j = 0; j < L; ++j) dot += dp(i, j) * p(i, j);
              for (std::size_t j = 0; j < L; ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot) * scale;
            }
            if (gq) SMapR<T>(dq + base + h * dh, L, dh, st).noalias() += dp * km;
            if (gk) SMapR<T>(dk + base + h * dh, L, dh, st).noalias() += dp.transpose() * qm;
          }
        }
      });
}

template <typename T>
Var<T> convex_blend(const Var<T>& a, const Var<T>& b, const Var<T>& alpha) {
  require_same(a.shape(), b.shape(), "convex_blend");
  require_suffix(a.shape(), alpha.shape(), "convex_blend");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const Tensor<T>& wv = alpha.value();
  const std::size_t wn = wv.size();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0, j = 0; i < av.size(); ++i, j = (j + 1 == wn ? 0 : j + 1)) {
    out[i] = wv[j] * av[i] + (T(1) - wv[j]) * bv[i];
  }
  return a.tape().record(std::move(out), {a, b, alpha}, [a, b, alpha, wn](const Tensor<T>& g, Tape<T>& tape) {
    const Tensor<T>& av = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    const Tensor<T>& wv = tape.value(alpha);
    T* ga = tape.requires_grad(a) ? tape.grad_of(a).data() : nullptr;
    T* gb = tape.requires_grad(b) ? tape.grad_of(b).data() : nullptr;
    T* gw = tape.requires_grad(alpha) ? tape.grad_of(alpha).data() : nullptr;
    for (std::size_t i = 0, j = 0; i < g.size(); ++i, j = (j + 1 == wn ? 0 : j + 1)) {
      if (ga) ga[i] += wv[j] * g[i];
      if (gb) gb[i] += (T(1) - wv[j]) * g[i];
      if (gw) gw[j] += (av[i] - bv[i]) * g[i];
    }
  });
}

// ---------------------------------------------------------------------------
// rotation kernels

namespace {

// Coefficients of R = I + a K + b K^2 and c = a'(t)/t, e = b'(t)/t.
template <typename T>
void rodrigues_coeffs(T theta2, T& a, T& b, T& c, T& e) {
  const T theta = std::sqrt(theta2);
  if (theta < T(1e-2)) {
    const T t4 = theta2 * theta2;
    a = T(1) - theta2 / T(6) + t4 / T(120);
    b = T(0.5) - theta2 / T(24) + t4 / T(720);
    c = T(-1) / T(3) + theta2 / T(30) - t4 / T(840);
    e = T(-1) / T(12) + theta2 / T(180) - t4 / T(6720);
    return;
  }
  const T s = std::sin(theta), co = std::cos(theta);
  a = s / theta;
  b = (T(1) - co) / theta2;
  c = (theta * co - s) / (theta2 * theta);
  e = (theta * s - T(2) * (T(1) - co)) / (theta2 * theta2);
}

template <typename T>
using M3 = Eigen::Matrix<T, 3, 3, Eigen::RowMajor>;

template <typename T>
M3<T> skew3(T x, T y, T z) {
  M3<T> k;
  k << T(0), -z, y, z, T(0), -x, -y, x, T(0);
  return k;
}

template <typename T>
Eigen::Matrix<T, 3, 1> vee2(const M3<T>& m) {
  return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)};
}

}  // namespace

template <typename T>
Var<T> rodrigues(const Var<T>& axis_angle) {
  const Shape& s = axis_angle.shape();
  if (s.back() != 3) throw ShapeError("rodrigues: last axis must be 3, got " + to_string(s));
  Shape out_shape = s;
  out_shape.back() = 9;
  const std::size_t count = axis_angle.value().size() / 3;
  Tensor<T> out(out_shape);
  const T* v = axis_angle.value().data();
  for (std::size_t i = 0; i < count; ++i) {
    const T x = v[3 * i], y = v[3 * i + 1], z = v[3 * i + 2];
    T a, b, c, e;
    rodrigues_coeffs(x * x + y * y + z * z, a, b, c, e);
    const M3<T> k = skew3(x, y, z);
    const M3<T> r = M3<T>::Identity() + a * k + b * k * k;
    std::copy(r.data(), r.data() + 9, out.data() + 9 * i);
  }
  return axis_angle.tape().record(std::move(out), {axis_angle}, [axis_angle, count](const Tensor<T>& g, Tape<T>& tape) {
    const T* v = tape.value(axis_angle).data();
    T* gv = tape.grad_of(axis_angle).data();
    for (std::size_t i = 0; i < count; ++i) {
      const T x = v[3 * i], y = v[3 * i + 1], z = v[3 * i + 2];
      T a, b, c, e;
      rodrigues_coeffs(x * x + y * y + z * z, a, b, c, e);
      const M3<T> k = skew3(x, y, z);
      const M3<T> k2 = k * k;
      Eigen::Map<const M3<T>> gm(g.data() + 9 * i);
      const T gk = (gm.array() * k.array()).sum();
      const T gk2 = (gm.array() * k2.array()).sum();
      const Eigen::Matrix<T, 3, 1> vec(x, y, z);
      const M3<T> sym = gm * k.transpose() + k.transpose() * gm;
      const Eigen::Matrix<T, 3, 1> grad = (c * gk + e * gk2) * vec + a * vee2<T>(gm) + b * vee2<T>(sym);
      gv[3 * i] += grad(0);
      gv[3 * i + 1] += grad(1);
      gv[3 * i + 2] += grad(2);
    }
  });
}

template <typename T>
Var<T> geodesic_loss(const Var<T>& pred, const Tensor<T>& target, T clamp) {
  require_same(pred.shape(), target.shape(), "geodesic_loss");
  if (pred.shape().back() != 9) throw ShapeError("geodesic_loss: last axis must be 9");
  const std::size_t count = target.size() / 9;
  const T* p = pred.value().data();
  const T* t = target.data();
  std::vector<T> cosines(count);
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    T dot = T(0);
    for (int j = 0; j < 9; ++j) dot += p[9 * i + j] * t[9 * i + j];
    const T cval = std::clamp(T(0.5) * (dot - T(1)), T(-1) + clamp, T(1) - clamp);
    cosines[i] = T(0.5) * (dot - T(1));
    acc += std::acos(cval);
  }
  const T loss = static_cast<T>(acc / static_cast<double>(count));
  return pred.tape().record(Tensor<T>::scalar(loss), {pred},
                            [pred, target, clamp, count, cosines = std::move(cosines)](const Tensor<T>& g,
                                                                                       Tape<T>& tape) {
                              T* gp = tape.grad_of(pred).data();
                              const T* t = target.data();
                              const T k = g[0] / static_cast<T>(count);
                              for (std::size_t i = 0; i < count; ++i) {
                                const T cval = cosines[i];
                                if (cval <= T(-1) + clamp || cval >= T(1) - clamp) continue;
                                const T dacos = T(-1) / std::sqrt(T(1) - cval * cval);
                                for (int j = 0; j < 9; ++j) gp[9 * i + j] += k * dacos * T(0.5) * t[9 * i + j];
                              }
                            });
}

template <typename T>
Var<T> fk_positions(const Var<T>& local_rot, const std::vector<int>& parents, const std::vector<T>& offsets) {
  const Shape& s = local_rot.shape();
  const std::size_t J = parents.size();
  if (s.size() != 3 || s[1] != J || s[2] != 9) {
    throw ShapeError("fk_positions: expected [N, " + std::to_string(J) + ", 9], got " + to_string(s));
  }
  if (offsets.size() != 3 * J) throw ShapeError("fk_positions: offsets must hold 3 values per joint");
  for (std::size_t j = 0; j < J; ++j) {
    if ((j == 0) != (parents[j] < 0) || parents[j] >= static_cast<int>(j)) {
      throw ConfigError("fk_positions: parents must be topologically sorted with a single root at 0");
    }
  }
  const std::size_t N = s[0];
  Tensor<T> out(Shape{N, J, 3});
  Tensor<T> globals(Shape{N, J, 9});
  const T* lr = local_rot.value().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t j = 0; j < J; ++j) {
      Eigen::Map<const M3<T>> L(lr + (n * J + j) * 9);
      Eigen::Map<M3<T>> G(globals.data() + (n * J + j) * 9);
      Eigen::Map<Eigen::Matrix<T, 3, 1>> p(out.data() + (n * J + j) * 3);
      if (j == 0) {
        G = L;
        p.setZero();
        continue;
      }
      const std::size_t par = static_cast<std::size_t>(parents[j]);
      Eigen::Map<const M3<T>> Gp(globals.data() + (n * J + par) * 9);
      Eigen::Map<const Eigen::Matrix<T, 3, 1>> pp(out.data() + (n * J + par) * 3);
      Eigen::Map<const Eigen::Matrix<T, 3, 1>> off(offsets.data() + 3 * j);
      G = Gp * L;
      p = pp + Gp * off;
    }
  }
  return local_rot.tape().record(
      std::move(out), {local_rot},
      [local_rot, parents, offsets, N, J, globals = std::move(globals)](const Tensor<T>& g, Tape<T>& tape) {
        const T* lr = tape.value(local_rot).data();
        T* gl = tape.grad_of(local_rot).data();
        std::vector<M3<T>> dG(J);
        std::vector<Eigen::Matrix<T, 3, 1>> dp(J);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t j = 0; j < J; ++j) {
            dG[j].setZero();
            dp[j] = Eigen::Map<const Eigen::Matrix<T, 3, 1>>(g.data() + (n * J + j) * 3);
          }
          for (std::size_t j = J; j-- > 1;) {
            const std::size_t par = static_cast<std::size_t>(parents[j]);
            Eigen::Map<const M3<T>> L(lr + (n * J + j) * 9);
            Eigen::Map<const M3<T>> Gp(globals.data() + (n * J + par) * 9);
            Eigen::Map<const Eigen::Matrix<T, 3, 1>> off(offsets.data() + 3 * j);
            dp[par] += dp[j];
            dG[par] += dp[j] * off.transpose();
            dG[par] += dG[j] * L.transpose();
            Eigen::Map<M3<T>> dL(gl + (n * J + j) * 9);
            dL += Gp.transpose() * dG[j];
          }
          Eigen::Map<M3<T>> dL0(gl + n * J * 9);
          dL0 += dG[0];
        }
      });
}

template <typename T>
Var<T> mean_distance(const Var<T>& a, const Tensor<T>& target, T eps) {
  require_same(a.shape(), target.shape(), "mean_distance");
  if (a.shape().back() != 3) throw ShapeError("mean_distance: last axis must be 3");
  const std::size_t count = target.size() / 3;
  const T* av = a.value().data();
  const T* t = target.data();
  std::vector<T> dist(count);
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    T d2 = eps * eps;
    for (int j = 0; j < 3; ++j) d2 += (av[3 * i + j] - t[3 * i + j]) * (av[3 * i + j] - t[3 * i + j]);
    dist[i] = std::sqrt(d2);
    acc += dist[i];
  }
  return a.tape().record(Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count))), {a},
                         [a, target, count, dist = std::move(dist)](const Tensor<T>& g, Tape<T>& tape) {
                           const T* av = tape.value(a).data();
                           const T* t = target.data();
                           T* ga = tape.grad_of(a).data();
                           const T k = g[0] / static_cast<T>(count);
                           for (std::size_t i = 0; i < count; ++i) {
                             for (int j = 0; j < 3; ++j) ga[3 * i + j] += k * (av[3 * i + j] - t[3 * i + j]) / dist[i];
                           }
                         });
}

#define GID_INSTANTIATE_OPS(T)                                                                     \
  template Var<T> reshape(const Var<T>&, Shape);                                                   \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                         \
  template Var<T> expand(const Var<T>&, Shape);                                                    \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                                 \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                     \
  template Var<T> add(const Var<T>&, const Var<T>&);                                               \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                               \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                               \
  template Var<T> scale(const Var<T>&, T);                                                         \
  template Var<T> relu(const Var<T>&);                                                             \
  template Var<T> gelu(const Var<T>&);                                                             \
  template Var<T> sigmoid(const Var<T>&);                                                          \
  template Var<T> sum(const Var<T>&);                                                              \
  template Var<T> mean(const Var<T>&);                                                             \
  template Var<T> mae(const Var<T>&, const Var<T>&);                                               \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                            \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                             \
  template Var<T> linear(const Var<T>&, const Var<T>&);                                            \
  template Var<T> softmax(const Var<T>&, std::size_t);                                             \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                      \
  template Var<T> attention(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, bool);       \
  template Tensor<T> attention_probs(const Tensor<T>&, const Tensor<T>&, std::size_t, bool);       \
  template Var<T> convex_blend(const Var<T>&, const Var<T>&, const Var<T>&);                       \
  template Var<T> rodrigues(const Var<T>&);                                                        \
  template Var<T> geodesic_loss(const Var<T>&, const Tensor<T>&, T);                               \
  template Var<T> fk_positions(const Var<T>&, const std::vector<int>&, const std::vector<T>&);     \
  template Var<T> mean_distance(const Var<T>&, const Tensor<T>&, T);

GID_INSTANTIATE_OPS(float)
GID_INSTANTIATE_OPS(double)

}  // namespace gid::nn
