#pragma once

// Differentiable primitives used by the GINO blocks. Every op computes its value
// eagerly and records a closure that maps the upstream gradient onto its inputs.

#include "gino/autodiff.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace gino {

enum class Activation { gelu, relu, identity };

inline Activation parse_activation(const std::string& name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw ValidationError("unknown activation '" + name + "'");
}

namespace detail {

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

template <typename Scalar>
Scalar gelu(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::erf(x * Scalar(M_SQRT1_2)));
}

template <typename Scalar>
Scalar gelu_derivative(Scalar x) {
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x * Scalar(M_SQRT1_2)));
  const Scalar pdf = std::exp(Scalar(-0.5) * x * x) * Scalar(0.3989422804014327);
  return cdf + x * pdf;
}

}  // namespace detail

template <typename Scalar>
Scalar activate(Scalar x, Activation kind) {
  switch (kind) {
    case Activation::gelu: return detail::gelu(x);
    case Activation::relu: return x > Scalar(0) ? x : Scalar(0);
    case Activation::identity: return x;
  }
  return x;
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor<Scalar> out = a.value();
  out.data() += b.value().data();
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  }, "add");
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor<Scalar> out = a.value();
  out.data() -= b.value().data();
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    t.accumulate(ia, g);
    if (Tensor<Scalar>* gb = t.grad_target(ib)) gb->data() -= g.data();
  }, "sub");
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor<Scalar> out = a.value();
  out.data().array() *= b.value().data().array();
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (Tensor<Scalar>* ga = t.grad_target(ia)) ga->data().array() += g.data().array() * t.value(ib).data().array();
    if (Tensor<Scalar>* gb = t.grad_target(ib)) gb->data().array() += g.data().array() * t.value(ia).data().array();
  }, "mul");
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out = a.value();
  out.data() *= s;
  const int ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, s](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (Tensor<Scalar>* ga = t.grad_target(ia)) ga->data() += s * g.data();
  }, "scale");
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out = a.value();
  out.data().array() += s;
  const int ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    t.accumulate(ia, g);
  }, "add_scalar");
}

template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& a) {
  Tensor<Scalar> out = a.value();
  out.data() = out.data().cwiseAbs();
  const int ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (Tensor<Scalar>* ga = t.grad_target(ia)) {
      const auto& x = t.value(ia).data();
      for (Index i = 0; i < x.size(); ++i) ga->data()[i] += x[i] >= Scalar(0) ? g[i] : -g[i];
    }
  }, "abs");
}

template <typename Scalar>
Var<Scalar> activation(const Var<Scalar>& x, Activation kind) {
  if (kind == Activation::identity) return x;
  const auto a = x.value().data().array();
  Tensor<Scalar> out(x.shape());
  if (kind == Activation::gelu)
    out.data().array() = Scalar(0.5) * a * (Scalar(1) + (a * Scalar(M_SQRT1_2)).erf());
  else
    out.data().array() = a.max(Scalar(0));
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, kind](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    Tensor<Scalar>* gx = t.grad_target(ix);
    if (!gx) return;
    const auto in = t.value(ix).data().array();
    if (kind == Activation::gelu) {
      const auto cdf = Scalar(0.5) * (Scalar(1) + (in * Scalar(M_SQRT1_2)).erf());
      const auto pdf = (Scalar(-0.5) * in.square()).exp() * Scalar(0.3989422804014327);
      gx->data().array() += (cdf + in * pdf) * g.data().array();
    } else {
      gx->data().array() += (in > Scalar(0)).template cast<Scalar>() * g.data().array();
    }
  }, "activation");
}

/// y[..., i] = sum_j W[i, j] x[..., j] + b[i]. Each output row is reduced in a fixed order,
/// so a row's value does not depend on how many rows share the call.
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>* b = nullptr) {
  const Tensor<Scalar>& xv = x.value();
  const Tensor<Scalar>& wv = w.value();
  if (wv.rank() != 2) throw DimensionError("linear: weight must be rank 2, got " + shape_string(wv.shape()));
  const Index n = wv.dim(0), m = wv.dim(1);
  if (xv.rank() < 1 || xv.dim(-1) != m)
    throw DimensionError("linear: input " + shape_string(xv.shape()) + " incompatible with weight " + shape_string(wv.shape()));
  if (b && (b->value().rank() != 1 || b->value().dim(0) != n))
    throw DimensionError("linear: bias " + shape_string(b->value().shape()) + " for " + std::to_string(n) + " outputs");
  const Index rows = xv.size() / m;
  Shape out_shape = xv.shape();
  out_shape.back() = n;
  Tensor<Scalar> out(out_shape);

  const RowMatrix<Scalar> wt = wv.matrix(n, m).transpose();
  const Scalar* xp = xv.ptr();
  Scalar* yp = out.ptr();
  const Scalar* bp = b ? b->value().ptr() : nullptr;
  for (Index r = 0; r < rows; ++r) {
    Scalar* y = yp + r * n;
    if (bp) std::copy(bp, bp + n, y);
    const Scalar* xr = xp + r * m;
    for (Index k = 0; k < m; ++k) {
      const Scalar xk = xr[k];
      const Scalar* wk = wt.data() + k * n;
      for (Index j = 0; j < n; ++j) y[j] += xk * wk[j];
    }
  }

  const int ix = x.id(), iw = w.id(), ib = b ? b->id() : -1;
  std::vector<int> parents{ix, iw};
  if (b) parents.push_back(ib);
  return x.tape().record(std::move(out), parents, [ix, iw, ib, rows, n, m](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    auto gm = g.matrix(rows, n);
    if (Tensor<Scalar>* gx = t.grad_target(ix)) gx->matrix(rows, m).noalias() += gm * t.value(iw).matrix(n, m);
    if (Tensor<Scalar>* gw = t.grad_target(iw)) gw->matrix(n, m).noalias() += gm.transpose() * t.value(ix).matrix(rows, m);
    if (ib >= 0)
      if (Tensor<Scalar>* gb = t.grad_target(ib)) gb->data() += gm.colwise().sum().transpose();
  }, "linear");
}

template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b) {
  return linear(x, w, &b);
}

/// Pointwise channel mixing on a channel-first tensor: y[o, p] = sum_i W[o, i] x[i, p] + b[o].
template <typename Scalar>
Var<Scalar> channel_linear(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>* b = nullptr) {
  const Tensor<Scalar>& xv = x.value();
  const Tensor<Scalar>& wv = w.value();
  if (wv.rank() != 2 || xv.rank() < 1 || xv.dim(0) != wv.dim(1))
    throw DimensionError("channel_linear: input " + shape_string(xv.shape()) + " with weight " + shape_string(wv.shape()));
  const Index cout = wv.dim(0), cin = wv.dim(1), points = xv.size() / cin;
  if (b && (b->value().rank() != 1 || b->value().dim(0) != cout))
    throw DimensionError("channel_linear: bias " + shape_string(b->value().shape()));
  Shape out_shape = xv.shape();
  out_shape[0] = cout;
  Tensor<Scalar> out(out_shape);
  out.matrix(cout, points).noalias() = wv.matrix(cout, cin) * xv.matrix(cin, points);
  if (b) out.matrix(cout, points).colwise() += b->value().data();

  const int ix = x.id(), iw = w.id(), ib = b ? b->id() : -1;
  std::vector<int> parents{ix, iw};
  if (b) parents.push_back(ib);
  return x.tape().record(std::move(out), parents, [ix, iw, ib, cout, cin, points](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    auto gm = g.matrix(cout, points);
    if (Tensor<Scalar>* gx = t.grad_target(ix))
      gx->matrix(cin, points).noalias() += t.value(iw).matrix(cout, cin).transpose() * gm;
    if (Tensor<Scalar>* gw = t.grad_target(iw))
      gw->matrix(cout, cin).noalias() += gm * t.value(ix).matrix(cin, points).transpose();
    if (ib >= 0)
      if (Tensor<Scalar>* gb = t.grad_target(ib)) gb->data() += gm.rowwise().sum();
  }, "channel_linear");
}

template <typename Scalar>
Var<Scalar> channel_linear(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b) {
  return channel_linear(x, w, &b);
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape) {
  Tensor<Scalar> out = x.value().reshaped(std::move(shape));
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (Tensor<Scalar>* gx = t.grad_target(ix)) gx->data() += g.data();
  }, "reshape");
}

/// Concatenates along axis 0; all trailing extents must agree.
template <typename Scalar>
Var<Scalar> concat0(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ContractError("concat0 of zero tensors");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  Index lead = 0;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (p.value().rank() < 1 || t != tail) throw DimensionError("concat0: mismatched trailing extents");
    lead += p.dim(0);
  }
  Shape out_shape = parts[0].shape();
  out_shape[0] = lead;
  Tensor<Scalar> out(out_shape);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.data().segment(off, p.size()) = p.value().data();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.size();
  }
  return parts[0].tape().record(std::move(out), ids, [ids, offsets](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (Tensor<Scalar>* gp = t.grad_target(ids[i])) gp->data() += g.data().segment(offsets[i], gp->size());
  }, "concat0");
}

/// Concatenates rank-2 tensors [rows, c_i] along the last axis.
template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of zero tensors");
  const Index rows = parts[0].dim(0);
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.dim(0) != rows) throw DimensionError("concat_cols: mismatched rows");
    cols += p.dim(1);
  }
  Tensor<Scalar> out({rows, cols});
  std::vector<int> ids;
  std::vector<Index> starts;
  Index c0 = 0;
  for (const auto& p : parts) {
    out.matrix(rows, cols).middleCols(c0, p.dim(1)) = p.value().matrix(rows, p.dim(1));
    ids.push_back(p.id());
    starts.push_back(c0);
    c0 += p.dim(1);
  }
  return parts[0].tape().record(std::move(out), ids, [ids, starts, rows, cols](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (Tensor<Scalar>* gp = t.grad_target(ids[i])) {
        const Index w = gp->dim(1);
        gp->matrix(rows, w) += g.matrix(rows, cols).middleCols(starts[i], w);
      }
  }, "concat_cols");
}

/// Columns [start, start+len) of the last axis.
template <typename Scalar>
Var<Scalar> slice_last(const Var<Scalar>& x, Index start, Index len) {
  const Index cols = x.value().dim(-1), rows = x.size() / cols;
  if (start < 0 || len < 0 || start + len > cols) throw DimensionError("slice_last out of range");
  Shape out_shape = x.shape();
  out_shape.back() = len;
  Tensor<Scalar> out(out_shape);
  out.matrix(rows, len) = x.value().matrix(rows, cols).middleCols(start, len);
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, rows, cols, start, len](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (Tensor<Scalar>* gx = t.grad_target(ix)) gx->matrix(rows, cols).middleCols(start, len) += g.matrix(rows, len);
  }, "slice_last");
}

template <typename Scalar>
Var<Scalar> transpose2d(const Var<Scalar>& x) {
  if (x.value().rank() != 2) throw DimensionError("transpose2d requires rank 2");
  const Index a = x.dim(0), b = x.dim(1);
  Tensor<Scalar> out({b, a});
  out.matrix(b, a) = x.value().matrix(a, b).transpose();
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, a, b](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (Tensor<Scalar>* gx = t.grad_target(ix)) gx->matrix(a, b) += g.matrix(b, a).transpose();
  }, "transpose2d");
}

/// out[e, :] = x[index[e], :].
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& x, std::span<const Index> index) {
  if (x.value().rank() != 2) throw DimensionError("gather_rows requires rank 2");
  const Index n = x.dim(0), c = x.dim(1), e = static_cast<Index>(index.size());
  Tensor<Scalar> out({e, c});
  const Scalar* src = x.value().ptr();
  Scalar* dst = out.ptr();
  for (Index i = 0; i < e; ++i) {
    const Index r = index[static_cast<std::size_t>(i)];
    if (r < 0 || r >= n) throw ContractError("gather_rows index out of range");
    std::copy(src + r * c, src + (r + 1) * c, dst + i * c);
  }
  std::vector<Index> idx(index.begin(), index.end());
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, idx = std::move(idx), c](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    Tensor<Scalar>* gx = t.grad_target(ix);
    if (!gx) return;
    Scalar* gp = gx->ptr();
    const Scalar* go = g.ptr();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Scalar* row = gp + idx[i] * c;
      const Scalar* src = go + static_cast<Index>(i) * c;
      for (Index j = 0; j < c; ++j) row[j] += src[j];
    }
  }, "gather_rows");
}

/// out[q, :] = weight * sum_{e in [offsets[q], offsets[q+1])} x[e, :]; empty segments give zero.
template <typename Scalar>
Var<Scalar> segment_sum(const Var<Scalar>& x, std::span<const Index> offsets, Scalar weight = Scalar(1)) {
  if (x.value().rank() != 2) throw DimensionError("segment_sum requires rank 2");
  if (offsets.empty() || offsets.back() != x.dim(0)) throw ContractError("segment_sum offsets do not cover input rows");
  const Index q = static_cast<Index>(offsets.size()) - 1, c = x.dim(1);
  Tensor<Scalar> out({q, c});
  const Scalar* src = x.value().ptr();
  Scalar* dst = out.ptr();
  for (Index i = 0; i < q; ++i) {
    Scalar* row = dst + i * c;
    for (Index e = offsets[static_cast<std::size_t>(i)]; e < offsets[static_cast<std::size_t>(i) + 1]; ++e)
      for (Index j = 0; j < c; ++j) row[j] += src[e * c + j];
    for (Index j = 0; j < c; ++j) row[j] *= weight;
  }
  std::vector<Index> off(offsets.begin(), offsets.end());
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, off = std::move(off), c, weight](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    Tensor<Scalar>* gx = t.grad_target(ix);
    if (!gx) return;
    for (std::size_t i = 0; i + 1 < off.size(); ++i)
      for (Index e = off[i]; e < off[i + 1]; ++e)
        for (Index j = 0; j < c; ++j) gx->ptr()[e * c + j] += weight * g.ptr()[static_cast<Index>(i) * c + j];
  }, "segment_sum");
}

/// out[e, :] = w[e] * x[e, :] with constant row weights.
template <typename Scalar>
Var<Scalar> scale_rows(const Var<Scalar>& x, const Tensor<Scalar>& w) {
  if (x.value().rank() != 2 || w.size() != x.dim(0)) throw DimensionError("scale_rows: need one weight per row");
  const Index e = x.dim(0), c = x.dim(1);
  Tensor<Scalar> out({e, c});
  out.matrix(e, c) = x.value().matrix(e, c).array().colwise() * w.data().array();
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, w, e, c](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (Tensor<Scalar>* gx = t.grad_target(ix)) gx->matrix(e, c).array() += g.matrix(e, c).array().colwise() * w.data().array();
  }, "scale_rows");
}

/// Per-row matrix-vector product: kernel[e] is a row-major (n x m) block, out[e] = kernel[e] * v[e].
template <typename Scalar>
Var<Scalar> batched_matvec(const Var<Scalar>& kernel, const Var<Scalar>& v, Index n) {
  if (v.value().rank() != 2 || kernel.value().rank() != 2) throw DimensionError("batched_matvec requires rank 2");
  const Index e = v.dim(0), m = v.dim(1);
  if (kernel.dim(0) != e || kernel.dim(1) != n * m)
    throw DimensionError("batched_matvec: kernel " + shape_string(kernel.shape()) + " vs values " + shape_string(v.shape()));
  Tensor<Scalar> out({e, n});
  const Scalar* kp = kernel.value().ptr();
  const Scalar* vp = v.value().ptr();
  for (Index r = 0; r < e; ++r) {
    const Scalar* kr = kp + r * n * m;
    const Scalar* vr = vp + r * m;
    for (Index i = 0; i < n; ++i) {
      Scalar acc = 0;
      for (Index j = 0; j < m; ++j) acc += kr[i * m + j] * vr[j];
      out.ptr()[r * n + i] = acc;
    }
  }
  const int ik = kernel.id(), iv = v.id();
  return v.tape().record(std::move(out), {ik, iv}, [ik, iv, e, n, m](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    Tensor<Scalar>* gk = t.grad_target(ik);
    Tensor<Scalar>* gv = t.grad_target(iv);
    const Scalar* kp = t.value(ik).ptr();
    const Scalar* vp = t.value(iv).ptr();
    for (Index r = 0; r < e; ++r) {
      const Scalar* gr = g.ptr() + r * n;
      for (Index i = 0; i < n; ++i) {
        const Scalar gi = gr[i];
        if (gk) {
          Scalar* row = gk->ptr() + r * n * m + i * m;
          for (Index j = 0; j < m; ++j) row[j] += gi * vp[r * m + j];
        }
        if (gv) {
          const Scalar* krow = kp + r * n * m + i * m;
          Scalar* vrow = gv->ptr() + r * m;
          for (Index j = 0; j < m; ++j) vrow[j] += gi * krow[j];
        }
      }
    }
  }, "batched_matvec");
}

/// Per-channel normalization over all trailing (spatial) axes to zero mean and unit variance.
template <typename Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, Scalar eps = Scalar(1e-5)) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Index c = x.dim(0), p = x.size() / c;
  Tensor<Scalar> out(x.shape());
  Vec mean(c), inv_std(c);
  auto xm = x.value().matrix(c, p);
  auto ym = out.matrix(c, p);
  for (Index i = 0; i < c; ++i) {
    mean[i] = xm.row(i).mean();
    const Scalar var = (xm.row(i).array() - mean[i]).square().mean();
    inv_std[i] = Scalar(1) / std::sqrt(var + eps);
    ym.row(i) = (xm.row(i).array() - mean[i]) * inv_std[i];
  }
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, mean, inv_std, c, p](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    Tensor<Scalar>* gx = t.grad_target(ix);
    if (!gx) return;
    auto xm = t.value(ix).matrix(c, p);
    auto gm = g.matrix(c, p);
    auto gxm = gx->matrix(c, p);
    for (Index i = 0; i < c; ++i) {
      const auto xhat = ((xm.row(i).array() - mean[i]) * inv_std[i]).eval();
      const Scalar gmean = gm.row(i).mean();
      const Scalar gxhat = (gm.row(i).array() * xhat).mean();
      gxm.row(i).array() += inv_std[i] * (gm.row(i).array() - gmean - xhat * gxhat);
    }
  }, "instance_norm");
}

/// y[c, p] = scale[c] * x[c, p] + shift[c].
template <typename Scalar>
Var<Scalar> affine_channels(const Var<Scalar>& x, const Var<Scalar>& scale_v, const Var<Scalar>& shift_v) {
  const Index c = x.dim(0), p = x.size() / c;
  if (scale_v.size() != c || shift_v.size() != c)
    throw DimensionError("affine_channels: expected " + std::to_string(c) + " scale/shift entries");
  Tensor<Scalar> out(x.shape());
  out.matrix(c, p) = (x.value().matrix(c, p).array().colwise() * scale_v.value().data().array()).colwise() +
                     shift_v.value().data().array();
  const int ix = x.id(), is = scale_v.id(), ih = shift_v.id();
  return x.tape().record(std::move(out), {ix, is, ih}, [ix, is, ih, c, p](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    auto gm = g.matrix(c, p);
    if (Tensor<Scalar>* gx = t.grad_target(ix))
      gx->matrix(c, p).array() += gm.array().colwise() * t.value(is).data().array();
    if (Tensor<Scalar>* gs = t.grad_target(is))
      gs->data() += (gm.array() * t.value(ix).matrix(c, p).array()).rowwise().sum().matrix();
    if (Tensor<Scalar>* gh = t.grad_target(ih)) gh->data() += gm.rowwise().sum();
  }, "affine_channels");
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  const int ix = x.id();
  return x.tape().record(Tensor<Scalar>::scalar(x.value().data().sum()), {ix}, [ix](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (Tensor<Scalar>* gx = t.grad_target(ix)) gx->data().array() += g.item();
  }, "sum");
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.size()));
}

/// Sum of squares.
template <typename Scalar>
Var<Scalar> squared_norm(const Var<Scalar>& x) {
  const int ix = x.id();
  return x.tape().record(Tensor<Scalar>::scalar(x.value().data().squaredNorm()), {ix}, [ix](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (Tensor<Scalar>* gx = t.grad_target(ix)) gx->data() += Scalar(2) * g.item() * t.value(ix).data();
  }, "squared_norm");
}

/// Inner product with a constant weight vector of the same size.
template <typename Scalar>
Var<Scalar> dot_constant(const Var<Scalar>& x, const Tensor<Scalar>& w) {
  if (w.size() != x.size()) throw DimensionError("dot_constant: size mismatch");
  const int ix = x.id();
  return x.tape().record(Tensor<Scalar>::scalar(x.value().data().dot(w.data())), {ix}, [ix, w](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    if (Tensor<Scalar>* gx = t.grad_target(ix)) gx->data() += g.item() * w.data();
  }, "dot_constant");
}

/// ||pred - target|| / ||target|| with a constant target.
template <typename Scalar>
Var<Scalar> relative_l2(const Var<Scalar>& pred, const Tensor<Scalar>& target) {
  detail::require_same_shape(pred.value(), target, "relative_l2");
  const Scalar denom = target.data().norm();
  if (!(denom > Scalar(0))) throw ValidationError("relative_l2: target has zero norm");
  const auto diff = (pred.value().data() - target.data()).eval();
  const Scalar num = diff.norm();
  const int ip = pred.id();
  return pred.tape().record(Tensor<Scalar>::scalar(num / denom), {ip}, [ip, target, num, denom](const Tensor<Scalar>& g, Tape<Scalar>& t) {
    Tensor<Scalar>* gp = t.grad_target(ip);
    if (!gp || num == Scalar(0)) return;
    gp->data() += (g.item() / (num * denom)) * (t.value(ip).data() - target.data());
  }, "relative_l2");
}

}  // namespace gino
