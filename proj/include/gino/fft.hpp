#pragma once

// Real 3-d discrete Fourier transforms over the trailing three axes of a
// channel-first tensor [c, s1, s2, s3].
//
// Convention: the forward transform is unnormalized, X(k) = sum_x v(x) exp(-i<k,x>),
// and the inverse divides by S = s1*s2*s3. Only the non-negative frequencies
// 0..s3/2 of the last axis are stored. The inverse treats the stored half as the
// Hermitian half of a real signal: on the k3 = 0 plane (and the k3 = s3/2 plane for
// even s3) it keeps the Hermitian part, which equals taking the real part of the
// full inverse.

#include "gino/tensor.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <numeric>
#include <vector>

namespace gino {

inline Index half_extent(Index s) { return s / 2 + 1; }

/// With `keep3` < s3/2+1 only the columns k3 < keep3 are transformed along the first two
/// axes; the remaining entries of the result are left zero.
template <typename Scalar>
ComplexTensor<Scalar> fft3(const Tensor<Scalar>& x, Index keep3 = -1) {
  using Complex = std::complex<Scalar>;
  if (x.rank() != 4) throw DimensionError("fft3 expects [c, s1, s2, s3], got " + shape_string(x.shape()));
  const Index c = x.dim(0), s1 = x.dim(1), s2 = x.dim(2), s3 = x.dim(3);
  if (s1 < 1 || s2 < 1 || s3 < 1) throw DimensionError("fft3: spatial extents must be >= 1");
  const Index h3 = half_extent(s3);
  const Index k3_end = keep3 < 0 ? h3 : std::min(keep3, h3);
  ComplexTensor<Scalar> out(Shape{c, s1, s2, h3});
  std::vector<Complex> buf(static_cast<std::size_t>(h3 * s1 * s2));
  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  std::vector<Complex> line_in(static_cast<std::size_t>(std::max({s1, s2, s3}))), line_out(line_in.size());
  std::vector<Scalar> real_line(static_cast<std::size_t>(s3));

  for (Index ch = 0; ch < c; ++ch) {
    const Scalar* src = x.ptr() + ch * s1 * s2 * s3;
    // last axis: real to half-complex
    for (Index r = 0; r < s1 * s2; ++r) {
      std::copy(src + r * s3, src + (r + 1) * s3, real_line.begin());
      fft.fwd(line_out.data(), real_line.data(), s3);
      std::copy(line_out.begin(), line_out.begin() + h3, buf.begin() + r * h3);
    }
    // middle axis
    for (Index i1 = 0; i1 < s1; ++i1)
      for (Index k3 = 0; k3 < k3_end; ++k3) {
        for (Index i2 = 0; i2 < s2; ++i2) line_in[static_cast<std::size_t>(i2)] = buf[static_cast<std::size_t>((i1 * s2 + i2) * h3 + k3)];
        fft.fwd(line_out.data(), line_in.data(), s2);
        for (Index i2 = 0; i2 < s2; ++i2) buf[static_cast<std::size_t>((i1 * s2 + i2) * h3 + k3)] = line_out[static_cast<std::size_t>(i2)];
      }
    // first axis
    for (Index i2 = 0; i2 < s2; ++i2)
      for (Index k3 = 0; k3 < k3_end; ++k3) {
        for (Index i1 = 0; i1 < s1; ++i1) line_in[static_cast<std::size_t>(i1)] = buf[static_cast<std::size_t>((i1 * s2 + i2) * h3 + k3)];
        fft.fwd(line_out.data(), line_in.data(), s1);
        for (Index i1 = 0; i1 < s1; ++i1) buf[static_cast<std::size_t>((i1 * s2 + i2) * h3 + k3)] = line_out[static_cast<std::size_t>(i1)];
      }
    const Index base = ch * s1 * s2 * h3;
    for (Index r = 0; r < s1 * s2; ++r)
      for (Index k3 = 0; k3 < k3_end; ++k3) out.set(base + r * h3 + k3, buf[static_cast<std::size_t>(r * h3 + k3)]);
  }
  return out;
}

/// Inverse of fft3; `s3` is the real extent of the last axis. With `keep3` the input is
/// assumed zero for k3 >= keep3.
template <typename Scalar>
Tensor<Scalar> ifft3(const ComplexTensor<Scalar>& xf, Index s3, Index keep3 = -1) {
  using Complex = std::complex<Scalar>;
  if (xf.shape().size() != 4) throw DimensionError("ifft3 expects [c, s1, s2, s3/2+1]");
  const Index c = xf.shape()[0], s1 = xf.shape()[1], s2 = xf.shape()[2], h3 = xf.shape()[3];
  if (half_extent(s3) != h3) throw DimensionError("ifft3: last extent " + std::to_string(s3) + " inconsistent with half spectrum");
  Tensor<Scalar> out(Shape{c, s1, s2, s3});
  std::vector<Complex> buf(static_cast<std::size_t>(h3 * s1 * s2));
  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  std::vector<Complex> line_in(static_cast<std::size_t>(std::max({s1, s2, s3}))), line_out(line_in.size());
  std::vector<Scalar> real_line(static_cast<std::size_t>(s3));
  const bool even = s3 % 2 == 0;
  const Index k3_end = keep3 < 0 ? h3 : std::min(keep3, h3);

  for (Index ch = 0; ch < c; ++ch) {
    const Index base = ch * s1 * s2 * h3;
    for (Index i = 0; i < s1 * s2 * h3; ++i) buf[static_cast<std::size_t>(i)] = xf.at(base + i);
    for (Index i2 = 0; i2 < s2; ++i2)
      for (Index k3 = 0; k3 < k3_end; ++k3) {
        for (Index i1 = 0; i1 < s1; ++i1) line_in[static_cast<std::size_t>(i1)] = buf[static_cast<std::size_t>((i1 * s2 + i2) * h3 + k3)];
        fft.inv(line_out.data(), line_in.data(), s1);
        for (Index i1 = 0; i1 < s1; ++i1) buf[static_cast<std::size_t>((i1 * s2 + i2) * h3 + k3)] = line_out[static_cast<std::size_t>(i1)];
      }
    for (Index i1 = 0; i1 < s1; ++i1)
      for (Index k3 = 0; k3 < k3_end; ++k3) {
        for (Index i2 = 0; i2 < s2; ++i2) line_in[static_cast<std::size_t>(i2)] = buf[static_cast<std::size_t>((i1 * s2 + i2) * h3 + k3)];
        fft.inv(line_out.data(), line_in.data(), s2);
        for (Index i2 = 0; i2 < s2; ++i2) buf[static_cast<std::size_t>((i1 * s2 + i2) * h3 + k3)] = line_out[static_cast<std::size_t>(i2)];
      }
    Scalar* dst = out.ptr() + ch * s1 * s2 * s3;
    for (Index r = 0; r < s1 * s2; ++r) {
      std::copy(buf.begin() + r * h3, buf.begin() + (r + 1) * h3, line_in.begin());
      // Hermitian projection of the self-conjugate planes.
      line_in[0] = Complex(line_in[0].real(), Scalar(0));
      if (even && h3 > 1) line_in[static_cast<std::size_t>(h3 - 1)] = Complex(line_in[static_cast<std::size_t>(h3 - 1)].real(), Scalar(0));
      fft.inv(real_line.data(), line_in.data(), s3);
      std::copy(real_line.begin(), real_line.end(), dst + r * s3);
    }
  }
  return out;
}

namespace detail {

// exp(sign * 2 pi i k n / s) for rows k in `ks` and columns n < s, split into parts.
template <typename Scalar>
void twiddles(const std::vector<Index>& ks, Index s, double sign, RowMatrix<Scalar>& re, RowMatrix<Scalar>& im) {
  const Index n = static_cast<Index>(ks.size());
  re.resize(n, s);
  im.resize(n, s);
  for (Index r = 0; r < n; ++r)
    for (Index j = 0; j < s; ++j) {
      const double a = 2.0 * M_PI * static_cast<double>((ks[static_cast<std::size_t>(r)] * j) % s) / static_cast<double>(s);
      re(r, j) = static_cast<Scalar>(std::cos(a));
      im(r, j) = static_cast<Scalar>(sign * std::sin(a));
    }
}

// Applies the complex [n x s] matrix (er, ei) to `blocks` consecutive [s x cols] blocks.
template <typename Scalar>
void apply_blocks(const RowMatrix<Scalar>& er, const RowMatrix<Scalar>& ei, const Scalar* xr, const Scalar* xi, Scalar* yr,
                  Scalar* yi, Index blocks, Index cols) {
  using CMap = Eigen::Map<const RowMatrix<Scalar>>;
  using MMap = Eigen::Map<RowMatrix<Scalar>>;
  const Index n = er.rows(), s = er.cols();
  for (Index b = 0; b < blocks; ++b) {
    CMap ar(xr + b * s * cols, s, cols), ai(xi + b * s * cols, s, cols);
    MMap br(yr + b * n * cols, n, cols), bi(yi + b * n * cols, n, cols);
    br.noalias() = er * ar;
    br.noalias() -= ei * ai;
    bi.noalias() = er * ai;
    bi.noalias() += ei * ar;
  }
}

inline Shape partial_shape(Index c, const std::vector<Index>& k1, const std::vector<Index>& k2, Index keep3) {
  return {c, static_cast<Index>(k1.size()), static_cast<Index>(k2.size()), keep3};
}

}  // namespace detail

/// fft3 evaluated only at first-axis indices `k1`, second-axis indices `k2` and half-spectrum
/// columns k3 < keep3, by dense transforms per axis. Result [c, |k1|, |k2|, keep3].
template <typename Scalar>
ComplexTensor<Scalar> fft3_partial(const Tensor<Scalar>& x, const std::vector<Index>& k1, const std::vector<Index>& k2, Index keep3) {
  if (x.rank() != 4) throw DimensionError("fft3_partial expects [c, s1, s2, s3], got " + shape_string(x.shape()));
  const Index c = x.dim(0), s1 = x.dim(1), s2 = x.dim(2), s3 = x.dim(3);
  if (keep3 < 1 || keep3 > half_extent(s3)) throw DimensionError("fft3_partial: keep3 out of range");
  const Index n1 = static_cast<Index>(k1.size()), n2 = static_cast<Index>(k2.size());
  std::vector<Index> k3(static_cast<std::size_t>(keep3));
  std::iota(k3.begin(), k3.end(), Index{0});
  RowMatrix<Scalar> t3r, t3i, t2r, t2i, t1r, t1i;
  detail::twiddles<Scalar>(k3, s3, -1.0, t3r, t3i);
  detail::twiddles<Scalar>(k2, s2, -1.0, t2r, t2i);
  detail::twiddles<Scalar>(k1, s1, -1.0, t1r, t1i);

  // last axis, real input: [c s1 s2, s3] x [s3, keep3]
  const Index rows = c * s1 * s2;
  RowMatrix<Scalar> ar = x.matrix(rows, s3) * t3r.transpose();
  RowMatrix<Scalar> ai = x.matrix(rows, s3) * t3i.transpose();
  // second axis on each [s2, keep3] block
  RowMatrix<Scalar> br(c * s1 * n2, keep3), bi(c * s1 * n2, keep3);
  detail::apply_blocks(t2r, t2i, ar.data(), ai.data(), br.data(), bi.data(), c * s1, keep3);
  // first axis on each [s1, n2 keep3] block
  ComplexTensor<Scalar> out(detail::partial_shape(c, k1, k2, keep3));
  detail::apply_blocks(t1r, t1i, br.data(), bi.data(), out.real.ptr(), out.imag.ptr(), c, n2 * keep3);
  (void)n1;
  return out;
}

/// ifft3 of a half spectrum that vanishes outside the frequencies selected as in fft3_partial;
/// `xf` holds the selected entries. Indices in `k1` and in `k2` must be distinct.
template <typename Scalar>
Tensor<Scalar> ifft3_partial(const ComplexTensor<Scalar>& xf, const std::vector<Index>& k1, const std::vector<Index>& k2, Index s1,
                             Index s2, Index s3) {
  if (xf.shape().size() != 4) throw DimensionError("ifft3_partial expects [c, n1, n2, keep3]");
  const Index c = xf.shape()[0], n1 = xf.shape()[1], n2 = xf.shape()[2], keep3 = xf.shape()[3];
  if (n1 != static_cast<Index>(k1.size()) || n2 != static_cast<Index>(k2.size()) || keep3 > half_extent(s3))
    throw DimensionError("ifft3_partial: spectrum " + shape_string(xf.shape()) + " does not match the selection");
  std::vector<Index> i1(static_cast<std::size_t>(s1)), i2(static_cast<std::size_t>(s2));
  std::iota(i1.begin(), i1.end(), Index{0});
  std::iota(i2.begin(), i2.end(), Index{0});
  // inverse factors: rows are grid positions, columns the selected frequencies
  RowMatrix<Scalar> f1r(s1, n1), f1i(s1, n1), f2r(s2, n2), f2i(s2, n2);
  for (Index a = 0; a < s1; ++a)
    for (Index b = 0; b < n1; ++b) {
      const double t = 2.0 * M_PI * static_cast<double>((a * k1[static_cast<std::size_t>(b)]) % s1) / static_cast<double>(s1);
      f1r(a, b) = static_cast<Scalar>(std::cos(t));
      f1i(a, b) = static_cast<Scalar>(std::sin(t));
    }
  for (Index a = 0; a < s2; ++a)
    for (Index b = 0; b < n2; ++b) {
      const double t = 2.0 * M_PI * static_cast<double>((a * k2[static_cast<std::size_t>(b)]) % s2) / static_cast<double>(s2);
      f2r(a, b) = static_cast<Scalar>(std::cos(t));
      f2i(a, b) = static_cast<Scalar>(std::sin(t));
    }
  RowMatrix<Scalar> zr(c * s1, n2 * keep3), zi(c * s1, n2 * keep3);
  detail::apply_blocks(f1r, f1i, xf.real.ptr(), xf.imag.ptr(), zr.data(), zi.data(), c, n2 * keep3);
  RowMatrix<Scalar> wr(c * s1 * s2, keep3), wi(c * s1 * s2, keep3);
  detail::apply_blocks(f2r, f2i, zr.data(), zi.data(), wr.data(), wi.data(), c * s1, keep3);
  // real output along the last axis: sum_k mult_k Re(W_k exp(2 pi i k n / s3)) / N
  const double inv_n = 1.0 / static_cast<double>(s1 * s2 * s3);
  RowMatrix<Scalar> cm(keep3, s3), sm(keep3, s3);
  for (Index k = 0; k < keep3; ++k) {
    const double mult = (k == 0 || (s3 % 2 == 0 && k == s3 / 2)) ? 1.0 : 2.0;
    for (Index j = 0; j < s3; ++j) {
      const double t = 2.0 * M_PI * static_cast<double>((k * j) % s3) / static_cast<double>(s3);
      cm(k, j) = static_cast<Scalar>(mult * inv_n * std::cos(t));
      sm(k, j) = static_cast<Scalar>(mult * inv_n * std::sin(t));
    }
  }
  Tensor<Scalar> out(Shape{c, s1, s2, s3});
  auto om = out.matrix(c * s1 * s2, s3);
  om.noalias() = wr * cm;
  om.noalias() -= wi * sm;
  return out;
}

/// Multiplicity of a stored half-spectrum index along the last axis: 1 for the
/// self-conjugate planes (k3 = 0 and, for even s3, k3 = s3/2), 2 otherwise.
inline int half_spectrum_multiplicity(Index k3, Index s3) {
  if (k3 == 0) return 1;
  if (s3 % 2 == 0 && k3 == s3 / 2) return 1;
  return 2;
}

}  // namespace gino
