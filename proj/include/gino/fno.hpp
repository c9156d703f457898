#pragma once

// Spectral convolution and FNO blocks on the periodic latent grid.

#include "gino/fft.hpp"
#include "gino/gno.hpp"
#include "gino/ops.hpp"

#include <complex>
#include <random>
#include <string>
#include <vector>

namespace gino::fno {

/// Retained modes per axis. The weight tensor holds one coefficient per signed frequency
/// |g| < m on the first two axes and per 0 <= g < m on the (half-spectrum) last axis:
/// shape [c_out, c_in, 2*m1-1, 2*m2-1, m3].
struct Modes {
  Index m1 = 16, m2 = 16, m3 = 16;

  Index slots() const { return (2 * m1 - 1) * (2 * m2 - 1) * m3; }
  Shape weight_shape(Index c_out, Index c_in) const { return {c_out, c_in, 2 * m1 - 1, 2 * m2 - 1, m3}; }
};

/// Signed frequency of FFT index k on an axis of length s. The Nyquist index of an even
/// axis maps to +s/2 so that no frequency is represented twice.
inline Index signed_frequency(Index k, Index s) { return k <= s / 2 ? k : k - s; }

/// Throws ValidationError when the grid cannot represent the requested modes.
inline void check_modes(const Modes& m, Index s1, Index s2, Index s3) {
  auto bad = [](Index mi, Index s) { return mi < 1 || mi > s / 2 + 1; };
  if (bad(m.m1, s1) || bad(m.m2, s2) || bad(m.m3, s3))
    throw ValidationError("spectral modes (" + std::to_string(m.m1) + "," + std::to_string(m.m2) + "," + std::to_string(m.m3) +
                          ") exceed grid " + std::to_string(s1) + "x" + std::to_string(s2) + "x" + std::to_string(s3) +
                          " (need 1 <= m <= S/2+1)");
}

/// Retained frequencies of a grid. Axis lists hold FFT indices ordered by signed
/// frequency together with their weight slots; an even axis contributes its Nyquist index
/// once, at slot +s/2.
struct ModeSelection {
  std::vector<Index> k1, k2;
  std::vector<Index> slot1, slot2;
  Index keep3 = 0;

  Index count() const { return static_cast<Index>(k1.size() * k2.size()) * keep3; }
};

inline ModeSelection select_modes(const Modes& m, Index s1, Index s2, Index s3) {
  check_modes(m, s1, s2, s3);
  ModeSelection sel;
  auto axis = [](Index mi, Index s, std::vector<Index>& ks, std::vector<Index>& slots) {
    for (Index g = -(mi - 1); g <= mi - 1; ++g) {
      const Index k = ((g % s) + s) % s;
      if (signed_frequency(k, s) != g) continue;
      ks.push_back(k);
      slots.push_back(g + mi - 1);
    }
  };
  axis(m.m1, s1, sel.k1, sel.slot1);
  axis(m.m2, s2, sel.k2, sel.slot2);
  sel.keep3 = std::min(m.m3, half_extent(s3));
  return sel;
}

/// C(v) = ifft3(c . fft3(v)) with coefficients outside the retained set treated as zero.
/// `w_re` and `w_im` are the real and imaginary parts of the weight tensor.
template <typename Scalar>
Var<Scalar> spectral_conv(const Var<Scalar>& v, const Var<Scalar>& w_re, const Var<Scalar>& w_im, const Modes& modes) {
  if (v.value().rank() != 4) throw DimensionError("spectral_conv expects [c, s1, s2, s3], got " + shape_string(v.shape()));
  const Index cin = v.dim(0), s1 = v.dim(1), s2 = v.dim(2), s3 = v.dim(3);
  const Index cout = w_re.value().rank() == 5 ? w_re.dim(0) : 0;
  if (w_re.shape() != modes.weight_shape(cout, cin) || w_im.shape() != w_re.shape())
    throw DimensionError("spectral_conv: weights " + shape_string(w_re.shape()) + " do not match modes and " + std::to_string(cin) +
                         " input channels");
  const ModeSelection sel = select_modes(modes, s1, s2, s3);
  const Index n1 = static_cast<Index>(sel.k1.size()), n2 = static_cast<Index>(sel.k2.size()), k3n = sel.keep3;
  const Index nm = sel.count(), M = modes.slots();
  // weight slot and half-spectrum multiplicity of each compact mode
  std::vector<Index> slot(static_cast<std::size_t>(nm));
  std::vector<Scalar> mult(static_cast<std::size_t>(nm));
  for (Index a = 0; a < n1; ++a)
    for (Index b = 0; b < n2; ++b)
      for (Index k = 0; k < k3n; ++k) {
        const Index idx = (a * n2 + b) * k3n + k;
        slot[static_cast<std::size_t>(idx)] =
            (sel.slot1[static_cast<std::size_t>(a)] * (2 * modes.m2 - 1) + sel.slot2[static_cast<std::size_t>(b)]) * modes.m3 + k;
        mult[static_cast<std::size_t>(idx)] = static_cast<Scalar>(half_spectrum_multiplicity(k, s3));
      }

  ComplexTensor<Scalar> vf = fft3_partial(v.value(), sel.k1, sel.k2, k3n);  // [cin, nm]
  ComplexTensor<Scalar> yf(Shape{cout, n1, n2, k3n});
  {
    const Scalar *wr = w_re.value().ptr(), *wi = w_im.value().ptr();
    const Scalar *vr = vf.real.ptr(), *vi = vf.imag.ptr();
    Scalar *yr = yf.real.ptr(), *yi = yf.imag.ptr();
    for (Index o = 0; o < cout; ++o)
      for (Index i = 0; i < cin; ++i) {
        const Scalar* wro = wr + (o * cin + i) * M;
        const Scalar* wio = wi + (o * cin + i) * M;
        const Scalar* vri = vr + i * nm;
        const Scalar* vii = vi + i * nm;
        Scalar* yro = yr + o * nm;
        Scalar* yio = yi + o * nm;
        for (Index k = 0; k < nm; ++k) {
          const Index sl = slot[static_cast<std::size_t>(k)];
          yro[k] += wro[sl] * vri[k] - wio[sl] * vii[k];
          yio[k] += wro[sl] * vii[k] + wio[sl] * vri[k];
        }
      }
  }
  Tensor<Scalar> y = ifft3_partial(yf, sel.k1, sel.k2, s1, s2, s3);

  const int iv = v.id(), ir = w_re.id(), ii = w_im.id();
  return v.tape().record(std::move(y), {iv, ir, ii},
      [iv, ir, ii, sel, slot = std::move(slot), mult = std::move(mult), vf = std::move(vf), cin, cout, s1, s2, s3, nm, M](
          const Tensor<Scalar>& g, Tape<Scalar>& t) {
        // Upstream gradient in the frequency domain: G_k = (w_k / N) fft3(g)_k.
        const Scalar n = static_cast<Scalar>(s1 * s2 * s3);
        ComplexTensor<Scalar> gf = fft3_partial(g, sel.k1, sel.k2, sel.keep3);
        for (Index o = 0; o < cout; ++o)
          for (Index k = 0; k < nm; ++k) {
            const Scalar f = mult[static_cast<std::size_t>(k)] / n;
            gf.real[o * nm + k] *= f;
            gf.imag[o * nm + k] *= f;
          }
        Tensor<Scalar>* gr = t.grad_target(ir);
        Tensor<Scalar>* gi = t.grad_target(ii);
        Tensor<Scalar>* gv = t.grad_target(iv);
        const Scalar *wr = t.value(ir).ptr(), *wi = t.value(ii).ptr();
        const Scalar *vr = vf.real.ptr(), *vi = vf.imag.ptr();
        const Scalar *Gr = gf.real.ptr(), *Gi = gf.imag.ptr();
        ComplexTensor<Scalar> dvf;
        if (gv) dvf = ComplexTensor<Scalar>(vf.shape());
        for (Index o = 0; o < cout; ++o)
          for (Index i = 0; i < cin; ++i) {
            const Index wbase = (o * cin + i) * M;
            const Scalar* gro = Gr + o * nm;
            const Scalar* gio = Gi + o * nm;
            const Scalar* vri = vr + i * nm;
            const Scalar* vii = vi + i * nm;
            if (gr || gi)
              for (Index k = 0; k < nm; ++k) {
                // dC = G conj(V)
                const Index sl = wbase + slot[static_cast<std::size_t>(k)];
                if (gr) gr->ptr()[sl] += gro[k] * vri[k] + gio[k] * vii[k];
                if (gi) gi->ptr()[sl] += gio[k] * vri[k] - gro[k] * vii[k];
              }
            if (gv) {
              // dV = sum_o conj(C) G
              Scalar* dr = dvf.real.ptr() + i * nm;
              Scalar* di = dvf.imag.ptr() + i * nm;
              for (Index k = 0; k < nm; ++k) {
                const Index sl = wbase + slot[static_cast<std::size_t>(k)];
                dr[k] += wr[sl] * gro[k] + wi[sl] * gio[k];
                di[k] += wr[sl] * gio[k] - wi[sl] * gro[k];
              }
            }
          }
        if (gv) {
          // g_v = N ifft3(dV / w_k)
          for (Index i = 0; i < cin; ++i)
            for (Index k = 0; k < nm; ++k) {
              const Scalar f = n / mult[static_cast<std::size_t>(k)];
              dvf.real[i * nm + k] *= f;
              dvf.imag[i * nm + k] *= f;
            }
          gv->data() += ifft3_partial(dvf, sel.k1, sel.k2, s1, s2, s3).data();
        }
      },
      "spectral_conv");
}

template <typename Scalar>
void init_spectral(ParameterSet<Scalar>& params, const std::string& prefix, Index cin, Index cout, const Modes& modes,
                   std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(2.0 * static_cast<double>(cin)));
  Tensor<Scalar> re(modes.weight_shape(cout, cin)), im(modes.weight_shape(cout, cin));
  for (Index i = 0; i < re.size(); ++i) {
    re[i] = static_cast<Scalar>(normal(rng));
    im[i] = static_cast<Scalar>(normal(rng));
  }
  params[prefix + ".spectral_re"] = std::move(re);
  params[prefix + ".spectral_im"] = std::move(im);
}

enum class Norm { none, instance, adaptive };

inline Norm parse_norm(const std::string& s) {
  if (s == "none") return Norm::none;
  if (s == "instance") return Norm::instance;
  if (s == "adaptive") return Norm::adaptive;
  throw ValidationError("unknown norm '" + s + "' (expected none, instance or adaptive)");
}

inline std::string norm_name(Norm n) {
  switch (n) {
    case Norm::none: return "none";
    case Norm::instance: return "instance";
    case Norm::adaptive: return "adaptive";
  }
  return "none";
}

/// Velocity-conditioned scale and shift: MLP(features(v / velocity_scale)) -> [scale ; shift].
struct AdaInSpec {
  Index channels = 64;
  Index num_frequencies = 8;
  Index hidden = 32;
  double velocity_scale = 70.0;
};

template <typename Scalar>
void init_adain(ParameterSet<Scalar>& params, ParameterSet<Scalar>& buffers, const std::string& prefix, const AdaInSpec& spec,
                std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Tensor<Scalar> freq({spec.num_frequencies, 1});
  for (Index i = 0; i < freq.size(); ++i) freq[i] = static_cast<Scalar>(unit(rng));
  buffers[prefix + ".adain_freq"] = freq;
  const Index f = 2 * spec.num_frequencies;
  auto mat = [&](Index r, Index c, double stdev) {
    std::normal_distribution<double> n(0.0, stdev);
    Tensor<Scalar> w({r, c});
    for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(n(rng));
    return w;
  };
  params[prefix + ".adain_w0"] = mat(spec.hidden, f, 1.0 / std::sqrt(static_cast<double>(f)));
  params[prefix + ".adain_b0"] = Tensor<Scalar>({spec.hidden});
  params[prefix + ".adain_w1"] = mat(2 * spec.channels, spec.hidden, 0.1 / std::sqrt(static_cast<double>(spec.hidden)));
  Tensor<Scalar> b1({2 * spec.channels});
  for (Index c = 0; c < spec.channels; ++c) b1[c] = Scalar(1);  // scale starts at one
  params[prefix + ".adain_b1"] = b1;
}

/// Instance norm (eps = 1e-5) followed by the velocity-conditioned affine map.
template <typename Scalar>
Var<Scalar> adaptive_instance_norm(const Var<Scalar>& v, double velocity, const Bound<Scalar>& p, const ParameterSet<Scalar>& buffers,
                                   const std::string& prefix, const AdaInSpec& spec) {
  const Index c = v.dim(0);
  if (c != spec.channels) throw DimensionError("adaptive_instance_norm: channel count differs from its spec");
  Tape<Scalar>& tape = p.tape();
  Eigen::Matrix<double, 1, 1> x;
  x(0, 0) = velocity / spec.velocity_scale;
  const Var<Scalar> feat = tape.constant(gno::fourier_features<Scalar>(x, buffers.at(prefix + ".adain_freq")));
  const Var<Scalar> h = activation(linear(feat, p[prefix + ".adain_w0"], p[prefix + ".adain_b0"]), Activation::gelu);
  const Var<Scalar> out = linear(h, p[prefix + ".adain_w1"], p[prefix + ".adain_b1"]);
  const Var<Scalar> scale = reshape(slice_last(out, 0, c), {c});
  const Var<Scalar> shift = reshape(slice_last(out, c, c), {c});
  return affine_channels(instance_norm(v, Scalar(1e-5)), scale, shift);
}

struct BlockSpec {
  Index channels = 64;
  Modes modes;
  Norm norm = Norm::adaptive;
  Activation activation = Activation::gelu;
  AdaInSpec adain;
};

template <typename Scalar>
void init_block(ParameterSet<Scalar>& params, ParameterSet<Scalar>& buffers, const std::string& prefix, const BlockSpec& spec,
                std::mt19937_64& rng) {
  const Index c = spec.channels;
  init_spectral(params, prefix, c, c, spec.modes, rng);
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(c)));
  Tensor<Scalar> w({c, c});
  for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(n(rng));
  params[prefix + ".skip_w"] = std::move(w);
  params[prefix + ".skip_b"] = Tensor<Scalar>({c});
  if (spec.norm == Norm::adaptive) {
    AdaInSpec a = spec.adain;
    a.channels = c;
    init_adain(params, buffers, prefix, a, rng);
  }
}

/// sigma(norm(W v + b + C(v))).
template <typename Scalar>
Var<Scalar> fno_block(const Var<Scalar>& v, const Bound<Scalar>& p, const ParameterSet<Scalar>& buffers, const std::string& prefix,
                      const BlockSpec& spec, double velocity = 0.0) {
  Var<Scalar> pre = add(channel_linear(v, p[prefix + ".skip_w"], p[prefix + ".skip_b"]),
                        spectral_conv(v, p[prefix + ".spectral_re"], p[prefix + ".spectral_im"], spec.modes));
  switch (spec.norm) {
    case Norm::none: break;
    case Norm::instance: pre = instance_norm(pre, Scalar(1e-5)); break;
    case Norm::adaptive: {
      AdaInSpec a = spec.adain;
      a.channels = spec.channels;
      pre = adaptive_instance_norm(pre, velocity, p, buffers, prefix, a);
      break;
    }
  }
  return activation(pre, spec.activation);
}

}  // namespace gino::fno
