#pragma once

// Test-side reference computations. Deliberately naive: loops over everything, double
// precision, no shared code with the library beyond the basic containers.

#include "gino/geometry.hpp"
#include "gino/tensor.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace gino::oracle {

inline Points3 uniform_points(Index n, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Points3 p(n, 3);
  for (Index i = 0; i < n; ++i) p.row(i) << u(rng), u(rng), u(rng);
  return p;
}

/// Sorted neighbour lists by exhaustive distance test, closed ball.
inline std::vector<std::vector<Index>> radius_neighbours(const Points3& points, const Points3& queries, double r) {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(queries.rows()));
  for (Index q = 0; q < queries.rows(); ++q)
    for (Index i = 0; i < points.rows(); ++i) {
      double d2 = 0;
      for (int a = 0; a < 3; ++a) d2 += (queries(q, a) - points(i, a)) * (queries(q, a) - points(i, a));
      if (d2 <= r * r) out[static_cast<std::size_t>(q)].push_back(i);
    }
  return out;
}

/// Regular grid on [-1, 1]^3, first axis slowest.
inline Points3 grid_points(Index S) {
  Points3 p(S * S * S, 3);
  const double h = 2.0 / double(S - 1);
  Index n = 0;
  for (Index i = 0; i < S; ++i)
    for (Index j = 0; j < S; ++j)
      for (Index k = 0; k < S; ++k) p.row(n++) << -1 + h * double(i), -1 + h * double(j), -1 + h * double(k);
  return p;
}

/// Matrix-valued kernel with entries sin(a_j . x + b_j . y + c_j), j = row-major (out, in).
struct AnalyticKernel {
  Eigen::MatrixXd a, b;
  Eigen::VectorXd c;

  AnalyticKernel(Index dim, std::mt19937_64& rng) : a(dim, 3), b(dim, 3), c(dim) {
    std::uniform_real_distribution<double> u(-2, 2);
    for (Index j = 0; j < dim; ++j) {
      a.row(j) << u(rng), u(rng), u(rng);
      b.row(j) << u(rng), u(rng), u(rng);
      c[j] = u(rng);
    }
  }
  double value(Index j, const Vec3& x, const Vec3& y) const { return std::sin(a.row(j).dot(x) + b.row(j).dot(y) + c[j]); }
};

/// Periodic convolution kernel of a truncated multiplier on an S^3 grid, [cout, cin, S^3]:
/// K(x) = (1/N) sum over retained half-spectrum frequencies of mult * Re(w e^{i k.x}).
/// On an even axis -S/2 and +S/2 are one frequency; only the +S/2 slot is used.
inline std::vector<double> multiplier_kernel(const Tensor<double>& re, const Tensor<double>& im, Index m1, Index m2, Index m3, Index S) {
  const Index cout = re.dim(0), cin = re.dim(1), N = S * S * S, slots = (2 * m1 - 1) * (2 * m2 - 1) * m3;
  std::vector<double> K(static_cast<std::size_t>(cout * cin * N));
  for (Index o = 0; o < cout; ++o)
    for (Index i = 0; i < cin; ++i)
      for (Index g1 = -(m1 - 1); g1 < m1; ++g1)
        for (Index g2 = -(m2 - 1); g2 < m2; ++g2)
          for (Index g3 = 0; g3 < m3; ++g3) {
            if (2 * g1 == -S || 2 * g2 == -S) continue;
            const Index w = (o * cin + i) * slots + ((g1 + m1 - 1) * (2 * m2 - 1) + (g2 + m2 - 1)) * m3 + g3;
            const double mult = (g3 == 0 || 2 * g3 == S) ? 1.0 : 2.0;
            for (Index a = 0; a < S; ++a)
              for (Index b = 0; b < S; ++b)
                for (Index c = 0; c < S; ++c) {
                  const double ph = 2 * M_PI * double(g1 * a + g2 * b + g3 * c) / double(S);
                  K[static_cast<std::size_t>((o * cin + i) * N + (a * S + b) * S + c)] +=
                      mult * (re[w] * std::cos(ph) - im[w] * std::sin(ph)) / double(N);
                }
          }
  return K;
}

/// y_o(x) = sum_i sum_z K_oi(x - z) v_i(z), periodic.
inline Tensor<double> circular_convolution(const std::vector<double>& K, const Tensor<double>& v, Index cout) {
  const Index cin = v.dim(0), S = v.dim(1), N = S * S * S;
  Tensor<double> y({cout, S, S, S});
  for (Index o = 0; o < cout; ++o)
    for (Index a = 0; a < S; ++a)
      for (Index b = 0; b < S; ++b)
        for (Index c = 0; c < S; ++c) {
          double acc = 0;
          for (Index i = 0; i < cin; ++i)
            for (Index p = 0; p < S; ++p)
              for (Index q = 0; q < S; ++q)
                for (Index r = 0; r < S; ++r) {
                  const Index d = (((a - p + S) % S) * S + (b - q + S) % S) * S + (c - r + S) % S;
                  acc += K[static_cast<std::size_t>((o * cin + i) * N + d)] * v[((i * S + p) * S + q) * S + r];
                }
          y[((o * S + a) * S + b) * S + c] = acc;
        }
  return y;
}

/// Sum of cosines with integer frequencies on the periodic S-grid.
inline Tensor<double> band_limited(Index c, Index S, const std::vector<std::array<int, 3>>& freqs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor<double> t({c, S, S, S});
  for (Index ch = 0; ch < c; ++ch)
    for (const auto& f : freqs) {
      const double amp = u(rng), ph = u(rng) * M_PI;
      for (Index i = 0; i < S; ++i)
        for (Index j = 0; j < S; ++j)
          for (Index k = 0; k < S; ++k)
            t[((ch * S + i) * S + j) * S + k] += amp * std::cos(2 * M_PI * double(f[0] * i + f[1] * j + f[2] * k) / double(S) + ph);
    }
  return t;
}

/// Pressure integral sum_f p_f (n_f . d) A_f with p_f the vertex average, over a triangle list.
inline double pressure_force(const Points3& v, const Faces& f, const Eigen::VectorXd& p,
                             const Vec3& d) {
  double acc = 0;
  for (Index t = 0; t < f.rows(); ++t) {
    const Vec3 a = v.row(f(t, 0)), b = v.row(f(t, 1)), c = v.row(f(t, 2));
    const Vec3 area_normal = 0.5 * (b - a).cross(c - a);  // |.| = area, direction = outward normal
    acc += (p[f(t, 0)] + p[f(t, 1)] + p[f(t, 2)]) / 3.0 * area_normal.dot(d);
  }
  return acc;
}

}  // namespace gino::oracle
