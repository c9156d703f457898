#include "doctest.h"
#include "grad_check.hpp"

#include "gino/ops.hpp"

#include <random>

using namespace gino;
using gino::testing::check_gradients;

namespace {

Tensor<double> randn(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.dim(-1) == 4);
  CHECK(t.channel_view().rows() == 2);
  CHECK(t.rows_view().rows() == 6);
  CHECK_THROWS_AS(t.reshaped({5, 5}), DimensionError);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, {1.f, 2.f, 3.f}), DimensionError);
  CHECK_THROWS_AS(t.item(), ContractError);
  CHECK(Tensor<double>::scalar(3.5).item() == 3.5);
}

TEST_CASE("tape contract errors") {
  Tape<double> tape;
  auto x = tape.leaf(randn({3}, 1), true);
  CHECK_THROWS_AS(tape.backward(x), ContractError);  // not scalar
  auto s = sum(x);
  tape.backward(s);
  CHECK(tape.grad(x.id()).data().isApproxToConstant(1.0));
  CHECK_THROWS_AS(tape.backward(s), ContractError);

  Tape<double> empty;
  CHECK_THROWS_AS(empty.leaf(Tensor<double>({1}, {std::nan("")})), NumericalError);
}

TEST_CASE("elementwise and reduction gradients") {
  ParameterSet<double> p{{"a", randn({2, 3}, 2)}, {"b", randn({2, 3}, 3)}};
  auto rep = check_gradients(p, [](const Bound<double>& b) {
    auto y = mul(add(b["a"], b["b"]), sub(b["a"], scale(b["b"], 0.5)));
    y = add_scalar(abs(y), 0.25);
    return add(mean(y), squared_norm(activation(b["b"], Activation::gelu)));
  });
  CHECK_MESSAGE(rep.worst < 1e-5, rep.where);
}

TEST_CASE("linear and channel_linear gradients") {
  ParameterSet<double> p{{"x", randn({4, 3}, 4)}, {"w", randn({5, 3}, 5)}, {"b", randn({5}, 6)},
                         {"g", randn({3, 2, 2, 2}, 7)}, {"wc", randn({4, 3}, 8)}, {"bc", randn({4}, 9)}};
  auto rep = check_gradients(p, [](const Bound<double>& b) {
    auto y = linear(b["x"], b["w"], b["b"]);
    auto z = channel_linear(b["g"], b["wc"], b["bc"]);
    return add(squared_norm(activation(y, Activation::gelu)), squared_norm(z));
  });
  CHECK_MESSAGE(rep.worst < 1e-5, rep.where);
}

TEST_CASE("linear rows do not depend on batch size") {
  Tape<float> tape;
  Tensor<float> x({7, 5});
  for (Index i = 0; i < x.size(); ++i) x[i] = std::sin(0.37f * static_cast<float>(i));
  Tensor<float> w({6, 5});
  for (Index i = 0; i < w.size(); ++i) w[i] = std::cos(0.11f * static_cast<float>(i));
  auto full = linear(tape.constant(x), tape.constant(w));
  for (Index r = 0; r < 7; ++r) {
    Tensor<float> row({1, 5});
    for (Index j = 0; j < 5; ++j) row[j] = x[r * 5 + j];
    auto one = linear(tape.constant(row), tape.constant(w));
    for (Index j = 0; j < 6; ++j) CHECK(one.value()[j] == full.value()[r * 6 + j]);
  }
}

TEST_CASE("edge op gradients") {
  const std::vector<Index> idx{0, 2, 2, 1, 0};
  const std::vector<Index> offsets{0, 2, 2, 5};
  ParameterSet<double> p{{"x", randn({3, 2}, 10)}, {"k", randn({5, 6}, 11)}, {"v", randn({5, 2}, 12)}};
  auto rep = check_gradients(p, [&](const Bound<double>& b) {
    auto g = gather_rows(b["x"], idx);
    auto kv = batched_matvec(b["k"], add(g, b["v"]), 3);
    return squared_norm(segment_sum(kv, offsets, 0.3));
  });
  CHECK_MESSAGE(rep.worst < 1e-5, rep.where);
}

TEST_CASE("segment_sum gives zero rows for empty segments") {
  Tape<double> tape;
  auto x = tape.constant(randn({2, 3}, 13));
  const std::vector<Index> offsets{0, 0, 2, 2};
  auto y = segment_sum(x, offsets);
  CHECK(y.value().matrix(3, 3).row(0).isZero());
  CHECK(y.value().matrix(3, 3).row(2).isZero());
}

TEST_CASE("normalization and shape op gradients") {
  ParameterSet<double> p{{"x", randn({3, 4, 2}, 14)}, {"s", randn({3}, 15)}, {"h", randn({3}, 16)},
                         {"y", randn({2, 4}, 17)}};
  auto rep = check_gradients(p, [](const Bound<double>& b) {
    auto n = affine_channels(instance_norm(b["x"], 1e-5), b["s"], b["h"]);
    auto w = dot_constant(n, randn({24}, 18));
    auto c = concat_cols<double>({transpose2d(b["y"]), slice_last(transpose2d(b["y"]), 1, 1)});
    auto r = reshape(concat0<double>({b["y"], b["y"]}), {16});
    return add(add(w, squared_norm(c)), mul(sum(r), sum(r)));
  });
  CHECK_MESSAGE(rep.worst < 1e-5, rep.where);
}

TEST_CASE("instance_norm of a constant channel is zero") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>::constant({2, 5}, 3.0));
  auto y = instance_norm(x);
  CHECK(y.value().data().isZero());
}

TEST_CASE("relative_l2 gradient and zero-target error") {
  const Tensor<double> target = randn({10}, 19);
  ParameterSet<double> p{{"x", randn({10}, 20)}};
  auto rep = check_gradients(p, [&](const Bound<double>& b) { return relative_l2(b["x"], target); });
  CHECK_MESSAGE(rep.worst < 1e-5, rep.where);
  Tape<double> tape;
  CHECK_THROWS_AS(relative_l2(tape.leaf(target, true), Tensor<double>({10})), ValidationError);
}

TEST_CASE("gelu matches the erf definition") {
  CHECK(activate(0.0, Activation::gelu) == doctest::Approx(0.0));
  CHECK(activate(1.0, Activation::gelu) == doctest::Approx(0.8413447460685429));
  CHECK(activate(-2.0, Activation::relu) == 0.0);
  CHECK_THROWS_AS(parse_activation("swish"), ValidationError);
}
