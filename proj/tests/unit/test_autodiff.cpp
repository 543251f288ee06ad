// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gradcheck.hpp"
#include "vcwe/adam.hpp"
#include "vcwe/archive.hpp"
#include "vcwe/error.hpp"
#include "vcwe/ops.hpp"

using namespace vcwe;
using namespace vcwe::ad;

TEST(Backward, DotOfSelf) {
  Parameter w("w", Tensor::vector({1, 2}));
  Graph g;
  Var x = g.parameter(w);
  const auto grads = g.backward(dot(x, x));
  EXPECT_EQ(grads.to_dense(w), Tensor::vector({2, 4}));
}

TEST(Backward, SigmoidAtZero) {
  Parameter w("w", Tensor::vector({1, 1, 0})), c("c", Tensor::vector({2, -2, 5}));
  Graph g;
  const auto grads = g.backward(sigmoid(dot(g.parameter(w), g.parameter(c))));
  const Tensor d = grads.to_dense(w);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(d[i], 0.25 * c.value()[i]);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Parameter a("a", Tensor::vector({3}));
  Graph g;
  Var x = g.parameter(a);
  Var y = mul(x, x);                    // x^2
  Var z = add(mul(y, x), scale(y, 2));  // x^3 + 2x^2
  const auto grads = g.backward(sum(z));
  EXPECT_DOUBLE_EQ(grads.to_dense(a)[0], 3 * 9 + 4 * 3);
}

TEST(Backward, ParametersAreNotMutatedAndRepeatable) {
  Parameter a("a", testkit::random_tensor({4}, 1));
  const Tensor before = a.value();
  Graph g;
  Var loss = sum(tanh(g.parameter(a)));
  const auto first = g.backward(loss);
  EXPECT_EQ(a.value(), before);
  Graph h;
  const auto second = h.backward(sum(tanh(h.parameter(a))));
  EXPECT_EQ(first.to_dense(a), second.to_dense(a));
}

TEST(Backward, ConstantsGetNoGradients) {
  Graph g;
  Var c = g.constant(Tensor::vector({1, 2}));
  const auto grads = g.backward(dot(c, c));
  EXPECT_TRUE(grads.dense.empty());
  EXPECT_TRUE(grads.sparse.empty());
}

TEST(Backward, MixingGraphsIsRejected) {
  Graph g, h;
  Var a = g.constant(Tensor::vector({1}));
  Var b = h.constant(Tensor::vector({1}));
  EXPECT_THROW(add(a, b), StateError);
  EXPECT_THROW(g.backward(sum(b)), StateError);
}

TEST(Graph, FiniteCheckTrips) {
  Graph g(true);
  Var x = g.constant(Tensor::vector({1e300}));
  EXPECT_THROW(mul(x, x), NumericError);
  Graph quiet(false);
  Var y = quiet.constant(Tensor::vector({1e300}));
  EXPECT_FALSE(mul(y, y).value().all_finite());
}

TEST(Gradients, ClipGlobalNorm) {
  Parameter a("a", Tensor::vector({0, 0})), t("t", Tensor(Shape{3, 2}), true);
  Gradients grads;
  grads.dense_for(a) = Tensor::vector({3, 0});
  grads.sparse_for(t)[1] = {0, 4};
  EXPECT_DOUBLE_EQ(grads.squared_norm(), 25.0);
  EXPECT_DOUBLE_EQ(grads.clip_global_norm(1.0), 5.0);
  EXPECT_NEAR(grads.squared_norm(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(grads.clip_global_norm(10.0), 1.0);  // below the limit: untouched
  EXPECT_NEAR(grads.to_dense(t).at(1, 1), 0.8, 1e-15);
}

TEST(Forward, BitIdenticalReruns) {
  const Tensor x = testkit::random_tensor({2, 1, 9, 9}, 3), k = testkit::random_tensor({3, 1, 3, 3}, 4);
  auto run = [&] {
    Graph g;
    return sum(tanh(conv2d(g.constant(x), g.constant(k), g.constant(Tensor(Shape{3}))))).value().item();
  };
  EXPECT_EQ(run(), run());
}

// --------------------------------------------------------------------- Adam

TEST(Adam, ZeroGradientLeavesParameters) {
  Parameter p("p", testkit::random_tensor({3}, 1));
  const Tensor before = p.value();
  Adam adam;
  Gradients grads;
  grads.dense_for(p) = Tensor(Shape{3});
  adam.step(grads);
  EXPECT_EQ(p.value(), before);
  EXPECT_EQ(adam.step_count(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p("p", Tensor::vector({0.5, -1.0, 2.0}));
  Adam adam(AdamOptions{1e-3});
  Gradients grads;
  grads.dense_for(p) = Tensor::vector({0.3, -7.0, 1e-2});
  adam.step(grads);
  EXPECT_NEAR(p.value()[0], 0.5 - 1e-3, 1e-9);
  EXPECT_NEAR(p.value()[1], -1.0 + 1e-3, 1e-9);
  EXPECT_NEAR(p.value()[2], 2.0 - 1e-3, 1e-8);
}

TEST(Adam, TwoStepsMatchReference) {
  const AdamOptions o{0.01, 0.8, 0.95, 1e-8};
  Parameter p("p", Tensor::vector({1.0, -2.0}));
  Adam adam(o);
  const double g1[] = {0.4, -0.1}, g2[] = {-0.2, 0.3};
  double ref[] = {1.0, -2.0}, m[] = {0, 0}, v[] = {0, 0};
  for (int step = 1; step <= 2; ++step) {
    const double* g = step == 1 ? g1 : g2;
    Gradients grads;
    grads.dense_for(p) = Tensor::vector({g[0], g[1]});
    adam.step(grads);
    for (int i = 0; i < 2; ++i) {
      m[i] = o.beta1 * m[i] + (1 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1 - o.beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(o.beta1, step)), vh = v[i] / (1 - std::pow(o.beta2, step));
      ref[i] -= o.learning_rate * mh / (std::sqrt(vh) + o.epsilon);
    }
  }
  EXPECT_NEAR(p.value()[0], ref[0], 1e-12);
  EXPECT_NEAR(p.value()[1], ref[1], 1e-12);
  EXPECT_EQ(adam.step_count(), 2u);
}

TEST(Adam, SparseRowsOnlyTouchTheirRows) {
  Parameter table("t", testkit::random_tensor({5, 2}, 2), true);
  const Tensor before = table.value();
  Adam adam;
  Graph g;
  const std::size_t rows[] = {3, 1};
  adam.step(g.backward(sum(g.lookup(table, rows))));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t j = 0; j < 2; ++j) {
      if (r == 1 || r == 3)
        EXPECT_NE(table.value().at(r, j), before.at(r, j));
      else
        EXPECT_EQ(table.value().at(r, j), before.at(r, j));
    }
  for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(adam.moments().at("t").m.at(0, j), 0.0);
}

// ------------------------------------------------------------------ archive

namespace {

std::string sample_archive() {
  const Tensor a = testkit::random_tensor({2, 3}, 5), s = Tensor::scalar(-0.0);
  std::ostringstream out;
  write_archive(out, "TEST1", {{"note", "x"}}, {{"a", &a}, {"s", &s}});
  return out.str();
}

}  // namespace

TEST(Archive, RoundTripIsBitExact) {
  const std::string bytes = sample_archive();
  std::istringstream in(bytes);
  const Archive ar = read_archive(in, "TEST1");
  EXPECT_EQ(ar.meta.at("note"), "x");
  EXPECT_EQ(ar.order, (std::vector<std::string>{"a", "s"}));
  EXPECT_EQ(ar.at("a"), testkit::random_tensor({2, 3}, 5));
  EXPECT_TRUE(std::signbit(ar.at("s").item()));
  EXPECT_THROW(ar.at("missing"), FormatError);
}

TEST(Archive, VersionByteAndTruncation) {
  std::string bytes = sample_archive();
  std::string wrong = bytes;
  wrong[4] = '2';
  std::istringstream in_wrong(wrong);
  EXPECT_THROW(read_archive(in_wrong, "TEST1"), VersionError);

  std::string foreign = bytes;
  foreign[0] = 'X';
  std::istringstream in_foreign(foreign);
  EXPECT_THROW(read_archive(in_foreign, "TEST1"), FormatError);

  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    std::istringstream in(bytes.substr(0, cut));
    EXPECT_THROW(read_archive(in, "TEST1"), FormatError) << cut;
  }
}

TEST(Archive, LittleEndianLayout) {
  const Tensor one = Tensor::vector({1.0});
  std::ostringstream out;
  write_archive(out, "TEST1", nlohmann::json::object(), {{"x", &one}});
  const std::string bytes = out.str();
  // 1.0 = 0x3FF0000000000000, least significant byte first
  EXPECT_EQ(bytes.substr(bytes.size() - 8), std::string("\0\0\0\0\0\0\xF0\x3F", 8));
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(bytes[5 + i]);
  EXPECT_EQ(bytes.size(), 5 + 8 + len + 8);
}
