// Copyright 2026 The svlp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "svlp/checkpoint.hpp"
#include "svlp/gradcheck.hpp"
#include "svlp/tape.hpp"
#include "test_util.hpp"

namespace svlp {
namespace {

using testing::random_tensor;

TEST(Ops, MatmulIdentity) {
  CounterRng rng(1);
  Tape<double> tape;
  auto a = random_tensor<double>({3, 3}, rng);
  auto eye = Tensor<double>::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto out = matmul(tape.constant(eye), tape.constant(a));
  EXPECT_EQ(out.value(), a);
}

TEST(Ops, MatmulMatchesNaiveTripleLoop) {
  CounterRng rng(2);
  auto a = random_tensor<float>({4, 5}, rng);
  auto b = random_tensor<float>({5, 2}, rng);
  Tape<float> tape;
  auto out = matmul(tape.constant(a), tape.constant(b)).value();
  ASSERT_EQ(out.shape(), (Shape{4, 2}));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 5; ++k) acc += double(a.at(i, k)) * double(b.at(k, j));
      EXPECT_NEAR(out.at(i, j), acc, 1e-6);
    }
  }
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  Tape<double> tape;
  auto y = softmax(tape.constant(Tensor<double>::vector({0, 0}))).value();
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Ops, SoftmaxAxisZeroNormalizesColumns) {
  CounterRng rng(3);
  Tape<double> tape;
  auto y = softmax(tape.constant(random_tensor<double>({3, 4}, rng)), 0).value();
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0;
    for (std::size_t r = 0; r < 3; ++r) s += y.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Ops, ShapeMismatchThrows) {
  Tape<float> tape;
  auto a = tape.constant(Tensor<float>({2, 3}));
  auto b = tape.constant(Tensor<float>({2, 3}));
  EXPECT_THROW(matmul(a, b), ShapeError);
  EXPECT_THROW(add(a, tape.constant(Tensor<float>({4}))), ShapeError);
}

TEST(Ops, NonFiniteOutputThrows) {
  Tape<float> tape;
  auto a = tape.constant(Tensor<float>::vector({1000.0f}));
  EXPECT_THROW(exp(a), NumericError);
}

TEST(Ops, L2NormalizeUnitNorm) {
  CounterRng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Tape<float> tape;
    auto y = l2_normalize(tape.constant(random_tensor<float>({3, 17}, rng, 5.0))).value();
    for (std::size_t r = 0; r < 3; ++r) {
      double ss = 0;
      for (float v : y.row(r)) ss += double(v) * v;
      EXPECT_NEAR(std::sqrt(ss), 1.0, 1e-6);
    }
  }
}

TEST(Ops, L2NormalizeZeroVectorIsError) {
  Tape<double> tape;
  EXPECT_THROW(l2_normalize(tape.constant(Tensor<double>({1, 4}))), NumericError);
}

TEST(Backward, ConstantLossHasZeroGradients) {
  ParameterStore<double> store;
  store.add("w", Tensor<double>::vector({1, 2, 3}));
  Tape<double> tape;
  tape.param(store, "w");
  auto loss = tape.constant(Tensor<double>::scalar(4.0));
  auto g = tape.backward(loss);
  for (std::size_t i = 0; i < store.size(); ++i) EXPECT_EQ(g[i], 0.0);
}

TEST(Backward, LinearLossGradientIsInput) {
  ParameterStore<double> store;
  store.add("w", Tensor<double>::vector({0.5, -1.0, 2.0}));
  const auto x = Tensor<double>::vector({3.0, 7.0, -2.0});
  Tape<double> tape;
  auto loss = sum(mul(tape.param(store, "w"), tape.constant(x)));
  auto g = tape.backward(loss);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g[i], x[i]);
}

TEST(Backward, SoftmaxCrossEntropyMatchesFiniteDifferences) {
  CounterRng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    ParameterStore<double> store;
    store.add("z", random_tensor<double>({1, 2}, rng));
    const int y = static_cast<int>(rng.below(2));
    const int labels[1] = {y};
    Tape<double> tape;
    auto g = tape.backward(cross_entropy(tape.param(store, "z"), std::span<const int>(labels)));
    auto loss_at = [&](std::size_t i, double delta) {
      auto s2 = store;
      s2.set_value_at(i, s2.value_at(i) + delta);
      Tape<double> t2;
      return cross_entropy(t2.param(s2, "z"), std::span<const int>(labels)).value()[0];
    };
    const auto& z = store.get("z");
    const double p1 = 1.0 / (1.0 + std::exp(z[0] - z[1]));
    const double p[2] = {1.0 - p1, p1};
    for (std::size_t i = 0; i < 2; ++i) {
      const double fd = (loss_at(i, 1e-6) - loss_at(i, -1e-6)) / 2e-6;
      EXPECT_NEAR(g[i], fd, 1e-6);
      EXPECT_NEAR(g[i], p[i] - (static_cast<int>(i) == y ? 1.0 : 0.0), 1e-12);
    }
  }
}

TEST(Backward, UnreachableParameterGetsZero) {
  ParameterStore<double> store;
  store.add("a", Tensor<double>::vector({1, 2}));
  store.add("b", Tensor<double>::vector({3}));
  Tape<double> tape;
  tape.param(store, "b");
  auto g = tape.backward(sum(square(tape.param(store, "a"))));
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[0], 2.0);
}

TEST(Backward, AccumulatesAcrossReuse) {
  ParameterStore<double> store;
  store.add("w", Tensor<double>::vector({3.0}));
  Tape<double> tape;
  auto w = tape.param(store, "w");
  auto g = tape.backward(sum(add(mul(w, w), w)));
  EXPECT_EQ(g[0], 7.0);
}

TEST(Backward, NonScalarLossAndConsumedTapeAreErrors) {
  ParameterStore<double> store;
  store.add("w", Tensor<double>::vector({1.0, 2.0}));
  Tape<double> tape;
  auto w = tape.param(store, "w");
  EXPECT_THROW(tape.backward(w), ShapeError);
  auto loss = sum(w);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), UsageError);
  tape.clear();
  auto loss2 = tape.constant(Tensor<double>::scalar(1.0));
  EXPECT_NO_THROW(tape.backward(loss2));
}

TEST(Backward, FrozenEntryNeverEntersTheGraph) {
  ParameterStore<double> store;
  store.add("w", Tensor<double>::vector({1.0, 2.0}));
  store.set_frozen("w", true);
  Tape<double> tape;
  auto w = tape.param(store, "w");
  EXPECT_FALSE(tape.requires_grad(w.id()));
  auto g = tape.backward(sum(square(w)));
  EXPECT_EQ(g.size(), 0u);
  EXPECT_EQ(g[0], 0.0);
}

TEST(GradCheck, QuadraticIsExact) {
  CounterRng rng(6);
  ParameterStore<double> store;
  store.add("theta", random_tensor<double>({10}, rng));
  LossFn<double> loss = [](Tape<double>& t, const ParameterStore<double>& s) {
    return scale(sum(square(t.param(s, "theta"))), 0.5);
  };
  std::vector<std::size_t> sample(10);
  for (std::size_t i = 0; i < 10; ++i) sample[i] = i;
  auto report = finite_diff_check<double>(loss, store, 1e-4, sample);
  EXPECT_LT(report.max_rel_error, 1e-8);
  EXPECT_EQ(report.checked, 10u);
}

TEST(GradCheck, EmptySampleIsVacuous) {
  ParameterStore<double> store;
  store.add("theta", Tensor<double>::vector({1.0}));
  LossFn<double> loss = [](Tape<double>& t, const ParameterStore<double>& s) { return sum(t.param(s, "theta")); };
  auto report = finite_diff_check<double>(loss, store, 1e-4, {});
  EXPECT_EQ(report.max_rel_error, 0.0);
}

TEST(GradCheck, DetectsNonDeterministicLoss) {
  ParameterStore<double> store;
  store.add("theta", Tensor<double>::vector({1.0}));
  int calls = 0;
  LossFn<double> loss = [&](Tape<double>& t, const ParameterStore<double>& s) {
    ++calls;
    return scale(sum(t.param(s, "theta")), static_cast<double>(calls));
  };
  std::vector<std::size_t> sample{0};
  EXPECT_THROW(finite_diff_check<double>(loss, store, 1e-4, sample), UsageError);
}

// Every composite primitive checked against central differences in 64-bit.
TEST(GradCheck, EveryPrimitiveMatchesFiniteDifferences) {
  CounterRng rng(7);
  ParameterStore<double> store;
  store.add("x", random_tensor<double>({6, 8}, rng));
  store.add("w", random_tensor<double>({8, 24}, rng, 0.3));
  store.add("g", random_tensor<double>({8}, rng));
  store.add("b", random_tensor<double>({8}, rng));
  store.add("s", Tensor<double>::scalar(0.3));
  store.add("tbl", random_tensor<double>({5, 8}, rng));
  const int labels[6] = {0, 1, 2, 1, 0, 2};
  LossFn<double> loss = [&](Tape<double>& t, const ParameterStore<double>& s) {
    auto x = t.param(s, "x");
    auto h = layer_norm(x, t.param(s, "g"), t.param(s, "b"));
    auto qkv = matmul(h, t.param(s, "w"));
    auto att = attention(qkv, 2, 3, 2);
    auto act = gelu(add(att, t.param(s, "b")));
    auto emb = gather_rows(t.param(s, "tbl"), {4, 0, 0, 2, 1, 3});
    auto mixed = add(act, mul(emb, sub(act, x)));
    auto nrm = l2_normalize(concat_rows<double>({slice_rows(mixed, 0, 4), slice_rows(mixed, 4, 2)}));
    auto logits = scale_by(matmul_nt(nrm, slice_rows(t.param(s, "tbl"), 0, 3)), exp(t.param(s, "s")));
    auto sm = softmax(transpose(logits), 0);
    auto ce = cross_entropy(logits, std::span<const int>(labels));
    return add(add(ce, scale(sum(square(sm)), 0.1)), pick(sum(x), 0));
  };
  std::vector<std::size_t> sample(store.size());
  for (std::size_t i = 0; i < sample.size(); ++i) sample[i] = i;
  auto report = finite_diff_check<double>(loss, store, 1e-5, sample);
  EXPECT_LT(report.max_rel_error, 1e-4) << "worst index " << report.worst_index << " analytic "
                                        << report.worst_analytic << " numeric " << report.worst_numeric;
}

TEST(ParameterStore, FlatIndexAndPenalizableSet) {
  ParameterStore<float> store;
  store.add("image.w", Tensor<float>({2, 3}));
  store.add("prompt.da", Tensor<float>({4}));
  store.add("text.w", Tensor<float>({5}));
  store.add("alpha.1", Tensor<float>({4}));
  EXPECT_EQ(store.size(), 19u);
  EXPECT_EQ(store.global_index("text.w", 2), 12u);
  EXPECT_EQ(store.locate(12), (std::pair<std::size_t, std::size_t>{2, 2}));
  EXPECT_EQ(store.penalizable_size(), 11u);
  auto s = store.penalizable_indices();
  ASSERT_EQ(s.size(), 11u);
  EXPECT_EQ(s[5], 5u);
  EXPECT_EQ(s[6], 10u);
  // Offsets never move when later entries are added.
  store.add("alpha.2", Tensor<float>({4}));
  EXPECT_EQ(store.global_index("text.w", 2), 12u);
  EXPECT_THROW(store.add("alpha.2", Tensor<float>({1})), UsageError);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  CounterRng rng(8);
  ParameterStore<float> store;
  store.add("image.w", random_tensor<float>({3, 4}, rng));
  store.add("prompt.visual.1", random_tensor<float>({2, 4}, rng));
  store.add("logit_scale", Tensor<float>::scalar(2.3f));
  Checkpoint c1;
  store.save(c1);
  c1.put("fisher.1", random_tensor<double>({12}, rng));
  c1.put_mask("important_set.1", {1, 0, 1});
  c1.put_text("meta", "mode=svlp\n");
  const auto bytes1 = c1.serialize();
  auto c2 = Checkpoint::deserialize(bytes1);
  ParameterStore<float> loaded;
  loaded.load(c2, [](std::string_view n) { return !n.starts_with("fisher."); });
  EXPECT_EQ(loaded.entry_count(), 3u);
  EXPECT_EQ(loaded.global_index("logit_scale", 0), store.global_index("logit_scale", 0));
  EXPECT_EQ(c2.serialize(), bytes1);
  EXPECT_EQ(c2.text("meta"), "mode=svlp\n");
  EXPECT_EQ(c2.mask("important_set.1"), (std::vector<std::uint8_t>{1, 0, 1}));
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  Checkpoint c;
  c.put("x", Tensor<float>({8}));
  auto bytes = c.serialize();
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  try {
    Checkpoint::deserialize(truncated);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("expected"), std::string::npos);
  }
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(Checkpoint::deserialize(bad), FormatError);
  auto wrong_version = bytes;
  wrong_version[4] = 9;
  EXPECT_THROW(Checkpoint::deserialize(wrong_version), FormatError);
}

TEST(Checkpoint, LayoutIsLittleEndianWithDocumentedHeader) {
  Checkpoint c;
  c.put("ab", Tensor<float>::vector({1.0f}));
  auto b = c.serialize();
  // magic(4) version(4) count(4) namelen(4) name(2) dtype(1) ndim(4) dim(4) data(4)
  ASSERT_EQ(b.size(), 31u);
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[12], 2);
  EXPECT_EQ(b[18], 0);
  EXPECT_EQ(b[19], 1);
  EXPECT_EQ(b[23], 1);
  EXPECT_EQ(b[30], 0x3F);
}

}  // namespace
}  // namespace svlp
