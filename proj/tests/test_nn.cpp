#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "sou/error.hpp"
#include "sou/nn.hpp"
#include "support.hpp"

using namespace sou;
using namespace sou::nn;

namespace {

// Naive 3x3 same-padding convolution for one sample.
std::vector<double> naive_conv(const Conv3x3& c, const std::vector<double>& x, std::size_t h,
                               std::size_t w) {
  std::vector<double> y(c.out_ch * h * w);
  for (std::size_t o = 0; o < c.out_ch; ++o)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double acc = c.bias[o];
        for (std::size_t ci = 0; ci < c.in_ch; ++ci)
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
              const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
              if (ii < 0 || jj < 0 || ii >= static_cast<long>(h) || jj >= static_cast<long>(w)) continue;
              acc += c.weight[((o * c.in_ch + ci) * 3 + (di + 1)) * 3 + (dj + 1)] *
                     x[(ci * h + ii) * w + jj];
            }
        y[(o * h + i) * w + j] = acc;
      }
  return y;
}

}  // namespace

TEST(Layers, ConvMatchesNaive) {
  ModelGraph m;
  m.input_shape = {3, 5, 7};
  Conv3x3 c;
  c.in_ch = 3;
  c.out_ch = 4;
  c.weight = test::random_input({4 * 3 * 9}, 1).data;
  c.bias = test::random_input({4}, 2).data;
  m.layers.push_back(c);
  const Tensor x = test::random_input({2, 3, 5, 7}, 3);
  const Tensor y = forward(m, x, Mode::eval).logits;
  ASSERT_EQ(y.shape, (std::vector<std::size_t>{2, 4, 5, 7}));
  for (std::size_t n = 0; n < 2; ++n) {
    const std::vector<double> xs(x.data.begin() + n * 105, x.data.begin() + (n + 1) * 105);
    const auto ref = naive_conv(c, xs, 5, 7);
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(y.data[n * 140 + i], ref[i], 1e-12);
  }
}

TEST(Layers, MaxPoolDropsOddEdge) {
  ModelGraph m;
  m.input_shape = {1, 3, 5};
  m.layers.push_back(MaxPool2x2{});
  Tensor x({1, 1, 3, 5});
  for (std::size_t i = 0; i < 15; ++i) x.data[i] = static_cast<double>(i);
  const Tensor y = forward(m, x, Mode::eval).logits;
  ASSERT_EQ(y.shape, (std::vector<std::size_t>{1, 1, 1, 2}));
  EXPECT_EQ(y.data, (std::vector<double>{6, 8}));
}

TEST(Layers, DropoutIsIdentityInEval) {
  ModelGraph m;
  m.input_shape = {6};
  m.layers.push_back(Dropout{0.5});
  const Tensor x = test::random_input({3, 6}, 4);
  EXPECT_EQ(forward(m, x, Mode::eval).logits, x);
  EXPECT_THROW(forward(m, x, Mode::train), ConfigError);
  std::mt19937_64 rng(1);
  const Tensor y = forward(m, x, Mode::train, &rng).logits;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ASSERT_TRUE(y.data[i] == 0.0 || std::abs(y.data[i] - 2.0 * x.data[i]) < 1e-15);
  }
}

TEST(Layers, BatchNormUsesBatchStatsInTrain) {
  ModelGraph m;
  m.input_shape = {2, 2, 2};
  BatchNorm bn;
  bn.channels = 2;
  bn.gamma = {1, 1};
  bn.beta = {0, 0};
  bn.running_mean = {0, 0};
  bn.running_var = {1, 1};
  m.layers.push_back(bn);
  const Tensor x = test::random_input({3, 2, 2, 2}, 8);
  const auto fwd = forward(m, x, Mode::train);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t k = 0; k < 4; ++k) {
        const double v = fwd.logits.data[(n * 2 + c) * 4 + k];
        s += v;
        sq += v * v;
      }
    EXPECT_NEAR(s / 12, 0.0, 1e-12);
    EXPECT_NEAR(sq / 12, 1.0, 1e-4);
  }
  // Running stats move only on request.
  EXPECT_EQ(std::get<BatchNorm>(m.layers[0]).running_mean, (std::vector<double>{0, 0}));
  update_running_stats(m, fwd);
  EXPECT_NE(std::get<BatchNorm>(m.layers[0]).running_mean, (std::vector<double>{0, 0}));
}

TEST(Layers, ArchitectureShapes) {
  const auto g = make_gender_model(GenderArch{}, 1);
  const auto gs = layer_shapes(g);
  EXPECT_EQ(gs.back(), (std::vector<std::size_t>{2}));
  const auto d = make_diagnosis_model(DiagnosisArch{}, 1);
  const auto ds = layer_shapes(d);
  EXPECT_EQ(ds.back(), (std::vector<std::size_t>{2}));
  bool saw_flatten = false;
  for (std::size_t i = 0; i < d.layers.size(); ++i) {
    if (std::holds_alternative<Flatten>(d.layers[i])) {
      saw_flatten = true;
      EXPECT_EQ(ds[i], (std::vector<std::size_t>{64 * 8 * 6}));
    }
  }
  EXPECT_TRUE(saw_flatten);
}

TEST(Layers, WrongInputShapeThrows) {
  const auto g = make_gender_model(GenderArch{}, 1);
  EXPECT_THROW(forward(g, Tensor({1, 1, 64, 51}), Mode::eval), ShapeError);
}

TEST(Loss, SoftmaxAndCrossEntropy) {
  Tensor logits({1, 2});
  logits.data = {0.0, std::log(3.0)};
  const Tensor p = softmax(logits);
  EXPECT_NEAR(p.data[0], 0.25, 1e-15);
  EXPECT_NEAR(p.data[1], 0.75, 1e-15);
  const std::vector<int> y{1};
  EXPECT_NEAR(cross_entropy(logits, y), -std::log(0.75), 1e-15);

  Tensor big({1, 2});
  big.data = {1000.0, -1000.0};
  EXPECT_TRUE(std::isfinite(cross_entropy(big, y)));
  EXPECT_THROW(cross_entropy(logits, std::vector<int>{2}), ConfigError);
}

TEST(Gradients, FiniteDifferencesEval) {
  auto m = test::reduced_gender_model(21);
  const auto x = test::random_input({2, 1, 8, 8}, 22);
  const auto r = test::check_gradients(m, x, {0, 1}, Mode::eval);
  EXPECT_LT(r.max_param_rel, 1e-4);
  EXPECT_LT(r.max_input_rel, 1e-4);
}

TEST(Gradients, FiniteDifferencesTrainMode) {
  auto m = test::reduced_gender_model(31);
  const auto x = test::random_input({2, 1, 8, 8}, 32);
  const auto r = test::check_gradients(m, x, {1, 0}, Mode::train);
  EXPECT_LT(r.max_param_rel, 1e-4);
  EXPECT_LT(r.max_input_rel, 1e-4);
}

TEST(Gradients, DenseStackFiniteDifferences) {
  DiagnosisArch arch;
  arch.height = 8;
  arch.width = 8;
  arch.c1 = 2;
  arch.c2 = 3;
  arch.c3 = 4;
  arch.hidden = 5;
  auto m = make_diagnosis_model(arch, 41);
  const auto x = test::random_input({3, 1, 8, 8}, 42);
  const auto r = test::check_gradients(m, x, {0, 1, 1}, Mode::train);
  EXPECT_LT(r.max_param_rel, 1e-4);
  EXPECT_LT(r.max_input_rel, 1e-4);
}

TEST(Gradients, StaleCacheRejected) {
  auto m = test::reduced_gender_model(1);
  const auto x = test::random_input({1, 1, 8, 8}, 2);
  const auto fwd = forward(m, x, Mode::eval);
  m.layers.pop_back();
  EXPECT_THROW(backward(m, fwd, std::vector<int>{0}), ConfigError);
}

TEST(Adam, FirstStepIsSignTimesLr) {
  std::vector<double> p{1.0, -2.0, 0.5};
  std::vector<std::span<double>> blocks{std::span<double>(p)};
  AdamState st;
  st.lr = 0.01;
  st.m = {{0, 0, 0}};
  st.v = {{0, 0, 0}};
  adam_step(blocks, {{0.3, -4.0, 0.0}}, st);
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-9);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_EQ(st.t, 1u);
}

TEST(Train, LearnsSeparableToyAndIsDeterministic) {
  auto base = test::reduced_gender_model(5);
  Dataset d;
  d.inputs = Tensor({40, 1, 8, 8});
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (std::size_t n = 0; n < 40; ++n) {
    const int y = static_cast<int>(n % 2);
    d.labels.push_back(y);
    for (std::size_t i = 0; i < 64; ++i) d.inputs.data[n * 64 + i] = g(rng) * 0.3 + (y ? 1.0 : -1.0);
  }
  TrainConfig cfg{8, 15, 77};
  cfg.lr = 0.01;
  auto a = base, b = base;
  const auto ha = train(a, d, cfg);
  const auto hb = train(b, d, cfg);
  EXPECT_EQ(ha.epoch_loss, hb.epoch_loss);
  EXPECT_EQ(a.layers.size(), b.layers.size());
  EXPECT_EQ(parameters(std::as_const(a)).front()[0], parameters(std::as_const(b)).front()[0]);
  EXPECT_LT(ha.epoch_loss.back(), ha.epoch_loss.front());
  EXPECT_EQ(a.mode, Mode::eval);

  const Tensor p = predict_proba(a, d.inputs);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < 40; ++n) correct += (p.data[2 * n + 1] > 0.5) == (d.labels[n] == 1);
  EXPECT_GE(correct, 38u);
}

TEST(Train, KeepsPartialBatch) {
  auto m = test::reduced_gender_model(5);
  Dataset d;
  d.inputs = test::random_input({10, 1, 8, 8}, 1);
  d.labels.assign(10, 0);
  const auto h = train(m, d, TrainConfig{4, 1, 1});
  EXPECT_EQ(h.batch_sizes, (std::vector<std::size_t>{4, 4, 2}));
}

TEST(ModelIo, SaveLoadRoundTrip) {
  const auto dir = test::scratch("model");
  auto m = make_gender_model(GenderArch{}, 9);
  std::get<BatchNorm>(m.layers[1]).running_mean[0] = 0.125;
  save_model(m, dir / "g.soum");
  const auto back = load_model(dir / "g.soum");
  ASSERT_EQ(back.layers.size(), m.layers.size());
  EXPECT_EQ(back.input_shape, m.input_shape);
  const auto pa = parameters(std::as_const(m));
  const auto pb = parameters(std::as_const(back));
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t b = 0; b < pa.size(); ++b) {
    ASSERT_TRUE(std::equal(pa[b].begin(), pa[b].end(), pb[b].begin(), pb[b].end()));
  }
  EXPECT_EQ(std::get<BatchNorm>(back.layers[1]).running_mean[0], 0.125);

  const auto x = test::random_input({2, 1, 64, 52}, 3);
  EXPECT_EQ(forward(m, x, Mode::eval).logits, forward(back, x, Mode::eval).logits);

  save_model(back, dir / "g2.soum");
  EXPECT_EQ(test::read_file(dir / "g.soum"), test::read_file(dir / "g2.soum"));
}

TEST(ModelIo, RejectsTrainModeAndBadFiles) {
  const auto dir = test::scratch("model_bad");
  auto m = make_gender_model(GenderArch{}, 9);
  m.mode = Mode::train;
  EXPECT_THROW(save_model(m, dir / "x.soum"), ConfigError);
  test::write_file(dir / "junk.soum", "SOUMxxxx");
  EXPECT_THROW(load_model(dir / "junk.soum"), IoError);
}

TEST(Init, KaimingBoundsAndSeeded) {
  const auto a = make_gender_model(GenderArch{}, 3);
  const auto b = make_gender_model(GenderArch{}, 3);
  const auto c = make_gender_model(GenderArch{}, 4);
  const auto& wa = std::get<Conv3x3>(a.layers[0]).weight;
  EXPECT_EQ(wa, std::get<Conv3x3>(b.layers[0]).weight);
  EXPECT_NE(wa, std::get<Conv3x3>(c.layers[0]).weight);
  const double bound = std::sqrt(6.0 / 9.0);
  for (double v : wa) ASSERT_LE(std::abs(v), bound);
  for (double v : std::get<Conv3x3>(a.layers[0]).bias) ASSERT_EQ(v, 0.0);
}
