#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ebsde/nn.hpp"

using namespace ebsde;

TEST(Mlp, ShapeAndParamCount) {
  Mlp net = Mlp::standard(2, 3);
  EXPECT_EQ(net.sizes(), (std::vector<std::size_t>{1, 22, 22, 3}));
  EXPECT_EQ(net.n_params(), 22u * 1 + 22 + 22 * 22 + 22 + 3 * 22 + 3);
  EXPECT_EQ(net.in_dim(), 1u);
  EXPECT_EQ(net.out_dim(), 3u);
  EXPECT_EQ(net.eval(0.3).size(), 3u);
}

TEST(Mlp, ZeroParamsGiveZero) {
  Mlp net({1, 4, 2});
  for (double x : net.eval(1.7)) EXPECT_EQ(x, 0.0);
}

TEST(Mlp, HandComputedForward) {
  Mlp net({1, 1, 1});
  // W0 b0 W1 b1
  net.params() = {2.0, 0.5, -3.0, 0.25};
  EXPECT_DOUBLE_EQ(net.eval(0.4)[0], -3.0 * std::tanh(2.0 * 0.4 + 0.5) + 0.25);
}

TEST(Mlp, GlorotDeterministicWithZeroBias) {
  Mlp a = Mlp::standard(1, 2), b = Mlp::standard(1, 2), c = Mlp::standard(1, 2);
  a.glorot_init(5);
  b.glorot_init(5);
  c.glorot_init(6);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.params(), c.params());
  for (std::size_t l = 0; l < a.n_layers(); ++l)
    for (std::size_t i = 0; i < a.sizes()[l + 1]; ++i) EXPECT_EQ(a.params()[a.bias_offset(l) + i], 0.0);
}

TEST(Mlp, GlorotVariance) {
  Mlp net({1, 200, 200, 1});
  net.glorot_init(3);
  double s2 = 0.0;
  const std::size_t w0 = net.weight_offset(1), b0 = net.bias_offset(1);
  for (std::size_t i = w0; i < b0; ++i) s2 += net.params()[i] * net.params()[i];
  s2 /= static_cast<double>(b0 - w0);
  EXPECT_NEAR(s2, 2.0 / 400.0, 0.05 * 2.0 / 400.0);
}

class MlpGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(MlpGradient, MatchesCentralDifferences) {
  Mlp net = Mlp::standard(2, 3);
  net.glorot_init(GetParam());
  std::mt19937_64 eng(GetParam());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& p : net.params()) p += 0.1 * u(eng);
  const double v = u(eng) * 2.0;
  std::vector<double> w = {u(eng), u(eng), u(eng)};
  auto loss = [&](const Mlp& n) {
    auto o = n.eval(v);
    return o[0] * w[0] + o[1] * w[1] + o[2] * w[2];
  };
  std::vector<double> cache(net.cache_size());
  net.forward(v, cache.data());
  const auto g = net.backward(cache, w);
  std::uniform_int_distribution<std::size_t> pick(0, net.n_params() - 1);
  for (int k = 0; k < 50; ++k) {
    const std::size_t i = pick(eng);
    Mlp p = net, m = net;
    const double e = 1e-6;
    p.params()[i] += e;
    m.params()[i] -= e;
    const double fd = (loss(p) - loss(m)) / (2 * e);
    EXPECT_LE(std::abs(fd - g[i]), 1e-4 * std::max(1e-3, std::abs(g[i]))) << "param " << i;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, MlpGradient, ::testing::Values(1u, 2u, 3u));

TEST(Mlp, BackwardAccumulates) {
  Mlp net({1, 3, 1});
  net.glorot_init(1);
  std::vector<double> cache(net.cache_size());
  net.forward(0.2, cache.data());
  const auto g1 = net.backward(cache, {1.0});
  std::vector<double> acc(net.n_params(), 0.0), work(net.work_size());
  double one = 1.0;
  net.backward(cache.data(), &one, acc.data(), work.data());
  net.backward(cache.data(), &one, acc.data(), work.data());
  for (std::size_t i = 0; i < acc.size(); ++i) EXPECT_DOUBLE_EQ(acc[i], 2.0 * g1[i]);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  TrainState st;
  st.nets.push_back(Mlp({1, 1, 1}));
  st.adam.lr = 0.01;
  st.K = 10.0;
  std::vector<double> g = {3.0, -0.5, 1e-3, -7.0};
  adam_step(st, g, 2.0);
  EXPECT_EQ(st.step, 1u);
  const auto& p = st.nets[0].params();
  EXPECT_NEAR(p[0], -0.01, 1e-8);
  EXPECT_NEAR(p[1], 0.01, 1e-8);
  EXPECT_NEAR(p[2], -0.01, 1e-5);
  EXPECT_NEAR(p[3], 0.01, 1e-8);
  EXPECT_NEAR(st.lambda_bar, -0.01, 1e-8);
}

TEST(Adam, LambdaClampedToK) {
  TrainState st;
  st.nets.push_back(Mlp({1, 1, 1}));
  st.adam.lr = 1.0;
  st.K = 0.3;
  std::vector<double> g(4, 0.0);
  for (int i = 0; i < 5; ++i) adam_step(st, g, -1.0);
  EXPECT_EQ(st.lambda_bar, 0.3);
  for (int i = 0; i < 20; ++i) adam_step(st, g, 1.0);
  EXPECT_EQ(st.lambda_bar, -0.3);
}

TEST(Adam, MinimizesQuadratic) {
  TrainState st;
  st.nets.push_back(Mlp({1, 2, 1}));
  st.adam.lr = 0.05;
  st.K = 5.0;
  const std::size_t n = st.n_net_params();
  for (int it = 0; it < 3000; ++it) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = 2.0 * (st.nets[0].params()[i] - static_cast<double>(i) * 0.1);
    adam_step(st, g, 2.0 * (st.lambda_bar - 1.5));
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(st.nets[0].params()[i], 0.1 * static_cast<double>(i), 1e-3);
  EXPECT_NEAR(st.lambda_bar, 1.5, 1e-3);
}

TEST(Adam, LearningRateDecay) {
  TrainState st;
  st.adam.lr = 0.1;
  st.adam.lr_decay = true;
  st.adam.decay_every = 10;
  st.step = 9;
  EXPECT_EQ(st.current_lr(), 0.1);
  st.step = 10;
  EXPECT_EQ(st.current_lr(), 0.05);
  st.step = 25;
  EXPECT_EQ(st.current_lr(), 0.025);
  st.adam.lr_decay = false;
  EXPECT_EQ(st.current_lr(), 0.1);
}

TEST(Adam, GradientSizeMismatch) {
  TrainState st;
  st.nets.push_back(Mlp({1, 1, 1}));
  std::vector<double> g(3);
  EXPECT_THROW(adam_step(st, g, 0.0), Error);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  TrainState st;
  st.nets = {Mlp::standard(1, 1), Mlp::standard(1, 2)};
  st.nets[0].glorot_init(1);
  st.nets[1].glorot_init(2);
  st.lambda_bar = 0.1 + 1e-17;
  st.K = 1.0 / 3.0;
  st.step = 1234;
  const auto path = std::filesystem::temp_directory_path() / "ebsde_test_ckpt.txt";
  save_checkpoint(st, path.string());
  const TrainState back = load_checkpoint(path.string());
  EXPECT_EQ(back.nets.size(), 2u);
  EXPECT_EQ(back.nets[0], st.nets[0]);
  EXPECT_EQ(back.nets[1], st.nets[1]);
  EXPECT_EQ(back.lambda_bar, st.lambda_bar);
  EXPECT_EQ(back.K, st.K);
  EXPECT_EQ(back.step, st.step);
  EXPECT_EQ(checkpoint_text(back), checkpoint_text(st));
  std::filesystem::remove(path);
}

TEST(Checkpoint, MissingAndCorrupt) {
  try {
    load_checkpoint("/nonexistent/dir/ckpt.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
  EXPECT_THROW(parse_checkpoint("garbage"), Error);
  TrainState st;
  st.nets = {Mlp({1, 2, 1})};
  std::string t = checkpoint_text(st);
  t.resize(t.size() / 2);
  EXPECT_THROW(parse_checkpoint(t), Error);
}
