/**
 * Copyright 2026 The ofx Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>

#include "ofx/fcn.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace ofx;
using namespace ofx::testing;


TEST(Complexity, CanonicalNetwork) {
  const auto specs = canonical_network();
  ASSERT_EQ(specs.size(), 10u);
  EXPECT_EQ(specs.front(), (LayerSpec{1, 32, Activation::relu}));
  for (std::size_t l = 1; l < 9; ++l) EXPECT_EQ(specs[l], (LayerSpec{32, 32, Activation::relu}));
  EXPECT_EQ(specs.back(), (LayerSpec{32, 1, Activation::sigmoid}));
  EXPECT_EQ(count_parameters(specs), 74593u);
  EXPECT_EQ(count_macs(specs, 120, 160), 1426636800u);
  EXPECT_EQ(count_macs(specs, 60, 80) * 4, count_macs(specs, 120, 160));
  const ComplexityReport r = complexity(specs);
  EXPECT_EQ(r.parameter_bytes, 298372u);
}

TEST(Complexity, SmallClosedForms) {
  EXPECT_EQ(count_parameters({{1, 1, Activation::sigmoid}}), 10u);
  EXPECT_EQ(count_parameters({{1, 32, Activation::relu}, {32, 1, Activation::sigmoid}}), 609u);
  EXPECT_EQ(count_macs({{1, 1, Activation::sigmoid}}, 4, 4), 144u);
  EXPECT_THROW(count_macs(canonical_network(), 0, 4), std::invalid_argument);
}

TEST(Forward, ZeroParametersGiveHalf) {
  const auto p = NetworkParameters<float>::zeros(canonical_network());
  RandomStream rng(1);
  Image img(9, 13);
  for (double& v : img.pixels()) v = rng.uniform(0, 255);
  const ProbabilityMap y = predict(p, img);
  ASSERT_TRUE(y.same_shape(img));
  for (double v : y.pixels()) EXPECT_EQ(v, 0.5);
}

TEST(Forward, MatchesDirectConvolutionOracle) {
  RandomStream rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(8));
    const int w = 1 + static_cast<int>(rng.below(8));
    const int depth = 1 + static_cast<int>(rng.below(4));
    const int width = 1 + static_cast<int>(rng.below(6));
    const auto specs = sequential_network(depth, width);
    const auto p = random_params(specs, rng);
    const FeatureMap<double> x = random_input(h, w, rng);
    std::vector<double> in(x.data.data(), x.data.data() + x.data.size());
    const auto expect = naive_forward(p, in, h, w);
    const auto got = forward(p, x).output().data;
    ASSERT_EQ(got.cols(), h * w);
    for (int k = 0; k < h * w; ++k) ASSERT_NEAR(got(0, k), expect[k], 1e-5) << "trial " << trial;
    // The float path agrees too.
    const auto gotf = forward(p.cast<float>(), FeatureMap<float>{h, w, x.data.cast<float>()}).output().data;
    for (int k = 0; k < h * w; ++k) ASSERT_NEAR(gotf(0, k), expect[k], 1e-5) << "trial " << trial;
  }
}

TEST(Forward, OutputShapeAndRange) {
  const auto p = glorot_uniform<float>(canonical_network(), 3);
  for (auto [h, w] : {std::pair{1, 1}, {2, 7}, {15, 4}}) {
    Image img(h, w, 128.0);
    const ProbabilityMap y = predict(p, img);
    ASSERT_TRUE(y.same_shape(h, w));
    for (double v : y.pixels()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(Forward, RejectsNonFiniteAndWrongChannels) {
  const auto p = NetworkParameters<double>::zeros(sequential_network(2, 2));
  FeatureMap<double> x{2, 2, Matrix<double>::Zero(1, 4)};
  x.data(0, 1) = std::nan("");
  EXPECT_THROW(forward(p, x), std::invalid_argument);
  FeatureMap<double> two{2, 2, Matrix<double>::Zero(2, 4)};
  EXPECT_THROW(forward(p, two), std::invalid_argument);
}

TEST(Loss, MseValuesAndGradient) {
  Matrix<double> t = Matrix<double>::Ones(1, 9);
  EXPECT_EQ(mse_loss<double>(t, t).loss, 0.0);
  Matrix<double> half = Matrix<double>::Constant(1, 9, 0.5);
  EXPECT_DOUBLE_EQ(mse_loss<double>(half, t).loss, 0.25);
  RandomStream rng(4);
  Matrix<double> pred(1, 9), target(1, 9);
  for (int k = 0; k < 9; ++k) {
    pred(0, k) = rng.unit();
    target(0, k) = rng.bernoulli(0.5);
  }
  const auto g = mse_loss<double>(pred, target).gradient;
  for (int k = 0; k < 9; ++k) {
    const double h = 1e-6;
    Matrix<double> up = pred, down = pred;
    up(0, k) += h;
    down(0, k) -= h;
    const double fd = (mse_loss<double>(up, target).loss - mse_loss<double>(down, target).loss) / (2 * h);
    EXPECT_LE(std::abs(fd - g(0, k)) / std::max(std::abs(g(0, k)), 1e-12), 1e-6);
  }
  EXPECT_THROW(mse_loss<double>(pred, Matrix<double>::Zero(1, 8)), std::invalid_argument);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  RandomStream rng(5);
  const auto p = random_params(sequential_network(3, 4), rng);
  const auto x = random_input(5, 5, rng);
  const auto cache = forward(p, x);
  const auto g = backward(p, cache, Matrix<double>::Zero(1, 25));
  for (const auto& l : g.layers) {
    EXPECT_EQ(l.weights.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Backward, MiniatureMatchesCentralDifferences) {
  // 3 layers, 8 channels, 6x6 input.
  const auto specs = sequential_network(3, 8);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::size_t checked = 0;
    EXPECT_LT(max_gradient_error(specs, 6, 6, seed, 1e-4, &checked), 1e-3) << "seed " << seed;
    EXPECT_EQ(checked, count_parameters(specs));
  }
}

TEST(Backward, LastLayerBiasByHandChainRule) {
  // Single 1->1 sigmoid layer on 2x2: dL/db = sum_p 2 (y_p - t_p) / N * y_p (1 - y_p).
  auto p = NetworkParameters<double>::zeros({{1, 1, Activation::sigmoid}});
  p.layers[0].weight(0, 0, 1, 1) = 0.7;
  p.layers[0].weight(0, 0, 0, 1) = -0.3;
  p.layers[0].bias[0] = 0.1;
  FeatureMap<double> x{2, 2, Matrix<double>(1, 4)};
  x.data << 0.2, 0.9, 0.4, 0.6;
  Matrix<double> t(1, 4);
  t << 1, 0, 0, 1;
  const auto cache = forward(p, x);
  const auto g = backward(p, cache, mse_loss(cache.output().data, t).gradient);
  // Pre-activations: centre tap 0.7 * x[p] plus the tap above (-0.3 * pixel one row up).
  const double z[4] = {0.1 + 0.7 * 0.2, 0.1 + 0.7 * 0.9, 0.1 + 0.7 * 0.4 - 0.3 * 0.2, 0.1 + 0.7 * 0.6 - 0.3 * 0.9};
  double expect = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double y = 1.0 / (1.0 + std::exp(-z[k]));
    expect += 2.0 * (y - t(0, k)) / 4.0 * y * (1.0 - y);
  }
  EXPECT_NEAR(g.layers[0].bias[0], expect, 1e-15);
}

TEST(Backward, RejectsStaleCache) {
  RandomStream rng(6);
  const auto p = random_params(sequential_network(3, 4), rng);
  const auto other = random_params(sequential_network(2, 4), rng);
  const auto cache = forward(other, random_input(4, 4, rng));
  EXPECT_THROW(backward(p, cache, Matrix<double>::Zero(1, 16)), std::logic_error);
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  RandomStream rng(7);
  auto p = random_params(sequential_network(2, 3), rng);
  const auto before = p;
  auto s = AdamState<double>::start(p);
  adam_step(s, p, NetworkParameters<double>::zeros(p.specs()));
  EXPECT_EQ(s.step, 1u);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    EXPECT_EQ(p.layers[l].weights, before.layers[l].weights);
    EXPECT_EQ(p.layers[l].bias, before.layers[l].bias);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double gval : {0.3, -2.0, 1e-3}) {
    auto p = NetworkParameters<double>::zeros({{1, 1, Activation::sigmoid}});
    auto g = NetworkParameters<double>::zeros(p.specs());
    g.layers[0].bias[0] = gval;
    auto s = AdamState<double>::start(p, 1e-4);
    adam_step(s, p, g);
    // m_hat = g, v_hat = g^2, so the step is -lr * g / (|g| + eps).
    const double expect = -1e-4 * gval / (std::abs(gval) + 1e-8);
    EXPECT_NEAR(p.layers[0].bias[0], expect, 1e-18);
    EXPECT_NEAR(std::abs(p.layers[0].bias[0]), 1e-4, 1e-9);
  }
}

TEST(Adam, TwoStepsDecreaseQuadratic) {
  auto p = NetworkParameters<double>::zeros({{1, 1, Activation::sigmoid}});
  p.layers[0].bias[0] = 1.0;
  auto s = AdamState<double>::start(p, 0.1);
  double theta = 1.0;
  for (int k = 0; k < 2; ++k) {
    auto g = NetworkParameters<double>::zeros(p.specs());
    g.layers[0].bias[0] = p.layers[0].bias[0];  // d/dθ ½θ²
    adam_step(s, p, g);
    const double next = p.layers[0].bias[0];
    EXPECT_LT(0.5 * next * next, 0.5 * theta * theta);
    theta = next;
  }
  // Scalar simulation of the same two updates.
  double th = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = th;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    th -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(theta, th, 1e-15);
  EXPECT_NEAR(theta, 0.8004122, 1e-7);
}

TEST(Adam, NonFiniteGradientAborts) {
  auto p = NetworkParameters<float>::zeros(sequential_network(2, 2));
  auto g = NetworkParameters<float>::zeros(p.specs());
  g.layers[1].weights(0, 3) = std::numeric_limits<float>::infinity();
  auto s = AdamState<float>::start(p);
  EXPECT_THROW(adam_step(s, p, g), NonFiniteGradient);
  EXPECT_EQ(s.step, 0u);
}

TEST(Init, GlorotBoundsAndDeterminism) {
  const auto specs = canonical_network();
  const auto a = glorot_uniform<float>(specs, 9);
  const auto b = glorot_uniform<float>(specs, 9);
  EXPECT_EQ(parameter_hash(a), parameter_hash(b));
  EXPECT_NE(parameter_hash(a), parameter_hash(glorot_uniform<float>(specs, 10)));
  for (const auto& l : a.layers) {
    const double limit = std::sqrt(6.0 / (9.0 * (l.spec.in_channels + l.spec.out_channels)));
    EXPECT_LE(l.weights.cwiseAbs().maxCoeff(), limit);
    EXPECT_GT(l.weights.cwiseAbs().maxCoeff(), 0.9 * limit);
    EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0f);
  }
}

TEST(Checkpoint, RoundTripWithAndWithoutOptimizer) {
  const fs::path dir = fs::temp_directory_path() / "ofx_fcn_ckpt";
  fs::create_directories(dir);
  auto p = glorot_uniform<float>(sequential_network(3, 5), 11);
  p.layers[2].bias[0] = 0.25f;
  save_checkpoint(dir / "a.bin", p);
  const Checkpoint a = load_checkpoint(dir / "a.bin");
  EXPECT_EQ(parameter_hash(a.params), parameter_hash(p));
  EXPECT_EQ(a.params.specs(), p.specs());
  EXPECT_FALSE(a.optimizer);
  EXPECT_EQ(fs::file_size(dir / "a.bin"), 7 + 4 + 3 * 16 + 4 * count_parameters(p.specs()));

  // Weight order on disk is out x in x ky x kx.
  std::ifstream in(dir / "a.bin", std::ios::binary);
  in.seekg(7 + 4 + 3 * 16);
  float first[2];
  in.read(reinterpret_cast<char*>(first), sizeof first);
  EXPECT_EQ(first[0], p.layers[0].weight(0, 0, 0, 0));
  EXPECT_EQ(first[1], p.layers[0].weight(0, 0, 0, 1));

  auto s = AdamState<float>::start(p, 5e-5);
  auto g = glorot_uniform<float>(p.specs(), 12);
  adam_step(s, p, g);
  save_checkpoint(dir / "b.bin", p, &s);
  const Checkpoint b = load_checkpoint(dir / "b.bin");
  ASSERT_TRUE(b.optimizer);
  EXPECT_EQ(b.optimizer->step, 1u);
  EXPECT_EQ(b.optimizer->lr, 5e-5);
  EXPECT_EQ(parameter_hash(b.optimizer->m), parameter_hash(s.m));
  EXPECT_EQ(parameter_hash(b.optimizer->v), parameter_hash(s.v));

}

TEST(Checkpoint, RejectsCorruptFiles) {
  const fs::path dir = fs::temp_directory_path() / "ofx_fcn_ckpt_bad";
  fs::create_directories(dir);
  std::ofstream(dir / "magic.bin") << "NOTMAGIC";
  EXPECT_THROW(load_checkpoint(dir / "magic.bin"), CheckpointError);
  save_checkpoint(dir / "ok.bin", glorot_uniform<float>(sequential_network(2, 2), 1));
  fs::resize_file(dir / "ok.bin", fs::file_size(dir / "ok.bin") - 3);
  EXPECT_THROW(load_checkpoint(dir / "ok.bin"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), CheckpointError);
}

TEST(Train, DeterministicLossHistory) {
  const auto data = disk_samples(6, 10, 10, 1);
  TrainOptions opt;
  opt.batch_size = 4;
  opt.max_epochs = 3;
  opt.seed = 8;
  const auto init = glorot_uniform<float>(sequential_network(3, 4), 8);
  const auto a = train(init, data, {}, opt);
  const auto b = train(init, data, {}, opt);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(parameter_hash(a.last), parameter_hash(b.last));
  ASSERT_EQ(a.history.size(), 6u);
  EXPECT_FALSE(a.history[0].val_mse);
  EXPECT_TRUE(a.history[1].val_mse);
  EXPECT_EQ(a.history.back().step, 6u);
}

TEST(Train, StartsFromGivenParametersAndCheckpointsBest) {
  const auto data = disk_samples(4, 8, 8, 2);
  const auto val = disk_samples(2, 8, 8, 3);
  const auto init = glorot_uniform<float>(sequential_network(3, 4), 1);
  TrainOptions opt;
  opt.lr = 5e-5;
  opt.max_steps = 1;
  const auto r = train(init, data, val, opt);
  // One Adam step moves each parameter by at most lr (plus rounding).
  for (std::size_t l = 0; l < init.layers.size(); ++l) {
    EXPECT_LE((r.last.layers[l].weights - init.layers[l].weights).cwiseAbs().maxCoeff(), 5.01e-5);
  }
  int calls = 0;
  opt.max_steps = 0;
  opt.max_epochs = 5;
  opt.patience = 100;
  const auto r2 = train(init, data, val, opt, [&](const NetworkParameters<float>&, const AdamState<float>&) { ++calls; });
  EXPECT_GE(calls, 1);
  EXPECT_NEAR(mean_loss(r2.best, val), r2.best_loss, 1e-6);
  EXPECT_THROW(train(init, {}, val, opt), std::invalid_argument);
}

TEST(Train, EarlyStopsAfterPatience) {
  const auto data = disk_samples(2, 6, 6, 4);
  TrainOptions opt;
  opt.lr = 1e-12;  // no measurable progress
  opt.max_epochs = 50;
  opt.patience = 3;
  const auto r = train(glorot_uniform<float>(sequential_network(2, 2), 2), data, data, opt);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_LT(r.epochs, 50);
}

TEST(Train, LossCsvFormat) {
  const fs::path path = fs::temp_directory_path() / "ofx_loss.csv";
  write_loss_csv(path, {{1, 0.5, std::nullopt}, {2, 0.25, 0.125}});
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(content, "step,train_mse,val_mse\n1,0.5,\n2,0.25,0.125\n");
}

TEST(Train, LossNonIncreasingOverFirstStepsForMostSeeds) {
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto data = disk_samples(8, 16, 16, seed);
    TrainOptions opt;
    opt.batch_size = 8;
    opt.max_steps = 50;
    opt.max_epochs = 50;
    opt.seed = seed;
    const auto r = train(glorot_uniform<float>(canonical_network(), seed), data, {}, opt);
    ASSERT_EQ(r.history.size(), 50u);
    bool ok = true;
    for (std::size_t k = 1; k < r.history.size(); ++k) ok = ok && r.history[k].train_mse <= r.history[k - 1].train_mse;
    monotone += ok;
  }
  EXPECT_GE(monotone, 19);
}
