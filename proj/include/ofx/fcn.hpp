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
#pragma once

// Fully convolutional segmentation network: 3x3 same-padded convolutions,
// ReLU hidden layers and a sigmoid output, trained with MSE and Adam.
// Convolutions run as im2col + GEMM. The scalar type is a template
// parameter: float in production, double for gradient checks.

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "ofx/imaging.hpp"
#include "ofx/random.hpp"

namespace ofx {

enum class Activation { relu, sigmoid };

struct LayerSpec {
  int in_channels = 1;
  int out_channels = 1;
  Activation activation = Activation::relu;
  static constexpr int kernel = 3;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Plain sequential stack: in -> width (relu) x depth-1 -> 1 (sigmoid).
inline std::vector<LayerSpec> sequential_network(int depth, int width, int in_channels = 1) {
  if (depth < 1 || width < 1 || in_channels < 1) throw std::invalid_argument("network shape must be positive");
  std::vector<LayerSpec> specs;
  int in = in_channels;
  for (int l = 0; l + 1 < depth; ++l) {
    specs.push_back({in, width, Activation::relu});
    in = width;
  }
  specs.push_back({in, 1, Activation::sigmoid});
  return specs;
}

/// 10 layers: 1->32, eight 32->32, 32->1.
inline std::vector<LayerSpec> canonical_network() { return sequential_network(10, 32); }

inline std::uint64_t count_parameters(const std::vector<LayerSpec>& specs) {
  std::uint64_t n = 0;
  for (const auto& s : specs) {
    const std::uint64_t in = s.in_channels, out = s.out_channels;
    n += LayerSpec::kernel * LayerSpec::kernel * in * out + out;
  }
  return n;
}

/// Convolution multiply-accumulates for an h x w input, biases excluded.
inline std::uint64_t count_macs(const std::vector<LayerSpec>& specs, int height, int width) {
  if (height < 1 || width < 1) throw std::invalid_argument("count_macs: input size must be positive");
  std::uint64_t n = 0;
  const std::uint64_t pixels = static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
  for (const auto& s : specs) {
    n += LayerSpec::kernel * LayerSpec::kernel * static_cast<std::uint64_t>(s.in_channels) *
         static_cast<std::uint64_t>(s.out_channels) * pixels;
  }
  return n;
}

struct ComplexityReport {
  std::uint64_t total_parameters = 0;
  std::uint64_t parameter_bytes = 0;
  std::uint64_t total_macs = 0;
  int height = 0;
  int width = 0;

  double megabytes() const { return parameter_bytes / (1024.0 * 1024.0); }
};

inline ComplexityReport complexity(const std::vector<LayerSpec>& specs, int height = kCanonicalHeight,
                                   int width = kCanonicalWidth) {
  ComplexityReport r;
  r.total_parameters = count_parameters(specs);
  r.parameter_bytes = r.total_parameters * sizeof(float);
  r.total_macs = count_macs(specs, height, width);
  r.height = height;
  r.width = width;
  return r;
}

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Channels x pixels; pixel p = row * width + col.
template <typename S>
struct FeatureMap {
  int height = 0;
  int width = 0;
  Matrix<S> data;

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index pixels() const { return data.cols(); }
};

/// Weights are stored as out x (9 * in) with column (ky * 3 + kx) * in + i,
/// so that im2col copies whole channel vectors.
template <typename S>
struct LayerParams {
  LayerSpec spec;
  Matrix<S> weights;
  Vector<S> bias;

  S& weight(int o, int i, int ky, int kx) { return weights(o, (ky * LayerSpec::kernel + kx) * spec.in_channels + i); }
  S weight(int o, int i, int ky, int kx) const {
    return weights(o, (ky * LayerSpec::kernel + kx) * spec.in_channels + i);
  }
};

template <typename S>
struct NetworkParameters {
  std::vector<LayerParams<S>> layers;

  static NetworkParameters zeros(const std::vector<LayerSpec>& specs) {
    NetworkParameters p;
    for (const auto& s : specs) {
      if (s.in_channels < 1 || s.out_channels < 1) throw std::invalid_argument("layer channels must be positive");
      LayerParams<S> l;
      l.spec = s;
      l.weights = Matrix<S>::Zero(s.out_channels, LayerSpec::kernel * LayerSpec::kernel * s.in_channels);
      l.bias = Vector<S>::Zero(s.out_channels);
      p.layers.push_back(std::move(l));
    }
    return p;
  }

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers) out.push_back(l.spec);
    return out;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  bool congruent(const NetworkParameters& o) const {
    if (o.layers.size() != layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (!(layers[i].spec == o.layers[i].spec)) return false;
    }
    return true;
  }

  template <typename T>
  NetworkParameters<T> cast() const {
    NetworkParameters<T> out;
    for (const auto& l : layers) {
      out.layers.push_back({l.spec, l.weights.template cast<T>(), l.bias.template cast<T>()});
    }
    return out;
  }
};

/// FNV-1a over the float32 bit patterns of weights then biases.
template <typename S>
std::uint64_t parameter_hash(const NetworkParameters<S>& p) {
  std::uint64_t h = fnv1a64("");
  auto mix = [&](S v) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    char bytes[4];
    for (int k = 0; k < 4; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xffu);
    h = fnv1a64(std::string_view(bytes, 4), h);
  };
  for (const auto& l : p.layers) {
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) mix(l.weights.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) mix(l.bias[i]);
  }
  return h;
}

/// Uniform Glorot: U(-r, r), r = sqrt(6 / (fan_in + fan_out)), fans over 3x3
/// receptive fields. Biases start at zero.
template <typename S>
NetworkParameters<S> glorot_uniform(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  NetworkParameters<S> p = NetworkParameters<S>::zeros(specs);
  RandomStream rng(seed, "fcn", "init");
  constexpr int kk = LayerSpec::kernel * LayerSpec::kernel;
  for (auto& l : p.layers) {
    const double limit = std::sqrt(6.0 / (kk * l.spec.in_channels + kk * l.spec.out_channels));
    for (int o = 0; o < l.spec.out_channels; ++o) {
      for (int i = 0; i < l.spec.in_channels; ++i) {
        for (int ky = 0; ky < LayerSpec::kernel; ++ky) {
          for (int kx = 0; kx < LayerSpec::kernel; ++kx) {
            l.weight(o, i, ky, kx) = static_cast<S>(rng.uniform(-limit, limit));
          }
        }
      }
    }
  }
  return p;
}

/// Single-channel network input, intensities scaled to [0, 1].
template <typename S>
FeatureMap<S> to_input(const Image& img) {
  FeatureMap<S> x{img.height(), img.width(), Matrix<S>(1, static_cast<Eigen::Index>(img.size()))};
  auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) x.data(0, static_cast<Eigen::Index>(i)) = static_cast<S>(px[i] / 255.0);
  return x;
}

template <typename S>
Matrix<S> to_target(const Mask& mask) {
  Matrix<S> t(1, static_cast<Eigen::Index>(mask.size()));
  auto px = mask.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) t(0, static_cast<Eigen::Index>(i)) = px[i] ? S(1) : S(0);
  return t;
}

namespace detail {

template <typename S>
void im2col(const FeatureMap<S>& x, Matrix<S>& cols) {
  const int c = x.channels(), h = x.height, w = x.width;
  constexpr int k = LayerSpec::kernel, r = k / 2;
  cols.setZero(static_cast<Eigen::Index>(k * k * c), static_cast<Eigen::Index>(h) * w);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const Eigen::Index p = static_cast<Eigen::Index>(row) * w + col;
      for (int ky = 0; ky < k; ++ky) {
        const int sr = row + ky - r;
        if (sr < 0 || sr >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int sc = col + kx - r;
          if (sc < 0 || sc >= w) continue;
          cols.block((ky * k + kx) * c, p, c, 1) = x.data.col(static_cast<Eigen::Index>(sr) * w + sc);
        }
      }
    }
  }
}

template <typename S>
void col2im(const Matrix<S>& cols, int c, int h, int w, Matrix<S>& x) {
  constexpr int k = LayerSpec::kernel, r = k / 2;
  x.setZero(c, static_cast<Eigen::Index>(h) * w);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const Eigen::Index p = static_cast<Eigen::Index>(row) * w + col;
      for (int ky = 0; ky < k; ++ky) {
        const int sr = row + ky - r;
        if (sr < 0 || sr >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int sc = col + kx - r;
          if (sc < 0 || sc >= w) continue;
          x.col(static_cast<Eigen::Index>(sr) * w + sc) += cols.block((ky * k + kx) * c, p, c, 1);
        }
      }
    }
  }
}

template <typename S>
S sigmoid(S z) {
  return z >= 0 ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
}

}  // namespace detail

/// Layer inputs and outputs of one forward pass; activations[0] is the input.
/// Reusing a cache across calls reuses its buffers.
template <typename S>
struct ForwardCache {
  std::vector<FeatureMap<S>> activations;
  Matrix<S> cols;

  const FeatureMap<S>& output() const { return activations.back(); }
};

template <typename S>
void forward(const NetworkParameters<S>& params, const FeatureMap<S>& input, ForwardCache<S>& cache) {
  if (params.layers.empty()) throw std::invalid_argument("forward: network has no layers");
  if (input.height < 1 || input.width < 1 || input.pixels() != static_cast<Eigen::Index>(input.height) * input.width) {
    throw std::invalid_argument("forward: malformed input feature map");
  }
  if (input.channels() != params.layers.front().spec.in_channels) {
    throw std::invalid_argument("forward: input has " + std::to_string(input.channels()) + " channels, network expects " +
                                std::to_string(params.layers.front().spec.in_channels));
  }
  if (!input.data.allFinite()) throw std::invalid_argument("forward: non-finite input");

  cache.activations.resize(params.layers.size() + 1);
  cache.activations[0] = input;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams<S>& layer = params.layers[l];
    const FeatureMap<S>& x = cache.activations[l];
    if (x.channels() != layer.spec.in_channels) throw std::invalid_argument("forward: layer channel mismatch");
    FeatureMap<S>& y = cache.activations[l + 1];
    y.height = x.height;
    y.width = x.width;
    detail::im2col(x, cache.cols);
    y.data.noalias() = layer.weights * cache.cols;
    y.data.colwise() += layer.bias;
    if (layer.spec.activation == Activation::relu) {
      y.data = y.data.cwiseMax(S(0));
    } else {
      y.data = y.data.unaryExpr([](S z) { return detail::sigmoid(z); });
    }
  }
}

template <typename S>
ForwardCache<S> forward(const NetworkParameters<S>& params, const FeatureMap<S>& input) {
  ForwardCache<S> cache;
  forward(params, input, cache);
  return cache;
}

/// Scratch buffers for backward; reuse one per thread.
template <typename S>
struct BackwardWorkspace {
  Matrix<S> cols, dz, dcols, upstream;
};

/// Adds the parameter gradients for a loss whose gradient w.r.t. the network
/// output is `grad_output` (out_channels x pixels) into `grads`.
template <typename S>
void backward_accumulate(const NetworkParameters<S>& params, const ForwardCache<S>& cache,
                         const std::type_identity_t<Matrix<S>>& grad_output, NetworkParameters<S>& grads,
                         BackwardWorkspace<S>& ws) {
  const std::size_t n = params.layers.size();
  if (cache.activations.size() != n + 1) throw std::logic_error("backward: cache does not match the network");
  for (std::size_t l = 0; l < n; ++l) {
    if (cache.activations[l].channels() != params.layers[l].spec.in_channels ||
        cache.activations[l + 1].channels() != params.layers[l].spec.out_channels) {
      throw std::logic_error("backward: cache does not match the network");
    }
  }
  if (!params.congruent(grads)) throw std::invalid_argument("backward: gradient buffer does not match the network");
  const FeatureMap<S>& out = cache.output();
  if (grad_output.rows() != out.data.rows() || grad_output.cols() != out.data.cols()) {
    throw std::invalid_argument("backward: gradient shape does not match the output");
  }

  ws.upstream = grad_output;
  for (std::size_t l = n; l-- > 0;) {
    const LayerParams<S>& layer = params.layers[l];
    const FeatureMap<S>& x = cache.activations[l];
    const Matrix<S>& a = cache.activations[l + 1].data;
    if (layer.spec.activation == Activation::relu) {
      // Zero at and below zero pre-activation.
      ws.dz = (a.array() > S(0)).select(ws.upstream, S(0));
    } else {
      ws.dz = ws.upstream.array() * a.array() * (S(1) - a.array());
    }
    detail::im2col(x, ws.cols);
    grads.layers[l].weights.noalias() += ws.dz * ws.cols.transpose();
    grads.layers[l].bias += ws.dz.rowwise().sum();
    if (l > 0) {
      ws.dcols.noalias() = layer.weights.transpose() * ws.dz;
      detail::col2im(ws.dcols, x.channels(), x.height, x.width, ws.upstream);
    }
  }
}

template <typename S>
NetworkParameters<S> backward(const NetworkParameters<S>& params, const ForwardCache<S>& cache,
                              const std::type_identity_t<Matrix<S>>& grad_output) {
  NetworkParameters<S> grads = NetworkParameters<S>::zeros(params.specs());
  BackwardWorkspace<S> ws;
  backward_accumulate(params, cache, grad_output, grads, ws);
  return grads;
}

template <typename S>
struct LossValue {
  S loss;
  Matrix<S> gradient;
};

/// Mean over pixels of (pred - target)^2 with gradient 2 (pred - target) / N.
template <typename S>
LossValue<S> mse_loss(const Matrix<S>& pred, const Matrix<S>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || pred.size() == 0) {
    throw std::invalid_argument("mse_loss: prediction and target shapes differ");
  }
  const Matrix<S> diff = pred - target;
  const S n = static_cast<S>(pred.size());
  return {diff.squaredNorm() / n, (S(2) / n) * diff};
}

template <typename S>
struct AdamState {
  std::uint64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  NetworkParameters<S> m;
  NetworkParameters<S> v;

  static AdamState start(const NetworkParameters<S>& params, double lr = 1e-4) {
    AdamState s;
    s.lr = lr;
    s.m = NetworkParameters<S>::zeros(params.specs());
    s.v = NetworkParameters<S>::zeros(params.specs());
    return s;
  }
};

/// Raised when a gradient contains NaN or infinity.
class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One bias-corrected Adam update.
template <typename S>
void adam_step(AdamState<S>& state, NetworkParameters<S>& params, const NetworkParameters<S>& grads) {
  if (!params.congruent(grads) || !params.congruent(state.m) || !params.congruent(state.v)) {
    throw std::invalid_argument("adam_step: parameters, gradients and moments must be congruent");
  }
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    const auto& g = grads.layers[l];
    if (!g.weights.allFinite() || !g.bias.allFinite()) {
      throw NonFiniteGradient("adam_step: non-finite gradient in layer " + std::to_string(l) + " (" +
                              std::to_string(g.spec.in_channels) + "->" + std::to_string(g.spec.out_channels) +
                              ") at step " + std::to_string(state.step + 1) +
                              ", max |w grad| = " + std::to_string(static_cast<double>(g.weights.cwiseAbs().maxCoeff())));
    }
  }
  ++state.step;
  const S b1 = static_cast<S>(state.beta1), b2 = static_cast<S>(state.beta2);
  const S c1 = static_cast<S>(1.0 - std::pow(state.beta1, static_cast<double>(state.step)));
  const S c2 = static_cast<S>(1.0 - std::pow(state.beta2, static_cast<double>(state.step)));
  const S lr = static_cast<S>(state.lr), eps = static_cast<S>(state.epsilon);
  auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.cwiseProduct(g);
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weights, grads.layers[l].weights, state.m.layers[l].weights, state.v.layers[l].weights);
    update(params.layers[l].bias, grads.layers[l].bias, state.m.layers[l].bias, state.v.layers[l].bias);
  }
}

template <typename S>
ProbabilityMap predict(const NetworkParameters<S>& params, const Image& img) {
  const ForwardCache<S> cache = forward(params, to_input<S>(img));
  ProbabilityMap out(img.height(), img.width());
  auto px = out.pixels();
  const Matrix<S>& y = cache.output().data;
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(y(0, static_cast<Eigen::Index>(i)));
  return out;
}

// Training.

template <typename S>
struct TrainingSample {
  FeatureMap<S> input;
  Matrix<S> target;
};

template <typename S>
TrainingSample<S> make_training_sample(const Image& img, const Mask& mask) {
  if (!img.same_shape(mask)) throw std::invalid_argument("training sample: image and mask dimensions differ");
  return {to_input<S>(img), to_target<S>(mask)};
}

struct TrainOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 16;
  int max_epochs = 100;
  int patience = 10;
  /// Hard cap on optimizer steps; 0 means no cap.
  std::uint64_t max_steps = 0;
  /// Stop once a step's training loss falls below this value; 0 disables.
  double target_loss = 0.0;
  std::uint64_t seed = 0;
};

struct StepRecord {
  std::uint64_t step = 0;
  double train_mse = 0;
  /// Present on the last step of each epoch.
  std::optional<double> val_mse;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

template <typename S>
struct TrainResult {
  NetworkParameters<S> best;
  NetworkParameters<S> last;
  AdamState<S> optimizer;
  std::vector<StepRecord> history;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int epochs = 0;
  bool early_stopped = false;
};

template <typename S>
double mean_loss(const NetworkParameters<S>& params, const std::vector<TrainingSample<S>>& samples) {
  double total = 0.0;
  ForwardCache<S> cache;
  for (const auto& s : samples) {
    forward(params, s.input, cache);
    total += static_cast<double>(mse_loss(cache.output().data, s.target).loss);
  }
  return total / static_cast<double>(samples.size());
}

/// Mini-batch Adam with a seeded shuffle per epoch. The selection loss is the
/// validation MSE, or the epoch's mean training loss when `val` is empty.
/// `on_best` is called each time the selection loss improves.
template <typename S>
TrainResult<S> train(NetworkParameters<S> params, const std::vector<TrainingSample<S>>& train_set,
                     const std::vector<TrainingSample<S>>& val_set, const TrainOptions& opt,
                     const std::type_identity_t<std::function<void(const NetworkParameters<S>&, const AdamState<S>&)>>&
                         on_best = {}) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training split");
  if (opt.batch_size < 1 || opt.max_epochs < 1 || opt.patience < 1 || !(opt.lr > 0)) {
    throw std::invalid_argument("train: batch size, epochs, patience and learning rate must be positive");
  }
  TrainResult<S> r;
  r.optimizer = AdamState<S>::start(params, opt.lr);
  r.optimizer.beta1 = opt.beta1;
  r.optimizer.beta2 = opt.beta2;
  r.optimizer.epsilon = opt.epsilon;
  r.best = params;

  std::vector<std::size_t> order(train_set.size());
  NetworkParameters<S> grads = NetworkParameters<S>::zeros(params.specs());
  ForwardCache<S> cache;
  BackwardWorkspace<S> ws;
  int stale = 0;
  bool capped = false;
  for (int epoch = 0; epoch < opt.max_epochs && !capped; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RandomStream rng(opt.seed, "train", "epoch" + std::to_string(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      const S scale = S(1) / static_cast<S>(end - start);
      for (auto& g : grads.layers) {
        g.weights.setZero();
        g.bias.setZero();
      }
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const TrainingSample<S>& s = train_set[order[b]];
        forward(params, s.input, cache);
        LossValue<S> lv = mse_loss(cache.output().data, s.target);
        batch_loss += static_cast<double>(lv.loss);
        lv.gradient *= scale;
        backward_accumulate(params, cache, lv.gradient, grads, ws);
      }
      adam_step(r.optimizer, params, grads);
      batch_loss /= static_cast<double>(end - start);
      r.history.push_back({r.optimizer.step, batch_loss, std::nullopt});
      epoch_loss += batch_loss;
      ++epoch_batches;
      if ((opt.max_steps && r.optimizer.step >= opt.max_steps) || batch_loss < opt.target_loss) {
        capped = true;
        break;
      }
    }
    r.epochs = epoch + 1;
    const double selection = val_set.empty() ? epoch_loss / epoch_batches : mean_loss(params, val_set);
    r.history.back().val_mse = selection;
    spdlog::debug("epoch {} step {} train {:.6g} val {:.6g}", epoch, r.optimizer.step, epoch_loss / epoch_batches,
                  selection);
    if (selection < r.best_loss) {
      r.best_loss = selection;
      r.best_epoch = epoch;
      r.best = params;
      stale = 0;
      if (on_best) on_best(params, r.optimizer);
    } else if (++stale >= opt.patience) {
      r.early_stopped = true;
      break;
    }
  }
  r.last = std::move(params);
  return r;
}

inline void write_loss_csv(const std::filesystem::path& path, const std::vector<StepRecord>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot create loss log " + path.string());
  out << "step,train_mse,val_mse\n";
  char buf[96];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%llu,%.9g,", static_cast<unsigned long long>(h.step), h.train_mse);
    out << buf;
    if (h.val_mse) {
      std::snprintf(buf, sizeof buf, "%.9g", *h.val_mse);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing loss log " + path.string());
}

// Checkpoints: little-endian "OFXFCN1", u32 layer count, per layer u32
// (in, out, kh, kw), then per layer f32 weights (out x in x kh x kw,
// row-major) and biases. Optionally followed by the Adam state: u64 step,
// f64 lr, beta1, beta2, epsilon, then m and v in the parameter layout.
// Activations are implied: ReLU for every layer but the last (sigmoid).

inline constexpr char kCheckpointMagic[7] = {'O', 'F', 'X', 'F', 'C', 'N', '1'};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename U>
void put_le(std::ostream& out, U v) {
  char b[sizeof(U)];
  for (std::size_t k = 0; k < sizeof(U); ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
  out.write(b, sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) throw CheckpointError("truncated checkpoint");
  U v = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<U>(b[k]) << (8 * k);
  return v;
}

inline void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }
inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

inline void put_tensors(std::ostream& out, const NetworkParameters<float>& p) {
  for (const auto& l : p.layers) {
    for (int o = 0; o < l.spec.out_channels; ++o)
      for (int i = 0; i < l.spec.in_channels; ++i)
        for (int ky = 0; ky < LayerSpec::kernel; ++ky)
          for (int kx = 0; kx < LayerSpec::kernel; ++kx) put_f32(out, l.weight(o, i, ky, kx));
    for (Eigen::Index o = 0; o < l.bias.size(); ++o) put_f32(out, l.bias[o]);
  }
}

inline void get_tensors(std::istream& in, NetworkParameters<float>& p) {
  for (auto& l : p.layers) {
    for (int o = 0; o < l.spec.out_channels; ++o)
      for (int i = 0; i < l.spec.in_channels; ++i)
        for (int ky = 0; ky < LayerSpec::kernel; ++ky)
          for (int kx = 0; kx < LayerSpec::kernel; ++kx) l.weight(o, i, ky, kx) = get_f32(in);
    for (Eigen::Index o = 0; o < l.bias.size(); ++o) l.bias[o] = get_f32(in);
  }
}

}  // namespace detail

struct Checkpoint {
  NetworkParameters<float> params;
  std::optional<AdamState<float>> optimizer;
};

inline void save_checkpoint(const std::filesystem::path& path, const NetworkParameters<float>& params,
                            const AdamState<float>* optimizer = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot create checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.spec.in_channels));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.spec.out_channels));
    detail::put_le<std::uint32_t>(out, LayerSpec::kernel);
    detail::put_le<std::uint32_t>(out, LayerSpec::kernel);
  }
  detail::put_tensors(out, params);
  if (optimizer) {
    detail::put_le<std::uint64_t>(out, optimizer->step);
    detail::put_f64(out, optimizer->lr);
    detail::put_f64(out, optimizer->beta1);
    detail::put_f64(out, optimizer->beta2);
    detail::put_f64(out, optimizer->epsilon);
    detail::put_tensors(out, optimizer->m);
    detail::put_tensors(out, optimizer->v);
  }
  out.flush();
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kCheckpointMagic)) {
    throw CheckpointError("not a network checkpoint: " + path.string());
  }
  const std::uint32_t n = detail::get_le<std::uint32_t>(in);
  if (n == 0 || n > 4096) throw CheckpointError("implausible layer count in " + path.string());
  std::vector<LayerSpec> specs;
  for (std::uint32_t l = 0; l < n; ++l) {
    const std::uint32_t in_c = detail::get_le<std::uint32_t>(in);
    const std::uint32_t out_c = detail::get_le<std::uint32_t>(in);
    const std::uint32_t kh = detail::get_le<std::uint32_t>(in);
    const std::uint32_t kw = detail::get_le<std::uint32_t>(in);
    if (kh != LayerSpec::kernel || kw != LayerSpec::kernel) throw CheckpointError("unsupported kernel size");
    if (in_c == 0 || out_c == 0 || in_c > 65536 || out_c > 65536) throw CheckpointError("implausible channel count");
    if (l > 0 && static_cast<int>(in_c) != specs.back().out_channels) throw CheckpointError("layer chain mismatch");
    specs.push_back({static_cast<int>(in_c), static_cast<int>(out_c), l + 1 == n ? Activation::sigmoid : Activation::relu});
  }
  Checkpoint cp{NetworkParameters<float>::zeros(specs), std::nullopt};
  detail::get_tensors(in, cp.params);
  if (in.peek() != std::char_traits<char>::eof()) {
    AdamState<float> s;
    s.step = detail::get_le<std::uint64_t>(in);
    s.lr = detail::get_f64(in);
    s.beta1 = detail::get_f64(in);
    s.beta2 = detail::get_f64(in);
    s.epsilon = detail::get_f64(in);
    s.m = NetworkParameters<float>::zeros(specs);
    s.v = NetworkParameters<float>::zeros(specs);
    detail::get_tensors(in, s.m);
    detail::get_tensors(in, s.v);
    if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes in " + path.string());
    cp.optimizer = std::move(s);
  }
  if (!cp.params.all_finite()) throw CheckpointError("non-finite parameters in " + path.string());
  return cp;
}

}  // namespace ofx
