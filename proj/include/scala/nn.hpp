/*
 * Copyright 2026 The SCALA-SFL Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "scala/rng.hpp"
#include "scala/tensor.hpp"

namespace scala {

enum class LayerKind { kDense, kRelu };

/// One layer of a feed-forward stack. Dense layers compute
/// `out = in * weights + bias` with `weights` shaped (in_units x out_units);
/// ReLU layers carry no parameters.
struct Layer {
  LayerKind kind = LayerKind::kRelu;
  Matrix weights;
  RowVector bias;

  static Layer dense(Matrix weights, RowVector bias);
  static Layer relu();

  bool is_dense() const { return kind == LayerKind::kDense; }
  std::size_t parameter_count() const;

  bool operator==(const Layer& other) const;
};

/// An ordered list of layers. Also used as the gradient container: a
/// gradient is a Network of the same shape holding d(loss)/d(param).
struct Network {
  std::vector<Layer> layers;

  std::size_t size() const { return layers.size(); }
  bool empty() const { return layers.empty(); }
  std::size_t parameter_count() const;

  bool operator==(const Network& other) const = default;
};

/// A full model together with the cut point separating the client-side
/// layers [0, cut_index) from the server-side layers [cut_index, N).
struct LayeredModel {
  Network network;
  std::size_t cut_index = 1;

  bool operator==(const LayeredModel& other) const = default;
};

/// Per-layer inputs retained by `forward` for the backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

struct BackwardResult {
  Network grads;
  Matrix input_grad;
};

/// Glorot-uniform dense layers with zero biases, ReLU between dense layers,
/// and a final dense classifier with `num_classes` outputs.
LayeredModel make_mlp(int input_dim, std::span<const int> hidden, int num_classes,
                      std::size_t cut_index, Rng& rng);

ForwardResult forward(const Network& net, const Matrix& input);

/// Backpropagates `upstream_grad` (d loss / d output) through `net`.
BackwardResult backward(const Network& net, const ForwardCache& cache, const Matrix& upstream_grad);

/// params <- params - eta * grads.
void sgd_step(Network& params, const Network& grads, double eta);

std::pair<Network, Network> split_model(const LayeredModel& model);
LayeredModel join_models(const Network& client_part, const Network& server_part);

/// Zero-valued gradient container shaped like `net`.
Network zeros_like(const Network& net);

double squared_norm(const Network& grads);

/// Flattened view of every parameter, weights before bias, layer by layer.
Vector flatten(const Network& net);

using OutputLoss = std::function<double(const Matrix& output)>;

/// Central-difference estimate of d loss / d param for every parameter of
/// `net`, where the loss is `loss_fn(forward(net, input).output)`.
Network finite_difference_grad(const Network& net, const Matrix& input, const OutputLoss& loss_fn,
                               double eps = 1e-5);

}  // namespace scala
