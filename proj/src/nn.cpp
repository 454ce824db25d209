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

#include "scala/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace scala {

Layer Layer::dense(Matrix weights, RowVector bias) {
  if (bias.size() != weights.cols()) {
    throw std::invalid_argument("dense layer bias has " + std::to_string(bias.size()) +
                                " entries, expected " + std::to_string(weights.cols()));
  }
  Layer layer;
  layer.kind = LayerKind::kDense;
  layer.weights = std::move(weights);
  layer.bias = std::move(bias);
  return layer;
}

Layer Layer::relu() { return Layer{}; }

std::size_t Layer::parameter_count() const {
  return is_dense() ? static_cast<std::size_t>(weights.size() + bias.size()) : 0;
}

bool Layer::operator==(const Layer& other) const {
  if (kind != other.kind) return false;
  if (!is_dense()) return true;
  return weights.rows() == other.weights.rows() && weights.cols() == other.weights.cols() &&
         weights == other.weights && bias.size() == other.bias.size() && bias == other.bias;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.parameter_count();
  return n;
}

LayeredModel make_mlp(int input_dim, std::span<const int> hidden, int num_classes,
                      std::size_t cut_index, Rng& rng) {
  if (input_dim < 1 || num_classes < 2) {
    throw std::invalid_argument("make_mlp: need input_dim >= 1 and num_classes >= 2");
  }
  LayeredModel model;
  int fan_in = input_dim;
  auto add_dense = [&](int fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(fan_in, fan_out);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
    model.network.layers.push_back(Layer::dense(std::move(w), RowVector::Zero(fan_out)));
    fan_in = fan_out;
  };
  for (int width : hidden) {
    if (width < 1) throw std::invalid_argument("make_mlp: hidden widths must be positive");
    add_dense(width);
    model.network.layers.push_back(Layer::relu());
  }
  add_dense(num_classes);
  if (cut_index < 1 || cut_index >= model.network.size()) {
    throw std::invalid_argument("make_mlp: cut_index " + std::to_string(cut_index) +
                                " outside [1, " + std::to_string(model.network.size()) + ")");
  }
  model.cut_index = cut_index;
  return model;
}

ForwardResult forward(const Network& net, const Matrix& input) {
  ForwardResult result;
  result.cache.inputs.reserve(net.size());
  Matrix x = input;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const Layer& layer = net.layers[i];
    result.cache.inputs.push_back(x);
    if (layer.is_dense()) {
      if (x.cols() != layer.weights.rows()) {
        throw std::invalid_argument("forward: layer " + std::to_string(i) + " expects " +
                                    std::to_string(layer.weights.rows()) + " input units, got " +
                                    shape_string(x));
      }
      Matrix y = x * layer.weights;
      y.rowwise() += layer.bias;
      x = std::move(y);
    } else {
      x = x.cwiseMax(0.0);
    }
  }
  result.output = std::move(x);
  return result;
}

BackwardResult backward(const Network& net, const ForwardCache& cache, const Matrix& upstream_grad) {
  if (cache.inputs.size() != net.size()) {
    throw std::invalid_argument("backward: cache has " + std::to_string(cache.inputs.size()) +
                                " layers, network has " + std::to_string(net.size()));
  }
  BackwardResult result;
  result.grads.layers.resize(net.size());
  Matrix grad = upstream_grad;
  if (!net.empty()) {
    const Layer& last = net.layers.back();
    const Matrix& last_in = cache.inputs.back();
    const Eigen::Index out_cols = last.is_dense() ? last.weights.cols() : last_in.cols();
    if (grad.rows() != last_in.rows() || grad.cols() != out_cols) {
      throw std::invalid_argument("backward: upstream gradient " + shape_string(grad) +
                                  " does not match output shape " + std::to_string(last_in.rows()) +
                                  "x" + std::to_string(out_cols));
    }
  }
  for (std::size_t i = net.size(); i-- > 0;) {
    const Layer& layer = net.layers[i];
    const Matrix& in = cache.inputs[i];
    Layer& g = result.grads.layers[i];
    if (layer.is_dense()) {
      g.kind = LayerKind::kDense;
      g.weights = in.transpose() * grad;
      g.bias = grad.colwise().sum();
      grad = grad * layer.weights.transpose();
    } else {
      g.kind = LayerKind::kRelu;
      grad = (in.array() > 0.0).select(grad, 0.0);
    }
  }
  result.input_grad = std::move(grad);
  return result;
}

void sgd_step(Network& params, const Network& grads, double eta) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("sgd_step: parameter/gradient layer counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Layer& p = params.layers[i];
    const Layer& g = grads.layers[i];
    if (p.kind != g.kind) throw std::invalid_argument("sgd_step: layer kind mismatch");
    if (!p.is_dense()) continue;
    if (p.weights.rows() != g.weights.rows() || p.weights.cols() != g.weights.cols() ||
        p.bias.size() != g.bias.size()) {
      throw std::invalid_argument("sgd_step: shape mismatch at layer " + std::to_string(i));
    }
    p.weights -= eta * g.weights;
    p.bias -= eta * g.bias;
  }
}

std::pair<Network, Network> split_model(const LayeredModel& model) {
  const auto n = model.network.size();
  if (model.cut_index < 1 || model.cut_index >= n) {
    throw std::invalid_argument("split_model: cut_index " + std::to_string(model.cut_index) +
                                " outside [1, " + std::to_string(n) + ")");
  }
  const auto cut = static_cast<std::ptrdiff_t>(model.cut_index);
  Network client{{model.network.layers.begin(), model.network.layers.begin() + cut}};
  Network server{{model.network.layers.begin() + cut, model.network.layers.end()}};
  return {std::move(client), std::move(server)};
}

LayeredModel join_models(const Network& client_part, const Network& server_part) {
  LayeredModel model;
  model.network.layers = client_part.layers;
  model.network.layers.insert(model.network.layers.end(), server_part.layers.begin(),
                              server_part.layers.end());
  model.cut_index = client_part.size();
  return model;
}

Network zeros_like(const Network& net) {
  Network z = net;
  for (auto& layer : z.layers) {
    if (!layer.is_dense()) continue;
    layer.weights.setZero();
    layer.bias.setZero();
  }
  return z;
}

double squared_norm(const Network& grads) {
  double s = 0.0;
  for (const auto& layer : grads.layers) {
    if (!layer.is_dense()) continue;
    s += layer.weights.squaredNorm() + layer.bias.squaredNorm();
  }
  return s;
}

Vector flatten(const Network& net) {
  Vector v(static_cast<Eigen::Index>(net.parameter_count()));
  Eigen::Index at = 0;
  for (const auto& layer : net.layers) {
    if (!layer.is_dense()) continue;
    v.segment(at, layer.weights.size()) = layer.weights.reshaped();
    at += layer.weights.size();
    v.segment(at, layer.bias.size()) = layer.bias.transpose();
    at += layer.bias.size();
  }
  return v;
}

Network finite_difference_grad(const Network& net, const Matrix& input, const OutputLoss& loss_fn,
                               double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_grad: eps must be positive");
  Network probe = net;
  Network grads = zeros_like(net);
  auto eval = [&] { return loss_fn(forward(probe, input).output); };
  auto central = [&](double& param) {
    const double saved = param;
    param = saved + eps;
    const double up = eval();
    param = saved - eps;
    const double down = eval();
    param = saved;
    return (up - down) / (2.0 * eps);
  };
  for (std::size_t l = 0; l < probe.size(); ++l) {
    Layer& layer = probe.layers[l];
    if (!layer.is_dense()) continue;
    for (Eigen::Index j = 0; j < layer.weights.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
        grads.layers[l].weights(i, j) = central(layer.weights(i, j));
    for (Eigen::Index j = 0; j < layer.bias.size(); ++j)
      grads.layers[l].bias(j) = central(layer.bias(j));
  }
  return grads;
}

}  // namespace scala
