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

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/rational.hpp>

#include "scala/nn.hpp"
#include "scala/rng.hpp"

namespace scala::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Labels random_labels(std::size_t n, int num_classes, Rng& rng) {
  std::uniform_int_distribution<int> u(0, num_classes - 1);
  Labels out(n);
  for (auto& y : out) y = u(rng);
  return out;
}

/// Largest |a - b| / max(|a|, |b|, floor) over all parameters.
inline double max_relative_error(const Network& a, const Network& b, double floor = 1e-8) {
  const Vector fa = flatten(a);
  const Vector fb = flatten(b);
  if (fa.size() != fb.size()) return INFINITY;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < fa.size(); ++i) {
    const double denom = std::max({std::abs(fa(i)), std::abs(fb(i)), floor});
    worst = std::max(worst, std::abs(fa(i) - fb(i)) / denom);
  }
  return worst;
}

inline double max_abs_difference(const Network& a, const Network& b) {
  const Vector fa = flatten(a);
  const Vector fb = flatten(b);
  if (fa.size() != fb.size()) return INFINITY;
  return fa.size() == 0 ? 0.0 : (fa - fb).cwiseAbs().maxCoeff();
}

/// Random MLP: input width, 1-3 hidden layers, and a cut anywhere in [1, N).
struct RandomModel {
  LayeredModel model;
  int input_dim = 0;
  int num_classes = 0;
};

inline RandomModel random_model(Rng& rng) {
  std::uniform_int_distribution<int> width(2, 9);
  std::uniform_int_distribution<int> depth(1, 3);
  std::uniform_int_distribution<int> classes(2, 6);
  RandomModel out;
  out.input_dim = width(rng);
  out.num_classes = classes(rng);
  std::vector<int> hidden(static_cast<std::size_t>(depth(rng)));
  for (auto& h : hidden) h = width(rng);
  const std::size_t layers = 2 * hidden.size() + 1;
  std::uniform_int_distribution<std::size_t> cut(1, layers - 1);
  out.model = make_mlp(out.input_dim, hidden, out.num_classes, cut(rng), rng);
  // Nonzero biases so the bias gradients are exercised from a generic point.
  for (auto& layer : out.model.network.layers) {
    if (layer.is_dense()) layer.bias = random_matrix(1, layer.bias.cols(), rng, 0.1);
  }
  return out;
}

/// Exact check that some integer allocation has sum B, every B_k >= 1, and
/// |B_k - ideal_k| < 1 with ideal_k = n_k B / sum(n).
inline bool proportional_allocation_exists(const std::vector<std::size_t>& sizes, int batch) {
  using Frac = boost::rational<long long>;
  long long total = 0;
  for (auto n : sizes) total += static_cast<long long>(n);
  long long lo = 0;
  long long hi = 0;
  for (auto n : sizes) {
    const Frac ideal(static_cast<long long>(n) * batch, total);
    const long long fl = boost::rational_cast<long long>(ideal);  // truncation, ideal >= 0
    const bool integral = ideal.denominator() == 1;
    const long long low = std::max(1LL, fl);
    const long long high = integral ? fl : fl + 1;
    if (low > high) return false;
    lo += low;
    hi += high;
  }
  return lo <= batch && batch <= hi;
}

/// Sum, floor, and proportionality of one allocation, in exact arithmetic.
struct AllocationCheck {
  bool sum_ok = true;
  bool floor_ok = true;
  bool proportional = true;
};

inline AllocationCheck check_allocation(const std::vector<std::size_t>& sizes, int batch, const std::vector<int>& alloc) {
  using Frac = boost::rational<long long>;
  long long total = 0;
  for (auto n : sizes) total += static_cast<long long>(n);
  AllocationCheck c;
  long long sum = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    sum += alloc[k];
    c.floor_ok = c.floor_ok && alloc[k] >= 1;
    const Frac ideal(static_cast<long long>(sizes[k]) * batch, total);
    c.proportional = c.proportional && boost::abs(Frac(alloc[k]) - ideal) < Frac(1);
  }
  c.sum_ok = sum == batch;
  return c;
}

}  // namespace scala::testing
