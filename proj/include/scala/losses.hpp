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

#include <optional>
#include <vector>

#include "scala/tensor.hpp"

namespace scala {

/// Label distribution P(y) over M classes, optionally with the counts it was
/// estimated from.
struct LabelDistribution {
  Vector probs;
  std::vector<long> counts;

  static LabelDistribution uniform(int num_classes);
  /// Validates nonnegativity and normalization (within 1e-12).
  static LabelDistribution from_probs(Vector probs);
  static LabelDistribution from_counts(std::vector<long> counts);

  int num_classes() const { return static_cast<int>(probs.size()); }
};

struct LossOutput {
  double value = 0.0;
  Matrix logit_grad;
};

enum class ZeroPriorPolicy {
  kNegativeInfinity,  // log 0 = -inf; the class drops out of the softmax
  kReject,            // any zero entry is an error
};

Matrix softmax_probs(const Matrix& logits);

/// Mean softmax cross-entropy; logit_grad = (probs - one_hot) / batch.
LossOutput cross_entropy(const Matrix& logits, const Labels& labels);

Vector log_prior(const LabelDistribution& dist,
                 ZeroPriorPolicy policy = ZeroPriorPolicy::kNegativeInfinity);

/// Softmax cross-entropy on logits shifted by log P(y). Every label in the
/// batch must have positive prior.
LossOutput logit_adjusted_ce(const Matrix& logits, const Labels& labels,
                             const LabelDistribution& prior);

/// Row-wise argmax, ties to the lowest class index.
Labels predict(const Matrix& logits);

/// Row-wise argmax of s_y - log P(y) over classes with P(y) > 0.
Labels predict_balanced(const Matrix& logits, const LabelDistribution& prior);

struct AccuracyReport {
  double overall = 0.0;
  /// Classes absent from the evaluation labels report NaN and are skipped in
  /// the balanced mean.
  std::vector<double> per_class;
  double balanced = 0.0;
};

AccuracyReport accuracy_report(const Labels& predicted, const Labels& truth, int num_classes);

}  // namespace scala
