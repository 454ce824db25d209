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

#include "scala/losses.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace scala {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_labels(const Matrix& logits, const Labels& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw std::invalid_argument("loss: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(logits.rows()) + " logit rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= logits.cols()) {
      throw std::invalid_argument("loss: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(logits.cols()) + ")");
    }
  }
}

// Softmax of rows that may contain -inf entries (but at least one finite one).
Matrix stable_softmax(const Matrix& shifted) {
  Matrix probs(shifted.rows(), shifted.cols());
  for (Eigen::Index r = 0; r < shifted.rows(); ++r) {
    const double m = shifted.row(r).maxCoeff();
    probs.row(r) = (shifted.row(r).array() - m).exp();
    probs.row(r) /= probs.row(r).sum();
  }
  return probs;
}

LossOutput ce_from_shifted(const Matrix& shifted, const Labels& labels) {
  const auto n = shifted.rows();
  LossOutput out;
  out.logit_grad = stable_softmax(shifted);
  double total = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double m = shifted.row(r).maxCoeff();
    const double lse = m + std::log((shifted.row(r).array() - m).exp().sum());
    const int y = labels[static_cast<std::size_t>(r)];
    total += lse - shifted(r, y);
    out.logit_grad(r, y) -= 1.0;
  }
  if (n > 0) {
    out.value = total / static_cast<double>(n);
    out.logit_grad /= static_cast<double>(n);
  }
  return out;
}

}  // namespace

LabelDistribution LabelDistribution::uniform(int num_classes) {
  if (num_classes < 1) throw std::invalid_argument("uniform distribution needs M >= 1");
  LabelDistribution d;
  d.probs = Vector::Constant(num_classes, 1.0 / num_classes);
  return d;
}

LabelDistribution LabelDistribution::from_probs(Vector probs) {
  if (probs.size() < 1) throw std::invalid_argument("label distribution is empty");
  if (!probs.allFinite() || (probs.array() < 0.0).any()) {
    throw std::invalid_argument("label distribution has negative or non-finite entries");
  }
  if (std::abs(probs.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("label distribution does not sum to 1");
  }
  LabelDistribution d;
  d.probs = std::move(probs);
  return d;
}

LabelDistribution LabelDistribution::from_counts(std::vector<long> counts) {
  const long total = std::accumulate(counts.begin(), counts.end(), 0L);
  if (counts.empty() || total <= 0) {
    throw std::invalid_argument("label distribution from empty label multiset");
  }
  LabelDistribution d;
  d.probs.resize(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t y = 0; y < counts.size(); ++y) {
    if (counts[y] < 0) throw std::invalid_argument("negative label count");
    d.probs(static_cast<Eigen::Index>(y)) =
        static_cast<double>(counts[y]) / static_cast<double>(total);
  }
  d.counts = std::move(counts);
  return d;
}

Matrix softmax_probs(const Matrix& logits) {
  if (logits.cols() < 2) throw std::invalid_argument("softmax_probs: need at least 2 classes");
  if (!logits.allFinite()) throw std::invalid_argument("softmax_probs: non-finite logits");
  return stable_softmax(logits);
}

LossOutput cross_entropy(const Matrix& logits, const Labels& labels) {
  check_labels(logits, labels);
  if (!logits.allFinite()) throw std::invalid_argument("cross_entropy: non-finite logits");
  return ce_from_shifted(logits, labels);
}

Vector log_prior(const LabelDistribution& dist, ZeroPriorPolicy policy) {
  Vector out(dist.probs.size());
  for (Eigen::Index y = 0; y < dist.probs.size(); ++y) {
    const double p = dist.probs(y);
    if (p > 0.0) {
      out(y) = std::log(p);
    } else if (policy == ZeroPriorPolicy::kReject) {
      throw std::invalid_argument("log_prior: class " + std::to_string(y) + " has zero prior");
    } else {
      out(y) = kNegInf;
    }
  }
  return out;
}

LossOutput logit_adjusted_ce(const Matrix& logits, const Labels& labels,
                             const LabelDistribution& prior) {
  check_labels(logits, labels);
  if (prior.probs.size() != logits.cols()) {
    throw std::invalid_argument("logit_adjusted_ce: prior has " +
                                std::to_string(prior.probs.size()) + " classes, logits have " +
                                std::to_string(logits.cols()));
  }
  if (!logits.allFinite()) throw std::invalid_argument("logit_adjusted_ce: non-finite logits");
  for (int y : labels) {
    if (!(prior.probs(y) > 0.0)) {
      throw std::invalid_argument("logit_adjusted_ce: label " + std::to_string(y) +
                                  " has zero prior");
    }
  }
  Matrix shifted = logits;
  shifted.rowwise() += log_prior(prior).transpose();
  return ce_from_shifted(shifted, labels);
}

Labels predict(const Matrix& logits) {
  Labels out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

Labels predict_balanced(const Matrix& logits, const LabelDistribution& prior) {
  if (prior.probs.size() != logits.cols()) {
    throw std::invalid_argument("predict_balanced: prior/logit class count mismatch");
  }
  if (!(prior.probs.array() > 0.0).any()) {
    throw std::invalid_argument("predict_balanced: prior is zero on every class");
  }
  const Vector lp = log_prior(prior);
  Labels out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = -1;
    double best_score = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (!(prior.probs(c) > 0.0)) continue;
      const double score = logits(r, c) - lp(c);
      if (best < 0 || score > best_score) {
        best = c;
        best_score = score;
      }
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

AccuracyReport accuracy_report(const Labels& predicted, const Labels& truth, int num_classes) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("accuracy_report: prediction/label count mismatch");
  }
  AccuracyReport report;
  std::vector<long> hits(static_cast<std::size_t>(num_classes), 0);
  std::vector<long> seen(static_cast<std::size_t>(num_classes), 0);
  long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto y = static_cast<std::size_t>(truth[i]);
    ++seen.at(y);
    if (predicted[i] == truth[i]) {
      ++hits[y];
      ++correct;
    }
  }
  report.overall = truth.empty() ? 0.0 : static_cast<double>(correct) / truth.size();
  report.per_class.resize(static_cast<std::size_t>(num_classes));
  double sum = 0.0;
  int present = 0;
  for (std::size_t y = 0; y < seen.size(); ++y) {
    if (seen[y] == 0) {
      report.per_class[y] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    report.per_class[y] = static_cast<double>(hits[y]) / static_cast<double>(seen[y]);
    sum += report.per_class[y];
    ++present;
  }
  report.balanced = present > 0 ? sum / present : 0.0;
  return report;
}

}  // namespace scala
