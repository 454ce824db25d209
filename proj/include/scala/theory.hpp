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

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "scala/losses.hpp"
#include "scala/tensor.hpp"

namespace scala::theory {

/// Mutually orthogonal per-class features: every sample of class y carries
/// the same vector pi_y (a one-hot basis vector), so the class average of the
/// feature equals pi_y exactly.
struct OrthogonalFeatureSet {
  int num_classes = 0;
  int dim = 0;
  Matrix class_features;  // M x d, row y = pi_y
  std::vector<long> counts;
  LabelDistribution prior;
};

struct OrthogonalDataset {
  Matrix features;  // n x d
  Labels labels;
  OrthogonalFeatureSet set;
};

/// Class y receives round(n_total * P(y)) copies of e_y; rows are shuffled
/// with `seed`.
OrthogonalDataset build_orthogonal_dataset(int num_classes, int dim, const LabelDistribution& prior,
                                           long n_total, std::uint64_t seed);

enum class UpdateLoss { kPlain, kAdjusted };

// The classifier is a (d x M) weight matrix; column y is zeta_y and the logit
// of class y for feature x is s_y(x) = zeta_y . x.

/// Closed form for plain softmax cross-entropy:
///   eta P(y) avg_y( E / (1 + E) ) |pi_y|^2,  E = sum_{y' != y} exp(s_y' - s_y).
Vector analytic_logit_update_plain(const OrthogonalFeatureSet& fs, const Matrix& classifier, double eta);

/// Closed form for the logit-adjusted loss:
///   eta avg_y( P(y) T / (P(y) + T) ) |pi_y|^2,  T = sum_{y' != y} P(y') exp(s_y' - s_y).
Vector analytic_logit_update_adjusted(const OrthogonalFeatureSet& fs, const Matrix& classifier, double eta);

/// One full-dataset gradient step on the classifier through the nn and loss
/// modules, with class terms weighted by P(y) (class means times P(y)).
/// Returns (zeta_new - zeta)_y . pi_y per class.
Vector empirical_logit_update(const OrthogonalDataset& data, const Matrix& classifier, double eta,
                              UpdateLoss loss);

enum class Ordering { kAdjustedGreater, kEqual, kAdjustedLess };
char ordering_symbol(Ordering o);

struct ClassifierUpdateRow {
  double prior = 0.0;  // P(y) of the tracked class
  double plain_analytic = 0.0;
  double plain_empirical = 0.0;
  double adjusted_analytic = 0.0;
  double adjusted_empirical = 0.0;
  Ordering ordering = Ordering::kEqual;
};

struct ClassifierUpdateReport {
  int num_classes = 0;
  int dim = 0;
  double eta = 0.0;
  double feature_norm_sq = 1.0;
  std::vector<ClassifierUpdateRow> rows;
};

struct SweepOptions {
  int num_classes = 10;
  int dim = 10;
  double eta = 0.1;
  std::uint64_t seed = 0;
  /// Negative control: compute the "plain" columns with the adjusted loss and
  /// vice versa.
  bool swap_losses = false;
};

/// For each P(y) in the grid, class 0 gets P(y) and the others (1-P(y))/(M-1);
/// both updates are computed analytically and empirically from zeta = 0.
ClassifierUpdateReport theorem2_sweep(const SweepOptions& options, std::span<const double> prior_grid);

/// {0.001, 0.01, 0.1, 1/M, 0.5, 0.9, 0.99, 0.999}
std::vector<double> default_prior_grid(int num_classes);

struct CheckResult {
  bool passed = true;
  std::vector<std::string> failures;
};

/// Ordering (adjusted > plain below 1/M, equal at 1/M within 1e-12, less
/// above), analytic/empirical agreement within 1e-6 relative, and vanishing
/// updates at the grid extremes.
CheckResult check_report(const ClassifierUpdateReport& report);

/// Columns: P_y,plain_analytic,plain_empirical,adj_analytic,adj_empirical,ordering_flag
void write_report_csv(std::ostream& out, const ClassifierUpdateReport& report);

}  // namespace scala::theory
