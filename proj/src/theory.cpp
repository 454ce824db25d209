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

#include "scala/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "scala/format.hpp"
#include "scala/nn.hpp"
#include "scala/rng.hpp"

namespace scala::theory {
namespace {

constexpr double kEqualityTol = 1e-12;
constexpr double kAgreementTol = 1e-6;
constexpr double kExtremeFraction = 1e-2;

bool close_relative(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + 1e-15;
}

// s_{y'}(pi_y) - s_y(pi_y) for all y'.
Vector logit_gaps(const OrthogonalFeatureSet& fs, const Matrix& classifier, int y) {
  const RowVector logits = fs.class_features.row(y) * classifier;
  return (logits.array() - logits(y)).transpose();
}

void check_classifier(const OrthogonalFeatureSet& fs, const Matrix& classifier) {
  if (classifier.rows() != fs.dim || classifier.cols() != fs.num_classes) {
    throw std::invalid_argument("classifier must be " + std::to_string(fs.dim) + "x" +
                                std::to_string(fs.num_classes) + ", got " + shape_string(classifier));
  }
}

}  // namespace

OrthogonalDataset build_orthogonal_dataset(int num_classes, int dim, const LabelDistribution& prior,
                                           long n_total, std::uint64_t seed) {
  if (num_classes < 2 || dim < num_classes) {
    throw std::invalid_argument("build_orthogonal_dataset: need M >= 2 and d >= M");
  }
  if (prior.num_classes() != num_classes) {
    throw std::invalid_argument("build_orthogonal_dataset: prior has wrong class count");
  }
  OrthogonalDataset out;
  auto& fs = out.set;
  fs.num_classes = num_classes;
  fs.dim = dim;
  fs.prior = prior;
  fs.class_features = Matrix::Zero(num_classes, dim);
  for (int y = 0; y < num_classes; ++y) fs.class_features(y, y) = 1.0;
  fs.counts.resize(static_cast<std::size_t>(num_classes));
  long n = 0;
  for (int y = 0; y < num_classes; ++y) {
    const double p = prior.probs(y);
    const long c = std::lround(static_cast<double>(n_total) * p);
    if (p > 0.0 && c < 1) {
      throw std::invalid_argument("build_orthogonal_dataset: class " + std::to_string(y) +
                                  " has P(y) > 0 but round(n * P(y)) = 0; increase n_total");
    }
    fs.counts[static_cast<std::size_t>(y)] = c;
    n += c;
  }
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  for (int y = 0; y < num_classes; ++y) order.insert(order.end(), static_cast<std::size_t>(fs.counts[static_cast<std::size_t>(y)]), y);
  Rng rng = make_rng(seed, Stream::kTheory);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  out.features.resize(n, dim);
  out.labels = order;
  for (Eigen::Index r = 0; r < n; ++r) out.features.row(r) = fs.class_features.row(order[static_cast<std::size_t>(r)]);
  return out;
}

Vector analytic_logit_update_plain(const OrthogonalFeatureSet& fs, const Matrix& classifier, double eta) {
  check_classifier(fs, classifier);
  Vector out = Vector::Zero(fs.num_classes);
  for (int y = 0; y < fs.num_classes; ++y) {
    const double p = fs.prior.probs(y);
    if (!(p > 0.0)) continue;
    const Vector gaps = logit_gaps(fs, classifier, y);
    double e = 0.0;
    for (int k = 0; k < fs.num_classes; ++k) {
      if (k != y) e += std::exp(gaps(k));
    }
    out(y) = eta * p * (e / (1.0 + e)) * fs.class_features.row(y).squaredNorm();
  }
  return out;
}

Vector analytic_logit_update_adjusted(const OrthogonalFeatureSet& fs, const Matrix& classifier, double eta) {
  check_classifier(fs, classifier);
  Vector out = Vector::Zero(fs.num_classes);
  for (int y = 0; y < fs.num_classes; ++y) {
    const double p = fs.prior.probs(y);
    if (!(p > 0.0)) continue;
    const Vector gaps = logit_gaps(fs, classifier, y);
    double tail = 0.0;
    for (int k = 0; k < fs.num_classes; ++k) {
      if (k != y) tail += fs.prior.probs(k) * std::exp(gaps(k));
    }
    out(y) = eta * (p * tail / (p + tail)) * fs.class_features.row(y).squaredNorm();
  }
  return out;
}

Vector empirical_logit_update(const OrthogonalDataset& data, const Matrix& classifier, double eta,
                              UpdateLoss loss) {
  const auto& fs = data.set;
  check_classifier(fs, classifier);
  Network net;
  net.layers.push_back(Layer::dense(classifier, RowVector::Zero(fs.num_classes)));
  const ForwardResult fwd = forward(net, data.features);

  // Full-dataset loss sum_y P(y) * mean_{x in D_y} g(y, s(x)).
  Matrix upstream = Matrix::Zero(fwd.output.rows(), fwd.output.cols());
  for (int y = 0; y < fs.num_classes; ++y) {
    if (fs.counts[static_cast<std::size_t>(y)] == 0) continue;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
      if (data.labels[i] == y) rows.push_back(i);
    }
    const Labels labels(rows.size(), y);
    const Matrix logits = gather_rows(fwd.output, rows);
    const LossOutput lo = loss == UpdateLoss::kPlain ? cross_entropy(logits, labels)
                                                     : logit_adjusted_ce(logits, labels, fs.prior);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      upstream.row(static_cast<Eigen::Index>(rows[i])) =
          fs.prior.probs(y) * lo.logit_grad.row(static_cast<Eigen::Index>(i));
    }
  }
  const BackwardResult bwd = backward(net, fwd.cache, upstream);
  Network updated = net;
  sgd_step(updated, bwd.grads, eta);
  const Matrix delta = updated.layers[0].weights - classifier;

  Vector out(fs.num_classes);
  for (int y = 0; y < fs.num_classes; ++y) out(y) = fs.class_features.row(y).dot(delta.col(y));
  return out;
}

char ordering_symbol(Ordering o) {
  switch (o) {
    case Ordering::kAdjustedGreater: return '>';
    case Ordering::kEqual: return '=';
    case Ordering::kAdjustedLess: return '<';
  }
  return '?';
}

std::vector<double> default_prior_grid(int num_classes) {
  return {0.001, 0.01, 0.1, 1.0 / num_classes, 0.5, 0.9, 0.99, 0.999};
}

ClassifierUpdateReport theorem2_sweep(const SweepOptions& options, std::span<const double> prior_grid) {
  const int m = options.num_classes;
  if (m < 2) throw std::invalid_argument("theorem2_sweep: need M >= 2");
  ClassifierUpdateReport report;
  report.num_classes = m;
  report.dim = options.dim;
  report.eta = options.eta;
  report.feature_norm_sq = 1.0;
  const Matrix zeta = Matrix::Zero(options.dim, m);
  for (double p : prior_grid) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("theorem2_sweep: grid values must lie in (0, 1)");
    Vector probs = Vector::Constant(m, (1.0 - p) / (m - 1));
    probs(0) = p;
    LabelDistribution prior;
    prior.probs = probs;
    // Enough samples that every class keeps at least one copy.
    const double smallest = std::min(p, (1.0 - p) / (m - 1));
    const long n_total = std::max(1000L, static_cast<long>(std::ceil(2.0 / smallest)));
    const OrthogonalDataset data = build_orthogonal_dataset(m, options.dim, prior, n_total, options.seed);

    const UpdateLoss plain_loss = options.swap_losses ? UpdateLoss::kAdjusted : UpdateLoss::kPlain;
    const UpdateLoss adj_loss = options.swap_losses ? UpdateLoss::kPlain : UpdateLoss::kAdjusted;
    auto analytic = [&](UpdateLoss l) {
      return l == UpdateLoss::kPlain ? analytic_logit_update_plain(data.set, zeta, options.eta)
                                     : analytic_logit_update_adjusted(data.set, zeta, options.eta);
    };
    ClassifierUpdateRow row;
    row.prior = p;
    row.plain_analytic = analytic(plain_loss)(0);
    row.plain_empirical = empirical_logit_update(data, zeta, options.eta, plain_loss)(0);
    row.adjusted_analytic = analytic(adj_loss)(0);
    row.adjusted_empirical = empirical_logit_update(data, zeta, options.eta, adj_loss)(0);
    const double diff = row.adjusted_analytic - row.plain_analytic;
    row.ordering = std::abs(diff) <= kEqualityTol ? Ordering::kEqual
                   : diff > 0.0                   ? Ordering::kAdjustedGreater
                                                  : Ordering::kAdjustedLess;
    report.rows.push_back(row);
  }
  return report;
}

CheckResult check_report(const ClassifierUpdateReport& report) {
  CheckResult result;
  const double uniform = 1.0 / report.num_classes;
  const double scale = report.eta * report.feature_norm_sq;
  auto fail = [&](const ClassifierUpdateRow& row, const std::string& what) {
    result.passed = false;
    result.failures.push_back("P(y)=" + format_double(row.prior) + ": " + what);
  };
  for (const auto& row : report.rows) {
    const Ordering expected = std::abs(row.prior - uniform) <= kEqualityTol ? Ordering::kEqual
                              : row.prior < uniform                         ? Ordering::kAdjustedGreater
                                                                            : Ordering::kAdjustedLess;
    if (row.ordering != expected) {
      fail(row, std::string("expected adjusted ") + ordering_symbol(expected) + " plain, got " +
                    ordering_symbol(row.ordering));
    }
    if (!close_relative(row.plain_analytic, row.plain_empirical, kAgreementTol)) {
      fail(row, "plain analytic " + format_double(row.plain_analytic) + " vs empirical " +
                    format_double(row.plain_empirical));
    }
    if (!close_relative(row.adjusted_analytic, row.adjusted_empirical, kAgreementTol)) {
      fail(row, "adjusted analytic " + format_double(row.adjusted_analytic) + " vs empirical " +
                    format_double(row.adjusted_empirical));
    }
    if (row.prior <= 1e-3 && !(row.plain_analytic < kExtremeFraction * scale)) {
      fail(row, "plain update does not vanish as P(y) -> 0");
    }
    if (row.prior >= 1.0 - 1e-3 && !(row.adjusted_analytic < kExtremeFraction * scale)) {
      fail(row, "adjusted update does not vanish as P(y) -> 1");
    }
  }
  return result;
}

void write_report_csv(std::ostream& out, const ClassifierUpdateReport& report) {
  out << "P_y,plain_analytic,plain_empirical,adj_analytic,adj_empirical,ordering_flag\n";
  for (const auto& r : report.rows) {
    out << format_double(r.prior) << ',' << format_double(r.plain_analytic) << ','
        << format_double(r.plain_empirical) << ',' << format_double(r.adjusted_analytic) << ','
        << format_double(r.adjusted_empirical) << ',' << ordering_symbol(r.ordering) << '\n';
  }
}

}  // namespace scala::theory
