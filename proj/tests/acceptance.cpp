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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "scala/config.hpp"
#include "scala/data.hpp"
#include "scala/experiment.hpp"
#include "scala/losses.hpp"
#include "scala/nn.hpp"
#include "scala/protocol.hpp"
#include "scala/theory.hpp"
#include "test_util.hpp"

using namespace scala;
using scala::testing::max_abs_difference;
using scala::testing::max_relative_error;
using scala::testing::random_labels;
using scala::testing::random_matrix;
using scala::testing::random_model;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

LabelDistribution random_prior(int m, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Vector p(m);
  for (int y = 0; y < m; ++y) p(y) = u(rng);
  return LabelDistribution::from_probs(p / p.sum());
}

LossOutput loss_for(bool adjusted, const Matrix& logits, const Labels& y, const LabelDistribution& prior) {
  return adjusted ? logit_adjusted_ce(logits, y, prior) : cross_entropy(logits, y);
}

// 1. Split forward/backward equals the unsplit model.
Outcome split_transparency() {
  Rng rng(101);
  double worst = 0.0;
  const int instances = 40;
  for (int t = 0; t < instances; ++t) {
    const auto rm = random_model(rng);
    const int batch = 1 + static_cast<int>(rng() % 16);
    const Matrix x = random_matrix(batch, rm.input_dim, rng);
    const Labels y = random_labels(static_cast<std::size_t>(batch), rm.num_classes, rng);
    const bool adjusted = t % 2 == 1;
    const LabelDistribution prior = random_prior(rm.num_classes, rng);

    const auto ff = forward(rm.model.network, x);
    const auto full = backward(rm.model.network, ff.cache, loss_for(adjusted, ff.output, y, prior).logit_grad);
    const auto [client, server] = split_model(rm.model);
    const auto cf = forward(client, x);
    const auto sf = forward(server, cf.output);
    const auto sb = backward(server, sf.cache, loss_for(adjusted, sf.output, y, prior).logit_grad);
    const auto cb = backward(client, cf.cache, sb.input_grad);
    worst = std::max(worst, max_relative_error(join_models(cb.grads, sb.grads).network, full.grads, 1e-300));
  }
  return {worst <= 1e-6, std::to_string(instances) + " instances, max rel err " + fmt("%.2e", worst)};
}

// 2. Backward against central finite differences.
Outcome gradient_oracle() {
  Rng rng(202);
  double worst = 0.0;
  const int instances = 40;
  for (int t = 0; t < instances; ++t) {
    const auto rm = random_model(rng);
    const int batch = 1 + static_cast<int>(rng() % 8);
    const Matrix x = random_matrix(batch, rm.input_dim, rng);
    const Labels y = random_labels(static_cast<std::size_t>(batch), rm.num_classes, rng);
    const bool adjusted = t % 2 == 1;
    const LabelDistribution prior = random_prior(rm.num_classes, rng);
    const auto& net = rm.model.network;
    const auto fwd = forward(net, x);
    const auto bwd = backward(net, fwd.cache, loss_for(adjusted, fwd.output, y, prior).logit_grad);
    const auto fd = finite_difference_grad(
        net, x, [&](const Matrix& out) { return loss_for(adjusted, out, y, prior).value; }, 1e-5);
    worst = std::max(worst, max_relative_error(bwd.grads, fd, 1e-6));
  }
  return {worst <= 1e-4, std::to_string(instances) + " instances (half adjusted), max rel err " + fmt("%.2e", worst) +
                             " (denominator floor 1e-6)"};
}

// 3. Uniform-prior reductions at loss and trajectory level.
Outcome uniform_reductions() {
  Rng rng(303);
  double loss_gap = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int m = 2 + t % 9;
    const Matrix z = random_matrix(8, m, rng, 3.0);
    const Labels y = random_labels(8, m, rng);
    const auto a = cross_entropy(z, y);
    const auto b = logit_adjusted_ce(z, y, LabelDistribution::uniform(m));
    loss_gap = std::max({loss_gap, std::abs(a.value - b.value), (a.logit_grad - b.logit_grad).cwiseAbs().maxCoeff()});
  }

  // Class-balanced clients with full local batches keep P_s and every P_k uniform.
  const int m = 4;
  const int clients = 5;
  const Dataset train = synth_dataset(SynthSpec{m, 8, clients * 2, 3.0}, 7, 0);
  const Dataset test = synth_dataset(SynthSpec{m, 8, 10, 3.0}, 7, 1);
  const Partition partition = partition_iid(train, clients, 7);
  Rng init_rng = make_rng(7, Stream::kInit);
  const std::vector<int> hidden{16, 12};
  const LayeredModel init = make_mlp(8, hidden, m, 2, init_rng);
  ProtocolConfig cfg;
  cfg.participation_ratio = 0.6;
  cfg.batch_size = 3 * 8;
  cfg.local_iters = 3;
  cfg.learning_rate = 0.05;
  cfg.eval_every = 0;
  ProtocolConfig ca = cfg;
  ca.variant = ProtocolVariant::kCaSfl;
  Federation scala(train, test, partition, init, cfg, 11);
  Federation casfl(train, test, partition, init, ca, 11);
  double traj_gap = 0.0;
  double moved = 0.0;
  for (int round = 0; round < 50; ++round) {
    scala.step();
    casfl.step();
    traj_gap = std::max(traj_gap, max_abs_difference(scala.global_model().network, casfl.global_model().network));
  }
  moved = max_abs_difference(scala.global_model().network, init.network);
  const bool pass = loss_gap <= 1e-12 && traj_gap <= 1e-9 && moved > 1e-3;
  return {pass, "loss/grad gap " + fmt("%.2e", loss_gap) + ", 50-round trajectory gap " + fmt("%.2e", traj_gap) +
                    " (parameters moved " + fmt("%.2f", moved) + ")"};
}

// 4. Minibatch-size allocation. Instances are drawn over the whole domain
// B >= |participants|; draws for which no integer allocation can satisfy the
// floor and the proportionality bound together are counted separately and
// still checked for sum and floor.
Outcome allocation() {
  Rng rng(404);
  std::uniform_int_distribution<int> count(1, 50);
  std::uniform_int_distribution<int> size(1, 1000);
  int checked = 0;
  int violations = 0;
  int infeasible = 0;
  int infeasible_violations = 0;
  while (checked < 1000) {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(count(rng)));
    for (auto& s : sizes) s = static_cast<std::size_t>(size(rng));
    std::uniform_int_distribution<int> batch(static_cast<int>(sizes.size()), 2000);
    const int b = batch(rng);
    const auto c = scala::testing::check_allocation(sizes, b, allocate_minibatch_sizes(sizes, b));
    if (!scala::testing::proportional_allocation_exists(sizes, b)) {
      ++infeasible;
      infeasible_violations += !(c.sum_ok && c.floor_ok);
      continue;
    }
    ++checked;
    violations += !(c.sum_ok && c.floor_ok && c.proportional);
  }
  const std::vector<std::size_t> example{25, 75};
  const bool worked = allocate_minibatch_sizes(example, 320) == std::vector<int>{80, 240};
  return {violations == 0 && infeasible_violations == 0 && worked,
          std::to_string(checked) + " instances, " + std::to_string(violations) + " violations; " +
              std::to_string(infeasible) + " extra draws admit no proportional allocation (sum and floor held in " +
              std::to_string(infeasible - infeasible_violations) + "); 25/75 of 320 -> " + (worked ? "80/240" : "WRONG")};
}

// 5. Classifier-update crossover at 1/M.
Outcome crossover() {
  theory::SweepOptions opts;
  opts.num_classes = 10;
  const auto grid = theory::default_prior_grid(10);
  const auto report = theory::theorem2_sweep(opts, grid);
  bool pass = report.rows.size() == grid.size();
  double eq_gap = 0.0;
  for (const auto& r : report.rows) {
    const double diff = r.adjusted_analytic - r.plain_analytic;
    const double ediff = r.adjusted_empirical - r.plain_empirical;
    if (r.prior == 0.001 || r.prior == 0.01) pass = pass && diff > 0 && ediff > 0;
    if (r.prior == 0.99 || r.prior == 0.999) pass = pass && diff < 0 && ediff < 0;
    if (r.prior == 1.0 / 10) {
      eq_gap = std::max(eq_gap, std::abs(diff));
      pass = pass && std::abs(diff) <= 1e-12;
    }
  }
  pass = pass && theory::check_report(report).passed;
  return {pass, "adjusted > plain at 0.001, 0.01; < at 0.99, 0.999; |gap| at 1/M = " + fmt("%.1e", eq_gap)};
}

// 6. Closed forms against backprop at random zeta.
Outcome closed_forms() {
  Rng rng(606);
  double worst = 0.0;
  int comparisons = 0;
  for (int m : {3, 10}) {
    for (int p = 0; p < 5; ++p) {
      Vector probs(m);
      std::uniform_real_distribution<double> u(0.02, 1.0);
      for (int y = 0; y < m; ++y) probs(y) = u(rng);
      const auto data =
          theory::build_orthogonal_dataset(m, m + 2, LabelDistribution::from_probs(probs / probs.sum()), 5000, p);
      for (int z = 0; z < 10; ++z) {
        const Matrix zeta = random_matrix(m + 2, m, rng);
        const Vector ap = theory::analytic_logit_update_plain(data.set, zeta, 0.1);
        const Vector aa = theory::analytic_logit_update_adjusted(data.set, zeta, 0.1);
        const Vector ep = theory::empirical_logit_update(data, zeta, 0.1, theory::UpdateLoss::kPlain);
        const Vector ea = theory::empirical_logit_update(data, zeta, 0.1, theory::UpdateLoss::kAdjusted);
        for (int y = 0; y < m; ++y) {
          worst = std::max(worst, std::abs(ap(y) - ep(y)) / std::max(std::abs(ap(y)), std::abs(ep(y))));
          worst = std::max(worst, std::abs(aa(y) - ea(y)) / std::max(std::abs(aa(y)), std::abs(ea(y))));
          comparisons += 2;
        }
      }
    }
  }
  return {worst <= 1e-6, std::to_string(comparisons) + " comparisons, max rel err " + fmt("%.2e", worst)};
}

// 7. Desk-scale ordering SCALA > CA-SFL > SplitFedV1 on balanced accuracy.
TrainingConfig trend_config(std::uint64_t seed) {
  TrainingConfig c;
  c.data.synth = SynthSpec{10, 20, 100, 1.5};
  c.data.test_per_class = 100;
  c.num_clients = 20;
  c.participation_ratio = 0.2;
  c.skew = SkewSpec::quantity(2);
  c.hidden = {64, 64};
  c.cut_index = 2;
  c.batch_size = 100;
  c.local_iters = 10;
  c.rounds = 200;
  c.learning_rate = 0.05;
  c.eval_every = 200;
  c.seed = seed;
  return c;
}

Outcome trend() {
  const std::vector<ProtocolVariant> variants{ProtocolVariant::kScala, ProtocolVariant::kCaSfl,
                                              ProtocolVariant::kSplitFedV1};
  std::vector<double> mean(variants.size(), 0.0);
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  for (auto seed : seeds) {
    const TrainingConfig cfg = trend_config(seed);
    const SimulationSetup setup = prepare_simulation(cfg);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const auto rounds = simulate(cfg, setup, variants[v]);
      mean[v] += 100.0 * rounds.back().eval->balanced_accuracy / static_cast<double>(seeds.size());
    }
  }
  const bool pass = mean[0] >= mean[1] + 2.0 && mean[1] >= mean[2] + 2.0;
  return {pass, "mean balanced accuracy over 3 seeds: SCALA " + fmt("%.2f", mean[0]) + ", CA-SFL " +
                    fmt("%.2f", mean[1]) + ", SplitFedV1 " + fmt("%.2f", mean[2])};
}

// 8. Per-round uplink bytes against the shape closed form.
Outcome communication() {
  const int m = 10;
  const int d = 20;
  const std::vector<int> hidden{64, 32};
  const Dataset train = synth_dataset(SynthSpec{m, d, 40, 3.0}, 3, 0);
  const Dataset test = synth_dataset(SynthSpec{m, d, 5, 3.0}, 3, 1);
  const Partition partition = partition_dirichlet_skew(train, 20, 0.5, 3);
  Rng init_rng = make_rng(3, Stream::kInit);
  const LayeredModel init = make_mlp(d, hidden, m, 2, init_rng);
  const std::uint64_t wc = static_cast<std::uint64_t>(d) * 64 + 64;  // dense d x 64 + relu
  const std::uint64_t width = 64;

  auto run = [&](int iters) {
    ProtocolConfig cfg;
    cfg.participation_ratio = 0.25;
    cfg.batch_size = 100;
    cfg.local_iters = iters;
    cfg.eval_every = 0;
    Federation fed(train, test, partition, init, cfg, 5);
    return fed.step();
  };
  bool pass = true;
  std::uint64_t model_terms[2] = {0, 0};
  std::uint64_t data_terms[2] = {0, 0};
  const int iters[2] = {10, 5};
  for (int r = 0; r < 2; ++r) {
    const RoundOutcome out = run(iters[r]);
    std::uint64_t up = 0;
    for (int bk : out.plan.sizes) {
      const std::uint64_t b = static_cast<std::uint64_t>(bk);
      data_terms[r] += (b * width + b) * static_cast<std::uint64_t>(iters[r]);
      model_terms[r] += wc;
    }
    up = (data_terms[r] + model_terms[r]) * 8;
    pass = pass && out.metrics.up_bytes == up;
  }
  pass = pass && model_terms[0] == model_terms[1] && data_terms[0] == 2 * data_terms[1];
  return {pass, "uplink bytes exact for I=10 and I=5; model term " + std::to_string(model_terms[0] * 8) +
                    " B unchanged, activation+label term " + std::to_string(data_terms[0] * 8) + " -> " +
                    std::to_string(data_terms[1] * 8) + " B"};
}

// 9. Byte-identical reruns.
std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "scala_acceptance_determinism";
  fs::remove_all(root);
  TrainingConfig cfg;
  cfg.data.synth = SynthSpec{10, 20, 100, 2.0};
  cfg.num_clients = 20;
  cfg.participation_ratio = 0.2;
  cfg.skew = SkewSpec::dirichlet(0.3);
  cfg.batch_size = 100;
  cfg.local_iters = 5;
  cfg.rounds = 30;
  cfg.learning_rate = 0.05;
  cfg.eval_every = 5;
  cfg.variants = {ProtocolVariant::kScala, ProtocolVariant::kCaSfl, ProtocolVariant::kLlaSfl,
                  ProtocolVariant::kSplitFedV1, ProtocolVariant::kFedAvg};
  cfg.seed = 2024;
  cfg.out_dir = (root / "a").string();
  const auto a = run_experiment(cfg);
  cfg.out_dir = (root / "b").string();
  const auto b = run_experiment(cfg);
  int files = 0;
  bool same = a.outputs.size() == 5;
  for (const auto& [name, o] : a.outputs) {
    const auto& other = b.outputs.at(name);
    same = same && slurp(o.metrics_csv) == slurp(other.metrics_csv) &&
           slurp(o.metrics_ndjson) == slurp(other.metrics_ndjson) && !slurp(o.metrics_ndjson).empty();
    files += 2;
  }
  fs::remove_all(root);
  return {same, std::to_string(files) + " metrics files compared across two runs of 5 variants x 30 rounds"};
}

// 10. Partition contracts.
Outcome partitions() {
  bool pass = true;
  int quantity_cases = 0;
  for (int m : {2, 5, 10}) {
    const Dataset data = synth_dataset(SynthSpec{m, 4, 60, 1.0}, 1);
    for (int k : {1, 5, 10, 20, 50}) {
      for (int alpha = 1; alpha <= m; ++alpha) {
        for (std::uint64_t seed : {0u, 1u, 2u}) {
          const Partition p = partition_quantity_skew(data, k, alpha, seed);
          validate_partition(p, data.size());
          for (const auto& c : p.client_indices) {
            std::set<int> classes;
            for (auto i : c) classes.insert(data.labels[i]);
            pass = pass && static_cast<int>(classes.size()) <= alpha;
          }
          ++quantity_cases;
        }
      }
    }
  }
  const Dataset data = synth_dataset(SynthSpec{10, 4, 100, 1.0}, 2);
  int concentrated = 0;
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  for (auto seed : seeds) {
    const Partition p = partition_dirichlet_skew(data, 20, 0.05, seed);
    validate_partition(p, data.size());
    double best = 0.0;
    for (const auto& c : p.client_indices) best = std::max(best, estimate_label_distribution(data, c).probs.maxCoeff());
    concentrated += best >= 0.9;
  }
  pass = pass && concentrated == static_cast<int>(seeds.size());
  return {pass, std::to_string(quantity_cases) + " quantity-skew partitions within alpha; Dirichlet(0.05) concentrated client in " +
                    std::to_string(concentrated) + "/" + std::to_string(seeds.size()) + " seeds; all valid"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "split transparency", 10, split_transparency},
      {2, "gradient oracle", 30, gradient_oracle},
      {3, "uniform-prior reductions", 60, uniform_reductions},
      {4, "minibatch-size allocation", 5, allocation},
      {5, "classifier-update crossover", 5, crossover},
      {6, "closed-form logit updates", 10, closed_forms},
      {7, "desk-scale trend", 300, trend},
      {8, "communication accounting", 1, communication},
      {9, "determinism", 120, determinism},
      {10, "partition contracts", 10, partitions},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = secs < c.budget_s;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::printf("%s [%d] %s: %s; %.2f s (budget %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.budget_s, in_budget ? "" : ", EXCEEDED");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
