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
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "scala/data.hpp"
#include "scala/losses.hpp"
#include "scala/nn.hpp"
#include "scala/rng.hpp"

namespace scala {

enum class ProtocolVariant { kScala, kCaSfl, kLlaSfl, kSplitFedV1, kFedAvg };

std::string_view to_string(ProtocolVariant variant);
std::optional<ProtocolVariant> parse_variant(std::string_view name);

enum class LossKind { kPlain, kAdjusted };
enum class ParticipationMode { kFixedFraction, kBernoulli };

struct ProtocolConfig {
  ProtocolVariant variant = ProtocolVariant::kScala;
  double participation_ratio = 0.1;  // rho
  ParticipationMode participation = ParticipationMode::kFixedFraction;
  int batch_size = 320;              // B, rows of the concatenated server batch
  int local_iters = 20;              // I
  double learning_rate = 0.01;       // eta
  int eval_every = 10;               // also evaluates the final round when total_rounds > 0
  int total_rounds = 0;
  // Per-side loss overrides; unset means the variant's own choice.
  std::optional<LossKind> server_loss;
  std::optional<LossKind> client_loss;
  std::uint64_t bytes_per_scalar = 8;
};

/// A participant's view: local data, its client-side replica w_{c,k}, the
/// minibatch cursor, and P_k from its full local label counts.
struct ClientState {
  int id = 0;
  IndexList indices;
  Network model;
  MinibatchSampler sampler;
  LabelDistribution prior;
};

/// Server-side model w_s and global client-side model w_c.
struct ServerState {
  Network server_model;
  Network client_model;
  int round = 0;
};

struct ActivationBatch {
  int client_id = 0;
  Matrix activations;  // B_k x cut_width
  Labels labels;
};

struct ConcatenatedBatch {
  Matrix activations;  // B x cut_width, ascending client id
  Labels labels;
  std::vector<int> client_ids;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> offsets;  // (start, length)
};

/// fixed-fraction: max(1, round(rho*K)) distinct ids. bernoulli: each id with
/// probability rho, redrawn while empty. Returned ascending.
std::vector<int> select_participants(int num_clients, double rho, ParticipationMode mode, Rng& rng);

ConcatenatedBatch concatenate_activations(std::vector<ActivationBatch> batches);

std::vector<Matrix> scatter_gradients(const Matrix& concat_input_grad,
                                      std::span<const std::pair<Eigen::Index, Eigen::Index>> offsets);

/// Sum_k weight_k * model_k / Sum_k weight_k, per parameter.
Network aggregate_client_models(std::span<const Network> models, std::span<const double> weights);

// ---------------------------------------------------------------------------
// Communication accounting

struct ClientTraffic {
  int client_id = 0;
  std::uint64_t batch_size = 0;     // B_k
  std::uint64_t cut_width = 0;      // activation columns
  std::uint64_t client_params = 0;  // |w_c|
};

struct RoundTrace {
  ProtocolVariant variant = ProtocolVariant::kScala;
  std::uint64_t local_iters = 0;
  std::uint64_t full_model_params = 0;  // |w|, used by FedAvg
  std::vector<ClientTraffic> clients;
};

struct CommBytes {
  std::uint64_t uplink = 0;
  std::uint64_t downlink = 0;
  bool operator==(const CommBytes&) const = default;
};

/// Split variants, per client: up = (|A_k| + |Y_k|) * I + |w_c|,
/// down = |G_k| * I + |w_c|. FedAvg: |w| each way. Summed over participants.
CommBytes comm_cost(const RoundTrace& trace, std::uint64_t bytes_per_scalar);
CommBytes comm_cost(const ClientTraffic& client, const RoundTrace& trace,
                    std::uint64_t bytes_per_scalar);

// ---------------------------------------------------------------------------
// Rounds

struct EvalMetrics {
  double accuracy = 0.0;
  std::vector<double> per_class;
  double balanced_accuracy = 0.0;
  /// Balanced accuracy when predicting with argmax s_y - log P(y), P being the
  /// global training label distribution.
  double balanced_rule_accuracy = 0.0;
};

struct RoundMetrics {
  int round = 0;
  ProtocolVariant variant = ProtocolVariant::kScala;
  double train_loss = std::numeric_limits<double>::quiet_NaN();  // NaN when I = 0
  std::optional<EvalMetrics> eval;
  double grad_norm_server = 0.0;
  double grad_norm_client = 0.0;
  std::uint64_t up_bytes = 0;
  std::uint64_t down_bytes = 0;
};

struct RoundOutcome {
  RoundMetrics metrics;
  RoundTrace trace;
  std::vector<int> participants;
  BatchPlan plan;
};

struct RoundContext {
  ServerState& server;
  std::vector<ClientState>& clients;
  const Dataset& train;
  const ProtocolConfig& config;
  Rng& participation_rng;
  const Dataset* eval_set = nullptr;          // evaluate when non-null
  const LabelDistribution* eval_prior = nullptr;
};

/// One global round of concatenated-activation split training with
/// logit-adjusted losses on both sides.
RoundOutcome run_scala_round(RoundContext& ctx);

/// CA-SFL, LLA-SFL, SplitFedV1, FedAvg (and SCALA, forwarded).
RoundOutcome run_baseline_round(ProtocolVariant variant, RoundContext& ctx);

EvalMetrics evaluate(const Network& client_model, const Network& server_model, const Dataset& test,
                     const LabelDistribution& train_prior);

/// Owns the state of one simulated federation and advances it round by round.
class Federation {
 public:
  Federation(Dataset train, Dataset test, Partition partition, const LayeredModel& init,
             ProtocolConfig config, std::uint64_t seed);

  RoundOutcome step();

  const ServerState& server() const { return server_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const ProtocolConfig& config() const { return config_; }
  const Partition& partition() const { return partition_; }
  const Dataset& train() const { return train_; }
  LayeredModel global_model() const;

 private:
  Dataset train_;
  Dataset test_;
  Partition partition_;
  ProtocolConfig config_;
  ServerState server_;
  std::vector<ClientState> clients_;
  LabelDistribution train_prior_;
  Rng participation_rng_;
};

}  // namespace scala
