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

#include "scala/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace scala {
namespace {

struct LossChoice {
  LossKind server;
  LossKind client;
};

LossChoice default_losses(ProtocolVariant variant) {
  switch (variant) {
    case ProtocolVariant::kScala:
    case ProtocolVariant::kLlaSfl:
      return {LossKind::kAdjusted, LossKind::kAdjusted};
    case ProtocolVariant::kCaSfl:
    case ProtocolVariant::kSplitFedV1:
    case ProtocolVariant::kFedAvg:
      return {LossKind::kPlain, LossKind::kPlain};
  }
  return {LossKind::kPlain, LossKind::kPlain};
}

LossChoice resolve_losses(ProtocolVariant variant, const ProtocolConfig& cfg) {
  LossChoice c = default_losses(variant);
  if (cfg.server_loss) c.server = *cfg.server_loss;
  if (cfg.client_loss) c.client = *cfg.client_loss;
  return c;
}

LossOutput apply_loss(LossKind kind, const Matrix& logits, const Labels& labels,
                      const LabelDistribution& prior) {
  return kind == LossKind::kPlain ? cross_entropy(logits, labels)
                                  : logit_adjusted_ce(logits, labels, prior);
}

std::uint64_t output_width(const Network& net) {
  for (auto it = net.layers.rbegin(); it != net.layers.rend(); ++it) {
    if (it->is_dense()) return static_cast<std::uint64_t>(it->weights.cols());
  }
  throw std::invalid_argument("network has no dense layer");
}

Labels gather_labels(const Labels& labels, const IndexList& idx) {
  Labels out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

// Selection, B_k allocation, and the traffic skeleton shared by all variants.
RoundOutcome begin_round(RoundContext& ctx, ProtocolVariant variant) {
  const auto& cfg = ctx.config;
  RoundOutcome out;
  out.participants = select_participants(static_cast<int>(ctx.clients.size()),
                                         cfg.participation_ratio, cfg.participation,
                                         ctx.participation_rng);
  std::vector<std::size_t> sizes;
  for (int id : out.participants) sizes.push_back(ctx.clients[static_cast<std::size_t>(id)].indices.size());
  out.plan.participants = out.participants;
  out.plan.sizes = allocate_minibatch_sizes(sizes, cfg.batch_size);
  out.plan.total = cfg.batch_size;

  out.trace.variant = variant;
  out.trace.local_iters = static_cast<std::uint64_t>(cfg.local_iters);
  out.trace.full_model_params =
      ctx.server.client_model.parameter_count() + ctx.server.server_model.parameter_count();
  const std::uint64_t width = output_width(ctx.server.client_model);
  for (std::size_t j = 0; j < out.participants.size(); ++j) {
    out.trace.clients.push_back({out.participants[j], static_cast<std::uint64_t>(out.plan.sizes[j]),
                                 width, ctx.server.client_model.parameter_count()});
  }
  out.metrics.round = ctx.server.round;
  out.metrics.variant = variant;
  return out;
}

void finish_round(RoundContext& ctx, RoundOutcome& out) {
  const CommBytes bytes = comm_cost(out.trace, ctx.config.bytes_per_scalar);
  out.metrics.up_bytes = bytes.uplink;
  out.metrics.down_bytes = bytes.downlink;
  if (ctx.eval_set != nullptr) {
    const LabelDistribution prior =
        ctx.eval_prior != nullptr ? *ctx.eval_prior : LabelDistribution::uniform(ctx.train.num_classes);
    out.metrics.eval = evaluate(ctx.server.client_model, ctx.server.server_model, *ctx.eval_set, prior);
  }
}

std::vector<double> participant_weights(const RoundContext& ctx, const std::vector<int>& ids) {
  std::vector<double> w;
  for (int id : ids) w.push_back(static_cast<double>(ctx.clients[static_cast<std::size_t>(id)].indices.size()));
  return w;
}

// Server-side training on the concatenation of all participants' activations.
RoundOutcome run_concatenated_round(RoundContext& ctx, ProtocolVariant variant) {
  const auto& cfg = ctx.config;
  const LossChoice losses = resolve_losses(variant, cfg);
  RoundOutcome out = begin_round(ctx, variant);
  const auto& ids = out.participants;
  const int num_classes = ctx.train.num_classes;

  for (int id : ids) ctx.clients[static_cast<std::size_t>(id)].model = ctx.server.client_model;

  double loss_sum = 0.0, server_norm_sum = 0.0, client_norm_sum = 0.0;
  for (int iter = 0; iter < cfg.local_iters; ++iter) {
    std::vector<ActivationBatch> uploads;
    std::vector<ForwardCache> caches;
    uploads.reserve(ids.size());
    caches.reserve(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j) {
      ClientState& client = ctx.clients[static_cast<std::size_t>(ids[j])];
      const IndexList batch = client.sampler.next(static_cast<std::size_t>(out.plan.sizes[j]));
      ForwardResult fr = forward(client.model, gather_rows(ctx.train.features, batch));
      uploads.push_back({client.id, std::move(fr.output), gather_labels(ctx.train.labels, batch)});
      caches.push_back(std::move(fr.cache));
    }
    const ConcatenatedBatch concat = concatenate_activations(std::move(uploads));
    const ForwardResult server_fwd = forward(ctx.server.server_model, concat.activations);

    // Server update under P_s, the label distribution of the concatenated batch.
    const LabelDistribution server_prior = estimate_label_distribution(concat.labels, num_classes);
    const LossOutput server_loss = apply_loss(losses.server, server_fwd.output, concat.labels, server_prior);
    const BackwardResult server_bwd =
        backward(ctx.server.server_model, server_fwd.cache, server_loss.logit_grad);

    // Client-bound gradients: slice k of the batch-mean loss (scale B_k/B of
    // the slice mean), adjusted with P_k when requested.
    Matrix client_input_grad;
    if (losses.server == LossKind::kPlain && losses.client == LossKind::kPlain) {
      client_input_grad = server_bwd.input_grad;
    } else {
      Matrix upstream(server_fwd.output.rows(), server_fwd.output.cols());
      const double total_rows = static_cast<double>(concat.labels.size());
      for (std::size_t j = 0; j < ids.size(); ++j) {
        const auto [start, len] = concat.offsets[j];
        const Labels slice_labels(concat.labels.begin() + start, concat.labels.begin() + start + len);
        const LossOutput lo =
            apply_loss(losses.client, server_fwd.output.middleRows(start, len), slice_labels,
                       ctx.clients[static_cast<std::size_t>(ids[j])].prior);
        upstream.middleRows(start, len) = lo.logit_grad * (static_cast<double>(len) / total_rows);
      }
      client_input_grad = backward(ctx.server.server_model, server_fwd.cache, upstream).input_grad;
    }
    const std::vector<Matrix> grads = scatter_gradients(client_input_grad, concat.offsets);

    sgd_step(ctx.server.server_model, server_bwd.grads, cfg.learning_rate);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      ClientState& client = ctx.clients[static_cast<std::size_t>(ids[j])];
      const BackwardResult cb = backward(client.model, caches[j], grads[j]);
      sgd_step(client.model, cb.grads, cfg.learning_rate);
      client_norm_sum += std::sqrt(squared_norm(cb.grads));
    }
    loss_sum += server_loss.value;
    server_norm_sum += std::sqrt(squared_norm(server_bwd.grads));
  }

  if (cfg.local_iters > 0) {
    std::vector<Network> models;
    for (int id : ids) models.push_back(ctx.clients[static_cast<std::size_t>(id)].model);
    ctx.server.client_model = aggregate_client_models(models, participant_weights(ctx, ids));
    const double iters = cfg.local_iters;
    out.metrics.train_loss = loss_sum / iters;
    out.metrics.grad_norm_server = server_norm_sum / iters;
    out.metrics.grad_norm_client = client_norm_sum / (iters * static_cast<double>(ids.size()));
  }
  finish_round(ctx, out);
  return out;
}

// Per-client server-side replicas (SplitFedV1 topology), aggregated at round end.
RoundOutcome run_replica_round(RoundContext& ctx, ProtocolVariant variant) {
  const auto& cfg = ctx.config;
  const LossChoice losses = resolve_losses(variant, cfg);
  RoundOutcome out = begin_round(ctx, variant);
  const auto& ids = out.participants;

  std::vector<Network> server_replicas(ids.size(), ctx.server.server_model);
  for (int id : ids) ctx.clients[static_cast<std::size_t>(id)].model = ctx.server.client_model;

  double loss_sum = 0.0, server_norm_sum = 0.0, client_norm_sum = 0.0;
  for (int iter = 0; iter < cfg.local_iters; ++iter) {
    for (std::size_t j = 0; j < ids.size(); ++j) {
      ClientState& client = ctx.clients[static_cast<std::size_t>(ids[j])];
      Network& replica = server_replicas[j];
      const IndexList batch = client.sampler.next(static_cast<std::size_t>(out.plan.sizes[j]));
      const Labels labels = gather_labels(ctx.train.labels, batch);
      const ForwardResult cf = forward(client.model, gather_rows(ctx.train.features, batch));
      const ForwardResult sf = forward(replica, cf.output);
      const LossOutput sl = apply_loss(losses.server, sf.output, labels, client.prior);
      const BackwardResult sb = backward(replica, sf.cache, sl.logit_grad);
      Matrix g = losses.client == losses.server
                     ? sb.input_grad
                     : backward(replica, sf.cache,
                                apply_loss(losses.client, sf.output, labels, client.prior).logit_grad)
                           .input_grad;
      sgd_step(replica, sb.grads, cfg.learning_rate);
      const BackwardResult cb = backward(client.model, cf.cache, g);
      sgd_step(client.model, cb.grads, cfg.learning_rate);

      loss_sum += sl.value * out.plan.sizes[j] / static_cast<double>(out.plan.total);
      server_norm_sum += std::sqrt(squared_norm(sb.grads));
      client_norm_sum += std::sqrt(squared_norm(cb.grads));
    }
  }

  if (cfg.local_iters > 0) {
    const auto weights = participant_weights(ctx, ids);
    std::vector<Network> models;
    for (int id : ids) models.push_back(ctx.clients[static_cast<std::size_t>(id)].model);
    ctx.server.client_model = aggregate_client_models(models, weights);
    ctx.server.server_model = aggregate_client_models(server_replicas, weights);
    const double iters = cfg.local_iters;
    const double steps = iters * static_cast<double>(ids.size());
    out.metrics.train_loss = loss_sum / iters;
    out.metrics.grad_norm_server = server_norm_sum / steps;
    out.metrics.grad_norm_client = client_norm_sum / steps;
  }
  finish_round(ctx, out);
  return out;
}

RoundOutcome run_fedavg_round(RoundContext& ctx) {
  const auto& cfg = ctx.config;
  const LossChoice losses = resolve_losses(ProtocolVariant::kFedAvg, cfg);
  RoundOutcome out = begin_round(ctx, ProtocolVariant::kFedAvg);
  const auto& ids = out.participants;
  const std::size_t cut = ctx.server.client_model.size();
  const Network global = join_models(ctx.server.client_model, ctx.server.server_model).network;
  std::vector<Network> locals(ids.size(), global);

  double loss_sum = 0.0, server_norm_sum = 0.0, client_norm_sum = 0.0;
  for (int iter = 0; iter < cfg.local_iters; ++iter) {
    for (std::size_t j = 0; j < ids.size(); ++j) {
      ClientState& client = ctx.clients[static_cast<std::size_t>(ids[j])];
      const IndexList batch = client.sampler.next(static_cast<std::size_t>(out.plan.sizes[j]));
      const Labels labels = gather_labels(ctx.train.labels, batch);
      const ForwardResult f = forward(locals[j], gather_rows(ctx.train.features, batch));
      const LossOutput l = apply_loss(losses.client, f.output, labels, client.prior);
      const BackwardResult b = backward(locals[j], f.cache, l.logit_grad);
      sgd_step(locals[j], b.grads, cfg.learning_rate);

      LayeredModel split_grads{b.grads, cut};
      const auto [client_g, server_g] = split_model(split_grads);
      loss_sum += l.value * out.plan.sizes[j] / static_cast<double>(out.plan.total);
      server_norm_sum += std::sqrt(squared_norm(server_g));
      client_norm_sum += std::sqrt(squared_norm(client_g));
    }
  }

  if (cfg.local_iters > 0) {
    const Network merged = aggregate_client_models(locals, participant_weights(ctx, ids));
    auto [client_part, server_part] = split_model(LayeredModel{merged, cut});
    ctx.server.client_model = std::move(client_part);
    ctx.server.server_model = std::move(server_part);
    for (int id : ids) ctx.clients[static_cast<std::size_t>(id)].model = ctx.server.client_model;
    const double iters = cfg.local_iters;
    const double steps = iters * static_cast<double>(ids.size());
    out.metrics.train_loss = loss_sum / iters;
    out.metrics.grad_norm_server = server_norm_sum / steps;
    out.metrics.grad_norm_client = client_norm_sum / steps;
  }
  finish_round(ctx, out);
  return out;
}

}  // namespace

std::string_view to_string(ProtocolVariant variant) {
  switch (variant) {
    case ProtocolVariant::kScala: return "scala";
    case ProtocolVariant::kCaSfl: return "ca-sfl";
    case ProtocolVariant::kLlaSfl: return "lla-sfl";
    case ProtocolVariant::kSplitFedV1: return "splitfed-v1";
    case ProtocolVariant::kFedAvg: return "fedavg";
  }
  return "?";
}

std::optional<ProtocolVariant> parse_variant(std::string_view name) {
  for (auto v : {ProtocolVariant::kScala, ProtocolVariant::kCaSfl, ProtocolVariant::kLlaSfl,
                 ProtocolVariant::kSplitFedV1, ProtocolVariant::kFedAvg}) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

std::vector<int> select_participants(int num_clients, double rho, ParticipationMode mode, Rng& rng) {
  if (num_clients < 1) throw std::invalid_argument("select_participants: need K >= 1");
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("select_participants: rho must lie in (0, 1]");
  std::vector<int> ids;
  if (mode == ParticipationMode::kFixedFraction) {
    const auto count = std::max<long>(1, std::lround(rho * num_clients));
    std::vector<int> pool(static_cast<std::size_t>(num_clients));
    std::iota(pool.begin(), pool.end(), 0);
    for (long i = 0; i < count; ++i) {
      std::uniform_int_distribution<long> pick(i, num_clients - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    ids.assign(pool.begin(), pool.begin() + count);
  } else {
    std::bernoulli_distribution coin(rho);
    while (ids.empty()) {
      for (int k = 0; k < num_clients; ++k) {
        if (coin(rng)) ids.push_back(k);
      }
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

ConcatenatedBatch concatenate_activations(std::vector<ActivationBatch> batches) {
  std::sort(batches.begin(), batches.end(),
            [](const ActivationBatch& a, const ActivationBatch& b) { return a.client_id < b.client_id; });
  ConcatenatedBatch out;
  Eigen::Index rows = 0;
  const Eigen::Index width = batches.empty() ? 0 : batches.front().activations.cols();
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto& b = batches[i];
    if (b.activations.cols() != width) {
      throw std::invalid_argument("concatenate_activations: client " + std::to_string(b.client_id) +
                                  " sends width " + std::to_string(b.activations.cols()) +
                                  ", expected " + std::to_string(width));
    }
    if (static_cast<Eigen::Index>(b.labels.size()) != b.activations.rows()) {
      throw std::invalid_argument("concatenate_activations: label/activation row mismatch");
    }
    if (i > 0 && batches[i - 1].client_id == b.client_id) {
      throw std::invalid_argument("concatenate_activations: duplicate client id " +
                                  std::to_string(b.client_id));
    }
    rows += b.activations.rows();
  }
  out.activations.resize(rows, width);
  Eigen::Index at = 0;
  for (auto& b : batches) {
    const Eigen::Index len = b.activations.rows();
    out.activations.middleRows(at, len) = b.activations;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.client_ids.push_back(b.client_id);
    out.offsets.emplace_back(at, len);
    at += len;
  }
  return out;
}

std::vector<Matrix> scatter_gradients(const Matrix& concat_input_grad,
                                      std::span<const std::pair<Eigen::Index, Eigen::Index>> offsets) {
  std::vector<Matrix> out;
  out.reserve(offsets.size());
  Eigen::Index expected = 0;
  for (auto [start, len] : offsets) {
    if (start != expected || len < 0) {
      throw std::logic_error("scatter_gradients: offsets are not contiguous");
    }
    expected += len;
  }
  if (expected != concat_input_grad.rows()) {
    throw std::logic_error("scatter_gradients: offsets cover " + std::to_string(expected) +
                           " rows, gradient has " + std::to_string(concat_input_grad.rows()));
  }
  for (auto [start, len] : offsets) out.emplace_back(concat_input_grad.middleRows(start, len));
  return out;
}

Network aggregate_client_models(std::span<const Network> models, std::span<const double> weights) {
  if (models.empty()) throw std::invalid_argument("aggregate_client_models: no models");
  if (models.size() != weights.size()) {
    throw std::invalid_argument("aggregate_client_models: model/weight count mismatch");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("aggregate_client_models: weights must be positive");
    total += w;
  }
  Network out = zeros_like(models.front());
  for (std::size_t m = 0; m < models.size(); ++m) {
    const Network& net = models[m];
    if (net.size() != out.size()) throw std::invalid_argument("aggregate_client_models: layer count mismatch");
    const double w = weights[m] / total;
    for (std::size_t l = 0; l < net.size(); ++l) {
      Layer& dst = out.layers[l];
      const Layer& src = net.layers[l];
      if (dst.kind != src.kind) throw std::invalid_argument("aggregate_client_models: layer kind mismatch");
      if (!dst.is_dense()) continue;
      if (dst.weights.rows() != src.weights.rows() || dst.weights.cols() != src.weights.cols() ||
          dst.bias.size() != src.bias.size()) {
        throw std::invalid_argument("aggregate_client_models: shape mismatch at layer " + std::to_string(l));
      }
      dst.weights += w * src.weights;
      dst.bias += w * src.bias;
    }
  }
  return out;
}

CommBytes comm_cost(const ClientTraffic& c, const RoundTrace& trace, std::uint64_t bytes_per_scalar) {
  CommBytes b;
  if (trace.variant == ProtocolVariant::kFedAvg) {
    b.uplink = trace.full_model_params * bytes_per_scalar;
    b.downlink = b.uplink;
    return b;
  }
  const std::uint64_t activations = c.batch_size * c.cut_width;
  const std::uint64_t labels = c.batch_size;
  b.uplink = ((activations + labels) * trace.local_iters + c.client_params) * bytes_per_scalar;
  b.downlink = (activations * trace.local_iters + c.client_params) * bytes_per_scalar;
  return b;
}

CommBytes comm_cost(const RoundTrace& trace, std::uint64_t bytes_per_scalar) {
  CommBytes total;
  for (const auto& c : trace.clients) {
    const CommBytes b = comm_cost(c, trace, bytes_per_scalar);
    total.uplink += b.uplink;
    total.downlink += b.downlink;
  }
  return total;
}

EvalMetrics evaluate(const Network& client_model, const Network& server_model, const Dataset& test,
                     const LabelDistribution& train_prior) {
  const Matrix logits = forward(server_model, forward(client_model, test.features).output).output;
  const AccuracyReport plain = accuracy_report(predict(logits), test.labels, test.num_classes);
  const AccuracyReport bal = accuracy_report(predict_balanced(logits, train_prior), test.labels, test.num_classes);
  return {plain.overall, plain.per_class, plain.balanced, bal.balanced};
}

RoundOutcome run_scala_round(RoundContext& ctx) {
  return run_concatenated_round(ctx, ProtocolVariant::kScala);
}

RoundOutcome run_baseline_round(ProtocolVariant variant, RoundContext& ctx) {
  switch (variant) {
    case ProtocolVariant::kScala:
    case ProtocolVariant::kCaSfl:
      return run_concatenated_round(ctx, variant);
    case ProtocolVariant::kLlaSfl:
    case ProtocolVariant::kSplitFedV1:
      return run_replica_round(ctx, variant);
    case ProtocolVariant::kFedAvg:
      return run_fedavg_round(ctx);
  }
  throw std::invalid_argument("unknown protocol variant");
}

// ---------------------------------------------------------------------------

Federation::Federation(Dataset train, Dataset test, Partition partition, const LayeredModel& init,
                       ProtocolConfig config, std::uint64_t seed)
    : train_(std::move(train)),
      test_(std::move(test)),
      partition_(std::move(partition)),
      config_(config),
      participation_rng_(make_rng(seed, Stream::kParticipation)) {
  train_.validate();
  validate_partition(partition_, train_.size());
  if (test_.num_classes != train_.num_classes || test_.dim() != train_.dim()) {
    throw std::invalid_argument("Federation: test set shape differs from training set");
  }
  auto [client_part, server_part] = split_model(init);
  const Layer& first_server = *std::find_if(server_part.layers.begin(), server_part.layers.end(),
                                            [](const Layer& l) { return l.is_dense(); });
  if (static_cast<std::uint64_t>(first_server.weights.rows()) != output_width(client_part)) {
    throw std::invalid_argument("Federation: server input width does not match the cut-layer width");
  }
  server_.client_model = std::move(client_part);
  server_.server_model = std::move(server_part);
  train_prior_ = LabelDistribution::from_counts(train_.class_counts());
  for (int k = 0; k < partition_.num_clients(); ++k) {
    ClientState c;
    c.id = k;
    c.indices = partition_.client_indices[static_cast<std::size_t>(k)];
    c.model = server_.client_model;
    c.sampler = MinibatchSampler(c.indices, derive_seed(seed, Stream::kMinibatch, static_cast<std::uint64_t>(k)));
    c.prior = estimate_label_distribution(train_, c.indices);
    clients_.push_back(std::move(c));
  }
}

RoundOutcome Federation::step() {
  ++server_.round;
  const bool eval_due =
      (config_.eval_every > 0 && server_.round % config_.eval_every == 0) ||
      (config_.total_rounds > 0 && server_.round == config_.total_rounds);
  RoundContext ctx{server_, clients_, train_, config_, participation_rng_,
                   eval_due ? &test_ : nullptr, &train_prior_};
  return run_baseline_round(config_.variant, ctx);
}

LayeredModel Federation::global_model() const {
  return join_models(server_.client_model, server_.server_model);
}

}  // namespace scala
