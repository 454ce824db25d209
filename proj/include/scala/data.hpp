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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scala/losses.hpp"
#include "scala/rng.hpp"
#include "scala/tensor.hpp"

namespace scala {

using IndexList = std::vector<std::size_t>;

struct Dataset {
  Matrix features;  // n x d
  Labels labels;    // n
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(features.cols()); }

  /// Throws InvalidData when labels fall outside [0, M), counts disagree, or
  /// some class has no sample.
  void validate() const;

  Dataset subset(const IndexList& indices) const;
  std::vector<long> class_counts() const;
};

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthSpec {
  int num_classes = 10;
  int dim = 20;
  int n_per_class = 100;
  double class_separation = 3.0;

  bool operator==(const SynthSpec&) const = default;
};

/// Isotropic unit-variance Gaussian blobs around one mean per class. Class
/// means are random unit directions scaled by `class_separation` and depend
/// only on `seed`; the samples also depend on `sample_stream`, so a held-out
/// set drawn with a different stream shares the class means.
Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed, std::uint64_t sample_stream = 0);

// ---------------------------------------------------------------------------
// File formats

enum class DatasetFormat { kCsvLabeled, kIdxPair };

/// CSV with header `f0,...,f{d-1},label`. Without `num_classes`, M is taken as
/// max(label) + 1.
Dataset load_csv(const std::filesystem::path& path, std::optional<int> num_classes = {});
Dataset read_csv(std::istream& in, std::optional<int> num_classes = {});
/// Writes shortest round-trip decimal representations.
void write_csv(const Dataset& data, std::ostream& out);
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// IDX image/label pair (big-endian magic + dims). Unsigned-byte features are
/// scaled to [0, 1]; float and double payloads are read as-is.
Dataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                      std::optional<int> num_classes = {});
/// Features as IDX doubles (bit-exact), labels as unsigned bytes when M <= 256.
void write_idx_pair(const Dataset& data, const std::filesystem::path& images,
                    const std::filesystem::path& labels);

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const std::filesystem::path& labels_path = {},
                     std::optional<int> num_classes = {});

// ---------------------------------------------------------------------------
// Label-skew partitioning

struct SkewSpec {
  enum class Kind { kIid, kQuantity, kDirichlet };
  Kind kind = Kind::kIid;
  int alpha = 0;      // quantity skew: classes per client
  double beta = 0.0;  // Dirichlet concentration

  static SkewSpec iid() { return {}; }
  static SkewSpec quantity(int alpha) { return {Kind::kQuantity, alpha, 0.0}; }
  static SkewSpec dirichlet(double beta) { return {Kind::kDirichlet, 0, beta}; }

  bool operator==(const SkewSpec&) const = default;
};

std::string to_string(const SkewSpec& skew);

struct Partition {
  std::vector<IndexList> client_indices;
  SkewSpec skew;
  std::uint64_t seed = 0;
  /// Number of Dirichlet draws rejected for leaving a client empty.
  int redraws = 0;

  int num_clients() const { return static_cast<int>(client_indices.size()); }
  std::vector<std::size_t> sizes() const;
};

/// Class-stratified IID split: each class is shuffled and dealt round-robin.
Partition partition_iid(const Dataset& data, int num_clients, std::uint64_t seed);

/// Each label is cut into ceil(K*alpha/M) near-equal shards; shards are
/// shuffled and dealt round-robin until every client holds alpha of them.
Partition partition_quantity_skew(const Dataset& data, int num_clients, int alpha,
                                  std::uint64_t seed);

/// p_k ~ Dir_M(beta) per client; class y is split across clients in
/// proportion to p_{k,y} (floors plus largest remainders). Draws leaving a
/// client empty are repeated up to `max_redraws` times, then ConfigError.
Partition partition_dirichlet_skew(const Dataset& data, int num_clients, double beta,
                                   std::uint64_t seed, int max_redraws = 100);

Partition make_partition(const Dataset& data, int num_clients, const SkewSpec& skew,
                         std::uint64_t seed);

/// Disjointness, index range, and non-empty clients. Throws InvalidData.
void validate_partition(const Partition& partition, std::size_t dataset_size);

/// JSON manifest: skew spec, seed, and per-client index lists (plus label
/// counts when `data` is given).
std::string partition_to_json(const Partition& partition, const Dataset* data = nullptr);
Partition partition_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Per-round minibatch sizes

struct BatchPlan {
  std::vector<int> participants;  // ascending client ids
  std::vector<int> sizes;         // B_k, aligned with participants
  int total = 0;                  // B
};

/// B_k proportional to data_sizes[k], rounded by largest remainder so the sum
/// is exactly B, then lifted to a floor of one sample per client.
std::vector<int> allocate_minibatch_sizes(std::span<const std::size_t> data_sizes, int batch);

BatchPlan allocate_minibatch_sizes(const Partition& partition, std::span<const int> participants,
                                   int batch);

LabelDistribution estimate_label_distribution(const Labels& labels, int num_classes);
LabelDistribution estimate_label_distribution(const Dataset& data, const IndexList& indices);

/// Epoch-shuffled sampling without replacement over one client's indices.
/// A new permutation starts when fewer than the requested number remain.
class MinibatchSampler {
 public:
  MinibatchSampler() = default;
  MinibatchSampler(IndexList indices, std::uint64_t seed);

  IndexList next(std::size_t batch);
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  IndexList indices_;
  IndexList order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  Rng rng_;
};

}  // namespace scala
