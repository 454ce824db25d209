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

#include "scala/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "scala/format.hpp"

namespace scala {
namespace {

using json = nlohmann::json;

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  // Fisher-Yates with explicit draws; std::shuffle's draw pattern is
  // implementation-defined.
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

std::vector<IndexList> indices_by_class(const Dataset& data) {
  std::vector<IndexList> by_class(static_cast<std::size_t>(data.num_classes));
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    by_class.at(static_cast<std::size_t>(data.labels[i])).push_back(i);
  }
  return by_class;
}

// Splits [0, n) into `parts` contiguous near-equal ranges (sizes differ by at
// most one, larger ranges first).
std::vector<std::pair<std::size_t, std::size_t>> near_equal_ranges(std::size_t n, std::size_t parts) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t base = n / parts;
  const std::size_t extra = n % parts;
  std::size_t at = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    out.emplace_back(at, len);
    at += len;
  }
  return out;
}

void finalize(Partition& p) {
  for (auto& idx : p.client_indices) std::sort(idx.begin(), idx.end());
}

Dataset finish_loaded(Matrix features, Labels labels, std::optional<int> num_classes) {
  Dataset d;
  if (labels.empty()) throw ParseError("dataset has no samples");
  const int max_label = *std::max_element(labels.begin(), labels.end());
  d.num_classes = num_classes.value_or(max_label + 1);
  d.features = std::move(features);
  d.labels = std::move(labels);
  d.validate();
  return d;
}

// --- IDX helpers ---

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw ParseError(what + ": truncated header at offset " + std::to_string(static_cast<long>(in.tellg())));
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

struct IdxArray {
  std::uint8_t type = 0;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

std::size_t idx_type_size(std::uint8_t type) {
  switch (type) {
    case 0x08: case 0x09: return 1;
    case 0x0B: return 2;
    case 0x0C: case 0x0D: return 4;
    case 0x0E: return 8;
    default: return 0;
  }
}

IdxArray read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  const std::string what = path.string();
  std::array<unsigned char, 4> magic{};
  if (!in.read(reinterpret_cast<char*>(magic.data()), 4)) {
    throw ParseError(what + ": missing IDX magic at offset 0");
  }
  if (magic[0] != 0 || magic[1] != 0) throw ParseError(what + ": bad IDX magic at offset 0");
  IdxArray arr;
  arr.type = magic[2];
  const std::size_t width = idx_type_size(arr.type);
  if (width == 0) throw ParseError(what + ": unsupported IDX element type at offset 2");
  const int ndims = magic[3];
  if (ndims < 1) throw ParseError(what + ": IDX with zero dimensions at offset 3");
  std::size_t count = 1;
  for (int i = 0; i < ndims; ++i) {
    arr.dims.push_back(read_be32(in, what));
    count *= arr.dims.back();
  }
  arr.values.resize(count);
  std::vector<unsigned char> raw(count * width);
  const auto payload_start = static_cast<long>(in.tellg());
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw ParseError(what + ": payload truncated after offset " +
                     std::to_string(payload_start + in.gcount()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = raw.data() + i * width;
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < width; ++b) bits = (bits << 8) | p[b];
    switch (arr.type) {
      case 0x08: arr.values[i] = static_cast<double>(p[0]); break;
      case 0x09: arr.values[i] = static_cast<double>(static_cast<std::int8_t>(p[0])); break;
      case 0x0B: arr.values[i] = static_cast<double>(static_cast<std::int16_t>(bits)); break;
      case 0x0C: arr.values[i] = static_cast<double>(static_cast<std::int32_t>(bits)); break;
      case 0x0D: {
        float f;
        const auto u = static_cast<std::uint32_t>(bits);
        std::memcpy(&f, &u, 4);
        arr.values[i] = f;
        break;
      }
      case 0x0E: {
        double d;
        std::memcpy(&d, &bits, 8);
        arr.values[i] = d;
        break;
      }
    }
  }
  return arr;
}

}  // namespace

// ---------------------------------------------------------------------------

void Dataset::validate() const {
  if (labels.empty()) throw InvalidData("dataset has no samples");
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw InvalidData("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                      std::to_string(labels.size()) + " labels");
  }
  if (num_classes < 2) throw InvalidData("dataset needs at least two classes");
  std::vector<long> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw InvalidData("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  for (std::size_t y = 0; y < counts.size(); ++y) {
    if (counts[y] == 0) throw InvalidData("class " + std::to_string(y) + " has no samples");
  }
}

Dataset Dataset::subset(const IndexList& indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features = gather_rows(features, indices);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(labels.at(i));
  return out;
}

std::vector<long> Dataset::class_counts() const {
  std::vector<long> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed, std::uint64_t sample_stream) {
  if (spec.num_classes < 2 || spec.dim < 1 || spec.n_per_class < 1) {
    throw std::invalid_argument("synth_dataset: need M >= 2, d >= 1, n_per_class >= 1");
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  Rng mean_rng = make_rng(seed, Stream::kClassMeans);
  Matrix means(spec.num_classes, spec.dim);
  for (int y = 0; y < spec.num_classes; ++y) {
    RowVector dir(spec.dim);
    do {
      for (int j = 0; j < spec.dim; ++j) dir(j) = gauss(mean_rng);
    } while (dir.norm() < 1e-8);
    means.row(y) = spec.class_separation * dir / dir.norm();
  }
  Rng rng = make_rng(seed, Stream::kSynthTrain, sample_stream);
  Dataset d;
  d.num_classes = spec.num_classes;
  const auto n = static_cast<Eigen::Index>(spec.num_classes) * spec.n_per_class;
  d.features.resize(n, spec.dim);
  d.labels.reserve(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (int y = 0; y < spec.num_classes; ++y) {
    for (int i = 0; i < spec.n_per_class; ++i, ++row) {
      for (int j = 0; j < spec.dim; ++j) d.features(row, j) = means(y, j) + gauss(rng);
      d.labels.push_back(y);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------

Dataset read_csv(std::istream& in, std::optional<int> num_classes) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: empty file, expected header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header.back() != "label") {
    throw ParseError("line 1: header must be f0,...,fD,label");
  }
  const std::size_t d = header.size() - 1;
  std::vector<double> values;
  Labels labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t col = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      const char* comma = std::find(p, end, ',');
      if (col < d) {
        double v;
        auto [ptr, ec] = std::from_chars(p, comma, v);
        if (ec != std::errc{} || ptr != comma) {
          throw ParseError("line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                           ": invalid number");
        }
        values.push_back(v);
      } else if (col == d) {
        long y;
        auto [ptr, ec] = std::from_chars(p, comma, y);
        if (ec != std::errc{} || ptr != comma) {
          throw ParseError("line " + std::to_string(line_no) + ": invalid label");
        }
        if (y < 0 || (num_classes && y >= *num_classes)) {
          throw InvalidData("line " + std::to_string(line_no) + ": label " + std::to_string(y) +
                            " out of range");
        }
        labels.push_back(static_cast<int>(y));
      }
      ++col;
      if (comma == end) break;
      p = comma + 1;
    }
    if (col != d + 1) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(d + 1) +
                       " fields, got " + std::to_string(col));
    }
  }
  if (labels.empty()) throw ParseError("line " + std::to_string(line_no) + ": no data rows");
  Matrix features(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < features.rows(); ++r)
    for (Eigen::Index c = 0; c < features.cols(); ++c)
      features(r, c) = values[static_cast<std::size_t>(r) * d + static_cast<std::size_t>(c)];
  return finish_loaded(std::move(features), std::move(labels), num_classes);
}

Dataset load_csv(const std::filesystem::path& path, std::optional<int> num_classes) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_csv(in, num_classes);
}

void write_csv(const Dataset& data, std::ostream& out) {
  for (int j = 0; j < data.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  for (Eigen::Index r = 0; r < data.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) out << format_double(data.features(r, c)) << ',';
    out << data.labels[static_cast<std::size_t>(r)] << '\n';
  }
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(data, out);
}

Dataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                      std::optional<int> num_classes) {
  IdxArray img = read_idx(images);
  IdxArray lab = read_idx(labels);
  if (lab.dims.size() != 1) throw ParseError(labels.string() + ": label file must be 1-D");
  if (lab.type == 0x0D || lab.type == 0x0E) {
    throw ParseError(labels.string() + ": label file must hold integers");
  }
  const std::size_t n = img.dims[0];
  if (n != lab.dims[0]) {
    throw ParseError("IDX pair disagrees on sample count: " + std::to_string(n) + " vs " +
                     std::to_string(lab.dims[0]));
  }
  const std::size_t d = n == 0 ? 0 : img.values.size() / n;
  const double scale = img.type == 0x08 ? 1.0 / 255.0 : 1.0;
  Matrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c)
      features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          img.type == 0x08 ? img.values[r * d + c] * scale : img.values[r * d + c];
  Labels y;
  y.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = lab.values[i];
    if (v < 0 || (num_classes && v >= *num_classes)) {
      throw InvalidData(labels.string() + ": label " + std::to_string(static_cast<long>(v)) +
                        " at sample " + std::to_string(i) + " out of range");
    }
    y.push_back(static_cast<int>(v));
  }
  return finish_loaded(std::move(features), std::move(y), num_classes);
}

void write_idx_pair(const Dataset& data, const std::filesystem::path& images,
                    const std::filesystem::path& labels) {
  {
    std::ofstream out(images, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + images.string());
    const std::array<char, 4> magic{0, 0, 0x0E, 2};
    out.write(magic.data(), 4);
    write_be32(out, static_cast<std::uint32_t>(data.features.rows()));
    write_be32(out, static_cast<std::uint32_t>(data.features.cols()));
    for (Eigen::Index r = 0; r < data.features.rows(); ++r) {
      for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
        std::uint64_t bits;
        const double v = data.features(r, c);
        std::memcpy(&bits, &v, 8);
        std::array<char, 8> b{};
        for (int i = 7; i >= 0; --i, bits >>= 8) b[static_cast<std::size_t>(i)] = static_cast<char>(bits & 0xFF);
        out.write(b.data(), 8);
      }
    }
  }
  std::ofstream out(labels, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + labels.string());
  const bool bytes = data.num_classes <= 256;
  const std::array<char, 4> magic{0, 0, static_cast<char>(bytes ? 0x08 : 0x0C), 1};
  out.write(magic.data(), 4);
  write_be32(out, static_cast<std::uint32_t>(data.labels.size()));
  for (int y : data.labels) {
    if (bytes) {
      out.put(static_cast<char>(y));
    } else {
      write_be32(out, static_cast<std::uint32_t>(y));
    }
  }
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const std::filesystem::path& labels_path, std::optional<int> num_classes) {
  switch (format) {
    case DatasetFormat::kCsvLabeled:
      return load_csv(path, num_classes);
    case DatasetFormat::kIdxPair:
      if (labels_path.empty()) throw std::invalid_argument("IDX format needs a labels file");
      return load_idx_pair(path, labels_path, num_classes);
  }
  throw std::invalid_argument("unknown dataset format");
}

// ---------------------------------------------------------------------------

std::string to_string(const SkewSpec& skew) {
  switch (skew.kind) {
    case SkewSpec::Kind::kIid: return "iid";
    case SkewSpec::Kind::kQuantity: return "quantity(alpha=" + std::to_string(skew.alpha) + ")";
    case SkewSpec::Kind::kDirichlet: return "dirichlet(beta=" + format_double(skew.beta) + ")";
  }
  return "?";
}

std::vector<std::size_t> Partition::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(client_indices.size());
  for (const auto& idx : client_indices) out.push_back(idx.size());
  return out;
}

Partition partition_iid(const Dataset& data, int num_clients, std::uint64_t seed) {
  if (num_clients < 1) throw std::invalid_argument("partition_iid: need K >= 1");
  Rng rng = make_rng(seed, Stream::kPartition);
  Partition p;
  p.skew = SkewSpec::iid();
  p.seed = seed;
  p.client_indices.resize(static_cast<std::size_t>(num_clients));
  std::size_t next = 0;
  for (auto& cls : indices_by_class(data)) {
    shuffle(cls, rng);
    for (auto i : cls) p.client_indices[next++ % p.client_indices.size()].push_back(i);
  }
  finalize(p);
  validate_partition(p, data.size());
  return p;
}

Partition partition_quantity_skew(const Dataset& data, int num_clients, int alpha,
                                  std::uint64_t seed) {
  const int m = data.num_classes;
  if (num_clients < 1) throw std::invalid_argument("quantity skew: need K >= 1");
  if (alpha < 1 || alpha > m) {
    throw std::invalid_argument("quantity skew: alpha=" + std::to_string(alpha) +
                                " must lie in [1, M=" + std::to_string(m) + "]");
  }
  const long total_shards = static_cast<long>(num_clients) * alpha;
  const auto shards_per_label = static_cast<std::size_t>((total_shards + m - 1) / m);
  Rng rng = make_rng(seed, Stream::kPartition);

  std::vector<IndexList> shards;
  for (auto& cls : indices_by_class(data)) {
    if (cls.size() < shards_per_label) {
      throw std::invalid_argument("quantity skew: a class has " + std::to_string(cls.size()) +
                                  " samples, fewer than its " + std::to_string(shards_per_label) +
                                  " shards");
    }
    shuffle(cls, rng);
    for (auto [start, len] : near_equal_ranges(cls.size(), shards_per_label)) {
      shards.emplace_back(cls.begin() + static_cast<std::ptrdiff_t>(start),
                          cls.begin() + static_cast<std::ptrdiff_t>(start + len));
    }
  }
  std::vector<std::size_t> order(shards.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);

  Partition p;
  p.skew = SkewSpec::quantity(alpha);
  p.seed = seed;
  p.client_indices.resize(static_cast<std::size_t>(num_clients));
  for (long s = 0; s < total_shards; ++s) {
    const auto& shard = shards[order[static_cast<std::size_t>(s)]];
    auto& dst = p.client_indices[static_cast<std::size_t>(s % num_clients)];
    dst.insert(dst.end(), shard.begin(), shard.end());
  }
  finalize(p);
  validate_partition(p, data.size());
  return p;
}

Partition partition_dirichlet_skew(const Dataset& data, int num_clients, double beta,
                                   std::uint64_t seed, int max_redraws) {
  if (num_clients < 1) throw std::invalid_argument("dirichlet skew: need K >= 1");
  if (!(beta > 0.0)) throw std::invalid_argument("dirichlet skew: beta must be positive");
  const auto k = static_cast<std::size_t>(num_clients);
  const auto m = static_cast<std::size_t>(data.num_classes);
  Rng rng = make_rng(seed, Stream::kPartition);
  std::gamma_distribution<double> gamma(beta, 1.0);
  const auto base_classes = indices_by_class(data);

  for (int attempt = 0; attempt <= max_redraws; ++attempt) {
    // proportions[c][y] = p_{c,y}
    std::vector<std::vector<double>> proportions(k, std::vector<double>(m));
    for (auto& row : proportions) {
      double sum = 0.0;
      while (!(sum > 0.0)) {
        sum = 0.0;
        for (auto& v : row) sum += (v = gamma(rng));
      }
      for (auto& v : row) v /= sum;
    }
    Partition p;
    p.skew = SkewSpec::dirichlet(beta);
    p.seed = seed;
    p.redraws = attempt;
    p.client_indices.resize(k);
    for (std::size_t y = 0; y < m; ++y) {
      IndexList cls = base_classes[y];
      shuffle(cls, rng);
      double col = 0.0;
      for (std::size_t c = 0; c < k; ++c) col += proportions[c][y];
      if (!(col > 0.0)) continue;
      const double n_y = static_cast<double>(cls.size());
      std::vector<std::size_t> counts(k);
      std::vector<double> frac(k);
      std::size_t assigned = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double share = proportions[c][y] / col * n_y;
        counts[c] = static_cast<std::size_t>(std::floor(share));
        frac[c] = share - std::floor(share);
        assigned += counts[c];
      }
      std::vector<std::size_t> by_frac(k);
      std::iota(by_frac.begin(), by_frac.end(), 0);
      std::stable_sort(by_frac.begin(), by_frac.end(),
                       [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
      for (std::size_t i = 0; assigned < cls.size(); ++i, ++assigned) ++counts[by_frac[i % k]];
      std::size_t at = 0;
      for (std::size_t c = 0; c < k; ++c) {
        auto& dst = p.client_indices[c];
        dst.insert(dst.end(), cls.begin() + static_cast<std::ptrdiff_t>(at),
                   cls.begin() + static_cast<std::ptrdiff_t>(at + counts[c]));
        at += counts[c];
      }
    }
    const bool any_empty = std::any_of(p.client_indices.begin(), p.client_indices.end(),
                                       [](const IndexList& v) { return v.empty(); });
    if (any_empty) continue;
    finalize(p);
    validate_partition(p, data.size());
    return p;
  }
  throw ConfigError("dirichlet skew: every one of " + std::to_string(max_redraws + 1) +
                    " draws left a client without data (K=" + std::to_string(num_clients) +
                    ", beta=" + format_double(beta) + ")");
}

Partition make_partition(const Dataset& data, int num_clients, const SkewSpec& skew,
                         std::uint64_t seed) {
  switch (skew.kind) {
    case SkewSpec::Kind::kIid: return partition_iid(data, num_clients, seed);
    case SkewSpec::Kind::kQuantity: return partition_quantity_skew(data, num_clients, skew.alpha, seed);
    case SkewSpec::Kind::kDirichlet: return partition_dirichlet_skew(data, num_clients, skew.beta, seed);
  }
  throw std::invalid_argument("unknown skew kind");
}

void validate_partition(const Partition& partition, std::size_t dataset_size) {
  std::vector<char> seen(dataset_size, 0);
  for (std::size_t c = 0; c < partition.client_indices.size(); ++c) {
    const auto& idx = partition.client_indices[c];
    if (idx.empty()) throw InvalidData("partition: client " + std::to_string(c) + " is empty");
    for (auto i : idx) {
      if (i >= dataset_size) {
        throw InvalidData("partition: client " + std::to_string(c) + " holds index " +
                          std::to_string(i) + " >= " + std::to_string(dataset_size));
      }
      if (seen[i]) throw InvalidData("partition: index " + std::to_string(i) + " assigned twice");
      seen[i] = 1;
    }
  }
}

std::string partition_to_json(const Partition& partition, const Dataset* data) {
  json j;
  json skew;
  switch (partition.skew.kind) {
    case SkewSpec::Kind::kIid: skew["kind"] = "iid"; break;
    case SkewSpec::Kind::kQuantity: skew["kind"] = "quantity"; skew["alpha"] = partition.skew.alpha; break;
    case SkewSpec::Kind::kDirichlet: skew["kind"] = "dirichlet"; skew["beta"] = partition.skew.beta; break;
  }
  j["skew"] = skew;
  j["seed"] = partition.seed;
  j["redraws"] = partition.redraws;
  if (data != nullptr) j["num_classes"] = data->num_classes;
  json clients = json::array();
  for (std::size_t c = 0; c < partition.client_indices.size(); ++c) {
    json entry;
    entry["id"] = c;
    entry["indices"] = partition.client_indices[c];
    if (data != nullptr) {
      std::vector<long> counts(static_cast<std::size_t>(data->num_classes), 0);
      for (auto i : partition.client_indices[c]) ++counts[static_cast<std::size_t>(data->labels.at(i))];
      entry["label_counts"] = counts;
    }
    clients.push_back(std::move(entry));
  }
  j["clients"] = std::move(clients);
  return j.dump(1);
}

Partition partition_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("partition manifest: ") + e.what());
  }
  try {
    Partition p;
    const auto& skew = j.at("skew");
    const std::string kind = skew.at("kind").get<std::string>();
    if (kind == "iid") {
      p.skew = SkewSpec::iid();
    } else if (kind == "quantity") {
      p.skew = SkewSpec::quantity(skew.at("alpha").get<int>());
    } else if (kind == "dirichlet") {
      p.skew = SkewSpec::dirichlet(skew.at("beta").get<double>());
    } else {
      throw ParseError("partition manifest: unknown skew kind '" + kind + "'");
    }
    p.seed = j.at("seed").get<std::uint64_t>();
    p.redraws = j.value("redraws", 0);
    for (const auto& entry : j.at("clients")) {
      p.client_indices.push_back(entry.at("indices").get<IndexList>());
    }
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("partition manifest: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

std::vector<int> allocate_minibatch_sizes(std::span<const std::size_t> data_sizes, int batch) {
  const std::size_t k = data_sizes.size();
  if (k == 0) throw std::invalid_argument("allocate_minibatch_sizes: no participants");
  if (batch < static_cast<int>(k)) {
    throw std::invalid_argument("allocate_minibatch_sizes: B=" + std::to_string(batch) + " < " +
                                std::to_string(k) + " participants");
  }
  // Exact integer arithmetic: ideal_k = n_k * B / S.
  using i128 = __int128;
  i128 total = 0;
  for (auto n : data_sizes) {
    if (n == 0) throw std::invalid_argument("allocate_minibatch_sizes: empty client");
    total += n;
  }
  std::vector<int> sizes(k);
  std::vector<i128> remainder(k);
  long assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const i128 num = static_cast<i128>(data_sizes[i]) * batch;
    sizes[i] = static_cast<int>(num / total);
    remainder[i] = num % total;
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < batch; ++i, ++assigned) ++sizes[order[i]];

  // Floor of one: move a sample from the client furthest above its ideal.
  auto excess = [&](std::size_t i) {
    return static_cast<i128>(sizes[i]) * total - static_cast<i128>(data_sizes[i]) * batch;
  };
  for (std::size_t i = 0; i < k; ++i) {
    if (sizes[i] > 0) continue;
    std::size_t donor = k;
    for (std::size_t j = 0; j < k; ++j) {
      if (sizes[j] < 2) continue;
      if (donor == k || excess(j) > excess(donor)) donor = j;
    }
    --sizes[donor];
    sizes[i] = 1;
  }
  return sizes;
}

BatchPlan allocate_minibatch_sizes(const Partition& partition, std::span<const int> participants,
                                   int batch) {
  BatchPlan plan;
  plan.participants.assign(participants.begin(), participants.end());
  std::sort(plan.participants.begin(), plan.participants.end());
  std::vector<std::size_t> data_sizes;
  for (int id : plan.participants) {
    data_sizes.push_back(partition.client_indices.at(static_cast<std::size_t>(id)).size());
  }
  plan.sizes = allocate_minibatch_sizes(data_sizes, batch);
  plan.total = batch;
  return plan;
}

LabelDistribution estimate_label_distribution(const Labels& labels, int num_classes) {
  if (labels.empty()) throw std::invalid_argument("estimate_label_distribution: no labels");
  std::vector<long> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw std::invalid_argument("estimate_label_distribution: label out of range");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  return LabelDistribution::from_counts(std::move(counts));
}

LabelDistribution estimate_label_distribution(const Dataset& data, const IndexList& indices) {
  Labels labels;
  labels.reserve(indices.size());
  for (auto i : indices) labels.push_back(data.labels.at(i));
  return estimate_label_distribution(labels, data.num_classes);
}

// ---------------------------------------------------------------------------

MinibatchSampler::MinibatchSampler(IndexList indices, std::uint64_t seed)
    : indices_(std::move(indices)), rng_(seed) {
  if (indices_.empty()) throw std::invalid_argument("MinibatchSampler: client holds no samples");
  reshuffle();
}

void MinibatchSampler::reshuffle() {
  order_ = indices_;
  shuffle(order_, rng_);
  cursor_ = 0;
  ++epoch_;
}

IndexList MinibatchSampler::next(std::size_t batch) {
  if (indices_.empty()) throw std::invalid_argument("MinibatchSampler: client holds no samples");
  IndexList out;
  out.reserve(batch);
  if (batch <= order_.size()) {
    if (order_.size() - cursor_ < batch) reshuffle();
    out.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch));
    cursor_ += batch;
    return out;
  }
  // Batch larger than the local set: walk consecutive epochs.
  while (out.size() < batch) {
    if (cursor_ == order_.size()) reshuffle();
    out.push_back(order_[cursor_++]);
  }
  return out;
}

}  // namespace scala
