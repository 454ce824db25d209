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

#include "scala/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "scala/format.hpp"

namespace scala {
namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError(key + " = '" + value + "': " + why);
}

long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    bad(key, v, "not an integer");
  }
  if (used != v.size()) bad(key, v, "not an integer");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  if (!v.empty() && v[0] == '-') bad(key, v, "must be nonnegative");
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    bad(key, v, "not an unsigned integer");
  }
  if (used != v.size()) bad(key, v, "not an unsigned integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    bad(key, v, "not a number");
  }
  if (used != v.size() || !std::isfinite(out)) bad(key, v, "not a finite number");
  return out;
}

std::optional<LossKind> parse_loss(const std::string& key, const std::string& v) {
  if (v == "auto") return std::nullopt;
  if (v == "plain") return LossKind::kPlain;
  if (v == "adjusted") return LossKind::kAdjusted;
  bad(key, v, "expected auto, plain, or adjusted");
}

std::string loss_name(const std::optional<LossKind>& k) {
  if (!k) return "auto";
  return *k == LossKind::kPlain ? "plain" : "adjusted";
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

TrainingConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
  }

  TrainingConfig cfg;
  std::string skew_kind = "quantity";
  std::optional<int> alpha;
  std::optional<double> beta;
  std::string source = "synthetic";

  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) {
      throw ConfigError(section + ": key outside any section");
    }
    for (const auto& [name, node] : entries) {
      const std::string key = section + "." + name;
      const std::string v = trim(node.data());
      if (key == "data.source") {
        source = v;
      } else if (key == "data.classes") {
        cfg.data.synth.num_classes = static_cast<int>(parse_int(key, v));
        cfg.data.num_classes = cfg.data.synth.num_classes;
      } else if (key == "data.dim") {
        cfg.data.synth.dim = static_cast<int>(parse_int(key, v));
      } else if (key == "data.train_per_class") {
        cfg.data.synth.n_per_class = static_cast<int>(parse_int(key, v));
      } else if (key == "data.test_per_class") {
        cfg.data.test_per_class = static_cast<int>(parse_int(key, v));
      } else if (key == "data.separation") {
        cfg.data.synth.class_separation = parse_real(key, v);
      } else if (key == "data.train_path") {
        cfg.data.train_path = v;
      } else if (key == "data.train_labels_path") {
        cfg.data.train_labels_path = v;
      } else if (key == "data.test_path") {
        cfg.data.test_path = v;
      } else if (key == "data.test_labels_path") {
        cfg.data.test_labels_path = v;
      } else if (key == "federation.clients") {
        cfg.num_clients = static_cast<int>(parse_int(key, v));
      } else if (key == "federation.participation_ratio") {
        cfg.participation_ratio = parse_real(key, v);
      } else if (key == "federation.participation") {
        if (v == "fixed") cfg.participation = ParticipationMode::kFixedFraction;
        else if (v == "bernoulli") cfg.participation = ParticipationMode::kBernoulli;
        else bad(key, v, "expected fixed or bernoulli");
      } else if (key == "federation.skew") {
        skew_kind = v;
      } else if (key == "federation.alpha") {
        alpha = static_cast<int>(parse_int(key, v));
      } else if (key == "federation.beta") {
        beta = parse_real(key, v);
      } else if (key == "model.hidden") {
        cfg.hidden.clear();
        for (const auto& w : split_list(v)) cfg.hidden.push_back(static_cast<int>(parse_int(key, w)));
      } else if (key == "model.cut") {
        cfg.cut_index = static_cast<std::size_t>(parse_u64(key, v));
      } else if (key == "training.variants") {
        cfg.variants.clear();
        for (const auto& name : split_list(v)) {
          const auto variant = parse_variant(name);
          if (!variant) bad(key, v, "unknown variant '" + name + "'");
          cfg.variants.push_back(*variant);
        }
      } else if (key == "training.batch") {
        cfg.batch_size = static_cast<int>(parse_int(key, v));
      } else if (key == "training.local_iters") {
        cfg.local_iters = static_cast<int>(parse_int(key, v));
      } else if (key == "training.rounds") {
        cfg.rounds = static_cast<int>(parse_int(key, v));
      } else if (key == "training.lr") {
        cfg.learning_rate = parse_real(key, v);
      } else if (key == "training.eval_every") {
        cfg.eval_every = static_cast<int>(parse_int(key, v));
      } else if (key == "training.server_loss") {
        cfg.server_loss = parse_loss(key, v);
      } else if (key == "training.client_loss") {
        cfg.client_loss = parse_loss(key, v);
      } else if (key == "training.bytes_per_scalar") {
        cfg.bytes_per_scalar = parse_u64(key, v);
      } else if (key == "run.seed") {
        cfg.seed = parse_u64(key, v);
      } else if (key == "run.out") {
        cfg.out_dir = v;
      } else {
        throw ConfigError("unknown key '" + key + "'");
      }
    }
  }

  if (source == "synthetic") cfg.data.source = DataSource::kSynthetic;
  else if (source == "csv") cfg.data.source = DataSource::kCsv;
  else if (source == "idx") cfg.data.source = DataSource::kIdx;
  else bad("data.source", source, "expected synthetic, csv, or idx");
  if (cfg.data.source == DataSource::kSynthetic) cfg.data.num_classes.reset();

  if (skew_kind == "iid") {
    cfg.skew = SkewSpec::iid();
  } else if (skew_kind == "quantity") {
    cfg.skew = SkewSpec::quantity(alpha.value_or(2));
  } else if (skew_kind == "dirichlet") {
    cfg.skew = SkewSpec::dirichlet(beta.value_or(0.5));
  } else {
    bad("federation.skew", skew_kind, "expected iid, quantity, or dirichlet");
  }
  validate_config(cfg);
  return cfg;
}

TrainingConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate_config(const TrainingConfig& c) {
  auto require = [](bool ok, const std::string& key, const std::string& why) {
    if (!ok) throw ConfigError(key + ": " + why);
  };
  const auto& d = c.data;
  if (d.source == DataSource::kSynthetic) {
    require(d.synth.num_classes >= 2, "data.classes", "need at least 2 classes");
    require(d.synth.dim >= 1, "data.dim", "must be positive");
    require(d.synth.n_per_class >= 1, "data.train_per_class", "must be positive");
    require(d.test_per_class >= 1, "data.test_per_class", "must be positive");
    require(d.synth.class_separation >= 0.0, "data.separation", "must be nonnegative");
  } else {
    require(!d.train_path.empty(), "data.train_path", "required for file sources");
    require(!d.test_path.empty(), "data.test_path", "required for file sources");
    if (d.source == DataSource::kIdx) {
      require(!d.train_labels_path.empty(), "data.train_labels_path", "required for idx");
      require(!d.test_labels_path.empty(), "data.test_labels_path", "required for idx");
    }
    if (d.num_classes) require(*d.num_classes >= 2, "data.classes", "need at least 2 classes");
  }
  require(c.num_clients >= 1, "federation.clients", "must be positive");
  require(c.participation_ratio > 0.0 && c.participation_ratio <= 1.0, "federation.participation_ratio",
          "must lie in (0, 1]");
  if (c.skew.kind == SkewSpec::Kind::kQuantity) {
    require(c.skew.alpha >= 1, "federation.alpha", "must be positive");
    if (d.source == DataSource::kSynthetic) {
      require(c.skew.alpha <= d.synth.num_classes, "federation.alpha", "must not exceed the class count");
    }
  }
  if (c.skew.kind == SkewSpec::Kind::kDirichlet) require(c.skew.beta > 0.0, "federation.beta", "must be positive");
  require(!c.hidden.empty(), "model.hidden", "need at least one hidden layer");
  for (int w : c.hidden) require(w >= 1, "model.hidden", "widths must be positive");
  const std::size_t layers = 2 * c.hidden.size() + 1;
  require(c.cut_index >= 1 && c.cut_index < layers, "model.cut",
          "must lie in [1, " + std::to_string(layers) + ")");
  require(!c.variants.empty(), "training.variants", "need at least one variant");
  require(c.batch_size >= 1, "training.batch", "must be positive");
  const long min_participants = std::max<long>(1, std::lround(c.participation_ratio * c.num_clients));
  if (c.participation == ParticipationMode::kFixedFraction) {
    require(c.batch_size >= min_participants, "training.batch",
            "B must be at least round(rho*K) = " + std::to_string(min_participants));
  } else {
    require(c.batch_size >= c.num_clients, "training.batch",
            "bernoulli participation may select every client, so B must be at least K");
  }
  require(c.local_iters >= 0, "training.local_iters", "must be nonnegative");
  require(c.rounds >= 0, "training.rounds", "must be nonnegative");
  require(c.learning_rate > 0.0, "training.lr", "must be positive");
  require(c.eval_every >= 0, "training.eval_every", "must be nonnegative");
  require(c.bytes_per_scalar >= 1, "training.bytes_per_scalar", "must be positive");
  require(!c.out_dir.empty(), "run.out", "must not be empty");
}

std::string serialize_config(const TrainingConfig& c) {
  std::ostringstream o;
  const auto& d = c.data;
  o << "[data]\n";
  switch (d.source) {
    case DataSource::kSynthetic:
      o << "source = synthetic\n"
        << "classes = " << d.synth.num_classes << "\n"
        << "dim = " << d.synth.dim << "\n"
        << "train_per_class = " << d.synth.n_per_class << "\n"
        << "test_per_class = " << d.test_per_class << "\n"
        << "separation = " << format_double(d.synth.class_separation) << "\n";
      break;
    case DataSource::kCsv:
    case DataSource::kIdx:
      o << "source = " << (d.source == DataSource::kCsv ? "csv" : "idx") << "\n"
        << "train_path = " << d.train_path << "\n"
        << "test_path = " << d.test_path << "\n";
      if (d.source == DataSource::kIdx) {
        o << "train_labels_path = " << d.train_labels_path << "\n"
          << "test_labels_path = " << d.test_labels_path << "\n";
      }
      if (d.num_classes) o << "classes = " << *d.num_classes << "\n";
      break;
  }
  o << "\n[federation]\n"
    << "clients = " << c.num_clients << "\n"
    << "participation_ratio = " << format_double(c.participation_ratio) << "\n"
    << "participation = " << (c.participation == ParticipationMode::kFixedFraction ? "fixed" : "bernoulli") << "\n";
  switch (c.skew.kind) {
    case SkewSpec::Kind::kIid: o << "skew = iid\n"; break;
    case SkewSpec::Kind::kQuantity: o << "skew = quantity\nalpha = " << c.skew.alpha << "\n"; break;
    case SkewSpec::Kind::kDirichlet: o << "skew = dirichlet\nbeta = " << format_double(c.skew.beta) << "\n"; break;
  }
  o << "\n[model]\n"
    << "hidden = " << join_ints(c.hidden) << "\n"
    << "cut = " << c.cut_index << "\n";
  o << "\n[training]\nvariants = ";
  for (std::size_t i = 0; i < c.variants.size(); ++i) o << (i ? "," : "") << to_string(c.variants[i]);
  o << "\n"
    << "batch = " << c.batch_size << "\n"
    << "local_iters = " << c.local_iters << "\n"
    << "rounds = " << c.rounds << "\n"
    << "lr = " << format_double(c.learning_rate) << "\n"
    << "eval_every = " << c.eval_every << "\n"
    << "server_loss = " << loss_name(c.server_loss) << "\n"
    << "client_loss = " << loss_name(c.client_loss) << "\n"
    << "bytes_per_scalar = " << c.bytes_per_scalar << "\n";
  o << "\n[run]\n"
    << "seed = " << c.seed << "\n"
    << "out = " << c.out_dir << "\n";
  return o.str();
}

ProtocolConfig protocol_config(const TrainingConfig& c, ProtocolVariant variant) {
  ProtocolConfig p;
  p.variant = variant;
  p.participation_ratio = c.participation_ratio;
  p.participation = c.participation;
  p.batch_size = c.batch_size;
  p.local_iters = c.local_iters;
  p.learning_rate = c.learning_rate;
  p.eval_every = c.eval_every;
  p.total_rounds = c.rounds;
  p.server_loss = c.server_loss;
  p.client_loss = c.client_loss;
  p.bytes_per_scalar = c.bytes_per_scalar;
  return p;
}

}  // namespace scala
