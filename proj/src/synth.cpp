#include "mmea/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <tuple>

namespace mmea {

void SynthConfig::validate() const {
  if (entities < 2) throw std::invalid_argument("synth: need at least 2 entities");
  if (relations < 1) throw std::invalid_argument("synth: need at least 1 relation");
  if (long_tail_exponent < 0.0) throw std::invalid_argument("synth: long_tail_exponent must be non-negative");
  if (edge_dropout < 0.0 || edge_dropout > 1.0) throw std::invalid_argument("synth: edge_dropout must be in [0,1]");
  for (double s : {image_noise, relation_noise, attribute_noise, surface_noise}) {
    if (s < 0.0) throw std::invalid_argument("synth: noise levels must be non-negative");
  }
  if (image_dim < 1 || relation_dim < 1 || attribute_dim < 1 || surface_dim < 1) {
    throw std::invalid_argument("synth: feature dimensions must be positive");
  }
  if (image_spread < 0.0 || relation_spread < 0.0 || attribute_spread < 0.0) {
    throw std::invalid_argument("synth: spreads must be non-negative");
  }
  if (image_coverage <= 0.0 || image_coverage > 1.0) throw std::invalid_argument("synth: image_coverage must be in (0,1]");
  if (train_fraction < 0.0 || train_fraction >= 1.0) throw std::invalid_argument("synth: train_fraction must be in [0,1)");
  const double max_pairs = static_cast<double>(entities) * static_cast<double>(entities - 1) * relations;
  if (static_cast<double>(triples) > 0.5 * max_pairs) throw std::invalid_argument("synth: too many triples for the graph size");
}

SynthConfig SynthConfig::from_config(const KeyValueConfig& c) {
  SynthConfig s;
  auto count = [&](const char* key, std::size_t fallback) {
    const long long v = c.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw std::invalid_argument(std::string("synth: ") + key + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  s.entities = count("entities", s.entities);
  s.triples = count("triples", s.triples);
  s.relations = count("relations", s.relations);
  s.long_tail_exponent = c.get_double("long_tail_exponent", s.long_tail_exponent);
  s.edge_dropout = c.get_double("edge_dropout", s.edge_dropout);
  if (c.has("noise")) {
    const double n = c.get_double("noise", 0.0);
    s.image_noise = s.relation_noise = s.attribute_noise = s.surface_noise = n;
  }
  s.image_noise = c.get_double("image_noise", s.image_noise);
  s.relation_noise = c.get_double("relation_noise", s.relation_noise);
  s.attribute_noise = c.get_double("attribute_noise", s.attribute_noise);
  s.surface_noise = c.get_double("surface_noise", s.surface_noise);
  s.image_dim = count("image_dim", s.image_dim);
  s.relation_dim = count("relation_dim", s.relation_dim);
  s.attribute_dim = count("attribute_dim", s.attribute_dim);
  s.surface_dim = count("surface_dim", s.surface_dim);
  s.image_clusters = count("image_clusters", s.image_clusters);
  s.relation_clusters = count("relation_clusters", s.relation_clusters);
  s.attribute_clusters = count("attribute_clusters", s.attribute_clusters);
  s.image_spread = c.get_double("image_spread", s.image_spread);
  s.relation_spread = c.get_double("relation_spread", s.relation_spread);
  s.attribute_spread = c.get_double("attribute_spread", s.attribute_spread);
  s.image_coverage = c.get_double("image_coverage", s.image_coverage);
  s.surface = c.get_bool("surface", s.surface);
  s.train_fraction = c.get_double("train_fraction", s.train_fraction);
  s.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long long>(s.seed)));
  return s;
}

namespace {

Matrix latent_matrix(std::size_t n, std::size_t dim, std::size_t clusters, double spread, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(dim);
  Matrix z(rows, cols);
  if (clusters == 0) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
    return z;
  }
  Matrix centers(static_cast<Eigen::Index>(clusters), cols);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = normal(rng);
  std::uniform_int_distribution<std::size_t> pick(0, clusters - 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    z.row(i) = centers.row(static_cast<Eigen::Index>(pick(rng)));
    for (Eigen::Index j = 0; j < cols; ++j) z(i, j) += spread * normal(rng);
  }
  return z;
}

Matrix add_noise(const Matrix& z, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out = z;
  if (sigma == 0.0) return out;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += sigma * normal(rng);
  return out;
}

}  // namespace

SynthTask generate_synthetic_task(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.entities;
  std::mt19937_64 graph_rng(derive_seed(cfg.seed, 1));
  std::mt19937_64 feature_rng(derive_seed(cfg.seed, 2));
  std::mt19937_64 split_rng(derive_seed(cfg.seed, 3));

  SynthTask out;
  out.permutation.resize(n);
  std::iota(out.permutation.begin(), out.permutation.end(), EntityId{0});
  std::shuffle(out.permutation.begin(), out.permutation.end(), graph_rng);

  // Zipf weights over a random ranking of entities.
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::shuffle(rank.begin(), rank.end(), graph_rng);
  std::vector<double> weight(n);
  for (std::size_t e = 0; e < n; ++e) weight[e] = std::pow(static_cast<double>(rank[e] + 1), -cfg.long_tail_exponent);
  std::discrete_distribution<std::size_t> endpoint(weight.begin(), weight.end());
  std::vector<double> rel_weight(cfg.relations);
  for (std::size_t r = 0; r < cfg.relations; ++r) rel_weight[r] = 1.0 / static_cast<double>(r + 1);
  std::discrete_distribution<std::size_t> relation(rel_weight.begin(), rel_weight.end());

  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  std::vector<Triple> source_triples;
  auto try_add = [&](std::size_t h, std::size_t t) {
    if (h == t) return false;
    const std::size_t r = relation(graph_rng);
    if (!seen.emplace(h, r, t).second) return false;
    source_triples.push_back({static_cast<EntityId>(h), static_cast<RelationId>(r), static_cast<EntityId>(t)});
    return true;
  };
  // every entity gets at least one triple while the budget allows
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), graph_rng);
  for (std::size_t e : order) {
    if (source_triples.size() >= cfg.triples) break;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const std::size_t partner = endpoint(graph_rng);
      const bool added = (graph_rng() & 1) ? try_add(e, partner) : try_add(partner, e);
      if (added) break;
    }
  }
  std::size_t guard = 0;
  while (source_triples.size() < cfg.triples && guard++ < cfg.triples * 1000) {
    try_add(endpoint(graph_rng), endpoint(graph_rng));
  }

  std::bernoulli_distribution drop(cfg.edge_dropout);
  std::vector<Triple> target_triples;
  for (const auto& t : source_triples) {
    if (drop(graph_rng)) continue;
    target_triples.push_back({out.permutation[t.head], t.relation, out.permutation[t.tail]});
  }

  AlignmentTask& task = out.task;
  task.seed = cfg.seed;
  task.source.entities = Vocabulary::numeric(n);
  task.target.entities = Vocabulary::numeric(n);
  task.source.relations = Vocabulary::numeric(cfg.relations);
  task.target.relations = Vocabulary::numeric(cfg.relations);
  task.source.triples = std::move(source_triples);
  task.target.triples = std::move(target_triples);
  task.source.finalize();
  task.target.finalize();

  // Features: latent rows are indexed by source entity; the target copy is permuted.
  auto add_modality = [&](Modality m, std::size_t dim, std::size_t clusters, double spread, double sigma,
                          double coverage) {
    const Matrix z = latent_matrix(n, dim, clusters, spread, feature_rng);
    Matrix zt(z.rows(), z.cols());
    for (std::size_t e = 0; e < n; ++e) zt.row(out.permutation[e]) = z.row(static_cast<Eigen::Index>(e));
    ModalityFeatures fs{m, add_noise(z, sigma, feature_rng), std::vector<std::uint8_t>(n, 1)};
    ModalityFeatures ft{m, add_noise(zt, sigma, feature_rng), std::vector<std::uint8_t>(n, 1)};
    if (coverage < 1.0) {
      std::bernoulli_distribution has(coverage);
      // same imputation streams as load_task, so a saved task reloads the same way
      std::uint64_t stream = 101;
      for (auto* f : {&fs, &ft}) {
        for (std::size_t e = 0; e < n; ++e) f->present[e] = has(feature_rng) ? 1 : 0;
        if (f->present_count() == 0) f->present[0] = 1;
        *f = impute_missing_images(*f, derive_seed(cfg.seed, stream++));
      }
    }
    task.source_features.push_back(std::move(fs));
    task.target_features.push_back(std::move(ft));
  };
  add_modality(Modality::image, cfg.image_dim, cfg.image_clusters, cfg.image_spread, cfg.image_noise,
               cfg.image_coverage);
  add_modality(Modality::relation, cfg.relation_dim, cfg.relation_clusters, cfg.relation_spread, cfg.relation_noise,
               1.0);
  add_modality(Modality::attribute, cfg.attribute_dim, cfg.attribute_clusters, cfg.attribute_spread,
               cfg.attribute_noise, 1.0);
  if (cfg.surface) add_modality(Modality::surface, cfg.surface_dim, 0, 0.0, cfg.surface_noise, 1.0);

  for (std::size_t e = 0; e < n; ++e) out.gold.emplace_back(static_cast<EntityId>(e), out.permutation[e]);
  std::vector<PivotPair> shuffled = out.gold;
  std::shuffle(shuffled.begin(), shuffled.end(), split_rng);
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
  task.train_pivots.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
  task.test_pivots.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train), shuffled.end());
  task.validate();
  return out;
}

}  // namespace mmea
