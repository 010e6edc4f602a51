#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mmea/config.hpp"
#include "mmea/kgdata.hpp"

namespace mmea {

/// Desk-scale alignment benchmark. The target graph is an entity-permuted copy of
/// the source with edge dropout; every feature channel is a shared per-entity
/// latent vector plus independent Gaussian noise on each side.
struct SynthConfig {
  std::size_t entities = 200;
  std::size_t triples = 600;
  std::size_t relations = 20;
  /// Zipf exponent of the entity sampling weights used to draw triple endpoints.
  double long_tail_exponent = 1.0;
  /// Probability that a source triple is missing from the target graph.
  double edge_dropout = 0.1;

  double image_noise = 0.3;
  double relation_noise = 0.3;
  double attribute_noise = 0.3;
  double surface_noise = 0.3;

  std::size_t image_dim = 12;
  std::size_t relation_dim = 16;
  std::size_t attribute_dim = 16;
  std::size_t surface_dim = 16;
  /// Latent = one of `clusters` shared centres + spread * per-entity Normal draw.
  /// clusters = 0 means no shared centre (spread is then ignored and set to 1).
  std::size_t image_clusters = 0;
  std::size_t relation_clusters = 8;
  std::size_t attribute_clusters = 8;
  double image_spread = 0.0;
  double relation_spread = 0.3;
  double attribute_spread = 0.3;

  /// Probability that an entity has an observed image, drawn per graph.
  double image_coverage = 1.0;
  bool surface = false;

  double train_fraction = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
  /// Overrides fields from `synth_*` style keys (entities, triples, noise, ...).
  static SynthConfig from_config(const KeyValueConfig& cfg);
};

struct SynthTask {
  AlignmentTask task;
  /// source entity i corresponds to target entity permutation[i]
  std::vector<EntityId> permutation;
  std::vector<PivotPair> gold;
};

SynthTask generate_synthetic_task(const SynthConfig& cfg);

}  // namespace mmea
