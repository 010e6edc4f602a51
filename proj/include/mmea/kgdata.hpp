#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mmea/config.hpp"
#include "mmea/numcore.hpp"

namespace mmea {

/// Every channel the model can encode. `structure` comes from the graph itself;
/// the rest are supplied as per-entity feature matrices.
enum class Modality : std::uint8_t { structure = 0, image = 1, relation = 2, attribute = 3, surface = 4 };

inline constexpr std::array<Modality, 5> kAllModalities = {
    Modality::structure, Modality::image, Modality::relation, Modality::attribute, Modality::surface};
inline constexpr std::array<Modality, 4> kFeatureModalities = {Modality::image, Modality::relation,
                                                               Modality::attribute, Modality::surface};

std::string_view modality_name(Modality m);
/// Throws std::invalid_argument for unknown names.
Modality parse_modality(std::string_view name);

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;
};

/// Bidirectional label <-> dense id table.
class Vocabulary {
 public:
  Vocabulary() = default;
  /// Plain numeric vocabulary: labels are "0".."n-1".
  static Vocabulary numeric(std::size_t n);

  /// Adds a label with an explicit id. Ids must end up dense in [0, size).
  void insert(std::string label, std::uint32_t id);
  std::optional<std::uint32_t> find(std::string_view label) const;
  const std::string& label(std::uint32_t id) const { return labels_.at(id); }
  std::size_t size() const { return labels_.size(); }

  void validate_dense() const;

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct KnowledgeGraph {
  Vocabulary entities;
  Vocabulary relations;
  std::vector<Triple> triples;
  std::vector<std::size_t> degree;

  std::size_t entity_count() const { return entities.size(); }
  /// Recomputes `degree` from `triples`; throws if any triple references an unknown id.
  void finalize();
};

/// One feature channel for the entities of a single graph.
struct ModalityFeatures {
  Modality name = Modality::image;
  Matrix matrix;
  /// 1 = observed, 0 = imputed or zero-filled.
  std::vector<std::uint8_t> present;

  std::size_t present_count() const;
};

using PivotPair = std::pair<EntityId, EntityId>;

struct ScoredPivot {
  EntityId source;
  EntityId target;
  double score;
  bool operator==(const ScoredPivot&) const = default;
};

struct CoverageStat {
  Modality modality;
  std::size_t source_present;
  std::size_t source_total;
  std::size_t target_present;
  std::size_t target_total;
};

struct AlignmentTask {
  KnowledgeGraph source;
  KnowledgeGraph target;
  /// Same modality set, in the same order, on both sides.
  std::vector<ModalityFeatures> source_features;
  std::vector<ModalityFeatures> target_features;
  std::vector<PivotPair> train_pivots;
  std::vector<PivotPair> test_pivots;
  std::uint64_t seed = 0;

  bool has_modality(Modality m) const;
  /// Index into source_features/target_features, or -1.
  int feature_index(Modality m) const;
  std::vector<CoverageStat> coverage() const;
  /// Checks every invariant of the task; throws std::runtime_error on the first violation.
  void validate() const;
};

// ---------------------------------------------------------------------------
// File formats

/// Binary feature matrix: "MMEA", u32 version=1, u32 rows, u32 cols, then f32 row-major,
/// all little-endian. Values are narrowed to 32-bit on write.
void write_feature_matrix(const std::filesystem::path& path, const Matrix& m);
/// Reads the binary format, falling back to tab-separated text when the magic is absent.
Matrix read_feature_matrix(const std::filesystem::path& path);
void write_feature_matrix_tsv(const std::filesystem::path& path, const Matrix& m);

/// Companion mask: one byte (0 or 1) per row.
void write_mask(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask);
std::vector<std::uint8_t> read_mask(const std::filesystem::path& path);

Vocabulary read_vocabulary(const std::filesystem::path& path);
void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);

/// Reads head<TAB>relation<TAB>tail lines. Tokens are looked up as labels in the
/// vocabularies first, then accepted as integer ids. When a vocabulary is empty it
/// grows to cover the largest integer id seen.
std::vector<Triple> read_triples(const std::filesystem::path& path, Vocabulary& entities,
                                 Vocabulary& relations, bool grow_entities, bool grow_relations);
void write_triples(const std::filesystem::path& path, const std::vector<Triple>& triples);

std::vector<PivotPair> read_pivots(const std::filesystem::path& path, const Vocabulary& source,
                                   const Vocabulary& target);
void write_pivots(const std::filesystem::path& path, const std::vector<PivotPair>& pivots);
void write_scored_pivots(const std::filesystem::path& path, const std::vector<ScoredPivot>& pivots);

// ---------------------------------------------------------------------------
// Task assembly

/// Builds and validates an AlignmentTask from a manifest. Missing image rows are
/// imputed; missing rows of other modalities are zero-filled.
AlignmentTask load_task(const KeyValueConfig& manifest);
AlignmentTask load_task(const std::filesystem::path& manifest_path);

/// Writes every component of `task` into `dir` plus a `task.cfg` manifest that
/// load_task reads back. Returns the manifest path.
std::filesystem::path save_task(const AlignmentTask& task, const std::filesystem::path& dir);

/// Replaces absent rows with per-dimension Normal(mean, std) draws over present rows
/// (population std). Present rows are never modified.
ModalityFeatures impute_missing_images(const ModalityFeatures& features, std::uint64_t rng_seed);

/// deg(source) + deg(target).
std::size_t degree_sum(const AlignmentTask& task, PivotPair pair);

/// Count vectors over the `top_d` most frequent relation labels of both graphs combined:
/// entry (e, r) counts the triples with relation r that mention e. Returns {source, target}.
std::pair<Matrix, Matrix> relation_count_features(const KnowledgeGraph& source,
                                                  const KnowledgeGraph& target, std::size_t top_d);

}  // namespace mmea
