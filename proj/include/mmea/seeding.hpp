#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mmea/kgdata.hpp"
#include "mmea/numcore.hpp"

namespace mmea {

/// Probation schedule: a proposal round every `ke` epochs; a candidate must stay a
/// mutual nearest neighbour for `ks` consecutive rounds to become permanent.
struct ILConfig {
  std::size_t ke = 5;
  std::size_t ks = 10;
  /// Score proposals with CSLS instead of plain cosine.
  bool use_csls = false;
  std::size_t csls_k = 3;

  void validate() const;
};

/// Training pivots plus the candidates currently on probation.
class PivotLedger {
 public:
  PivotLedger() = default;
  explicit PivotLedger(const std::vector<PivotPair>& seeds);

  const std::vector<PivotPair>& permanent() const { return permanent_; }
  const std::map<PivotPair, std::size_t>& candidates() const { return candidates_; }
  std::size_t round_counter() const { return rounds_; }

  bool source_aligned(EntityId s) const { return used_source_.count(s) != 0; }
  bool target_aligned(EntityId t) const { return used_target_.count(t) != 0; }

  /// Adds a permanent pair; throws if either entity is already aligned.
  void add_permanent(PivotPair p);

  /// One probation step given this round's mutual-nearest-neighbour proposals.
  /// Returns the pairs promoted to permanent in this round.
  std::vector<PivotPair> apply_round(const std::vector<PivotPair>& proposals, const ILConfig& cfg);

  /// Throws if an invariant is broken.
  void check_invariants(const ILConfig& cfg) const;

  /// Lines "P<TAB>s<TAB>t" and "C<TAB>s<TAB>t<TAB>streak", preceded by "R<TAB>rounds".
  std::string dump() const;
  static PivotLedger parse(const std::string& text);

 private:
  std::vector<PivotPair> permanent_;
  std::set<EntityId> used_source_;
  std::set<EntityId> used_target_;
  std::map<PivotPair, std::size_t> candidates_;
  std::size_t rounds_ = 0;
};

/// Row/column index of a greedy pick in the similarity matrix it came from.
struct MatrixPick {
  Eigen::Index row;
  Eigen::Index col;
  double score;
  bool operator==(const MatrixPick&) const = default;
};

/// Greedy one-to-one selection: repeatedly take the highest remaining score whose
/// row and column are both unused, until `n` pairs are chosen. Ties go to the
/// smaller (row, col). Results are in acceptance order.
std::vector<MatrixPick> induce_visual_pivots(const Matrix& sim, std::size_t n);

/// Keeps picks whose score is at least `min_score`, preserving order.
std::vector<MatrixPick> threshold_pivots(const std::vector<MatrixPick>& picks, double min_score);

/// Pairs (i, j) where j is the best column of row i and i is the best row of
/// column j (ties to the smaller index).
std::vector<std::pair<Eigen::Index, Eigen::Index>> mutual_nearest_neighbours(const Matrix& sim);

/// One iterative-learning round over a similarity matrix restricted to unaligned
/// entities; `source_ids` / `target_ids` map its rows / columns back to entity ids.
std::vector<PivotPair> propose_round(const Matrix& sim, std::span<const EntityId> source_ids,
                                     std::span<const EntityId> target_ids, PivotLedger& ledger,
                                     const ILConfig& cfg);

/// Entities of each graph not yet in a permanent pair, ascending.
std::pair<std::vector<EntityId>, std::vector<EntityId>> unaligned_entities(const PivotLedger& ledger,
                                                                           std::size_t n_source,
                                                                           std::size_t n_target);

}  // namespace mmea
