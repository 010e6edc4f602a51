#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mmea/kgdata.hpp"
#include "mmea/numcore.hpp"

namespace mmea {

struct StratumReport {
  std::size_t degree_low = 0;   // smallest DegSum in the stratum
  std::size_t degree_high = 0;  // largest DegSum in the stratum
  std::size_t n_queries = 0;
  double hits_at_1 = 0.0;
  double hits_at_10 = 0.0;
  double mrr = 0.0;
};

struct EvalReport {
  double hits_at_1 = 0.0;
  double hits_at_10 = 0.0;
  double mrr = 0.0;
  std::size_t n_queries = 0;
  std::vector<StratumReport> per_stratum;
  /// 1-based rank of each gold target, in gold order.
  std::vector<std::size_t> ranks;

  std::string to_json() const;
  /// Header plus an "all" row and one row per stratum.
  std::string to_csv() const;
};

/// S'_ij = 2 S_ij - r_row(i) - r_col(j), with r the mean of the k largest entries
/// of that row / column.
Matrix csls_adjust(const Matrix& sim, std::size_t k);

/// Column indices sorted by descending score, ties by ascending index.
std::vector<Eigen::Index> rank_targets(const Matrix& sim, Eigen::Index query);

/// Gold pairs give (row, col) positions in `sim`. Rank of the gold column among
/// all columns of its row; ties with the gold score count against it only when
/// the competing column index is smaller.
EvalReport evaluate(const Matrix& sim, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& gold,
                    bool use_csls, std::size_t k);

/// Like evaluate, then sorts gold pairs by DegSum (ties by source id) and splits
/// them into `n_strata` near-equal groups, the remainder going to the lowest strata.
/// `gold_ids` are the entity ids of each gold pair, used for DegSum.
EvalReport stratified_evaluate(const Matrix& sim, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& gold,
                               const std::vector<PivotPair>& gold_ids, const AlignmentTask& task, bool use_csls,
                               std::size_t k, std::size_t n_strata = 5);

/// Where the evaluation candidate pools come from.
enum class CandidatePool { test_targets, all_targets };

/// Similarity matrix between the gold sources and the candidate targets of the
/// fused embeddings (rows: source entities then target entities), plus the
/// (row, col) of each gold pair.
struct EvalProblem {
  Matrix sim;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> gold;
};
EvalProblem build_eval_problem(const Matrix& fused, std::size_t n_source, const std::vector<PivotPair>& gold,
                               CandidatePool pool, std::size_t n_target);

}  // namespace mmea
