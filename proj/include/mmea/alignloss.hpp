#pragma once

#include <span>
#include <vector>

#include "mmea/encoders.hpp"
#include "mmea/kgdata.hpp"
#include "mmea/numcore.hpp"

namespace mmea {

/// Temperatures of the NCA loss, per term.
struct LossConfig {
  double alpha_structure = 5.0;
  double alpha_feature = 15.0;  // image, relation, attribute, surface
  double alpha_fused = 15.0;
  double beta = 10.0;

  double alpha_for(Modality m) const { return m == Modality::structure ? alpha_structure : alpha_feature; }
  void validate() const;
};

/// Rows of `a` against rows of `b`; rows with zero norm score 0 against everything.
Matrix cosine_matrix(const Matrix& a, const Matrix& b);

/// Gradients of a loss w.r.t. the inputs of cosine_matrix, given d(loss)/dS.
std::pair<Matrix, Matrix> cosine_matrix_backward(const Matrix& a, const Matrix& b, const Matrix& d_sim);

/// NCA alignment loss over an N x N similarity matrix whose i-th row and column
/// belong to the i-th pivot pair. Writes d(loss)/dS into `grad` when given.
/// Diagonal entries below -1/beta + 1e-6 are clamped (with a one-time warning).
double nca_loss(const Matrix& sim, double alpha, double beta, Matrix* grad = nullptr);

struct JointLossOptions {
  bool include_modality_terms = true;
  bool include_fused_term = true;
  /// Normalized per-modality blocks to use inside the fused term instead of the
  /// live ones. Lets finite differences see exactly the routed objective.
  const std::vector<Matrix>* frozen_normalized = nullptr;
};

struct JointLossResult {
  double total = 0.0;
  std::vector<double> modality_terms;
  double fused_term = 0.0;
  /// d(loss)/d(normalized embedding) per modality, full entity rows.
  std::vector<Matrix> d_normalized;
  /// d(loss)/d(modality logits); only the fused term contributes.
  RowVector d_logits;
};

/// Sum of per-modality NCA terms plus the fused-embedding term. The fused term
/// sees the per-modality blocks as constants, so its gradient reaches only the
/// modality logits. Batch pivots index source rows and target rows (target rows
/// are offset by `n_source` in the stacked embeddings).
JointLossResult joint_loss(const EmbeddingSet& emb, const Param& modality_logits, std::span<const PivotPair> batch,
                           std::size_t n_source, const LossConfig& cfg, const JointLossOptions& opts = {});

}  // namespace mmea
