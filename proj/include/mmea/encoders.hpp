#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "mmea/kgdata.hpp"
#include "mmea/numcore.hpp"

namespace mmea {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Layer widths. `gcn` lists input, hidden..., output widths of the structural
/// encoder; `projection` gives the output width of each feature channel.
struct ModelDims {
  std::vector<Eigen::Index> gcn = {400, 400, 200};
  std::map<Modality, Eigen::Index> projection = {
      {Modality::image, 200}, {Modality::relation, 100}, {Modality::attribute, 100}, {Modality::surface, 100}};
};

/// Everything the encoders consume that is not trainable. Rows are the source
/// entities followed by the target entities.
struct ModelInputs {
  std::size_t n_source = 0;
  std::size_t n_target = 0;
  /// Active modalities in fusion order.
  std::vector<Modality> modalities;
  Matrix adjacency;
  SparseMatrix adjacency_sparse;
  std::map<Modality, Matrix> features;

  std::size_t n_total() const { return n_source + n_target; }
  bool has(Modality m) const;

  /// Stacks both graphs. `active` defaults to every modality the task carries
  /// (structure first); listed modalities the task lacks are an error.
  static ModelInputs from_task(const AlignmentTask& task, const std::vector<Modality>& active);
};

/// Modalities present in `task`: structure first, then feature channels in canonical order.
std::vector<Modality> task_modalities(const AlignmentTask& task);

struct Projection {
  Modality modality;
  Param weight;  // d_in x d_out
  Param bias;    // 1 x d_out
};

struct ModelParams {
  std::vector<Modality> modalities;
  Param entity_table;
  std::vector<Param> gcn_weights;
  std::vector<Projection> projections;
  Param modality_logits;  // 1 x n

  /// Random initialization. Each parameter group draws from its own stream
  /// derived from `seed`, so disabling a modality does not perturb the others.
  static ModelParams init(const ModelInputs& inputs, const ModelDims& dims, std::uint64_t seed);

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  const Projection* projection(Modality m) const;
  Projection* projection(Modality m);
  void zero_grad();
};

/// Per-modality and fused embeddings of every entity, plus the intermediate
/// values the backward pass needs.
struct EmbeddingSet {
  std::vector<Modality> modalities;
  std::vector<Matrix> raw;
  std::vector<Matrix> normalized;
  Matrix fused;
  std::vector<double> weights;

  // structural encoder cache: per layer, aggregated input and pre-activation
  std::vector<Matrix> gcn_aggregated;
  std::vector<Matrix> gcn_preactivation;

  int index(Modality m) const;
  const Matrix& normalized_of(Modality m) const { return normalized.at(static_cast<std::size_t>(index(m))); }
};

/// D^-1/2 (M + I) D^-1/2 over both graphs as one undirected node set
/// (source ids first, then target ids offset by the source entity count).
/// Relation types are ignored and duplicate edges collapse.
Matrix normalize_adjacency(const KnowledgeGraph& source, const KnowledgeGraph& target);

/// Stacked ReLU(A H W) layers; returns the last layer's output.
Matrix gcn_forward(const Matrix& entity_table, const std::vector<Param>& weights, const Matrix& adjacency);
Matrix gcn_forward(const ModelParams& params, const Matrix& adjacency);

/// X W + b per row, no activation.
Matrix project_modality(const Matrix& features, const Param& weight, const Param& bias);

/// Row-normalizes each block, scales by softmax(logits) and concatenates.
std::pair<Matrix, std::vector<double>> fuse(const std::vector<Matrix>& embeddings, const Param& modality_logits);

std::vector<double> softmax(const Matrix& logits);

/// Concatenates already-normalized blocks scaled by `weights`.
Matrix weighted_concat(const std::vector<Matrix>& normalized, const std::vector<double>& weights);

/// Full forward pass over all entities.
EmbeddingSet encode(const ModelParams& params, const ModelInputs& inputs);

/// Accumulates into params' grads the gradient flowing back from
/// d(loss)/d(normalized embedding) of each modality and d(loss)/d(logits).
void encode_backward(ModelParams& params, const ModelInputs& inputs, const EmbeddingSet& emb,
                     const std::vector<Matrix>& d_normalized, const RowVector& d_logits);

/// Chain rule through softmax: d(loss)/d(logits) from d(loss)/d(weights).
RowVector softmax_backward(const std::vector<double>& weights, const RowVector& d_weights);

}  // namespace mmea
