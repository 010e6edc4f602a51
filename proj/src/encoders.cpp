#include "mmea/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

namespace mmea {

bool ModelInputs::has(Modality m) const {
  return std::find(modalities.begin(), modalities.end(), m) != modalities.end();
}

std::vector<Modality> task_modalities(const AlignmentTask& task) {
  std::vector<Modality> out = {Modality::structure};
  for (Modality m : kFeatureModalities) {
    if (task.has_modality(m)) out.push_back(m);
  }
  return out;
}

ModelInputs ModelInputs::from_task(const AlignmentTask& task, const std::vector<Modality>& active) {
  ModelInputs in;
  in.n_source = task.source.entity_count();
  in.n_target = task.target.entity_count();
  const auto available = task_modalities(task);
  // canonical order regardless of how `active` was listed
  for (Modality m : available) {
    if (std::find(active.begin(), active.end(), m) != active.end()) in.modalities.push_back(m);
  }
  for (Modality m : active) {
    if (std::find(available.begin(), available.end(), m) == available.end()) {
      throw std::invalid_argument("modality not available in task: " + std::string(modality_name(m)));
    }
  }
  if (in.modalities.empty()) throw std::invalid_argument("at least one modality must be active");

  if (in.has(Modality::structure)) {
    in.adjacency = normalize_adjacency(task.source, task.target);
    in.adjacency_sparse = in.adjacency.sparseView();
  }
  for (Modality m : in.modalities) {
    if (m == Modality::structure) continue;
    const int k = task.feature_index(m);
    const Matrix& s = task.source_features[static_cast<std::size_t>(k)].matrix;
    const Matrix& t = task.target_features[static_cast<std::size_t>(k)].matrix;
    Matrix stacked(s.rows() + t.rows(), s.cols());
    stacked << s, t;
    in.features.emplace(m, std::move(stacked));
  }
  return in;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

constexpr std::uint64_t kStreamEntityTable = 1;
constexpr std::uint64_t kStreamGcn = 10;
constexpr std::uint64_t kStreamProjection = 20;

}  // namespace

ModelParams ModelParams::init(const ModelInputs& inputs, const ModelDims& dims, std::uint64_t seed) {
  ModelParams p;
  p.modalities = inputs.modalities;
  const auto n = static_cast<Eigen::Index>(inputs.n_total());
  if (inputs.has(Modality::structure)) {
    if (dims.gcn.size() < 2) throw std::invalid_argument("gcn dims need at least input and output widths");
    const Eigen::Index d = dims.gcn.front();
    std::mt19937_64 rng(derive_seed(seed, kStreamEntityTable));
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    Matrix table(n, d);
    for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = normal(rng);
    p.entity_table = Param("entity_table", std::move(table));
    for (std::size_t l = 0; l + 1 < dims.gcn.size(); ++l) {
      p.gcn_weights.emplace_back("gcn_w" + std::to_string(l),
                                 glorot_uniform(dims.gcn[l], dims.gcn[l + 1], derive_seed(seed, kStreamGcn + l)));
    }
  }
  for (Modality m : inputs.modalities) {
    if (m == Modality::structure) continue;
    const Eigen::Index d_in = inputs.features.at(m).cols();
    auto it = dims.projection.find(m);
    if (it == dims.projection.end()) throw std::invalid_argument("no projection width for modality");
    const Eigen::Index d_out = it->second;
    const std::string name(modality_name(m));
    const auto stream = kStreamProjection + static_cast<std::uint64_t>(m);
    p.projections.push_back({m, Param("proj_" + name + "_w", glorot_uniform(d_in, d_out, derive_seed(seed, stream))),
                             Param("proj_" + name + "_b", Matrix::Zero(1, d_out))});
  }
  p.modality_logits = Param("modality_logits", Matrix::Zero(1, static_cast<Eigen::Index>(p.modalities.size())));
  return p;
}

std::vector<Param*> ModelParams::all() {
  std::vector<Param*> out;
  if (entity_table.size() > 0) out.push_back(&entity_table);
  for (auto& w : gcn_weights) out.push_back(&w);
  for (auto& pr : projections) {
    out.push_back(&pr.weight);
    out.push_back(&pr.bias);
  }
  out.push_back(&modality_logits);
  return out;
}

std::vector<const Param*> ModelParams::all() const {
  auto mut = const_cast<ModelParams*>(this)->all();
  return {mut.begin(), mut.end()};
}

const Projection* ModelParams::projection(Modality m) const {
  for (const auto& p : projections) {
    if (p.modality == m) return &p;
  }
  return nullptr;
}

Projection* ModelParams::projection(Modality m) {
  return const_cast<Projection*>(std::as_const(*this).projection(m));
}

void ModelParams::zero_grad() {
  for (Param* p : all()) p->zero_grad();
}

int EmbeddingSet::index(Modality m) const {
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (modalities[i] == m) return static_cast<int>(i);
  }
  throw std::out_of_range("modality not encoded: " + std::string(modality_name(m)));
}

// ---------------------------------------------------------------------------
// Operations

Matrix normalize_adjacency(const KnowledgeGraph& source, const KnowledgeGraph& target) {
  const std::size_t ns = source.entity_count();
  const std::size_t n = ns + target.entity_count();
  std::set<std::pair<std::size_t, std::size_t>> edges;
  auto add = [&](std::size_t a, std::size_t b) {
    if (a == b) return;  // self-loops come from the identity
    edges.emplace(std::min(a, b), std::max(a, b));
  };
  for (const auto& t : source.triples) add(t.head, t.tail);
  for (const auto& t : target.triples) add(ns + t.head, ns + t.tail);

  std::vector<double> degree(n, 1.0);
  for (const auto& [a, b] : edges) {
    degree[a] += 1.0;
    degree[b] += 1.0;
  }
  Matrix adj = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) adj(i, i) = 1.0 / degree[i];
  for (const auto& [a, b] : edges) {
    const double w = 1.0 / std::sqrt(degree[a] * degree[b]);
    adj(a, b) = w;
    adj(b, a) = w;
  }
  return adj;
}

Matrix gcn_forward(const Matrix& entity_table, const std::vector<Param>& weights, const Matrix& adjacency) {
  if (adjacency.rows() != adjacency.cols() || adjacency.cols() != entity_table.rows()) {
    throw std::invalid_argument("gcn_forward: adjacency does not match entity table rows");
  }
  Matrix h = entity_table;
  for (const auto& w : weights) {
    h = matmul(matmul(adjacency, h), w.value).cwiseMax(0.0);
  }
  return h;
}

Matrix gcn_forward(const ModelParams& params, const Matrix& adjacency) {
  return gcn_forward(params.entity_table.value, params.gcn_weights, adjacency);
}

Matrix project_modality(const Matrix& features, const Param& weight, const Param& bias) {
  if (bias.value.rows() != 1 || bias.value.cols() != weight.value.cols()) {
    throw std::invalid_argument("project_modality: bias width does not match weight");
  }
  Matrix out = matmul(features, weight.value);
  out.rowwise() += bias.value.row(0);
  return out;
}

std::vector<double> softmax(const Matrix& logits) {
  const double mx = logits.maxCoeff();
  std::vector<double> w(static_cast<std::size_t>(logits.size()));
  double z = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(logits.data()[i] - mx);
    z += w[i];
  }
  for (double& x : w) x /= z;
  return w;
}

RowVector softmax_backward(const std::vector<double>& weights, const RowVector& d_weights) {
  double dot = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) dot += weights[i] * d_weights(static_cast<Eigen::Index>(i));
  RowVector out(static_cast<Eigen::Index>(weights.size()));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out(k) = weights[i] * (d_weights(k) - dot);
  }
  return out;
}

Matrix weighted_concat(const std::vector<Matrix>& normalized, const std::vector<double>& weights) {
  Eigen::Index width = 0;
  for (const auto& m : normalized) width += m.cols();
  Matrix fused(normalized.front().rows(), width);
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    fused.middleCols(col, normalized[i].cols()) = weights[i] * normalized[i];
    col += normalized[i].cols();
  }
  return fused;
}

std::pair<Matrix, std::vector<double>> fuse(const std::vector<Matrix>& embeddings, const Param& modality_logits) {
  if (embeddings.empty()) throw std::invalid_argument("fuse: empty modality list");
  if (static_cast<std::size_t>(modality_logits.size()) != embeddings.size()) {
    throw std::invalid_argument("fuse: logits count does not match modality count");
  }
  for (const auto& e : embeddings) {
    if (e.rows() != embeddings.front().rows()) throw std::invalid_argument("fuse: row counts differ");
  }
  std::vector<Matrix> normalized;
  normalized.reserve(embeddings.size());
  for (const auto& e : embeddings) normalized.push_back(row_l2_normalize(e));
  auto weights = softmax(modality_logits.value);
  return {weighted_concat(normalized, weights), std::move(weights)};
}

EmbeddingSet encode(const ModelParams& params, const ModelInputs& inputs) {
  EmbeddingSet emb;
  emb.modalities = inputs.modalities;
  for (Modality m : inputs.modalities) {
    if (m == Modality::structure) {
      Matrix h = params.entity_table.value;
      for (const auto& w : params.gcn_weights) {
        emb.gcn_aggregated.push_back(inputs.adjacency_sparse * h);
        emb.gcn_preactivation.push_back(matmul(emb.gcn_aggregated.back(), w.value));
        h = emb.gcn_preactivation.back().cwiseMax(0.0);
      }
      emb.raw.push_back(std::move(h));
    } else {
      const Projection* pr = params.projection(m);
      if (pr == nullptr) throw std::invalid_argument("encode: missing projection");
      emb.raw.push_back(project_modality(inputs.features.at(m), pr->weight, pr->bias));
    }
    emb.normalized.push_back(row_l2_normalize(emb.raw.back()));
  }
  emb.weights = softmax(params.modality_logits.value);
  emb.fused = weighted_concat(emb.normalized, emb.weights);
  return emb;
}

void encode_backward(ModelParams& params, const ModelInputs& inputs, const EmbeddingSet& emb,
                     const std::vector<Matrix>& d_normalized, const RowVector& d_logits) {
  for (std::size_t i = 0; i < emb.modalities.size(); ++i) {
    const Matrix& dn = d_normalized.at(i);
    if (dn.size() == 0) continue;
    Matrix d_raw = row_l2_normalize_backward(emb.raw[i], emb.normalized[i], dn);
    const Modality m = emb.modalities[i];
    if (m == Modality::structure) {
      Matrix d = std::move(d_raw);
      for (std::size_t l = params.gcn_weights.size(); l-- > 0;) {
        const Matrix& pre = emb.gcn_preactivation[l];
        Matrix d_pre = (pre.array() > 0.0).select(d.array(), 0.0).matrix();
        params.gcn_weights[l].grad.noalias() += emb.gcn_aggregated[l].transpose() * d_pre;
        // adjacency is symmetric
        d = inputs.adjacency_sparse * (d_pre * params.gcn_weights[l].value.transpose());
      }
      params.entity_table.grad += d;
    } else {
      Projection* pr = params.projection(m);
      pr->weight.grad.noalias() += inputs.features.at(m).transpose() * d_raw;
      pr->bias.grad += d_raw.colwise().sum();
    }
  }
  if (d_logits.size() > 0) params.modality_logits.grad.row(0) += d_logits;
}

}  // namespace mmea
