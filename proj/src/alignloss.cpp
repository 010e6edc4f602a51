#include "mmea/alignloss.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace mmea {

void LossConfig::validate() const {
  if (!(alpha_structure > 0.0 && alpha_feature > 0.0 && alpha_fused > 0.0)) {
    throw std::invalid_argument("loss: alpha must be positive");
  }
  if (!(beta > 0.0)) throw std::invalid_argument("loss: beta must be positive");
}

Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("cosine_matrix: feature widths differ");
  return row_l2_normalize(a) * row_l2_normalize(b).transpose();
}

std::pair<Matrix, Matrix> cosine_matrix_backward(const Matrix& a, const Matrix& b, const Matrix& d_sim) {
  const Matrix an = row_l2_normalize(a);
  const Matrix bn = row_l2_normalize(b);
  const Matrix d_an = d_sim * bn;
  const Matrix d_bn = d_sim.transpose() * an;
  return {row_l2_normalize_backward(a, an, d_an), row_l2_normalize_backward(b, bn, d_bn)};
}

namespace {

std::atomic<bool> g_clamp_warned{false};

// log(1 + sum_k exp(x_k)) with the largest exponent factored out. Fills `soft`
// with exp(x_k - result), i.e. d(result)/d(x_k).
double log1p_sum_exp(const std::vector<double>& x, std::vector<double>* soft) {
  double mx = 0.0;
  for (double v : x) mx = std::max(mx, v);
  double acc = std::exp(-mx);
  for (double v : x) acc += std::exp(v - mx);
  const double out = mx + std::log(acc);
  if (soft != nullptr) {
    soft->resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) (*soft)[k] = std::exp(x[k] - out);
  }
  return out;
}

}  // namespace

double nca_loss(const Matrix& sim, double alpha, double beta, Matrix* grad) {
  const Eigen::Index n = sim.rows();
  if (n == 0) throw std::invalid_argument("nca_loss: empty batch");
  if (sim.cols() != n) throw std::invalid_argument("nca_loss: similarity matrix must be square");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("nca_loss: alpha and beta must be positive");
  if (grad != nullptr) grad->setZero(n, n);

  const double inv_n = 1.0 / static_cast<double>(n);
  const double diag_floor = -1.0 / beta + 1e-6;
  double total = 0.0;
  std::vector<double> col_terms, row_terms, soft;
  col_terms.reserve(static_cast<std::size_t>(n));
  row_terms.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    col_terms.clear();
    row_terms.clear();
    for (Eigen::Index m = 0; m < n; ++m) {
      if (m == i) continue;
      col_terms.push_back(alpha * sim(m, i));
      row_terms.push_back(alpha * sim(i, m));
    }
    total += log1p_sum_exp(col_terms, grad ? &soft : nullptr) / alpha;
    if (grad != nullptr) {
      std::size_t k = 0;
      for (Eigen::Index m = 0; m < n; ++m) {
        if (m != i) (*grad)(m, i) += inv_n * soft[k++];
      }
    }
    total += log1p_sum_exp(row_terms, grad ? &soft : nullptr) / alpha;
    if (grad != nullptr) {
      std::size_t k = 0;
      for (Eigen::Index m = 0; m < n; ++m) {
        if (m != i) (*grad)(i, m) += inv_n * soft[k++];
      }
    }
    double sii = sim(i, i);
    const bool clamped = sii < diag_floor;
    if (clamped) {
      if (!g_clamp_warned.exchange(true)) {
        std::cerr << "warning: pivot similarity below -1/beta; clamping the positive term\n";
      }
      sii = diag_floor;
    }
    total -= std::log1p(beta * sii);
    if (grad != nullptr && !clamped) (*grad)(i, i) -= inv_n * beta / (1.0 + beta * sii);
  }
  return total * inv_n;
}

JointLossResult joint_loss(const EmbeddingSet& emb, const Param& modality_logits, std::span<const PivotPair> batch,
                           std::size_t n_source, const LossConfig& cfg, const JointLossOptions& opts) {
  if (batch.empty()) throw std::invalid_argument("joint_loss: empty batch");
  const std::size_t n_mod = emb.modalities.size();
  const auto b = static_cast<Eigen::Index>(batch.size());

  JointLossResult res;
  res.modality_terms.assign(n_mod, 0.0);
  res.d_normalized.resize(n_mod);
  res.d_logits = RowVector::Zero(static_cast<Eigen::Index>(n_mod));

  auto gather = [&](const Matrix& full, bool target) {
    Matrix out(b, full.cols());
    for (Eigen::Index k = 0; k < b; ++k) {
      const auto& p = batch[static_cast<std::size_t>(k)];
      out.row(k) = full.row(target ? static_cast<Eigen::Index>(n_source + p.second) : p.first);
    }
    return out;
  };

  if (opts.include_modality_terms) {
    for (std::size_t i = 0; i < n_mod; ++i) {
      const Matrix& nrm = emb.normalized[i];
      const Matrix src = gather(nrm, false);
      const Matrix tgt = gather(nrm, true);
      // blocks are already unit rows (or zero), so the cosine is a plain product
      const Matrix sim = src * tgt.transpose();
      Matrix d_sim;
      res.modality_terms[i] = nca_loss(sim, cfg.alpha_for(emb.modalities[i]), cfg.beta, &d_sim);
      res.total += res.modality_terms[i];

      Matrix d_full = Matrix::Zero(nrm.rows(), nrm.cols());
      const Matrix d_src = d_sim * tgt;
      const Matrix d_tgt = d_sim.transpose() * src;
      for (Eigen::Index k = 0; k < b; ++k) {
        const auto& p = batch[static_cast<std::size_t>(k)];
        d_full.row(p.first) += d_src.row(k);
        d_full.row(static_cast<Eigen::Index>(n_source + p.second)) += d_tgt.row(k);
      }
      res.d_normalized[i] = std::move(d_full);
    }
  }

  if (opts.include_fused_term) {
    const std::vector<Matrix>& blocks = opts.frozen_normalized ? *opts.frozen_normalized : emb.normalized;
    if (blocks.size() != n_mod) throw std::invalid_argument("joint_loss: frozen block count mismatch");
    const auto weights = softmax(modality_logits.value);
    std::vector<Matrix> src_blocks, tgt_blocks;
    for (const auto& blk : blocks) {
      src_blocks.push_back(gather(blk, false));
      tgt_blocks.push_back(gather(blk, true));
    }
    const Matrix u = weighted_concat(src_blocks, weights);
    const Matrix v = weighted_concat(tgt_blocks, weights);
    Matrix d_sim;
    res.fused_term = nca_loss(cosine_matrix(u, v), cfg.alpha_fused, cfg.beta, &d_sim);
    res.total += res.fused_term;

    auto [d_u, d_v] = cosine_matrix_backward(u, v, d_sim);
    RowVector d_weights(static_cast<Eigen::Index>(n_mod));
    Eigen::Index col = 0;
    for (std::size_t i = 0; i < n_mod; ++i) {
      const Eigen::Index w = src_blocks[i].cols();
      d_weights(static_cast<Eigen::Index>(i)) = d_u.middleCols(col, w).cwiseProduct(src_blocks[i]).sum() +
                                                d_v.middleCols(col, w).cwiseProduct(tgt_blocks[i]).sum();
      col += w;
    }
    res.d_logits = softmax_backward(weights, d_weights);
  }
  return res;
}

}  // namespace mmea
