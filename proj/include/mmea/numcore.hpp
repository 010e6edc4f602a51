#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mmea {

/// Dense row-major matrix used for all training arithmetic.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// A trainable tensor and its accumulated gradient. Shapes always agree.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

/// Matrix product with an explicit shape check.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Scales each row to unit Euclidean norm. All-zero rows are returned unchanged.
Matrix row_l2_normalize(const Matrix& x);

/// Backward pass of row_l2_normalize given the forward input and the upstream gradient.
Matrix row_l2_normalize_backward(const Matrix& x, const Matrix& normalized, const Matrix& upstream);

/// Throws std::domain_error naming `what` if any entry is NaN or infinite.
void ensure_finite(const Matrix& m, const std::string& what);

struct GradCheckParamResult {
  std::string name;
  std::size_t entries_checked = 0;
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckFlag {
  std::string param;
  Eigen::Index index;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckReport {
  std::vector<GradCheckParamResult> params;
  std::vector<GradCheckFlag> flagged;
  double max_rel_error = 0.0;

  bool passed() const { return flagged.empty(); }
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so exact-zero gradients compare absolutely.
  double abs_floor = 1e-6;
  /// 0 checks every entry; otherwise a seeded random subset of this size per Param.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

/// Compares each Param's `grad` (already filled by the caller) against central
/// differences of `loss`. Param values are perturbed in place and restored.
/// Relative error is |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport grad_check(const std::function<double()>& loss, std::span<Param* const> params,
                           const GradCheckOptions& opts = {});

/// Worker count from MMEA_THREADS (default 1, minimum 1).
std::size_t thread_budget();

/// Runs fn(i) for i in [0, n), split across thread_budget() workers.
/// Each index is handled by exactly one worker, so results are order-independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Independent 64-bit stream seed derived from a base seed (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace mmea
