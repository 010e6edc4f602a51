#include "mmea/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace mmea {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul: shape mismatch (" << a.rows() << "x" << a.cols() << ") * (" << b.rows() << "x"
       << b.cols() << ")";
    throw std::invalid_argument(os.str());
  }
  return a * b;
}

Matrix row_l2_normalize(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

Matrix row_l2_normalize_backward(const Matrix& x, const Matrix& normalized, const Matrix& upstream) {
  Matrix dx = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (n == 0.0) continue;
    const double proj = normalized.row(i).dot(upstream.row(i));
    dx.row(i) = (upstream.row(i) - proj * normalized.row(i)) / n;
  }
  return dx;
}

void ensure_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw std::domain_error(what + ": non-finite value");
}

GradCheckReport grad_check(const std::function<double()>& loss, std::span<Param* const> params,
                           const GradCheckOptions& opts) {
  if (!(opts.epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");
  GradCheckReport report;
  std::mt19937_64 rng(opts.seed);

  auto probe = [&](const std::string& name) {
    const double f = loss();
    if (!std::isfinite(f)) throw std::domain_error("grad_check: non-finite loss while probing " + name);
    return f;
  };

  for (Param* p : params) {
    GradCheckParamResult res;
    res.name = p->name;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(p->size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    if (opts.max_entries_per_param > 0 && idx.size() > opts.max_entries_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_entries_per_param);
      std::sort(idx.begin(), idx.end());
    }
    double* data = p->value.data();
    for (Eigen::Index k : idx) {
      const double orig = data[k];
      data[k] = orig + opts.epsilon;
      const double fp = probe(p->name);
      data[k] = orig - opts.epsilon;
      const double fm = probe(p->name);
      data[k] = orig;

      const double numeric = (fp - fm) / (2.0 * opts.epsilon);
      const double analytic = p->grad.data()[k];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++res.entries_checked;
      if (rel > res.max_rel_error || res.worst_index < 0) {
        res.max_rel_error = rel;
        res.worst_index = k;
        res.worst_analytic = analytic;
        res.worst_numeric = numeric;
      }
      if (rel > opts.tolerance) report.flagged.push_back({p->name, k, analytic, numeric, rel});
    }
    report.max_rel_error = std::max(report.max_rel_error, res.max_rel_error);
    report.params.push_back(std::move(res));
  }
  return report;
}

std::size_t thread_budget() {
  const char* env = std::getenv("MMEA_THREADS");
  if (env == nullptr) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || v < 1) return 1;
  return static_cast<std::size_t>(v);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(thread_budget(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mmea
