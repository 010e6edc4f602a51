#pragma once

// Shared fixtures and brute-force reference implementations for the tests.
// The references are written for clarity, not speed, and share no code with
// the library routines they check.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mmea/kgdata.hpp"
#include "mmea/numcore.hpp"
#include "mmea/synth.hpp"

namespace testsupport {

using mmea::Matrix;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mmea_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// Entries drawn from a handful of values, so ties are common.
inline Matrix tied_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, int levels = 4) {
  std::uniform_int_distribution<int> u(0, levels - 1);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(u(rng)) / levels;
  return m;
}

/// Small task with every modality, surface included.
inline mmea::AlignmentTask tiny_task(std::size_t entities = 20, std::uint64_t seed = 7) {
  mmea::SynthConfig cfg;
  cfg.entities = entities;
  cfg.triples = entities * 3;
  cfg.relations = 4;
  cfg.image_dim = 6;
  cfg.relation_dim = 5;
  cfg.attribute_dim = 4;
  cfg.surface_dim = 3;
  cfg.surface = true;
  cfg.train_fraction = 0.5;
  cfg.seed = seed;
  return mmea::generate_synthetic_task(cfg).task;
}

// ---------------------------------------------------------------------------
// Reference implementations

struct Pick {
  Eigen::Index row;
  Eigen::Index col;
  double score;
};

/// Greedy matching by one full sort of every entry followed by a single scan.
inline std::vector<Pick> greedy_reference(const Matrix& s, std::size_t n) {
  std::vector<std::tuple<double, Eigen::Index, Eigen::Index>> all;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) all.emplace_back(s(i, j), i, j);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  std::vector<bool> row_used(static_cast<std::size_t>(s.rows())), col_used(static_cast<std::size_t>(s.cols()));
  std::vector<Pick> out;
  for (const auto& [score, i, j] : all) {
    if (out.size() == n) break;
    if (row_used[static_cast<std::size_t>(i)] || col_used[static_cast<std::size_t>(j)]) continue;
    row_used[static_cast<std::size_t>(i)] = col_used[static_cast<std::size_t>(j)] = true;
    out.push_back({i, j, score});
  }
  return out;
}

/// CSLS straight from the definition, using full sorts for the neighbourhoods.
inline Matrix csls_reference(const Matrix& s, std::size_t k) {
  auto mean_top = [k](std::vector<double> v) {
    std::sort(v.begin(), v.end(), [](double a, double b) { return a > b; });
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += v[i];
    return acc / static_cast<double>(k);
  };
  std::vector<double> rr(static_cast<std::size_t>(s.rows())), rc(static_cast<std::size_t>(s.cols()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    std::vector<double> v;
    for (Eigen::Index j = 0; j < s.cols(); ++j) v.push_back(s(i, j));
    rr[static_cast<std::size_t>(i)] = mean_top(v);
  }
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    std::vector<double> v;
    for (Eigen::Index i = 0; i < s.rows(); ++i) v.push_back(s(i, j));
    rc[static_cast<std::size_t>(j)] = mean_top(v);
  }
  Matrix out(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      out(i, j) = 2.0 * s(i, j) - rr[static_cast<std::size_t>(i)] - rc[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

struct MetricReference {
  double h1 = 0.0;
  double h10 = 0.0;
  double mrr = 0.0;
};

/// Sorts every query row (score descending, column ascending) and reads off the
/// position of the gold column.
inline MetricReference metrics_reference(const Matrix& s,
                                         const std::vector<std::pair<Eigen::Index, Eigen::Index>>& gold) {
  MetricReference m;
  for (const auto& [r, c] : gold) {
    std::vector<Eigen::Index> cols(static_cast<std::size_t>(s.cols()));
    for (Eigen::Index j = 0; j < s.cols(); ++j) cols[static_cast<std::size_t>(j)] = j;
    std::sort(cols.begin(), cols.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (s(r, a) != s(r, b)) return s(r, a) > s(r, b);
      return a < b;
    });
    const auto pos = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), c) - cols.begin()) + 1;
    m.h1 += pos <= 1 ? 1.0 : 0.0;
    m.h10 += pos <= 10 ? 1.0 : 0.0;
    m.mrr += 1.0 / static_cast<double>(pos);
  }
  const auto n = static_cast<double>(gold.size());
  m.h1 /= n;
  m.h10 /= n;
  m.mrr /= n;
  return m;
}

/// NCA loss written with plain exponentials. Only for moderate alpha * S.
inline double nca_reference(const Matrix& s, double alpha, double beta) {
  const Eigen::Index n = s.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double col = 1.0, row = 1.0;
    for (Eigen::Index m = 0; m < n; ++m) {
      if (m == i) continue;
      col += std::exp(alpha * s(m, i));
      row += std::exp(alpha * s(i, m));
    }
    total += std::log(col) / alpha + std::log(row) / alpha - std::log(1.0 + beta * s(i, i));
  }
  return total / static_cast<double>(n);
}

/// Central differences of f w.r.t. every entry of p.value.
template <class F>
Matrix finite_difference(F&& f, mmea::Param& p, double eps = 1e-5) {
  Matrix g(p.value.rows(), p.value.cols());
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    const double keep = p.value.data()[i];
    p.value.data()[i] = keep + eps;
    const double up = f();
    p.value.data()[i] = keep - eps;
    const double down = f();
    p.value.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

inline double max_rel_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
  }
  return worst;
}

}  // namespace testsupport
