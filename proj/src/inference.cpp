#include "mmea/inference.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mmea/alignloss.hpp"

namespace mmea {

namespace {

double top_k_mean(std::vector<double>& values, std::size_t k) {
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end(),
                   std::greater<>());
  // nth_element leaves the k largest in the first k slots, in no particular order
  std::sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += values[i];
  return s / static_cast<double>(k);
}

}  // namespace

Matrix csls_adjust(const Matrix& sim, std::size_t k) {
  const auto rows = static_cast<std::size_t>(sim.rows());
  const auto cols = static_cast<std::size_t>(sim.cols());
  if (k < 1 || k > std::min(rows, cols)) throw std::invalid_argument("csls_adjust: k out of range");
  std::vector<double> r_row(rows), r_col(cols);
  parallel_for(rows, [&](std::size_t i) {
    std::vector<double> v(cols);
    for (std::size_t j = 0; j < cols; ++j) v[j] = sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    r_row[i] = top_k_mean(v, k);
  });
  parallel_for(cols, [&](std::size_t j) {
    std::vector<double> v(rows);
    for (std::size_t i = 0; i < rows; ++i) v[i] = sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    r_col[j] = top_k_mean(v, k);
  });
  Matrix out(sim.rows(), sim.cols());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      out(ii, jj) = 2.0 * sim(ii, jj) - r_row[i] - r_col[j];
    }
  }
  return out;
}

std::vector<Eigen::Index> rank_targets(const Matrix& sim, Eigen::Index query) {
  if (query < 0 || query >= sim.rows()) throw std::out_of_range("rank_targets: query out of range");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(sim.cols()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return sim(query, a) > sim(query, b); });
  return idx;
}

EvalReport evaluate(const Matrix& sim, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& gold,
                    bool use_csls, std::size_t k) {
  if (gold.empty()) throw std::invalid_argument("evaluate: empty gold list");
  for (const auto& [r, c] : gold) {
    if (r < 0 || r >= sim.rows() || c < 0 || c >= sim.cols()) {
      throw std::out_of_range("evaluate: gold pair outside the score matrix");
    }
  }
  const Matrix scores = use_csls ? csls_adjust(sim, k) : sim;
  EvalReport rep;
  rep.n_queries = gold.size();
  rep.ranks.resize(gold.size());
  parallel_for(gold.size(), [&](std::size_t q) {
    const auto [r, c] = gold[q];
    const double g = scores(r, c);
    std::size_t rank = 1;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      const double s = scores(r, j);
      if (s > g || (s == g && j < c)) ++rank;
    }
    rep.ranks[q] = rank;
  });
  for (std::size_t rank : rep.ranks) {
    rep.hits_at_1 += rank <= 1 ? 1.0 : 0.0;
    rep.hits_at_10 += rank <= 10 ? 1.0 : 0.0;
    rep.mrr += 1.0 / static_cast<double>(rank);
  }
  const double n = static_cast<double>(gold.size());
  rep.hits_at_1 /= n;
  rep.hits_at_10 /= n;
  rep.mrr /= n;
  return rep;
}

EvalReport stratified_evaluate(const Matrix& sim, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& gold,
                               const std::vector<PivotPair>& gold_ids, const AlignmentTask& task, bool use_csls,
                               std::size_t k, std::size_t n_strata) {
  if (gold.size() != gold_ids.size()) throw std::invalid_argument("stratified_evaluate: gold lists differ in length");
  if (n_strata == 0 || gold.size() < n_strata) {
    throw std::invalid_argument("stratified_evaluate: fewer gold pairs than strata");
  }
  EvalReport rep = evaluate(sim, gold, use_csls, k);

  std::vector<std::size_t> order(gold.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> degsum(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) degsum[i] = degree_sum(task, gold_ids[i]);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (degsum[a] != degsum[b]) return degsum[a] < degsum[b];
    return gold_ids[a].first < gold_ids[b].first;
  });

  const std::size_t base = gold.size() / n_strata;
  const std::size_t extra = gold.size() % n_strata;
  std::size_t pos = 0;
  for (std::size_t s = 0; s < n_strata; ++s) {
    const std::size_t size = base + (s < extra ? 1 : 0);
    StratumReport st;
    st.n_queries = size;
    st.degree_low = degsum[order[pos]];
    st.degree_high = degsum[order[pos + size - 1]];
    for (std::size_t i = pos; i < pos + size; ++i) {
      const std::size_t rank = rep.ranks[order[i]];
      st.hits_at_1 += rank <= 1 ? 1.0 : 0.0;
      st.hits_at_10 += rank <= 10 ? 1.0 : 0.0;
      st.mrr += 1.0 / static_cast<double>(rank);
    }
    st.hits_at_1 /= static_cast<double>(size);
    st.hits_at_10 /= static_cast<double>(size);
    st.mrr /= static_cast<double>(size);
    rep.per_stratum.push_back(st);
    pos += size;
  }
  return rep;
}

EvalProblem build_eval_problem(const Matrix& fused, std::size_t n_source, const std::vector<PivotPair>& gold,
                               CandidatePool pool, std::size_t n_target) {
  if (gold.empty()) throw std::invalid_argument("evaluation needs at least one gold pair");
  std::vector<EntityId> candidates;
  if (pool == CandidatePool::test_targets) {
    for (const auto& p : gold) candidates.push_back(p.second);
  } else {
    candidates.resize(n_target);
    std::iota(candidates.begin(), candidates.end(), EntityId{0});
  }
  std::vector<Eigen::Index> col_of(n_target, -1);
  for (std::size_t j = 0; j < candidates.size(); ++j) col_of[candidates[j]] = static_cast<Eigen::Index>(j);

  Matrix src(static_cast<Eigen::Index>(gold.size()), fused.cols());
  Matrix tgt(static_cast<Eigen::Index>(candidates.size()), fused.cols());
  EvalProblem prob;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    src.row(static_cast<Eigen::Index>(i)) = fused.row(gold[i].first);
    prob.gold.emplace_back(static_cast<Eigen::Index>(i), col_of[gold[i].second]);
  }
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    tgt.row(static_cast<Eigen::Index>(j)) = fused.row(static_cast<Eigen::Index>(n_source + candidates[j]));
  }
  prob.sim = cosine_matrix(src, tgt);
  return prob;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["h1"] = hits_at_1;
  j["h10"] = hits_at_10;
  j["mrr"] = mrr;
  j["n"] = n_queries;
  j["strata"] = nlohmann::ordered_json::array();
  for (const auto& s : per_stratum) {
    j["strata"].push_back({{"lo", s.degree_low},
                           {"hi", s.degree_high},
                           {"n", s.n_queries},
                           {"h1", s.hits_at_1},
                           {"h10", s.hits_at_10},
                           {"mrr", s.mrr}});
  }
  return j.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "split,degsum_lo,degsum_hi,n,h1,h10,mrr\n";
  os << "all,,," << n_queries << "," << hits_at_1 << "," << hits_at_10 << "," << mrr << "\n";
  for (std::size_t i = 0; i < per_stratum.size(); ++i) {
    const auto& s = per_stratum[i];
    os << "stratum" << i << "," << s.degree_low << "," << s.degree_high << "," << s.n_queries << "," << s.hits_at_1
       << "," << s.hits_at_10 << "," << s.mrr << "\n";
  }
  return os.str();
}

}  // namespace mmea
