#include "mmea/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "mmea/inference.hpp"

namespace mmea {

void ILConfig::validate() const {
  if (ke < 1 || ks < 1) throw std::invalid_argument("iterative learning: ke and ks must be at least 1");
  if (csls_k < 1) throw std::invalid_argument("iterative learning: csls_k must be at least 1");
}

PivotLedger::PivotLedger(const std::vector<PivotPair>& seeds) {
  for (const auto& p : seeds) add_permanent(p);
}

void PivotLedger::add_permanent(PivotPair p) {
  if (source_aligned(p.first) || target_aligned(p.second)) {
    throw std::invalid_argument("pivot ledger: entity already aligned");
  }
  permanent_.push_back(p);
  used_source_.insert(p.first);
  used_target_.insert(p.second);
}

std::vector<PivotPair> PivotLedger::apply_round(const std::vector<PivotPair>& proposals, const ILConfig& cfg) {
  std::map<PivotPair, std::size_t> next;
  std::vector<PivotPair> promoted;
  for (const auto& p : proposals) {
    if (source_aligned(p.first) || target_aligned(p.second)) continue;
    auto it = candidates_.find(p);
    const std::size_t streak = it == candidates_.end() ? 1 : it->second + 1;
    if (streak >= cfg.ks) {
      add_permanent(p);
      promoted.push_back(p);
    } else {
      next.emplace(p, streak);
    }
  }
  // promoted entities leave the pool
  for (auto it = next.begin(); it != next.end();) {
    if (source_aligned(it->first.first) || target_aligned(it->first.second)) {
      it = next.erase(it);
    } else {
      ++it;
    }
  }
  candidates_ = std::move(next);
  ++rounds_;
  return promoted;
}

void PivotLedger::check_invariants(const ILConfig& cfg) const {
  std::set<EntityId> s, t;
  for (const auto& [a, b] : permanent_) {
    if (!s.insert(a).second || !t.insert(b).second) throw std::logic_error("ledger: permanent set is not 1-to-1");
  }
  for (const auto& [p, streak] : candidates_) {
    if (s.count(p.first) || t.count(p.second)) throw std::logic_error("ledger: candidate shares a permanent entity");
    if (streak < 1 || streak > cfg.ks) throw std::logic_error("ledger: streak out of range");
  }
}

std::string PivotLedger::dump() const {
  std::ostringstream os;
  os << "R\t" << rounds_ << "\n";
  for (const auto& [s, t] : permanent_) os << "P\t" << s << "\t" << t << "\n";
  for (const auto& [p, streak] : candidates_) os << "C\t" << p.first << "\t" << p.second << "\t" << streak << "\n";
  return os.str();
}

PivotLedger PivotLedger::parse(const std::string& text) {
  PivotLedger ledger;
  std::istringstream in(text);
  std::string tag;
  while (in >> tag) {
    if (tag == "R") {
      in >> ledger.rounds_;
    } else if (tag == "P") {
      EntityId s = 0, t = 0;
      in >> s >> t;
      ledger.add_permanent({s, t});
    } else if (tag == "C") {
      EntityId s = 0, t = 0;
      std::size_t streak = 0;
      in >> s >> t >> streak;
      ledger.candidates_[{s, t}] = streak;
    } else {
      throw std::runtime_error("malformed ledger dump: unknown tag " + tag);
    }
    if (!in) throw std::runtime_error("malformed ledger dump");
  }
  return ledger;
}

// ---------------------------------------------------------------------------

std::vector<MatrixPick> induce_visual_pivots(const Matrix& sim, std::size_t n) {
  const Eigen::Index rows = sim.rows();
  const Eigen::Index cols = sim.cols();
  if (n > static_cast<std::size_t>(std::min(rows, cols))) {
    throw std::invalid_argument("induce_visual_pivots: n exceeds the smaller matrix dimension");
  }
  if (!sim.allFinite()) throw std::invalid_argument("induce_visual_pivots: non-finite similarity");
  std::vector<MatrixPick> out;
  if (n == 0) return out;

  // Each row keeps its columns in preference order; a max-heap holds every live
  // row's best not-yet-rejected column. Popping it reproduces a scan of the full
  // descending sort without materialising it.
  std::vector<std::vector<Eigen::Index>> order(static_cast<std::size_t>(rows));
  std::vector<std::size_t> cursor(static_cast<std::size_t>(rows), 0);
  for (Eigen::Index i = 0; i < rows; ++i) {
    auto& o = order[static_cast<std::size_t>(i)];
    o.resize(static_cast<std::size_t>(cols));
    std::iota(o.begin(), o.end(), Eigen::Index{0});
    std::stable_sort(o.begin(), o.end(), [&](Eigen::Index a, Eigen::Index b) { return sim(i, a) > sim(i, b); });
  }
  auto worse = [](const MatrixPick& a, const MatrixPick& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.row != b.row) return a.row > b.row;
    return a.col > b.col;
  };
  std::priority_queue<MatrixPick, std::vector<MatrixPick>, decltype(worse)> heap(worse);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::Index j = order[static_cast<std::size_t>(i)][0];
    heap.push({i, j, sim(i, j)});
  }
  std::vector<bool> col_used(static_cast<std::size_t>(cols), false);
  while (out.size() < n && !heap.empty()) {
    const MatrixPick top = heap.top();
    heap.pop();
    if (!col_used[static_cast<std::size_t>(top.col)]) {
      out.push_back(top);
      col_used[static_cast<std::size_t>(top.col)] = true;
      continue;  // row retired
    }
    auto& cur = cursor[static_cast<std::size_t>(top.row)];
    const auto& o = order[static_cast<std::size_t>(top.row)];
    while (++cur < o.size() && col_used[static_cast<std::size_t>(o[cur])]) {
    }
    if (cur < o.size()) heap.push({top.row, o[cur], sim(top.row, o[cur])});
  }
  return out;
}

std::vector<MatrixPick> threshold_pivots(const std::vector<MatrixPick>& picks, double min_score) {
  std::vector<MatrixPick> out;
  std::copy_if(picks.begin(), picks.end(), std::back_inserter(out),
               [&](const MatrixPick& p) { return p.score >= min_score; });
  return out;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> mutual_nearest_neighbours(const Matrix& sim) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  if (sim.size() == 0) return out;
  std::vector<Eigen::Index> col_best(static_cast<std::size_t>(sim.cols()));
  for (Eigen::Index j = 0; j < sim.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < sim.rows(); ++i) {
      if (sim(i, j) > sim(best, j)) best = i;
    }
    col_best[static_cast<std::size_t>(j)] = best;
  }
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < sim.cols(); ++j) {
      if (sim(i, j) > sim(i, best)) best = j;
    }
    if (col_best[static_cast<std::size_t>(best)] == i) out.emplace_back(i, best);
  }
  return out;
}

std::vector<PivotPair> propose_round(const Matrix& sim, std::span<const EntityId> source_ids,
                                     std::span<const EntityId> target_ids, PivotLedger& ledger,
                                     const ILConfig& cfg) {
  if (static_cast<std::size_t>(sim.rows()) != source_ids.size() ||
      static_cast<std::size_t>(sim.cols()) != target_ids.size()) {
    throw std::invalid_argument("propose_round: id lists do not match the similarity matrix");
  }
  std::vector<PivotPair> proposals;
  if (sim.size() > 0) {
    const Eigen::Index k_max = std::min(sim.rows(), sim.cols());
    const Matrix scores =
        cfg.use_csls ? csls_adjust(sim, std::min<std::size_t>(cfg.csls_k, static_cast<std::size_t>(k_max))) : sim;
    for (const auto& [i, j] : mutual_nearest_neighbours(scores)) {
      proposals.emplace_back(source_ids[static_cast<std::size_t>(i)], target_ids[static_cast<std::size_t>(j)]);
    }
  }
  ledger.apply_round(proposals, cfg);
  return proposals;
}

std::pair<std::vector<EntityId>, std::vector<EntityId>> unaligned_entities(const PivotLedger& ledger,
                                                                           std::size_t n_source,
                                                                           std::size_t n_target) {
  std::pair<std::vector<EntityId>, std::vector<EntityId>> out;
  for (std::size_t i = 0; i < n_source; ++i) {
    if (!ledger.source_aligned(static_cast<EntityId>(i))) out.first.push_back(static_cast<EntityId>(i));
  }
  for (std::size_t j = 0; j < n_target; ++j) {
    if (!ledger.target_aligned(static_cast<EntityId>(j))) out.second.push_back(static_cast<EntityId>(j));
  }
  return out;
}

}  // namespace mmea
