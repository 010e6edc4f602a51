#include <doctest.h>

#include <map>

#include "mmea/seeding.hpp"
#include "support.hpp"

using namespace mmea;

namespace {

bool same_picks(const std::vector<MatrixPick>& got, const std::vector<testsupport::Pick>& want) {
  if (got.size() != want.size()) return false;
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (got[i].row != want[i].row || got[i].col != want[i].col || got[i].score != want[i].score) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("induce_visual_pivots documented cases") {
  const Matrix eye = Matrix::Identity(3, 3);
  auto p = induce_visual_pivots(eye, 3);
  REQUIRE(p.size() == 3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(p[static_cast<std::size_t>(i)].row == i);
    CHECK(p[static_cast<std::size_t>(i)].col == i);
  }

  Matrix s(3, 3);
  s << 0.9, 0.8, 0.1, 0.7, 0.95, 0.2, 0.1, 0.2, 0.3;
  p = induce_visual_pivots(s, 2);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == MatrixPick{1, 1, 0.95});
  CHECK(p[1] == MatrixPick{0, 0, 0.9});

  p = induce_visual_pivots(Matrix::Constant(3, 4, 0.5), 2);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == MatrixPick{0, 0, 0.5});
  CHECK(p[1] == MatrixPick{1, 1, 0.5});
}

TEST_CASE("induce_visual_pivots errors") {
  CHECK_THROWS_AS(induce_visual_pivots(Matrix::Zero(2, 5), 3), std::invalid_argument);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = std::nan("");
  CHECK_THROWS(induce_visual_pivots(bad, 1));
  CHECK(induce_visual_pivots(Matrix::Zero(2, 2), 0).empty());
}

TEST_CASE("induce_visual_pivots equals the sort-and-scan reference") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const auto rows = static_cast<Eigen::Index>(1 + rng() % 20);
    const auto cols = static_cast<Eigen::Index>(1 + rng() % 20);
    const Matrix s = trial % 2 ? testsupport::tied_matrix(rows, cols, rng) : testsupport::random_matrix(rows, cols, rng);
    const std::size_t n = rng() % (static_cast<std::size_t>(std::min(rows, cols)) + 1);
    const auto got = induce_visual_pivots(s, n);
    CHECK(same_picks(got, testsupport::greedy_reference(s, n)));
    if (!got.empty()) CHECK(got.front().score == s.maxCoeff());
    CHECK(induce_visual_pivots(s, n) == got);
  }
}

TEST_CASE("threshold_pivots") {
  const std::vector<MatrixPick> picks{{0, 0, 0.95}, {1, 2, 0.9}, {2, 1, 0.8}};
  CHECK(threshold_pivots(picks, -1.0) == picks);
  const auto kept = threshold_pivots(picks, 0.85);
  REQUIRE(kept.size() == 2);
  CHECK(kept[1].col == 2);
  CHECK(threshold_pivots({}, 0.5).empty());
}

TEST_CASE("mutual nearest neighbours") {
  Matrix s(3, 3);
  s << 0.9, 0.1, 0.0,  //
      0.8, 0.2, 0.1,   //
      0.0, 0.7, 0.6;
  const auto mnn = mutual_nearest_neighbours(s);
  REQUIRE(mnn.size() == 2);
  CHECK(mnn[0] == std::pair<Eigen::Index, Eigen::Index>{0, 0});
  CHECK(mnn[1] == std::pair<Eigen::Index, Eigen::Index>{2, 1});
  CHECK(mutual_nearest_neighbours(Matrix(0, 3)).empty());
}

TEST_CASE("probation promotes after ks consecutive rounds") {
  ILConfig cfg;
  cfg.ks = 3;
  PivotLedger ledger({{0, 0}});
  const std::vector<PivotPair> prop{{1, 2}};
  CHECK(ledger.apply_round(prop, cfg).empty());
  CHECK(ledger.candidates().at({1, 2}) == 1);
  CHECK(ledger.apply_round(prop, cfg).empty());
  CHECK(ledger.candidates().at({1, 2}) == 2);
  const auto promoted = ledger.apply_round(prop, cfg);
  REQUIRE(promoted.size() == 1);
  CHECK(ledger.permanent().size() == 2);
  CHECK(ledger.candidates().empty());
  CHECK(ledger.source_aligned(1));
  CHECK(ledger.target_aligned(2));
  CHECK(ledger.round_counter() == 3);
  ledger.check_invariants(cfg);
}

TEST_CASE("a missed round evicts and resets the streak") {
  ILConfig cfg;
  cfg.ks = 3;
  PivotLedger ledger;
  const std::vector<PivotPair> prop{{4, 5}};
  ledger.apply_round(prop, cfg);
  ledger.apply_round(prop, cfg);
  ledger.apply_round({}, cfg);
  CHECK(ledger.candidates().empty());
  ledger.apply_round(prop, cfg);
  CHECK(ledger.candidates().at({4, 5}) == 1);
  CHECK(ledger.permanent().empty());
}

TEST_CASE("proposals touching aligned entities are ignored") {
  ILConfig cfg;
  cfg.ks = 1;
  PivotLedger ledger({{0, 0}});
  const auto promoted = ledger.apply_round({{0, 1}, {1, 0}, {2, 2}, {2, 3}}, cfg);
  REQUIRE(promoted.size() == 1);
  CHECK(promoted[0] == PivotPair{2, 2});
  ledger.check_invariants(cfg);
  CHECK_THROWS(ledger.add_permanent({0, 7}));
}

TEST_CASE("ledger dump round-trips") {
  ILConfig cfg;
  cfg.ks = 4;
  PivotLedger ledger({{0, 3}, {2, 1}});
  ledger.apply_round({{1, 0}, {3, 2}}, cfg);
  ledger.apply_round({{1, 0}}, cfg);
  const PivotLedger back = PivotLedger::parse(ledger.dump());
  CHECK(back.permanent() == ledger.permanent());
  CHECK(back.candidates() == ledger.candidates());
  CHECK(back.round_counter() == 2);
  CHECK(back.dump() == ledger.dump());
  CHECK_THROWS(PivotLedger::parse("X\t1\n"));
}

// Step-by-step simulation of probation, kept deliberately literal.
struct HandLedger {
  std::vector<PivotPair> permanent;
  std::map<PivotPair, std::size_t> streak;

  bool used(EntityId s, EntityId t) const {
    for (auto& p : permanent) {
      if (p.first == s || p.second == t) return true;
    }
    return false;
  }

  void round(const Matrix& sim, std::size_t ks) {
    // unaligned rows / columns and their mutual best matches
    std::vector<EntityId> rows, cols;
    for (EntityId i = 0; i < sim.rows(); ++i) {
      if (!used(i, 999)) rows.push_back(i);
    }
    for (EntityId j = 0; j < sim.cols(); ++j) {
      if (!used(999, j)) cols.push_back(j);
    }
    std::vector<PivotPair> proposals;
    for (EntityId i : rows) {
      EntityId bj = cols.empty() ? 0 : cols[0];
      for (EntityId j : cols) {
        if (sim(i, j) > sim(i, bj)) bj = j;
      }
      if (cols.empty()) continue;
      EntityId bi = rows[0];
      for (EntityId r : rows) {
        if (sim(r, bj) > sim(bi, bj)) bi = r;
      }
      if (bi == i) proposals.emplace_back(i, bj);
    }
    std::map<PivotPair, std::size_t> next;
    for (auto& p : proposals) {
      const std::size_t s = streak.count(p) ? streak[p] + 1 : 1;
      if (s >= ks) {
        permanent.push_back(p);
      } else {
        next[p] = s;
      }
    }
    streak.clear();
    for (auto& [p, s] : next) {
      if (!used(p.first, p.second)) streak[p] = s;
    }
  }
};

TEST_CASE("propose_round follows a hand simulation on scripted 4x4 streams") {
  std::mt19937_64 rng(23);
  for (int stream = 0; stream < 20; ++stream) {
    ILConfig cfg;
    cfg.ks = 1 + rng() % 3;
    PivotLedger ledger;
    HandLedger hand;
    // a slowly drifting matrix so candidates survive several rounds
    Matrix base = testsupport::tied_matrix(4, 4, rng, 5);
    for (int round = 0; round < 12; ++round) {
      if (rng() % 3 == 0) base(rng() % 4, rng() % 4) += 0.3;
      const auto [src, tgt] = unaligned_entities(ledger, 4, 4);
      Matrix sub(static_cast<Eigen::Index>(src.size()), static_cast<Eigen::Index>(tgt.size()));
      for (std::size_t i = 0; i < src.size(); ++i) {
        for (std::size_t j = 0; j < tgt.size(); ++j) {
          sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = base(src[i], tgt[j]);
        }
      }
      propose_round(sub, src, tgt, ledger, cfg);
      hand.round(base, cfg.ks);
      REQUIRE(ledger.permanent() == hand.permanent);
      REQUIRE(ledger.candidates() == hand.streak);
      ledger.check_invariants(cfg);
    }
  }
}

TEST_CASE("propose_round maps local indices back to entity ids") {
  ILConfig cfg;
  cfg.ks = 1;
  PivotLedger ledger;
  Matrix s(2, 2);
  s << 0.1, 0.9, 0.8, 0.2;
  const std::vector<EntityId> src{5, 9}, tgt{3, 7};
  const auto prop = propose_round(s, src, tgt, ledger, cfg);
  REQUIRE(prop.size() == 2);
  CHECK(prop[0] == PivotPair{5, 7});
  CHECK(prop[1] == PivotPair{9, 3});
  CHECK(ledger.permanent().size() == 2);
  CHECK_THROWS(propose_round(s, std::vector<EntityId>{1}, tgt, ledger, cfg));
}
