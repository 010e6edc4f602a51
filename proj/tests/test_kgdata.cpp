#include <doctest.h>

#include <cstring>

#include "mmea/kgdata.hpp"
#include "support.hpp"

using namespace mmea;
using testsupport::TempDir;
using testsupport::spit;

namespace {

// Two 3-entity graphs with labels, one relation, full image features.
void write_toy_task(const TempDir& dir, bool image_mask) {
  spit(dir / "src_ents.tsv", "a\t0\nb\t1\nc\t2\n");
  spit(dir / "tgt_ents.tsv", "x\t0\ny\t1\nz\t2\n");
  spit(dir / "src.tsv", "a\tknows\tb\nb\tknows\tc\n");
  spit(dir / "tgt.tsv", "x\tknows\ty\n");
  Matrix img(3, 2);
  img << 1, 1, 3, 3, 0, 0;
  write_feature_matrix(dir / "img_s.bin", img);
  write_feature_matrix(dir / "img_t.bin", img);
  spit(dir / "train.tsv", "a\tx\n");
  std::string manifest =
      "seed = 5\n"
      "source_entities = src_ents.tsv\n"
      "target_entities = tgt_ents.tsv\n"
      "source_triples = src.tsv\n"
      "target_triples = tgt.tsv\n"
      "image_source = img_s.bin\n"
      "image_target = img_t.bin\n"
      "image_dim = 2\n"
      "train_pivots = train.tsv\n";
  if (image_mask) {
    write_mask(dir / "img_s.mask", {1, 1, 0});
    manifest += "image_source_mask = img_s.mask\n";
  }
  spit(dir / "task.cfg", manifest);
}

}  // namespace

TEST_CASE("binary feature file layout") {
  TempDir dir;
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6.5;
  write_feature_matrix(dir / "m.bin", m);
  const std::string bytes = testsupport::slurp(dir / "m.bin");
  REQUIRE(bytes.size() == 4 + 12 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "MMEA");
  std::uint32_t header[3];
  std::memcpy(header, bytes.data() + 4, 12);
  CHECK(header[0] == 1);
  CHECK(header[1] == 2);
  CHECK(header[2] == 3);
  float last;
  std::memcpy(&last, bytes.data() + 16 + 5 * 4, 4);
  CHECK(last == 6.5f);
  CHECK(read_feature_matrix(dir / "m.bin") == m);
}

TEST_CASE("feature matrices round-trip at 32-bit precision") {
  TempDir dir;
  std::mt19937_64 rng(11);
  const Matrix m = testsupport::random_matrix(7, 5, rng);
  write_feature_matrix(dir / "m.bin", m);
  const Matrix back = read_feature_matrix(dir / "m.bin");
  CHECK(back == m.cast<float>().cast<double>());
  // a second trip is exact
  write_feature_matrix(dir / "m2.bin", back);
  CHECK(read_feature_matrix(dir / "m2.bin") == back);
}

TEST_CASE("TSV fallback and malformed files") {
  TempDir dir;
  spit(dir / "m.tsv", "1\t2\n3.5\t-4\n");
  const Matrix m = read_feature_matrix(dir / "m.tsv");
  CHECK(m.rows() == 2);
  CHECK(m(1, 0) == 3.5);
  CHECK(m(1, 1) == -4.0);

  spit(dir / "ragged.tsv", "1\t2\n3\n");
  CHECK_THROWS(read_feature_matrix(dir / "ragged.tsv"));

  Matrix ok = Matrix::Ones(2, 2);
  write_feature_matrix(dir / "cut.bin", ok);
  std::string bytes = testsupport::slurp(dir / "cut.bin");
  spit(dir / "cut.bin", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS(read_feature_matrix(dir / "cut.bin"));
  spit(dir / "long.bin", bytes + "xx");
  CHECK_THROWS(read_feature_matrix(dir / "long.bin"));
  std::string wrong_version = bytes;
  wrong_version[4] = 2;
  spit(dir / "v2.bin", wrong_version);
  CHECK_THROWS(read_feature_matrix(dir / "v2.bin"));
}

TEST_CASE("masks are 0/1 bytes") {
  TempDir dir;
  write_mask(dir / "m.mask", {1, 0, 1});
  CHECK(read_mask(dir / "m.mask") == std::vector<std::uint8_t>{1, 0, 1});
  spit(dir / "bad.mask", std::string("\x01\x02", 2));
  CHECK_THROWS(read_mask(dir / "bad.mask"));
}

TEST_CASE("load_task on a fully specified toy task") {
  TempDir dir;
  write_toy_task(dir, false);
  const AlignmentTask t = load_task(dir / "task.cfg");
  CHECK(t.seed == 5);
  CHECK(t.source.entity_count() == 3);
  CHECK(t.target.entity_count() == 3);
  CHECK(t.source.triples.size() == 2);
  CHECK(t.source.degree == std::vector<std::size_t>{1, 2, 1});
  CHECK(t.target.degree == std::vector<std::size_t>{1, 1, 0});
  REQUIRE(t.train_pivots.size() == 1);
  CHECK(t.train_pivots[0] == PivotPair{0, 0});
  const auto cov = t.coverage();
  REQUIRE(cov.size() == 1);
  CHECK(cov[0].modality == Modality::image);
  CHECK(cov[0].source_present == 3);
  CHECK(cov[0].target_present == 3);
}

TEST_CASE("partial image coverage is imputed and reported") {
  TempDir dir;
  write_toy_task(dir, true);
  const AlignmentTask t = load_task(dir / "task.cfg");
  const auto& img = t.source_features.at(0);
  CHECK(img.present == std::vector<std::uint8_t>{1, 1, 0});
  CHECK(t.coverage()[0].source_present == 2);
  // the stored zeros of the absent row are replaced
  CHECK(img.matrix.row(2) != Matrix::Zero(1, 2));
  CHECK(img.matrix(0, 0) == 1.0);
  CHECK(img.matrix(1, 1) == 3.0);
  // same manifest, same imputation
  CHECK(load_task(dir / "task.cfg").source_features[0].matrix == img.matrix);
}

TEST_CASE("load_task errors") {
  TempDir dir;
  write_toy_task(dir, false);
  spit(dir / "train.tsv", "a\tw\n");
  CHECK_THROWS_WITH(load_task(dir / "task.cfg"), doctest::Contains("pivot id out of range"));

  spit(dir / "train.tsv", "a\tx\na\ty\n");
  CHECK_THROWS_WITH(load_task(dir / "task.cfg"), doctest::Contains("duplicate pivot entity"));

  spit(dir / "train.tsv", "a\tx\n");
  spit(dir / "test.tsv", "a\tx\n");
  spit(dir / "task.cfg", testsupport::slurp(dir / "task.cfg") + "test_pivots = test.tsv\n");
  CHECK_THROWS_WITH(load_task(dir / "task.cfg"), doctest::Contains("overlap"));

  write_toy_task(dir, false);
  spit(dir / "task.cfg", testsupport::slurp(dir / "task.cfg") + "image_dim = 4\n");
  CHECK_THROWS_WITH(load_task(dir / "task.cfg"), doctest::Contains("dimension mismatch"));

  write_toy_task(dir, false);
  write_feature_matrix(dir / "img_t.bin", Matrix::Ones(2, 2));
  CHECK_THROWS_WITH(load_task(dir / "task.cfg"), doctest::Contains("dimension mismatch"));

  write_toy_task(dir, false);
  spit(dir / "src.tsv", "a\tknows\n");
  CHECK_THROWS(load_task(dir / "task.cfg"));
}

TEST_CASE("triples accept integer ids and grow numeric vocabularies") {
  TempDir dir;
  spit(dir / "t.tsv", "0\t1\t4\n2\t0\t3\n");
  Vocabulary ents, rels;
  const auto triples = read_triples(dir / "t.tsv", ents, rels, true, true);
  CHECK(triples.size() == 2);
  CHECK(ents.size() == 5);
  CHECK(rels.size() == 2);
  Vocabulary fixed = Vocabulary::numeric(3);
  Vocabulary r2;
  CHECK_THROWS(read_triples(dir / "t.tsv", fixed, r2, false, true));
}

TEST_CASE("imputation uses per-dimension mean and population std") {
  ModalityFeatures f;
  f.matrix = Matrix::Zero(4002, 2);
  f.matrix.row(0) << 1, 1;
  f.matrix.row(1) << 3, 3;
  f.present.assign(4002, 0);
  f.present[0] = f.present[1] = 1;
  const auto out = impute_missing_images(f, 99);
  CHECK(out.matrix.row(0) == f.matrix.row(0));
  CHECK(out.matrix.row(1) == f.matrix.row(1));
  CHECK(out.present == f.present);
  // reference statistics of the present rows: mean 2, population sd 1
  const Matrix imputed = out.matrix.bottomRows(4000);
  for (Eigen::Index d = 0; d < 2; ++d) {
    const double mean = imputed.col(d).mean();
    const double sd = std::sqrt((imputed.col(d).array() - mean).square().mean());
    CHECK(mean == doctest::Approx(2.0).epsilon(0.05));
    CHECK(sd == doctest::Approx(1.0).epsilon(0.05));
  }
  CHECK(impute_missing_images(f, 99).matrix == out.matrix);
  CHECK(impute_missing_images(f, 100).matrix != out.matrix);
}

TEST_CASE("imputation edge cases") {
  ModalityFeatures f;
  f.matrix = Matrix::Ones(3, 2);
  f.present = {1, 1, 1};
  CHECK(impute_missing_images(f, 1).matrix == f.matrix);

  f.matrix << 2, 5, 2, 5, 0, 0;
  f.present = {1, 1, 0};
  const auto same = impute_missing_images(f, 1);
  CHECK(same.matrix(2, 0) == 2.0);
  CHECK(same.matrix(2, 1) == 5.0);

  f.present = {0, 0, 0};
  CHECK_THROWS(impute_missing_images(f, 1));
}

TEST_CASE("degree_sum") {
  AlignmentTask t;
  t.source.entities = Vocabulary::numeric(4);
  t.target.entities = Vocabulary::numeric(3);
  t.source.relations = Vocabulary::numeric(1);
  t.target.relations = Vocabulary::numeric(1);
  t.source.triples = {{0, 0, 1}, {0, 0, 2}, {3, 0, 0}};
  t.target.triples = {{1, 0, 0}, {0, 0, 2}};
  t.source.finalize();
  t.target.finalize();
  CHECK(degree_sum(t, {0, 0}) == 5);
  CHECK(degree_sum(t, {3, 1}) == 2);
  CHECK_THROWS_AS(degree_sum(t, {4, 0}), std::out_of_range);

  AlignmentTask iso = t;
  iso.source.triples.clear();
  iso.target.triples.clear();
  iso.source.finalize();
  iso.target.finalize();
  CHECK(degree_sum(iso, {0, 0}) == 0);

  // swapping the graphs swaps the pair
  AlignmentTask swapped = t;
  std::swap(swapped.source, swapped.target);
  CHECK(degree_sum(swapped, {0, 0}) == degree_sum(t, {0, 0}));
  CHECK(degree_sum(swapped, {1, 3}) == degree_sum(t, {3, 1}));
}

TEST_CASE("degrees sum to twice the triple count") {
  const AlignmentTask t = testsupport::tiny_task(30);
  std::size_t total = 0;
  for (auto d : t.source.degree) total += d;
  CHECK(total == 2 * t.source.triples.size());
}

TEST_CASE("relation count features") {
  KnowledgeGraph s, g;
  s.entities = Vocabulary::numeric(3);
  g.entities = Vocabulary::numeric(2);
  s.relations.insert("r", 0);
  s.relations.insert("q", 1);
  g.relations.insert("r", 0);
  s.triples = {{0, 0, 1}, {0, 0, 2}, {1, 1, 2}};
  g.triples = {{0, 0, 1}};
  s.finalize();
  g.finalize();
  const auto [fs, fg] = relation_count_features(s, g, 1);
  REQUIRE(fs.cols() == 1);
  CHECK(fs(0, 0) == 2.0);
  CHECK(fs(1, 0) == 1.0);
  CHECK(fs(2, 0) == 1.0);
  CHECK(fg(0, 0) == 1.0);
  CHECK(fg(1, 0) == 1.0);
}

TEST_CASE("saved tasks reload with identical feature bits") {
  TempDir dir;
  const AlignmentTask t = testsupport::tiny_task(25);
  const auto manifest = save_task(t, dir.path());
  const AlignmentTask back = load_task(manifest);
  CHECK(back.source.triples.size() == t.source.triples.size());
  CHECK(back.train_pivots == t.train_pivots);
  CHECK(back.test_pivots == t.test_pivots);
  REQUIRE(back.source_features.size() == t.source_features.size());
  for (std::size_t i = 0; i < t.source_features.size(); ++i) {
    CHECK(back.source_features[i].matrix == t.source_features[i].matrix.cast<float>().cast<double>());
  }
  TempDir again;
  const AlignmentTask back2 = load_task(save_task(back, again.path()));
  for (std::size_t i = 0; i < t.source_features.size(); ++i) {
    CHECK(back2.target_features[i].matrix == back.target_features[i].matrix);
  }
}
