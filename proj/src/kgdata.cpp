#include "mmea/kgdata.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mmea {

namespace fs = std::filesystem;

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::structure: return "structure";
    case Modality::image: return "image";
    case Modality::relation: return "relation";
    case Modality::attribute: return "attribute";
    case Modality::surface: return "surface";
  }
  return "unknown";
}

Modality parse_modality(std::string_view name) {
  for (Modality m : kAllModalities) {
    if (modality_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown modality: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Vocabulary / graph

Vocabulary Vocabulary::numeric(std::size_t n) {
  Vocabulary v;
  for (std::size_t i = 0; i < n; ++i) v.insert(std::to_string(i), static_cast<std::uint32_t>(i));
  return v;
}

void Vocabulary::insert(std::string label, std::uint32_t id) {
  if (index_.count(label) != 0) throw std::runtime_error("duplicate vocabulary label: " + label);
  if (id >= labels_.size()) labels_.resize(id + 1);
  if (!labels_[id].empty()) throw std::runtime_error("duplicate vocabulary id: " + std::to_string(id));
  index_.emplace(label, id);
  labels_[id] = std::move(label);
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::validate_dense() const {
  if (index_.size() != labels_.size()) throw std::runtime_error("vocabulary ids are not dense");
}

void KnowledgeGraph::finalize() {
  const std::size_t n = entity_count();
  degree.assign(n, 0);
  for (const Triple& t : triples) {
    if (t.head >= n || t.tail >= n) throw std::runtime_error("triple references entity id out of range");
    if (t.relation >= relations.size()) throw std::runtime_error("triple references relation id out of range");
    ++degree[t.head];
    ++degree[t.tail];
  }
}

std::size_t ModalityFeatures::present_count() const {
  return static_cast<std::size_t>(std::count(present.begin(), present.end(), std::uint8_t{1}));
}

bool AlignmentTask::has_modality(Modality m) const { return feature_index(m) >= 0; }

int AlignmentTask::feature_index(Modality m) const {
  for (std::size_t i = 0; i < source_features.size(); ++i) {
    if (source_features[i].name == m) return static_cast<int>(i);
  }
  return -1;
}

std::vector<CoverageStat> AlignmentTask::coverage() const {
  std::vector<CoverageStat> out;
  for (std::size_t i = 0; i < source_features.size(); ++i) {
    out.push_back({source_features[i].name, source_features[i].present_count(),
                   source_features[i].present.size(), target_features[i].present_count(),
                   target_features[i].present.size()});
  }
  return out;
}

namespace {

void check_pivot_list(const std::vector<PivotPair>& pivots, std::size_t ns, std::size_t nt,
                      const std::string& what) {
  std::set<EntityId> seen_s, seen_t;
  for (const auto& [s, t] : pivots) {
    if (s >= ns || t >= nt) throw std::runtime_error(what + ": pivot id out of range");
    if (!seen_s.insert(s).second || !seen_t.insert(t).second) {
      throw std::runtime_error(what + ": duplicate pivot entity");
    }
  }
}

}  // namespace

void AlignmentTask::validate() const {
  const std::size_t ns = source.entity_count();
  const std::size_t nt = target.entity_count();
  if (source.degree.size() != ns || target.degree.size() != nt) {
    throw std::runtime_error("graph degrees not computed");
  }
  if (source_features.size() != target_features.size()) {
    throw std::runtime_error("source and target carry different modality sets");
  }
  for (std::size_t i = 0; i < source_features.size(); ++i) {
    const auto& fs_ = source_features[i];
    const auto& ft = target_features[i];
    if (fs_.name != ft.name) throw std::runtime_error("modality order differs between graphs");
    const std::string name(modality_name(fs_.name));
    if (static_cast<std::size_t>(fs_.matrix.rows()) != ns || static_cast<std::size_t>(ft.matrix.rows()) != nt) {
      throw std::runtime_error("dimension mismatch: " + name + " rows do not match entity count");
    }
    if (fs_.matrix.cols() != ft.matrix.cols()) {
      throw std::runtime_error("dimension mismatch: " + name + " width differs between graphs");
    }
    if (fs_.present.size() != ns || ft.present.size() != nt) {
      throw std::runtime_error(name + ": presence mask length mismatch");
    }
    ensure_finite(fs_.matrix, name + " source features");
    ensure_finite(ft.matrix, name + " target features");
  }
  check_pivot_list(train_pivots, ns, nt, "train pivots");
  check_pivot_list(test_pivots, ns, nt, "test pivots");
  std::set<PivotPair> train(train_pivots.begin(), train_pivots.end());
  for (const auto& p : test_pivots) {
    if (train.count(p) != 0) throw std::runtime_error("train and test pivots overlap");
  }
}

// ---------------------------------------------------------------------------
// Binary / text matrix IO

namespace {

constexpr char kMagic[4] = {'M', 'M', 'E', 'A'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated matrix header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  return out;
}

double parse_double(const std::string& tok, const fs::path& path, std::size_t lineno) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos == tok.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::runtime_error("malformed file " + path.string() + ":" + std::to_string(lineno) +
                           ": not a number '" + tok + "'");
}

Matrix read_tsv_matrix(const fs::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& tok : split_tabs(line)) row.push_back(parse_double(tok, path, lineno));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("malformed file " + path.string() + ":" + std::to_string(lineno) +
                               ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace

void write_feature_matrix(const fs::path& path, const Matrix& m) {
  auto out = open_out(path, std::ios::binary);
  out.write(kMagic, 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const float f = static_cast<float>(m.data()[i]);
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Matrix read_feature_matrix(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    in.close();
    return read_tsv_matrix(path);
  }
  const std::uint32_t version = get_u32(in);
  if (version != kFormatVersion) {
    throw std::runtime_error("malformed file " + path.string() + ": unsupported version " +
                             std::to_string(version));
  }
  const std::uint32_t rows = get_u32(in);
  const std::uint32_t cols = get_u32(in);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t bits = 0;
    try {
      bits = get_u32(in);
    } catch (const std::runtime_error&) {
      throw std::runtime_error("malformed file " + path.string() + ": truncated matrix data");
    }
    m.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("malformed file " + path.string() + ": trailing bytes");
  }
  return m;
}

void write_feature_matrix_tsv(const fs::path& path, const Matrix& m) {
  auto out = open_out(path);
  out.precision(9);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << '\t';
      out << m(i, j);
    }
    out << '\n';
  }
}

void write_mask(const fs::path& path, const std::vector<std::uint8_t>& mask) {
  auto out = open_out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
}

std::vector<std::uint8_t> read_mask(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::vector<std::uint8_t> mask((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (auto b : mask) {
    if (b > 1) throw std::runtime_error("malformed file " + path.string() + ": mask bytes must be 0 or 1");
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Text formats

Vocabulary read_vocabulary(const fs::path& path) {
  auto in = open_in(path);
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 2) {
      throw std::runtime_error("malformed file " + path.string() + ":" + std::to_string(lineno) +
                               ": expected label<TAB>id");
    }
    std::uint32_t id = 0;
    auto [p, ec] = std::from_chars(cols[1].data(), cols[1].data() + cols[1].size(), id);
    if (ec != std::errc{} || p != cols[1].data() + cols[1].size()) {
      throw std::runtime_error("malformed file " + path.string() + ":" + std::to_string(lineno) + ": bad id");
    }
    v.insert(cols[0], id);
  }
  v.validate_dense();
  return v;
}

void write_vocabulary(const fs::path& path, const Vocabulary& vocab) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < vocab.size(); ++i) out << vocab.label(static_cast<std::uint32_t>(i)) << '\t' << i << '\n';
}

namespace {

std::optional<std::uint32_t> parse_id(const std::string& tok) {
  std::uint32_t id = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), id);
  if (ec != std::errc{} || p != tok.data() + tok.size()) return std::nullopt;
  return id;
}

std::uint32_t resolve(const std::string& tok, Vocabulary& vocab, bool grow, const fs::path& path,
                      std::size_t lineno, const char* what) {
  if (auto id = vocab.find(tok)) return *id;
  if (auto id = parse_id(tok)) {
    if (*id < vocab.size()) return *id;
    if (grow) {
      for (std::size_t k = vocab.size(); k <= *id; ++k) {
        vocab.insert(std::to_string(k), static_cast<std::uint32_t>(k));
      }
      return *id;
    }
    throw std::runtime_error("malformed file " + path.string() + ":" + std::to_string(lineno) + ": " +
                             what + " id out of range: " + tok);
  }
  if (grow) {
    const auto id = static_cast<std::uint32_t>(vocab.size());
    vocab.insert(tok, id);
    return id;
  }
  throw std::runtime_error("malformed file " + path.string() + ":" + std::to_string(lineno) +
                           ": unknown " + what + " '" + tok + "'");
}

}  // namespace

std::vector<Triple> read_triples(const fs::path& path, Vocabulary& entities, Vocabulary& relations,
                                 bool grow_entities, bool grow_relations) {
  auto in = open_in(path);
  std::vector<Triple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 3) {
      throw std::runtime_error("malformed file " + path.string() + ":" + std::to_string(lineno) +
                               ": expected head<TAB>relation<TAB>tail");
    }
    Triple t{};
    t.head = resolve(cols[0], entities, grow_entities, path, lineno, "entity");
    t.relation = resolve(cols[1], relations, grow_relations, path, lineno, "relation");
    t.tail = resolve(cols[2], entities, grow_entities, path, lineno, "entity");
    out.push_back(t);
  }
  return out;
}

void write_triples(const fs::path& path, const std::vector<Triple>& triples) {
  auto out = open_out(path);
  for (const auto& t : triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

std::vector<PivotPair> read_pivots(const fs::path& path, const Vocabulary& source, const Vocabulary& target) {
  auto in = open_in(path);
  std::vector<PivotPair> out;
  std::string line;
  std::size_t lineno = 0;
  auto lookup = [&](const std::string& tok, const Vocabulary& v) -> std::uint32_t {
    if (auto id = v.find(tok)) return *id;
    if (auto id = parse_id(tok)) {
      if (*id < v.size()) return *id;
      throw std::runtime_error("pivot id out of range: " + tok + " (" + path.string() + ":" +
                               std::to_string(lineno) + ")");
    }
    throw std::runtime_error("pivot id out of range: unknown entity '" + tok + "' (" + path.string() + ":" +
                             std::to_string(lineno) + ")");
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() < 2 || cols.size() > 3) {
      throw std::runtime_error("malformed file " + path.string() + ":" + std::to_string(lineno) +
                               ": expected source_id<TAB>target_id");
    }
    out.emplace_back(lookup(cols[0], source), lookup(cols[1], target));
  }
  return out;
}

void write_pivots(const fs::path& path, const std::vector<PivotPair>& pivots) {
  auto out = open_out(path);
  for (const auto& [s, t] : pivots) out << s << '\t' << t << '\n';
}

void write_scored_pivots(const fs::path& path, const std::vector<ScoredPivot>& pivots) {
  auto out = open_out(path);
  out.precision(9);
  for (const auto& p : pivots) out << p.source << '\t' << p.target << '\t' << p.score << '\n';
}

// ---------------------------------------------------------------------------
// Imputation and statistics

ModalityFeatures impute_missing_images(const ModalityFeatures& features, std::uint64_t rng_seed) {
  const Eigen::Index rows = features.matrix.rows();
  const Eigen::Index cols = features.matrix.cols();
  if (features.present.size() != static_cast<std::size_t>(rows)) {
    throw std::invalid_argument("impute_missing_images: mask length does not match rows");
  }
  const std::size_t n_present = features.present_count();
  if (n_present == static_cast<std::size_t>(rows)) return features;
  if (n_present == 0) throw std::invalid_argument("impute_missing_images: no present rows to estimate from");

  RowVector mean = RowVector::Zero(cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (features.present[i]) mean += features.matrix.row(i);
  }
  mean /= static_cast<double>(n_present);
  RowVector var = RowVector::Zero(cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (features.present[i]) var += (features.matrix.row(i) - mean).array().square().matrix();
  }
  var /= static_cast<double>(n_present);
  const RowVector sd = var.array().sqrt().matrix();

  ModalityFeatures out = features;
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (features.present[i]) continue;
    for (Eigen::Index j = 0; j < cols; ++j) out.matrix(i, j) = mean(j) + sd(j) * normal(rng);
  }
  return out;
}

std::size_t degree_sum(const AlignmentTask& task, PivotPair pair) {
  if (pair.first >= task.source.degree.size() || pair.second >= task.target.degree.size()) {
    throw std::out_of_range("degree_sum: id out of range");
  }
  return task.source.degree[pair.first] + task.target.degree[pair.second];
}

namespace {

using KeyOccurrences = std::vector<std::pair<EntityId, std::string>>;

std::pair<Matrix, Matrix> key_count_features(const KeyOccurrences& src, std::size_t ns,
                                             const KeyOccurrences& tgt, std::size_t nt, std::size_t top_d) {
  std::map<std::string, std::size_t> freq;
  for (const auto& [e, k] : src) ++freq[k];
  for (const auto& [e, k] : tgt) ++freq[k];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > top_d) ranked.resize(top_d);
  std::map<std::string, Eigen::Index> column;
  for (std::size_t i = 0; i < ranked.size(); ++i) column[ranked[i].first] = static_cast<Eigen::Index>(i);

  const Eigen::Index d = static_cast<Eigen::Index>(top_d);
  auto fill = [&](const KeyOccurrences& occ, std::size_t n) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(n), d);
    for (const auto& [e, k] : occ) {
      auto it = column.find(k);
      if (it != column.end()) m(e, it->second) += 1.0;
    }
    return m;
  };
  return {fill(src, ns), fill(tgt, nt)};
}

KeyOccurrences relation_occurrences(const KnowledgeGraph& g) {
  KeyOccurrences occ;
  for (const auto& t : g.triples) {
    const auto& label = g.relations.label(t.relation);
    occ.emplace_back(t.head, label);
    occ.emplace_back(t.tail, label);
  }
  return occ;
}

KeyOccurrences read_attribute_occurrences(const fs::path& path, Vocabulary entities) {
  auto in = open_in(path);
  KeyOccurrences occ;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() < 2) {
      throw std::runtime_error("malformed file " + path.string() + ":" + std::to_string(lineno) +
                               ": expected entity<TAB>attribute[<TAB>value]");
    }
    occ.emplace_back(resolve(cols[0], entities, false, path, lineno, "entity"), cols[1]);
  }
  return occ;
}

}  // namespace

std::pair<Matrix, Matrix> relation_count_features(const KnowledgeGraph& source, const KnowledgeGraph& target,
                                                  std::size_t top_d) {
  return key_count_features(relation_occurrences(source), source.entity_count(), relation_occurrences(target),
                            target.entity_count(), top_d);
}

// ---------------------------------------------------------------------------
// Manifest loading

namespace {

KnowledgeGraph load_graph(const KeyValueConfig& cfg, const std::string& side) {
  KnowledgeGraph g;
  bool grow_entities = true;
  bool grow_relations = true;
  if (auto p = cfg.get_path(side + "_entities")) {
    g.entities = read_vocabulary(*p);
    grow_entities = false;
  } else if (cfg.has(side + "_entity_count")) {
    g.entities = Vocabulary::numeric(static_cast<std::size_t>(cfg.get_int(side + "_entity_count", 0)));
    grow_entities = false;
  }
  if (auto p = cfg.get_path(side + "_relations")) {
    g.relations = read_vocabulary(*p);
    grow_relations = false;
  }
  auto triples_path = cfg.get_path(side + "_triples");
  if (!triples_path) throw std::runtime_error("config: missing required key '" + side + "_triples'");
  g.triples = read_triples(*triples_path, g.entities, g.relations, grow_entities, grow_relations);
  g.finalize();
  return g;
}

std::optional<ModalityFeatures> load_modality(const KeyValueConfig& cfg, Modality m, const std::string& side,
                                              std::size_t entities) {
  const std::string name(modality_name(m));
  auto path = cfg.get_path(name + "_" + side);
  if (!path) return std::nullopt;
  ModalityFeatures f;
  f.name = m;
  f.matrix = read_feature_matrix(*path);
  if (static_cast<std::size_t>(f.matrix.rows()) != entities) {
    throw std::runtime_error("dimension mismatch: " + path->string() + " has " + std::to_string(f.matrix.rows()) +
                             " rows but the " + side + " graph has " + std::to_string(entities) + " entities");
  }
  if (cfg.has(name + "_dim")) {
    const auto declared = cfg.get_int(name + "_dim", 0);
    if (declared != f.matrix.cols()) {
      throw std::runtime_error("dimension mismatch: declared " + name + "_dim = " + std::to_string(declared) +
                               " but " + path->string() + " has width " + std::to_string(f.matrix.cols()));
    }
  }
  if (auto mp = cfg.get_path(name + "_" + side + "_mask")) {
    f.present = read_mask(*mp);
    if (f.present.size() != entities) {
      throw std::runtime_error("dimension mismatch: mask " + mp->string() + " has " +
                               std::to_string(f.present.size()) + " entries, expected " + std::to_string(entities));
    }
  } else {
    f.present.assign(entities, 1);
  }
  ensure_finite(f.matrix, path->string());
  return f;
}

}  // namespace

AlignmentTask load_task(const KeyValueConfig& cfg) {
  AlignmentTask task;
  task.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
  task.source = load_graph(cfg, "source");
  task.target = load_graph(cfg, "target");
  const std::size_t ns = task.source.entity_count();
  const std::size_t nt = task.target.entity_count();

  for (Modality m : kFeatureModalities) {
    auto fsrc = load_modality(cfg, m, "source", ns);
    auto ftgt = load_modality(cfg, m, "target", nt);
    const std::string name(modality_name(m));
    if (!fsrc && !ftgt) {
      if (m == Modality::relation && cfg.has("relation_from_triples")) {
        const auto d = static_cast<std::size_t>(cfg.get_int("relation_from_triples", 0));
        auto [rs, rt] = relation_count_features(task.source, task.target, d);
        task.source_features.push_back({m, std::move(rs), std::vector<std::uint8_t>(ns, 1)});
        task.target_features.push_back({m, std::move(rt), std::vector<std::uint8_t>(nt, 1)});
      } else if (m == Modality::attribute && cfg.has("attribute_from_triples")) {
        const auto d = static_cast<std::size_t>(cfg.get_int("attribute_from_triples", 0));
        auto ps = cfg.get_path("attribute_source_triples");
        auto pt = cfg.get_path("attribute_target_triples");
        if (!ps || !pt) throw std::runtime_error("config: attribute_from_triples needs attribute_*_triples paths");
        auto [as, at] = key_count_features(read_attribute_occurrences(*ps, task.source.entities), ns,
                                           read_attribute_occurrences(*pt, task.target.entities), nt, d);
        task.source_features.push_back({m, std::move(as), std::vector<std::uint8_t>(ns, 1)});
        task.target_features.push_back({m, std::move(at), std::vector<std::uint8_t>(nt, 1)});
      }
      continue;
    }
    if (!fsrc || !ftgt) throw std::runtime_error("config: " + name + " features given for only one graph");
    if (fsrc->matrix.cols() != ftgt->matrix.cols()) {
      throw std::runtime_error("dimension mismatch: " + name + " width differs between graphs");
    }
    auto fill_absent = [&](ModalityFeatures& f, std::uint64_t stream) {
      if (m == Modality::image) {
        if (f.present_count() == 0) {
          throw std::runtime_error("image features: no entity has an observed image");
        }
        f = impute_missing_images(f, derive_seed(task.seed, stream));
      } else {
        for (std::size_t i = 0; i < f.present.size(); ++i) {
          if (!f.present[i]) f.matrix.row(static_cast<Eigen::Index>(i)).setZero();
        }
      }
    };
    fill_absent(*fsrc, 101);
    fill_absent(*ftgt, 102);
    task.source_features.push_back(std::move(*fsrc));
    task.target_features.push_back(std::move(*ftgt));
  }

  if (auto p = cfg.get_path("train_pivots")) task.train_pivots = read_pivots(*p, task.source.entities, task.target.entities);
  if (auto p = cfg.get_path("test_pivots")) task.test_pivots = read_pivots(*p, task.source.entities, task.target.entities);
  task.validate();
  return task;
}

AlignmentTask load_task(const fs::path& manifest_path) { return load_task(KeyValueConfig::load(manifest_path)); }

fs::path save_task(const AlignmentTask& task, const fs::path& dir) {
  fs::create_directories(dir);
  std::ostringstream cfg;
  cfg << "# alignment task manifest\n";
  cfg << "seed = " << task.seed << "\n";
  for (const char* side : {"source", "target"}) {
    const KnowledgeGraph& g = std::string(side) == "source" ? task.source : task.target;
    const std::string s(side);
    write_vocabulary(dir / (s + "_entities.tsv"), g.entities);
    write_vocabulary(dir / (s + "_relations.tsv"), g.relations);
    write_triples(dir / (s + "_triples.tsv"), g.triples);
    cfg << s << "_entities = " << s << "_entities.tsv\n";
    cfg << s << "_relations = " << s << "_relations.tsv\n";
    cfg << s << "_triples = " << s << "_triples.tsv\n";
  }
  for (std::size_t i = 0; i < task.source_features.size(); ++i) {
    const std::string name(modality_name(task.source_features[i].name));
    cfg << name << "_dim = " << task.source_features[i].matrix.cols() << "\n";
    for (const char* side : {"source", "target"}) {
      const std::string s(side);
      const ModalityFeatures& f = s == "source" ? task.source_features[i] : task.target_features[i];
      write_feature_matrix(dir / (name + "_" + s + ".bin"), f.matrix);
      cfg << name << "_" << s << " = " << name << "_" << s << ".bin\n";
      if (f.present_count() != f.present.size()) {
        write_mask(dir / (name + "_" + s + ".mask"), f.present);
        cfg << name << "_" << s << "_mask = " << name << "_" << s << ".mask\n";
      }
    }
  }
  write_pivots(dir / "train_pivots.tsv", task.train_pivots);
  write_pivots(dir / "test_pivots.tsv", task.test_pivots);
  cfg << "train_pivots = train_pivots.tsv\n";
  cfg << "test_pivots = test_pivots.tsv\n";
  const fs::path manifest = dir / "task.cfg";
  auto out = open_out(manifest);
  out << cfg.str();
  return manifest;
}

}  // namespace mmea
