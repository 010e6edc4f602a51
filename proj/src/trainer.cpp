#include "mmea/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mmea {

namespace fs = std::filesystem;

void adamw_step(std::span<Param* const> params, AdamWState& state, const AdamWConfig& cfg) {
  if (state.first.empty()) {
    for (const Param* p : params) {
      state.first.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.second.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.first.size() != params.size()) throw std::invalid_argument("adamw_step: moment count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->grad.rows() != state.first[i].rows() || params[i]->grad.cols() != state.first[i].cols()) {
      throw std::invalid_argument("adamw_step: shape mismatch for " + params[i]->name);
    }
    if (!params[i]->grad.allFinite()) throw std::domain_error("adamw_step: non-finite gradient in " + params[i]->name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double step_size = cfg.learning_rate / bc1;
  const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    Matrix& m = state.first[i];
    Matrix& v = state.second[i];
    p.value *= decay;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * p.grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * p.grad.cwiseProduct(p.grad);
    const auto denom = (v.array() / bc2).sqrt() + cfg.epsilon;
    p.value.array() -= step_size * m.array() / denom;
  }
}

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  if (!(optimizer.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be positive");
  if (optimizer.weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be at least 1");
  if (csls_k < 1) throw std::invalid_argument("train: csls_k must be at least 1");
  il.validate();
  loss.validate();
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& c) {
  TrainConfig t;
  auto count = [&](const std::string& key, std::size_t fallback) {
    const long long v = c.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw std::runtime_error("config: key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  t.optimizer.learning_rate = c.get_double("learning_rate", t.optimizer.learning_rate);
  t.optimizer.weight_decay = c.get_double("weight_decay", t.optimizer.weight_decay);
  t.batch_size = count("batch_size", t.batch_size);
  t.base_epochs = count("base_epochs", t.base_epochs);
  t.il_epochs = count("il_epochs", t.il_epochs);
  t.rng_seed = static_cast<std::uint64_t>(c.get_int("train_seed", 0));
  t.il.ke = count("il_ke", t.il.ke);
  t.il.ks = count("il_ks", t.il.ks);
  t.il.use_csls = c.get_bool("il_csls", t.il.use_csls);
  t.loss.alpha_structure = c.get_double("alpha_structure", t.loss.alpha_structure);
  t.loss.alpha_feature = c.get_double("alpha_feature", t.loss.alpha_feature);
  t.loss.alpha_fused = c.get_double("alpha_fused", t.loss.alpha_fused);
  t.loss.beta = c.get_double("beta", t.loss.beta);
  if (c.has("gcn_dims")) {
    t.dims.gcn.clear();
    for (long long d : c.get_int_list("gcn_dims", {})) {
      if (d < 1) throw std::runtime_error("config: gcn_dims entries must be positive");
      t.dims.gcn.push_back(static_cast<Eigen::Index>(d));
    }
  }
  for (Modality m : kFeatureModalities) {
    const std::string key = std::string(modality_name(m)) + "_out";
    t.dims.projection[m] = static_cast<Eigen::Index>(count(key, static_cast<std::size_t>(t.dims.projection[m])));
  }
  if (auto d = c.get("disable")) {
    std::istringstream in(*d);
    std::string item;
    while (std::getline(in, item, ',')) {
      if (!item.empty()) t.disabled.push_back(parse_modality(item));
    }
  }
  t.unsupervised = c.get_bool("unsupervised", t.unsupervised);
  t.visual_pivot_count = count("visual_pivots", t.visual_pivot_count);
  if (c.has("pivot_threshold")) t.pivot_threshold = c.get_double("pivot_threshold", 0.0);
  t.use_csls = c.get_bool("use_csls", t.use_csls);
  t.csls_k = count("csls_k", t.csls_k);
  const std::string pool = c.get_or("eval_pool", "test");
  if (pool == "test") {
    t.eval_pool = CandidatePool::test_targets;
  } else if (pool == "all") {
    t.eval_pool = CandidatePool::all_targets;
  } else {
    throw std::runtime_error("config: eval_pool must be 'test' or 'all'");
  }
  return t;
}

// ---------------------------------------------------------------------------
// Seeding helpers

std::vector<Modality> active_modalities(const AlignmentTask& task, const TrainConfig& cfg) {
  std::vector<Modality> out;
  for (Modality m : task_modalities(task)) {
    if (std::find(cfg.disabled.begin(), cfg.disabled.end(), m) == cfg.disabled.end()) out.push_back(m);
  }
  if (out.empty()) throw std::invalid_argument("all modalities are disabled");
  return out;
}

std::vector<ScoredPivot> visual_pivots(const AlignmentTask& task, std::size_t n, std::optional<double> threshold) {
  const int k = task.feature_index(Modality::image);
  if (k < 0) throw std::invalid_argument("visual pivots need image features on both graphs");
  const auto& fs_ = task.source_features[static_cast<std::size_t>(k)];
  const auto& ft = task.target_features[static_cast<std::size_t>(k)];
  std::vector<EntityId> src_ids, tgt_ids;
  for (std::size_t i = 0; i < fs_.present.size(); ++i) {
    if (fs_.present[i]) src_ids.push_back(static_cast<EntityId>(i));
  }
  for (std::size_t j = 0; j < ft.present.size(); ++j) {
    if (ft.present[j]) tgt_ids.push_back(static_cast<EntityId>(j));
  }
  Matrix a(static_cast<Eigen::Index>(src_ids.size()), fs_.matrix.cols());
  Matrix b(static_cast<Eigen::Index>(tgt_ids.size()), ft.matrix.cols());
  for (std::size_t i = 0; i < src_ids.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = fs_.matrix.row(src_ids[i]);
  for (std::size_t j = 0; j < tgt_ids.size(); ++j) b.row(static_cast<Eigen::Index>(j)) = ft.matrix.row(tgt_ids[j]);

  const std::size_t limit = std::min(src_ids.size(), tgt_ids.size());
  if (n == 0) n = limit;
  if (n > limit) {
    throw std::invalid_argument("visual pivots: requested " + std::to_string(n) + " but only " +
                                std::to_string(limit) + " entities have images on the smaller side");
  }
  auto picks = induce_visual_pivots(cosine_matrix(a, b), n);
  if (threshold) picks = threshold_pivots(picks, *threshold);
  std::vector<ScoredPivot> out;
  out.reserve(picks.size());
  for (const auto& p : picks) {
    out.push_back({src_ids[static_cast<std::size_t>(p.row)], tgt_ids[static_cast<std::size_t>(p.col)], p.score});
  }
  return out;
}

double pivot_precision(const std::vector<ScoredPivot>& pivots, const std::vector<PivotPair>& gold) {
  if (pivots.empty()) return 0.0;
  std::set<PivotPair> g(gold.begin(), gold.end());
  std::size_t hit = 0;
  for (const auto& p : pivots) hit += g.count({p.source, p.target});
  return static_cast<double>(hit) / static_cast<double>(pivots.size());
}

// ---------------------------------------------------------------------------
// Training

namespace {

constexpr std::uint64_t kStreamInit = 1000;
constexpr std::uint64_t kStreamShuffle = 2000;

double run_epoch(TrainState& st, const ModelInputs& inputs, const TrainConfig& cfg, std::mt19937_64& shuffle_rng) {
  std::vector<PivotPair> pivots = st.ledger.permanent();
  std::shuffle(pivots.begin(), pivots.end(), shuffle_rng);
  const auto params = st.params.all();
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < pivots.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(pivots.size(), start + cfg.batch_size);
    std::span<const PivotPair> batch(pivots.data() + start, end - start);
    st.params.zero_grad();
    const EmbeddingSet emb = encode(st.params, inputs);
    const JointLossResult res = joint_loss(emb, st.params.modality_logits, batch, inputs.n_source, cfg.loss);
    encode_backward(st.params, inputs, emb, res.d_normalized, res.d_logits);
    adamw_step(params, st.optimizer, cfg.optimizer);
    loss_sum += res.total;
    ++batches;
  }
  return loss_sum / static_cast<double>(batches);
}

void proposal_round(TrainState& st, const ModelInputs& inputs, const TrainConfig& cfg) {
  auto [src_ids, tgt_ids] = unaligned_entities(st.ledger, inputs.n_source, inputs.n_target);
  if (src_ids.empty() || tgt_ids.empty()) {
    st.ledger.apply_round({}, cfg.il);
    return;
  }
  const EmbeddingSet emb = encode(st.params, inputs);
  Matrix a(static_cast<Eigen::Index>(src_ids.size()), emb.fused.cols());
  Matrix b(static_cast<Eigen::Index>(tgt_ids.size()), emb.fused.cols());
  for (std::size_t i = 0; i < src_ids.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = emb.fused.row(src_ids[i]);
  for (std::size_t j = 0; j < tgt_ids.size(); ++j) {
    b.row(static_cast<Eigen::Index>(j)) = emb.fused.row(static_cast<Eigen::Index>(inputs.n_source + tgt_ids[j]));
  }
  propose_round(cosine_matrix(a, b), src_ids, tgt_ids, st.ledger, cfg.il);
}

}  // namespace

TrainState train(const AlignmentTask& task, const TrainConfig& cfg) {
  cfg.validate();
  const auto active = active_modalities(task, cfg);
  const ModelInputs inputs = ModelInputs::from_task(task, active);

  TrainState st;
  st.params = ModelParams::init(inputs, cfg.dims, derive_seed(cfg.rng_seed, kStreamInit));
  if (cfg.unsupervised) {
    if (!task.has_modality(Modality::image)) throw std::invalid_argument("unsupervised training needs image features");
    st.induced_pivots = visual_pivots(task, cfg.visual_pivot_count, cfg.pivot_threshold);
    for (const auto& p : st.induced_pivots) st.ledger.add_permanent({p.source, p.target});
  } else {
    st.ledger = PivotLedger(task.train_pivots);
  }
  const std::size_t total = cfg.base_epochs + cfg.il_epochs;
  if (total > 0 && st.ledger.permanent().empty()) {
    throw std::invalid_argument(cfg.unsupervised ? "unsupervised seeding produced no pivots"
                                                 : "no training pivots in semi-supervised mode");
  }

  std::mt19937_64 shuffle_rng(derive_seed(cfg.rng_seed, kStreamShuffle));
  for (std::size_t e = 0; e < total; ++e) {
    EpochRecord rec;
    rec.epoch = e;
    rec.loss = run_epoch(st, inputs, cfg, shuffle_rng);
    if (e >= cfg.base_epochs && (e - cfg.base_epochs + 1) % cfg.il.ke == 0) proposal_round(st, inputs, cfg);
    rec.pivot_count = st.ledger.permanent().size();
    rec.weights = softmax(st.params.modality_logits.value);
    st.history.push_back(std::move(rec));
    st.epoch = e + 1;
  }
  return st;
}

EvalReport evaluate_model(const TrainState& state, const AlignmentTask& task, const TrainConfig& cfg,
                          bool stratified) {
  const ModelInputs inputs = ModelInputs::from_task(task, state.modalities());
  const EmbeddingSet emb = encode(state.params, inputs);
  const EvalProblem prob =
      build_eval_problem(emb.fused, inputs.n_source, task.test_pivots, cfg.eval_pool, inputs.n_target);
  const std::size_t k = std::min<std::size_t>(cfg.csls_k, static_cast<std::size_t>(std::min(prob.sim.rows(), prob.sim.cols())));
  if (stratified && task.test_pivots.size() >= 5) {
    return stratified_evaluate(prob.sim, prob.gold, task.test_pivots, task, cfg.use_csls, k);
  }
  return evaluate(prob.sim, prob.gold, cfg.use_csls, k);
}

EvalReport ablate(const AlignmentTask& task, const TrainConfig& cfg, const std::vector<Modality>& disabled_modalities) {
  TrainConfig c = cfg;
  for (Modality m : disabled_modalities) {
    if (std::find(c.disabled.begin(), c.disabled.end(), m) == c.disabled.end()) c.disabled.push_back(m);
  }
  const TrainState st = train(task, c);
  return evaluate_model(st, task, c, true);
}

std::string history_csv(const TrainState& state) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,loss,pivot_count";
  for (Modality m : state.modalities()) os << ",w_" << modality_name(m);
  os << "\n";
  for (const auto& r : state.history) {
    os << r.epoch << "," << r.loss << "," << r.pivot_count;
    for (double w : r.weights) os << "," << w;
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_checkpoint(const TrainState& state, const fs::path& dir) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  const auto params = state.params.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param& p = *params[i];
    write_feature_matrix(dir / (p.name + ".bin"), p.value);
    manifest << p.name << " = " << p.name << ".bin\n";
    if (!state.optimizer.first.empty()) {
      write_feature_matrix(dir / ("m_" + p.name + ".bin"), state.optimizer.first[i]);
      write_feature_matrix(dir / ("v_" + p.name + ".bin"), state.optimizer.second[i]);
    }
  }
  write_text(dir / "params.manifest", manifest.str());
  write_text(dir / "ledger.tsv", state.ledger.dump());

  std::ostringstream kv;
  kv << "epoch = " << state.epoch << "\n";
  kv << "optimizer_step = " << state.optimizer.step << "\n";
  kv << "modalities = ";
  for (std::size_t i = 0; i < state.modalities().size(); ++i) {
    kv << (i ? "," : "") << modality_name(state.modalities()[i]);
  }
  kv << "\n";
  kv << "moments = " << (state.optimizer.first.empty() ? "none" : "m_<param>.bin,v_<param>.bin") << "\n";
  kv << "ledger = ledger.tsv\n";
  kv << "params = params.manifest\n";
  write_text(dir / "state.kv", kv.str());
}

TrainState load_checkpoint(const fs::path& dir) {
  const auto kv = KeyValueConfig::load(dir / "state.kv");
  const auto manifest = KeyValueConfig::load(dir / "params.manifest");
  TrainState st;
  st.epoch = static_cast<std::size_t>(kv.get_int("epoch", 0));
  st.optimizer.step = static_cast<std::size_t>(kv.get_int("optimizer_step", 0));
  std::istringstream mods(kv.require("modalities"));
  std::string item;
  while (std::getline(mods, item, ',')) st.params.modalities.push_back(parse_modality(item));

  auto load_param = [&](const std::string& name) {
    return Param(name, read_feature_matrix(*manifest.get_path(name)));
  };
  if (std::find(st.params.modalities.begin(), st.params.modalities.end(), Modality::structure) !=
      st.params.modalities.end()) {
    st.params.entity_table = load_param("entity_table");
    for (std::size_t l = 0; manifest.has("gcn_w" + std::to_string(l)); ++l) {
      st.params.gcn_weights.push_back(load_param("gcn_w" + std::to_string(l)));
    }
  }
  for (Modality m : st.params.modalities) {
    if (m == Modality::structure) continue;
    const std::string name(modality_name(m));
    st.params.projections.push_back({m, load_param("proj_" + name + "_w"), load_param("proj_" + name + "_b")});
  }
  st.params.modality_logits = load_param("modality_logits");
  if (kv.get_or("moments", "none") != "none") {
    for (const Param* p : st.params.all()) {
      st.optimizer.first.push_back(read_feature_matrix(dir / ("m_" + p->name + ".bin")));
      st.optimizer.second.push_back(read_feature_matrix(dir / ("v_" + p->name + ".bin")));
    }
  }
  st.ledger = PivotLedger::parse(read_text(dir / "ledger.tsv"));
  return st;
}

}  // namespace mmea
