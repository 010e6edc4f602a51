#include "mmea/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmea/synth.hpp"

namespace fs = std::filesystem;

namespace mmea {

namespace {

struct Summary {
  double mean = 0.0;
  double variance = 0.0;
};

// sample variance; a single run has variance 0
Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    for (double x : xs) s.variance += (x - s.mean) * (x - s.mean);
    s.variance /= static_cast<double>(xs.size() - 1);
  }
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Creates `out` if needed and refuses to continue if any of `names` already exists there.
void claim_outputs(const fs::path& out, const std::vector<std::string>& names) {
  if (out.empty()) throw std::invalid_argument("--out is required");
  if (fs::exists(out) && !fs::is_directory(out)) throw std::runtime_error(out.string() + " exists and is not a directory");
  for (const auto& n : names) {
    if (fs::exists(out / n)) {
      throw std::runtime_error("refusing to overwrite existing output " + (out / n).string());
    }
  }
  fs::create_directories(out);
}

std::vector<std::uint64_t> seeds_or_default(const CliOptions& opts, const KeyValueConfig& cfg) {
  if (!opts.seeds.empty()) return opts.seeds;
  std::vector<std::uint64_t> out;
  for (long long s : cfg.get_int_list("seeds", {cfg.get_int("train_seed", 1)})) {
    if (s < 0) throw std::invalid_argument("seeds must be non-negative");
    out.push_back(static_cast<std::uint64_t>(s));
  }
  return out;
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

nlohmann::ordered_json summary_json(const std::vector<std::uint64_t>& seeds, const std::vector<EvalReport>& reports) {
  nlohmann::ordered_json j;
  j["seeds"] = seeds;
  auto metric = [&](const char* key, auto get) {
    std::vector<double> xs;
    for (const auto& r : reports) xs.push_back(get(r));
    const Summary s = summarize(xs);
    j[key] = {{"mean", s.mean}, {"variance", s.variance}, {"values", xs}};
  };
  metric("h1", [](const EvalReport& r) { return r.hits_at_1; });
  metric("h10", [](const EvalReport& r) { return r.hits_at_10; });
  metric("mrr", [](const EvalReport& r) { return r.mrr; });
  return j;
}

void print_summary(std::ostream& log, const std::string& label, const nlohmann::ordered_json& j) {
  log << std::fixed << std::setprecision(4);
  log << label << " H@1 " << j["h1"]["mean"].get<double>() << " +/- " << j["h1"]["variance"].get<double>()
      << "  H@10 " << j["h10"]["mean"].get<double>() << " +/- " << j["h10"]["variance"].get<double>() << "  MRR "
      << j["mrr"]["mean"].get<double>() << " +/- " << j["mrr"]["variance"].get<double>() << "\n";
  log << std::defaultfloat;
}

std::string disabled_label(const std::vector<Modality>& disabled) {
  if (disabled.empty()) return "full";
  std::string s = "no";
  for (Modality m : disabled) s += "_" + std::string(modality_name(m));
  return s;
}

}  // namespace

KeyValueConfig resolve_config(const CliOptions& opts) {
  KeyValueConfig cfg = opts.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(opts.config);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override must be key=value: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

AlignmentTask task_from_config(const KeyValueConfig& cfg) {
  if (auto manifest = cfg.get_path("task")) return load_task(*manifest);
  return load_task(cfg);
}

TrainConfig train_config_from(const KeyValueConfig& cfg, const CliOptions& opts) {
  TrainConfig tc = TrainConfig::from_config(cfg);
  for (const auto& name : opts.disable) {
    const Modality m = parse_modality(name);
    if (std::find(tc.disabled.begin(), tc.disabled.end(), m) == tc.disabled.end()) tc.disabled.push_back(m);
  }
  if (opts.unsupervised) tc.unsupervised = true;
  if (!opts.pivots.empty()) tc.visual_pivot_count = opts.pivots.front();
  if (opts.pivot_threshold) tc.pivot_threshold = opts.pivot_threshold;
  if (opts.csls_k) tc.csls_k = *opts.csls_k;
  if (opts.no_csls) tc.use_csls = false;
  if (opts.no_il) tc.il_epochs = 0;
  tc.validate();
  return tc;
}

int cmd_train(const CliOptions& opts, std::ostream& log) {
  const KeyValueConfig cfg = resolve_config(opts);
  const AlignmentTask task = task_from_config(cfg);
  TrainConfig tc = train_config_from(cfg, opts);
  const auto seeds = seeds_or_default(opts, cfg);

  std::vector<std::string> names{"run.cfg", "summary.json"};
  for (auto s : seeds) names.push_back(seed_dir(s));
  claim_outputs(opts.out, names);
  write_text(opts.out / "run.cfg", cfg.dump());

  std::vector<EvalReport> reports;
  for (auto seed : seeds) {
    tc.rng_seed = seed;
    const fs::path dir = opts.out / seed_dir(seed);
    fs::create_directories(dir);
    log << "seed " << seed << ": training " << tc.base_epochs << "+" << tc.il_epochs << " epochs\n";
    const TrainState st = train(task, tc);
    const EvalReport rep = evaluate_model(st, task, tc, true);
    save_checkpoint(st, dir / "checkpoint");
    write_text(dir / "history.csv", history_csv(st));
    write_text(dir / "report.json", rep.to_json());
    write_text(dir / "report.csv", rep.to_csv());
    if (tc.unsupervised) write_scored_pivots(dir / "induced_pivots.tsv", st.induced_pivots);
    log << "seed " << seed << ": H@1 " << rep.hits_at_1 << " H@10 " << rep.hits_at_10 << " MRR " << rep.mrr
        << " pivots " << st.ledger.permanent().size() << "\n";
    reports.push_back(rep);
  }
  const auto summary = summary_json(seeds, reports);
  write_text(opts.out / "summary.json", summary.dump(2) + "\n");
  print_summary(log, "mean over " + std::to_string(seeds.size()) + " seed(s):", summary);
  return 0;
}

int cmd_induce_pivots(const CliOptions& opts, std::ostream& log) {
  const KeyValueConfig cfg = resolve_config(opts);
  const AlignmentTask task = task_from_config(cfg);
  std::vector<PivotPair> gold = task.train_pivots;
  gold.insert(gold.end(), task.test_pivots.begin(), task.test_pivots.end());

  std::vector<std::size_t> counts = opts.pivots;
  if (counts.empty()) counts.push_back(0);
  std::vector<std::string> names{"precision.csv"};
  for (auto n : counts) names.push_back("pivots_" + std::to_string(n) + ".tsv");
  claim_outputs(opts.out, names);

  std::ostringstream table;
  table.precision(10);
  table << "requested,kept,precision,min_score\n";
  for (auto n : counts) {
    const auto pivots = visual_pivots(task, n, opts.pivot_threshold);
    write_scored_pivots(opts.out / ("pivots_" + std::to_string(n) + ".tsv"), pivots);
    const double precision = gold.empty() || pivots.empty() ? 0.0 : pivot_precision(pivots, gold);
    const double min_score = pivots.empty() ? 0.0 : pivots.back().score;
    table << n << "," << pivots.size() << "," << precision << "," << min_score << "\n";
    log << "requested " << n << ": kept " << pivots.size();
    if (!gold.empty()) log << ", precision " << precision;
    log << "\n";
  }
  write_text(opts.out / "precision.csv", table.str());
  return 0;
}

int cmd_evaluate(const CliOptions& opts, std::ostream& log) {
  if (opts.checkpoint.empty()) throw std::invalid_argument("evaluate needs --checkpoint DIR");
  const KeyValueConfig cfg = resolve_config(opts);
  const AlignmentTask task = task_from_config(cfg);
  const TrainConfig tc = train_config_from(cfg, opts);
  claim_outputs(opts.out, {"report.json", "report.csv"});
  const TrainState st = load_checkpoint(opts.checkpoint);
  const EvalReport rep = evaluate_model(st, task, tc, true);
  write_text(opts.out / "report.json", rep.to_json());
  write_text(opts.out / "report.csv", rep.to_csv());
  log << "H@1 " << rep.hits_at_1 << " H@10 " << rep.hits_at_10 << " MRR " << rep.mrr << " n " << rep.n_queries << "\n";
  return 0;
}

int cmd_ablate(const CliOptions& opts, std::ostream& log) {
  const KeyValueConfig cfg = resolve_config(opts);
  const AlignmentTask task = task_from_config(cfg);
  CliOptions base_opts = opts;
  base_opts.disable.clear();
  TrainConfig tc = train_config_from(cfg, base_opts);
  const auto seeds = seeds_or_default(opts, cfg);

  // Either the one setting named by --disable, or the full model plus every
  // single-modality removal.
  std::vector<std::vector<Modality>> settings;
  if (!opts.disable.empty()) {
    std::vector<Modality> d;
    for (const auto& name : opts.disable) d.push_back(parse_modality(name));
    settings.push_back(d);
  } else {
    settings.emplace_back();
    for (Modality m : active_modalities(task, tc)) settings.push_back({m});
  }

  std::vector<std::string> names{"ablation.csv", "ablation.json"};
  for (const auto& s : settings) names.push_back(disabled_label(s));
  claim_outputs(opts.out, names);

  std::ostringstream table;
  table.precision(10);
  table << "setting,h1_mean,h1_var,h10_mean,h10_var,mrr_mean,mrr_var\n";
  nlohmann::ordered_json all;
  for (const auto& disabled : settings) {
    const std::string label = disabled_label(disabled);
    std::vector<EvalReport> reports;
    for (auto seed : seeds) {
      tc.rng_seed = seed;
      const EvalReport rep = ablate(task, tc, disabled);
      const fs::path dir = opts.out / label / seed_dir(seed);
      fs::create_directories(dir);
      write_text(dir / "report.json", rep.to_json());
      write_text(dir / "report.csv", rep.to_csv());
      reports.push_back(rep);
    }
    const auto summary = summary_json(seeds, reports);
    print_summary(log, label + ":", summary);
    table << label << "," << summary["h1"]["mean"].get<double>() << "," << summary["h1"]["variance"].get<double>() << ","
          << summary["h10"]["mean"].get<double>() << "," << summary["h10"]["variance"].get<double>() << ","
          << summary["mrr"]["mean"].get<double>() << "," << summary["mrr"]["variance"].get<double>() << "\n";
    all[label] = summary;
  }
  write_text(opts.out / "ablation.csv", table.str());
  write_text(opts.out / "ablation.json", all.dump(2) + "\n");
  return 0;
}

int cmd_synth(const CliOptions& opts, std::ostream& log) {
  KeyValueConfig cfg = resolve_config(opts);
  if (!opts.seeds.empty()) cfg.set("seed", std::to_string(opts.seeds.front()));
  const SynthConfig sc = SynthConfig::from_config(cfg);
  claim_outputs(opts.out, {"task.cfg", "gold_pivots.tsv", "train.cfg"});
  const SynthTask st = generate_synthetic_task(sc);
  save_task(st.task, opts.out);
  write_pivots(opts.out / "gold_pivots.tsv", st.gold);
  write_text(opts.out / "train.cfg",
             "# desk-scale training setup for this task\n"
             "task = task.cfg\n"
             "gcn_dims = 32,32,16\n"
             "image_out = 16\n"
             "relation_out = 16\n"
             "attribute_out = 16\n"
             "surface_out = 16\n"
             "base_epochs = 500\n"
             "il_epochs = 500\n");
  log << "wrote " << sc.entities << "+" << sc.entities << " entities, " << st.task.source.triples.size() << "/"
      << st.task.target.triples.size() << " triples, " << st.task.train_pivots.size() << " train / "
      << st.task.test_pivots.size() << " test pivots to " << opts.out.string() << "\n";
  return 0;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"multi-modal entity alignment"};
  app.require_subcommand(1);
  CliOptions opts;
  std::string seeds;
  std::string pivots;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "key=value config file");
    sub->add_option("--out", opts.out, "output directory")->required();
    sub->add_option("--set", opts.overrides, "override a config key (key=value), repeatable");
  };
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--seeds", seeds, "comma-separated training seeds");
    sub->add_option("--disable", opts.disable, "leave a modality out, repeatable");
    sub->add_flag("--unsupervised", opts.unsupervised, "seed from visual pivots instead of training pivots");
    auto* p = sub->add_option("--pivots", pivots, "number of visual pivots to induce");
    auto* t = sub->add_option("--pivot-threshold", opts.pivot_threshold, "minimum visual pivot similarity");
    p->excludes(t);
    sub->add_option("--csls-k", opts.csls_k, "CSLS neighbourhood size");
    sub->add_flag("--no-csls", opts.no_csls, "rank by plain cosine");
    sub->add_flag("--no-il", opts.no_il, "skip iterative learning");
  };

  auto* train_cmd = app.add_subcommand("train", "train and evaluate, one run per seed");
  add_common(train_cmd);
  add_training(train_cmd);

  auto* pivots_cmd = app.add_subcommand("induce-pivots", "visual pivot induction and its precision");
  add_common(pivots_cmd);
  {
    auto* p = pivots_cmd->add_option("--pivots", pivots, "pivot counts, comma-separated");
    auto* t = pivots_cmd->add_option("--pivot-threshold", opts.pivot_threshold, "minimum visual pivot similarity");
    p->excludes(t);
  }

  auto* eval_cmd = app.add_subcommand("evaluate", "score a saved checkpoint");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", opts.checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("--csls-k", opts.csls_k, "CSLS neighbourhood size");
  eval_cmd->add_flag("--no-csls", opts.no_csls, "rank by plain cosine");

  auto* ablate_cmd = app.add_subcommand("ablate", "leave modalities out and compare");
  add_common(ablate_cmd);
  add_training(ablate_cmd);

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic alignment task");
  add_common(synth_cmd);
  std::uint64_t synth_seed = 0;
  std::optional<double> noise, image_noise, edge_dropout, image_coverage;
  std::optional<std::size_t> entities, triples;
  bool surface = false;
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--noise", noise, "feature noise std for every modality");
  synth_cmd->add_option("--image-noise", image_noise, "image feature noise std");
  synth_cmd->add_option("--edge-dropout", edge_dropout, "fraction of source triples missing from the target");
  synth_cmd->add_option("--image-coverage", image_coverage, "fraction of entities with an observed image");
  synth_cmd->add_option("--entities", entities, "entities per graph");
  synth_cmd->add_option("--triples", triples, "source triples");
  synth_cmd->add_flag("--surface", surface, "also write surface-form features");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (!seeds.empty()) {
      for (long long s : parse_int_list(seeds)) {
        if (s < 0) throw std::invalid_argument("--seeds must be non-negative");
        opts.seeds.push_back(static_cast<std::uint64_t>(s));
      }
    }
    if (!pivots.empty()) {
      for (long long n : parse_int_list(pivots)) {
        if (n < 0) throw std::invalid_argument("--pivots must be non-negative");
        opts.pivots.push_back(static_cast<std::size_t>(n));
      }
    }
    if (*train_cmd) return cmd_train(opts, std::cout);
    if (*pivots_cmd) return cmd_induce_pivots(opts, std::cout);
    if (*eval_cmd) return cmd_evaluate(opts, std::cout);
    if (*ablate_cmd) return cmd_ablate(opts, std::cout);
    if (*synth_cmd) {
      auto put = [&](const char* key, auto value) {
        if (value) opts.overrides.push_back(std::string(key) + "=" + std::to_string(*value));
      };
      if (synth_cmd->count("--seed")) opts.overrides.push_back("seed=" + std::to_string(synth_seed));
      put("noise", noise);
      put("image_noise", image_noise);
      put("edge_dropout", edge_dropout);
      put("image_coverage", image_coverage);
      put("entities", entities);
      put("triples", triples);
      if (surface) opts.overrides.push_back("surface=true");
      return cmd_synth(opts, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace mmea
