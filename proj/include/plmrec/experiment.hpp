#pragma once

// Config-driven experiment runner: ingest -> features -> train -> evaluate
// for each seed, then aggregation into mean (std) tables. Also the plot-data
// emitters for histograms, loss curves and embedding scatters.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "plmrec/embed_store.hpp"
#include "plmrec/error.hpp"
#include "plmrec/eval.hpp"
#include "plmrec/featlab.hpp"
#include "plmrec/ingest.hpp"
#include "plmrec/mf.hpp"
#include "plmrec/synthetic.hpp"
#include "plmrec/trees.hpp"

namespace plmrec::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

enum class Recommender { mf_implicit, mf_explicit, mf_explicit_biased, gbt, forest };

inline Recommender recommender_from_string(std::string_view s) {
  if (s == "mf_implicit") return Recommender::mf_implicit;
  if (s == "mf_explicit") return Recommender::mf_explicit;
  if (s == "mf_explicit_biased") return Recommender::mf_explicit_biased;
  if (s == "gbt") return Recommender::gbt;
  if (s == "forest") return Recommender::forest;
  fail(ErrorKind::config, "unknown recommender '" + std::string(s) + "'");
}

inline bool is_mf(Recommender r) {
  return r == Recommender::mf_implicit || r == Recommender::mf_explicit ||
         r == Recommender::mf_explicit_biased;
}

struct ExperimentConfig {
  // dataset: exactly one of these
  std::optional<std::string> transactions_path;
  std::optional<synthetic::Params> synthetic;
  ingest::Schema schema;

  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double test_fraction = 0.2;
  std::size_t n_bins = 5;

  Recommender recommender = Recommender::mf_implicit;
  std::string recommender_name = "mf_implicit";
  mf::MfConfig mf;
  trees::TreeConfig trees;

  std::vector<std::string> recipe = {"user_id", "stock_code", "unit_price"};
  std::optional<double> rf_filter;  // drop features below this forest importance
  std::size_t pca_k = 10;
  std::size_t clusters = 12;
  bool cluster_on_pca = true;
  std::uint64_t cluster_seed = 0;

  // embeddings: a file, or synthesized from item descriptions
  std::optional<std::string> embeddings_path;
  bool synthesize_embeddings = false;
  std::size_t synth_dim = 768;
  std::uint64_t synth_seed = 0;

  std::optional<mf::Fusion> fusion;
  double beta = 0.7;
  std::optional<double> gamma;
  featlab::SimilarityAggregate aggregate = featlab::SimilarityAggregate::mean;

  std::size_t eval_k = 5;
  std::string output_dir;

  json canonical;  // the parsed document, minus output_dir; hashed for provenance

  bool needs_embeddings() const {
    if (is_mf(recommender)) return fusion.has_value();
    return std::any_of(recipe.begin(), recipe.end(), [](const std::string& f) {
      return f == "embed_2d" || f == "embed_10d" || f == "cluster_label";
    });
  }
  bool needs_clusters() const {
    if (is_mf(recommender)) return fusion == mf::Fusion::cluster_boost;
    return std::find(recipe.begin(), recipe.end(), "cluster_label") != recipe.end();
  }
};

inline std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.canonical.dump())));
  return buf;
}

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::config, where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) fail(ErrorKind::config, "unknown key '" + k + "' in " + where);
}

}  // namespace detail

// Parses the JSON config document. Unknown keys are rejected.
inline ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  try {
    detail::check_keys(doc,
                       {"dataset", "seeds", "test_fraction", "n_bins", "recommender", "features",
                        "embeddings", "fusion", "eval_k", "output_dir"},
                       "config");
    const auto& ds = doc.at("dataset");
    detail::check_keys(ds, {"transactions", "synthetic", "schema"}, "dataset");
    if (ds.contains("transactions") == ds.contains("synthetic"))
      fail(ErrorKind::config, "dataset needs exactly one of 'transactions' or 'synthetic'");
    if (ds.contains("transactions")) c.transactions_path = ds.at("transactions").get<std::string>();
    if (ds.contains("synthetic")) c.synthetic = synthetic::params_from_json(ds.at("synthetic"));
    if (ds.contains("schema")) {
      const auto& s = ds.at("schema");
      c.schema.invoice = s.value("invoice", c.schema.invoice);
      c.schema.stock_code = s.value("stock_code", c.schema.stock_code);
      c.schema.description = s.value("description", c.schema.description);
      c.schema.quantity = s.value("quantity", c.schema.quantity);
      c.schema.date = s.value("date", c.schema.date);
      c.schema.unit_price = s.value("unit_price", c.schema.unit_price);
      c.schema.customer = s.value("customer", c.schema.customer);
      c.schema.country = s.value("country", c.schema.country);
    }
    c.seeds = doc.value("seeds", c.seeds);
    if (c.seeds.empty()) fail(ErrorKind::config, "seeds must be nonempty");
    c.test_fraction = doc.value("test_fraction", c.test_fraction);
    c.n_bins = doc.value("n_bins", c.n_bins);
    c.eval_k = doc.value("eval_k", c.eval_k);
    if (c.eval_k < 1) fail(ErrorKind::config, "eval_k must be >= 1");

    if (doc.contains("recommender")) {
      const auto& r = doc.at("recommender");
      detail::check_keys(r,
                         {"kind", "factors", "learning_rate", "regularization", "iterations", "alpha",
                          "sampled_zeros", "n_trees", "forest_max_depth", "features_per_split",
                          "bootstrap", "rounds", "max_depth", "min_child_weight", "lambda_l2"},
                         "recommender");
      c.recommender_name = r.value("kind", c.recommender_name);
      c.recommender = recommender_from_string(c.recommender_name);
      c.mf.factors = r.value("factors", c.mf.factors);
      c.mf.regularization = r.value("regularization", c.mf.regularization);
      c.mf.alpha = r.value("alpha", c.mf.alpha);
      c.mf.sampled_zeros = r.value("sampled_zeros", c.mf.sampled_zeros);
      if (r.contains("iterations")) c.mf.iterations = r.at("iterations").get<std::size_t>();
      if (r.contains("learning_rate")) {
        c.mf.learning_rate = r.at("learning_rate").get<double>();
        c.trees.learning_rate = c.mf.learning_rate;
      }
      c.trees.n_trees = r.value("n_trees", c.trees.n_trees);
      if (r.contains("forest_max_depth")) c.trees.forest_max_depth = r.at("forest_max_depth").get<std::size_t>();
      if (r.contains("features_per_split"))
        c.trees.features_per_split = r.at("features_per_split").get<std::size_t>();
      c.trees.bootstrap = r.value("bootstrap", c.trees.bootstrap);
      c.trees.rounds = r.value("rounds", c.trees.rounds);
      c.trees.max_depth = r.value("max_depth", c.trees.max_depth);
      c.trees.min_child_weight = r.value("min_child_weight", c.trees.min_child_weight);
      c.trees.lambda_l2 = r.value("lambda_l2", c.trees.lambda_l2);
      c.mf.validate();
      c.trees.validate();
    }
    if (doc.contains("features")) {
      const auto& f = doc.at("features");
      detail::check_keys(f, {"recipe", "rf_filter", "pca_k", "clusters", "cluster_space", "cluster_seed"},
                         "features");
      c.recipe = f.value("recipe", c.recipe);
      if (f.contains("rf_filter") && !f.at("rf_filter").is_null())
        c.rf_filter = f.at("rf_filter").get<double>();
      c.pca_k = f.value("pca_k", c.pca_k);
      c.clusters = f.value("clusters", c.clusters);
      const auto space = f.value("cluster_space", std::string("pca"));
      if (space != "pca" && space != "full") fail(ErrorKind::config, "cluster_space must be 'pca' or 'full'");
      c.cluster_on_pca = space == "pca";
      c.cluster_seed = f.value("cluster_seed", c.cluster_seed);
    }
    if (doc.contains("embeddings")) {
      const auto& e = doc.at("embeddings");
      detail::check_keys(e, {"file", "synthesize"}, "embeddings");
      if (e.contains("file")) c.embeddings_path = e.at("file").get<std::string>();
      if (e.contains("synthesize")) {
        const auto& s = e.at("synthesize");
        detail::check_keys(s, {"dim", "seed"}, "embeddings.synthesize");
        c.synthesize_embeddings = true;
        c.synth_dim = s.value("dim", c.synth_dim);
        c.synth_seed = s.value("seed", c.synth_seed);
      }
      if (c.embeddings_path && c.synthesize_embeddings)
        fail(ErrorKind::config, "embeddings: give either 'file' or 'synthesize'");
    }
    if (doc.contains("fusion") && !doc.at("fusion").is_null()) {
      const auto& f = doc.at("fusion");
      detail::check_keys(f, {"strategy", "beta", "gamma", "aggregate"}, "fusion");
      const auto s = f.value("strategy", std::string("none"));
      if (s != "none") c.fusion = mf::fusion_from_string(s);
      c.beta = f.value("beta", c.beta);
      if (f.contains("gamma") && !f.at("gamma").is_null()) c.gamma = f.at("gamma").get<double>();
      const auto agg = f.value("aggregate", std::string("mean"));
      if (agg != "mean" && agg != "max") fail(ErrorKind::config, "aggregate must be 'mean' or 'max'");
      c.aggregate = agg == "mean" ? featlab::SimilarityAggregate::mean : featlab::SimilarityAggregate::max;
    }
    c.output_dir = doc.value("output_dir", std::string());
  } catch (const json::exception& e) {
    fail(ErrorKind::config, e.what());
  }
  if (c.needs_embeddings() && !c.embeddings_path && !c.synthesize_embeddings && is_mf(c.recommender))
    fail(ErrorKind::config, "fusion needs an embeddings 'file' or 'synthesize' directive");
  c.canonical = doc;
  c.canonical.erase("output_dir");
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

// Mirrors a CLI override into the canonical document so it enters the hash.
inline void override_seeds(ExperimentConfig& c, std::vector<std::uint64_t> seeds) {
  if (seeds.empty()) fail(ErrorKind::config, "seeds must be nonempty");
  c.seeds = std::move(seeds);
  c.canonical["seeds"] = c.seeds;
}

inline void override_embeddings(ExperimentConfig& c, const std::string& path) {
  c.embeddings_path = path;
  c.synthesize_embeddings = false;
  c.canonical["embeddings"] = {{"file", path}};
}

// ---------------------------------------------------------------------------

struct IngestSummary {
  std::size_t raw_rows = 0;
  std::size_t parse_errors = 0;
  std::size_t clean_rows = 0;
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double sparsity = 0.0;
};

inline json to_json(const IngestSummary& s) {
  return {{"raw_rows", s.raw_rows},       {"parse_errors", s.parse_errors},
          {"clean_rows", s.clean_rows},   {"users", s.users},
          {"items", s.items},             {"interactions", s.interactions},
          {"sparsity", s.sparsity}};
}

struct Loaded {
  ingest::CleanDataset ds;
  ingest::InteractionMatrix strengths;
  IngestSummary summary;
};

inline Loaded ingest_dataset(const ExperimentConfig& cfg) {
  Loaded out;
  std::vector<ingest::Transaction> rows;
  if (cfg.transactions_path) {
    std::ifstream in(*cfg.transactions_path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + *cfg.transactions_path + "'");
    auto parsed = ingest::parse_transactions(in, cfg.schema);
    out.summary.raw_rows = parsed.data_rows;
    out.summary.parse_errors = parsed.error_count();
    rows = std::move(parsed.rows);
  } else {
    rows = synthetic::generate(*cfg.synthetic).rows;
    out.summary.raw_rows = rows.size();
  }
  out.ds = ingest::clean(rows);
  out.strengths = ingest::build_matrix(out.ds, std::nullopt, ingest::MatrixMode::purchase_strength);
  out.summary.clean_rows = out.ds.rows.size();
  out.summary.users = out.ds.n_users;
  out.summary.items = out.ds.n_items;
  out.summary.interactions = out.strengths.nnz();
  out.summary.sparsity = out.strengths.sparsity();
  return out;
}

inline embed::EmbeddingTable load_embedding_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open embeddings '" + path.string() + "'");
  if (path.extension() == ".tsv") return embed::load_embeddings_tsv(in);
  return embed::load_embeddings(in);
}

struct ExperimentResult {
  std::string config_hash;
  json ingest;
  std::vector<json> per_seed;
  eval::TrialSummary summary;
  json summary_json;
  std::string table;
};

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) fail(ErrorKind::io, "cannot write '" + p.string() + "'");
}

inline void save_matrix_files(const ingest::InteractionMatrix& m, const fs::path& dir, const std::string& stem) {
  std::ofstream h(dir / (stem + ".json"), std::ios::binary), e(dir / (stem + ".csv"), std::ios::binary);
  ingest::save_matrix(m, h, e);
}

inline std::set<std::uint32_t> items_of(const std::vector<std::pair<std::uint32_t, double>>& row) {
  std::set<std::uint32_t> s;
  for (const auto& [i, v] : row) s.insert(i);
  return s;
}

}  // namespace detail

// Ranking evaluation of an MF model: every user with held-out items gets a
// top-k list excluding their training items.
inline eval::RankingReport evaluate_ranking(const mf::FactorModel& model,
                                            const ingest::InteractionMatrix& train,
                                            const ingest::InteractionMatrix& test, std::size_t k,
                                            const embed::EmbeddingTable* table = nullptr,
                                            std::optional<mf::Fusion> fusion = std::nullopt,
                                            const mf::HybridParams& params = {}) {
  const auto train_rows = train.by_user();
  const auto test_rows = test.by_user();
  std::map<std::size_t, std::vector<std::uint32_t>> recs;
  std::map<std::size_t, std::set<std::uint32_t>> relevant;
  for (std::size_t u = 0; u < test_rows.size(); ++u) {
    if (test_rows[u].empty()) continue;
    const auto exclude = detail::items_of(train_rows[u]);
    std::vector<mf::Scored> list;
    if (fusion && !exclude.empty()) {
      const std::vector<std::uint32_t> history(exclude.begin(), exclude.end());
      list = mf::hybrid_rerank(model, *table, train.item_keys, *fusion, params, u, history, k, exclude);
    } else {
      list = mf::recommend(model, u, k, exclude);
    }
    auto& r = recs[u];
    for (const auto& s : list) r.push_back(s.item);
    relevant[u] = detail::items_of(test_rows[u]);
  }
  return eval::ranking_report(recs, relevant, k);
}

// Runs the configured pipeline for every seed. When cfg.output_dir is set,
// writes per-seed reports and artifacts, summary.json, table.txt and
// run_info.json (the only file carrying timestamps).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult result;
  result.config_hash = config_hash(cfg);
  const bool write = !cfg.output_dir.empty();
  const fs::path out_dir = cfg.output_dir;
  const auto started = std::chrono::system_clock::now();
  if (write) {
    fs::create_directories(out_dir);
    detail::write_text(out_dir / "stale.json",
                       json{{"config_hash", result.config_hash}, {"status", "running"}}.dump(2) + "\n");
  }

  std::string stage;
  auto run_stage = [&](const std::string& name, const std::function<void()>& body) {
    stage = name;
    try {
      body();
    } catch (const Error& e) {
      throw StageError(name, result.config_hash, e.kind(), e.what());
    } catch (const std::exception& e) {
      throw StageError(name, result.config_hash, ErrorKind::io, e.what());
    }
  };

  try {
    Loaded data;
    run_stage("ingest", [&] { data = ingest_dataset(cfg); });
    result.ingest = to_json(data.summary);

    std::optional<embed::EmbeddingTable> table;
    std::optional<featlab::PcaModel> pca;
    std::optional<featlab::ClusterAssignment> clusters;
    if (cfg.needs_embeddings()) {
      run_stage("embeddings", [&] {
        if (cfg.embeddings_path) {
          table = load_embedding_file(*cfg.embeddings_path);
        } else if (cfg.synthesize_embeddings) {
          table = embed::synthesize_embeddings(data.ds.item_descriptions, cfg.synth_dim, cfg.synth_seed);
        } else {
          fail(ErrorKind::config, "recipe needs embeddings but none are configured");
        }
      });
    }
    run_stage("featlab", [&] {
      if (!is_mf(cfg.recommender)) {
        const auto& known = featlab::known_features();
        for (const auto& f : cfg.recipe)
          if (std::find(known.begin(), known.end(), f) == known.end())
            fail(ErrorKind::recipe, "unknown feature '" + f + "'");
      }
      if (!table) return;
      const auto k = std::min({cfg.pca_k, table->dim(), table->size() - 1});
      pca = featlab::pca_fit(*table, k);
      if (cfg.needs_clusters()) {
        std::map<std::string, std::vector<double>> points;
        if (cfg.cluster_on_pca) {
          points = featlab::project_table(*pca, *table);
        } else {
          for (const auto& [key, v] : table->rows()) points.emplace(key, std::vector<double>(v.begin(), v.end()));
        }
        std::set<std::vector<double>> distinct;
        for (const auto& [key, v] : points) distinct.insert(v);
        clusters = featlab::kmeans(points, std::min(cfg.clusters, distinct.size()), cfg.cluster_seed);
      }
    });

    std::vector<eval::MetricBundle> bundles;
    for (const auto seed : cfg.seeds) {
      json report;
      report["config_hash"] = result.config_hash;
      report["seed"] = seed;
      report["recommender"] = cfg.recommender_name;
      ingest::InteractionMatrix train_s, test_s, train_l, test_l;
      run_stage("split", [&] {
        std::tie(train_s, test_s) = ingest::split(data.strengths, cfg.test_fraction, seed);
        const auto bins = ingest::fit_bins(ingest::strengths_of(train_s), cfg.n_bins);
        train_l = ingest::label_matrix(train_s, bins);
        test_l = ingest::label_matrix(test_s, bins);
        report["bins"] = bins.boundaries;
        report["train_nnz"] = train_s.nnz();
        report["test_nnz"] = test_s.nnz();
      });
      const fs::path seed_dir = out_dir / ("seed_" + std::to_string(seed));
      if (write) fs::create_directories(seed_dir);

      eval::MetricBundle bundle;
      if (is_mf(cfg.recommender)) {
        mf::Fitted fitted;
        run_stage("train", [&] {
          auto mcfg = cfg.mf;
          mcfg.seed = seed;
          if (cfg.recommender == Recommender::mf_implicit) fitted = mf::fit_implicit(train_s, mcfg);
          else fitted = mf::fit_explicit(train_l, mcfg, cfg.recommender == Recommender::mf_explicit_biased);
          report["loss"] = fitted.loss;
          if (write) {
            std::ofstream bin(seed_dir / "model.fmdl", std::ios::binary);
            mf::save_model(fitted.model, bin);
            detail::write_text(seed_dir / "model.json", mf::model_metadata(fitted.model, mcfg, fitted.loss).dump(2) + "\n");
          }
        });
        run_stage("evaluate", [&] {
          mf::HybridParams hp;
          hp.beta = cfg.beta;
          hp.gamma = cfg.gamma;
          hp.aggregate = cfg.aggregate;
          hp.clusters = clusters ? &*clusters : nullptr;
          const auto r = evaluate_ranking(fitted.model, cfg.recommender == Recommender::mf_implicit ? train_s : train_l,
                                          test_s, cfg.eval_k, table ? &*table : nullptr, cfg.fusion, hp);
          report["ranking"] = eval::to_json(r);
          report["fusion"] = cfg.fusion ? mf::to_string(*cfg.fusion) : "none";
          bundle = eval::to_bundle(r);
        });
      } else {
        featlab::FeatureFrame train_f, test_f;
        run_stage("featlab", [&] {
          const auto* t = table ? &*table : nullptr;
          const auto* p = pca ? &*pca : nullptr;
          const auto* c = clusters ? &*clusters : nullptr;
          train_f = featlab::assemble_features(train_l, data.ds, t, p, c, cfg.recipe);
          test_f = featlab::assemble_features(test_l, data.ds, t, p, c, cfg.recipe);
        });
        run_stage("train", [&] {
          auto tcfg = cfg.trees;
          tcfg.seed = seed;
          if (cfg.rf_filter) {
            const auto forest = trees::fit_forest(train_f, tcfg);
            const auto keep = trees::select_features(forest, train_f.feature_names, *cfg.rf_filter);
            report["importances"] = json::object();
            for (std::size_t i = 0; i < train_f.cols(); ++i)
              report["importances"][train_f.feature_names[i]] = forest.feature_importances[i];
            report["selected_features"] = keep;
            train_f = train_f.select(keep);
            test_f = test_f.select(keep);
          }
          const auto model = cfg.recommender == Recommender::gbt ? trees::fit_gbt(train_f, tcfg)
                                                                 : trees::fit_forest(train_f, tcfg);
          report["features"] = train_f.feature_names;
          if (!model.train_loss.empty()) report["loss"] = model.train_loss;
          const auto pred = trees::predict_labels(model, test_f);
          const auto cr = eval::classification_report(pred, test_f.labels, test_f.n_classes);
          report["classification"] = eval::to_json(cr);
          bundle = eval::to_bundle(cr);
          if (write) {
            detail::write_text(seed_dir / "model.json", trees::to_json(model).dump() + "\n");
            std::ofstream bin(seed_dir / "model.tens", std::ios::binary);
            trees::save_ensemble(model, bin);
          }
        });
      }
      report["metrics"] = bundle;
      bundles.push_back(bundle);
      if (write) {
        run_stage("write", [&] {
          detail::save_matrix_files(train_s, seed_dir, "train");
          detail::save_matrix_files(test_s, seed_dir, "test");
          detail::write_text(seed_dir / "report.json", report.dump(2) + "\n");
        });
      }
      result.per_seed.push_back(std::move(report));
    }

    run_stage("aggregate", [&] {
      result.summary = eval::aggregate_trials(bundles);
      const std::string label = cfg.recommender_name + (cfg.fusion ? "+" + mf::to_string(*cfg.fusion) : "");
      result.table = eval::format_table({{label, result.summary}});
      result.summary_json = eval::to_json(result.summary);
      result.summary_json["config_hash"] = result.config_hash;
      result.summary_json["label"] = label;
      result.summary_json["seeds"] = cfg.seeds;
      result.summary_json["ingest"] = result.ingest;
      json cells = json::object();
      for (const auto& [k, m] : result.summary.metrics) cells[k] = eval::format_cell(m);
      result.summary_json["cells"] = cells;
      if (write) {
        detail::write_text(out_dir / "summary.json", result.summary_json.dump(2) + "\n");
        detail::write_text(out_dir / "table.txt", result.table);
        const auto finished = std::chrono::system_clock::now();
        const json info = {
            {"config_hash", result.config_hash},
            {"started_unix", std::chrono::duration_cast<std::chrono::seconds>(started.time_since_epoch()).count()},
            {"elapsed_ms", std::chrono::duration_cast<std::chrono::milliseconds>(finished - started).count()}};
        detail::write_text(out_dir / "run_info.json", info.dump(2) + "\n");
        fs::remove(out_dir / "stale.json");
      }
    });
  } catch (const StageError& e) {
    if (write) {
      std::error_code ec;
      std::ofstream(out_dir / "stale.json")
          << json{{"config_hash", result.config_hash}, {"status", "failed"}, {"stage", e.stage()}, {"error", e.what()}}
                 .dump(2)
          << "\n";
    }
    throw;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Plot data

struct HistBin {
  double lo = 0, hi = 0;
  std::size_t count = 0;
};

// Histogram over log10-spaced bins, `per_decade` bins per decade, covering
// the positive values.
inline std::vector<HistBin> log_histogram(const std::vector<double>& values, int per_decade = 4) {
  std::vector<double> pos;
  for (double v : values)
    if (v > 0 && std::isfinite(v)) pos.push_back(v);
  if (pos.empty()) fail(ErrorKind::precondition, "histogram needs positive values");
  const auto [mn, mx] = std::minmax_element(pos.begin(), pos.end());
  const int lo = int(std::floor(std::log10(*mn) * per_decade));
  const int hi = int(std::floor(std::log10(*mx) * per_decade));
  std::vector<HistBin> bins;
  for (int b = lo; b <= hi; ++b)
    bins.push_back({std::pow(10.0, double(b) / per_decade), std::pow(10.0, double(b + 1) / per_decade), 0});
  for (double v : pos) {
    auto b = std::size_t(int(std::floor(std::log10(v) * per_decade)) - lo);
    b = std::min(b, bins.size() - 1);
    ++bins[b].count;
  }
  return bins;
}

inline void write_histogram_csv(const std::vector<HistBin>& bins, std::ostream& out) {
  out << "bin_lo,bin_hi,count\n";
  for (const auto& b : bins)
    out << ingest::format_double(b.lo) << ',' << ingest::format_double(b.hi) << ',' << b.count << '\n';
}

inline std::vector<std::size_t> rating_histogram(const ingest::InteractionMatrix& labeled) {
  if (labeled.mode != ingest::MatrixMode::rating_label || !labeled.bins)
    fail(ErrorKind::precondition, "rating histogram needs a labeled matrix");
  std::vector<std::size_t> counts(labeled.bins->n_bins, 0);
  for (const auto& e : labeled.entries) ++counts[std::size_t(e.value)];
  return counts;
}

// Reads a (batch, loss) log; non-numeric lines such as a header are skipped.
inline std::vector<std::pair<long long, double>> read_loss_log(std::istream& in) {
  std::vector<std::pair<long long, double>> out;
  csv::Reader reader(in);
  while (auto rec = reader.next()) {
    if (rec->fields.size() < 2) fail(ErrorKind::format, "loss log line " + std::to_string(rec->line));
    auto b = ingest::detail::parse_int(rec->fields[0]);
    auto l = ingest::detail::parse_double(rec->fields[1]);
    if (!b || !l) {
      if (out.empty() && rec->line == 1) continue;  // header
      fail(ErrorKind::format, "bad loss log line " + std::to_string(rec->line));
    }
    out.emplace_back(*b, *l);
  }
  if (out.empty()) fail(ErrorKind::precondition, "empty loss log");
  return out;
}

struct ScatterPoint {
  std::string key;
  double x = 0, y = 0;
  std::string role;  // recommended | ground_truth | other
};

// PCA-2d coordinates of every item. Recommended and ground-truth items are
// emitted once per role (an item in both lists appears twice); all other
// items are background rows.
inline std::vector<ScatterPoint> embedding_scatter(const embed::EmbeddingTable& table,
                                                   const featlab::PcaModel& pca,
                                                   const std::vector<std::string>& recommended,
                                                   const std::vector<std::string>& truth) {
  if (pca.k() < 2) fail(ErrorKind::precondition, "scatter needs a PCA model with k >= 2");
  auto point = [&](const std::string& key, const char* role) {
    const auto z = featlab::pca_transform(pca, table.at(key));
    return ScatterPoint{key, z[0], z[1], role};
  };
  std::vector<ScatterPoint> out;
  std::set<std::string> labeled;
  for (const auto& k : recommended) {
    out.push_back(point(k, "recommended"));
    labeled.insert(k);
  }
  for (const auto& k : truth) {
    out.push_back(point(k, "ground_truth"));
    labeled.insert(k);
  }
  for (const auto& [key, v] : table.rows())
    if (!labeled.contains(key)) out.push_back(point(key, "other"));
  return out;
}

inline void write_scatter_csv(const std::vector<ScatterPoint>& pts, std::ostream& out) {
  out << "key,x,y,role\n";
  for (const auto& p : pts)
    out << csv::quote(p.key) << ',' << ingest::format_double(p.x) << ',' << ingest::format_double(p.y) << ','
        << p.role << '\n';
}

}  // namespace plmrec::experiment
