// plmrec: command-line front end for the recommender workbench.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "plmrec/corpus.hpp"
#include "plmrec/embed_store.hpp"
#include "plmrec/eval.hpp"
#include "plmrec/experiment.hpp"
#include "plmrec/featlab.hpp"
#include "plmrec/ingest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace plmrec;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

ingest::CleanDataset load_clean(const std::string& csv_path, ingest::ParseResult* parsed_out = nullptr) {
  auto in = open_in(csv_path);
  auto parsed = ingest::parse_transactions(in);
  auto ds = ingest::clean(parsed.rows);
  if (parsed_out) *parsed_out = std::move(parsed);
  return ds;
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(list);
  for (std::string tok; std::getline(ss, tok, ',');) {
    const auto v = ingest::detail::parse_int(tok);
    if (!v || *v < 0) fail(ErrorKind::config, "bad seed '" + tok + "'");
    seeds.push_back(std::uint64_t(*v));
  }
  return seeds;
}

std::vector<std::string> split_keys(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty()) out.push_back(tok);
  return out;
}

embed::EmbeddingTable load_table(const std::string& path) { return experiment::load_embedding_file(path); }

std::vector<std::pair<std::string, eval::TrialSummary>> summaries_from_reports(const fs::path& run) {
  std::vector<eval::MetricBundle> bundles;
  std::vector<std::pair<std::uint64_t, fs::path>> reports;
  for (const auto& entry : fs::directory_iterator(run)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("seed_", 0) == 0 && fs::exists(entry.path() / "report.json"))
      reports.emplace_back(std::stoull(name.substr(5)), entry.path() / "report.json");
  }
  if (reports.empty()) fail(ErrorKind::evaluation, "no per-seed reports under '" + run.string() + "'");
  std::sort(reports.begin(), reports.end());
  std::string label;
  for (const auto& [seed, path] : reports) {
    auto in = open_in(path.string());
    const auto j = json::parse(in);
    bundles.push_back(j.at("metrics").get<eval::MetricBundle>());
    label = j.at("recommender").get<std::string>();
    if (j.contains("fusion") && j.at("fusion") != "none") label += "+" + j.at("fusion").get<std::string>();
  }
  return {{label, eval::aggregate_trials(bundles)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plmrec: recommender workbench (ingest, features, MF, trees, evaluation)"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse and clean a transaction CSV, build the interaction matrix");
  std::string ingest_input, ingest_out;
  std::size_t ingest_bins = 5;
  std::string ingest_mode = "rating_label";
  ingest_cmd->add_option("--input", ingest_input, "Transaction CSV (Online Retail layout)")->required();
  ingest_cmd->add_option("--out", ingest_out, "Directory for matrix.json / matrix.csv (omit to print stats only)");
  ingest_cmd->add_option("--bins", ingest_bins, "Number of rating labels")->capture_default_str();
  ingest_cmd->add_option("--mode", ingest_mode, "rating_label or purchase_strength")->capture_default_str();

  // analyze-corpus
  auto* corpus_cmd = app.add_subcommand("analyze-corpus", "Vocabulary profiles and top-n overlap between corpora");
  std::vector<std::string> corpus_specs;
  std::string stopword_file, corpus_out;
  std::size_t top_n = 150, min_len = 2, char_limit = 0;
  corpus_cmd->add_option("--corpus", corpus_specs, "name=path, one description per line (repeatable)")->required();
  corpus_cmd->add_option("--stopwords", stopword_file, "Stop-word file, one per line (default: built-in English list)");
  corpus_cmd->add_option("--top-n", top_n, "Profile size")->capture_default_str();
  corpus_cmd->add_option("--min-length", min_len, "Minimum token length in code points")->capture_default_str();
  corpus_cmd->add_option("--char-limit", char_limit, "Truncate lines to this many characters (0 = off)")
      ->capture_default_str();
  corpus_cmd->add_option("--out", corpus_out, "Output directory for profiles.json, overlap.csv, top_<name>.csv");

  // embed-synth
  auto* synth_cmd = app.add_subcommand("embed-synth", "Deterministic bag-of-words item embeddings from descriptions");
  std::string synth_input, synth_out;
  std::size_t synth_dim = 768;
  std::uint64_t synth_seed = 0;
  synth_cmd->add_option("--input", synth_input, "Transaction CSV")->required();
  synth_cmd->add_option("--out", synth_out, "Output file (.embt, or .tsv for the debug format)")->required();
  synth_cmd->add_option("--dim", synth_dim, "Embedding dimension")->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed, "Hash seed")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Run a config-driven experiment over seeds");
  std::string train_config, train_out, train_seeds, train_embeddings;
  train_cmd->add_option("--config", train_config, "Experiment config JSON")->required();
  train_cmd->add_option("--out", train_out, "Output directory (overrides output_dir)");
  train_cmd->add_option("--seeds", train_seeds, "Comma-separated seeds (overrides config)");
  train_cmd->add_option("--embeddings", train_embeddings, "EMBT file (overrides config)");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Re-aggregate per-seed reports of a run into a mean (std) table");
  std::string eval_run;
  eval_cmd->add_option("--run", eval_run, "Run output directory")->required();

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "Side-by-side mean (std) table over several runs");
  std::vector<std::string> compare_runs;
  compare_cmd->add_option("--run", compare_runs, "Run output directory (repeatable)")->required();

  // plot-data
  auto* plot_cmd = app.add_subcommand("plot-data", "Emit CSV plot data");
  std::string plot_kind, plot_input, plot_out, plot_embeddings, plot_rec, plot_truth;
  std::size_t plot_bins = 5;
  plot_cmd->add_option("kind", plot_kind, "quantity_hist | price_hist | rating_hist | loss_curve | embedding_scatter")
      ->required()
      ->check(CLI::IsMember({"quantity_hist", "price_hist", "rating_hist", "loss_curve", "embedding_scatter"}));
  plot_cmd->add_option("--input", plot_input, "Transaction CSV (hists) or loss log CSV (loss_curve)");
  plot_cmd->add_option("--bins", plot_bins, "Rating labels for rating_hist")->capture_default_str();
  plot_cmd->add_option("--embeddings", plot_embeddings, "EMBT file (embedding_scatter)");
  plot_cmd->add_option("--recommended", plot_rec, "Comma-separated recommended keys (embedding_scatter)");
  plot_cmd->add_option("--truth", plot_truth, "Comma-separated ground-truth keys (embedding_scatter)");
  plot_cmd->add_option("--out", plot_out, "Output CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) {
      ingest::ParseResult parsed;
      const auto ds = load_clean(ingest_input, &parsed);
      for (const auto& issue : parsed.issues)
        std::cerr << "line " << issue.line << (issue.fatal ? ": dropped: " : ": ") << issue.message << "\n";
      const auto strengths = ingest::build_matrix(ds, std::nullopt, ingest::MatrixMode::purchase_strength);
      auto m = strengths;
      if (ingest::matrix_mode_from_string(ingest_mode) == ingest::MatrixMode::rating_label)
        m = ingest::label_matrix(strengths, ingest::fit_bins(ingest::strengths_of(strengths), ingest_bins));
      json stats = {{"raw_rows", parsed.data_rows}, {"parse_errors", parsed.error_count()},
                    {"clean_rows", ds.rows.size()}, {"users", ds.n_users},
                    {"items", ds.n_items},          {"interactions", m.nnz()},
                    {"sparsity", m.sparsity()}};
      if (m.bins) {
        stats["bin_boundaries"] = m.bins->boundaries;
        std::vector<std::size_t> counts(m.bins->n_bins, 0);
        for (const auto& e : m.entries) ++counts[std::size_t(e.value)];
        stats["label_counts"] = counts;
      }
      if (!ingest_out.empty()) {
        auto h = open_out(fs::path(ingest_out) / "matrix.json");
        auto e = open_out(fs::path(ingest_out) / "matrix.csv");
        ingest::save_matrix(m, h, e);
      }
      std::cout << stats.dump(2) << "\n";
    } else if (*corpus_cmd) {
      std::set<std::string> stop = corpus::default_stopwords();
      if (!stopword_file.empty()) {
        stop.clear();
        for (auto& w : read_lines(stopword_file))
          if (!w.empty()) stop.insert(w);
      }
      corpus::ProfileOptions opts{top_n, min_len, char_limit};
      std::vector<corpus::VocabProfile> profiles;
      for (const auto& spec : corpus_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) fail(ErrorKind::config, "--corpus expects name=path, got '" + spec + "'");
        profiles.push_back(corpus::build_profile(spec.substr(0, eq), read_lines(spec.substr(eq + 1)), stop, opts));
      }
      json out = json::array();
      for (const auto& p : profiles) out.push_back(corpus::to_json(p));
      std::optional<std::vector<std::vector<double>>> overlap;
      if (profiles.size() >= 2) overlap = corpus::overlap_matrix(profiles);
      if (corpus_out.empty()) {
        json doc = {{"profiles", out}};
        if (overlap) doc["overlap"] = *overlap;
        std::cout << doc.dump(2) << "\n";
      } else {
        const fs::path dir = corpus_out;
        open_out(dir / "profiles.json") << out.dump(2) << "\n";
        for (const auto& p : profiles) {
          auto f = open_out(dir / ("top_" + p.name + ".csv"));
          f << "rank,token,count\n";
          for (std::size_t i = 0; i < p.top.size(); ++i)
            f << i + 1 << ',' << csv::quote(p.top[i]) << ',' << p.frequencies.at(p.top[i]) << '\n';
        }
        if (overlap) {
          auto f = open_out(dir / "overlap.csv");
          std::vector<std::string> header{""};
          for (const auto& p : profiles) header.push_back(p.name);
          csv::write_row(f, header);
          for (std::size_t i = 0; i < profiles.size(); ++i) {
            std::vector<std::string> row{profiles[i].name};
            for (double v : (*overlap)[i]) row.push_back(ingest::format_double(v));
            csv::write_row(f, row);
          }
        }
      }
    } else if (*synth_cmd) {
      const auto ds = load_clean(synth_input);
      const auto table = embed::synthesize_embeddings(ds.item_descriptions, synth_dim, synth_seed);
      auto out = open_out(synth_out);
      if (fs::path(synth_out).extension() == ".tsv") embed::save_embeddings_tsv(table, out);
      else embed::save_embeddings(table, out);
      std::cerr << "wrote " << table.size() << " rows of dim " << table.dim() << "\n";
    } else if (*train_cmd) {
      auto cfg = experiment::load_config(train_config);
      if (!train_out.empty()) cfg.output_dir = train_out;
      if (!train_seeds.empty()) experiment::override_seeds(cfg, parse_seeds(train_seeds));
      if (!train_embeddings.empty()) experiment::override_embeddings(cfg, train_embeddings);
      const auto result = experiment::run_experiment(cfg);
      std::cout << result.table;
    } else if (*eval_cmd) {
      std::cout << eval::format_table(summaries_from_reports(eval_run));
    } else if (*compare_cmd) {
      std::vector<std::pair<std::string, eval::TrialSummary>> rows;
      for (const auto& run : compare_runs) {
        auto r = summaries_from_reports(run);
        r.front().first += " [" + fs::path(run).filename().string() + "]";
        rows.push_back(r.front());
      }
      std::cout << eval::format_table(rows);
    } else if (*plot_cmd) {
      std::ostringstream out;
      if (plot_kind == "quantity_hist" || plot_kind == "price_hist" || plot_kind == "rating_hist") {
        if (plot_input.empty()) fail(ErrorKind::precondition, plot_kind + " needs --input");
        const auto ds = load_clean(plot_input);
        if (plot_kind == "rating_hist") {
          const auto s = ingest::build_matrix(ds, std::nullopt, ingest::MatrixMode::purchase_strength);
          const auto m = ingest::label_matrix(s, ingest::fit_bins(ingest::strengths_of(s), plot_bins));
          out << "label,count\n";
          const auto counts = experiment::rating_histogram(m);
          for (std::size_t i = 0; i < counts.size(); ++i) out << i << ',' << counts[i] << '\n';
        } else {
          std::vector<double> values;
          for (const auto& t : ds.rows)
            values.push_back(plot_kind == "quantity_hist" ? double(t.quantity) : t.unit_price);
          experiment::write_histogram_csv(experiment::log_histogram(values), out);
        }
      } else if (plot_kind == "loss_curve") {
        if (plot_input.empty()) fail(ErrorKind::precondition, "loss_curve needs --input");
        auto in = open_in(plot_input);
        out << "batch,loss\n";
        for (const auto& [b, l] : experiment::read_loss_log(in)) out << b << ',' << ingest::format_double(l) << '\n';
      } else {
        if (plot_embeddings.empty()) fail(ErrorKind::precondition, "embedding_scatter needs --embeddings");
        const auto table = load_table(plot_embeddings);
        const auto pca = featlab::pca_fit(table, 2);
        experiment::write_scatter_csv(
            experiment::embedding_scatter(table, pca, split_keys(plot_rec), split_keys(plot_truth)), out);
      }
      if (plot_out.empty()) std::cout << out.str();
      else open_out(plot_out) << out.str();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
