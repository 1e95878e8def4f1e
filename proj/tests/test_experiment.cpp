#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "plmrec/experiment.hpp"

using namespace plmrec;
using namespace plmrec::experiment;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json fixture_config(const fs::path& out) {
  return {{"dataset", {{"transactions", test_data("retail_fixture.csv").string()}}},
          {"seeds", {1, 2}},
          {"output_dir", out.string()}};
}

json gbt_config(const fs::path& out) {
  auto j = fixture_config(out);
  j["recommender"] = {{"kind", "gbt"}, {"rounds", 8}, {"max_depth", 3}};
  j["features"] = {{"recipe", {"user_id", "unit_price"}}};
  return j;
}

json fusion_config(const fs::path& out) {
  auto j = fixture_config(out);
  j["recommender"] = {{"kind", "mf_implicit"}, {"factors", 8}};
  j["embeddings"] = {{"synthesize", {{"dim", 32}, {"seed", 3}}}};
  j["fusion"] = {{"strategy", "weighted_sum"}, {"beta", 0.7}};
  return j;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST(Config, ParsesDefaultsAndRejectsUnknownKeys) {
  const auto c = parse_config(fixture_config("x"));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(c.eval_k, 5u);
  EXPECT_EQ(c.recommender, Recommender::mf_implicit);
  EXPECT_EQ(parse_config(json{{"dataset", {{"synthetic", json::object()}}}}).seeds.size(), 5u);

  auto extra = fixture_config("x");
  extra["sedes"] = {1};
  std::string msg;
  EXPECT_EQ(error_kind([&] { parse_config(extra); }, &msg), ErrorKind::config);
  EXPECT_NE(msg.find("sedes"), std::string::npos) << msg;

  auto empty = fixture_config("x");
  empty["seeds"] = json::array();
  EXPECT_EQ(error_kind([&] { parse_config(empty); }), ErrorKind::config);
  auto both = fixture_config("x");
  both["dataset"]["synthetic"] = json::object();
  EXPECT_EQ(error_kind([&] { parse_config(both); }), ErrorKind::config);
  auto no_embed = fusion_config("x");
  no_embed.erase("embeddings");
  EXPECT_EQ(error_kind([&] { parse_config(no_embed); }), ErrorKind::config);
}

TEST(Config, HashIgnoresOutputDirOnly) {
  const auto a = parse_config(gbt_config("one")), b = parse_config(gbt_config("two"));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  auto c = parse_config(gbt_config("one"));
  override_seeds(c, {7});
  EXPECT_NE(config_hash(c), config_hash(a));
}

TEST(Synthetic, DeterministicAndCleanable) {
  synthetic::Params p;
  p.n_users = 40;
  p.n_items = 60;
  p.dirty_fraction = 0.1;
  const auto a = synthetic::generate(p), b = synthetic::generate(p);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  std::ostringstream sa, sb;
  synthetic::write_transactions_csv(a.rows, sa);
  synthetic::write_transactions_csv(b.rows, sb);
  EXPECT_EQ(sa.str(), sb.str());
  const auto clean = ingest::clean(a.rows);
  EXPECT_LT(clean.rows.size(), a.rows.size());
  EXPECT_EQ(clean.n_users, 40u);
  EXPECT_LE(clean.n_items, 60u);
  EXPECT_EQ(a.item_cluster.size(), 60u);
  p.seed = 2;
  std::ostringstream sc;
  synthetic::write_transactions_csv(synthetic::generate(p).rows, sc);
  EXPECT_NE(sc.str(), sa.str());
  p.n_clusters = 0;
  EXPECT_EQ(error_kind([&] { synthetic::generate(p); }), ErrorKind::config);
}

TEST(Pipeline, GbtSmokeOnFixture) {
  ScratchDir dir("gbt");
  const auto r = run_experiment(parse_config(gbt_config(dir.path())));
  EXPECT_EQ(r.summary.n, 2u);
  EXPECT_TRUE(r.summary.std_defined);
  for (const char* m : {"accuracy", "macro_precision", "macro_recall", "macro_f1"}) {
    ASSERT_TRUE(r.summary.metrics.contains(m)) << m;
    EXPECT_GE(r.summary.metrics.at(m).mean, 0.0);
    EXPECT_LE(r.summary.metrics.at(m).mean, 1.0);
  }
  EXPECT_NE(r.table.find("("), std::string::npos);
  EXPECT_EQ(r.ingest["interactions"], 715);
  for (const char* f : {"summary.json", "table.txt", "run_info.json", "seed_1/report.json", "seed_2/report.json",
                        "seed_1/model.tens"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_FALSE(fs::exists(dir / "stale.json"));

  // every cell traces to the per-seed reports
  const auto summary = json::parse(slurp(dir / "summary.json"));
  std::vector<eval::MetricBundle> seeds;
  for (const char* s : {"seed_1/report.json", "seed_2/report.json"})
    seeds.push_back(json::parse(slurp(dir / s)).at("metrics").get<eval::MetricBundle>());
  const auto again = eval::aggregate_trials(seeds);
  EXPECT_EQ(summary.at("cells").at("accuracy"), eval::format_cell(again.metrics.at("accuracy")));
  EXPECT_EQ(summary.at("config_hash"), r.config_hash);
}

TEST(Pipeline, ImplicitWithWeightedSumFusion) {
  ScratchDir dir("fusion");
  const auto r = run_experiment(parse_config(fusion_config(dir.path())));
  for (const char* m : {"precision_at_k", "recall_at_k", "f1_at_k", "map_at_k"}) {
    ASSERT_TRUE(r.summary.metrics.contains(m)) << m;
    EXPECT_GE(r.summary.metrics.at(m).mean, 0.0);
    EXPECT_LE(r.summary.metrics.at(m).mean, 1.0);
  }
  const auto report = json::parse(slurp(dir / "seed_1" / "report.json"));
  EXPECT_EQ(report.at("ranking").at("k"), 5);
  EXPECT_TRUE(fs::exists(dir / "seed_1" / "model.fmdl"));
}

TEST(Pipeline, InvalidRecipeFailsInFeatlab) {
  ScratchDir dir("recipe");
  auto j = gbt_config(dir.path());
  j["features"]["recipe"] = {"user_id", "shoe_size"};
  const auto cfg = parse_config(j);
  try {
    run_experiment(cfg);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "featlab");
    EXPECT_EQ(e.cause(), ErrorKind::recipe);
    EXPECT_EQ(e.config_hash(), config_hash(cfg));
  }
  const auto stale = json::parse(slurp(dir / "stale.json"));
  EXPECT_EQ(stale.at("status"), "failed");
  EXPECT_EQ(stale.at("stage"), "featlab");
}

TEST(Pipeline, MissingTransactionsFailInIngest) {
  ScratchDir dir("missing");
  auto j = gbt_config(dir.path());
  j["dataset"]["transactions"] = (dir / "nope.csv").string();
  try {
    run_experiment(parse_config(j));
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "ingest");
    EXPECT_EQ(e.cause(), ErrorKind::io);
  }
}

TEST(Pipeline, RerunsAreByteIdentical) {
  ScratchDir a("rerun_a"), b("rerun_b");
  for (const auto& make : {gbt_config, fusion_config}) {
    run_experiment(parse_config(make(a.path())));
    run_experiment(parse_config(make(b.path())));
    auto ta = tree_contents(a.path()), tb = tree_contents(b.path());
    ASSERT_TRUE(ta.contains("run_info.json"));
    ta.erase("run_info.json");
    tb.erase("run_info.json");
    ASSERT_EQ(ta.size(), tb.size());
    for (const auto& [name, bytes] : ta) EXPECT_TRUE(bytes == tb.at(name)) << name;
  }
}

TEST(PlotData, RatingHistogramCoversInteractions) {
  auto cfg = parse_config(fixture_config("x"));
  const auto loaded = ingest_dataset(cfg);
  const auto bins = ingest::fit_bins(ingest::strengths_of(loaded.strengths), 5);
  const auto counts = rating_histogram(ingest::label_matrix(loaded.strengths, bins));
  ASSERT_EQ(counts.size(), 5u);
  EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::size_t(0)), 715u);
  EXPECT_EQ(counts, (std::vector<std::size_t>{191, 97, 250, 96, 81}));
}

TEST(PlotData, LogHistogram) {
  const auto bins = log_histogram({1, 2, 5, 10, 11, 100, 0, -3});
  std::size_t total = 0;
  for (const auto& b : bins) {
    total += b.count;
    EXPECT_NEAR(std::log10(b.hi) - std::log10(b.lo), 0.25, 1e-12);
  }
  EXPECT_EQ(total, 6u);
  EXPECT_EQ(error_kind([] { log_histogram({0, -1}); }), ErrorKind::precondition);
}

TEST(PlotData, LossLogWithAndWithoutHeader) {
  std::istringstream plain("1,0.9\n2,0.7\n3,0.65\n");
  EXPECT_EQ(read_loss_log(plain).size(), 3u);
  std::istringstream header("batch,loss\n100,2.5\n200,2.1\n");
  const auto rows = read_loss_log(header);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].first, 200);
  EXPECT_DOUBLE_EQ(rows[1].second, 2.1);
  std::istringstream bad("1,0.9\nx,y\n");
  EXPECT_EQ(error_kind([&] { read_loss_log(bad); }), ErrorKind::format);
}

TEST(PlotData, ScatterRolesAndBackground) {
  embed::EmbeddingTable t(4);
  for (int i = 0; i < 12; ++i)
    t.insert("i" + std::to_string(i), {float(i), float(i * i % 7), float(i % 3), 1.0f + float(i % 2)});
  std::vector<std::vector<double>> rows;
  for (const auto& [k, v] : t.rows()) rows.emplace_back(v.begin(), v.end());
  const auto pca = featlab::pca_fit(rows, 2);
  const auto pts = embedding_scatter(t, pca, {"i1", "i2", "i3"}, {"i3", "i7"});
  std::map<std::string, int> roles;
  for (const auto& p : pts) roles[p.role]++;
  EXPECT_EQ(roles["recommended"], 3);
  EXPECT_EQ(roles["ground_truth"], 2);
  EXPECT_EQ(roles["other"], 12 - 4);
  std::ostringstream csv;
  write_scatter_csv(pts, csv);
  const auto text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), long(pts.size() + 1));
}
