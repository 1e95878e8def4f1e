#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "plmrec/mf.hpp"

using namespace plmrec;
using namespace plmrec::mf;

namespace {

ingest::InteractionMatrix matrix(std::size_t nu, std::size_t ni, ingest::MatrixMode mode,
                                 std::vector<ingest::Entry> entries) {
  ingest::InteractionMatrix m;
  m.n_users = nu;
  m.n_items = ni;
  m.mode = mode;
  m.entries = std::move(entries);
  std::ranges::sort(m.entries, {}, [](const auto& e) { return std::pair(e.user, e.item); });
  return m;
}

ingest::InteractionMatrix ratings(std::size_t nu, std::size_t ni, std::vector<ingest::Entry> e) {
  return matrix(nu, ni, ingest::MatrixMode::rating_label, std::move(e));
}

ingest::InteractionMatrix strengths(std::size_t nu, std::size_t ni, std::vector<ingest::Entry> e) {
  return matrix(nu, ni, ingest::MatrixMode::purchase_strength, std::move(e));
}

ingest::InteractionMatrix random_strengths(std::mt19937& gen, std::size_t nu, std::size_t ni, double density) {
  std::bernoulli_distribution keep(density);
  std::uniform_int_distribution<int> qty(1, 30);
  std::vector<ingest::Entry> e;
  for (std::uint32_t u = 0; u < nu; ++u)
    for (std::uint32_t i = 0; i < ni; ++i)
      if (keep(gen)) e.push_back({u, i, double(qty(gen))});
  if (e.empty()) e.push_back({0, 0, 1.0});
  return strengths(nu, ni, e);
}

std::vector<std::vector<double>> rows_of(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out(std::size_t(m.rows()), std::vector<double>(std::size_t(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[std::size_t(r)][std::size_t(c)] = m(r, c);
  return out;
}

FactorModel fixed_model(const std::vector<double>& item_scores) {
  FactorModel m;
  m.user_factors = Eigen::MatrixXd(1, 1);
  m.user_factors(0, 0) = 1.0;
  m.item_factors = Eigen::MatrixXd(Eigen::Index(item_scores.size()), 1);
  for (std::size_t i = 0; i < item_scores.size(); ++i) m.item_factors(Eigen::Index(i), 0) = item_scores[i];
  return m;
}

std::vector<std::uint32_t> items_of(const std::vector<Scored>& v) {
  std::vector<std::uint32_t> out;
  for (const auto& s : v) out.push_back(s.item);
  return out;
}

}  // namespace

TEST(Explicit, RankOneDenseMatrixIsRecovered) {
  const double u[3] = {1, 1, 2}, v[3] = {1, 2, 2};
  std::vector<ingest::Entry> e;
  for (std::uint32_t a = 0; a < 3; ++a)
    for (std::uint32_t b = 0; b < 3; ++b) e.push_back({a, b, u[a] * v[b]});
  const auto train = ratings(3, 3, e);
  MfConfig cfg;
  cfg.factors = 2;
  cfg.regularization = 0;
  cfg.learning_rate = 0.05;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const auto fit = fit_explicit(train, cfg, false);
    ASSERT_EQ(fit.loss.size(), 30u);
    EXPECT_LT(std::sqrt(fit.loss.back() / 9.0), 0.05) << "seed " << seed;
  }
}

TEST(Explicit, DefaultLearningRateConvergesGivenMoreEpochs) {
  const double u[3] = {1, 1, 2}, v[3] = {1, 2, 2};
  std::vector<ingest::Entry> e;
  for (std::uint32_t a = 0; a < 3; ++a)
    for (std::uint32_t b = 0; b < 3; ++b) e.push_back({a, b, u[a] * v[b]});
  MfConfig cfg;
  cfg.factors = 2;
  cfg.regularization = 0;
  cfg.iterations = 300;
  const auto fit = fit_explicit(ratings(3, 3, e), cfg, false);
  EXPECT_LT(std::sqrt(fit.loss.back() / 9.0), 0.05);
}

TEST(Explicit, SingleBiasedEntry) {
  const auto train = ratings(1, 1, {{0, 0, 4.0}});
  const auto fit = fit_explicit(train, MfConfig{}, true);
  ASSERT_TRUE(fit.model.global_mean);
  EXPECT_DOUBLE_EQ(*fit.model.global_mean, 4.0);
  EXPECT_NEAR(score(fit.model, 0, 0), 4.0, 1e-3);
}

TEST(Explicit, SameSeedSameFactors) {
  std::mt19937 gen(3);
  std::vector<ingest::Entry> e;
  for (std::uint32_t u = 0; u < 12; ++u)
    for (std::uint32_t i = 0; i < 9; ++i)
      if (gen() % 3 == 0) e.push_back({u, i, double(gen() % 5)});
  const auto train = ratings(12, 9, e);
  MfConfig cfg;
  cfg.seed = 17;
  cfg.sampled_zeros = true;
  const auto a = fit_explicit(train, cfg, true), b = fit_explicit(train, cfg, true);
  EXPECT_EQ(a.model.user_factors, b.model.user_factors);
  EXPECT_EQ(a.model.item_factors, b.model.item_factors);
  EXPECT_EQ(a.loss, b.loss);
  cfg.seed = 18;
  EXPECT_NE(fit_explicit(train, cfg, true).model.user_factors, a.model.user_factors);
}

TEST(Explicit, LossTrendsDownOverWindows) {
  std::mt19937 gen(11);
  std::vector<ingest::Entry> e;
  for (std::uint32_t u = 0; u < 60; ++u)
    for (std::uint32_t i = 0; i < 40; ++i)
      if (gen() % 4 == 0) e.push_back({u, i, double(gen() % 5)});
  MfConfig cfg;
  cfg.factors = 8;
  cfg.learning_rate = 0.02;
  for (bool biased : {false, true}) {
    const auto loss = fit_explicit(ratings(60, 40, e), cfg, biased).loss;
    for (std::size_t t = 6; t < loss.size(); ++t) EXPECT_LE(loss[t], loss[t - 5] * 1.01) << "epoch " << t;
    for (std::size_t t = 2; t < loss.size(); ++t) EXPECT_LE(loss[t], loss[t - 1] * 1.01) << "epoch " << t;
  }
}

TEST(Explicit, Errors) {
  std::string msg;
  MfConfig cfg;
  cfg.learning_rate = 50.0;
  const auto train = ratings(2, 2, {{0, 0, 4}, {0, 1, 3}, {1, 0, 2}, {1, 1, 4}});
  EXPECT_EQ(error_kind([&] { fit_explicit(train, cfg, false); }, &msg), ErrorKind::training);
  EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
  EXPECT_EQ(error_kind([&] { fit_explicit(ratings(2, 2, {}), MfConfig{}, false); }), ErrorKind::empty_dataset);
  EXPECT_EQ(error_kind([&] { fit_explicit(strengths(1, 1, {{0, 0, 1}}), MfConfig{}, false); }),
            ErrorKind::precondition);
  MfConfig bad;
  bad.factors = 0;
  EXPECT_EQ(error_kind([&] { fit_explicit(train, bad, false); }), ErrorKind::config);
}

TEST(Implicit, EachUserPrefersOwnItem) {
  const auto train = strengths(2, 2, {{0, 0, 3}, {1, 1, 5}});
  MfConfig cfg;
  cfg.factors = 2;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cfg.seed = seed;
    const auto m = fit_implicit(train, cfg).model;
    EXPECT_GT(score(m, 0, 0), score(m, 0, 1));
    EXPECT_GT(score(m, 1, 1), score(m, 1, 0));
    EXPECT_EQ(recommend(m, 0, 1, {})[0].item, 0u);
    EXPECT_EQ(recommend(m, 1, 1, {})[0].item, 1u);
  }
}

TEST(Implicit, ZeroAlphaObservedScoresDominate) {
  const auto train = strengths(2, 2, {{0, 0, 1}, {1, 1, 1}});
  MfConfig cfg;
  cfg.factors = 2;
  cfg.alpha = 0;
  cfg.regularization = 0.1;
  const auto m = fit_implicit(train, cfg).model;
  for (std::size_t u = 0; u < 2; ++u)
    for (std::size_t i = 0; i < 2; ++i)
      if (u != i) {
        EXPECT_GE(score(m, 0, 0), score(m, u, i));
        EXPECT_GE(score(m, 1, 1), score(m, u, i));
      }
}

TEST(Implicit, SameSeedSameFactors) {
  std::mt19937 gen(8);
  const auto train = random_strengths(gen, 30, 20, 0.2);
  MfConfig cfg;
  cfg.factors = 6;
  cfg.seed = 4;
  const auto a = fit_implicit(train, cfg), b = fit_implicit(train, cfg);
  EXPECT_EQ(a.model.user_factors, b.model.user_factors);
  EXPECT_EQ(a.model.item_factors, b.model.item_factors);
}

TEST(Implicit, ObjectiveNonIncreasingAndMatchesDenseSum) {
  std::mt19937 gen(21);
  for (int trial = 0; trial < 15; ++trial) {
    const auto train = random_strengths(gen, 3 + gen() % 20, 3 + gen() % 15, 0.25);
    MfConfig cfg;
    cfg.factors = 1 + gen() % 6;
    cfg.alpha = 1 + gen() % 40;
    cfg.regularization = 0.01 + 0.1 * (gen() % 5);
    cfg.seed = gen();
    const auto fit = fit_implicit(train, cfg);
    ASSERT_EQ(fit.loss.size(), 31u);
    for (std::size_t t = 1; t < fit.loss.size(); ++t)
      EXPECT_LE(fit.loss[t], fit.loss[t - 1] * (1 + 1e-9) + 1e-12) << "half-sweep " << t;
    std::vector<std::vector<double>> dense(train.n_users, std::vector<double>(train.n_items, 0.0));
    for (const auto& e : train.entries) dense[e.user][e.item] = e.value;
    const double brute = oracle::implicit_objective(dense, rows_of(fit.model.user_factors),
                                                    rows_of(fit.model.item_factors), cfg.alpha,
                                                    cfg.regularization);
    EXPECT_NEAR(fit.loss.back(), brute, 1e-8 * std::max(1.0, brute));
  }
}

TEST(Implicit, SingularSolveIsSolverError) {
  const auto train = strengths(2, 1, {{0, 0, 1}, {1, 0, 2}});
  MfConfig cfg;
  cfg.factors = 8;
  cfg.regularization = 0;
  EXPECT_EQ(error_kind([&] { fit_implicit(train, cfg); }), ErrorKind::solver);
  cfg.regularization = 0.01;
  EXPECT_NO_THROW(fit_implicit(train, cfg));
}

TEST(Implicit, Preconditions) {
  EXPECT_EQ(error_kind([] { fit_implicit(ratings(1, 1, {{0, 0, 1}}), MfConfig{}); }), ErrorKind::precondition);
  EXPECT_EQ(error_kind([] { fit_implicit(strengths(1, 1, {{0, 0, 0}}), MfConfig{}); }), ErrorKind::precondition);
}

TEST(Score, Examples) {
  FactorModel m;
  m.user_factors = Eigen::MatrixXd::Zero(1, 2);
  m.item_factors = Eigen::MatrixXd::Zero(1, 2);
  m.global_mean = 3.0;
  m.user_bias = Eigen::VectorXd::Zero(1);
  m.item_bias = Eigen::VectorXd::Zero(1);
  m.kind = ModelKind::explicit_biased;
  EXPECT_DOUBLE_EQ(score(m, 0, 0), 3.0);

  FactorModel d;
  d.user_factors = Eigen::MatrixXd{{1, 2}};
  d.item_factors = Eigen::MatrixXd{{3, 4}};
  EXPECT_DOUBLE_EQ(score(d, 0, 0), 11.0);
  auto doubled = d;
  doubled.user_factors *= 2;
  EXPECT_DOUBLE_EQ(score(doubled, 0, 0), 2 * score(d, 0, 0));
  EXPECT_EQ(error_kind([&] { score(d, 1, 0); }), ErrorKind::precondition);
  EXPECT_EQ(error_kind([&] { score(d, 0, 1); }), ErrorKind::precondition);
}

TEST(Recommend, Examples) {
  const auto m = fixed_model({0.9, 0.5, 0.1});
  EXPECT_EQ(items_of(recommend(m, 0, 2, {})), (std::vector<std::uint32_t>{0, 1}));
  EXPECT_TRUE(recommend(m, 0, 2, {0, 1, 2}).empty());
  EXPECT_EQ(recommend(m, 0, 10, {}).size(), 3u);
  const auto flat = fixed_model({0.3, 0.3, 0.3, 0.3});
  EXPECT_EQ(items_of(recommend(flat, 0, 4, {})), (std::vector<std::uint32_t>{0, 1, 2, 3}));
  EXPECT_EQ(error_kind([&] { recommend(m, 0, 0, {}); }), ErrorKind::precondition);
}

TEST(Recommend, SortedAndNeverExcluded) {
  std::mt19937 gen(12);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    FactorModel m;
    m.user_factors = Eigen::MatrixXd(3, 4);
    m.item_factors = Eigen::MatrixXd(25, 4);
    for (Eigen::Index i = 0; i < m.user_factors.size(); ++i) m.user_factors.data()[i] = nd(gen);
    for (Eigen::Index i = 0; i < m.item_factors.size(); ++i) m.item_factors.data()[i] = nd(gen);
    std::set<std::uint32_t> exclude;
    for (int j = 0; j < 8; ++j) exclude.insert(std::uint32_t(gen() % 25));
    const auto recs = recommend(m, trial % 3, 1 + gen() % 30, exclude);
    for (std::size_t r = 0; r < recs.size(); ++r) {
      EXPECT_FALSE(exclude.contains(recs[r].item));
      EXPECT_LT(recs[r].item, 25u);
      if (r > 0) EXPECT_GE(recs[r - 1].score, recs[r].score);
    }
  }
}

namespace {

struct HybridCase {
  FactorModel model;
  embed::EmbeddingTable table{2};
  std::vector<std::string> keys{"A", "B", "C", "D", "E", "H"};
};

// MF order A > B > C > D > E; cosine to H orders B, D, E, C, A.
HybridCase hybrid_case() {
  HybridCase h;
  h.model = fixed_model({5, 4, 3, 2, 1, 0});
  h.table.insert("H", {1, 0});
  h.table.insert("B", {1, 0.1f});
  h.table.insert("D", {1, 0.5f});
  h.table.insert("E", {1, 1});
  h.table.insert("C", {0, 1});
  h.table.insert("A", {-1, 0.2f});
  return h;
}

}  // namespace

TEST(Hybrid, InterleaveAlternatesWithoutDuplicates) {
  auto h = hybrid_case();
  const auto out = hybrid_rerank(h.model, h.table, h.keys, Fusion::interleave, {}, 0, {5}, 4, {5});
  EXPECT_EQ(items_of(out), (std::vector<std::uint32_t>{0, 1, 3, 2}));
  EXPECT_DOUBLE_EQ(out[2].score, 2.0);
}

TEST(Hybrid, BetaOneMatchesPlainRecommend) {
  auto h = hybrid_case();
  HybridParams p;
  p.beta = 1.0;
  const auto hybrid = hybrid_rerank(h.model, h.table, h.keys, Fusion::weighted_sum, p, 0, {5}, 5, {5});
  EXPECT_EQ(items_of(hybrid), items_of(recommend(h.model, 0, 5, {5})));
}

TEST(Hybrid, BetaZeroPutsDuplicateEmbeddingFirst) {
  auto h = hybrid_case();
  h.table.insert("H", {-1, 0.2f});
  HybridParams p;
  p.beta = 0.0;
  EXPECT_EQ(hybrid_rerank(h.model, h.table, h.keys, Fusion::weighted_sum, p, 0, {5}, 3, {5})[0].item, 0u);
  h.table.insert("H", {0, 1});
  EXPECT_EQ(hybrid_rerank(h.model, h.table, h.keys, Fusion::weighted_sum, p, 0, {5}, 3, {5})[0].item, 2u);
}

TEST(Hybrid, WeightedSumIgnoresAffineRescaling) {
  std::mt19937 gen(30);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> pos(0.1, 20.0);
  for (int trial = 0; trial < 30; ++trial) {
    FactorModel m;
    m.kind = ModelKind::explicit_biased;
    m.user_factors = Eigen::MatrixXd(2, 3);
    m.item_factors = Eigen::MatrixXd(12, 3);
    m.user_bias = Eigen::VectorXd(2);
    m.item_bias = Eigen::VectorXd(12);
    m.global_mean = nd(gen);
    for (auto* mat : {&m.user_factors, &m.item_factors})
      for (Eigen::Index i = 0; i < mat->size(); ++i) mat->data()[i] = nd(gen);
    for (Eigen::Index i = 0; i < 2; ++i) (*m.user_bias)(i) = nd(gen);
    for (Eigen::Index i = 0; i < 12; ++i) (*m.item_bias)(i) = nd(gen);
    embed::EmbeddingTable t(4);
    std::vector<std::string> keys;
    for (int i = 0; i < 12; ++i) {
      keys.push_back("k" + std::to_string(i));
      t.insert(keys.back(), {float(nd(gen)), float(nd(gen)), float(nd(gen)), float(nd(gen))});
    }
    const double a = pos(gen), b = nd(gen) * 10;
    auto scaled = m;
    scaled.user_factors *= a;
    *scaled.user_bias *= a;
    *scaled.item_bias *= a;
    scaled.global_mean = a * *m.global_mean + b;
    HybridParams p;
    p.beta = 0.5;
    const std::uint32_t u = trial % 2;
    const auto x = hybrid_rerank(m, t, keys, Fusion::weighted_sum, p, u, {0, 1}, 10, {0, 1});
    const auto y = hybrid_rerank(scaled, t, keys, Fusion::weighted_sum, p, u, {0, 1}, 10, {0, 1});
    EXPECT_EQ(items_of(x), items_of(y));
  }
}

TEST(Hybrid, ClusterBoostLiftsModalCluster) {
  auto h = hybrid_case();
  featlab::ClusterAssignment c;
  c.k = 2;
  c.labels = {{"A", 0}, {"B", 0}, {"C", 0}, {"D", 0}, {"E", 1}, {"H", 1}};
  HybridParams p;
  p.clusters = &c;
  p.gamma = 2.0;
  EXPECT_EQ(hybrid_rerank(h.model, h.table, h.keys, Fusion::cluster_boost, p, 0, {5}, 1, {5})[0].item, 4u);
  p.gamma.reset();
  EXPECT_EQ(hybrid_rerank(h.model, h.table, h.keys, Fusion::cluster_boost, p, 0, {5}, 1, {5})[0].item, 0u);
  c.labels.erase("E");
  EXPECT_EQ(error_kind([&] { hybrid_rerank(h.model, h.table, h.keys, Fusion::cluster_boost, p, 0, {5}, 1, {5}); }),
            ErrorKind::lookup);
}

TEST(Hybrid, MissingEmbeddingsListed) {
  auto h = hybrid_case();
  embed::EmbeddingTable partial(2);
  partial.insert("H", {1, 0});
  partial.insert("A", {1, 1});
  std::string msg;
  EXPECT_EQ(error_kind([&] { hybrid_rerank(h.model, partial, h.keys, Fusion::weighted_sum, {}, 0, {5}, 3, {5}); },
                       &msg),
            ErrorKind::lookup);
  for (const char* k : {"B", "C", "D", "E"}) EXPECT_NE(msg.find(k), std::string::npos) << msg;
}

TEST(ModelArtifact, RoundTripAndMetadata) {
  std::mt19937 gen(40);
  const auto train = random_strengths(gen, 9, 7, 0.4);
  MfConfig cfg;
  cfg.factors = 3;
  const auto fit = fit_implicit(train, cfg);
  std::stringstream s;
  save_model(fit.model, s);
  const auto back = load_model(s);
  EXPECT_EQ(back.kind, ModelKind::implicit);
  EXPECT_FALSE(back.biased());
  EXPECT_TRUE(back.user_factors.isApprox(fit.model.user_factors, 1e-6));
  EXPECT_TRUE(back.item_factors.isApprox(fit.model.item_factors, 1e-6));

  auto biased = ratings(4, 4, {{0, 0, 4}, {1, 2, 1}, {2, 3, 3}, {3, 1, 0}});
  const auto efit = fit_explicit(biased, cfg, true);
  std::stringstream t;
  save_model(efit.model, t);
  const auto eback = load_model(t);
  EXPECT_TRUE(eback.biased());
  EXPECT_NEAR(*eback.global_mean, *efit.model.global_mean, 1e-6);
  EXPECT_TRUE(eback.item_bias->isApprox(*efit.model.item_bias, 1e-5));

  const auto meta = model_metadata(efit.model, cfg, efit.loss);
  EXPECT_EQ(meta["kind"], to_string(ModelKind::explicit_biased));
  EXPECT_EQ(meta["loss"].size(), 30u);

  std::string bytes = t.str();
  bytes[0] = 'X';
  std::istringstream bad(bytes);
  EXPECT_EQ(error_kind([&] { load_model(bad); }), ErrorKind::format);
  std::istringstream trailing(t.str() + "z");
  EXPECT_EQ(error_kind([&] { load_model(trailing); }), ErrorKind::format);
}
