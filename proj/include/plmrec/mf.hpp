#pragma once

// Matrix factorization recommenders: explicit SGD (optionally biased),
// implicit-feedback ALS with confidence weighting, top-k recommendation and
// embedding-aware re-ranking.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <json.hpp>

#include "plmrec/embed_store.hpp"
#include "plmrec/error.hpp"
#include "plmrec/featlab.hpp"
#include "plmrec/ingest.hpp"
#include "plmrec/rng.hpp"

namespace plmrec::mf {

enum class ModelKind { explicit_plain, explicit_biased, implicit };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::explicit_plain: return "explicit";
    case ModelKind::explicit_biased: return "explicit_biased";
    case ModelKind::implicit: return "implicit";
  }
  return "?";
}

inline ModelKind model_kind_from_string(std::string_view s) {
  if (s == "explicit") return ModelKind::explicit_plain;
  if (s == "explicit_biased") return ModelKind::explicit_biased;
  if (s == "implicit") return ModelKind::implicit;
  fail(ErrorKind::format, "unknown model kind '" + std::string(s) + "'");
}

struct FactorModel {
  Eigen::MatrixXd user_factors;  // n_users x f
  Eigen::MatrixXd item_factors;  // n_items x f
  std::optional<Eigen::VectorXd> user_bias;
  std::optional<Eigen::VectorXd> item_bias;
  std::optional<double> global_mean;
  ModelKind kind = ModelKind::implicit;

  std::size_t n_users() const { return std::size_t(user_factors.rows()); }
  std::size_t n_items() const { return std::size_t(item_factors.rows()); }
  std::size_t factors() const { return std::size_t(user_factors.cols()); }
  bool biased() const { return user_bias.has_value(); }
};

struct MfConfig {
  std::size_t factors = 64;
  double learning_rate = 0.01;   // explicit only
  double regularization = 0.01;
  std::optional<std::size_t> iterations;  // default: 15 implicit, 30 explicit
  double alpha = 40.0;           // implicit only: confidence c = 1 + alpha * r
  std::uint64_t seed = 0;
  bool sampled_zeros = false;    // explicit only: also fit sampled missing cells to 0
  double zeros_per_observed = 1.0;

  std::size_t implicit_iterations() const { return iterations.value_or(15); }
  std::size_t explicit_iterations() const { return iterations.value_or(30); }

  void validate() const {
    if (factors < 1) fail(ErrorKind::config, "factors must be >= 1");
    if (!(regularization >= 0)) fail(ErrorKind::config, "regularization must be >= 0");
    if (!(alpha >= 0)) fail(ErrorKind::config, "alpha must be >= 0");
    if (!(learning_rate > 0)) fail(ErrorKind::config, "learning_rate must be > 0");
  }
};

// Model plus the per-epoch (explicit) or per-half-sweep (implicit) objective.
struct Fitted {
  FactorModel model;
  std::vector<double> loss;
};

namespace detail {

inline std::size_t worker_threads() {
  if (const char* env = std::getenv("PLMREC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return std::size_t(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs body(i) for i in [0, n) over contiguous chunks. Each index is
// processed exactly once, so results written per-index are deterministic.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t threads = std::min(worker_threads(), std::max<std::size_t>(1, n / 64));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
}

inline void init_uniform(Eigen::MatrixXd& m, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-0.01, 0.01);
}

inline double predict(const FactorModel& m, std::size_t u, std::size_t i) {
  double s = m.user_factors.row(Eigen::Index(u)).dot(m.item_factors.row(Eigen::Index(i)));
  if (m.biased())
    s += *m.global_mean + (*m.user_bias)(Eigen::Index(u)) + (*m.item_bias)(Eigen::Index(i));
  return s;
}

}  // namespace detail

// Regularized squared error over observed entries.
inline double explicit_objective(const FactorModel& m, const ingest::InteractionMatrix& train,
                                 double lambda) {
  double loss = 0;
  for (const auto& e : train.entries) {
    const double err = e.value - detail::predict(m, e.user, e.item);
    loss += err * err;
  }
  double reg = m.user_factors.squaredNorm() + m.item_factors.squaredNorm();
  if (m.biased()) reg += m.user_bias->squaredNorm() + m.item_bias->squaredNorm();
  return loss + lambda * reg;
}

// SGD over shuffled observed ratings.
inline Fitted fit_explicit(const ingest::InteractionMatrix& train, const MfConfig& cfg,
                           bool biased) {
  cfg.validate();
  if (train.mode != ingest::MatrixMode::rating_label)
    fail(ErrorKind::precondition, "explicit MF needs a rating_label matrix");
  if (train.entries.empty()) fail(ErrorKind::empty_dataset, "explicit MF needs observed ratings");

  Rng rng(mix_seed(cfg.seed, 0x657870ULL));
  Fitted out;
  auto& m = out.model;
  m.kind = biased ? ModelKind::explicit_biased : ModelKind::explicit_plain;
  m.user_factors.resize(Eigen::Index(train.n_users), Eigen::Index(cfg.factors));
  m.item_factors.resize(Eigen::Index(train.n_items), Eigen::Index(cfg.factors));
  detail::init_uniform(m.user_factors, rng);
  detail::init_uniform(m.item_factors, rng);
  if (biased) {
    double mu = 0;
    for (const auto& e : train.entries) mu += e.value;
    m.global_mean = mu / double(train.entries.size());
    m.user_bias = Eigen::VectorXd::Zero(Eigen::Index(train.n_users));
    m.item_bias = Eigen::VectorXd::Zero(Eigen::Index(train.n_items));
  }

  std::unordered_set<std::uint64_t> observed;
  if (cfg.sampled_zeros)
    for (const auto& e : train.entries) observed.insert(std::uint64_t(e.user) * train.n_items + e.item);

  struct Sample {
    std::uint32_t user, item;
    double target;
  };
  const double eta = cfg.learning_rate, lambda = cfg.regularization;
  std::vector<Sample> samples;
  Eigen::VectorXd x_old;
  for (std::size_t epoch = 0; epoch < cfg.explicit_iterations(); ++epoch) {
    samples.clear();
    for (const auto& e : train.entries) samples.push_back({e.user, e.item, e.value});
    if (cfg.sampled_zeros && observed.size() < train.n_users * train.n_items) {
      const auto want = std::size_t(std::llround(cfg.zeros_per_observed * double(train.entries.size())));
      for (std::size_t z = 0; z < want; ++z) {
        std::uint32_t u, i;
        do {
          u = std::uint32_t(rng.below(train.n_users));
          i = std::uint32_t(rng.below(train.n_items));
        } while (observed.contains(std::uint64_t(u) * train.n_items + i));
        samples.push_back({u, i, 0.0});
      }
    }
    rng.shuffle(std::span<Sample>(samples));
    for (const auto& s : samples) {
      const auto u = Eigen::Index(s.user), i = Eigen::Index(s.item);
      const double err = s.target - detail::predict(m, s.user, s.item);
      if (biased) {
        (*m.user_bias)(u) += eta * (err - lambda * (*m.user_bias)(u));
        (*m.item_bias)(i) += eta * (err - lambda * (*m.item_bias)(i));
      }
      x_old = m.user_factors.row(u).transpose();
      m.user_factors.row(u) += eta * (err * m.item_factors.row(i) - lambda * m.user_factors.row(u));
      m.item_factors.row(i) += eta * (err * x_old.transpose() - lambda * m.item_factors.row(i));
    }
    const double loss = explicit_objective(m, train, lambda);
    if (!std::isfinite(loss))
      fail(ErrorKind::training, "explicit SGD diverged at epoch " + std::to_string(epoch + 1));
    out.loss.push_back(loss);
  }
  return out;
}

// Weighted implicit objective sum_{u,i} c_ui (p_ui - x_u.y_i)^2 + lambda(|X|^2 + |Y|^2),
// evaluated in time proportional to the nonzeros.
inline double implicit_objective(const FactorModel& m, const ingest::InteractionMatrix& train,
                                 double alpha, double lambda) {
  const Eigen::MatrixXd yty = m.item_factors.transpose() * m.item_factors;
  double total = 0;
  for (Eigen::Index u = 0; u < m.user_factors.rows(); ++u) {
    const auto x = m.user_factors.row(u);
    total += (x * yty * x.transpose()).value();
  }
  for (const auto& e : train.entries) {
    const double s = m.user_factors.row(e.user).dot(m.item_factors.row(e.item));
    const double c = 1.0 + alpha * e.value;
    total += c * (1.0 - s) * (1.0 - s) - s * s;
  }
  return total + lambda * (m.user_factors.squaredNorm() + m.item_factors.squaredNorm());
}

namespace detail {

// One half-sweep: re-solve every row of `solve` against fixed `fixed`.
inline void als_half_sweep(Eigen::MatrixXd& solve, const Eigen::MatrixXd& fixed,
                           const std::vector<std::vector<std::pair<std::uint32_t, double>>>& rows,
                           double alpha, double lambda, const char* side) {
  const auto f = fixed.cols();
  const Eigen::MatrixXd gram = fixed.transpose() * fixed;
  std::vector<int> failed(rows.size(), 0);
  parallel_for(rows.size(), [&](std::size_t r) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += lambda;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(f);
    for (const auto& [j, value] : rows[r]) {
      const double c = 1.0 + alpha * value;
      const auto y = fixed.row(j).transpose();
      a.noalias() += (c - 1.0) * y * y.transpose();
      b.noalias() += c * y;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
      failed[r] = 1;
      return;
    }
    Eigen::VectorXd x = llt.solve(b);
    if (!x.allFinite()) {
      failed[r] = 1;
      return;
    }
    solve.row(Eigen::Index(r)) = x.transpose();
  });
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (failed[r])
      fail(ErrorKind::solver, std::string("singular system solving ") + side + " " + std::to_string(r));
}

}  // namespace detail

// Confidence-weighted ALS for implicit feedback: p_ui = 1 for observed
// pairs, c_ui = 1 + alpha * r_ui. Each half-sweep solves
// (Y'Y + Y'(C_u - I)Y + lambda I) x_u = Y'C_u p_u using only u's nonzeros.
// loss[0] is the objective at initialization, then one value per half-sweep.
inline Fitted fit_implicit(const ingest::InteractionMatrix& train, const MfConfig& cfg) {
  cfg.validate();
  if (train.mode != ingest::MatrixMode::purchase_strength)
    fail(ErrorKind::precondition, "implicit ALS needs a purchase_strength matrix");
  for (const auto& e : train.entries)
    if (!(e.value > 0)) fail(ErrorKind::precondition, "purchase strengths must be > 0");

  Rng rng(mix_seed(cfg.seed, 0x616c73ULL));
  Fitted out;
  auto& m = out.model;
  m.kind = ModelKind::implicit;
  m.user_factors.resize(Eigen::Index(train.n_users), Eigen::Index(cfg.factors));
  m.item_factors.resize(Eigen::Index(train.n_items), Eigen::Index(cfg.factors));
  detail::init_uniform(m.user_factors, rng);
  detail::init_uniform(m.item_factors, rng);

  const auto users = train.by_user();
  const auto items = train.by_item();
  out.loss.push_back(implicit_objective(m, train, cfg.alpha, cfg.regularization));
  for (std::size_t it = 0; it < cfg.implicit_iterations(); ++it) {
    detail::als_half_sweep(m.user_factors, m.item_factors, users, cfg.alpha, cfg.regularization, "user");
    out.loss.push_back(implicit_objective(m, train, cfg.alpha, cfg.regularization));
    detail::als_half_sweep(m.item_factors, m.user_factors, items, cfg.alpha, cfg.regularization, "item");
    out.loss.push_back(implicit_objective(m, train, cfg.alpha, cfg.regularization));
  }
  return out;
}

inline double score(const FactorModel& m, std::size_t user, std::size_t item) {
  if (user >= m.n_users() || item >= m.n_items())
    fail(ErrorKind::precondition, "index out of range (user " + std::to_string(user) + ", item " +
                                      std::to_string(item) + ")");
  return detail::predict(m, user, item);
}

struct Scored {
  std::uint32_t item = 0;
  double score = 0.0;

  bool operator==(const Scored&) const = default;
};

namespace detail {

// Highest score first, ties to the smaller item index.
inline void top_k(std::vector<Scored>& all, std::size_t k) {
  auto cmp = [](const Scored& a, const Scored& b) {
    return a.score > b.score || (a.score == b.score && a.item < b.item);
  };
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(k), all.end(), cmp);
  all.resize(k);
}

inline std::vector<Scored> all_scores(const FactorModel& m, std::size_t user,
                                      const std::set<std::uint32_t>& exclude) {
  if (user >= m.n_users()) fail(ErrorKind::precondition, "user index out of range");
  const Eigen::VectorXd s = m.item_factors * m.user_factors.row(Eigen::Index(user)).transpose();
  std::vector<Scored> out;
  out.reserve(m.n_items());
  for (std::uint32_t i = 0; i < m.n_items(); ++i) {
    if (exclude.contains(i)) continue;
    double v = s(i);
    if (m.biased()) v += *m.global_mean + (*m.user_bias)(Eigen::Index(user)) + (*m.item_bias)(i);
    out.push_back({i, v});
  }
  return out;
}

}  // namespace detail

inline std::vector<Scored> recommend(const FactorModel& m, std::size_t user, std::size_t k,
                                     const std::set<std::uint32_t>& exclude = {}) {
  if (k < 1) fail(ErrorKind::precondition, "k must be >= 1");
  auto all = detail::all_scores(m, user, exclude);
  detail::top_k(all, k);
  return all;
}

// ---------------------------------------------------------------------------
// Hybrid re-ranking with item embeddings

enum class Fusion { interleave, weighted_sum, cluster_boost };

inline Fusion fusion_from_string(std::string_view s) {
  if (s == "interleave") return Fusion::interleave;
  if (s == "weighted_sum") return Fusion::weighted_sum;
  if (s == "cluster_boost") return Fusion::cluster_boost;
  fail(ErrorKind::config, "unknown fusion strategy '" + std::string(s) + "'");
}

inline std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::interleave: return "interleave";
    case Fusion::weighted_sum: return "weighted_sum";
    case Fusion::cluster_boost: return "cluster_boost";
  }
  return "?";
}

struct HybridParams {
  double beta = 0.7;             // weighted_sum: weight of the MF score
  std::optional<double> gamma;   // cluster_boost bonus; default 0.1 x normalized range
  featlab::SimilarityAggregate aggregate = featlab::SimilarityAggregate::mean;
  const featlab::ClusterAssignment* clusters = nullptr;  // cluster_boost
};

namespace detail {

inline void minmax_normalize(std::vector<double>& v) {
  if (v.empty()) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double l = *lo, range = *hi - *lo;
  for (auto& x : v) x = range > 0 ? (x - l) / range : 0.0;
}

inline std::vector<Eigen::VectorXd> unit_rows(const embed::EmbeddingTable& t,
                                             const std::vector<std::string>& keys) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(keys.size());
  for (const auto& key : keys) {
    const auto v = t.at(key);
    Eigen::VectorXd e(Eigen::Index(v.size()));
    for (std::size_t d = 0; d < v.size(); ++d) e(Eigen::Index(d)) = v[d];
    const double n = e.norm();
    if (n == 0) fail(ErrorKind::similarity, "zero embedding for key '" + key + "'");
    out.push_back(e / n);
  }
  return out;
}

inline void require_keys(const embed::EmbeddingTable& t, const std::vector<std::string>& keys) {
  std::vector<std::string> missing;
  for (const auto& k : keys)
    if (!t.contains(k)) missing.push_back(k);
  if (missing.empty()) return;
  std::string msg = std::to_string(missing.size()) + " item(s) lack embeddings:";
  for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
  if (missing.size() > 10) msg += " ...";
  fail(ErrorKind::lookup, msg);
}

// Profile similarity of every candidate to the history.
inline std::vector<double> profile_scores(const embed::EmbeddingTable& t,
                                          const std::vector<std::string>& history,
                                          const std::vector<std::string>& candidates,
                                          featlab::SimilarityAggregate agg) {
  const auto h = unit_rows(t, history);
  const auto c = unit_rows(t, candidates);
  std::vector<double> out(c.size());
  if (agg == featlab::SimilarityAggregate::mean) {
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(Eigen::Index(t.dim()));
    for (const auto& v : h) centroid += v;
    centroid /= double(h.size());
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].dot(centroid);
  } else {
    for (std::size_t i = 0; i < c.size(); ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& v : h) best = std::max(best, c[i].dot(v));
      out[i] = best;
    }
  }
  return out;
}

}  // namespace detail

// Re-ranks the MF candidates of `user` using item embeddings.
//   interleave:    alternate the MF top-k and the similarity top-k, skipping
//                  duplicates; scores are the MF scores.
//   weighted_sum:  beta * minmax(MF) + (1 - beta) * minmax(similarity).
//   cluster_boost: minmax(MF) plus gamma for items in the modal cluster of
//                  the history.
// `history` holds the user's known items (item indexes), `item_keys` maps
// item indexes to embedding/cluster keys.
inline std::vector<Scored> hybrid_rerank(const FactorModel& m, const embed::EmbeddingTable& table,
                                         const std::vector<std::string>& item_keys, Fusion strategy,
                                         const HybridParams& params, std::size_t user,
                                         const std::vector<std::uint32_t>& history, std::size_t k,
                                         const std::set<std::uint32_t>& exclude) {
  if (k < 1) fail(ErrorKind::precondition, "k must be >= 1");
  if (item_keys.size() != m.n_items()) fail(ErrorKind::dimension, "item_keys size != n_items");
  auto candidates = detail::all_scores(m, user, exclude);
  if (candidates.empty()) return {};

  std::vector<std::string> cand_keys, hist_keys;
  for (const auto& c : candidates) cand_keys.push_back(item_keys[c.item]);
  for (auto h : history) {
    if (h >= item_keys.size()) fail(ErrorKind::precondition, "history item out of range");
    hist_keys.push_back(item_keys[h]);
  }

  switch (strategy) {
    case Fusion::interleave: {
      if (hist_keys.empty()) fail(ErrorKind::precondition, "interleave needs a nonempty history");
      detail::require_keys(table, cand_keys);
      detail::require_keys(table, hist_keys);
      const auto sims = detail::profile_scores(table, hist_keys, cand_keys, params.aggregate);
      std::vector<Scored> by_sim(candidates.size());
      for (std::size_t i = 0; i < candidates.size(); ++i) by_sim[i] = {candidates[i].item, sims[i]};
      std::map<std::uint32_t, double> mf_score;
      for (const auto& c : candidates) mf_score[c.item] = c.score;
      auto by_mf = candidates;
      detail::top_k(by_mf, k);
      detail::top_k(by_sim, k);
      std::vector<Scored> out;
      std::set<std::uint32_t> used;
      for (std::size_t r = 0; out.size() < k && (r < by_mf.size() || r < by_sim.size()); ++r) {
        for (const auto* list : {&by_mf, &by_sim}) {
          if (r < list->size() && out.size() < k && used.insert((*list)[r].item).second)
            out.push_back({(*list)[r].item, mf_score[(*list)[r].item]});
        }
      }
      return out;
    }
    case Fusion::weighted_sum: {
      if (!(params.beta >= 0 && params.beta <= 1))
        fail(ErrorKind::config, "beta must lie in [0, 1]");
      std::vector<double> mf(candidates.size());
      for (std::size_t i = 0; i < candidates.size(); ++i) mf[i] = candidates[i].score;
      detail::minmax_normalize(mf);
      std::vector<double> sim(candidates.size(), 0.0);
      if (params.beta < 1) {
        if (hist_keys.empty()) fail(ErrorKind::precondition, "weighted_sum needs a nonempty history");
        detail::require_keys(table, cand_keys);
        detail::require_keys(table, hist_keys);
        sim = detail::profile_scores(table, hist_keys, cand_keys, params.aggregate);
        detail::minmax_normalize(sim);
      }
      for (std::size_t i = 0; i < candidates.size(); ++i)
        candidates[i].score = params.beta * mf[i] + (1 - params.beta) * sim[i];
      detail::top_k(candidates, k);
      return candidates;
    }
    case Fusion::cluster_boost: {
      if (!params.clusters) fail(ErrorKind::precondition, "cluster_boost needs a cluster assignment");
      const auto& labels = params.clusters->labels;
      auto label_of = [&](const std::string& key) {
        auto it = labels.find(key);
        if (it == labels.end()) fail(ErrorKind::lookup, "no cluster label for item '" + key + "'");
        return it->second;
      };
      std::map<int, std::size_t> counts;
      for (const auto& h : hist_keys) ++counts[label_of(h)];
      std::optional<int> modal;
      std::size_t best = 0;
      for (const auto& [c, n] : counts)
        if (n > best) {
          best = n;
          modal = c;
        }
      std::vector<double> mf(candidates.size());
      for (std::size_t i = 0; i < candidates.size(); ++i) mf[i] = candidates[i].score;
      detail::minmax_normalize(mf);
      const auto [lo, hi] = std::minmax_element(mf.begin(), mf.end());
      const double gamma = params.gamma.value_or((*hi - *lo) * 0.1);
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        candidates[i].score = mf[i];
        if (modal && label_of(cand_keys[i]) == *modal) candidates[i].score += gamma;
      }
      detail::top_k(candidates, k);
      return candidates;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Model artifact. Binary layout (little-endian):
//   "FMDL", version u16 (= 1), kind u8, biased u8, n_users u32, n_items u32,
//   factors u32, global_mean f32, then row-major f32 user factors, item
//   factors, and (when biased) user biases and item biases.

namespace detail {

inline void put_f32(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  embed::detail::put_u32(out, bits);
}

inline double get_f32(std::istream& in) {
  unsigned char b[4];
  if (!embed::detail::get_bytes(in, reinterpret_cast<char*>(b), 4))
    fail(ErrorKind::format, "truncated model artifact");
  const float v = std::bit_cast<float>(embed::detail::le32(b));
  if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite value in model artifact");
  return v;
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!embed::detail::get_bytes(in, reinterpret_cast<char*>(b), 4))
    fail(ErrorKind::format, "truncated model artifact header");
  return embed::detail::le32(b);
}

}  // namespace detail

inline void save_model(const FactorModel& m, std::ostream& out) {
  out.write("FMDL", 4);
  embed::detail::put_u16(out, 1);
  const char flags[2] = {char(static_cast<int>(m.kind)), char(m.biased() ? 1 : 0)};
  out.write(flags, 2);
  embed::detail::put_u32(out, std::uint32_t(m.n_users()));
  embed::detail::put_u32(out, std::uint32_t(m.n_items()));
  embed::detail::put_u32(out, std::uint32_t(m.factors()));
  detail::put_f32(out, m.global_mean.value_or(0.0));
  for (const auto* mat : {&m.user_factors, &m.item_factors})
    for (Eigen::Index r = 0; r < mat->rows(); ++r)
      for (Eigen::Index c = 0; c < mat->cols(); ++c) detail::put_f32(out, (*mat)(r, c));
  if (m.biased()) {
    for (Eigen::Index r = 0; r < m.user_bias->size(); ++r) detail::put_f32(out, (*m.user_bias)(r));
    for (Eigen::Index r = 0; r < m.item_bias->size(); ++r) detail::put_f32(out, (*m.item_bias)(r));
  }
  if (!out) fail(ErrorKind::io, "failed writing model artifact");
}

inline FactorModel load_model(std::istream& in) {
  char magic[4];
  if (!embed::detail::get_bytes(in, magic, 4) || std::memcmp(magic, "FMDL", 4) != 0)
    fail(ErrorKind::format, "bad magic, expected \"FMDL\"");
  unsigned char head[4];
  if (!embed::detail::get_bytes(in, reinterpret_cast<char*>(head), 4))
    fail(ErrorKind::format, "truncated model artifact header");
  if ((head[0] | head[1] << 8) != 1) fail(ErrorKind::format, "unsupported model version");
  if (head[2] > 2) fail(ErrorKind::format, "bad model kind");
  FactorModel m;
  m.kind = static_cast<ModelKind>(head[2]);
  const bool biased = head[3] != 0;
  const auto nu = detail::get_u32(in), ni = detail::get_u32(in), f = detail::get_u32(in);
  const double mu = detail::get_f32(in);
  m.user_factors.resize(nu, f);
  m.item_factors.resize(ni, f);
  for (auto* mat : {&m.user_factors, &m.item_factors})
    for (Eigen::Index r = 0; r < mat->rows(); ++r)
      for (Eigen::Index c = 0; c < mat->cols(); ++c) (*mat)(r, c) = detail::get_f32(in);
  if (biased) {
    m.global_mean = mu;
    m.user_bias = Eigen::VectorXd(nu);
    m.item_bias = Eigen::VectorXd(ni);
    for (Eigen::Index r = 0; r < Eigen::Index(nu); ++r) (*m.user_bias)(r) = detail::get_f32(in);
    for (Eigen::Index r = 0; r < Eigen::Index(ni); ++r) (*m.item_bias)(r) = detail::get_f32(in);
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::format, "trailing bytes in model");
  return m;
}

inline nlohmann::json model_metadata(const FactorModel& m, const MfConfig& cfg,
                                     const std::vector<double>& loss) {
  nlohmann::json j;
  j["kind"] = to_string(m.kind);
  j["n_users"] = m.n_users();
  j["n_items"] = m.n_items();
  j["factors"] = m.factors();
  j["biased"] = m.biased();
  j["config"] = {{"learning_rate", cfg.learning_rate},
                 {"regularization", cfg.regularization},
                 {"alpha", cfg.alpha},
                 {"iterations", m.kind == ModelKind::implicit ? cfg.implicit_iterations()
                                                              : cfg.explicit_iterations()},
                 {"seed", cfg.seed}};
  j["loss"] = loss;
  return j;
}

}  // namespace plmrec::mf
