#pragma once

// Features derived from item embeddings: PCA reduction, k-means cluster
// labels, history-to-candidate similarity, and feature frames for the tree
// models.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "plmrec/csv.hpp"
#include "plmrec/embed_store.hpp"
#include "plmrec/error.hpp"
#include "plmrec/ingest.hpp"
#include "plmrec/rng.hpp"

namespace plmrec::featlab {

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  Eigen::VectorXd mean;                // dim
  Eigen::MatrixXd components;          // k x dim, orthonormal rows
  Eigen::VectorXd explained_variance;  // k, non-increasing
  double total_variance = 0.0;         // trace of the sample covariance

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t k() const { return static_cast<std::size_t>(components.rows()); }
};

// Top-k principal axes of the sample covariance (n-1 denominator). Each axis
// is signed so that its largest-magnitude coordinate is positive.
inline PcaModel pca_fit(const std::vector<std::vector<double>>& vectors, std::size_t k) {
  if (k < 1) fail(ErrorKind::precondition, "pca needs k >= 1");
  if (vectors.empty()) fail(ErrorKind::precondition, "pca needs data");
  const auto dim = vectors.front().size();
  if (k > dim)
    fail(ErrorKind::dimension, "k=" + std::to_string(k) + " exceeds dim=" + std::to_string(dim));
  if (vectors.size() < k + 1)
    fail(ErrorKind::precondition, "pca with k=" + std::to_string(k) + " needs at least " +
                                      std::to_string(k + 1) + " vectors");
  const auto n = vectors.size();
  Eigen::MatrixXd x(n, dim);
  for (std::size_t r = 0; r < n; ++r) {
    if (vectors[r].size() != dim) fail(ErrorKind::dimension, "ragged input to pca");
    for (std::size_t c = 0; c < dim; ++c) x(Eigen::Index(r), Eigen::Index(c)) = vectors[r][c];
  }
  PcaModel m;
  m.mean = x.colwise().mean().transpose();
  x.rowwise() -= m.mean.transpose();
  const Eigen::MatrixXd cov = (x.transpose() * x) / double(n - 1);
  m.total_variance = cov.trace();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) fail(ErrorKind::solver, "covariance eigensolve failed");
  const auto& values = solver.eigenvalues();  // ascending
  const auto& vecs = solver.eigenvectors();
  m.components.resize(Eigen::Index(k), Eigen::Index(dim));
  m.explained_variance.resize(Eigen::Index(k));
  for (std::size_t i = 0; i < k; ++i) {
    const auto col = Eigen::Index(dim - 1 - i);
    Eigen::VectorXd v = vecs.col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    m.components.row(Eigen::Index(i)) = v.transpose();
    m.explained_variance(Eigen::Index(i)) = std::max(0.0, values(col));
  }
  return m;
}

inline PcaModel pca_fit(const embed::EmbeddingTable& table, std::size_t k) {
  std::vector<std::vector<double>> rows;
  rows.reserve(table.size());
  for (const auto& [key, v] : table.rows()) rows.emplace_back(v.begin(), v.end());
  return pca_fit(rows, k);
}

template <typename T>
std::vector<double> pca_transform(const PcaModel& m, std::span<const T> v) {
  if (v.size() != m.dim())
    fail(ErrorKind::dimension, "vector dim " + std::to_string(v.size()) + " vs model dim " +
                                   std::to_string(m.dim()));
  Eigen::VectorXd centered(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    centered(Eigen::Index(i)) = double(v[i]) - m.mean(Eigen::Index(i));
  const Eigen::VectorXd proj = m.components * centered;
  return {proj.data(), proj.data() + proj.size()};
}

inline std::vector<double> pca_transform(const PcaModel& m, const std::vector<double>& v) {
  return pca_transform(m, std::span<const double>(v));
}

inline std::vector<double> pca_inverse_transform(const PcaModel& m, const std::vector<double>& z) {
  if (z.size() != m.k()) fail(ErrorKind::dimension, "projection has wrong width");
  const Eigen::Map<const Eigen::VectorXd> zz(z.data(), Eigen::Index(z.size()));
  const Eigen::VectorXd v = m.components.transpose() * zz + m.mean;
  return {v.data(), v.data() + v.size()};
}

// Projects every row of a table; keys preserved.
inline std::map<std::string, std::vector<double>> project_table(const PcaModel& m,
                                                                const embed::EmbeddingTable& t) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [key, v] : t.rows()) out.emplace(key, pca_transform(m, std::span<const float>(v)));
  return out;
}

inline nlohmann::json to_json(const PcaModel& m) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j;
  j["dim"] = m.dim();
  j["k"] = m.k();
  j["mean"] = vec(m.mean);
  j["explained_variance"] = vec(m.explained_variance);
  j["total_variance"] = m.total_variance;
  auto& comps = j["components"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.components.rows(); ++i)
    comps.push_back(vec(m.components.row(i).transpose()));
  return j;
}

inline PcaModel pca_from_json(const nlohmann::json& j) {
  PcaModel m;
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto ev = j.at("explained_variance").get<std::vector<double>>();
  const auto comps = j.at("components").get<std::vector<std::vector<double>>>();
  m.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), Eigen::Index(mean.size()));
  m.explained_variance = Eigen::Map<const Eigen::VectorXd>(ev.data(), Eigen::Index(ev.size()));
  m.total_variance = j.at("total_variance").get<double>();
  m.components.resize(Eigen::Index(comps.size()), m.mean.size());
  for (std::size_t i = 0; i < comps.size(); ++i) {
    if (comps[i].size() != mean.size()) fail(ErrorKind::format, "pca component width");
    for (std::size_t c = 0; c < mean.size(); ++c)
      m.components(Eigen::Index(i), Eigen::Index(c)) = comps[i][c];
  }
  return m;
}

// ---------------------------------------------------------------------------
// k-means

struct ClusterAssignment {
  std::size_t k = 0;
  std::vector<std::vector<double>> centroids;
  std::map<std::string, int> labels;
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::vector<double> inertia_history;  // after each assignment step
};

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

// k-means++ seeding followed by Lloyd iterations until the assignment stops
// changing or max_iter is reached. An empty cluster takes over the point
// farthest from its current centroid.
inline ClusterAssignment kmeans(const std::map<std::string, std::vector<double>>& vectors,
                                std::size_t k, std::uint64_t seed, std::size_t max_iter = 300) {
  if (k < 1) fail(ErrorKind::precondition, "kmeans needs k >= 1");
  std::vector<const std::string*> keys;
  std::vector<const std::vector<double>*> pts;
  for (const auto& [key, v] : vectors) {
    keys.push_back(&key);
    pts.push_back(&v);
  }
  const auto n = pts.size();
  {
    std::set<std::vector<double>> distinct;
    for (auto* p : pts) distinct.insert(*p);
    if (distinct.size() < k)
      fail(ErrorKind::clustering, std::to_string(distinct.size()) + " distinct vectors for k=" +
                                      std::to_string(k));
  }
  const auto dim = pts.front()->size();
  for (auto* p : pts)
    if (p->size() != dim) fail(ErrorKind::dimension, "ragged input to kmeans");

  Rng rng(mix_seed(seed, 0x6b6d65616e73ULL));
  ClusterAssignment out;
  out.k = k;
  out.centroids.push_back(*pts[rng.below(n)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = detail::sq_dist(*pts[i], out.centroids[0]);
  while (out.centroids.size() < k) {
    double total = 0;
    for (double d : d2) total += d;
    const double target = rng.uniform() * total;
    double acc = 0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0) continue;
      acc += d2[i];
      pick = i;
      if (acc > target) break;
    }
    out.centroids.push_back(*pts[pick]);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], detail::sq_dist(*pts[i], out.centroids.back()));
  }

  std::vector<int> assign(n, -1), next(n);
  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    double inertia = 0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = detail::sq_dist(*pts[i], out.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = int(c);
        }
      }
      next[i] = best;
      dist[i] = best_d;
      inertia += best_d;
    }
    out.inertia_history.push_back(inertia);
    out.inertia = inertia;
    out.iterations = iter + 1;
    if (next == assign) break;
    assign = next;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[std::size_t(assign[i])];
      auto& s = sums[std::size_t(assign[i])];
      for (std::size_t d = 0; d < dim; ++d) s[d] += (*pts[i])[d];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t d = 0; d < dim; ++d) out.centroids[c][d] = sums[c][d] / double(counts[c]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      taken[far] = true;
      out.centroids[c] = *pts[far];
    }
  }
  for (std::size_t i = 0; i < n; ++i) out.labels[*keys[i]] = next[i];
  return out;
}

inline int nearest_cluster(const ClusterAssignment& c, const std::vector<double>& v) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c.centroids.size(); ++i) {
    const double d = detail::sq_dist(v, c.centroids[i]);
    if (d < best_d) {
      best_d = d;
      best = int(i);
    }
  }
  return best;
}

inline nlohmann::json to_json(const ClusterAssignment& c) {
  nlohmann::json j;
  j["k"] = c.k;
  j["centroids"] = c.centroids;
  j["labels"] = c.labels;
  j["inertia"] = c.inertia;
  j["iterations"] = c.iterations;
  return j;
}

inline ClusterAssignment clusters_from_json(const nlohmann::json& j) {
  ClusterAssignment c;
  c.k = j.at("k").get<std::size_t>();
  c.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
  c.labels = j.at("labels").get<std::map<std::string, int>>();
  c.inertia = j.value("inertia", 0.0);
  c.iterations = j.value("iterations", std::size_t{0});
  for (const auto& [key, label] : c.labels)
    if (label < 0 || std::size_t(label) >= c.k) fail(ErrorKind::format, "cluster label out of range");
  return c;
}

// ---------------------------------------------------------------------------
// Profile similarity

enum class SimilarityAggregate { mean, max };

inline double user_profile_similarity(const std::vector<std::string>& history,
                                      const std::string& candidate,
                                      const embed::EmbeddingTable& table,
                                      SimilarityAggregate agg = SimilarityAggregate::mean) {
  if (history.empty()) fail(ErrorKind::precondition, "history must be nonempty");
  const auto cand = table.at(candidate);
  double acc = agg == SimilarityAggregate::mean ? 0.0 : -std::numeric_limits<double>::infinity();
  for (const auto& h : history) {
    const double c = embed::cosine(table.at(h), cand);
    acc = agg == SimilarityAggregate::mean ? acc + c : std::max(acc, c);
  }
  return agg == SimilarityAggregate::mean ? acc / double(history.size()) : acc;
}

// ---------------------------------------------------------------------------
// Feature frames

struct FeatureFrame {
  std::vector<std::string> feature_names;
  std::vector<bool> categorical_mask;
  std::vector<double> values;  // row-major, rows() x cols()
  std::vector<int> labels;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> row_keys;  // (user, item)
  std::size_t n_classes = 5;

  std::size_t cols() const { return feature_names.size(); }
  std::size_t rows() const { return labels.size(); }

  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols(), cols()};
  }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  // Frame restricted to the named columns, in the given order.
  FeatureFrame select(const std::vector<std::string>& names) const {
    std::vector<std::size_t> idx;
    for (const auto& name : names) {
      auto it = std::find(feature_names.begin(), feature_names.end(), name);
      if (it == feature_names.end()) fail(ErrorKind::lookup, "no feature '" + name + "'");
      idx.push_back(std::size_t(it - feature_names.begin()));
    }
    FeatureFrame out;
    out.n_classes = n_classes;
    out.labels = labels;
    out.row_keys = row_keys;
    for (auto i : idx) {
      out.feature_names.push_back(feature_names[i]);
      out.categorical_mask.push_back(categorical_mask[i]);
    }
    out.values.reserve(rows() * idx.size());
    for (std::size_t r = 0; r < rows(); ++r)
      for (auto i : idx) out.values.push_back(at(r, i));
    return out;
  }
};

inline const std::vector<std::string>& known_features() {
  static const std::vector<std::string> names = {"user_id",    "stock_code",    "invoice_count",
                                                 "country",    "unit_price",    "cluster_label",
                                                 "embed_2d",   "embed_10d"};
  return names;
}

// One row per matrix entry in (user, item) order. Categorical features carry
// stable integer codes: user and item codes are the dataset's dense indexes,
// countries are coded in lexicographic order. invoice_count is the number of
// distinct invoices of the row's user; unit_price is the mean price the user
// paid for the item.
inline FeatureFrame assemble_features(const ingest::InteractionMatrix& m,
                                      const ingest::CleanDataset& ds,
                                      const embed::EmbeddingTable* table, const PcaModel* pca,
                                      const ClusterAssignment* clusters,
                                      const std::vector<std::string>& recipe) {
  const auto& known = known_features();
  if (recipe.empty()) fail(ErrorKind::recipe, "empty feature recipe");
  std::set<std::string> seen;
  for (const auto& f : recipe) {
    if (std::find(known.begin(), known.end(), f) == known.end())
      fail(ErrorKind::recipe, "unknown feature '" + f + "'");
    if (!seen.insert(f).second) fail(ErrorKind::recipe, "duplicate feature '" + f + "'");
    if (f == "embed_2d" || f == "embed_10d") {
      const std::size_t need = f == "embed_2d" ? 2 : 10;
      if (!table) fail(ErrorKind::recipe, f + " requires an embedding table");
      if (!pca) fail(ErrorKind::recipe, f + " requires a PCA model");
      if (pca->dim() != table->dim())
        fail(ErrorKind::recipe, f + ": PCA dim " + std::to_string(pca->dim()) +
                                    " does not match embedding dim " + std::to_string(table->dim()));
      if (pca->k() < need)
        fail(ErrorKind::recipe, f + " needs a PCA model with k >= " + std::to_string(need));
    }
    if (f == "cluster_label" && !clusters)
      fail(ErrorKind::recipe, "cluster_label requires a cluster assignment");
  }
  if (m.mode != ingest::MatrixMode::rating_label)
    fail(ErrorKind::precondition, "feature frames need a rating_label matrix");
  if (m.n_users != ds.n_users || m.n_items != ds.n_items)
    fail(ErrorKind::dimension, "matrix does not match dataset indexes");

  std::vector<std::set<std::string>> invoices(ds.n_users);
  std::vector<std::map<std::string, std::size_t>> user_countries(ds.n_users);
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<double, std::size_t>> prices;
  std::set<std::string> country_names;
  for (const auto& t : ds.rows) {
    const auto u = std::uint32_t(ds.user_index.at(*t.customer_id));
    const auto i = std::uint32_t(ds.item_index.at(t.stock_code));
    invoices[u].insert(t.invoice_id);
    ++user_countries[u][t.country];
    country_names.insert(t.country);
    auto& p = prices[{u, i}];
    p.first += t.unit_price;
    ++p.second;
  }
  std::map<std::string, int> country_code;
  for (const auto& c : country_names) country_code.emplace(c, int(country_code.size()));
  std::vector<int> user_country(ds.n_users, 0);
  for (std::size_t u = 0; u < ds.n_users; ++u) {
    std::size_t best = 0;
    for (const auto& [c, cnt] : user_countries[u])
      if (cnt > best) {
        best = cnt;
        user_country[u] = country_code.at(c);
      }
  }

  std::map<std::uint32_t, std::vector<double>> item_proj;
  auto projection = [&](std::uint32_t item) -> const std::vector<double>& {
    auto it = item_proj.find(item);
    if (it != item_proj.end()) return it->second;
    const auto& key = ds.item_keys[item];
    if (!table->contains(key)) fail(ErrorKind::lookup, "no embedding for item '" + key + "'");
    return item_proj.emplace(item, pca_transform(*pca, table->at(key))).first->second;
  };

  FeatureFrame out;
  out.n_classes = m.bins ? m.bins->n_bins : 5;
  for (const auto& f : recipe) {
    if (f == "embed_2d" || f == "embed_10d") {
      const std::size_t w = f == "embed_2d" ? 2 : 10;
      for (std::size_t d = 0; d < w; ++d) {
        out.feature_names.push_back(f + "_" + std::to_string(d));
        out.categorical_mask.push_back(false);
      }
    } else {
      out.feature_names.push_back(f);
      out.categorical_mask.push_back(f == "user_id" || f == "stock_code" || f == "country" ||
                                     f == "cluster_label");
    }
  }
  out.values.reserve(m.entries.size() * out.cols());
  for (const auto& e : m.entries) {
    for (const auto& f : recipe) {
      if (f == "user_id") out.values.push_back(e.user);
      else if (f == "stock_code") out.values.push_back(e.item);
      else if (f == "invoice_count") out.values.push_back(double(invoices[e.user].size()));
      else if (f == "country") out.values.push_back(user_country[e.user]);
      else if (f == "unit_price") {
        auto it = prices.find({e.user, e.item});
        out.values.push_back(it == prices.end() ? 0.0 : it->second.first / double(it->second.second));
      } else if (f == "cluster_label") {
        const auto& key = ds.item_keys[e.item];
        auto it = clusters->labels.find(key);
        if (it == clusters->labels.end())
          fail(ErrorKind::lookup, "no cluster label for item '" + key + "'");
        out.values.push_back(it->second);
      } else {
        const std::size_t w = f == "embed_2d" ? 2 : 10;
        const auto& proj = projection(e.item);
        for (std::size_t d = 0; d < w; ++d) out.values.push_back(proj[d]);
      }
    }
    const int label = static_cast<int>(std::llround(e.value));
    if (label < 0 || std::size_t(label) >= out.n_classes)
      fail(ErrorKind::data, "rating label " + std::to_string(label) + " out of range");
    out.labels.push_back(label);
    out.row_keys.emplace_back(e.user, e.item);
  }
  return out;
}

inline void write_frame_csv(const FeatureFrame& f, std::ostream& out) {
  std::vector<std::string> header = f.feature_names;
  header.push_back("label");
  csv::write_row(out, header);
  for (std::size_t r = 0; r < f.rows(); ++r) {
    for (std::size_t c = 0; c < f.cols(); ++c) out << ingest::format_double(f.at(r, c)) << ',';
    out << f.labels[r] << '\n';
  }
}

}  // namespace plmrec::featlab
