#pragma once

// Decision-tree ensembles: a Gini random forest (used for importance-based
// feature selection) and multi-class Newton gradient boosting with softmax
// cross-entropy.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "plmrec/embed_store.hpp"
#include "plmrec/error.hpp"
#include "plmrec/featlab.hpp"
#include "plmrec/rng.hpp"

namespace plmrec::trees {

// A split sends x[feature] < threshold to the left child.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> value;  // leaf only: class shares (forest) or a score (boosted)

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // root at 0

  const TreeNode& leaf_for(std::span<const double> row) const {
    const TreeNode* n = &nodes.front();
    while (!n->is_leaf()) n = &nodes[std::size_t(row[std::size_t(n->feature)] < n->threshold ? n->left : n->right)];
    return *n;
  }
  bool operator==(const Tree&) const = default;
};

enum class EnsembleKind { forest, boosted };

struct TreeEnsemble {
  EnsembleKind kind = EnsembleKind::boosted;
  std::vector<Tree> trees;  // boosted: round-major, n_classes trees per round
  std::size_t n_classes = 2;
  std::size_t n_features = 0;
  double learning_rate = 1.0;
  std::vector<double> base_score;           // boosted: per-class log prior
  std::vector<double> feature_importances;  // nonnegative, sums to 1
  std::vector<double> train_loss;           // boosted: log-loss before/after each round

  std::size_t rounds() const {
    return kind == EnsembleKind::boosted ? trees.size() / n_classes : trees.size();
  }
  bool operator==(const TreeEnsemble&) const = default;
};

struct TreeConfig {
  // forest
  std::size_t n_trees = 100;
  std::optional<std::size_t> forest_max_depth;     // unlimited by default
  std::optional<std::size_t> features_per_split;   // default ceil(sqrt(d))
  bool bootstrap = true;
  // boosted
  std::size_t rounds = 100;
  std::size_t max_depth = 6;
  double learning_rate = 0.1;
  double min_child_weight = 1.0;
  double lambda_l2 = 1.0;
  // shared
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees < 1) fail(ErrorKind::config, "n_trees must be >= 1");
    if (forest_max_depth && *forest_max_depth < 1) fail(ErrorKind::config, "forest depth must be >= 1");
    if (features_per_split && *features_per_split < 1)
      fail(ErrorKind::config, "features_per_split must be >= 1");
    if (max_depth < 1) fail(ErrorKind::config, "max_depth must be >= 1");
    if (!(learning_rate > 0 && learning_rate <= 1)) fail(ErrorKind::config, "learning_rate must be in (0, 1]");
    if (!(min_child_weight >= 0)) fail(ErrorKind::config, "min_child_weight must be >= 0");
    if (!(lambda_l2 >= 0)) fail(ErrorKind::config, "lambda_l2 must be >= 0");
  }
};

namespace detail {

inline void check_frame(const featlab::FeatureFrame& f) {
  if (f.rows() == 0) fail(ErrorKind::empty_dataset, "empty feature frame");
  if (f.cols() == 0) fail(ErrorKind::precondition, "feature frame has no features");
  if (f.n_classes < 2) fail(ErrorKind::precondition, "need n_classes >= 2");
  for (double v : f.values)
    if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite feature value");
  std::vector<std::size_t> counts(f.n_classes, 0);
  for (int y : f.labels) {
    if (y < 0 || std::size_t(y) >= f.n_classes)
      fail(ErrorKind::data, "label " + std::to_string(y) + " outside [0, n_classes)");
    ++counts[std::size_t(y)];
  }
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
    fail(ErrorKind::degenerate_label, "training labels contain a single class");
}

inline double split_point(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2;
  return mid > lo ? mid : hi;
}

inline void normalize_importances(std::vector<double>& imp) {
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (total > 0) {
    for (auto& v : imp) v /= total;
  } else {
    for (auto& v : imp) v = 1.0 / double(imp.size());
  }
}

inline std::size_t argmax_first(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// ---- forest ---------------------------------------------------------------

struct ForestBuilder {
  const featlab::FeatureFrame& frame;
  const std::vector<double>& weight;  // bootstrap multiplicities
  std::size_t features_per_split;
  std::optional<std::size_t> max_depth;
  Rng& rng;
  std::vector<double>& importance;
  Tree tree;

  static double gini(const std::vector<double>& counts, double total) {
    if (total <= 0) return 0;
    double s = 0;
    for (double c : counts) s += (c / total) * (c / total);
    return 1.0 - s;
  }

  int build(std::vector<std::uint32_t>& idx, std::size_t depth) {
    const std::size_t k = frame.n_classes;
    std::vector<double> counts(k, 0.0);
    double total = 0;
    for (auto i : idx) {
      counts[std::size_t(frame.labels[i])] += weight[i];
      total += weight[i];
    }
    const int id = int(tree.nodes.size());
    tree.nodes.emplace_back();
    const double parent_gini = gini(counts, total);

    auto make_leaf = [&] {
      auto& node = tree.nodes[std::size_t(id)];
      node.value.resize(k);
      for (std::size_t c = 0; c < k; ++c) node.value[c] = counts[c] / total;
      return id;
    };
    if (parent_gini <= 0 || total < 2 || (max_depth && depth >= *max_depth)) return make_leaf();

    // sample candidate features without replacement
    const std::size_t d = frame.cols();
    std::vector<std::size_t> feats(d);
    std::iota(feats.begin(), feats.end(), 0);
    const std::size_t m = std::min(features_per_split, d);
    for (std::size_t i = 0; i < m; ++i) std::swap(feats[i], feats[i + rng.below(d - i)]);
    feats.resize(m);
    std::sort(feats.begin(), feats.end());

    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0;
    std::vector<double> left(k);
    for (auto f : feats) {
      std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
        const double va = frame.at(a, f), vb = frame.at(b, f);
        return va < vb || (va == vb && a < b);
      });
      std::fill(left.begin(), left.end(), 0.0);
      double wl = 0;
      for (std::size_t p = 0; p + 1 < idx.size(); ++p) {
        const auto i = idx[p];
        left[std::size_t(frame.labels[i])] += weight[i];
        wl += weight[i];
        const double v = frame.at(i, f), next = frame.at(idx[p + 1], f);
        if (!(next > v)) continue;
        std::vector<double> right(k);
        for (std::size_t c = 0; c < k; ++c) right[c] = counts[c] - left[c];
        const double wr = total - wl;
        const double gain = total * parent_gini - wl * gini(left, wl) - wr * gini(right, wr);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = int(f);
          best_threshold = split_point(v, next);
        }
      }
    }
    if (best_feature < 0) return make_leaf();

    importance[std::size_t(best_feature)] += best_gain;
    std::vector<std::uint32_t> l, r;
    for (auto i : idx) (frame.at(i, std::size_t(best_feature)) < best_threshold ? l : r).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const int li = build(l, depth + 1);
    const int ri = build(r, depth + 1);
    auto& node = tree.nodes[std::size_t(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = li;
    node.right = ri;
    return id;
  }
};

}  // namespace detail

// Bagged Gini trees with a random feature subset per node. Importance is the
// weighted impurity decrease per feature summed over all trees, normalized.
inline TreeEnsemble fit_forest(const featlab::FeatureFrame& frame, const TreeConfig& cfg) {
  cfg.validate();
  detail::check_frame(frame);
  const auto n = frame.rows(), d = frame.cols();
  TreeEnsemble e;
  e.kind = EnsembleKind::forest;
  e.n_classes = frame.n_classes;
  e.n_features = d;
  e.feature_importances.assign(d, 0.0);
  const std::size_t per_split =
      cfg.features_per_split.value_or(std::size_t(std::ceil(std::sqrt(double(d)))));

  Rng rng(mix_seed(cfg.seed, 0x666f72ULL));
  for (std::size_t t = 0; t < cfg.n_trees; ++t) {
    std::vector<double> weight(n, cfg.bootstrap ? 0.0 : 1.0);
    if (cfg.bootstrap)
      for (std::size_t s = 0; s < n; ++s) weight[rng.below(n)] += 1.0;
    std::vector<std::uint32_t> idx;
    for (std::uint32_t i = 0; i < n; ++i)
      if (weight[i] > 0) idx.push_back(i);
    detail::ForestBuilder b{frame, weight, per_split, cfg.forest_max_depth, rng, e.feature_importances, {}};
    b.build(idx, 0);
    e.trees.push_back(std::move(b.tree));
  }
  detail::normalize_importances(e.feature_importances);
  return e;
}

// Keeps features with importance >= threshold, or the single most important
// one if none qualifies.
inline std::vector<std::string> select_features(const TreeEnsemble& e,
                                                const std::vector<std::string>& names,
                                                double threshold) {
  if (names.size() != e.feature_importances.size())
    fail(ErrorKind::dimension, std::to_string(names.size()) + " names for " +
                                   std::to_string(e.feature_importances.size()) + " importances");
  std::vector<std::string> keep;
  for (std::size_t i = 0; i < names.size(); ++i)
    if (e.feature_importances[i] >= threshold) keep.push_back(names[i]);
  if (keep.empty() && !names.empty())
    keep.push_back(names[detail::argmax_first(e.feature_importances)]);
  return keep;
}

// ---- boosting -------------------------------------------------------------

namespace detail {

inline void softmax(std::span<const double> scores, std::span<double> out) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) z += out[c] = std::exp(scores[c] - mx);
  for (auto& p : out) p /= z;
}

inline double log_loss(const std::vector<double>& scores, const std::vector<int>& labels,
                       std::size_t k) {
  double loss = 0;
  std::vector<double> p(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::span<const double> s(scores.data() + i * k, k);
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0;
    for (double v : s) z += std::exp(v - mx);
    loss -= s[std::size_t(labels[i])] - mx - std::log(z);
  }
  return loss / double(labels.size());
}

// Level-wise exact greedy regression tree on (gradient, hessian) pairs using
// columns presorted once per fit.
struct BoostTreeBuilder {
  const featlab::FeatureFrame& frame;
  const std::vector<std::vector<std::uint32_t>>& sorted;  // per feature
  const TreeConfig& cfg;

  Tree build(const std::vector<double>& g, const std::vector<double>& h,
             std::vector<double>& importance, std::vector<int>& leaf_of) const {
    const auto n = frame.rows(), d = frame.cols();
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<int> pos(n, 0);
    std::vector<int> active = {0};
    const double lambda = cfg.lambda_l2, eps = 1e-10;

    auto score = [lambda](double G, double H) { return G * G / (H + lambda); };
    auto leaf_value = [&](double G, double H) { return -G / (H + lambda) * cfg.learning_rate; };

    for (std::size_t depth = 0; !active.empty(); ++depth) {
      const auto n_nodes = tree.nodes.size();
      std::vector<double> G(n_nodes, 0), H(n_nodes, 0);
      for (std::size_t i = 0; i < n; ++i) {
        if (pos[i] < 0) continue;
        G[std::size_t(pos[i])] += g[i];
        H[std::size_t(pos[i])] += h[i];
      }
      std::vector<char> is_active(n_nodes, 0);
      for (int a : active) is_active[std::size_t(a)] = 1;

      std::vector<double> best_gain(n_nodes, eps), best_thr(n_nodes, 0);
      std::vector<int> best_feat(n_nodes, -1);
      if (depth < cfg.max_depth) {
        std::vector<double> gl(n_nodes), hl(n_nodes), last(n_nodes);
        std::vector<char> seen(n_nodes);
        for (std::size_t f = 0; f < d; ++f) {
          std::fill(gl.begin(), gl.end(), 0.0);
          std::fill(hl.begin(), hl.end(), 0.0);
          std::fill(seen.begin(), seen.end(), 0);
          for (auto i : sorted[f]) {
            const int p = pos[i];
            if (p < 0 || !is_active[std::size_t(p)]) continue;
            const auto node = std::size_t(p);
            const double v = frame.at(i, f);
            if (seen[node] && v > last[node]) {
              const double GR = G[node] - gl[node], HR = H[node] - hl[node];
              if (hl[node] >= cfg.min_child_weight && HR >= cfg.min_child_weight) {
                const double gain =
                    0.5 * (score(gl[node], hl[node]) + score(GR, HR) - score(G[node], H[node]));
                if (gain > best_gain[node]) {
                  best_gain[node] = gain;
                  best_feat[node] = int(f);
                  best_thr[node] = split_point(last[node], v);
                }
              }
            }
            gl[node] += g[i];
            hl[node] += h[i];
            last[node] = v;
            seen[node] = 1;
          }
        }
      }

      std::vector<int> next_active;
      std::vector<int> left_of(n_nodes, -1), right_of(n_nodes, -1);
      for (int a : active) {
        const auto node = std::size_t(a);
        if (best_feat[node] < 0) {
          tree.nodes[node].value = {leaf_value(G[node], H[node])};
          continue;
        }
        importance[std::size_t(best_feat[node])] += best_gain[node];
        const int li = int(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& nd = tree.nodes[node];
        nd.feature = best_feat[node];
        nd.threshold = best_thr[node];
        nd.left = li;
        nd.right = li + 1;
        left_of[node] = li;
        right_of[node] = li + 1;
        next_active.push_back(li);
        next_active.push_back(li + 1);
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (pos[i] < 0) continue;
        const auto node = std::size_t(pos[i]);
        if (left_of[node] < 0) {
          leaf_of[i] = pos[i];
          pos[i] = -1;
        } else {
          pos[i] = frame.at(i, std::size_t(tree.nodes[node].feature)) < tree.nodes[node].threshold
                       ? left_of[node]
                       : right_of[node];
        }
      }
      active = std::move(next_active);
    }
    return tree;
  }
};

}  // namespace detail

// Softmax Newton boosting: each round fits one regression tree per class to
// the gradients p - y with hessian weights p(1 - p); leaf value
// -sum(g) / (sum(h) + lambda), shrunk by the learning rate. Importance is the
// total split gain per feature, normalized.
inline TreeEnsemble fit_gbt(const featlab::FeatureFrame& frame, const TreeConfig& cfg) {
  cfg.validate();
  detail::check_frame(frame);
  const auto n = frame.rows(), d = frame.cols(), k = frame.n_classes;

  TreeEnsemble e;
  e.kind = EnsembleKind::boosted;
  e.n_classes = k;
  e.n_features = d;
  e.learning_rate = cfg.learning_rate;
  e.feature_importances.assign(d, 0.0);
  std::vector<double> counts(k, 0.0);
  for (int y : frame.labels) counts[std::size_t(y)] += 1;
  // classes absent from training get a half-count floor
  for (std::size_t c = 0; c < k; ++c) e.base_score.push_back(std::log(std::max(counts[c], 0.5) / double(n)));

  std::vector<std::vector<std::uint32_t>> sorted(d);
  for (std::size_t f = 0; f < d; ++f) {
    auto& s = sorted[f];
    s.resize(n);
    std::iota(s.begin(), s.end(), 0u);
    std::stable_sort(s.begin(), s.end(), [&](std::uint32_t a, std::uint32_t b) {
      return frame.at(a, f) < frame.at(b, f);
    });
  }

  std::vector<double> scores(n * k);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(e.base_score.begin(), e.base_score.end(), scores.begin() + std::ptrdiff_t(i * k));
  e.train_loss.push_back(detail::log_loss(scores, frame.labels, k));

  detail::BoostTreeBuilder builder{frame, sorted, cfg};
  std::vector<double> prob(n * k), g(n), h(n);
  std::vector<int> leaf_of(n);
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i)
      detail::softmax({scores.data() + i * k, k}, {prob.data() + i * k, k});
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = prob[i * k + c];
        g[i] = p - (std::size_t(frame.labels[i]) == c ? 1.0 : 0.0);
        h[i] = std::max(p * (1.0 - p), 1e-16);
      }
      Tree tree = builder.build(g, h, e.feature_importances, leaf_of);
      for (std::size_t i = 0; i < n; ++i)
        scores[i * k + c] += tree.nodes[std::size_t(leaf_of[i])].value[0];
      e.trees.push_back(std::move(tree));
    }
    e.train_loss.push_back(detail::log_loss(scores, frame.labels, k));
  }
  detail::normalize_importances(e.feature_importances);
  return e;
}

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;
};

// Forest: majority vote with vote shares as probabilities. Boosted: softmax
// of the summed scores. Ties go to the smallest class id.
inline Prediction predict(const TreeEnsemble& e, std::span<const double> row) {
  if (row.size() != e.n_features)
    fail(ErrorKind::dimension, "row width " + std::to_string(row.size()) + " vs " +
                                   std::to_string(e.n_features) + " features");
  Prediction p;
  p.probabilities.assign(e.n_classes, 0.0);
  if (e.kind == EnsembleKind::forest) {
    for (const auto& t : e.trees) {
      const auto& leaf = t.leaf_for(row);
      p.probabilities[detail::argmax_first(leaf.value)] += 1.0;
    }
    for (auto& v : p.probabilities) v /= double(e.trees.size());
  } else {
    std::vector<double> scores = e.base_score;
    for (std::size_t t = 0; t < e.trees.size(); ++t)
      scores[t % e.n_classes] += e.trees[t].leaf_for(row).value[0];
    detail::softmax(scores, p.probabilities);
  }
  p.label = int(detail::argmax_first(p.probabilities));
  return p;
}

inline std::vector<int> predict_labels(const TreeEnsemble& e, const featlab::FeatureFrame& f) {
  std::vector<int> out;
  out.reserve(f.rows());
  for (std::size_t r = 0; r < f.rows(); ++r) out.push_back(predict(e, f.row(r)).label);
  return out;
}

// ---- serialization ----------------------------------------------------------

inline nlohmann::json to_json(const TreeEnsemble& e) {
  nlohmann::json j;
  j["kind"] = e.kind == EnsembleKind::forest ? "forest" : "boosted";
  j["n_classes"] = e.n_classes;
  j["n_features"] = e.n_features;
  j["learning_rate"] = e.learning_rate;
  j["base_score"] = e.base_score;
  j["feature_importances"] = e.feature_importances;
  j["train_loss"] = e.train_loss;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& t : e.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) nodes.push_back({{"leaf", n.value}});
      else nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return j;
}

namespace detail {

inline void validate_tree(const Tree& t, std::size_t n_features) {
  if (t.nodes.empty()) fail(ErrorKind::format, "empty tree");
  for (const auto& n : t.nodes) {
    if (n.is_leaf()) {
      if (n.value.empty()) fail(ErrorKind::format, "leaf without value");
      for (double v : n.value)
        if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite leaf value");
      continue;
    }
    if (std::size_t(n.feature) >= n_features || !std::isfinite(n.threshold) || n.left <= 0 ||
        n.right <= 0 || std::size_t(n.left) >= t.nodes.size() || std::size_t(n.right) >= t.nodes.size())
      fail(ErrorKind::format, "malformed split node");
  }
}

}  // namespace detail

inline TreeEnsemble ensemble_from_json(const nlohmann::json& j) {
  TreeEnsemble e;
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "forest" && kind != "boosted") fail(ErrorKind::format, "unknown ensemble kind");
  e.kind = kind == "forest" ? EnsembleKind::forest : EnsembleKind::boosted;
  e.n_classes = j.at("n_classes").get<std::size_t>();
  e.n_features = j.at("n_features").get<std::size_t>();
  e.learning_rate = j.at("learning_rate").get<double>();
  e.base_score = j.at("base_score").get<std::vector<double>>();
  e.feature_importances = j.at("feature_importances").get<std::vector<double>>();
  e.train_loss = j.value("train_loss", std::vector<double>{});
  for (const auto& jt : j.at("trees")) {
    Tree t;
    for (const auto& jn : jt.at("nodes")) {
      TreeNode n;
      if (jn.contains("leaf")) {
        n.value = jn.at("leaf").get<std::vector<double>>();
      } else {
        n.feature = jn.at("feature").get<int>();
        n.threshold = jn.at("threshold").get<double>();
        n.left = jn.at("left").get<int>();
        n.right = jn.at("right").get<int>();
      }
      t.nodes.push_back(std::move(n));
    }
    detail::validate_tree(t, e.n_features);
    e.trees.push_back(std::move(t));
  }
  return e;
}

// Binary layout (little-endian): "TENS", version u16 (= 1), kind u8,
// n_classes u32, n_features u32, n_trees u32, learning_rate f64,
// base_score (u32 count + f64s), importances (n_features f64), then per tree
// n_nodes u32 and per node: feature i32, threshold f64, left i32, right i32,
// value count u32, values f64.
namespace detail {

inline void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  embed::detail::put_u32(out, std::uint32_t(bits & 0xFFFFFFFFu));
  embed::detail::put_u32(out, std::uint32_t(bits >> 32));
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!embed::detail::get_bytes(in, reinterpret_cast<char*>(b), 4))
    fail(ErrorKind::format, "truncated ensemble artifact");
  return embed::detail::le32(b);
}

inline double read_f64(std::istream& in) {
  const std::uint64_t lo = read_u32(in), hi = read_u32(in);
  return std::bit_cast<double>(lo | hi << 32);
}

}  // namespace detail

inline void save_ensemble(const TreeEnsemble& e, std::ostream& out) {
  out.write("TENS", 4);
  embed::detail::put_u16(out, 1);
  const char kind = e.kind == EnsembleKind::forest ? 0 : 1;
  out.write(&kind, 1);
  embed::detail::put_u32(out, std::uint32_t(e.n_classes));
  embed::detail::put_u32(out, std::uint32_t(e.n_features));
  embed::detail::put_u32(out, std::uint32_t(e.trees.size()));
  detail::put_f64(out, e.learning_rate);
  embed::detail::put_u32(out, std::uint32_t(e.base_score.size()));
  for (double v : e.base_score) detail::put_f64(out, v);
  for (double v : e.feature_importances) detail::put_f64(out, v);
  for (const auto& t : e.trees) {
    embed::detail::put_u32(out, std::uint32_t(t.nodes.size()));
    for (const auto& n : t.nodes) {
      embed::detail::put_u32(out, std::uint32_t(n.feature));
      detail::put_f64(out, n.threshold);
      embed::detail::put_u32(out, std::uint32_t(n.left));
      embed::detail::put_u32(out, std::uint32_t(n.right));
      embed::detail::put_u32(out, std::uint32_t(n.value.size()));
      for (double v : n.value) detail::put_f64(out, v);
    }
  }
  if (!out) fail(ErrorKind::io, "failed writing ensemble artifact");
}

inline TreeEnsemble load_ensemble(std::istream& in) {
  char magic[4];
  if (!embed::detail::get_bytes(in, magic, 4) || std::memcmp(magic, "TENS", 4) != 0)
    fail(ErrorKind::format, "bad magic, expected \"TENS\"");
  unsigned char head[3];
  if (!embed::detail::get_bytes(in, reinterpret_cast<char*>(head), 3))
    fail(ErrorKind::format, "truncated ensemble header");
  if ((head[0] | head[1] << 8) != 1) fail(ErrorKind::format, "unsupported ensemble version");
  if (head[2] > 1) fail(ErrorKind::format, "bad ensemble kind");
  TreeEnsemble e;
  e.kind = head[2] == 0 ? EnsembleKind::forest : EnsembleKind::boosted;
  e.n_classes = detail::read_u32(in);
  e.n_features = detail::read_u32(in);
  const auto n_trees = detail::read_u32(in);
  e.learning_rate = detail::read_f64(in);
  const auto n_base = detail::read_u32(in);
  if (n_base > e.n_classes) fail(ErrorKind::format, "bad base score count");
  for (std::uint32_t i = 0; i < n_base; ++i) e.base_score.push_back(detail::read_f64(in));
  for (std::size_t i = 0; i < e.n_features; ++i) e.feature_importances.push_back(detail::read_f64(in));
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    Tree tree;
    const auto n_nodes = detail::read_u32(in);
    for (std::uint32_t k = 0; k < n_nodes; ++k) {
      TreeNode n;
      n.feature = int(std::int32_t(detail::read_u32(in)));
      n.threshold = detail::read_f64(in);
      n.left = int(std::int32_t(detail::read_u32(in)));
      n.right = int(std::int32_t(detail::read_u32(in)));
      const auto nv = detail::read_u32(in);
      if (nv > e.n_classes) fail(ErrorKind::format, "bad leaf width");
      for (std::uint32_t v = 0; v < nv; ++v) n.value.push_back(detail::read_f64(in));
      tree.nodes.push_back(std::move(n));
    }
    detail::validate_tree(tree, e.n_features);
    e.trees.push_back(std::move(tree));
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::format, "trailing bytes in ensemble");
  return e;
}

}  // namespace plmrec::trees
