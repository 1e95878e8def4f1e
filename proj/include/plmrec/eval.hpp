#pragma once

// Classification and top-k ranking metrics, plus mean/std aggregation over
// repeated trials.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "plmrec/error.hpp"

namespace plmrec::eval {

struct LabelStats {
  std::size_t support = 0;  // occurrences in truth
  double precision = 0.0;
  double recall = 0.0;      // also the per-label accuracy
  double f1 = 0.0;
};

struct ClassReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  std::vector<LabelStats> per_label;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][pred]
  std::vector<std::string> warnings;
};

// Macro averages run over the labels present in truth. A label's precision
// is 0 when it is never predicted.
inline ClassReport classification_report(const std::vector<int>& pred, const std::vector<int>& truth,
                                         std::size_t n_classes) {
  if (pred.size() != truth.size())
    fail(ErrorKind::evaluation, "pred/truth length mismatch: " + std::to_string(pred.size()) +
                                    " vs " + std::to_string(truth.size()));
  if (truth.empty()) fail(ErrorKind::evaluation, "empty evaluation input");
  ClassReport r;
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || std::size_t(truth[i]) >= n_classes || pred[i] < 0 ||
        std::size_t(pred[i]) >= n_classes)
      fail(ErrorKind::evaluation, "label outside [0, n_classes) at position " + std::to_string(i));
    ++r.confusion[std::size_t(truth[i])][std::size_t(pred[i])];
    correct += truth[i] == pred[i];
  }
  const double n = double(truth.size());
  r.accuracy = double(correct) / n;
  r.micro_precision = r.micro_recall = r.micro_f1 = r.accuracy;

  std::size_t present = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    LabelStats s;
    std::size_t predicted = 0;
    for (std::size_t t = 0; t < n_classes; ++t) {
      s.support += r.confusion[c][t];
      predicted += r.confusion[t][c];
    }
    const double tp = double(r.confusion[c][c]);
    s.precision = predicted ? tp / double(predicted) : 0.0;
    s.recall = s.support ? tp / double(s.support) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    if (s.support > 0) {
      ++present;
      r.macro_precision += s.precision;
      r.macro_recall += s.recall;
      r.macro_f1 += s.f1;
    } else {
      r.warnings.push_back("label " + std::to_string(c) + " absent from truth; excluded from macro average");
    }
    r.per_label.push_back(s);
  }
  r.macro_precision /= double(present);
  r.macro_recall /= double(present);
  r.macro_f1 /= double(present);
  return r;
}

struct RankingReport {
  std::size_t k = 5;
  std::size_t users = 0;
  double precision_at_k = 0.0;
  double recall_at_k = 0.0;
  double f1_at_k = 0.0;
  double map_at_k = 0.0;
};

// Per-user precision |hits|/k, recall |hits|/|relevant| and AP@k =
// sum over hit ranks i of P@i, divided by min(k, |relevant|); averaged over
// users. F1 is the harmonic mean of the averaged precision and recall.
template <typename Item>
RankingReport ranking_report(const std::map<std::size_t, std::vector<Item>>& recs,
                             const std::map<std::size_t, std::set<Item>>& relevant, std::size_t k) {
  if (k < 1) fail(ErrorKind::evaluation, "k must be >= 1");
  if (recs.empty()) fail(ErrorKind::evaluation, "no users to evaluate");
  RankingReport r;
  r.k = k;
  for (const auto& [user, list] : recs) {
    auto it = relevant.find(user);
    if (it == relevant.end() || it->second.empty())
      fail(ErrorKind::evaluation, "user " + std::to_string(user) + " has no relevant items");
    const auto& rel = it->second;
    std::size_t hits = 0;
    double ap = 0;
    for (std::size_t i = 0; i < std::min(k, list.size()); ++i) {
      if (rel.contains(list[i])) {
        ++hits;
        ap += double(hits) / double(i + 1);
      }
    }
    r.precision_at_k += double(hits) / double(k);
    r.recall_at_k += double(hits) / double(rel.size());
    r.map_at_k += ap / double(std::min(k, rel.size()));
  }
  r.users = recs.size();
  const double u = double(r.users);
  r.precision_at_k /= u;
  r.recall_at_k /= u;
  r.map_at_k /= u;
  const double pr = r.precision_at_k + r.recall_at_k;
  r.f1_at_k = pr > 0 ? 2 * r.precision_at_k * r.recall_at_k / pr : 0.0;
  return r;
}

// ---------------------------------------------------------------------------

using MetricBundle = std::map<std::string, double>;

inline MetricBundle to_bundle(const ClassReport& r) {
  return {{"accuracy", r.accuracy},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"macro_f1", r.macro_f1}};
}

inline MetricBundle to_bundle(const RankingReport& r) {
  return {{"precision_at_k", r.precision_at_k},
          {"recall_at_k", r.recall_at_k},
          {"f1_at_k", r.f1_at_k},
          {"map_at_k", r.map_at_k}};
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct TrialSummary {
  std::size_t n = 0;
  bool std_defined = false;  // false for a single trial; std reported as 0
  std::map<std::string, MeanStd> metrics;
};

inline TrialSummary aggregate_trials(const std::vector<MetricBundle>& reports) {
  if (reports.empty()) fail(ErrorKind::evaluation, "no reports to aggregate");
  for (const auto& r : reports) {
    bool same = r.size() == reports.front().size();
    for (auto a = r.begin(), b = reports.front().begin(); same && a != r.end(); ++a, ++b)
      same = a->first == b->first;
    if (!same) fail(ErrorKind::evaluation, "reports have heterogeneous metric keys");
  }
  TrialSummary s;
  s.n = reports.size();
  s.std_defined = s.n >= 2;
  for (const auto& [key, unused] : reports.front()) {
    double mean = 0;
    for (const auto& r : reports) mean += r.at(key);
    mean /= double(s.n);
    double var = 0;
    if (s.std_defined) {
      for (const auto& r : reports) var += (r.at(key) - mean) * (r.at(key) - mean);
      var /= double(s.n - 1);
    }
    s.metrics[key] = {mean, std::sqrt(var)};
  }
  return s;
}

// "74.8 (0.2)": mean and std as percentages with one decimal.
inline std::string format_cell(const MeanStd& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f (%.1f)", m.mean * 100.0, m.std * 100.0);
  return buf;
}

// Aligned text table, one row per named summary, one column per metric.
inline std::string format_table(const std::vector<std::pair<std::string, TrialSummary>>& rows) {
  if (rows.empty()) return {};
  std::vector<std::string> metrics;
  for (const auto& [k, v] : rows.front().second.metrics) metrics.push_back(k);
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"model"});
  for (const auto& m : metrics) cells.back().push_back(m);
  for (const auto& [name, s] : rows) {
    cells.push_back({name});
    for (const auto& m : metrics) {
      auto it = s.metrics.find(m);
      cells.back().push_back(it == s.metrics.end() ? "-" : format_cell(it->second));
    }
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c) out += "  ";
      out += cells[r][c];
      if (c + 1 < cells[r].size()) out.append(width[c] - cells[r][c].size(), ' ');
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const ClassReport& r) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  j["micro_precision"] = r.micro_precision;
  j["micro_recall"] = r.micro_recall;
  j["micro_f1"] = r.micro_f1;
  auto& labels = j["per_label"] = nlohmann::json::array();
  for (const auto& s : r.per_label)
    labels.push_back({{"support", s.support},
                      {"accuracy", s.recall},
                      {"precision", s.precision},
                      {"recall", s.recall},
                      {"f1", s.f1}});
  j["confusion"] = r.confusion;
  j["warnings"] = r.warnings;
  return j;
}

inline nlohmann::json to_json(const RankingReport& r) {
  return {{"k", r.k},
          {"users", r.users},
          {"precision_at_k", r.precision_at_k},
          {"recall_at_k", r.recall_at_k},
          {"f1_at_k", r.f1_at_k},
          {"map_at_k", r.map_at_k}};
}

inline nlohmann::json to_json(const TrialSummary& s) {
  nlohmann::json j;
  j["n"] = s.n;
  j["std_defined"] = s.std_defined;
  for (const auto& [k, m] : s.metrics) j["metrics"][k] = {{"mean", m.mean}, {"std", m.std}};
  return j;
}

inline TrialSummary summary_from_json(const nlohmann::json& j) {
  TrialSummary s;
  s.n = j.at("n").get<std::size_t>();
  s.std_defined = j.at("std_defined").get<bool>();
  for (const auto& [k, v] : j.at("metrics").items())
    s.metrics[k] = {v.at("mean").get<double>(), v.at("std").get<double>()};
  return s;
}

}  // namespace plmrec::eval
