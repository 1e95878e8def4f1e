#pragma once

// Transaction log ingestion: CSV parsing, cleaning, quantity binning and the
// sparse user-item interaction matrix.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "plmrec/csv.hpp"
#include "plmrec/error.hpp"
#include "plmrec/rng.hpp"

namespace plmrec::ingest {

struct Transaction {
  std::string invoice_id;
  std::string stock_code;
  std::string description;
  std::int64_t quantity = 0;
  std::chrono::sys_seconds date{};
  double unit_price = 0.0;
  std::optional<std::string> customer_id;
  std::string country;

  bool operator==(const Transaction&) const = default;
};

// Header names for each field. Description and Country may be absent from
// the file; every other column is mandatory.
struct Schema {
  std::string invoice = "InvoiceNo";
  std::string stock_code = "StockCode";
  std::string description = "Description";
  std::string quantity = "Quantity";
  std::string date = "InvoiceDate";
  std::string unit_price = "UnitPrice";
  std::string customer = "CustomerID";
  std::string country = "Country";
};

struct RowIssue {
  std::size_t line = 0;
  std::string message;
  bool fatal = true;  // false: row kept but flagged (e.g. invalid UTF-8 replaced)
};

struct ParseResult {
  std::vector<Transaction> rows;
  std::vector<RowIssue> issues;
  std::size_t data_rows = 0;  // every record after the header, good or bad

  std::size_t error_count() const {
    return static_cast<std::size_t>(
        std::count_if(issues.begin(), issues.end(), [](const RowIssue& i) { return i.fatal; }));
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

// Replaces malformed UTF-8 sequences with U+FFFD. Returns true if anything
// was replaced.
inline bool sanitize_utf8(std::string& s) {
  std::string out;
  bool replaced = false;
  std::size_t i = 0;
  const auto n = s.size();
  auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  while (i < n) {
    const unsigned char c = byte(i);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    }
    bool ok = len > 0 && i + len <= n;
    for (std::size_t k = 1; ok && k < len; ++k) {
      if ((byte(i + k) & 0xC0) != 0x80) ok = false;
      else cp = (cp << 6) | (byte(i + k) & 0x3F);
    }
    if (ok) {
      // overlong forms, surrogates and out-of-range code points
      static constexpr std::uint32_t min_cp[5] = {0, 0, 0x80, 0x800, 0x10000};
      if (cp < min_cp[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) ok = false;
    }
    if (ok) {
      out.append(s, i, len);
      i += len;
    } else {
      out += "\xEF\xBF\xBD";
      replaced = true;
      ++i;
    }
  }
  if (replaced) s = std::move(out);
  return replaced;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || s.empty()) return std::nullopt;
  // tolerate "6.0" as written by spreadsheet exports
  std::string_view rest(p, static_cast<std::size_t>(s.data() + s.size() - p));
  if (!rest.empty()) {
    if (rest.front() != '.') return std::nullopt;
    rest.remove_prefix(1);
    if (rest.find_first_not_of('0') != std::string_view::npos) return std::nullopt;
  }
  return v;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || s.empty() || p != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

// Accepts "M/D/YYYY H:MM[:SS]" (the UCI export) and "YYYY-MM-DD HH:MM[:SS]".
inline std::optional<std::chrono::sys_seconds> parse_timestamp(std::string_view s) {
  s = trim(s);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  auto num = [&](int& out) -> bool {
    std::size_t k = 0;
    while (k < s.size() && s[k] >= '0' && s[k] <= '9') ++k;
    if (k == 0) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + k, out);
    s.remove_prefix(k);
    return ec == std::errc{};
  };
  auto sep = [&](char c) -> bool {
    if (s.empty() || s.front() != c) return false;
    s.remove_prefix(1);
    return true;
  };
  int first = 0;
  if (!num(first)) return std::nullopt;
  if (sep('/')) {
    mo = first;
    if (!num(d) || !sep('/') || !num(y)) return std::nullopt;
  } else if (sep('-')) {
    y = first;
    if (!num(mo) || !sep('-') || !num(d)) return std::nullopt;
  } else {
    return std::nullopt;
  }
  if (!s.empty()) {
    if (!(sep(' ') || sep('T'))) return std::nullopt;
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    if (!num(h) || !sep(':') || !num(mi)) return std::nullopt;
    if (sep(':') && !num(sec)) return std::nullopt;
    if (!s.empty()) return std::nullopt;
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

inline std::string normalize_customer(std::string_view s) {
  s = trim(s);
  if (s.size() > 2 && s.substr(s.size() - 2) == ".0") s.remove_suffix(2);
  return std::string(s);
}

}  // namespace detail

// Reads an Online-Retail-style CSV. Malformed data rows are reported in
// ParseResult::issues with their line numbers rather than aborting.
inline ParseResult parse_transactions(std::istream& in, const Schema& schema = {}) {
  if (!in) fail(ErrorKind::io, "unreadable transaction stream");
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) fail(ErrorKind::schema, "missing header row");
  if (!header->fields.empty()) {
    auto& f0 = header->fields.front();
    if (f0.rfind("\xEF\xBB\xBF", 0) == 0) f0.erase(0, 3);  // BOM
  }

  auto find = [&](const std::string& name, bool mandatory) -> std::optional<std::size_t> {
    const auto& h = header->fields;
    for (std::size_t i = 0; i < h.size(); ++i)
      if (detail::trim(h[i]) == name) return i;
    if (mandatory) fail(ErrorKind::schema, "missing mandatory column '" + name + "'");
    return std::nullopt;
  };
  const auto c_inv = *find(schema.invoice, true);
  const auto c_stock = *find(schema.stock_code, true);
  const auto c_desc = find(schema.description, false);
  const auto c_qty = *find(schema.quantity, true);
  const auto c_date = *find(schema.date, true);
  const auto c_price = *find(schema.unit_price, true);
  const auto c_cust = *find(schema.customer, true);
  const auto c_country = find(schema.country, false);
  const std::size_t width = header->fields.size();

  ParseResult out;
  while (auto rec = reader.next()) {
    ++out.data_rows;
    auto& f = rec->fields;
    auto issue = [&](std::string msg) {
      out.issues.push_back({rec->line, std::move(msg), true});
    };
    if (f.size() != width) {
      issue("expected " + std::to_string(width) + " fields, found " + std::to_string(f.size()));
      continue;
    }
    bool replaced = false;
    for (auto& field : f) replaced |= detail::sanitize_utf8(field);

    Transaction t;
    t.invoice_id = std::string(detail::trim(f[c_inv]));
    t.stock_code = std::string(detail::trim(f[c_stock]));
    if (t.invoice_id.empty()) {
      issue("empty invoice id");
      continue;
    }
    if (t.stock_code.empty()) {
      issue("empty stock code");
      continue;
    }
    if (c_desc) t.description = std::string(detail::trim(f[*c_desc]));
    auto qty = detail::parse_int(f[c_qty]);
    if (!qty) {
      issue("bad quantity '" + f[c_qty] + "'");
      continue;
    }
    t.quantity = *qty;
    auto date = detail::parse_timestamp(f[c_date]);
    if (!date) {
      issue("bad date '" + f[c_date] + "'");
      continue;
    }
    t.date = *date;
    auto price = detail::parse_double(f[c_price]);
    if (!price) {
      issue("bad unit price '" + f[c_price] + "'");
      continue;
    }
    t.unit_price = *price;
    auto cust = detail::normalize_customer(f[c_cust]);
    if (!cust.empty()) t.customer_id = std::move(cust);
    if (c_country) t.country = std::string(detail::trim(f[*c_country]));
    if (replaced) out.issues.push_back({rec->line, "invalid UTF-8 replaced", false});
    out.rows.push_back(std::move(t));
  }
  if (in.bad()) fail(ErrorKind::io, "read failure in transaction stream");
  return out;
}

// ---------------------------------------------------------------------------
// Cleaning

// True when a row survives cleaning: not a cancellation, positive quantity
// and price, known customer.
inline bool keep_row(const Transaction& t) {
  return !(t.invoice_id.starts_with('C') || t.quantity <= 0 || t.unit_price <= 0.0 ||
           !t.customer_id.has_value());
}

struct CleanDataset {
  std::vector<Transaction> rows;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::map<std::string, std::size_t> user_index;
  std::map<std::string, std::size_t> item_index;
  std::map<std::string, std::string> item_descriptions;
  std::vector<std::string> user_keys;  // dense index -> customer id
  std::vector<std::string> item_keys;  // dense index -> stock code
};

// Dense indexes follow the lexicographic order of keys, so they depend only
// on the set of surviving rows, not on their order.
inline CleanDataset clean(const std::vector<Transaction>& rows) {
  CleanDataset ds;
  for (const auto& t : rows)
    if (keep_row(t)) ds.rows.push_back(t);
  if (ds.rows.empty()) fail(ErrorKind::empty_dataset, "no rows survive cleaning");

  std::map<std::string, std::map<std::string, std::size_t>> desc_counts;
  for (const auto& t : ds.rows) {
    ds.user_index.emplace(*t.customer_id, 0);
    ds.item_index.emplace(t.stock_code, 0);
    auto& counts = desc_counts[t.stock_code];
    if (!t.description.empty()) ++counts[t.description];
  }
  for (auto& [key, idx] : ds.user_index) {
    idx = ds.user_keys.size();
    ds.user_keys.push_back(key);
  }
  for (auto& [key, idx] : ds.item_index) {
    idx = ds.item_keys.size();
    ds.item_keys.push_back(key);
  }
  ds.n_users = ds.user_keys.size();
  ds.n_items = ds.item_keys.size();
  for (const auto& [code, counts] : desc_counts) {
    // most frequent; ties go to the lexicographically smallest string
    std::string best;
    std::size_t best_n = 0;
    for (const auto& [desc, n] : counts)
      if (n > best_n) {
        best = desc;
        best_n = n;
      }
    ds.item_descriptions[code] = best;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Binning

struct RatingBins {
  // Lower bound of labels 1..n_bins-1: label(q) = #{b in boundaries : q >= b}.
  std::vector<std::int64_t> boundaries;
  std::size_t n_bins = 5;

  int label(std::int64_t quantity) const {
    return static_cast<int>(std::upper_bound(boundaries.begin(), boundaries.end(), quantity) -
                            boundaries.begin());
  }
  int label(double quantity) const {
    return label(static_cast<std::int64_t>(std::llround(quantity)));
  }
};

// Equal-frequency binning. The cut for label k sits at sorted position
// ceil(k*N/n); when that position falls inside a run of tied values the
// boundary advances to the next distinct value so the run stays whole.
inline RatingBins fit_bins(std::vector<std::int64_t> quantities, std::size_t n_bins = 5) {
  if (quantities.empty()) fail(ErrorKind::precondition, "fit_bins needs quantities");
  if (n_bins < 2) fail(ErrorKind::precondition, "fit_bins needs n_bins >= 2");
  std::sort(quantities.begin(), quantities.end());
  const auto n = quantities.size();
  std::size_t n_distinct = 1;
  for (std::size_t i = 1; i < n; ++i) n_distinct += quantities[i] != quantities[i - 1];
  if (n_distinct < n_bins)
    fail(ErrorKind::binning, std::to_string(n_distinct) + " distinct quantities for " +
                                 std::to_string(n_bins) + " bins");

  RatingBins bins;
  bins.n_bins = n_bins;
  for (std::size_t k = 1; k < n_bins; ++k) {
    // ceil(k*n/n_bins), kept in [1, n-1]
    std::size_t idx = (k * n + n_bins - 1) / n_bins;
    idx = std::clamp<std::size_t>(idx, 1, n - 1);
    std::int64_t floor_value = quantities[idx - 1];
    if (!bins.boundaries.empty()) floor_value = std::max(floor_value, bins.boundaries.back());
    auto it = std::upper_bound(quantities.begin(), quantities.end(), floor_value);
    if (it == quantities.end())
      fail(ErrorKind::binning, "tied quantities leave label " + std::to_string(k) + " empty");
    bins.boundaries.push_back(*it);
  }
  return bins;
}

// ---------------------------------------------------------------------------
// Interaction matrix

enum class MatrixMode { rating_label, purchase_strength };

inline std::string to_string(MatrixMode m) {
  return m == MatrixMode::rating_label ? "rating_label" : "purchase_strength";
}

inline MatrixMode matrix_mode_from_string(std::string_view s) {
  if (s == "rating_label") return MatrixMode::rating_label;
  if (s == "purchase_strength") return MatrixMode::purchase_strength;
  fail(ErrorKind::format, "unknown matrix mode '" + std::string(s) + "'");
}

struct Entry {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double value = 0.0;

  bool operator==(const Entry&) const = default;
};

struct InteractionMatrix {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<Entry> entries;  // sorted by (user, item), unique pairs
  MatrixMode mode = MatrixMode::purchase_strength;
  std::optional<RatingBins> bins;
  std::vector<std::string> user_keys;
  std::vector<std::string> item_keys;

  std::size_t nnz() const { return entries.size(); }

  double sparsity() const {
    const double cells = static_cast<double>(n_users) * static_cast<double>(n_items);
    return cells > 0 ? 1.0 - static_cast<double>(entries.size()) / cells : 1.0;
  }

  // Per-user (item, value) lists in item order.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> by_user() const {
    std::vector<std::vector<std::pair<std::uint32_t, double>>> out(n_users);
    for (const auto& e : entries) out[e.user].emplace_back(e.item, e.value);
    return out;
  }

  std::vector<std::vector<std::pair<std::uint32_t, double>>> by_item() const {
    std::vector<std::vector<std::pair<std::uint32_t, double>>> out(n_items);
    for (const auto& e : entries) out[e.item].emplace_back(e.user, e.value);
    return out;
  }
};

// Relabels a purchase-strength matrix with rating labels.
inline InteractionMatrix label_matrix(const InteractionMatrix& strengths, const RatingBins& bins) {
  InteractionMatrix out = strengths;
  out.mode = MatrixMode::rating_label;
  out.bins = bins;
  for (auto& e : out.entries) e.value = bins.label(e.value);
  return out;
}

// Sums quantities per (user, item) pair. rating_label mode requires bins.
inline InteractionMatrix build_matrix(const CleanDataset& ds, const std::optional<RatingBins>& bins,
                                      MatrixMode mode) {
  if (mode == MatrixMode::rating_label && !bins)
    fail(ErrorKind::precondition, "rating_label mode requires bins");
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::int64_t> sums;
  for (const auto& t : ds.rows) {
    const auto u = static_cast<std::uint32_t>(ds.user_index.at(*t.customer_id));
    const auto i = static_cast<std::uint32_t>(ds.item_index.at(t.stock_code));
    sums[{u, i}] += t.quantity;
  }
  InteractionMatrix m;
  m.n_users = ds.n_users;
  m.n_items = ds.n_items;
  m.mode = MatrixMode::purchase_strength;
  m.user_keys = ds.user_keys;
  m.item_keys = ds.item_keys;
  m.entries.reserve(sums.size());
  for (const auto& [key, q] : sums) m.entries.push_back({key.first, key.second, double(q)});
  if (mode == MatrixMode::rating_label) return label_matrix(m, *bins);
  return m;
}

inline std::vector<std::int64_t> strengths_of(const InteractionMatrix& m) {
  std::vector<std::int64_t> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back(static_cast<std::int64_t>(std::llround(e.value)));
  return out;
}

// Per-user random holdout. A user with c >= 2 entries sends
// min(ceil(test_fraction*c), c-1) of them to test; single-entry users stay in
// train. Each user's draw is seeded from (seed, user) alone.
inline std::pair<InteractionMatrix, InteractionMatrix> split(const InteractionMatrix& m,
                                                             double test_fraction,
                                                             std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    fail(ErrorKind::precondition, "test_fraction must be in (0, 1)");
  if (m.entries.empty()) fail(ErrorKind::empty_dataset, "cannot split an empty matrix");
  InteractionMatrix train = m, test = m;
  train.entries.clear();
  test.entries.clear();

  std::size_t begin = 0;
  while (begin < m.entries.size()) {
    std::size_t end = begin;
    const auto user = m.entries[begin].user;
    while (end < m.entries.size() && m.entries[end].user == user) ++end;
    const std::size_t count = end - begin;
    std::vector<bool> held(count, false);
    if (count >= 2) {
      auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * double(count) - 1e-12));
      n_test = std::min(n_test, count - 1);
      std::vector<std::size_t> order(count);
      for (std::size_t i = 0; i < count; ++i) order[i] = i;
      Rng rng(mix_seed(seed, user));
      for (std::size_t i = 0; i < n_test; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(count - i));
        std::swap(order[i], order[j]);
        held[order[i]] = true;
      }
    }
    for (std::size_t i = 0; i < count; ++i)
      (held[i] ? test : train).entries.push_back(m.entries[begin + i]);
    begin = end;
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Matrix artifact: JSON header + CSV triples (user,item,value).

inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline nlohmann::json matrix_header(const InteractionMatrix& m) {
  nlohmann::json h;
  h["format"] = "plmrec-matrix";
  h["version"] = 1;
  h["n_users"] = m.n_users;
  h["n_items"] = m.n_items;
  h["nnz"] = m.entries.size();
  h["sparsity"] = m.sparsity();
  h["mode"] = to_string(m.mode);
  if (m.bins) {
    h["n_bins"] = m.bins->n_bins;
    h["bin_boundaries"] = m.bins->boundaries;
  } else {
    h["n_bins"] = nullptr;
    h["bin_boundaries"] = nullptr;
  }
  h["users"] = m.user_keys;
  h["items"] = m.item_keys;
  return h;
}

inline void save_matrix(const InteractionMatrix& m, std::ostream& header, std::ostream& entries) {
  header << matrix_header(m).dump(2) << '\n';
  entries << "user,item,value\n";
  for (const auto& e : m.entries)
    entries << e.user << ',' << e.item << ',' << format_double(e.value) << '\n';
  if (!header || !entries) fail(ErrorKind::io, "failed writing matrix artifact");
}

inline InteractionMatrix load_matrix(std::istream& header, std::istream& entries) {
  nlohmann::json h;
  try {
    header >> h;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("matrix header: ") + e.what());
  }
  if (h.value("format", "") != "plmrec-matrix" || h.value("version", 0) != 1)
    fail(ErrorKind::format, "not a plmrec matrix header");
  InteractionMatrix m;
  m.n_users = h.at("n_users").get<std::size_t>();
  m.n_items = h.at("n_items").get<std::size_t>();
  m.mode = matrix_mode_from_string(h.at("mode").get<std::string>());
  if (!h.at("bin_boundaries").is_null()) {
    RatingBins b;
    b.n_bins = h.at("n_bins").get<std::size_t>();
    b.boundaries = h.at("bin_boundaries").get<std::vector<std::int64_t>>();
    m.bins = b;
  }
  m.user_keys = h.at("users").get<std::vector<std::string>>();
  m.item_keys = h.at("items").get<std::vector<std::string>>();

  csv::Reader reader(entries);
  auto head = reader.next();
  if (!head || head->fields != std::vector<std::string>{"user", "item", "value"})
    fail(ErrorKind::format, "matrix entries must start with 'user,item,value'");
  while (auto rec = reader.next()) {
    if (rec->fields.size() != 3)
      fail(ErrorKind::format, "matrix entries line " + std::to_string(rec->line));
    auto u = detail::parse_int(rec->fields[0]);
    auto i = detail::parse_int(rec->fields[1]);
    auto v = detail::parse_double(rec->fields[2]);
    if (!u || !i || !v || *u < 0 || *i < 0 || std::size_t(*u) >= m.n_users ||
        std::size_t(*i) >= m.n_items)
      fail(ErrorKind::format, "bad matrix entry on line " + std::to_string(rec->line));
    m.entries.push_back({std::uint32_t(*u), std::uint32_t(*i), *v});
  }
  if (!std::is_sorted(m.entries.begin(), m.entries.end(), [](const Entry& a, const Entry& b) {
        return std::pair(a.user, a.item) < std::pair(b.user, b.item);
      }))
    fail(ErrorKind::format, "matrix entries not in (user, item) order");
  return m;
}

}  // namespace plmrec::ingest
