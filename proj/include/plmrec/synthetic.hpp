#pragma once

// Synthetic retail transaction logs with planted structure: items belong to
// latent clusters whose vocabulary shapes their descriptions (and thus their
// embeddings) and whose pack size drives purchase quantities; users buy
// mostly from one taste cluster.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "plmrec/csv.hpp"
#include "plmrec/error.hpp"
#include "plmrec/ingest.hpp"
#include "plmrec/rng.hpp"

namespace plmrec::synthetic {

struct Params {
  std::size_t n_users = 300;
  std::size_t n_items = 400;
  std::size_t n_clusters = 8;
  std::size_t min_purchases = 8;
  std::size_t max_purchases = 20;
  double taste_share = 0.8;      // purchases drawn from the user's taste cluster
  double quantity_noise = 0.3;   // log-normal sigma around the cluster pack size
  double dirty_fraction = 0.0;   // extra rows that cleaning must drop
  std::uint64_t seed = 1;
};

inline Params params_from_json(const nlohmann::json& j) {
  Params p;
  p.n_users = j.value("n_users", p.n_users);
  p.n_items = j.value("n_items", p.n_items);
  p.n_clusters = j.value("n_clusters", p.n_clusters);
  p.min_purchases = j.value("min_purchases", p.min_purchases);
  p.max_purchases = j.value("max_purchases", p.max_purchases);
  p.taste_share = j.value("taste_share", p.taste_share);
  p.quantity_noise = j.value("quantity_noise", p.quantity_noise);
  p.dirty_fraction = j.value("dirty_fraction", p.dirty_fraction);
  p.seed = j.value("seed", p.seed);
  return p;
}

struct Dataset {
  std::vector<ingest::Transaction> rows;
  std::map<std::string, int> item_cluster;  // stock code -> latent cluster
  std::map<std::string, int> user_cluster;  // customer id -> taste cluster
};

namespace detail {

inline const std::vector<std::vector<std::string>>& theme_words() {
  static const std::vector<std::vector<std::string>> words = {
      {"kitchen", "spoon", "baking", "cake", "tin", "apron", "mug", "teapot"},
      {"garden", "flower", "plant", "pot", "bird", "seed", "watering", "fern"},
      {"christmas", "star", "bauble", "snow", "reindeer", "tree", "angel", "wreath"},
      {"party", "balloon", "bunting", "napkin", "candle", "paper", "cup", "banner"},
      {"bath", "soap", "towel", "sponge", "mirror", "bathroom", "dish", "rack"},
      {"pencil", "notebook", "sticker", "eraser", "ruler", "journal", "pen", "card"},
      {"baby", "bib", "rattle", "blanket", "teddy", "nursery", "sock", "romper"},
      {"vintage", "retro", "doily", "lace", "frame", "clock", "enamel", "sign"},
      {"lunch", "bag", "bottle", "picnic", "basket", "jar", "flask", "box"},
      {"lantern", "light", "glass", "holder", "tealight", "lamp", "lights", "string"},
      {"jewel", "necklace", "bracelet", "ring", "earring", "bead", "charm", "pendant"},
      {"dog", "cat", "pet", "collar", "bowl", "lead", "kitten", "puppy"},
  };
  return words;
}

inline const std::vector<std::string>& generic_words() {
  static const std::vector<std::string> words = {"set",  "pack",  "large", "small",
                                                 "red",  "blue",  "pink",  "green",
                                                 "white", "gift", "assorted", "design"};
  return words;
}

inline std::string upper(std::string s) {
  for (auto& c : s)
    if (c >= 'a' && c <= 'z') c = char(c - 'a' + 'A');
  return s;
}

}  // namespace detail

inline Dataset generate(const Params& p) {
  const auto& themes = detail::theme_words();
  if (p.n_clusters < 1 || p.n_clusters > themes.size())
    fail(ErrorKind::config, "n_clusters must be in [1, " + std::to_string(themes.size()) + "]");
  if (p.n_items < p.n_clusters || p.n_users < 1) fail(ErrorKind::config, "too few users or items");
  if (p.min_purchases < 1 || p.max_purchases < p.min_purchases)
    fail(ErrorKind::config, "bad purchase range");
  Rng rng(mix_seed(p.seed, 0x73796e7468ULL));
  Dataset ds;

  // items: scattered 5-digit stock codes, cluster, description, price
  static constexpr std::array<double, 5> pack_sizes = {1, 3, 8, 20, 60};
  std::vector<std::string> codes(p.n_items), descs(p.n_items);
  std::vector<int> cluster(p.n_items);
  std::vector<double> price(p.n_items);
  std::vector<std::vector<std::size_t>> members(p.n_clusters);
  {
    std::vector<std::uint32_t> perm(90000);
    for (std::uint32_t i = 0; i < perm.size(); ++i) perm[i] = 10000 + i;
    for (std::size_t i = 0; i < p.n_items; ++i) std::swap(perm[i], perm[i + rng.below(perm.size() - i)]);
    for (std::size_t i = 0; i < p.n_items; ++i) {
      codes[i] = std::to_string(perm[i]);
      cluster[i] = int(i % p.n_clusters);
      const auto& vocab = themes[std::size_t(cluster[i])];
      const auto a = rng.below(vocab.size());
      auto b = rng.below(vocab.size() - 1);
      if (b >= a) ++b;
      const auto& g = detail::generic_words()[rng.below(detail::generic_words().size())];
      descs[i] = detail::upper(g + " " + vocab[a] + " " + vocab[b]);
      price[i] = std::round(rng.uniform(0.4, 12.0) * 100.0) / 100.0;
      members[std::size_t(cluster[i])].push_back(i);
      ds.item_cluster[codes[i]] = cluster[i];
    }
  }

  static const std::array<const char*, 4> countries = {"United Kingdom", "France", "Germany", "EIRE"};
  using namespace std::chrono;
  const sys_seconds start = sys_days{year{2010} / December / 1} + hours{8};
  std::size_t invoice_no = 536365;

  auto push = [&](ingest::Transaction t) { ds.rows.push_back(std::move(t)); };
  for (std::size_t u = 0; u < p.n_users; ++u) {
    const std::string cust = std::to_string(12346 + u);
    const int taste = int(rng.below(p.n_clusters));
    ds.user_cluster[cust] = taste;
    const std::string country = countries[rng.uniform() < 0.85 ? 0 : 1 + rng.below(3)];
    const auto n = p.min_purchases + rng.below(p.max_purchases - p.min_purchases + 1);
    std::vector<char> bought(p.n_items, 0);
    std::vector<std::size_t> basket;
    for (std::size_t k = 0; k < n && basket.size() < p.n_items; ++k) {
      std::size_t item;
      do {
        if (rng.uniform() < p.taste_share) {
          // popularity skew inside the cluster: squared uniform favours low ranks
          const auto& pool = members[std::size_t(taste)];
          const double r = rng.uniform();
          item = pool[std::min(pool.size() - 1, std::size_t(r * r * double(pool.size())))];
          if (bought[item] && std::all_of(pool.begin(), pool.end(), [&](std::size_t i) { return bought[i]; }))
            item = rng.below(p.n_items);
        } else {
          item = rng.below(p.n_items);
        }
      } while (bought[item]);
      bought[item] = 1;
      basket.push_back(item);
    }
    std::size_t line = 0;
    std::string invoice;
    sys_seconds when = start;
    for (auto item : basket) {
      if (line++ % 6 == 0) {
        invoice = std::to_string(invoice_no++);
        when = start + days{rng.below(370)} + minutes{rng.below(600)};
      }
      const double base = pack_sizes[std::size_t(cluster[item]) % pack_sizes.size()];
      const auto qty = std::max<std::int64_t>(1, std::llround(base * std::exp(p.quantity_noise * rng.normal())));
      push({invoice, codes[item], descs[item], qty, when, price[item], cust, country});
    }
  }

  // rows that cleaning must drop: cancellations, unknown customers, free items
  const auto dirty = std::size_t(std::llround(p.dirty_fraction * double(ds.rows.size())));
  for (std::size_t d = 0; d < dirty; ++d) {
    auto t = ds.rows[rng.below(ds.rows.size())];
    switch (d % 3) {
      case 0:
        t.invoice_id = "C" + std::to_string(invoice_no++);
        t.quantity = -t.quantity;
        break;
      case 1: t.customer_id.reset(); break;
      default: t.unit_price = 0.0; break;
    }
    push(std::move(t));
  }
  return ds;
}

// Writes rows in the Online Retail column layout.
inline void write_transactions_csv(const std::vector<ingest::Transaction>& rows, std::ostream& out) {
  csv::write_row(out, {"InvoiceNo", "StockCode", "Description", "Quantity", "InvoiceDate",
                       "UnitPrice", "CustomerID", "Country"});
  using namespace std::chrono;
  for (const auto& t : rows) {
    const auto day = floor<days>(t.date);
    const year_month_day ymd{day};
    const hh_mm_ss hms{t.date - day};
    char date[32];
    std::snprintf(date, sizeof date, "%u/%u/%d %d:%02d", unsigned(ymd.month()), unsigned(ymd.day()),
                  int(ymd.year()), int(hms.hours().count()), int(hms.minutes().count()));
    csv::write_row(out, {t.invoice_id, t.stock_code, t.description, std::to_string(t.quantity), date,
                         ingest::format_double(t.unit_price), t.customer_id.value_or(""), t.country});
  }
}

}  // namespace plmrec::synthetic
