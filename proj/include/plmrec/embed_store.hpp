#pragma once

// Item embedding tables and the EMBT binary file format.
//
// EMBT layout (all integers little-endian):
//   "EMBT"            4 bytes magic
//   version           u16 (= 1)
//   count             u32
//   dim               u32
//   count x row:
//     key length      u16
//     key             UTF-8 bytes
//     values          dim x IEEE-754 binary32, little-endian
// Rows are sorted by key bytes; keys are unique.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "plmrec/corpus.hpp"
#include "plmrec/error.hpp"
#include "plmrec/rng.hpp"

namespace plmrec::embed {

inline constexpr char kMagic[4] = {'E', 'M', 'B', 'T'};
inline constexpr std::uint16_t kVersion = 1;

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {
    if (dim == 0) fail(ErrorKind::precondition, "embedding dim must be >= 1");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }

  void insert(std::string key, std::vector<float> values) {
    if (dim_ == 0) {
      if (values.empty()) fail(ErrorKind::precondition, "embedding dim must be >= 1");
      dim_ = values.size();
    }
    if (values.size() != dim_)
      fail(ErrorKind::dimension, "row '" + key + "' has " + std::to_string(values.size()) +
                                     " values, table dim is " + std::to_string(dim_));
    for (float v : values)
      if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite value in row '" + key + "'");
    rows_.insert_or_assign(std::move(key), std::move(values));
  }

  bool contains(const std::string& key) const { return rows_.contains(key); }

  std::span<const float> at(const std::string& key) const {
    auto it = rows_.find(key);
    if (it == rows_.end()) fail(ErrorKind::lookup, "no embedding for key '" + key + "'");
    return it->second;
  }

  const std::map<std::string, std::vector<float>>& rows() const noexcept { return rows_; }

  bool operator==(const EmbeddingTable&) const = default;

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<float>> rows_;  // std::string order is byte order
};

namespace detail {

inline void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {char(v & 0xFF), char(v >> 8)};
  out.write(b, 2);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF),
                     char(v >> 24)};
  out.write(b, 4);
}

inline bool get_bytes(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

inline std::uint32_t le32(const unsigned char* b) {
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

}  // namespace detail

inline void save_embeddings(const EmbeddingTable& table, std::ostream& out) {
  if (table.empty()) fail(ErrorKind::precondition, "cannot save an empty embedding table");
  if (table.size() > 0xFFFFFFFFull || table.dim() > 0xFFFFFFFFull)
    fail(ErrorKind::format, "table too large for EMBT");
  for (const auto& [key, values] : table.rows())
    if (key.size() > 0xFFFF)
      fail(ErrorKind::format, "key of " + std::to_string(key.size()) + " bytes exceeds 65535");

  out.write(kMagic, 4);
  detail::put_u16(out, kVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(table.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(table.dim()));
  for (const auto& [key, values] : table.rows()) {
    detail::put_u16(out, static_cast<std::uint16_t>(key.size()));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    for (float v : values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) fail(ErrorKind::io, "failed writing EMBT stream");
}

inline EmbeddingTable load_embeddings(std::istream& in) {
  unsigned char head[14];
  if (!detail::get_bytes(in, reinterpret_cast<char*>(head), 4) ||
      std::memcmp(head, kMagic, 4) != 0)
    fail(ErrorKind::format, "bad magic, expected \"EMBT\"");
  if (!detail::get_bytes(in, reinterpret_cast<char*>(head + 4), 10))
    fail(ErrorKind::format, "truncated header");
  const std::uint16_t version = std::uint16_t(head[4] | head[5] << 8);
  if (version != kVersion) fail(ErrorKind::format, "unsupported version " + std::to_string(version));
  const std::uint32_t count = detail::le32(head + 6);
  const std::uint32_t dim = detail::le32(head + 10);
  if (dim == 0) fail(ErrorKind::format, "dim must be >= 1");
  if (count == 0) fail(ErrorKind::format, "empty table");

  EmbeddingTable table(dim);
  std::vector<unsigned char> payload(std::size_t{dim} * 4);
  std::string prev_key;
  for (std::uint32_t row = 0; row < count; ++row) {
    const std::string where = "row " + std::to_string(row);
    unsigned char len_bytes[2];
    if (!detail::get_bytes(in, reinterpret_cast<char*>(len_bytes), 2))
      fail(ErrorKind::format, "truncated at " + where + " (key length)");
    const std::size_t key_len = len_bytes[0] | len_bytes[1] << 8;
    std::string key(key_len, '\0');
    if (!detail::get_bytes(in, key.data(), key_len))
      fail(ErrorKind::format, "truncated at " + where + " (key)");
    if (row > 0 && !(prev_key < key))
      fail(ErrorKind::format, where + " key '" + key + "' out of order or duplicate");
    if (!detail::get_bytes(in, reinterpret_cast<char*>(payload.data()), payload.size()))
      fail(ErrorKind::format, "truncated at " + where + " (key '" + key + "') mid-vector");
    std::vector<float> values(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      values[d] = std::bit_cast<float>(detail::le32(payload.data() + 4 * d));
      if (!std::isfinite(values[d]))
        fail(ErrorKind::data, "non-finite value at " + where + " (key '" + key + "') index " +
                                  std::to_string(d));
    }
    table.insert(key, std::move(values));
    prev_key = std::move(key);
  }
  if (in.peek() != std::char_traits<char>::eof())
    fail(ErrorKind::format, "trailing bytes after " + std::to_string(count) + " rows");
  return table;
}

// Debug format: key<TAB>space-separated decimals, one row per line.
inline void save_embeddings_tsv(const EmbeddingTable& table, std::ostream& out) {
  char buf[32];
  for (const auto& [key, values] : table.rows()) {
    out << key << '\t';
    for (std::size_t d = 0; d < values.size(); ++d) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), values[d]);
      if (d) out << ' ';
      out.write(buf, p - buf);
    }
    out << '\n';
  }
}

inline EmbeddingTable load_embeddings_tsv(std::istream& in) {
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      fail(ErrorKind::format, "TSV line " + std::to_string(lineno) + " has no tab");
    std::vector<float> values;
    std::string_view rest(line);
    rest.remove_prefix(tab + 1);
    while (!rest.empty()) {
      while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
      if (rest.empty()) break;
      float v = 0;
      auto [p, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
      if (ec != std::errc{})
        fail(ErrorKind::format, "TSV line " + std::to_string(lineno) + " has a bad number");
      rest.remove_prefix(static_cast<std::size_t>(p - rest.data()));
      values.push_back(v);
    }
    table.insert(line.substr(0, tab), std::move(values));
  }
  if (table.empty()) fail(ErrorKind::format, "empty TSV embedding file");
  return table;
}

// ---------------------------------------------------------------------------

template <typename A, typename B>
double dot(std::span<const A> a, std::span<const B> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

template <typename A>
double norm(std::span<const A> a) {
  return std::sqrt(dot(a, a));
}

template <typename A, typename B>
double cosine(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size())
    fail(ErrorKind::dimension, "cosine of vectors with dims " + std::to_string(a.size()) +
                                   " and " + std::to_string(b.size()));
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::similarity, "cosine of a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return cosine(std::span<const double>(a), std::span<const double>(b));
}

// Pseudorandom unit vector for one token, a pure function of (token, seed).
inline std::vector<double> token_vector(std::string_view token, std::size_t dim,
                                        std::uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a64(token)));
  std::vector<double> v(dim);
  double n2 = 0;
  for (auto& x : v) {
    x = rng.normal();
    n2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(n2);
  for (auto& x : v) x *= inv;
  return v;
}

// Deterministic stand-in for language-model sentence embeddings: the unit
// normalized sum of per-token pseudorandom unit vectors over the token
// multiset. Descriptions without tokens fall back to the item key.
inline EmbeddingTable synthesize_embeddings(const std::map<std::string, std::string>& descriptions,
                                            std::size_t dim, std::uint64_t seed) {
  if (dim < 2) fail(ErrorKind::precondition, "synthetic embeddings need dim >= 2");
  EmbeddingTable table(dim);
  std::map<std::string, std::vector<double>> cache;
  for (const auto& [key, text] : descriptions) {
    auto tokens = corpus::tokenize(text);
    if (tokens.empty()) tokens.push_back("\x01key:" + key);
    std::vector<double> sum(dim, 0.0);
    for (const auto& tok : tokens) {
      auto it = cache.find(tok);
      if (it == cache.end()) it = cache.emplace(tok, token_vector(tok, dim, seed)).first;
      for (std::size_t d = 0; d < dim; ++d) sum[d] += it->second[d];
    }
    double n = norm(std::span<const double>(sum));
    if (n < 1e-12) {  // tokens cancelled exactly; vanishingly rare
      sum = token_vector("\x01key:" + key, dim, seed);
      n = 1.0;
    }
    std::vector<float> row(dim);
    for (std::size_t d = 0; d < dim; ++d) row[d] = static_cast<float>(sum[d] / n);
    table.insert(key, std::move(row));
  }
  return table;
}

}  // namespace plmrec::embed
