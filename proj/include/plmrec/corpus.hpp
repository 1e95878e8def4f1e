#pragma once

// Word-frequency profiles of description corpora and top-N vocabulary overlap.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <json.hpp>

#include "plmrec/error.hpp"

namespace plmrec::corpus {

namespace detail {

inline void append_utf8(std::string& out, UChar32 cp) {
  char buf[U8_MAX_LENGTH];
  std::int32_t len = 0;
  UBool err = false;
  U8_APPEND(reinterpret_cast<std::uint8_t*>(buf), len, U8_MAX_LENGTH, cp, err);
  if (!err) out.append(buf, static_cast<std::size_t>(len));
}

inline std::size_t codepoint_count(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

}  // namespace detail

// Lowercases and splits on every code point that is not a Unicode letter or
// digit. Malformed UTF-8 bytes act as separators.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 cp;
    U8_NEXT(s, i, length, cp);
    if (cp >= 0 && u_isalnum(cp)) {
      detail::append_utf8(current, u_tolower(cp));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// Truncates to at most max_chars code points.
inline std::string_view truncate_chars(std::string_view text, std::size_t max_chars) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
      if (count == max_chars) return text.substr(0, i);
      ++count;
    }
  }
  return text;
}

struct ProfileOptions {
  std::size_t top_n = 150;
  std::size_t min_token_length = 2;  // in code points
  std::size_t char_limit = 0;        // 0 = no truncation
};

struct VocabProfile {
  std::string name;
  std::map<std::string, std::size_t> frequencies;
  std::vector<std::string> top;  // descending count, ties by token
  std::size_t top_n = 150;

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& [tok, c] : frequencies) n += c;
    return n;
  }
};

inline VocabProfile build_profile(std::string name, const std::vector<std::string>& lines,
                                  const std::set<std::string>& stopwords,
                                  const ProfileOptions& opts = {}) {
  if (lines.empty()) fail(ErrorKind::corpus, "corpus '" + name + "' is empty");
  VocabProfile p;
  p.name = std::move(name);
  p.top_n = opts.top_n;
  for (const auto& line : lines) {
    std::string_view text = line;
    if (opts.char_limit > 0) text = truncate_chars(text, opts.char_limit);
    for (auto& tok : tokenize(text)) {
      if (detail::codepoint_count(tok) < opts.min_token_length) continue;
      if (stopwords.contains(tok)) continue;
      ++p.frequencies[tok];
    }
  }
  if (p.frequencies.empty())
    fail(ErrorKind::corpus, "corpus '" + p.name + "' has no tokens after filtering");
  std::vector<std::pair<std::string, std::size_t>> ranked(p.frequencies.begin(),
                                                          p.frequencies.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const auto n = std::min(opts.top_n, ranked.size());
  for (std::size_t i = 0; i < n; ++i) p.top.push_back(ranked[i].first);
  return p;
}

// Entry (i, j) = 100 * |top(i) ∩ top(j)| / n.
inline std::vector<std::vector<double>> overlap_matrix(const std::vector<VocabProfile>& profiles) {
  if (profiles.size() < 2) fail(ErrorKind::precondition, "overlap needs at least 2 profiles");
  const auto n = profiles.front().top_n;
  for (const auto& p : profiles)
    if (p.top_n != n) fail(ErrorKind::precondition, "profiles have mismatched top_n");
  std::vector<std::set<std::string>> sets;
  for (const auto& p : profiles) sets.emplace_back(p.top.begin(), p.top.end());
  const auto k = profiles.size();
  std::vector<std::vector<double>> out(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    out[i][i] = 100.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      std::size_t common = 0;
      for (const auto& t : sets[i]) common += sets[j].contains(t);
      out[i][j] = out[j][i] = 100.0 * double(common) / double(n);
    }
  }
  return out;
}

inline nlohmann::json to_json(const VocabProfile& p) {
  nlohmann::json j;
  j["name"] = p.name;
  j["top_n"] = p.top_n;
  j["total_tokens"] = p.total_tokens();
  j["distinct_tokens"] = p.frequencies.size();
  auto& top = j["top"] = nlohmann::json::array();
  for (const auto& t : p.top) top.push_back({{"token", t}, {"count", p.frequencies.at(t)}});
  return j;
}

// Standard English stop-word list; identical to data/stopwords_en.txt.
inline const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",          "about",   "above",   "after",   "again",   "against", "all",
      "am",         "an",      "and",     "any",     "are",     "as",      "at",
      "be",         "because", "been",    "before",  "being",   "below",   "between",
      "both",       "but",     "by",      "can",     "could",   "did",     "do",
      "does",       "doing",   "down",    "during",  "each",    "few",     "for",
      "from",       "further", "had",     "has",     "have",    "having",  "he",
      "her",        "here",    "hers",    "herself", "him",     "himself", "his",
      "how",        "i",       "if",      "in",      "into",    "is",      "it",
      "its",        "itself",  "just",    "me",      "more",    "most",    "my",
      "myself",     "no",      "nor",     "not",     "now",     "of",      "off",
      "on",         "once",    "only",    "or",      "other",   "our",     "ours",
      "ourselves",  "out",     "over",    "own",     "same",    "she",     "should",
      "so",         "some",    "such",    "than",    "that",    "the",     "their",
      "theirs",     "them",    "themselves", "then", "there",   "these",   "they",
      "this",       "those",   "through", "to",      "too",     "under",   "until",
      "up",         "very",    "was",     "we",      "were",    "what",    "when",
      "where",      "which",   "while",   "who",     "whom",    "why",     "will",
      "with",       "would",   "you",     "your",    "yours",   "yourself", "yourselves",
  };
  return words;
}

}  // namespace plmrec::corpus
