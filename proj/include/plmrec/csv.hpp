#pragma once

// Minimal RFC 4180 reader/writer: comma delimiter, double-quote escaping,
// quoted fields may span lines, CRLF tolerated.

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace plmrec::csv {

struct Record {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line on which the record starts
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Returns std::nullopt at end of stream. Blank lines are skipped.
  std::optional<Record> next() {
    Record rec;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    bool any = false;
    rec.line = line_ + 1;

    int ch;
    while ((ch = in_.get()) != std::char_traits<char>::eof()) {
      any = true;
      const char c = static_cast<char>(ch);
      if (in_quotes) {
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            in_quotes = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
        continue;
      }
      if (c == '"' && field.empty() && !field_was_quoted) {
        in_quotes = true;
        field_was_quoted = true;
      } else if (c == ',') {
        rec.fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
      } else if (c == '\r') {
        if (in_.peek() == '\n') continue;
        ++line_;
        break;
      } else if (c == '\n') {
        ++line_;
        if (rec.fields.empty() && field.empty() && !field_was_quoted) {
          // blank line
          rec.line = line_ + 1;
          any = false;
          continue;
        }
        rec.fields.push_back(std::move(field));
        return rec;
      } else {
        field.push_back(c);
      }
    }
    if (!any) return std::nullopt;
    rec.fields.push_back(std::move(field));
    return rec;
  }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

inline std::string quote(std::string_view field) {
  const bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << quote(fields[i]);
  }
  out << '\n';
}

}  // namespace plmrec::csv
