#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace plmrec {

// Categories of failure raised by the library. Callers branch on kind(),
// the message carries the human-readable detail.
enum class ErrorKind {
  io,
  schema,
  parse,
  empty_dataset,
  binning,
  format,
  data,
  precondition,
  dimension,
  similarity,
  clustering,
  lookup,
  recipe,
  training,
  solver,
  degenerate_label,
  evaluation,
  corpus,
  config,
  stage,
};

inline constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::schema: return "schema";
    case ErrorKind::parse: return "parse";
    case ErrorKind::empty_dataset: return "empty_dataset";
    case ErrorKind::binning: return "binning";
    case ErrorKind::format: return "format";
    case ErrorKind::data: return "data";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::similarity: return "similarity";
    case ErrorKind::clustering: return "clustering";
    case ErrorKind::lookup: return "lookup";
    case ErrorKind::recipe: return "recipe";
    case ErrorKind::training: return "training";
    case ErrorKind::solver: return "solver";
    case ErrorKind::degenerate_label: return "degenerate_label";
    case ErrorKind::evaluation: return "evaluation";
    case ErrorKind::corpus: return "corpus";
    case ErrorKind::config: return "config";
    case ErrorKind::stage: return "stage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the experiment runner; wraps the failing stage's error.
class StageError : public Error {
 public:
  StageError(std::string stage, std::string config_hash, ErrorKind cause, const std::string& what)
      : Error(ErrorKind::stage, "stage '" + stage + "' (config " + config_hash + "): " + what),
        stage_(std::move(stage)),
        config_hash_(std::move(config_hash)),
        cause_(cause) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& config_hash() const noexcept { return config_hash_; }
  ErrorKind cause() const noexcept { return cause_; }

 private:
  std::string stage_;
  std::string config_hash_;
  ErrorKind cause_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace plmrec
