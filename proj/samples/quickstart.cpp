// Small end-to-end tour: synthetic transactions -> cleaned matrix -> implicit
// ALS -> plain and embedding re-ranked top-5 for one user -> P@5 over all
// held-out users.
//
//   ./quickstart [transactions.csv]

#include <fstream>
#include <iostream>

#include "plmrec/experiment.hpp"

using namespace plmrec;

int main(int argc, char** argv) try {
  std::vector<ingest::Transaction> rows;
  if (argc > 1) {
    std::ifstream in(argv[1]);
    if (!in) fail(ErrorKind::io, std::string("cannot open ") + argv[1]);
    rows = ingest::parse_transactions(in).rows;
  } else {
    synthetic::Params p;
    p.n_users = 120;
    p.n_items = 160;
    rows = synthetic::generate(p).rows;
  }

  const auto ds = ingest::clean(rows);
  const auto strengths = ingest::build_matrix(ds, std::nullopt, ingest::MatrixMode::purchase_strength);
  std::cout << ds.rows.size() << " clean rows, " << ds.n_users << " users, " << ds.n_items << " items, sparsity "
            << strengths.sparsity() << "\n";

  const auto bins = ingest::fit_bins(ingest::strengths_of(strengths), 5);
  std::cout << "rating label boundaries:";
  for (auto b : bins.boundaries) std::cout << ' ' << b;
  std::cout << "\n";

  auto [train, test] = ingest::split(strengths, 0.2, 7);
  mf::MfConfig cfg;
  cfg.factors = 32;
  const auto fit = mf::fit_implicit(train, cfg);
  std::cout << "ALS objective " << fit.loss.front() << " -> " << fit.loss.back() << "\n";

  const auto table = embed::synthesize_embeddings(ds.item_descriptions, 128, 0);
  const auto by_user = train.by_user();
  const std::uint32_t user = 0;
  std::set<std::uint32_t> seen;
  std::vector<std::uint32_t> history;
  for (const auto& [item, value] : by_user[user]) {
    seen.insert(item);
    history.push_back(item);
  }

  auto show = [&](const char* label, const std::vector<mf::Scored>& recs) {
    std::cout << label << ":";
    for (const auto& r : recs) std::cout << ' ' << train.item_keys[r.item];
    std::cout << "\n";
  };
  show("ALS top-5", mf::recommend(fit.model, user, 5, seen));
  show("weighted_sum top-5", mf::hybrid_rerank(fit.model, table, train.item_keys, mf::Fusion::weighted_sum, {}, user,
                                               history, 5, seen));

  const auto plain = experiment::evaluate_ranking(fit.model, train, test, 5, nullptr, std::nullopt, {});
  const auto fused =
      experiment::evaluate_ranking(fit.model, train, test, 5, &table, mf::Fusion::weighted_sum, {});
  std::cout << "P@5 ALS " << plain.precision_at_k << ", with weighted_sum " << fused.precision_at_k << " over "
            << plain.users << " users\n";
  return 0;
} catch (const std::exception& e) {
  std::cerr << "error: " << e.what() << "\n";
  return 1;
}
