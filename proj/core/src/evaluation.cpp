#include "relcat/evaluation.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>
#include <spdlog/spdlog.h>

namespace relcat {

Split temporal_split(const RelationalDatabase& db, std::size_t per_company_test_n) {
  Split split{db, {}};
  if (per_company_test_n == 0) return split;

  const Table& txns = db.table(kTransactionTable);
  std::map<std::string, std::vector<std::size_t>> by_company;
  std::vector<TransactionRecord> records = db.transactions();
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].category_fk) by_company[records[i].company_fk].push_back(i);

  Table& train_txns = split.train.table(kTransactionTable);
  const int cat_col = txns.schema.foreign_key_index("category_fk");
  std::size_t skipped = 0;
  for (auto& [company, rows] : by_company) {
    if (rows.size() <= per_company_test_n) {
      ++skipped;
      continue;
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [&](std::size_t a, std::size_t b) { return records[a].date < records[b].date; });
    for (std::size_t i = rows.size() - per_company_test_n; i < rows.size(); ++i) {
      const std::size_t row = rows[i];
      split.test.push_back({records[row].pk, row, company, *records[row].category_fk});
      train_txns.rows[row].fkeys[static_cast<std::size_t>(cat_col)].reset();
    }
  }
  if (skipped > 0)
    spdlog::warn("temporal_split: {} companies have at most {} labeled transactions and were left out of the test set",
                 skipped, per_company_test_n);
  std::sort(split.test.begin(), split.test.end(),
            [](const TestCase& a, const TestCase& b) { return a.row < b.row; });
  return split;
}

CompanyHistory company_history(const RelationalDatabase& db) {
  CompanyHistory out;
  for (const TransactionRecord& t : db.transactions())
    if (t.category_fk) out[t.company_fk].insert(*t.category_fk);
  return out;
}

EvalReport evaluate(std::span<const TestCase> cases, const std::map<std::string, std::vector<Prediction>>& predictions,
                    const CompanyHistory& history) {
  if (predictions.size() != cases.size())
    throw std::invalid_argument("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(cases.size()) + " test transactions");
  EvalReport report;
  std::size_t hits[3] = {0, 0, 0};
  std::size_t hs_hits = 0, hu_hits = 0;
  for (const TestCase& c : cases) {
    auto it = predictions.find(c.transaction_pk);
    if (it == predictions.end()) throw std::invalid_argument("evaluate: no prediction for " + c.transaction_pk);
    const std::vector<Prediction>& preds = it->second;
    std::size_t rank = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].category_pk == c.truth) {
        rank = i + 1;
        break;
      }
    if (rank == 1) ++hits[0];
    if (rank >= 1 && rank <= 2) ++hits[1];
    if (rank >= 1 && rank <= 5) ++hits[2];

    auto h = history.find(c.company_pk);
    const bool seen = h != history.end() && h->second.contains(c.truth);
    if (seen) {
      ++report.hs_count;
      if (rank == 1) ++hs_hits;
    } else {
      ++report.hu_count;
      if (rank == 1) ++hu_hits;
    }
  }
  report.count = cases.size();
  if (report.count > 0) {
    const double n = static_cast<double>(report.count);
    report.top1 = static_cast<double>(hits[0]) / n;
    report.top2 = static_cast<double>(hits[1]) / n;
    report.top5 = static_cast<double>(hits[2]) / n;
  }
  if (report.hs_count > 0) report.hs_accuracy = static_cast<double>(hs_hits) / static_cast<double>(report.hs_count);
  if (report.hu_count > 0) report.hu_accuracy = static_cast<double>(hu_hits) / static_cast<double>(report.hu_count);
  return report;
}

std::string to_json_line(const EvalReport& report, const std::string& label) {
  nlohmann::json j = {{"run", label},         {"count", report.count},       {"top1", report.top1},
                      {"top2", report.top2},  {"top5", report.top5},         {"hs_count", report.hs_count},
                      {"hu_count", report.hu_count}};
  j["hs_accuracy"] = report.hs_accuracy ? nlohmann::json(*report.hs_accuracy) : nlohmann::json(nullptr);
  j["hu_accuracy"] = report.hu_accuracy ? nlohmann::json(*report.hu_accuracy) : nlohmann::json(nullptr);
  if (report.cascade) {
    j["resolved_without_gnn"] = report.cascade->resolved;
    j["responses"] = report.cascade->responses;
  }
  return j.dump();
}

std::string format_report_table(std::span<const std::pair<std::string, EvalReport>> rows) {
  auto pct = [](std::optional<double> v) { return v ? fmt::format("{:6.2f}", 100.0 * *v) : std::string("     -"); };
  std::string out = fmt::format("{:<24} {:>6} {:>6} {:>6} {:>6} {:>6}\n", "run", "top1", "top2", "top5", "HS", "HU");
  for (const auto& [label, r] : rows)
    out += fmt::format("{:<24} {:6.2f} {:6.2f} {:6.2f} {} {}\n", label, 100.0 * r.top1, 100.0 * r.top2,
                       100.0 * r.top5, pct(r.hs_accuracy), pct(r.hu_accuracy));
  return out;
}

}  // namespace relcat
