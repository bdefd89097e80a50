#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "relcat/cascade.hpp"
#include "relcat/prediction.hpp"
#include "relcat/relational_store.hpp"

namespace relcat {

struct TestCase {
  std::string transaction_pk;
  std::size_t row;  // transaction table row
  std::string company_pk;
  std::string truth;  // category pk
};

struct Split {
  // Same rows as the input; test transactions have a null category.
  RelationalDatabase train;
  std::vector<TestCase> test;
};

// Holds out the last n labeled transactions (by date, then row) of every
// company. Companies with n or fewer labeled transactions are left out of
// the test set with a warning.
Split temporal_split(const RelationalDatabase& db, std::size_t per_company_test_n);

// Company pk -> category pks linked from its labeled transactions.
using CompanyHistory = std::map<std::string, std::set<std::string>>;
CompanyHistory company_history(const RelationalDatabase& db);

struct EvalReport {
  double top1 = 0.0;
  double top2 = 0.0;
  double top5 = 0.0;
  // Top-1 within the historical-seen and historical-unseen subsets; absent
  // when the subset is empty.
  std::optional<double> hs_accuracy;
  std::optional<double> hu_accuracy;
  std::size_t hs_count = 0;
  std::size_t hu_count = 0;
  std::size_t count = 0;
  std::optional<CascadeStats> cascade;
};

// `predictions` maps transaction pk to its ranked predictions. Throws
// std::invalid_argument unless its keys are exactly the test transactions.
EvalReport evaluate(std::span<const TestCase> cases, const std::map<std::string, std::vector<Prediction>>& predictions,
                    const CompanyHistory& history);

std::string to_json_line(const EvalReport& report, const std::string& label);
// Fixed-width rows: label, Top-1/2/5, HS, HU.
std::string format_report_table(std::span<const std::pair<std::string, EvalReport>> rows);

}  // namespace relcat
