#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "relcat/autograd.hpp"
#include "relcat/hetero_graph.hpp"
#include "relcat/relational_store.hpp"

namespace fixtures {

using namespace relcat;

inline TransactionRecord txn(std::string pk, std::string company, std::optional<std::string> category,
                             std::string description, std::string amount = "-10.00", std::string memo = "",
                             std::string date = "2023-01-01") {
  TransactionRecord t;
  t.pk = std::move(pk);
  t.company_fk = std::move(company);
  t.category_fk = std::move(category);
  t.description = std::move(description);
  t.amount = std::move(amount);
  t.memo = std::move(memo);
  t.date = std::move(date);
  return t;
}

// 1 company, 1 code, 1 category, 1 transaction.
inline RelationalDatabase tiny_db() {
  RelationalDatabase db = RelationalDatabase::empty();
  db.add_company("co-1", "Acme");
  db.add_code("code-1", "Automobile");
  db.add_category("cat-1", "co-1", "code-1", "Fuel");
  db.add_transaction(txn("t-1", "co-1", "cat-1", "EXXONMOBIL 123"));
  db.reindex();
  return db;
}

// Random small database; about a fifth of transactions uncategorized.
inline RelationalDatabase random_db(std::mt19937_64& rng, std::size_t max_companies = 4, std::size_t max_txns = 30) {
  RelationalDatabase db = RelationalDatabase::empty();
  std::uniform_int_distribution<std::size_t> nco(1, max_companies), ncode(1, 3), ncat(1, 4), ntx(0, max_txns);
  const std::size_t companies = nco(rng), codes = ncode(rng);
  for (std::size_t c = 0; c < codes; ++c) db.add_code("code-" + std::to_string(c), "code " + std::to_string(c));
  std::vector<std::vector<std::string>> cats(companies);
  std::size_t cat_id = 0;
  for (std::size_t c = 0; c < companies; ++c) {
    const std::string co = "co-" + std::to_string(c);
    db.add_company(co, "company " + std::to_string(c));
    const std::size_t n = ncat(rng);
    for (std::size_t k = 0; k < n; ++k) {
      const std::string pk = "cat-" + std::to_string(cat_id++);
      db.add_category(pk, co, "code-" + std::to_string(std::uniform_int_distribution<std::size_t>(0, codes - 1)(rng)),
                      "name " + std::to_string(k));
      cats[c].push_back(pk);
    }
  }
  const std::size_t n = ntx(rng);
  std::bernoulli_distribution unlabeled(0.2);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = std::uniform_int_distribution<std::size_t>(0, companies - 1)(rng);
    std::optional<std::string> cat;
    if (!unlabeled(rng)) cat = cats[c][std::uniform_int_distribution<std::size_t>(0, cats[c].size() - 1)(rng)];
    db.add_transaction(txn("t-" + std::to_string(i), "co-" + std::to_string(c), cat, "MERCHANT " + std::to_string(i)));
  }
  db.reindex();
  return db;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

inline std::map<std::string, Matrix> random_features(const RelationalDatabase& db, std::size_t dim,
                                                     std::mt19937_64& rng) {
  std::map<std::string, Matrix> out;
  for (const auto& [name, table] : db.tables()) out[name] = random_matrix(table.rows.size(), dim, rng);
  return out;
}

// Largest relative error between analytic gradients of `loss` w.r.t. `inputs`
// and central differences; |a - n| / max(1, |a|, |n|).
inline double gradient_check(std::vector<Matrix>& inputs,
                             const std::function<ag::Var(ag::Tape&, std::vector<ag::Var>&)>& loss,
                             double h = 1e-6) {
  std::vector<ag::Parameter> params;
  for (std::size_t i = 0; i < inputs.size(); ++i) params.emplace_back("x" + std::to_string(i), inputs[i]);
  {
    ag::Tape tape;
    std::vector<ag::Var> vars;
    for (auto& p : params) vars.push_back(tape.param(p));
    ag::Var l = loss(tape, vars);
    tape.backward(l);
  }
  auto value = [&]() {
    ag::Tape tape(false);
    std::vector<ag::Var> vars;
    for (auto& p : params) vars.push_back(tape.param(p));
    return loss(tape, vars).value()(0, 0);
  };
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.data()[i];
      p.value.data()[i] = saved + h;
      const double up = value();
      p.value.data()[i] = saved - h;
      const double down = value();
      p.value.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad.data()[i];
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace fixtures
