#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "relcat/config.hpp"
#include "relcat/errors.hpp"
#include "relcat/evaluation.hpp"
#include "relcat/synthetic.hpp"
#include "relcat/weights.hpp"

using namespace relcat;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("relcat_harness_" + name); }

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

WeightFileError::Kind load_error(std::span<ag::Parameter* const> params, const fs::path& p,
                                 std::string* tensor = nullptr) {
  try {
    load_weights(params, p);
  } catch (const WeightFileError& e) {
    if (tensor) *tensor = e.tensor();
    return e.kind();
  }
  FAIL("load succeeded");
  return WeightFileError::Kind::io;
}

SyntheticConfig small_data() {
  SyntheticConfig c;
  c.num_companies = 12;
  c.min_transactions = 20;
  c.max_transactions = 40;
  c.seed = 3;
  return c;
}

Prediction pred(std::string pk, int rank) { return {std::move(pk), 0.0, rank, PredictionSource::gnn}; }

}  // namespace

TEST_CASE("synthetic data") {
  const RelationalDatabase a = generate_synthetic(small_data());
  const RelationalDatabase b = generate_synthetic(small_data());
  CHECK(validate(a).ok());
  CHECK(a.table(kCompanyTable).rows.size() == 12);
  const std::size_t n = a.table(kTransactionTable).rows.size();
  CHECK(n >= 12 * 20);
  CHECK(n <= 12 * 40);
  CHECK(a.table(kTransactionTable).rows == b.table(kTransactionTable).rows);

  SyntheticConfig other = small_data();
  other.seed = 4;
  CHECK(generate_synthetic(other).table(kTransactionTable).rows != a.table(kTransactionTable).rows);

  for (const Row& r : a.table(kTransactionTable).rows) {
    const std::string& desc = r.attributes[0];
    CHECK(!desc.empty());
    CHECK(std::none_of(desc.begin(), desc.end(), [](unsigned char c) { return std::islower(c); }));
  }

  SyntheticConfig bad = small_data();
  bad.memo_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_data();
  bad.num_companies = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("temporal split") {
  RelationalDatabase db = fixtures::tiny_db();
  db.add_transaction(fixtures::txn("t-2", "co-1", "cat-1", "B", "-1", "", "2023-03-01"));
  db.add_transaction(fixtures::txn("t-3", "co-1", "cat-1", "C", "-1", "", "2023-02-01"));
  db.add_transaction(fixtures::txn("t-4", "co-1", std::nullopt, "D", "-1", "", "2023-04-01"));
  db.add_company("co-2", "Tiny");
  db.add_category("cat-2", "co-2", "code-1", "Misc");
  db.add_transaction(fixtures::txn("t-5", "co-2", "cat-2", "E"));
  db.reindex();

  const Split s = temporal_split(db, 1);
  REQUIRE(s.test.size() == 1);
  CHECK(s.test[0].transaction_pk == "t-2");
  CHECK(s.test[0].truth == "cat-1");
  CHECK(s.test[0].company_pk == "co-1");
  const auto& rows = s.train.table(kTransactionTable).rows;
  CHECK_FALSE(rows[s.test[0].row].fkeys[1].has_value());
  CHECK(rows.size() == db.table(kTransactionTable).rows.size());
  // Every held-out transaction is at least as late as its company's training labels.
  for (const Row& r : rows)
    if (r.fkeys[1] && r.fkeys[0] == "co-1") CHECK(r.attributes.back() <= "2023-03-01");

  const CompanyHistory h = company_history(s.train);
  CHECK(h.at("co-1") == std::set<std::string>{"cat-1"});
  CHECK(h.at("co-2") == std::set<std::string>{"cat-2"});
}

TEST_CASE("evaluation") {
  const std::vector<TestCase> cases{{"t-1", 0, "co-1", "a"}, {"t-2", 1, "co-1", "b"}, {"t-3", 2, "co-1", "z"}};
  const CompanyHistory history{{"co-1", {"a", "b"}}};
  std::map<std::string, std::vector<Prediction>> preds{
      {"t-1", {pred("a", 1), pred("b", 2)}},
      {"t-2", {pred("a", 1), pred("b", 2)}},
      {"t-3", {pred("a", 1), pred("b", 2), pred("c", 3), pred("d", 4), pred("z", 5)}}};
  const EvalReport r = evaluate(cases, preds, history);
  CHECK(r.top1 == doctest::Approx(1.0 / 3));
  CHECK(r.top2 == doctest::Approx(2.0 / 3));
  CHECK(r.top5 == doctest::Approx(1.0));
  CHECK(r.hs_count == 2);
  CHECK(r.hu_count == 1);
  CHECK(*r.hs_accuracy == 0.5);
  CHECK(*r.hu_accuracy == 0.0);
  CHECK(r.top1 == doctest::Approx((*r.hs_accuracy * 2 + *r.hu_accuracy) / 3));

  preds.erase("t-3");
  CHECK_THROWS_AS(evaluate(cases, preds, history), std::invalid_argument);

  const std::string line = to_json_line(r, "demo");
  CHECK(line.find("\"run\":\"demo\"") != std::string::npos);
  const std::vector<std::pair<std::string, EvalReport>> rows{{"demo", r}};
  CHECK(format_report_table(rows).find("demo") != std::string::npos);
}

TEST_CASE("weight files") {
  std::mt19937_64 rng(1);
  ag::Parameter a("layer.a", fixtures::random_matrix(3, 4, rng));
  ag::Parameter b("layer.b", fixtures::random_matrix(1, 5, rng));
  ag::round_to_float32(a.value);
  ag::round_to_float32(b.value);
  const std::vector<ag::Parameter*> params{&a, &b};
  const fs::path path = temp_file("weights.bin");
  save_weights(params, path);

  SUBCASE("bitwise round trip") {
    ag::Parameter a2("layer.a", Matrix(3, 4)), b2("layer.b", Matrix(1, 5));
    const std::vector<ag::Parameter*> into{&a2, &b2};
    load_weights(into, path);
    CHECK(a2.value == a.value);
    CHECK(b2.value == b.value);
    save_weights(into, temp_file("weights2.bin"));
    CHECK(read_bytes(path) == read_bytes(temp_file("weights2.bin")));
    const auto tensors = read_weights(path);
    REQUIRE(tensors.size() == 2);
    CHECK(tensors[1].name == "layer.b");
  }
  SUBCASE("layout") {
    const auto bytes = read_bytes(path);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "RELCAT01");
    CHECK(bytes[8] == 2);
    const std::size_t expected = 8 + 4 + (2 + 7 + 1 + 8 + 12 * 4) + (2 + 7 + 1 + 8 + 5 * 4);
    CHECK(bytes.size() == expected);
  }
  SUBCASE("corruptions are told apart") {
    auto bytes = read_bytes(path);
    const fs::path bad = temp_file("bad.bin");

    auto flipped = bytes;
    flipped[0] = 'X';
    write_bytes(bad, flipped);
    CHECK(load_error(params, bad) == WeightFileError::Kind::magic);

    write_bytes(bad, std::vector<char>(bytes.begin(), bytes.end() - 3));
    CHECK(load_error(params, bad) == WeightFileError::Kind::truncated);
    write_bytes(bad, std::vector<char>(bytes.begin(), bytes.begin() + 5));
    CHECK(load_error(params, bad) == WeightFileError::Kind::truncated);

    ag::Parameter wrong("layer.a", Matrix(4, 3));
    std::string tensor;
    CHECK(load_error(std::vector<ag::Parameter*>{&wrong, &b}, path, &tensor) == WeightFileError::Kind::shape);
    CHECK(tensor == "layer.a");
    ag::Parameter renamed("layer.c", Matrix(1, 5));
    CHECK(load_error(std::vector<ag::Parameter*>{&a, &renamed}, path, &tensor) == WeightFileError::Kind::shape);
    CHECK(load_error(std::vector<ag::Parameter*>{&a}, path, &tensor) == WeightFileError::Kind::shape);
    CHECK(tensor == "layer.b");

    CHECK(load_error(params, temp_file("missing.bin")) == WeightFileError::Kind::io);
  }
}

TEST_CASE("configuration files") {
  const ExperimentConfig c = parse_config("# comment\nseed = 7\ngnn.epochs = 3\ncascade.k = 4\n");
  CHECK(c.seed == 7);
  CHECK(c.gnn_train.epochs == 3);
  CHECK(c.cascade.k == 4);
  CHECK(c.data.seed != parse_config("seed = 8\n").data.seed);
  CHECK(parse_config("seed = 7\ndata.seed = 5\n").data.seed == 5);

  CHECK_THROWS_AS(parse_config("gnn.bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("gnn.epochs = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("cascade.k = 0\n"), ConfigError);

  // Every key survives a dump and reparse.
  const ExperimentConfig again = parse_config(dump_config(c));
  CHECK(dump_config(again) == dump_config(c));
  CHECK(config_keys().size() > 30);
}
