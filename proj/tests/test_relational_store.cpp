#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "relcat/relational_store.hpp"

using namespace relcat;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("relcat_store_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

}  // namespace

TEST_CASE("tiny fixture loads with four tables and four links") {
  const fs::path dir = scratch("tiny");
  save_database(fixtures::tiny_db(), dir);
  const RelationalDatabase db = load_database(dir);
  CHECK(db.tables().size() == 4);
  CHECK(db.links().size() == 4);
  CHECK(db.links().contains({kTransactionTable, kCategoryTable}));
  CHECK(db.links().contains({kCategoryTable, kCodeTable}));
  CHECK_FALSE(db.links().contains({kCategoryTable, kTransactionTable}));
  CHECK(db.transaction(0).description == "EXXONMOBIL 123");
}

TEST_CASE("empty transaction table keeps links") {
  RelationalDatabase db = RelationalDatabase::empty();
  db.add_company("co-1", "Acme");
  db.reindex();
  const fs::path dir = scratch("empty");
  save_database(db, dir);
  const RelationalDatabase loaded = load_database(dir);
  CHECK(loaded.table(kTransactionTable).rows.empty());
  CHECK(loaded.links().size() == 4);
}

TEST_CASE("dangling category fk is an integrity error naming the row") {
  RelationalDatabase db = fixtures::tiny_db();
  db.add_transaction(fixtures::txn("t-2", "co-1", "cat-missing", "SHELL OIL"));
  db.reindex();
  const fs::path dir = scratch("dangling");
  save_database(db, dir);
  try {
    load_database(dir);
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    REQUIRE(e.violations().size() == 1);
    const Violation& v = e.violations()[0];
    CHECK(v.kind == Violation::Kind::dangling_fk);
    CHECK(v.table == kTransactionTable);
    CHECK(v.pk == "t-2");
    CHECK(v.column == "category_fk");
  }
}

TEST_CASE("missing file names its table") {
  const fs::path dir = scratch("missing");
  save_database(fixtures::tiny_db(), dir);
  fs::remove(dir / "codes.csv");
  try {
    load_database(dir);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(e.table() == kCodeTable);
  }
}

TEST_CASE("validate") {
  SUBCASE("valid fixture has an empty report") { CHECK(validate(fixtures::tiny_db()).ok()); }
  SUBCASE("duplicate transaction pk is reported once") {
    RelationalDatabase db = fixtures::tiny_db();
    db.add_transaction(fixtures::txn("t-1", "co-1", "cat-1", "SHELL"));
    db.reindex();
    const ValidationReport r = validate(db);
    CHECK(r.violations.size() == 1);
    CHECK(r.count(Violation::Kind::duplicate_pk) == 1);
  }
  SUBCASE("null category is legal") {
    RelationalDatabase db = fixtures::tiny_db();
    db.add_transaction(fixtures::txn("t-2", "co-1", std::nullopt, "SHELL"));
    db.reindex();
    CHECK(validate(db).ok());
  }
  SUBCASE("empty description and bad amount are attribute violations") {
    RelationalDatabase db = fixtures::tiny_db();
    db.add_transaction(fixtures::txn("t-2", "co-1", "cat-1", ""));
    db.add_transaction(fixtures::txn("t-3", "co-1", "cat-1", "X", "nan"));
    db.reindex();
    CHECK(validate(db).count(Violation::Kind::invalid_attribute) == 2);
  }
}

TEST_CASE("validation is idempotent and independent of row order") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    RelationalDatabase db = fixtures::random_db(rng);
    // Plant a duplicate and a dangling key.
    db.add_transaction(fixtures::txn("t-dup", "co-0", std::nullopt, "A"));
    db.add_transaction(fixtures::txn("t-dup", "co-0", std::nullopt, "B"));
    db.add_transaction(fixtures::txn("t-bad", "co-nope", std::nullopt, "C"));
    db.reindex();
    const ValidationReport a = validate(db);
    const ValidationReport b = validate(db);
    CHECK(a.violations.size() == b.violations.size());

    RelationalDatabase shuffled = db;
    auto& rows = shuffled.table(kTransactionTable).rows;
    std::shuffle(rows.begin(), rows.end(), rng);
    shuffled.reindex();
    const ValidationReport c = validate(shuffled);
    for (auto kind : {Violation::Kind::duplicate_pk, Violation::Kind::dangling_fk, Violation::Kind::invalid_attribute})
      CHECK(a.count(kind) == c.count(kind));
  }
}

TEST_CASE("save and load round-trip byte for byte") {
  RelationalDatabase db = fixtures::tiny_db();
  db.add_transaction(fixtures::txn("t-2", "co-1", std::nullopt, "JOE'S \"BEST\", INC", "12.50", "memo, with comma"));
  db.reindex();
  const fs::path a = scratch("rt_a"), b = scratch("rt_b");
  save_database(db, a);
  save_database(load_database(a), b);
  for (const char* f : {"transactions.csv", "categories.csv", "codes.csv", "companies.csv"})
    CHECK(slurp(a / f) == slurp(b / f));
  const RelationalDatabase back = load_database(b);
  CHECK(back.transaction(1).description == "JOE'S \"BEST\", INC");
  CHECK_FALSE(back.transaction(1).category_fk.has_value());
}

TEST_CASE("csv quoting") {
  const auto rows = parse_csv("a,\"b,c\",\"d \"\"e\"\"\"\n1,,3\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"a", "b,c", "d \"e\""});
  CHECK(rows[1] == std::vector<std::string>{"1", "", "3"});
  CHECK(format_csv_row({"x", "y,z", "q\"r"}) == "x,\"y,z\",\"q\"\"r\"");
}

TEST_CASE("malformed header is a load error") {
  const fs::path dir = scratch("header");
  save_database(fixtures::tiny_db(), dir);
  write(dir / "companies.csv", "id,title\nco-1,Acme\n");
  CHECK_THROWS_AS(load_database(dir), LoadError);
}
