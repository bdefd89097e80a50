#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relcat/errors.hpp"

namespace relcat {

inline constexpr const char* kTransactionTable = "transaction";
inline constexpr const char* kCategoryTable = "category";
inline constexpr const char* kCodeTable = "code";
inline constexpr const char* kCompanyTable = "company";

enum class AttributeKind { text, decimal, date };

struct ForeignKey {
  std::string column;
  std::string target_table;
};

struct TableSchema {
  std::string name;
  std::string file_name;
  std::string primary_key;
  std::vector<ForeignKey> foreign_keys;
  std::vector<std::pair<std::string, AttributeKind>> attribute_columns;
  // Column order of the delimited file, primary key first.
  std::vector<std::string> columns;

  int foreign_key_index(const std::string& column) const;
  int attribute_index(const std::string& column) const;
};

// Primary key, foreign keys and attributes of one row, aligned with the schema.
struct Row {
  std::string pk;
  std::vector<std::optional<std::string>> fkeys;
  std::vector<std::string> attributes;

  friend bool operator==(const Row&, const Row&) = default;
};

struct Table {
  TableSchema schema;
  std::vector<Row> rows;

  // Row index by primary key; first occurrence wins when keys repeat.
  std::optional<std::size_t> find(const std::string& pk) const;
  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

struct TransactionRecord {
  std::string pk;
  std::string company_fk;
  std::optional<std::string> category_fk;
  std::string description;
  std::string amount;  // exact decimal text
  std::string memo;
  std::string date;

  double amount_value() const;
};

struct Violation {
  enum class Kind { duplicate_pk, dangling_fk, invalid_attribute, missing_table };
  Kind kind;
  std::string table;
  std::string pk;
  std::string column;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::size_t count(Violation::Kind kind) const;
};

class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& what, std::vector<Violation> violations)
      : Error(what), violations_(std::move(violations)) {}
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

class RelationalDatabase {
 public:
  // The four canonical tables, all empty.
  static RelationalDatabase empty();

  const std::map<std::string, Table>& tables() const { return tables_; }
  const Table& table(const std::string& name) const;
  Table& table(const std::string& name);
  bool has_table(const std::string& name) const { return tables_.contains(name); }
  void add_table(Table t);

  // (fkey table, pkey table) pairs, forward direction only.
  std::set<std::pair<std::string, std::string>> links() const;

  void add_company(std::string pk, std::string name);
  void add_code(std::string pk, std::string name);
  void add_category(std::string pk, std::string company_fk, std::string code_fk, std::string name);
  void add_transaction(const TransactionRecord& txn);

  TransactionRecord transaction(std::size_t row) const;
  std::vector<TransactionRecord> transactions() const;
  std::string name_of(const std::string& table, std::size_t row) const;

  void reindex();

 private:
  std::map<std::string, Table> tables_;
};

std::vector<TableSchema> canonical_schemas();

// Reads transactions.csv, categories.csv, codes.csv and companies.csv.
// Throws LoadError for a missing or malformed file and IntegrityError when
// validation reports duplicate keys, dangling foreign keys or bad attributes.
RelationalDatabase load_database(const std::filesystem::path& directory);
void save_database(const RelationalDatabase& db, const std::filesystem::path& directory);

ValidationReport validate(const RelationalDatabase& db);

// RFC-4180 style: comma separated, double-quote quoting, doubled embedded quotes.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::string format_csv_row(const std::vector<std::string>& fields);

}  // namespace relcat
