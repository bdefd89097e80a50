#include "relcat/relational_store.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace relcat {

int TableSchema::foreign_key_index(const std::string& column) const {
  for (std::size_t i = 0; i < foreign_keys.size(); ++i)
    if (foreign_keys[i].column == column) return static_cast<int>(i);
  return -1;
}

int TableSchema::attribute_index(const std::string& column) const {
  for (std::size_t i = 0; i < attribute_columns.size(); ++i)
    if (attribute_columns[i].first == column) return static_cast<int>(i);
  return -1;
}

std::optional<std::size_t> Table::find(const std::string& pk) const {
  auto it = index_.find(pk);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Table::reindex() {
  index_.clear();
  index_.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) index_.emplace(rows[i].pk, i);
}

double TransactionRecord::amount_value() const {
  double v = 0.0;
  const char* first = amount.data();
  const char* last = amount.data() + amount.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw std::invalid_argument("invalid amount '" + amount + "' in transaction " + pk);
  return v;
}

std::size_t ValidationReport::count(Violation::Kind kind) const {
  std::size_t n = 0;
  for (const auto& v : violations) n += v.kind == kind;
  return n;
}

std::vector<TableSchema> canonical_schemas() {
  using K = AttributeKind;
  return {
      {kTransactionTable,
       "transactions.csv",
       "pk",
       {{"company_fk", kCompanyTable}, {"category_fk", kCategoryTable}},
       {{"description", K::text}, {"amount", K::decimal}, {"memo", K::text}, {"date", K::date}},
       {"pk", "company_fk", "category_fk", "description", "amount", "memo", "date"}},
      {kCategoryTable,
       "categories.csv",
       "pk",
       {{"company_fk", kCompanyTable}, {"code_fk", kCodeTable}},
       {{"name", K::text}},
       {"pk", "company_fk", "code_fk", "name"}},
      {kCodeTable, "codes.csv", "pk", {}, {{"name", K::text}}, {"pk", "name"}},
      {kCompanyTable, "companies.csv", "pk", {}, {{"name", K::text}}, {"pk", "name"}},
  };
}

RelationalDatabase RelationalDatabase::empty() {
  RelationalDatabase db;
  for (auto& schema : canonical_schemas()) {
    Table t;
    t.schema = std::move(schema);
    db.add_table(std::move(t));
  }
  return db;
}

const Table& RelationalDatabase::table(const std::string& name) const {
  auto it = tables_.find(name);
  if (it == tables_.end()) throw std::out_of_range("no table named " + name);
  return it->second;
}

Table& RelationalDatabase::table(const std::string& name) {
  auto it = tables_.find(name);
  if (it == tables_.end()) throw std::out_of_range("no table named " + name);
  return it->second;
}

void RelationalDatabase::add_table(Table t) {
  t.reindex();
  std::string name = t.schema.name;
  tables_.insert_or_assign(std::move(name), std::move(t));
}

std::set<std::pair<std::string, std::string>> RelationalDatabase::links() const {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& [name, t] : tables_)
    for (const auto& fk : t.schema.foreign_keys) out.emplace(name, fk.target_table);
  return out;
}

namespace {

void append_row(Table& t, Row row) {
  t.rows.push_back(std::move(row));
}

}  // namespace

void RelationalDatabase::add_company(std::string pk, std::string name) {
  append_row(table(kCompanyTable), Row{std::move(pk), {}, {std::move(name)}});
}

void RelationalDatabase::add_code(std::string pk, std::string name) {
  append_row(table(kCodeTable), Row{std::move(pk), {}, {std::move(name)}});
}

void RelationalDatabase::add_category(std::string pk, std::string company_fk, std::string code_fk,
                                      std::string name) {
  append_row(table(kCategoryTable),
             Row{std::move(pk), {std::move(company_fk), std::move(code_fk)}, {std::move(name)}});
}

void RelationalDatabase::add_transaction(const TransactionRecord& txn) {
  append_row(table(kTransactionTable),
             Row{txn.pk,
                 {txn.company_fk, txn.category_fk},
                 {txn.description, txn.amount, txn.memo, txn.date}});
}

TransactionRecord RelationalDatabase::transaction(std::size_t row) const {
  const Row& r = table(kTransactionTable).rows.at(row);
  TransactionRecord t;
  t.pk = r.pk;
  t.company_fk = r.fkeys[0].value_or("");
  t.category_fk = r.fkeys[1];
  t.description = r.attributes[0];
  t.amount = r.attributes[1];
  t.memo = r.attributes[2];
  t.date = r.attributes[3];
  return t;
}

std::vector<TransactionRecord> RelationalDatabase::transactions() const {
  std::vector<TransactionRecord> out;
  const std::size_t n = table(kTransactionTable).rows.size();
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(transaction(i));
  return out;
}

std::string RelationalDatabase::name_of(const std::string& table_name, std::size_t row) const {
  const Table& t = table(table_name);
  const int idx = t.schema.attribute_index("name");
  if (idx < 0) throw std::invalid_argument(table_name + " has no name column");
  return t.rows.at(row).attributes[static_cast<std::size_t>(idx)];
}

void RelationalDatabase::reindex() {
  for (auto& [name, t] : tables_) t.reindex();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(fields));
    fields.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          i += 2;
          continue;
        }
        in_quotes = false;
      } else {
        field.push_back(c);
      }
      ++i;
      continue;
    }
    if (c == '"' && field.empty() && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n' || c == '\r') {
      end_record();
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      field.push_back(c);
      field_started = true;
    }
    ++i;
  }
  if (in_quotes) throw std::invalid_argument("unterminated quoted field");
  if (field_started || !field.empty() || !fields.empty()) end_record();
  return records;
}

std::string format_csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    const std::string& f = fields[i];
    const bool quote = f.find_first_of(",\"\r\n") != std::string::npos;
    if (!quote) {
      out += f;
      continue;
    }
    out.push_back('"');
    for (char c : f) {
      if (c == '"') out.push_back('"');
      out.push_back(c);
    }
    out.push_back('"');
  }
  return out;
}

namespace {

Table load_table(const std::filesystem::path& directory, const TableSchema& schema) {
  const auto path = directory / schema.file_name;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(schema.name, "missing file for table '" + schema.name + "': " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::vector<std::vector<std::string>> records;
  try {
    records = parse_csv(buffer.str());
  } catch (const std::invalid_argument& e) {
    throw LoadError(schema.name, "table '" + schema.name + "': " + e.what());
  }
  if (records.empty() || records.front() != schema.columns)
    throw LoadError(schema.name, "table '" + schema.name + "': header does not match expected columns");

  std::vector<int> fk_slot(schema.columns.size(), -1), attr_slot(schema.columns.size(), -1);
  for (std::size_t c = 1; c < schema.columns.size(); ++c) {
    fk_slot[c] = schema.foreign_key_index(schema.columns[c]);
    attr_slot[c] = schema.attribute_index(schema.columns[c]);
  }
  Table t;
  t.schema = schema;
  t.rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != schema.columns.size())
      throw LoadError(schema.name, "table '" + schema.name + "': line " + std::to_string(r + 1) +
                                       " has " + std::to_string(rec.size()) + " fields, expected " +
                                       std::to_string(schema.columns.size()));
    Row row;
    row.pk = rec[0];
    row.fkeys.resize(schema.foreign_keys.size());
    row.attributes.resize(schema.attribute_columns.size());
    for (std::size_t c = 1; c < rec.size(); ++c) {
      if (fk_slot[c] >= 0) {
        if (!rec[c].empty()) row.fkeys[static_cast<std::size_t>(fk_slot[c])] = rec[c];
      } else if (attr_slot[c] >= 0) {
        row.attributes[static_cast<std::size_t>(attr_slot[c])] = rec[c];
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string describe(const std::vector<Violation>& violations) {
  std::string msg;
  for (std::size_t i = 0; i < violations.size() && i < 10; ++i) {
    const auto& v = violations[i];
    msg += "\n  (" + v.table + ", " + v.pk + (v.column.empty() ? "" : ", " + v.column) + "): " +
           v.message;
  }
  if (violations.size() > 10) msg += "\n  ... " + std::to_string(violations.size() - 10) + " more";
  return msg;
}

}  // namespace

RelationalDatabase load_database(const std::filesystem::path& directory) {
  RelationalDatabase db;
  for (const auto& schema : canonical_schemas()) db.add_table(load_table(directory, schema));
  ValidationReport report = validate(db);
  if (!report.ok()) {
    const bool dangling = report.count(Violation::Kind::dangling_fk) > 0;
    throw IntegrityError(std::string(dangling ? "referential-integrity" : "integrity") +
                             " violations in " + directory.string() + describe(report.violations),
                         std::move(report.violations));
  }
  return db;
}

void save_database(const RelationalDatabase& db, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  for (const auto& [name, t] : db.tables()) {
    std::ofstream out(directory / t.schema.file_name, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError(name, "cannot write " + (directory / t.schema.file_name).string());
    out << format_csv_row(t.schema.columns) << '\n';
    std::vector<std::string> fields(t.schema.columns.size());
    for (const Row& row : t.rows) {
      fields[0] = row.pk;
      for (std::size_t c = 1; c < t.schema.columns.size(); ++c) {
        const int fk = t.schema.foreign_key_index(t.schema.columns[c]);
        if (fk >= 0) {
          fields[c] = row.fkeys[static_cast<std::size_t>(fk)].value_or("");
        } else {
          fields[c] = row.attributes[static_cast<std::size_t>(t.schema.attribute_index(t.schema.columns[c]))];
        }
      }
      out << format_csv_row(fields) << '\n';
    }
  }
}

ValidationReport validate(const RelationalDatabase& db) {
  ValidationReport report;
  for (const auto& schema : canonical_schemas()) {
    if (!db.has_table(schema.name))
      report.violations.push_back(
          {Violation::Kind::missing_table, schema.name, "", "", "canonical table is absent"});
  }
  for (const auto& [name, t] : db.tables()) {
    std::unordered_map<std::string, int> seen;
    for (const Row& row : t.rows)
      if (++seen[row.pk] == 2)
        report.violations.push_back(
            {Violation::Kind::duplicate_pk, name, row.pk, t.schema.primary_key, "duplicate primary key"});

    for (std::size_t f = 0; f < t.schema.foreign_keys.size(); ++f) {
      const auto& fk = t.schema.foreign_keys[f];
      if (!db.has_table(fk.target_table)) {
        report.violations.push_back({Violation::Kind::missing_table, name, "", fk.column,
                                     "foreign key targets unknown table " + fk.target_table});
        continue;
      }
      const Table& target = db.table(fk.target_table);
      for (const Row& row : t.rows) {
        const auto& value = row.fkeys[f];
        if (value && !target.find(*value))
          report.violations.push_back({Violation::Kind::dangling_fk, name, row.pk, fk.column,
                                       "references missing " + fk.target_table + " '" + *value + "'"});
      }
    }
  }
  if (db.has_table(kTransactionTable)) {
    const Table& txns = db.table(kTransactionTable);
    const int desc = txns.schema.attribute_index("description");
    const int amount = txns.schema.attribute_index("amount");
    const int company = txns.schema.foreign_key_index("company_fk");
    for (const Row& row : txns.rows) {
      if (desc >= 0 && row.attributes[static_cast<std::size_t>(desc)].empty())
        report.violations.push_back({Violation::Kind::invalid_attribute, kTransactionTable, row.pk,
                                     "description", "empty description"});
      if (company >= 0 && !row.fkeys[static_cast<std::size_t>(company)])
        report.violations.push_back({Violation::Kind::invalid_attribute, kTransactionTable, row.pk,
                                     "company_fk", "transaction without company"});
      if (amount >= 0) {
        TransactionRecord probe;
        probe.pk = row.pk;
        probe.amount = row.attributes[static_cast<std::size_t>(amount)];
        try {
          (void)probe.amount_value();
        } catch (const std::invalid_argument&) {
          report.violations.push_back({Violation::Kind::invalid_attribute, kTransactionTable,
                                       row.pk, "amount", "amount is not a finite decimal"});
        }
      }
    }
  }
  return report;
}

}  // namespace relcat
