#include "relcat/hetero_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace relcat {

HeteroGraph::HeteroGraph(NodeMap nodes, EdgeMap edges, std::vector<int> company_of, bool augmented)
    : nodes_(std::move(nodes)),
      edges_(std::move(edges)),
      company_of_(std::move(company_of)),
      augmented_(augmented) {
  const std::size_t num_companies = has_type(kCompanyTable) ? num_nodes(kCompanyTable) : 0;
  company_txns_.assign(num_companies, {});
  for (std::size_t t = 0; t < company_of_.size(); ++t) {
    const int c = company_of_[t];
    if (c >= 0 && static_cast<std::size_t>(c) < num_companies)
      company_txns_[static_cast<std::size_t>(c)].push_back(static_cast<int>(t));
  }
}

const NodeSet& HeteroGraph::nodes(const std::string& type) const {
  auto it = nodes_.find(type);
  if (it == nodes_.end()) throw std::out_of_range("graph has no node type " + type);
  return *it->second;
}

std::size_t HeteroGraph::num_nodes(const std::string& type) const {
  auto it = nodes_.find(type);
  return it == nodes_.end() ? 0 : it->second->ids.size();
}

const EdgeList* HeteroGraph::edges(const Relation& r) const {
  auto it = edges_.find(r);
  return it == edges_.end() ? nullptr : it->second.get();
}

std::size_t HeteroGraph::total_edges() const {
  std::size_t n = 0;
  for (const auto& [r, e] : edges_) n += e->size();
  return n;
}

std::vector<int> HeteroGraph::augmented_neighbors(int txn) const {
  std::vector<int> out;
  if (!augmented_) return out;
  const int c = company_of_.at(static_cast<std::size_t>(txn));
  if (c < 0) return out;
  for (int other : company_txns_[static_cast<std::size_t>(c)])
    if (other != txn) out.push_back(other);
  return out;
}

std::size_t HeteroGraph::augmented_pair_count() const {
  if (!augmented_) return 0;
  std::size_t n = 0;
  for (const auto& members : company_txns_) n += members.size() * (members.size() - (members.empty() ? 0 : 1));
  return n;
}

std::vector<std::uint8_t> HeteroGraph::labeled_transactions() const {
  std::vector<std::uint8_t> labeled(num_nodes(kTransactionTable), 0);
  if (const EdgeList* e = edges(kCategoryToTxn)) {
    for (int t : e->dst) labeled[static_cast<std::size_t>(t)] = 1;
  } else if (const EdgeList* f = edges(kTxnToCategory)) {
    for (int t : f->src) labeled[static_cast<std::size_t>(t)] = 1;
  }
  return labeled;
}

std::vector<std::pair<int, int>> HeteroGraph::labeled_pairs() const {
  std::vector<std::pair<int, int>> pairs;
  if (const EdgeList* e = edges(kCategoryToTxn)) {
    for (std::size_t i = 0; i < e->size(); ++i) pairs.emplace_back(e->dst[i], e->src[i]);
  } else if (const EdgeList* f = edges(kTxnToCategory)) {
    for (std::size_t i = 0; i < f->size(); ++i) pairs.emplace_back(f->src[i], f->dst[i]);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

HeteroGraph HeteroGraph::with_relation(const Relation& r, EdgeList edges) const {
  HeteroGraph g = *this;
  g.edges_[r] = std::make_shared<const EdgeList>(std::move(edges));
  return g;
}

HeteroGraph HeteroGraph::without_relation(const Relation& r) const {
  HeteroGraph g = *this;
  g.edges_.erase(r);
  return g;
}

HeteroGraph HeteroGraph::with_augmented(bool augmented) const {
  HeteroGraph g = *this;
  g.augmented_ = augmented;
  return g;
}

void HeteroGraph::dump(const std::filesystem::path& directory) const {
  std::filesystem::create_directories(directory);
  for (const auto& [r, e] : edges_) {
    std::ofstream out(directory / (r.src + "__" + r.dst + ".tsv"), std::ios::trunc);
    const auto& src_ids = nodes(r.src).ids;
    const auto& dst_ids = nodes(r.dst).ids;
    for (std::size_t i = 0; i < e->size(); ++i)
      out << src_ids[static_cast<std::size_t>(e->src[i])] << '\t'
          << dst_ids[static_cast<std::size_t>(e->dst[i])] << '\n';
  }
}

HeteroGraph build_graph(const RelationalDatabase& db, const std::map<std::string, Matrix>& features) {
  HeteroGraph::NodeMap nodes;
  for (const auto& [name, table] : db.tables()) {
    auto set = std::make_shared<NodeSet>();
    set->ids.reserve(table.rows.size());
    for (const Row& row : table.rows) set->ids.push_back(row.pk);
    auto it = features.find(name);
    if (it == features.end()) {
      set->features = Matrix(table.rows.size(), 0);
    } else {
      if (it->second.rows() != table.rows.size())
        throw DimensionError("features for '" + name + "' have " + std::to_string(it->second.rows()) +
                             " rows but the table has " + std::to_string(table.rows.size()));
      set->features = it->second;
    }
    nodes.emplace(name, std::move(set));
  }

  HeteroGraph::EdgeMap edges;
  for (const auto& [name, table] : db.tables()) {
    for (std::size_t f = 0; f < table.schema.foreign_keys.size(); ++f) {
      const ForeignKey& fk = table.schema.foreign_keys[f];
      const Table& target = db.table(fk.target_table);
      EdgeList forward, inverse;
      for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& value = table.rows[i].fkeys[f];
        if (!value) continue;
        auto j = target.find(*value);
        if (!j)
          throw std::invalid_argument("dangling foreign key " + name + "." + fk.column + " = " + *value);
        forward.push(static_cast<int>(i), static_cast<int>(*j));
        inverse.push(static_cast<int>(*j), static_cast<int>(i));
      }
      edges[Relation{name, fk.target_table}] = std::make_shared<const EdgeList>(std::move(forward));
      edges[Relation{fk.target_table, name}] = std::make_shared<const EdgeList>(std::move(inverse));
    }
  }

  std::vector<int> company_of;
  if (db.has_table(kTransactionTable) && db.has_table(kCompanyTable)) {
    const Table& txns = db.table(kTransactionTable);
    const Table& companies = db.table(kCompanyTable);
    const int slot = txns.schema.foreign_key_index("company_fk");
    company_of.assign(txns.rows.size(), -1);
    for (std::size_t i = 0; i < txns.rows.size(); ++i) {
      const auto& v = txns.rows[i].fkeys[static_cast<std::size_t>(slot)];
      if (v)
        if (auto j = companies.find(*v)) company_of[i] = static_cast<int>(*j);
    }
  }
  return HeteroGraph(std::move(nodes), std::move(edges), std::move(company_of), false);
}

HeteroGraph augment_two_hop(const HeteroGraph& g) { return g.with_augmented(true); }

HeteroGraph drop_incoming_category_edges(const HeteroGraph& g) {
  return g.without_relation(kTxnToCategory);
}

HeteroGraph mask_edges(const HeteroGraph& g, const EdgeMask& mask) {
  if (mask.masked_pairs.empty()) return g;
  std::set<std::pair<int, int>> found;
  HeteroGraph out = g;
  if (const EdgeList* e = g.edges(kTxnToCategory)) {
    EdgeList kept;
    for (std::size_t i = 0; i < e->size(); ++i) {
      std::pair<int, int> p{e->src[i], e->dst[i]};
      if (mask.masked_pairs.contains(p)) {
        found.insert(p);
      } else {
        kept.push(p.first, p.second);
      }
    }
    out = out.with_relation(kTxnToCategory, std::move(kept));
  }
  if (const EdgeList* e = g.edges(kCategoryToTxn)) {
    EdgeList kept;
    for (std::size_t i = 0; i < e->size(); ++i) {
      std::pair<int, int> p{e->dst[i], e->src[i]};
      if (mask.masked_pairs.contains(p)) {
        found.insert(p);
      } else {
        kept.push(e->src[i], e->dst[i]);
      }
    }
    out = out.with_relation(kCategoryToTxn, std::move(kept));
  }
  for (const auto& p : mask.masked_pairs)
    if (!found.contains(p))
      throw std::invalid_argument("mask_edges: transaction " + std::to_string(p.first) +
                                  " is not linked to category " + std::to_string(p.second));
  return out;
}

EpochPositives sample_epoch_positives(const HeteroGraph& g, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("sample_epoch_positives: fraction must be in (0, 1]");
  std::vector<std::pair<int, int>> pairs = g.labeled_pairs();
  if (pairs.empty()) throw std::invalid_argument("sample_epoch_positives: graph has no positive edges");
  const double exact = fraction * static_cast<double>(pairs.size());
  auto n = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  n = std::clamp<std::size_t>(n, 1, pairs.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pairs.size() - 1);
    std::swap(pairs[i], pairs[pick(rng)]);
  }
  pairs.resize(n);
  EpochPositives out;
  out.positives = pairs;
  out.mask.masked_pairs.insert(pairs.begin(), pairs.end());
  return out;
}

}  // namespace relcat
