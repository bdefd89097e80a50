#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relcat/relational_store.hpp"
#include "relcat/tensor.hpp"

namespace relcat {

// Typed directed relation (source node type, destination node type).
struct Relation {
  std::string src;
  std::string dst;

  std::string key() const { return src + "->" + dst; }
  Relation inverse() const { return {dst, src}; }
  auto operator<=>(const Relation&) const = default;
};

struct EdgeList {
  std::vector<int> src;
  std::vector<int> dst;

  std::size_t size() const { return src.size(); }
  void push(int s, int d) {
    src.push_back(s);
    dst.push_back(d);
  }
  friend bool operator==(const EdgeList&, const EdgeList&) = default;
};

struct NodeSet {
  std::vector<std::string> ids;
  Matrix features;
};

inline const Relation kTxnToCategory{kTransactionTable, kCategoryTable};
inline const Relation kCategoryToTxn{kCategoryTable, kTransactionTable};
inline const Relation kTxnToCompany{kTransactionTable, kCompanyTable};
inline const Relation kCompanyToTxn{kCompanyTable, kTransactionTable};
inline const Relation kTxnToTxn{kTransactionTable, kTransactionTable};

// Typed nodes and typed edges. Node sets and edge lists are
// immutable and shared between graphs derived from one another.
class HeteroGraph {
 public:
  using NodeMap = std::map<std::string, std::shared_ptr<const NodeSet>>;
  using EdgeMap = std::map<Relation, std::shared_ptr<const EdgeList>>;

  HeteroGraph() = default;
  HeteroGraph(NodeMap nodes, EdgeMap edges, std::vector<int> company_of, bool augmented);

  const NodeMap& node_sets() const { return nodes_; }
  const EdgeMap& relations() const { return edges_; }
  bool has_type(const std::string& type) const { return nodes_.contains(type); }
  const NodeSet& nodes(const std::string& type) const;
  std::size_t num_nodes(const std::string& type) const;
  const Matrix& features(const std::string& type) const { return nodes(type).features; }
  // nullptr when the relation is absent.
  const EdgeList* edges(const Relation& r) const;
  std::size_t total_edges() const;

  // Transaction index -> company index.
  std::span<const int> company_of() const { return company_of_; }
  // Company index -> its transaction indices in ascending order.
  const std::vector<std::vector<int>>& company_transactions() const { return company_txns_; }

  // Same-company transaction pairs, held by company grouping rather than as
  // explicit edges. Only meaningful after augment_two_hop.
  bool augmented() const { return augmented_; }
  std::vector<int> augmented_neighbors(int txn) const;
  std::size_t augmented_pair_count() const;

  // Transactions with an incoming category edge, i.e. labeled in this graph.
  std::vector<std::uint8_t> labeled_transactions() const;
  // (transaction index, category index) pairs, sorted.
  std::vector<std::pair<int, int>> labeled_pairs() const;

  HeteroGraph with_relation(const Relation& r, EdgeList edges) const;
  HeteroGraph without_relation(const Relation& r) const;
  HeteroGraph with_augmented(bool augmented) const;

  // One file per relation, "<src>__<dst>.tsv", lines "src_pk<TAB>dst_pk".
  void dump(const std::filesystem::path& directory) const;

 private:
  NodeMap nodes_;
  EdgeMap edges_;
  std::vector<int> company_of_;
  std::vector<std::vector<int>> company_txns_;
  bool augmented_ = false;
};

// Node types are the table names; each non-null foreign key from row a to row
// b yields a -> b under (table of a, table of b) and b -> a under the inverse.
// Tables missing from `features` get zero-width features; a row-count
// mismatch throws DimensionError.
HeteroGraph build_graph(const RelationalDatabase& db, const std::map<std::string, Matrix>& features);

HeteroGraph augment_two_hop(const HeteroGraph& g);
HeteroGraph drop_incoming_category_edges(const HeteroGraph& g);

struct EdgeMask {
  std::set<std::pair<int, int>> masked_pairs;  // (transaction, category)
};

// Removes both directions of every masked (transaction, category) pair.
// Throws std::invalid_argument when a pair is not linked in `g`.
HeteroGraph mask_edges(const HeteroGraph& g, const EdgeMask& mask);

struct EpochPositives {
  EdgeMask mask;
  std::vector<std::pair<int, int>> positives;
};

// Uniformly samples ceil(fraction * |labeled pairs|) distinct pairs.
EpochPositives sample_epoch_positives(const HeteroGraph& g, double fraction, std::uint64_t seed);

}  // namespace relcat
