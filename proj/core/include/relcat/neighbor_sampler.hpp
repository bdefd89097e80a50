#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "relcat/hetero_graph.hpp"
#include "relcat/tensor.hpp"

namespace relcat {

struct FanoutConfig {
  // Relations not listed use default_fanout.
  std::map<Relation, std::size_t> per_relation;
  std::size_t default_fanout = 256;
  std::size_t history_k = 16;
  std::size_t num_hops = 2;

  std::size_t fanout(const Relation& r) const;
  void validate() const;
};

struct SimilarItem {
  int index;
  double similarity;

  friend bool operator==(const SimilarItem&, const SimilarItem&) = default;
};

// Exhaustive cosine search: min(k, rows) entries, descending similarity, ties
// by ascending index. Throws std::domain_error on a zero-norm embedding.
std::vector<SimilarItem> top_k_similar_history(std::span<const double> target, const Matrix& history,
                                               std::size_t k);

enum class HistorySampling { similarity, uniform };

// Same-company candidates for the transaction-transaction relation. Each
// transaction's company peers are ranked once by cosine similarity; which of
// them count as history depends on the graph they are materialized against:
// only peers with a category edge in that graph qualify.
class HistoryIndex {
 public:
  HistoryIndex() = default;
  // Keeps at most `candidate_cap` ranked peers per transaction and falls back
  // to a full scan when fewer than k of those are labeled.
  HistoryIndex(const HeteroGraph& graph, const Matrix& txn_embeddings, std::size_t candidate_cap = 256);

  std::size_t num_transactions() const { return ranked_.size(); }
  std::span<const SimilarItem> ranked(int txn) const { return ranked_.at(static_cast<std::size_t>(txn)); }

  // History of one transaction: up to k labeled company peers, never itself.
  // `uniform` draws them at random (seeded per transaction) instead.
  std::vector<SimilarItem> history(const HeteroGraph& graph, std::span<const std::uint8_t> labeled, int txn,
                                   std::size_t k, HistorySampling mode, std::uint64_t seed) const;

  // (history, target) edges for every transaction, grouped by target in
  // ascending order, each group in history order.
  EdgeList materialize(const HeteroGraph& graph, std::size_t k, HistorySampling mode, std::uint64_t seed) const;

 private:
  Matrix embeddings_;
  std::vector<std::vector<SimilarItem>> ranked_;
  std::vector<std::uint8_t> complete_;
};

struct EgoSubgraph {
  HeteroGraph graph;
  int target = -1;  // local transaction index
  // Local index -> index in the source graph, per node type.
  std::map<std::string, std::vector<int>> source_index;
};

// Nodes within num_hops of the target along in-edges, and the in-edges of
// every node closer than num_hops. The transaction-transaction relation keeps
// the first history_k in-edges (the source graph stores them most similar
// first); other relations keep a uniform sample of at most their fan-out.
// Kept in-edges stay in source order, so message passing at the target is
// unchanged when no relation is cut. Incoming transaction->category edges are
// never included.
EgoSubgraph build_ego_subgraph(const HeteroGraph& graph, int target_txn, const FanoutConfig& fanout,
                               std::uint64_t seed);

// Per-relation destination-major edge index.
class InEdgeIndex {
 public:
  InEdgeIndex() = default;
  explicit InEdgeIndex(const HeteroGraph& graph);
  // Edge ids into graph.edges(r), ascending.
  std::span<const int> in_edges(const Relation& r, int dst) const;

 private:
  struct Csr {
    std::vector<int> offsets;
    std::vector<int> edge_ids;
  };
  std::map<Relation, Csr> csr_;
};

EgoSubgraph build_ego_subgraph(const HeteroGraph& graph, const InEdgeIndex& index, int target_txn,
                               const FanoutConfig& fanout, std::uint64_t seed);

}  // namespace relcat
