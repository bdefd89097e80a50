#include "relcat/neighbor_sampler.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "relcat/errors.hpp"
#include "relcat/rng.hpp"

namespace relcat {

std::size_t FanoutConfig::fanout(const Relation& r) const {
  if (r == kTxnToTxn) return history_k;
  auto it = per_relation.find(r);
  return it == per_relation.end() ? default_fanout : it->second;
}

void FanoutConfig::validate() const {
  if (history_k < 1) throw ConfigError("sampler.history_k must be >= 1");
  if (num_hops < 1) throw ConfigError("sampler.num_hops must be >= 1");
}

namespace {

bool more_similar(const SimilarItem& a, const SimilarItem& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.index < b.index;
}

}  // namespace

std::vector<SimilarItem> top_k_similar_history(std::span<const double> target, const Matrix& history,
                                               std::size_t k) {
  if (k < 1) throw std::invalid_argument("top_k_similar_history: k must be >= 1");
  if (history.rows() > 0 && history.cols() != target.size())
    throw DimensionError("top_k_similar_history: embedding width mismatch");
  std::vector<SimilarItem> items;
  items.reserve(history.rows());
  for (std::size_t i = 0; i < history.rows(); ++i)
    items.push_back({static_cast<int>(i), cosine(target, history.row(i))});
  const std::size_t n = std::min(k, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n), items.end(), more_similar);
  items.resize(n);
  return items;
}

HistoryIndex::HistoryIndex(const HeteroGraph& graph, const Matrix& txn_embeddings, std::size_t candidate_cap)
    : embeddings_(txn_embeddings) {
  const std::size_t n = graph.num_nodes(kTransactionTable);
  if (txn_embeddings.rows() != n)
    throw DimensionError("HistoryIndex: embeddings have " + std::to_string(txn_embeddings.rows()) +
                         " rows for " + std::to_string(n) + " transactions");
  ranked_.assign(n, {});
  complete_.assign(n, 1);
  for (const auto& members : graph.company_transactions()) {
    for (int t : members) {
      auto& list = ranked_[static_cast<std::size_t>(t)];
      list.reserve(members.size());
      for (int other : members)
        if (other != t)
          list.push_back({other, cosine(embeddings_.row(static_cast<std::size_t>(t)),
                                        embeddings_.row(static_cast<std::size_t>(other)))});
      std::sort(list.begin(), list.end(), more_similar);
      if (list.size() > candidate_cap) {
        list.resize(candidate_cap);
        complete_[static_cast<std::size_t>(t)] = 0;
      }
      list.shrink_to_fit();
    }
  }
}

std::vector<SimilarItem> HistoryIndex::history(const HeteroGraph& graph, std::span<const std::uint8_t> labeled,
                                               int txn, std::size_t k, HistorySampling mode,
                                               std::uint64_t seed) const {
  const auto t = static_cast<std::size_t>(txn);
  std::vector<SimilarItem> out;
  if (mode == HistorySampling::similarity) {
    for (const SimilarItem& item : ranked_.at(t)) {
      if (out.size() == k) break;
      if (labeled[static_cast<std::size_t>(item.index)]) out.push_back(item);
    }
    if (out.size() == k || complete_[t]) return out;
  }

  const int company = graph.company_of()[t];
  std::vector<SimilarItem> pool;
  if (company >= 0)
    for (int other : graph.company_transactions()[static_cast<std::size_t>(company)])
      if (other != txn && labeled[static_cast<std::size_t>(other)])
        pool.push_back({other, cosine(embeddings_.row(t), embeddings_.row(static_cast<std::size_t>(other)))});

  const std::size_t n = std::min(k, pool.size());
  if (mode == HistorySampling::similarity) {
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n), pool.end(), more_similar);
  } else {
    std::mt19937_64 rng(derive_seed(seed, t));
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
  }
  pool.resize(n);
  return pool;
}

EdgeList HistoryIndex::materialize(const HeteroGraph& graph, std::size_t k, HistorySampling mode,
                                   std::uint64_t seed) const {
  const std::vector<std::uint8_t> labeled = graph.labeled_transactions();
  EdgeList edges;
  for (std::size_t t = 0; t < ranked_.size(); ++t)
    for (const SimilarItem& h : history(graph, labeled, static_cast<int>(t), k, mode, seed))
      edges.push(h.index, static_cast<int>(t));
  return edges;
}

InEdgeIndex::InEdgeIndex(const HeteroGraph& graph) {
  for (const auto& [r, edges] : graph.relations()) {
    Csr csr;
    const std::size_t n = graph.num_nodes(r.dst);
    csr.offsets.assign(n + 1, 0);
    for (int d : edges->dst) ++csr.offsets[static_cast<std::size_t>(d) + 1];
    std::partial_sum(csr.offsets.begin(), csr.offsets.end(), csr.offsets.begin());
    csr.edge_ids.resize(edges->size());
    std::vector<int> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
    for (std::size_t e = 0; e < edges->size(); ++e)
      csr.edge_ids[static_cast<std::size_t>(cursor[static_cast<std::size_t>(edges->dst[e])]++)] =
          static_cast<int>(e);
    csr_.emplace(r, std::move(csr));
  }
}

std::span<const int> InEdgeIndex::in_edges(const Relation& r, int dst) const {
  auto it = csr_.find(r);
  if (it == csr_.end()) return {};
  const Csr& c = it->second;
  const auto d = static_cast<std::size_t>(dst);
  return {c.edge_ids.data() + c.offsets[d], static_cast<std::size_t>(c.offsets[d + 1] - c.offsets[d])};
}

EgoSubgraph build_ego_subgraph(const HeteroGraph& graph, int target_txn, const FanoutConfig& fanout,
                               std::uint64_t seed) {
  return build_ego_subgraph(graph, InEdgeIndex(graph), target_txn, fanout, seed);
}

EgoSubgraph build_ego_subgraph(const HeteroGraph& graph, const InEdgeIndex& index, int target_txn,
                               const FanoutConfig& fanout, std::uint64_t seed) {
  fanout.validate();
  if (target_txn < 0 || static_cast<std::size_t>(target_txn) >= graph.num_nodes(kTransactionTable))
    throw std::out_of_range("build_ego_subgraph: target out of range");

  std::map<std::string, std::vector<int>> members;
  std::map<std::string, std::unordered_map<int, int>> local;
  for (const auto& [type, nodes] : graph.node_sets()) members[type];
  auto add_node = [&](const std::string& type, int global) {
    auto [it, inserted] = local[type].emplace(global, static_cast<int>(members[type].size()));
    if (inserted) members[type].push_back(global);
    return std::pair{it->second, inserted};
  };

  std::vector<Relation> relations;
  for (const auto& [r, e] : graph.relations())
    if (r != kTxnToCategory) relations.push_back(r);
  std::map<Relation, EdgeList> sub_edges;
  for (const Relation& r : relations) sub_edges[r];

  std::vector<std::pair<std::string, int>> frontier{{kTransactionTable, target_txn}};
  add_node(kTransactionTable, target_txn);
  const std::hash<std::string> hasher;
  for (std::size_t hop = 0; hop < fanout.num_hops && !frontier.empty(); ++hop) {
    std::vector<std::pair<std::string, int>> next;
    for (const auto& [type, v] : frontier) {
      const int v_local = local[type].at(v);
      for (const Relation& r : relations) {
        if (r.dst != type) continue;
        std::span<const int> in = index.in_edges(r, v);
        const std::size_t cap = fanout.fanout(r);
        std::vector<int> chosen(in.begin(), in.end());
        if (chosen.size() > cap) {
          if (r == kTxnToTxn) {
            chosen.resize(cap);
          } else {
            std::mt19937_64 rng(derive_seed(seed, hasher(r.key()), static_cast<std::uint64_t>(v)));
            for (std::size_t i = 0; i < cap; ++i) {
              std::uniform_int_distribution<std::size_t> pick(i, chosen.size() - 1);
              std::swap(chosen[i], chosen[pick(rng)]);
            }
            chosen.resize(cap);
            std::sort(chosen.begin(), chosen.end());
          }
        }
        const EdgeList& edges = *graph.edges(r);
        for (int e : chosen) {
          const int u = edges.src[static_cast<std::size_t>(e)];
          auto [u_local, inserted] = add_node(r.src, u);
          if (inserted) next.emplace_back(r.src, u);
          sub_edges[r].push(u_local, v_local);
        }
      }
    }
    frontier = std::move(next);
  }

  HeteroGraph::NodeMap nodes;
  for (const auto& [type, ids] : members) {
    const NodeSet& source = graph.nodes(type);
    auto set = std::make_shared<NodeSet>();
    set->ids.reserve(ids.size());
    for (int g : ids) set->ids.push_back(source.ids[static_cast<std::size_t>(g)]);
    set->features = gather_rows(source.features, ids);
    nodes.emplace(type, std::move(set));
  }
  HeteroGraph::EdgeMap edge_map;
  for (auto& [r, e] : sub_edges) edge_map.emplace(r, std::make_shared<const EdgeList>(std::move(e)));

  std::vector<int> company_of;
  if (graph.has_type(kCompanyTable) && !graph.company_of().empty()) {
    const auto& company_local = local[kCompanyTable];
    for (int g : members[kTransactionTable]) {
      const int c = graph.company_of()[static_cast<std::size_t>(g)];
      auto it = company_local.find(c);
      company_of.push_back(it == company_local.end() ? -1 : it->second);
    }
  }

  EgoSubgraph out;
  out.graph = HeteroGraph(std::move(nodes), std::move(edge_map), std::move(company_of), false);
  out.target = 0;
  out.source_index = std::move(members);
  return out;
}

}  // namespace relcat
