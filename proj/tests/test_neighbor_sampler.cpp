#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "relcat/hetero_gnn.hpp"
#include "relcat/neighbor_sampler.hpp"

using namespace relcat;

namespace {

Matrix rows_of(std::initializer_list<std::vector<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t i = 0;
  for (const auto& r : rows) {
    std::copy(r.begin(), r.end(), m.row(i).begin());
    ++i;
  }
  return m;
}

struct Prepared {
  RelationalDatabase db;
  HeteroGraph graph;
  HistoryIndex index;
  HeteroGraph message;
};

Prepared prepare(std::mt19937_64& rng, std::size_t companies, std::size_t txns, std::size_t history_k) {
  Prepared p;
  p.db = fixtures::random_db(rng, companies, txns);
  p.graph = build_graph(p.db, fixtures::random_features(p.db, 4, rng));
  p.index = HistoryIndex(p.graph, p.graph.features(kTransactionTable));
  p.message = prepare_graph(p.graph, &p.index, history_k, HistorySampling::similarity, 1);
  return p;
}

std::size_t in_degree(const EdgeList& e, int dst) { return static_cast<std::size_t>(std::count(e.dst.begin(), e.dst.end(), dst)); }

}  // namespace

TEST_CASE("exhaustive similarity search") {
  const Matrix history = rows_of({{0.9, std::sqrt(1 - 0.81)}, {0.2, std::sqrt(1 - 0.04)}, {0.5, std::sqrt(1 - 0.25)}});
  const std::vector<double> target{1.0, 0.0};
  const auto top = top_k_similar_history(target, history, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].index == 0);
  CHECK(top[1].index == 2);
  CHECK(top[0].similarity == doctest::Approx(0.9));

  const Matrix with_dup = rows_of({{0.0, 1.0}, {2.0, 0.0}});
  CHECK(top_k_similar_history(target, with_dup, 1)[0].similarity == doctest::Approx(1.0));
  CHECK(top_k_similar_history(target, Matrix(0, 2), 3).empty());
  CHECK(top_k_similar_history(target, rows_of({{1.0, 0.0}, {3.0, 0.0}}), 5)[0].index == 0);
  CHECK_THROWS_AS(top_k_similar_history(target, rows_of({{0.0, 0.0}}), 1), std::domain_error);
}

TEST_CASE("history excludes the target and other companies") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Prepared p = prepare(rng, 3, 30, 4);
    const auto labeled = p.message.labeled_transactions();
    const auto& company = p.message.company_of();
    for (std::size_t t = 0; t < p.message.num_nodes(kTransactionTable); ++t) {
      const auto h = p.index.history(p.message, labeled, static_cast<int>(t), 4, HistorySampling::similarity, 1);
      CHECK(h.size() <= 4);
      for (const SimilarItem& s : h) {
        CHECK(s.index != static_cast<int>(t));
        CHECK(company[static_cast<std::size_t>(s.index)] == company[t]);
        CHECK(labeled[static_cast<std::size_t>(s.index)] == 1);
      }
      // Uniform draws from the same pool.
      const auto u = p.index.history(p.message, labeled, static_cast<int>(t), 4, HistorySampling::uniform, 9);
      CHECK(u.size() == h.size());
    }
  }
}

TEST_CASE("ego subgraphs") {
  FanoutConfig fanout;
  fanout.history_k = 16;

  SUBCASE("cold-start company") {
    RelationalDatabase db = fixtures::tiny_db();
    db.add_company("co-2", "New");
    db.add_transaction(fixtures::txn("t-2", "co-2", std::nullopt, "FIRST"));
    db.reindex();
    std::mt19937_64 rng(1);
    const HeteroGraph g = build_graph(db, fixtures::random_features(db, 3, rng));
    const HistoryIndex index(g, g.features(kTransactionTable));
    const HeteroGraph m = prepare_graph(g, &index, 16, HistorySampling::similarity, 1);
    const EgoSubgraph ego = build_ego_subgraph(m, 1, fanout, 1);
    CHECK(ego.graph.num_nodes(kTransactionTable) == 1);
    CHECK(ego.graph.num_nodes(kCompanyTable) == 1);
    const EdgeList* tt = ego.graph.edges(kTxnToTxn);
    CHECK((tt == nullptr || tt->size() == 0));
  }
  SUBCASE("three peers all included") {
    RelationalDatabase db = fixtures::tiny_db();
    db.add_transaction(fixtures::txn("t-2", "co-1", "cat-1", "A"));
    db.add_transaction(fixtures::txn("t-3", "co-1", "cat-1", "B"));
    db.add_transaction(fixtures::txn("t-4", "co-1", std::nullopt, "C"));
    db.reindex();
    std::mt19937_64 rng(2);
    const HeteroGraph g = build_graph(db, fixtures::random_features(db, 3, rng));
    const HistoryIndex index(g, g.features(kTransactionTable));
    const HeteroGraph m = prepare_graph(g, &index, 16, HistorySampling::similarity, 1);
    const EgoSubgraph ego = build_ego_subgraph(m, 3, fanout, 1);
    CHECK(in_degree(*ego.graph.edges(kTxnToTxn), ego.target) == 3);
  }
  SUBCASE("bounded, deterministic and free of incoming category edges") {
    std::mt19937_64 rng(6);
    FanoutConfig tight;
    tight.default_fanout = 2;
    tight.history_k = 2;
    for (int trial = 0; trial < 20; ++trial) {
      const Prepared p = prepare(rng, 2, 30, 6);
      for (std::size_t t = 0; t < p.message.num_nodes(kTransactionTable); ++t) {
        const EgoSubgraph a = build_ego_subgraph(p.message, static_cast<int>(t), tight, 3);
        const EgoSubgraph b = build_ego_subgraph(p.message, static_cast<int>(t), tight, 3);
        CHECK(a.source_index == b.source_index);
        CHECK(a.graph.edges(kTxnToCategory) == nullptr);
        for (const auto& [r, e] : a.graph.relations()) {
          CHECK(*b.graph.edges(r) == *e);
          std::map<int, std::size_t> degree;
          for (int d : e->dst) ++degree[d];
          for (const auto& [d, n] : degree) CHECK(n <= tight.fanout(r));
          if (r == kTxnToTxn)
            for (std::size_t i = 0; i < e->size(); ++i) CHECK(e->src[i] != e->dst[i]);
        }
      }
    }
  }
}

TEST_CASE("subgraph embeddings equal full-graph embeddings when nothing is cut") {
  std::mt19937_64 rng(12);
  FanoutConfig fanout;
  fanout.default_fanout = 1000;
  fanout.history_k = 1000;
  for (int trial = 0; trial < 15; ++trial) {
    const Prepared p = prepare(rng, 3, 25, 1000);
    std::map<std::string, std::size_t> dims;
    for (const auto& [type, nodes] : p.message.node_sets()) dims[type] = nodes->features.cols();
    GnnModel model({.num_layers = 2, .hidden_dim = 8}, dims, gnn_relations(p.message, true), 5 + trial);
    const Matrix full = model.embed(p.message).at(kTransactionTable);
    for (std::size_t t = 0; t < p.message.num_nodes(kTransactionTable); ++t) {
      const EgoSubgraph ego = build_ego_subgraph(p.message, static_cast<int>(t), fanout, 1);
      const Matrix local = model.embed(ego.graph).at(kTransactionTable);
      const auto a = full.row(t);
      const auto b = local.row(static_cast<std::size_t>(ego.target));
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
  }
}
