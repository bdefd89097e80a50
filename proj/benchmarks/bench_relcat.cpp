#include <random>

#include <benchmark/benchmark.h>

#include "relcat/cascade.hpp"
#include "relcat/hetero_gnn.hpp"
#include "relcat/pipeline.hpp"
#include "relcat/synthetic.hpp"

using namespace relcat;

namespace {

RelationalDatabase small_db(std::size_t companies) {
  SyntheticConfig c;
  c.num_companies = companies;
  c.seed = 5;
  return generate_synthetic(c);
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

std::map<std::string, Matrix> random_features(const RelationalDatabase& db, std::size_t dim) {
  std::mt19937_64 rng(3);
  std::map<std::string, Matrix> out;
  for (const auto& [name, table] : db.tables()) out[name] = random_matrix(table.rows.size(), dim, rng);
  return out;
}

// Graph, history index and an untrained model over `companies` synthetic companies.
struct GraphFixture {
  explicit GraphFixture(std::size_t companies)
      : db(small_db(companies)),
        graph(build_graph(db, random_features(db, 32))),
        index(graph, graph.features(kTransactionTable)),
        message(prepare_graph(graph, &index, 16, HistorySampling::similarity, 1)) {
    std::map<std::string, std::size_t> dims;
    for (const auto& [type, nodes] : message.node_sets()) dims[type] = nodes->features.cols();
    model = GnnModel({.num_layers = 2, .hidden_dim = 64}, dims, gnn_relations(message, true), 9);
  }
  RelationalDatabase db;
  HeteroGraph graph;
  HistoryIndex index;
  HeteroGraph message;
  GnnModel model;
};

void BM_TrainWordPiece(benchmark::State& state) {
  const auto corpus = tokenizer_corpus(small_db(20));
  for (auto _ : state) benchmark::DoNotOptimize(train_wordpiece(corpus, {.vocab_size = 2000}));
}
BENCHMARK(BM_TrainWordPiece)->Unit(benchmark::kMillisecond);

void BM_Tokenize(benchmark::State& state) {
  const auto corpus = tokenizer_corpus(small_db(20));
  const Vocab vocab = train_wordpiece(corpus, {.vocab_size = 2000});
  for (auto _ : state)
    for (const auto& line : corpus) benchmark::DoNotOptimize(tokenize(vocab, line));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * corpus.size()));
}
BENCHMARK(BM_Tokenize);

void BM_EncoderForward(benchmark::State& state) {
  EncoderConfig config;
  config.vocab_size = 2000;
  EncoderModel encoder(config, 1);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> id(5, 1999);
  std::vector<std::vector<int>> batch(static_cast<std::size_t>(state.range(0)), std::vector<int>(24));
  for (auto& seq : batch)
    for (int& t : seq) t = id(rng);
  for (auto _ : state) {
    ag::Tape tape(false);
    benchmark::DoNotOptimize(encoder.forward(tape, batch).value());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncoderForward)->Arg(32)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_BuildGraph(benchmark::State& state) {
  const RelationalDatabase db = small_db(static_cast<std::size_t>(state.range(0)));
  const auto features = random_features(db, 32);
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(db, features).total_edges());
}
BENCHMARK(BM_BuildGraph)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_TopKSimilar(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const Matrix history = random_matrix(static_cast<std::size_t>(state.range(0)), 32, rng);
  const Matrix target = random_matrix(1, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(top_k_similar_history(target.row(0), history, 16));
}
BENCHMARK(BM_TopKSimilar)->Arg(100)->Arg(10000);

void BM_GnnFullForward(benchmark::State& state) {
  GraphFixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(f.model.embed(f.message));
}
BENCHMARK(BM_GnnFullForward)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_EgoSubgraph(benchmark::State& state) {
  GraphFixture f(50);
  const InEdgeIndex in_edges(f.message);
  const FanoutConfig fanout;
  const int n = static_cast<int>(f.message.num_nodes(kTransactionTable));
  int t = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_ego_subgraph(f.message, in_edges, t, fanout, 1));
    t = (t + 1) % n;
  }
}
BENCHMARK(BM_EgoSubgraph)->Unit(benchmark::kMicrosecond);

void BM_CascadePredict(benchmark::State& state) {
  GraphFixture f(50);
  CascadeConfig config;
  config.use_nn = state.range(0) != 0;
  const CascadePredictor predictor(f.graph, f.index, &f.model, config);
  const int n = static_cast<int>(f.graph.num_nodes(kTransactionTable));
  int t = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(predictor.predict(t));
    t = (t + 1) % n;
  }
}
BENCHMARK(BM_CascadePredict)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
