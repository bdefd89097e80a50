#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relcat/hetero_gnn.hpp"
#include "relcat/hetero_graph.hpp"
#include "relcat/neighbor_sampler.hpp"
#include "relcat/prediction.hpp"

namespace relcat {

struct HistoryMatch {
  std::string category_pk;
  double similarity;
};

// Walks `history` (most similar first), keeping matches with similarity above
// `threshold` and collecting distinct categories until k are found. A
// category's score is its best supporting similarity.
std::vector<Prediction> topk_nn_predict(std::span<const HistoryMatch> history, double threshold, std::size_t k);

struct CascadeConfig {
  std::size_t k = 5;
  double nn_threshold = 0.8;
  // How many similar history transactions the nearest-neighbour stage reads.
  std::size_t nn_history_k = 16;
  // Run the nearest-neighbour stage at all.
  bool use_nn = true;
  // Run the GNN stage at all.
  bool use_gnn = true;
  // Rank only the target company's own categories instead of all of them.
  bool company_candidates_only = false;
  FanoutConfig fanout;
  HistorySampling history_sampling = HistorySampling::similarity;
  std::uint64_t seed = 13;
};

struct CascadeResponse {
  std::string transaction_pk;
  std::vector<Prediction> predictions;
  std::size_t nn_count = 0;
  bool gnn_invoked = false;
};

// Serves predictions for transactions of one graph. The graph holds every
// training label as a category edge; targets are its uncategorized
// transactions.
class CascadePredictor {
 public:
  // `gnn` may be null when config.use_gnn is false. `history` ranks company
  // peers by text-embedding similarity and must be built on `graph`.
  CascadePredictor(const HeteroGraph& graph, const HistoryIndex& history, GnnModel* gnn, CascadeConfig config);

  CascadeResponse predict(int txn) const;

  // History matches the nearest-neighbour stage sees for `txn`.
  std::vector<HistoryMatch> history_matches(int txn) const;

  const HeteroGraph& message_graph() const { return message_graph_; }
  const Matrix& category_embeddings() const { return category_embs_; }
  // Final-layer embedding of one transaction computed on its ego subgraph.
  std::vector<double> target_embedding(int txn) const;

 private:
  const HeteroGraph& graph_;
  const HistoryIndex& history_;
  GnnModel* gnn_;
  CascadeConfig config_;
  HeteroGraph message_graph_;
  InEdgeIndex in_edges_;
  std::vector<std::uint8_t> labeled_;
  std::vector<int> category_of_;
  std::vector<std::string> category_pks_;
  std::vector<int> category_company_;
  Matrix category_embs_;
};

struct CascadeStats {
  static constexpr std::size_t kMaxK = 5;
  // resolved[k-1]: share of responses whose nearest-neighbour stage alone
  // supplied at least k categories.
  std::array<double, kMaxK> resolved{};
  std::size_t responses = 0;
};

// Throws std::invalid_argument on an empty input.
CascadeStats cascade_stats(std::span<const CascadeResponse> responses);

// {"transaction_pk": ..., "predictions": [{"rank", "category_pk", "score", "source"}], ...}
std::string to_json_line(const CascadeResponse& response);
CascadeResponse parse_response(std::string_view line);

}  // namespace relcat
