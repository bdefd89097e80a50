#include "relcat/cascade.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace relcat {

std::vector<Prediction> topk_nn_predict(std::span<const HistoryMatch> history, double threshold, std::size_t k) {
  std::vector<Prediction> out;
  for (const HistoryMatch& m : history) {
    if (out.size() == k) break;
    if (!(m.similarity > threshold)) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const Prediction& p) { return p.category_pk == m.category_pk; });
    if (it != out.end()) {
      it->score = std::max(it->score, m.similarity);
      continue;
    }
    out.push_back({m.category_pk, m.similarity, static_cast<int>(out.size()) + 1, PredictionSource::nn});
  }
  return out;
}

CascadePredictor::CascadePredictor(const HeteroGraph& graph, const HistoryIndex& history, GnnModel* gnn,
                                   CascadeConfig config)
    : graph_(graph), history_(history), gnn_(gnn), config_(std::move(config)) {
  config_.fanout.validate();
  if (config_.k < 1) throw std::invalid_argument("CascadePredictor: k must be >= 1");
  if (config_.use_gnn && gnn_ == nullptr) throw std::invalid_argument("CascadePredictor: GNN stage without a model");

  const bool with_history = gnn_ != nullptr && gnn_->has_relation(kTxnToTxn);
  message_graph_ = prepare_graph(graph_, with_history ? &history_ : nullptr, config_.fanout.history_k,
                                 config_.history_sampling, config_.seed);
  in_edges_ = InEdgeIndex(message_graph_);
  labeled_ = message_graph_.labeled_transactions();
  category_of_.assign(message_graph_.num_nodes(kTransactionTable), -1);
  for (const auto& [t, c] : message_graph_.labeled_pairs()) category_of_[static_cast<std::size_t>(t)] = c;
  category_pks_ = message_graph_.nodes(kCategoryTable).ids;
  category_company_.assign(category_pks_.size(), -1);
  if (const EdgeList* e = message_graph_.edges({kCategoryTable, kCompanyTable}))
    for (std::size_t i = 0; i < e->size(); ++i) category_company_[static_cast<std::size_t>(e->src[i])] = e->dst[i];
  if (config_.use_gnn) category_embs_ = gnn_->embed(message_graph_).at(kCategoryTable);
}

std::vector<HistoryMatch> CascadePredictor::history_matches(int txn) const {
  std::vector<HistoryMatch> out;
  for (const SimilarItem& item : history_.history(message_graph_, labeled_, txn, config_.nn_history_k,
                                                  HistorySampling::similarity, config_.seed))
    out.push_back({category_pks_[static_cast<std::size_t>(category_of_[static_cast<std::size_t>(item.index)])],
                   item.similarity});
  return out;
}

std::vector<double> CascadePredictor::target_embedding(int txn) const {
  if (gnn_ == nullptr) throw std::logic_error("CascadePredictor: no GNN model");
  EgoSubgraph ego = build_ego_subgraph(message_graph_, in_edges_, txn, config_.fanout, config_.seed);
  const Matrix h = gnn_->embed(ego.graph).at(kTransactionTable);
  auto row = h.row(static_cast<std::size_t>(ego.target));
  return {row.begin(), row.end()};
}

CascadeResponse CascadePredictor::predict(int txn) const {
  CascadeResponse response;
  response.transaction_pk = message_graph_.nodes(kTransactionTable).ids.at(static_cast<std::size_t>(txn));
  if (config_.use_nn) {
    const std::vector<HistoryMatch> matches = history_matches(txn);
    response.predictions = topk_nn_predict(matches, config_.nn_threshold, config_.k);
  }
  response.nn_count = response.predictions.size();
  if (response.nn_count >= config_.k || !config_.use_gnn) return response;

  response.gnn_invoked = true;
  const std::vector<double> target = target_embedding(txn);
  std::vector<std::string> exclude;
  for (const Prediction& p : response.predictions) exclude.push_back(p.category_pk);

  std::vector<double> scores;
  std::vector<std::string> pks;
  const int company = message_graph_.company_of().empty() ? -1 : message_graph_.company_of()[static_cast<std::size_t>(txn)];
  for (std::size_t c = 0; c < category_pks_.size(); ++c) {
    if (config_.company_candidates_only && category_company_[c] != company) continue;
    scores.push_back(score(target, category_embs_.row(c)));
    pks.push_back(category_pks_[c]);
  }
  auto gnn = rank_candidates(scores, pks, config_.k - response.nn_count, PredictionSource::gnn, exclude,
                             static_cast<int>(response.nn_count) + 1);
  response.predictions.insert(response.predictions.end(), gnn.begin(), gnn.end());
  return response;
}

CascadeStats cascade_stats(std::span<const CascadeResponse> responses) {
  if (responses.empty()) throw std::invalid_argument("cascade_stats: no responses");
  CascadeStats stats;
  stats.responses = responses.size();
  for (const CascadeResponse& r : responses)
    for (std::size_t k = 1; k <= CascadeStats::kMaxK; ++k)
      if (r.nn_count >= k) stats.resolved[k - 1] += 1.0;
  for (double& v : stats.resolved) v /= static_cast<double>(responses.size());
  return stats;
}

std::string to_json_line(const CascadeResponse& response) {
  nlohmann::json preds = nlohmann::json::array();
  for (const Prediction& p : response.predictions)
    preds.push_back({{"rank", p.rank}, {"category_pk", p.category_pk}, {"score", p.score},
                     {"source", std::string(to_string(p.source))}});
  nlohmann::json j = {{"transaction_pk", response.transaction_pk},
                      {"predictions", std::move(preds)},
                      {"nn_count", response.nn_count},
                      {"gnn_invoked", response.gnn_invoked}};
  return j.dump();
}

CascadeResponse parse_response(std::string_view line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  CascadeResponse r;
  r.transaction_pk = j.at("transaction_pk").get<std::string>();
  for (const auto& p : j.at("predictions"))
    r.predictions.push_back({p.at("category_pk").get<std::string>(), p.at("score").get<double>(),
                             p.at("rank").get<int>(), parse_source(p.at("source").get<std::string>())});
  r.nn_count = j.value("nn_count", std::size_t{0});
  r.gnn_invoked = j.value("gnn_invoked", false);
  return r;
}

}  // namespace relcat
