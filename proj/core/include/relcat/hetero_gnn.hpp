#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "relcat/autograd.hpp"
#include "relcat/hetero_graph.hpp"
#include "relcat/neighbor_sampler.hpp"
#include "relcat/prediction.hpp"
#include "relcat/tensor.hpp"

namespace relcat {

struct GnnConfig {
  std::size_t num_layers = 2;
  std::size_t hidden_dim = 64;
  double gat_negative_slope = 0.2;

  void validate() const;
};

// Per-node attention weights recorded during a forward pass.
struct AttentionDiagnostics {
  struct Hetero {
    std::vector<Relation> relations;      // column order
    std::vector<std::vector<double>> weights;  // node -> weight per relation
  };
  struct Gat {
    std::vector<int> dst;
    std::vector<double> weights;          // one per edge
  };
  // layer -> node type -> weights
  std::vector<std::map<std::string, Hetero>> hetero;
  // layer -> weights on the transaction-transaction relation
  std::vector<Gat> gat;
};

using NodeVars = std::map<std::string, ag::Var>;

class GnnModel {
 public:
  GnnModel() = default;
  // `input_dims` gives the feature width per node type; every relation in
  // `relations` gets its own message transform.
  GnnModel(const GnnConfig& config, const std::map<std::string, std::size_t>& input_dims,
           std::span<const Relation> relations, std::uint64_t seed);

  const GnnConfig& config() const { return config_; }
  const std::vector<Relation>& relations() const { return relations_; }
  const std::map<std::string, std::size_t>& input_dims() const { return input_dims_; }
  bool has_relation(const Relation& r) const;

  std::vector<ag::Parameter*> parameters();
  std::vector<const ag::Parameter*> parameters() const;

  // One round of message passing. Throws std::invalid_argument when the graph
  // carries a relation the model has no parameters for.
  NodeVars message_pass(ag::Tape& tape, std::size_t layer, const HeteroGraph& graph, const NodeVars& h,
                        AttentionDiagnostics* diagnostics = nullptr);

  // All layers starting from the graph's node features.
  NodeVars forward(ag::Tape& tape, const HeteroGraph& graph, AttentionDiagnostics* diagnostics = nullptr);

  // Final-layer embeddings without recording gradients.
  std::map<std::string, Matrix> embed(const HeteroGraph& graph);

 private:
  struct RelationParams {
    ag::Parameter weight, bias;
    // transaction-transaction only
    ag::Parameter gat_dst, gat_att;
  };
  struct TypeParams {
    ag::Parameter query, key;
    ag::Parameter update_weight, update_bias;
  };
  struct Layer {
    std::map<Relation, RelationParams> relations;
    std::map<std::string, TypeParams> types;
  };

  GnnConfig config_;
  std::map<std::string, std::size_t> input_dims_;
  std::vector<Relation> relations_;
  std::vector<Layer> layers_;
};

double score(std::span<const double> h_txn, std::span<const double> h_cat);

struct AucLoss {
  double sum;
  double mean;
};

// Sum over negatives n of (1 - pos[pairing[n]] + neg[n])^2. Throws
// std::invalid_argument when the pairing is empty.
AucLoss auc_loss(std::span<const double> pos_scores, std::span<const double> neg_scores,
                 std::span<const int> pairing);
ag::Var auc_loss(ag::Var pos_scores, ag::Var neg_scores, std::span<const int> pairing);

class CategoryFrequencyTable {
 public:
  CategoryFrequencyTable() = default;
  // weight_c proportional to counts[c] + smoothing.
  CategoryFrequencyTable(std::vector<double> counts, double smoothing);
  // Counts categories over the (transaction, category) pairs of `graph`.
  static CategoryFrequencyTable from_graph(const HeteroGraph& graph, double smoothing = 1.0);

  std::size_t size() const { return weights_.size(); }
  std::span<const double> counts() const { return counts_; }
  std::span<const double> weights() const { return weights_; }

 private:
  friend std::vector<int> sample_negatives(const CategoryFrequencyTable&, int, std::size_t, std::mt19937_64&);
  std::vector<double> counts_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
};

// n_neg draws with replacement from the weights restricted to categories other
// than positive_cat. Throws std::invalid_argument when no other category has
// nonzero weight.
std::vector<int> sample_negatives(const CategoryFrequencyTable& freq, int positive_cat, std::size_t n_neg,
                                  std::mt19937_64& rng);

enum class Redundancy { mean, max };

// Redundancy of sample i = mean (or max) dot product with every other sample.
// Keeps the ceil(keep_fraction * N) least redundant, ties by position; returned
// in ascending position order.
std::vector<int> diversity_filter(const Matrix& embeddings, double keep_fraction,
                                  Redundancy statistic = Redundancy::mean);
std::vector<double> redundancy_scores(const Matrix& embeddings, Redundancy statistic = Redundancy::mean);

// 1.0 at epoch 0, falling linearly to 0.4 at 60% of training, then flat.
double diversity_schedule(std::size_t epoch, std::size_t total_epochs);

enum class DiversityMode { off, schedule, strict, lenient };

struct GnnTrainOptions {
  std::size_t epochs = 60;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double positive_fraction = 0.05;
  std::size_t negatives_per_positive = 8;
  double frequency_smoothing = 1.0;
  DiversityMode diversity = DiversityMode::schedule;
  Redundancy redundancy = Redundancy::mean;
  // Transaction-transaction relation; no history index disables it.
  const HistoryIndex* history = nullptr;
  std::size_t history_k = 16;
  HistorySampling history_sampling = HistorySampling::similarity;
  std::uint64_t seed = 11;
};

struct GnnEpochMetrics {
  std::size_t epoch;
  std::size_t step;
  double loss;       // summed over all pairs
  double mean_loss;  // per pair
  double accuracy;   // positives scored above all their negatives
  double kept_fraction;
  std::size_t num_pos;
  std::size_t num_neg;
};

// Relations the model needs for `graph`, including the transaction-transaction
// relation when `with_history` is set.
std::vector<Relation> gnn_relations(const HeteroGraph& graph, bool with_history);

// The graph used for message passing: incoming category edges dropped and,
// when a history index is given, the transaction-transaction relation added.
HeteroGraph prepare_graph(const HeteroGraph& graph, const HistoryIndex* history, std::size_t history_k,
                          HistorySampling mode, std::uint64_t seed);

// `graph` holds the training labels as category edges. Throws
// std::invalid_argument without any labeled transaction and TrainingError on a
// non-finite loss.
GnnModel train_gnn(const HeteroGraph& graph, const GnnConfig& config, const GnnTrainOptions& options,
                   const std::function<void(const GnnEpochMetrics&)>& on_epoch = {});

// Top-k categories by inner product; ties by ascending pk.
std::vector<Prediction> gnn_rank(std::span<const double> target_embedding, const Matrix& category_embs,
                                 std::span<const std::string> category_pks, std::size_t k,
                                 std::span<const std::string> exclude = {});

}  // namespace relcat
