#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "relcat/cascade.hpp"
#include "relcat/config.hpp"
#include "relcat/evaluation.hpp"
#include "relcat/hetero_gnn.hpp"
#include "relcat/hetero_graph.hpp"
#include "relcat/neighbor_sampler.hpp"
#include "relcat/relational_store.hpp"
#include "relcat/tokenizer.hpp"
#include "relcat/txn_encoder.hpp"

namespace relcat {

// Formatted transaction sentences plus category, code and company names.
std::vector<std::string> tokenizer_corpus(const RelationalDatabase& db);
// (sentence, category name) for every labeled transaction.
std::vector<TextPair> encoder_pairs(const RelationalDatabase& db);
// Text embeddings per table: transactions from their sentence, other tables
// from their name.
std::map<std::string, Matrix> encode_database(EncoderModel& encoder, const Vocab& vocab,
                                              const RelationalDatabase& db, std::size_t batch_size = 256);

// Ranks the distinct category names of the whole database by cosine to a
// transaction, with no company context. A name maps back to the company's own
// category of that name, else to the lowest pk carrying it.
class ZeroShotRanker {
 public:
  ZeroShotRanker(EncoderModel& encoder, const Vocab& vocab, const RelationalDatabase& db,
                 std::size_t batch_size = 256);
  std::vector<Prediction> rank(std::span<const double> txn_embedding, const std::string& company_pk,
                               std::size_t k) const;
  std::size_t num_names() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  Matrix name_embs_;
  std::map<std::pair<std::string, std::string>, std::string> company_name_pk_;
  std::map<std::string, std::string> global_name_pk_;
};

struct TrainedModels {
  Vocab vocab;
  EncoderModel encoder;
  GnnModel gnn;
  bool two_hop = true;
};

// Untrained parts are default-constructed and skipped when saving.
inline bool has_encoder(const TrainedModels& m) { return m.encoder.config().vocab_size > 0; }
inline bool has_gnn(const TrainedModels& m) { return !m.gnn.relations().empty(); }

// Everything derived from one dataset and its split, up to trained encoder,
// text features, training graph and history index.
struct Workspace {
  ExperimentConfig config;
  RelationalDatabase db;
  Split split;
  CompanyHistory history;
  Vocab vocab;
  EncoderModel encoder;
  std::map<std::string, Matrix> features;
  HeteroGraph graph;
  HistoryIndex history_index;
};

Workspace prepare_workspace(const ExperimentConfig& config, RelationalDatabase db);

struct GnnVariant {
  bool two_hop = true;
  HistorySampling sampling = HistorySampling::similarity;
  DiversityMode diversity = DiversityMode::schedule;
};

GnnVariant default_variant(const ExperimentConfig& config);
GnnModel train_gnn_variant(const Workspace& ws, const GnnVariant& variant,
                           const std::function<void(const GnnEpochMetrics&)>& on_epoch = {});

// Runs the cascade over the test transactions of `ws` with stage switches
// from `cascade`. Responses are returned in test order.
std::vector<CascadeResponse> run_cascade(const Workspace& ws, GnnModel* gnn, const CascadeConfig& cascade);
std::map<std::string, std::vector<Prediction>> zero_shot_predictions(Workspace& ws, std::size_t k);
std::map<std::string, std::vector<Prediction>> to_prediction_map(std::span<const CascadeResponse> responses);

// The cascade config of `ws.config` with the sampler and history settings of
// `variant` applied.
CascadeConfig cascade_config(const ExperimentConfig& config, const GnnVariant& variant);

struct BenchmarkRun {
  std::string label;
  EvalReport report;
  double seconds = 0.0;
};

struct BenchmarkResult {
  std::vector<BenchmarkRun> runs;
  // The gnn-only model, also used by the cascade run.
  GnnModel gnn;
  const BenchmarkRun& run(const std::string& label) const;
};

// zero-shot, nn-only, gnn-only, cascade and, with `ablations`, gnn-only for
// the no-two-hop, uniform-history and no-diversity variants.
BenchmarkResult run_benchmark(Workspace& ws, bool ablations);

// model.json, vocab.txt, encoder.bin, gnn.bin; the weight files only for
// trained parts.
void save_models(const TrainedModels& models, const ExperimentConfig& config, const std::filesystem::path& dir);
TrainedModels load_models(const std::filesystem::path& dir, ExperimentConfig& config);

// Categorizes `input` against the history in `db`: the records are appended
// uncategorized, the graph is rebuilt and every input row goes through the
// cascade. With `zero_shot` only the text encoder is used.
std::vector<CascadeResponse> predict_transactions(TrainedModels& models, const ExperimentConfig& config,
                                                  RelationalDatabase db, std::span<const TransactionRecord> input,
                                                  bool zero_shot);

// Reads rows in the transactions.csv layout.
std::vector<TransactionRecord> load_transaction_records(const std::filesystem::path& path);

}  // namespace relcat
