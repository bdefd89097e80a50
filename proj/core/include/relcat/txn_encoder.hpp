#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relcat/autograd.hpp"
#include "relcat/prediction.hpp"
#include "relcat/relational_store.hpp"
#include "relcat/tensor.hpp"
#include "relcat/tokenizer.hpp"

namespace relcat {

// "Transaction <received|paid> $<abs amount, 2dp> for: <description> <memo>"
std::string format_transaction(const TransactionRecord& txn);

struct EncoderConfig {
  std::size_t layers = 6;
  std::size_t hidden_dim = 32;
  std::size_t attention_heads = 4;
  std::size_t feedforward_dim = 64;
  std::size_t max_sequence_length = 32;
  std::size_t vocab_size = 0;
  bool learnable_temperature = false;

  std::size_t embedding_dim() const { return hidden_dim; }
  // Throws ConfigError.
  void validate() const;
};

class EncoderModel {
 public:
  EncoderModel() = default;
  EncoderModel(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  std::vector<ag::Parameter*> parameters();
  std::vector<const ag::Parameter*> parameters() const;

  // Pooled embeddings for already tokenized, already truncated sequences.
  ag::Var forward(ag::Tape& tape, std::span<const std::vector<int>> sequences);

  // Multiplier applied to cosine similarities in the contrastive loss.
  ag::Var logit_scale(ag::Tape& tape);

 private:
  struct Layer {
    ag::Parameter ln1_gamma, ln1_beta, qkv_w, qkv_b, out_w, out_b;
    ag::Parameter ln2_gamma, ln2_beta, ff1_w, ff1_b, ff2_w, ff2_b;
  };
  EncoderConfig config_;
  ag::Parameter token_embedding_;
  ag::Parameter position_embedding_;
  std::vector<Layer> layers_;
  ag::Parameter final_gamma_, final_beta_;
  ag::Parameter log_scale_;
};

// Tokenizes and cuts to max_sequence_length, keeping the final [SEP].
std::vector<int> encode_ids(const Vocab& vocab, std::string_view text, std::size_t max_sequence_length,
                            bool* truncated = nullptr);

// One unnormalized embedding per text, computed in chunks of `batch_size`.
Matrix encode(EncoderModel& model, const Vocab& vocab, std::span<const std::string> texts,
              std::size_t batch_size = 256);

// Symmetric cross-entropy over S_ij = Sim(txn_i, cat_j), averaged over rows.
// Throws std::domain_error on a zero-norm row.
double clip_loss(const Matrix& txn_embs, const Matrix& cat_embs, double scale = 1.0);
ag::Var clip_loss(ag::Var txn_embs, ag::Var cat_embs);
ag::Var clip_loss(ag::Var txn_embs, ag::Var cat_embs, ag::Var scale);

struct EncoderTrainOptions {
  std::size_t steps = 1000;
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double warmup_fraction = 0.1;
  double weight_decay = 0.0;
  std::uint64_t seed = 7;
};

struct EncoderStepMetrics {
  std::size_t step;
  double loss;
  double learning_rate;
  std::size_t batch_size;
};

struct TextPair {
  std::string sentence;
  std::string category_name;
};

// Batches never repeat a category name, so every in-batch negative is a
// different label. Throws std::invalid_argument with fewer than two distinct
// names and TrainingError on a non-finite loss.
EncoderModel train_encoder(std::span<const TextPair> pairs, const Vocab& vocab, const EncoderConfig& config,
                           const EncoderTrainOptions& options,
                           const std::function<void(const EncoderStepMetrics&)>& on_step = {});

// Fraction of rows i whose most similar category row (cosine) is i.
double diagonal_argmax_accuracy(const Matrix& txn_embs, const Matrix& cat_embs);

// Ranks candidates by cosine to `txn_embedding`; ties by ascending pk.
std::vector<Prediction> zero_shot_rank(std::span<const double> txn_embedding, const Matrix& category_embs,
                                       std::span<const std::string> category_pks, std::size_t k);
std::vector<Prediction> zero_shot_rank(EncoderModel& model, const Vocab& vocab, const TransactionRecord& txn,
                                       std::span<const std::pair<std::string, std::string>> categories,
                                       std::size_t k);

}  // namespace relcat
