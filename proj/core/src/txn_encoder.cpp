#include "relcat/txn_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "relcat/errors.hpp"

namespace relcat {

std::string format_transaction(const TransactionRecord& txn) {
  const double amount = txn.amount_value();
  std::string out = fmt::format("Transaction {} ${:.2f} for: {}", amount < 0.0 ? "paid" : "received",
                                std::fabs(amount), txn.description);
  if (!txn.memo.empty()) {
    out += ' ';
    out += txn.memo;
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

void EncoderConfig::validate() const {
  if (layers == 0) throw ConfigError("encoder.layers must be >= 1");
  if (hidden_dim == 0 || attention_heads == 0 || hidden_dim % attention_heads != 0)
    throw ConfigError(fmt::format("encoder.hidden_dim {} is not divisible by encoder.heads {}", hidden_dim,
                                  attention_heads));
  if (feedforward_dim == 0) throw ConfigError("encoder.ff_dim must be >= 1");
  if (max_sequence_length < 8) throw ConfigError("encoder.max_seq_len must be >= 8");
  if (vocab_size <= Vocab::kNumSpecials) throw ConfigError("encoder vocabulary is empty");
}

namespace {

Matrix normal(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  ag::round_to_float32(m);
  return m;
}

}  // namespace

EncoderModel::EncoderModel(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t h = config_.hidden_dim, f = config_.feedforward_dim;
  constexpr double kInit = 0.02;
  token_embedding_ = ag::Parameter("encoder.token_embedding", normal(config_.vocab_size, h, kInit, rng));
  position_embedding_ =
      ag::Parameter("encoder.position_embedding", normal(config_.max_sequence_length, h, kInit, rng));
  layers_.resize(config_.layers);
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::string p = fmt::format("encoder.layers.{}.", i);
    Layer& l = layers_[i];
    l.ln1_gamma = ag::Parameter(p + "ln1.gamma", Matrix(1, h, 1.0));
    l.ln1_beta = ag::Parameter(p + "ln1.beta", Matrix(1, h));
    l.qkv_w = ag::Parameter(p + "attn.qkv.weight", normal(h, 3 * h, kInit, rng));
    l.qkv_b = ag::Parameter(p + "attn.qkv.bias", Matrix(1, 3 * h));
    l.out_w = ag::Parameter(p + "attn.out.weight", normal(h, h, kInit, rng));
    l.out_b = ag::Parameter(p + "attn.out.bias", Matrix(1, h));
    l.ln2_gamma = ag::Parameter(p + "ln2.gamma", Matrix(1, h, 1.0));
    l.ln2_beta = ag::Parameter(p + "ln2.beta", Matrix(1, h));
    l.ff1_w = ag::Parameter(p + "ff1.weight", normal(h, f, kInit, rng));
    l.ff1_b = ag::Parameter(p + "ff1.bias", Matrix(1, f));
    l.ff2_w = ag::Parameter(p + "ff2.weight", normal(f, h, kInit, rng));
    l.ff2_b = ag::Parameter(p + "ff2.bias", Matrix(1, h));
  }
  final_gamma_ = ag::Parameter("encoder.final_ln.gamma", Matrix(1, h, 1.0));
  final_beta_ = ag::Parameter("encoder.final_ln.beta", Matrix(1, h));
  if (config_.learnable_temperature) {
    Matrix s(1, 1, std::log(1.0 / 0.07));
    ag::round_to_float32(s);
    log_scale_ = ag::Parameter("encoder.log_logit_scale", std::move(s));
  }
}

std::vector<ag::Parameter*> EncoderModel::parameters() {
  std::vector<ag::Parameter*> out{&token_embedding_, &position_embedding_};
  for (Layer& l : layers_)
    for (ag::Parameter* p : {&l.ln1_gamma, &l.ln1_beta, &l.qkv_w, &l.qkv_b, &l.out_w, &l.out_b, &l.ln2_gamma,
                             &l.ln2_beta, &l.ff1_w, &l.ff1_b, &l.ff2_w, &l.ff2_b})
      out.push_back(p);
  out.push_back(&final_gamma_);
  out.push_back(&final_beta_);
  if (config_.learnable_temperature) out.push_back(&log_scale_);
  return out;
}

std::vector<const ag::Parameter*> EncoderModel::parameters() const {
  auto mutable_params = const_cast<EncoderModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

ag::Var EncoderModel::logit_scale(ag::Tape& tape) {
  if (!config_.learnable_temperature) return tape.constant(Matrix(1, 1, 1.0));
  return ag::exp(tape.param(log_scale_));
}

ag::Var EncoderModel::forward(ag::Tape& tape, std::span<const std::vector<int>> sequences) {
  if (sequences.empty()) throw std::invalid_argument("encoder forward: empty batch");
  std::size_t seq_len = 0;
  for (const auto& s : sequences) {
    if (s.empty() || s.size() > config_.max_sequence_length)
      throw std::invalid_argument("encoder forward: sequence length out of range");
    seq_len = std::max(seq_len, s.size());
  }
  const std::size_t batch = sequences.size();
  std::vector<int> ids(batch * seq_len, Vocab::kPad), positions(batch * seq_len), lengths(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    lengths[b] = static_cast<int>(sequences[b].size());
    for (std::size_t i = 0; i < seq_len; ++i) {
      positions[b * seq_len + i] = static_cast<int>(i);
      if (i < sequences[b].size()) {
        const int id = sequences[b][i];
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size)
          throw std::out_of_range("encoder forward: token id out of range");
        ids[b * seq_len + i] = id;
      }
    }
  }

  ag::Var x = ag::add(ag::gather_rows(tape.param(token_embedding_), ids),
                      ag::gather_rows(tape.param(position_embedding_), positions));
  for (Layer& l : layers_) {
    ag::Var h = ag::layer_norm(x, tape.param(l.ln1_gamma), tape.param(l.ln1_beta));
    ag::Var qkv = ag::add_bias(ag::matmul(h, tape.param(l.qkv_w)), tape.param(l.qkv_b));
    ag::Var att = ag::multi_head_attention(qkv, batch, seq_len, config_.attention_heads, lengths);
    x = ag::add(x, ag::add_bias(ag::matmul(att, tape.param(l.out_w)), tape.param(l.out_b)));
    ag::Var h2 = ag::layer_norm(x, tape.param(l.ln2_gamma), tape.param(l.ln2_beta));
    ag::Var ff = ag::gelu(ag::add_bias(ag::matmul(h2, tape.param(l.ff1_w)), tape.param(l.ff1_b)));
    x = ag::add(x, ag::add_bias(ag::matmul(ff, tape.param(l.ff2_w)), tape.param(l.ff2_b)));
  }
  x = ag::layer_norm(x, tape.param(final_gamma_), tape.param(final_beta_));
  return ag::masked_mean_pool(x, batch, seq_len, lengths);
}

std::vector<int> encode_ids(const Vocab& vocab, std::string_view text, std::size_t max_sequence_length,
                            bool* truncated) {
  std::vector<int> ids = tokenize(vocab, text);
  const bool cut = ids.size() > max_sequence_length;
  if (cut) {
    ids.resize(max_sequence_length);
    ids.back() = Vocab::kSep;
  }
  if (truncated) *truncated = cut;
  return ids;
}

Matrix encode(EncoderModel& model, const Vocab& vocab, std::span<const std::string> texts,
              std::size_t batch_size) {
  if (texts.empty()) throw std::invalid_argument("encode: no texts");
  const std::size_t max_len = model.config().max_sequence_length;
  std::vector<std::vector<int>> seqs(texts.size());
  std::size_t truncated = 0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    bool cut = false;
    seqs[i] = encode_ids(vocab, texts[i], max_len, &cut);
    if (cut) {
      ++truncated;
      spdlog::debug("encode: truncated '{}' to {} tokens", texts[i], max_len);
    }
  }
  if (truncated > 0) spdlog::debug("encode: {} of {} texts truncated", truncated, texts.size());

  // Rows are independent, so grouping by length only saves padding work.
  std::vector<std::size_t> order(texts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return seqs[a].size() < seqs[b].size(); });

  Matrix out(texts.size(), model.config().embedding_dim());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<std::vector<int>> chunk;
    chunk.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) chunk.push_back(std::move(seqs[order[i]]));
    ag::Tape tape(false);
    const Matrix& pooled = model.forward(tape, chunk).value();
    for (std::size_t i = start; i < end; ++i) {
      auto src = pooled.row(i - start);
      std::copy(src.begin(), src.end(), out.row(order[i]).begin());
    }
  }
  return out;
}

ag::Var clip_loss(ag::Var txn_embs, ag::Var cat_embs, ag::Var scale) {
  if (txn_embs.rows() != cat_embs.rows() || txn_embs.rows() == 0)
    throw std::invalid_argument("clip_loss: need equal, nonzero row counts");
  ag::Var sims = ag::matmul(ag::l2_normalize_rows(txn_embs), ag::transpose(ag::l2_normalize_rows(cat_embs)));
  return ag::symmetric_diagonal_cross_entropy(ag::scale_by(sims, scale));
}

ag::Var clip_loss(ag::Var txn_embs, ag::Var cat_embs) {
  if (txn_embs.rows() != cat_embs.rows() || txn_embs.rows() == 0)
    throw std::invalid_argument("clip_loss: need equal, nonzero row counts");
  ag::Var sims = ag::matmul(ag::l2_normalize_rows(txn_embs), ag::transpose(ag::l2_normalize_rows(cat_embs)));
  return ag::symmetric_diagonal_cross_entropy(sims);
}

double clip_loss(const Matrix& txn_embs, const Matrix& cat_embs, double scale) {
  ag::Tape tape(false);
  ag::Var loss = clip_loss(tape.constant(txn_embs), tape.constant(cat_embs), tape.constant(Matrix(1, 1, scale)));
  return loss.value()(0, 0);
}

namespace {

// Hands out batches with distinct category names from a stream of shuffled
// epochs. Pairs skipped for a name clash wait at the front for the next batch.
// Each batch draws distinct names without replacement, weighted by how many
// pairs carry them, then one random pair per drawn name.
class DistinctNameBatcher {
 public:
  DistinctNameBatcher(std::span<const int> name_of_pair, std::size_t num_names, std::size_t batch_size,
                      std::uint64_t seed)
      : by_name_(num_names), batch_size_(std::min(batch_size, num_names)), rng_(seed) {
    for (std::size_t i = 0; i < name_of_pair.size(); ++i)
      by_name_[static_cast<std::size_t>(name_of_pair[i])].push_back(i);
  }

  std::vector<std::size_t> next() {
    // Efraimidis-Spirakis keys: log(u) / w, largest first.
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<double, std::size_t>> keys(by_name_.size());
    for (std::size_t n = 0; n < by_name_.size(); ++n) {
      double u = unif(rng_);
      while (u == 0.0) u = unif(rng_);
      keys[n] = {std::log(u) / static_cast<double>(by_name_[n].size()), n};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(batch_size_), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<std::size_t> batch;
    batch.reserve(batch_size_);
    for (std::size_t i = 0; i < batch_size_; ++i) {
      const auto& members = by_name_[keys[i].second];
      batch.push_back(members[std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng_)]);
    }
    return batch;
  }

 private:
  std::vector<std::vector<std::size_t>> by_name_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
};

}  // namespace

EncoderModel train_encoder(std::span<const TextPair> pairs, const Vocab& vocab, const EncoderConfig& config,
                           const EncoderTrainOptions& options,
                           const std::function<void(const EncoderStepMetrics&)>& on_step) {
  std::unordered_map<std::string, int> name_ids;
  std::vector<std::string> names;
  std::vector<int> name_of_pair(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto [it, inserted] = name_ids.emplace(pairs[i].category_name, static_cast<int>(names.size()));
    if (inserted) names.push_back(pairs[i].category_name);
    name_of_pair[i] = it->second;
  }
  if (names.size() < 2) throw std::invalid_argument("train_encoder: need at least two distinct category names");
  if (options.batch_size < 2) throw std::invalid_argument("train_encoder: batch_size must be >= 2");

  EncoderModel model(config, options.seed);
  if (options.steps == 0) return model;

  const std::size_t max_len = config.max_sequence_length;
  std::vector<std::vector<int>> sentence_ids(pairs.size()), name_token_ids(names.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) sentence_ids[i] = encode_ids(vocab, pairs[i].sentence, max_len);
  for (std::size_t i = 0; i < names.size(); ++i) name_token_ids[i] = encode_ids(vocab, names[i], max_len);

  ag::Adam adam({.weight_decay = options.weight_decay});
  auto params = model.parameters();
  DistinctNameBatcher batcher(name_of_pair, names.size(), options.batch_size, options.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto warmup = static_cast<std::size_t>(std::ceil(options.warmup_fraction * static_cast<double>(options.steps)));

  for (std::size_t step = 0; step < options.steps; ++step) {
    double lr = options.learning_rate;
    if (step < warmup) {
      lr *= static_cast<double>(step + 1) / static_cast<double>(warmup);
    } else if (options.steps > warmup) {
      lr *= static_cast<double>(options.steps - step) / static_cast<double>(options.steps - warmup);
    }

    const std::vector<std::size_t> batch = batcher.next();
    std::vector<std::vector<int>> txn_seqs, cat_seqs;
    for (std::size_t idx : batch) {
      txn_seqs.push_back(sentence_ids[idx]);
      cat_seqs.push_back(name_token_ids[static_cast<std::size_t>(name_of_pair[idx])]);
    }
    ag::Tape tape;
    ag::Var t = model.forward(tape, txn_seqs);
    ag::Var c = model.forward(tape, cat_seqs);
    ag::Var loss = clip_loss(t, c, model.logit_scale(tape));
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value))
      throw TrainingError(fmt::format("encoder loss is {} at step {} (lr {:.3g}, batch of {}, first pair '{}')",
                                      value, step, lr, batch.size(), pairs[batch.front()].sentence));
    tape.backward(loss);
    adam.step(params, lr);
    if (on_step) on_step({step, value, lr, batch.size()});
  }
  return model;
}

double diagonal_argmax_accuracy(const Matrix& txn_embs, const Matrix& cat_embs) {
  if (txn_embs.rows() != cat_embs.rows() || txn_embs.rows() == 0)
    throw std::invalid_argument("diagonal_argmax_accuracy: row mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < txn_embs.rows(); ++i) {
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t j = 0; j < cat_embs.rows(); ++j) {
      const double s = cosine(txn_embs.row(i), cat_embs.row(j));
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    hits += best == i;
  }
  return static_cast<double>(hits) / static_cast<double>(txn_embs.rows());
}

std::vector<Prediction> zero_shot_rank(std::span<const double> txn_embedding, const Matrix& category_embs,
                                       std::span<const std::string> category_pks, std::size_t k) {
  if (category_embs.rows() != category_pks.size())
    throw std::invalid_argument("zero_shot_rank: embeddings/pks mismatch");
  std::vector<double> scores(category_pks.size());
  for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = cosine(txn_embedding, category_embs.row(j));
  return rank_candidates(scores, category_pks, k, PredictionSource::zero_shot);
}

std::vector<Prediction> zero_shot_rank(EncoderModel& model, const Vocab& vocab, const TransactionRecord& txn,
                                       std::span<const std::pair<std::string, std::string>> categories,
                                       std::size_t k) {
  if (categories.empty()) throw std::invalid_argument("zero_shot_rank: no categories");
  std::vector<std::string> texts{format_transaction(txn)};
  std::vector<std::string> pks;
  for (const auto& [pk, name] : categories) {
    texts.push_back(name);
    pks.push_back(pk);
  }
  Matrix all = encode(model, vocab, texts);
  Matrix cats(categories.size(), all.cols());
  for (std::size_t j = 0; j < categories.size(); ++j) {
    auto src = all.row(j + 1);
    std::copy(src.begin(), src.end(), cats.row(j).begin());
  }
  return zero_shot_rank(all.row(0), cats, pks, k);
}

}  // namespace relcat
