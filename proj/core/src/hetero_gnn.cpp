#include "relcat/hetero_gnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "relcat/errors.hpp"
#include "relcat/rng.hpp"

namespace relcat {

void GnnConfig::validate() const {
  if (num_layers < 1) throw ConfigError("gnn.layers must be >= 1");
  if (hidden_dim < 1) throw ConfigError("gnn.hidden_dim must be >= 1");
  if (!(gat_negative_slope >= 0.0)) throw ConfigError("gnn.gat_slope must be >= 0");
}

namespace {

ag::Parameter glorot(std::string name, std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(rows + cols, 1)));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  ag::round_to_float32(m);
  return ag::Parameter(std::move(name), std::move(m));
}

ag::Parameter zeros(std::string name, std::size_t rows, std::size_t cols) {
  return ag::Parameter(std::move(name), Matrix(rows, cols));
}

// Guards the final normalization against an all-zero row.
constexpr double kMinNorm = 1e-12;

}  // namespace

GnnModel::GnnModel(const GnnConfig& config, const std::map<std::string, std::size_t>& input_dims,
                   std::span<const Relation> relations, std::uint64_t seed)
    : config_(config), input_dims_(input_dims), relations_(relations.begin(), relations.end()) {
  config_.validate();
  std::sort(relations_.begin(), relations_.end());
  relations_.erase(std::unique(relations_.begin(), relations_.end()), relations_.end());
  for (const Relation& r : relations_)
    if (!input_dims_.contains(r.src) || !input_dims_.contains(r.dst))
      throw std::invalid_argument("GnnModel: relation " + r.key() + " uses an unknown node type");

  std::mt19937_64 rng(seed);
  const std::size_t hd = config_.hidden_dim;
  layers_.resize(config_.num_layers);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    auto dim = [&](const std::string& type) { return l == 0 ? input_dims_.at(type) : hd; };
    const std::string p = fmt::format("gnn.layers.{}.", l);
    for (const Relation& r : relations_) {
      RelationParams rp;
      rp.weight = glorot(p + "message." + r.key() + ".weight", dim(r.src), hd, rng);
      rp.bias = zeros(p + "message." + r.key() + ".bias", 1, hd);
      if (r == kTxnToTxn) {
        rp.gat_dst = glorot(p + "gatv2." + r.key() + ".dst", dim(r.dst), hd, rng);
        rp.gat_att = glorot(p + "gatv2." + r.key() + ".att", hd, 1, rng);
      }
      layers_[l].relations.emplace(r, std::move(rp));
    }
    for (const auto& [type, d] : input_dims_) {
      TypeParams tp;
      tp.query = glorot(p + "attention." + type + ".query", dim(type), hd, rng);
      tp.key = glorot(p + "attention." + type + ".key", hd, hd, rng);
      tp.update_weight = glorot(p + "update." + type + ".weight", dim(type) + hd, hd, rng);
      tp.update_bias = zeros(p + "update." + type + ".bias", 1, hd);
      layers_[l].types.emplace(type, std::move(tp));
    }
  }
}

bool GnnModel::has_relation(const Relation& r) const {
  return std::binary_search(relations_.begin(), relations_.end(), r);
}

std::vector<ag::Parameter*> GnnModel::parameters() {
  std::vector<ag::Parameter*> out;
  for (Layer& layer : layers_) {
    for (auto& [r, rp] : layer.relations) {
      out.push_back(&rp.weight);
      out.push_back(&rp.bias);
      if (r == kTxnToTxn) {
        out.push_back(&rp.gat_dst);
        out.push_back(&rp.gat_att);
      }
    }
    for (auto& [type, tp] : layer.types)
      for (ag::Parameter* p : {&tp.query, &tp.key, &tp.update_weight, &tp.update_bias}) out.push_back(p);
  }
  return out;
}

std::vector<const ag::Parameter*> GnnModel::parameters() const {
  auto params = const_cast<GnnModel*>(this)->parameters();
  return {params.begin(), params.end()};
}

NodeVars GnnModel::message_pass(ag::Tape& tape, std::size_t layer_index, const HeteroGraph& graph,
                                const NodeVars& h, AttentionDiagnostics* diagnostics) {
  for (const auto& [r, e] : graph.relations())
    if (!has_relation(r)) throw std::invalid_argument("GnnModel: no parameters for relation " + r.key());
  Layer& layer = layers_.at(layer_index);
  const std::size_t hd = config_.hidden_dim;
  const bool last = layer_index + 1 == layers_.size();
  if (diagnostics) {
    diagnostics->hetero.resize(layers_.size());
    diagnostics->gat.resize(layers_.size());
  }

  NodeVars out;
  for (auto& [type, params] : layer.types) {
    auto hit = h.find(type);
    if (hit == h.end()) continue;
    const ag::Var self = hit->second;
    const std::size_t n = graph.num_nodes(type);
    if (self.rows() != n) throw DimensionError("GnnModel: state rows do not match node count for " + type);

    std::vector<Relation> incident;
    for (const Relation& r : relations_)
      if (r.dst == type && h.contains(r.src)) incident.push_back(r);

    std::vector<ag::Var> aggregates;
    std::vector<std::uint8_t> mask(n * incident.size(), 0);
    for (std::size_t ri = 0; ri < incident.size(); ++ri) {
      const Relation& r = incident[ri];
      RelationParams& rp = layer.relations.at(r);
      const EdgeList* edges = graph.edges(r);
      static const EdgeList kNoEdges;
      const EdgeList& el = edges ? *edges : kNoEdges;
      ag::Var msg = ag::add_bias(ag::matmul(h.at(r.src), tape.param(rp.weight)), tape.param(rp.bias));
      ag::Var agg;
      if (r == kTxnToTxn) {
        ag::Var dst_proj = ag::matmul(self, tape.param(rp.gat_dst));
        std::vector<double> alpha;
        agg = ag::edge_gatv2(msg, dst_proj, msg, tape.param(rp.gat_att), el.src, el.dst, n,
                             config_.gat_negative_slope, diagnostics ? &alpha : nullptr);
        if (diagnostics) diagnostics->gat[layer_index] = {el.dst, std::move(alpha)};
      } else {
        agg = ag::edge_mean(msg, el.src, el.dst, n);
      }
      for (int d : el.dst) mask[static_cast<std::size_t>(d) * incident.size() + ri] = 1;
      aggregates.push_back(agg);
    }

    ag::Var combined;
    if (incident.empty()) {
      combined = tape.constant(Matrix(n, hd));
    } else {
      ag::Var q = ag::matmul(self, tape.param(params.query));
      ag::Var key_w = tape.param(params.key);
      std::vector<ag::Var> scores;
      for (const ag::Var& agg : aggregates)
        scores.push_back(ag::scale(ag::rowwise_dot(q, ag::matmul(agg, key_w)),
                                   1.0 / std::sqrt(static_cast<double>(hd))));
      ag::Var alpha = ag::masked_softmax_rows(ag::concat_cols(scores), mask);
      for (std::size_t ri = 0; ri < aggregates.size(); ++ri) {
        ag::Var part = ag::mul_col(aggregates[ri], ag::slice_cols(alpha, ri, 1));
        combined = ri == 0 ? part : ag::add(combined, part);
      }
      if (diagnostics) {
        auto& entry = diagnostics->hetero[layer_index][type];
        entry.relations = incident;
        entry.weights.assign(n, {});
        for (std::size_t i = 0; i < n; ++i) {
          auto row = alpha.value().row(i);
          entry.weights[i].assign(row.begin(), row.end());
        }
      }
    }

    ag::Var updated = ag::add_bias(ag::matmul(ag::concat_cols(self, combined), tape.param(params.update_weight)),
                                   tape.param(params.update_bias));
    out.emplace(type, last ? ag::l2_normalize_rows(updated, kMinNorm) : ag::layer_norm(ag::relu(updated)));
  }
  return out;
}

NodeVars GnnModel::forward(ag::Tape& tape, const HeteroGraph& graph, AttentionDiagnostics* diagnostics) {
  NodeVars h;
  for (const auto& [type, dim] : input_dims_) {
    if (!graph.has_type(type)) continue;
    const Matrix& f = graph.features(type);
    if (f.cols() != dim)
      throw DimensionError(fmt::format("GnnModel: {} features have width {}, model expects {}", type, f.cols(), dim));
    h.emplace(type, tape.constant(f));
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) h = message_pass(tape, l, graph, h, diagnostics);
  return h;
}

std::map<std::string, Matrix> GnnModel::embed(const HeteroGraph& graph) {
  ag::Tape tape(false);
  std::map<std::string, Matrix> out;
  for (auto& [type, var] : forward(tape, graph)) out.emplace(type, var.value());
  return out;
}

double score(std::span<const double> h_txn, std::span<const double> h_cat) {
  if (h_txn.size() != h_cat.size()) throw DimensionError("score: dimension mismatch");
  return dot(h_txn, h_cat);
}

AucLoss auc_loss(std::span<const double> pos_scores, std::span<const double> neg_scores,
                 std::span<const int> pairing) {
  if (pairing.empty() || pairing.size() != neg_scores.size())
    throw std::invalid_argument("auc_loss: empty or misaligned pairing");
  double sum = 0.0;
  for (std::size_t i = 0; i < pairing.size(); ++i) {
    const double term = 1.0 - pos_scores[static_cast<std::size_t>(pairing[i])] + neg_scores[i];
    sum += term * term;
  }
  return {sum, sum / static_cast<double>(pairing.size())};
}

ag::Var auc_loss(ag::Var pos_scores, ag::Var neg_scores, std::span<const int> pairing) {
  if (pairing.empty() || pairing.size() != neg_scores.rows())
    throw std::invalid_argument("auc_loss: empty or misaligned pairing");
  ag::Var paired = ag::gather_rows(pos_scores, pairing);
  return ag::sum_all(ag::square(ag::add_scalar(ag::sub(neg_scores, paired), 1.0)));
}

CategoryFrequencyTable::CategoryFrequencyTable(std::vector<double> counts, double smoothing)
    : counts_(std::move(counts)) {
  if (smoothing < 0.0) throw std::invalid_argument("CategoryFrequencyTable: negative smoothing");
  weights_.resize(counts_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (counts_[i] < 0.0) throw std::invalid_argument("CategoryFrequencyTable: negative count");
    weights_[i] = counts_[i] + smoothing;
    total += weights_[i];
  }
  if (total <= 0.0) throw std::invalid_argument("CategoryFrequencyTable: all weights are zero");
  cumulative_.resize(weights_.size());
  double running = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    weights_[i] /= total;
    running += weights_[i];
    cumulative_[i] = running;
  }
}

CategoryFrequencyTable CategoryFrequencyTable::from_graph(const HeteroGraph& graph, double smoothing) {
  std::vector<double> counts(graph.num_nodes(kCategoryTable), 0.0);
  for (const auto& [txn, cat] : graph.labeled_pairs()) counts[static_cast<std::size_t>(cat)] += 1.0;
  return CategoryFrequencyTable(std::move(counts), smoothing);
}

std::vector<int> sample_negatives(const CategoryFrequencyTable& freq, int positive_cat, std::size_t n_neg,
                                  std::mt19937_64& rng) {
  std::vector<int> out;
  if (n_neg == 0) return out;
  double excluded = 0.0;
  if (positive_cat >= 0 && static_cast<std::size_t>(positive_cat) < freq.size())
    excluded = freq.weights_[static_cast<std::size_t>(positive_cat)];
  if (freq.size() < 2 || 1.0 - excluded <= 1e-15)
    throw std::invalid_argument("sample_negatives: no category other than the positive has weight");
  // Rejecting the positive draws from the renormalized remainder.
  std::uniform_real_distribution<double> unit(0.0, freq.cumulative_.back());
  out.reserve(n_neg);
  while (out.size() < n_neg) {
    const double u = unit(rng);
    auto it = std::upper_bound(freq.cumulative_.begin(), freq.cumulative_.end(), u);
    auto c = static_cast<int>(std::min<std::ptrdiff_t>(it - freq.cumulative_.begin(),
                                                      static_cast<std::ptrdiff_t>(freq.size()) - 1));
    if (c != positive_cat) out.push_back(c);
  }
  return out;
}

std::vector<double> redundancy_scores(const Matrix& embeddings, Redundancy statistic) {
  const std::size_t n = embeddings.rows();
  std::vector<double> scores(n, 0.0);
  if (n < 2) return scores;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0, best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = dot(embeddings.row(i), embeddings.row(j));
      sum += d;
      best = std::max(best, d);
    }
    scores[i] = statistic == Redundancy::max ? best : sum / static_cast<double>(n - 1);
  }
  return scores;
}

namespace {

std::vector<int> keep_lowest(const std::vector<double>& scores, std::size_t keep) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
  });
  order.resize(std::min(keep, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

std::vector<int> diversity_filter(const Matrix& embeddings, double keep_fraction, Redundancy statistic) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw std::invalid_argument("diversity_filter: keep_fraction must be in (0, 1]");
  const std::size_t n = embeddings.rows();
  auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9));
  keep = std::clamp<std::size_t>(keep, n == 0 ? 0 : 1, n);
  return keep_lowest(redundancy_scores(embeddings, statistic), keep);
}

double diversity_schedule(std::size_t epoch, std::size_t total_epochs) {
  if (epoch >= total_epochs) throw std::invalid_argument("diversity_schedule: epoch out of range");
  constexpr double kFloor = 0.4;
  constexpr double kRampShare = 0.6;
  if (total_epochs == 1) return 1.0;
  const double ramp = kRampShare * static_cast<double>(total_epochs - 1);
  const double progress = std::min(1.0, static_cast<double>(epoch) / ramp);
  return 1.0 - (1.0 - kFloor) * progress;
}

namespace {

// Static thresholds: keep samples whose redundancy is below mean -/+ 0.5 std.
std::vector<int> threshold_filter(const Matrix& embeddings, double std_offset, Redundancy statistic) {
  const std::vector<double> scores = redundancy_scores(embeddings, statistic);
  if (scores.empty()) return {};
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  const double threshold = mean + std_offset * std::sqrt(var / static_cast<double>(scores.size()));
  std::vector<int> kept;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] <= threshold) kept.push_back(static_cast<int>(i));
  if (kept.empty()) kept = keep_lowest(scores, 1);
  return kept;
}

}  // namespace

std::vector<Relation> gnn_relations(const HeteroGraph& graph, bool with_history) {
  std::vector<Relation> out;
  for (const auto& [r, e] : graph.relations())
    if (r != kTxnToCategory && r != kTxnToTxn) out.push_back(r);
  if (with_history) out.push_back(kTxnToTxn);
  std::sort(out.begin(), out.end());
  return out;
}

HeteroGraph prepare_graph(const HeteroGraph& graph, const HistoryIndex* history, std::size_t history_k,
                          HistorySampling mode, std::uint64_t seed) {
  HeteroGraph g = drop_incoming_category_edges(graph).without_relation(kTxnToTxn);
  if (history == nullptr) return g;
  g = augment_two_hop(g);
  return g.with_relation(kTxnToTxn, history->materialize(g, history_k, mode, seed));
}

GnnModel train_gnn(const HeteroGraph& graph, const GnnConfig& config, const GnnTrainOptions& options,
                   const std::function<void(const GnnEpochMetrics&)>& on_epoch) {
  if (graph.labeled_pairs().empty()) throw std::invalid_argument("train_gnn: graph has no labeled transaction");
  const HeteroGraph base = drop_incoming_category_edges(graph).without_relation(kTxnToTxn);
  std::map<std::string, std::size_t> dims;
  for (const auto& [type, nodes] : base.node_sets()) dims[type] = nodes->features.cols();
  const std::vector<Relation> relations = gnn_relations(base, options.history != nullptr);
  GnnModel model(config, dims, relations, options.seed);
  if (options.epochs == 0) return model;

  const CategoryFrequencyTable freq = CategoryFrequencyTable::from_graph(base, options.frequency_smoothing);
  ag::Adam adam({.weight_decay = options.weight_decay});
  auto params = model.parameters();

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const EpochPositives sample = sample_epoch_positives(base, options.positive_fraction,
                                                         derive_seed(options.seed, epoch, 1));
    HeteroGraph masked = mask_edges(base, sample.mask);
    if (options.history) {
      masked = augment_two_hop(masked);
      masked = masked.with_relation(
          kTxnToTxn, options.history->materialize(masked, options.history_k, options.history_sampling,
                                                  derive_seed(options.seed, epoch, 2)));
    }

    ag::Tape tape;
    NodeVars h = model.forward(tape, masked);
    const ag::Var h_txn = h.at(kTransactionTable);
    const ag::Var h_cat = h.at(kCategoryTable);

    std::vector<int> anchors;
    anchors.reserve(sample.positives.size());
    for (const auto& [t, c] : sample.positives) anchors.push_back(t);
    const Matrix anchor_embs = gather_rows(h_txn.value(), anchors);

    double keep_fraction = 1.0;
    std::vector<int> kept;
    switch (options.diversity) {
      case DiversityMode::off:
        kept.resize(anchors.size());
        std::iota(kept.begin(), kept.end(), 0);
        break;
      case DiversityMode::schedule:
        keep_fraction = diversity_schedule(epoch, options.epochs);
        kept = diversity_filter(anchor_embs, keep_fraction, options.redundancy);
        break;
      case DiversityMode::strict:
        kept = threshold_filter(anchor_embs, -0.5, options.redundancy);
        break;
      case DiversityMode::lenient:
        kept = threshold_filter(anchor_embs, 0.5, options.redundancy);
        break;
    }

    std::mt19937_64 neg_rng(derive_seed(options.seed, epoch, 3));
    std::vector<int> pos_txn, pos_cat, neg_txn, neg_cat, pairing;
    for (std::size_t p = 0; p < kept.size(); ++p) {
      const auto& [t, c] = sample.positives[static_cast<std::size_t>(kept[p])];
      pos_txn.push_back(t);
      pos_cat.push_back(c);
      for (int n : sample_negatives(freq, c, options.negatives_per_positive, neg_rng)) {
        neg_txn.push_back(t);
        neg_cat.push_back(n);
        pairing.push_back(static_cast<int>(p));
      }
    }
    if (pairing.empty()) throw TrainingError("train_gnn: no negative pairs (negatives_per_positive is 0?)");

    ag::Var s_pos = ag::rowwise_dot(ag::gather_rows(h_txn, pos_txn), ag::gather_rows(h_cat, pos_cat));
    ag::Var s_neg = ag::rowwise_dot(ag::gather_rows(h_txn, neg_txn), ag::gather_rows(h_cat, neg_cat));
    ag::Var loss = auc_loss(s_pos, s_neg, pairing);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value))
      throw TrainingError(fmt::format("gnn loss is {} at epoch {} ({} positives, {} negatives, lr {:.3g})", value,
                                      epoch, pos_txn.size(), neg_txn.size(), options.learning_rate));

    std::size_t correct = 0;
    {
      const Matrix& sp = s_pos.value();
      const Matrix& sn = s_neg.value();
      std::vector<std::uint8_t> beaten(pos_txn.size(), 0);
      for (std::size_t i = 0; i < pairing.size(); ++i)
        if (sn(i, 0) >= sp(static_cast<std::size_t>(pairing[i]), 0)) beaten[static_cast<std::size_t>(pairing[i])] = 1;
      for (auto b : beaten) correct += b == 0;
    }

    tape.backward(loss);
    adam.step(params, options.learning_rate);

    if (on_epoch)
      on_epoch({epoch, epoch + 1, value, value / static_cast<double>(pairing.size()),
                static_cast<double>(correct) / static_cast<double>(pos_txn.size()),
                static_cast<double>(kept.size()) / static_cast<double>(anchors.size()), pos_txn.size(),
                neg_txn.size()});
  }
  return model;
}

std::vector<Prediction> gnn_rank(std::span<const double> target_embedding, const Matrix& category_embs,
                                 std::span<const std::string> category_pks, std::size_t k,
                                 std::span<const std::string> exclude) {
  if (category_embs.rows() != category_pks.size())
    throw std::invalid_argument("gnn_rank: embeddings/pks mismatch");
  std::vector<double> scores(category_pks.size());
  for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = score(target_embedding, category_embs.row(j));
  return rank_candidates(scores, category_pks, k, PredictionSource::gnn, exclude);
}

}  // namespace relcat
