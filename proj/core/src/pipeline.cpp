#include "relcat/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "relcat/weights.hpp"

namespace relcat {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::string> names(const RelationalDatabase& db, const std::string& table) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < db.table(table).rows.size(); ++i) out.push_back(db.name_of(table, i));
  return out;
}

std::map<std::string, std::string> category_names(const RelationalDatabase& db) {
  std::map<std::string, std::string> out;
  const Table& t = db.table(kCategoryTable);
  for (std::size_t i = 0; i < t.rows.size(); ++i) out.emplace(t.rows[i].pk, db.name_of(kCategoryTable, i));
  return out;
}

}  // namespace

std::vector<std::string> tokenizer_corpus(const RelationalDatabase& db) {
  std::vector<std::string> corpus;
  for (const TransactionRecord& t : db.transactions()) corpus.push_back(format_transaction(t));
  for (const char* table : {kCategoryTable, kCodeTable, kCompanyTable})
    for (std::string& n : names(db, table)) corpus.push_back(std::move(n));
  return corpus;
}

std::vector<TextPair> encoder_pairs(const RelationalDatabase& db) {
  const auto cat_names = category_names(db);
  std::vector<TextPair> out;
  for (const TransactionRecord& t : db.transactions())
    if (t.category_fk) out.push_back({format_transaction(t), cat_names.at(*t.category_fk)});
  return out;
}

std::map<std::string, Matrix> encode_database(EncoderModel& encoder, const Vocab& vocab,
                                              const RelationalDatabase& db, std::size_t batch_size) {
  std::map<std::string, Matrix> out;
  for (const auto& [name, table] : db.tables()) {
    std::vector<std::string> texts;
    if (name == kTransactionTable) {
      for (const TransactionRecord& t : db.transactions()) texts.push_back(format_transaction(t));
    } else {
      texts = names(db, name);
    }
    out[name] = encode(encoder, vocab, texts, batch_size);
  }
  return out;
}

ZeroShotRanker::ZeroShotRanker(EncoderModel& encoder, const Vocab& vocab, const RelationalDatabase& db,
                               std::size_t batch_size) {
  const Table& cats = db.table(kCategoryTable);
  const int company_col = cats.schema.foreign_key_index("company_fk");
  std::set<std::string> distinct;
  for (std::size_t i = 0; i < cats.rows.size(); ++i) {
    const std::string name = db.name_of(kCategoryTable, i);
    const std::string& pk = cats.rows[i].pk;
    distinct.insert(name);
    auto [it, inserted] = global_name_pk_.emplace(name, pk);
    if (!inserted && pk < it->second) it->second = pk;
    const auto& company = cats.rows[i].fkeys[static_cast<std::size_t>(company_col)];
    if (company) {
      auto [cit, cinserted] = company_name_pk_.emplace(std::make_pair(*company, name), pk);
      if (!cinserted && pk < cit->second) cit->second = pk;
    }
  }
  names_.assign(distinct.begin(), distinct.end());
  if (!names_.empty()) name_embs_ = encode(encoder, vocab, names_, batch_size);
}

std::vector<Prediction> ZeroShotRanker::rank(std::span<const double> txn_embedding, const std::string& company_pk,
                                             std::size_t k) const {
  std::vector<Prediction> out = zero_shot_rank(txn_embedding, name_embs_, names_, k);
  for (Prediction& p : out) {
    auto it = company_name_pk_.find({company_pk, p.category_pk});
    p.category_pk = it != company_name_pk_.end() ? it->second : global_name_pk_.at(p.category_pk);
  }
  return out;
}

Workspace prepare_workspace(const ExperimentConfig& config, RelationalDatabase db) {
  config.validate();
  Workspace ws;
  ws.config = config;
  ws.db = std::move(db);
  ws.split = temporal_split(ws.db, config.test_per_company);
  ws.history = company_history(ws.split.train);
  spdlog::info("split: {} transactions, {} held out", ws.db.table(kTransactionTable).rows.size(),
               ws.split.test.size());

  auto start = Clock::now();
  const std::vector<std::string> corpus = tokenizer_corpus(ws.split.train);
  ws.vocab = train_wordpiece(corpus, config.tokenizer);
  spdlog::info("tokenizer: {} pieces, {:.2f} tokens per line ({:.1f}s)", ws.vocab.size(),
               mean_tokens_per_line(ws.vocab, corpus), seconds_since(start));

  start = Clock::now();
  EncoderConfig enc = config.encoder;
  enc.vocab_size = ws.vocab.size();
  const std::vector<TextPair> pairs = encoder_pairs(ws.split.train);
  const std::size_t report_every = std::max<std::size_t>(1, config.encoder_train.steps / 10);
  ws.encoder = train_encoder(pairs, ws.vocab, enc, config.encoder_train, [&](const EncoderStepMetrics& m) {
    if ((m.step + 1) % report_every == 0) spdlog::info("encoder step {} loss {:.4f}", m.step + 1, m.loss);
  });
  spdlog::info("encoder: {} steps ({:.1f}s)", config.encoder_train.steps, seconds_since(start));

  start = Clock::now();
  ws.features = encode_database(ws.encoder, ws.vocab, ws.split.train, config.encode_batch_size);
  ws.graph = build_graph(ws.split.train, ws.features);
  ws.history_index = HistoryIndex(ws.graph, ws.features.at(kTransactionTable), config.history_candidates);
  spdlog::info("graph: {} edges, history index ready ({:.1f}s)", ws.graph.total_edges(), seconds_since(start));
  return ws;
}

GnnVariant default_variant(const ExperimentConfig& config) {
  return {config.two_hop, config.gnn_train.history_sampling, config.gnn_train.diversity};
}

GnnModel train_gnn_variant(const Workspace& ws, const GnnVariant& variant,
                           const std::function<void(const GnnEpochMetrics&)>& on_epoch) {
  GnnTrainOptions options = ws.config.gnn_train;
  options.history = variant.two_hop ? &ws.history_index : nullptr;
  options.history_sampling = variant.sampling;
  options.diversity = variant.diversity;
  return train_gnn(ws.graph, ws.config.gnn, options, on_epoch);
}

CascadeConfig cascade_config(const ExperimentConfig& config, const GnnVariant& variant) {
  CascadeConfig c = config.cascade;
  c.fanout = config.sampler;
  c.fanout.history_k = config.gnn_train.history_k;
  c.history_sampling = variant.sampling;
  return c;
}

std::vector<CascadeResponse> run_cascade(const Workspace& ws, GnnModel* gnn, const CascadeConfig& cascade) {
  CascadePredictor predictor(ws.graph, ws.history_index, gnn, cascade);
  std::vector<CascadeResponse> out;
  out.reserve(ws.split.test.size());
  for (const TestCase& c : ws.split.test) out.push_back(predictor.predict(static_cast<int>(c.row)));
  return out;
}

std::map<std::string, std::vector<Prediction>> zero_shot_predictions(Workspace& ws, std::size_t k) {
  ZeroShotRanker ranker(ws.encoder, ws.vocab, ws.split.train, ws.config.encode_batch_size);
  const Matrix& txn = ws.features.at(kTransactionTable);
  std::map<std::string, std::vector<Prediction>> out;
  for (const TestCase& c : ws.split.test) out[c.transaction_pk] = ranker.rank(txn.row(c.row), c.company_pk, k);
  return out;
}

std::map<std::string, std::vector<Prediction>> to_prediction_map(std::span<const CascadeResponse> responses) {
  std::map<std::string, std::vector<Prediction>> out;
  for (const CascadeResponse& r : responses) out[r.transaction_pk] = r.predictions;
  return out;
}

const BenchmarkRun& BenchmarkResult::run(const std::string& label) const {
  for (const BenchmarkRun& r : runs)
    if (r.label == label) return r;
  throw std::out_of_range("no benchmark run named " + label);
}

BenchmarkResult run_benchmark(Workspace& ws, bool ablations) {
  BenchmarkResult result;
  const std::size_t k = ws.config.cascade.k;
  auto record = [&](std::string label, EvalReport report, Clock::time_point start) {
    result.runs.push_back({std::move(label), std::move(report), seconds_since(start)});
    const BenchmarkRun& r = result.runs.back();
    spdlog::info("{}: top1 {:.4f} top2 {:.4f} top5 {:.4f} ({:.1f}s)", r.label, r.report.top1, r.report.top2,
                 r.report.top5, r.seconds);
  };

  auto start = Clock::now();
  record("zero-shot", evaluate(ws.split.test, zero_shot_predictions(ws, k), ws.history), start);

  const GnnVariant base = default_variant(ws.config);
  auto gnn_only = [&](const std::string& label, const GnnVariant& variant) {
    auto t0 = Clock::now();
    GnnModel model = train_gnn_variant(ws, variant, [&](const GnnEpochMetrics& m) {
      spdlog::debug("{} epoch {} loss {:.4f} acc {:.3f} kept {:.2f}", label, m.epoch, m.mean_loss, m.accuracy,
                    m.kept_fraction);
    });
    spdlog::info("{}: trained in {:.1f}s", label, seconds_since(t0));
    CascadeConfig c = cascade_config(ws.config, variant);
    c.use_nn = false;
    c.use_gnn = true;
    auto t1 = Clock::now();
    const auto responses = run_cascade(ws, &model, c);
    record(label, evaluate(ws.split.test, to_prediction_map(responses), ws.history), t1);
    return model;
  };

  GnnModel model = gnn_only("gnn-only", base);

  start = Clock::now();
  {
    CascadeConfig c = cascade_config(ws.config, base);
    c.use_nn = true;
    c.use_gnn = false;
    const auto responses = run_cascade(ws, nullptr, c);
    record("nn-only", evaluate(ws.split.test, to_prediction_map(responses), ws.history), start);
  }

  start = Clock::now();
  {
    CascadeConfig c = cascade_config(ws.config, base);
    c.use_nn = true;
    c.use_gnn = true;
    const auto responses = run_cascade(ws, &model, c);
    EvalReport report = evaluate(ws.split.test, to_prediction_map(responses), ws.history);
    if (!responses.empty()) report.cascade = cascade_stats(responses);
    record("cascade", std::move(report), start);
  }

  if (ablations) {
    GnnVariant v = base;
    v.two_hop = false;
    gnn_only("gnn-only/no-two-hop", v);
    v = base;
    v.sampling = HistorySampling::uniform;
    gnn_only("gnn-only/uniform-history", v);
    v = base;
    v.diversity = DiversityMode::off;
    gnn_only("gnn-only/no-diversity", v);
  }
  result.gnn = std::move(model);
  return result;
}

void save_models(const TrainedModels& models, const ExperimentConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_vocab(models.vocab, dir / "vocab.txt");
  if (has_encoder(models)) {
    const auto enc_params = models.encoder.parameters();
    save_weights(enc_params, dir / "encoder.bin");
  }
  if (has_gnn(models)) {
    const auto gnn_params = models.gnn.parameters();
    save_weights(gnn_params, dir / "gnn.bin");
  }

  nlohmann::json settings = nlohmann::json::object();
  std::istringstream lines(dump_config(config));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    settings[line.substr(0, eq)] = line.substr(eq + 3);
  }
  nlohmann::json relations = nlohmann::json::array();
  for (const Relation& r : models.gnn.relations()) relations.push_back({r.src, r.dst});
  nlohmann::json j = {{"format", "relcat-model-1"},
                      {"config", settings},
                      {"encoder_vocab_size", models.encoder.config().vocab_size},
                      {"gnn_relations", relations},
                      {"gnn_input_dims", models.gnn.input_dims()},
                      {"two_hop", models.two_hop}};
  std::ofstream f(dir / "model.json");
  if (!f) throw std::runtime_error("cannot write " + (dir / "model.json").string());
  f << j.dump(2) << '\n';
}

TrainedModels load_models(const std::filesystem::path& dir, ExperimentConfig& config) {
  std::ifstream f(dir / "model.json");
  if (!f) throw ConfigError("cannot open " + (dir / "model.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model.json: ") + e.what());
  }
  config = ExperimentConfig{};
  for (const auto& [key, value] : j.at("config").items()) set_config_value(config, key, value.get<std::string>());
  config.validate();

  TrainedModels models;
  models.vocab = load_vocab(dir / "vocab.txt");
  models.two_hop = j.at("two_hop").get<bool>();
  if (j.at("encoder_vocab_size").get<std::size_t>() == 0) return models;
  EncoderConfig enc = config.encoder;
  enc.vocab_size = j.at("encoder_vocab_size").get<std::size_t>();
  if (enc.vocab_size != models.vocab.size())
    throw ConfigError("model.json vocab size does not match vocab.txt");
  models.encoder = EncoderModel(enc, 0);
  auto enc_params = models.encoder.parameters();
  load_weights(enc_params, dir / "encoder.bin");

  std::vector<Relation> relations;
  for (const auto& r : j.at("gnn_relations")) relations.push_back({r.at(0).get<std::string>(), r.at(1).get<std::string>()});
  if (relations.empty()) return models;
  const auto dims = j.at("gnn_input_dims").get<std::map<std::string, std::size_t>>();
  models.gnn = GnnModel(config.gnn, dims, relations, 0);
  auto gnn_params = models.gnn.parameters();
  load_weights(gnn_params, dir / "gnn.bin");
  return models;
}

std::vector<CascadeResponse> predict_transactions(TrainedModels& models, const ExperimentConfig& config,
                                                  RelationalDatabase db, std::span<const TransactionRecord> input,
                                                  bool zero_shot) {
  if (!has_encoder(models)) throw ConfigError("model has no trained encoder");
  if (!zero_shot && !has_gnn(models)) throw ConfigError("model has no trained GNN; use zero-shot or run train-gnn");
  const std::size_t first = db.table(kTransactionTable).rows.size();
  for (TransactionRecord t : input) {
    t.category_fk.reset();
    db.add_transaction(t);
  }
  db.reindex();
  const ValidationReport report = validate(db);
  if (!report.ok()) throw IntegrityError("input transactions do not fit the database", report.violations);

  std::map<std::string, Matrix> features = encode_database(models.encoder, models.vocab, db, config.encode_batch_size);
  std::vector<CascadeResponse> out;
  out.reserve(input.size());
  if (zero_shot) {
    ZeroShotRanker ranker(models.encoder, models.vocab, db, config.encode_batch_size);
    const Matrix& txn = features.at(kTransactionTable);
    for (std::size_t i = 0; i < input.size(); ++i) {
      CascadeResponse r;
      r.transaction_pk = input[i].pk;
      r.predictions = ranker.rank(txn.row(first + i), input[i].company_fk, config.cascade.k);
      for (Prediction& p : r.predictions) p.source = PredictionSource::zero_shot;
      out.push_back(std::move(r));
    }
    return out;
  }

  const HeteroGraph graph = build_graph(db, features);
  const HistoryIndex history(graph, features.at(kTransactionTable), config.history_candidates);
  GnnVariant variant = default_variant(config);
  variant.two_hop = models.two_hop;
  CascadePredictor predictor(graph, history, &models.gnn, cascade_config(config, variant));
  for (std::size_t i = 0; i < input.size(); ++i) out.push_back(predictor.predict(static_cast<int>(first + i)));
  return out;
}

std::vector<TransactionRecord> load_transaction_records(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError(kTransactionTable, "cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const auto rows = parse_csv(ss.str());
  if (rows.empty()) throw LoadError(kTransactionTable, path.string() + ": empty file");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) col[rows[0][i]] = i;
  for (const char* required : {"pk", "company_fk", "description", "amount", "date"})
    if (!col.contains(required))
      throw LoadError(kTransactionTable, path.string() + ": missing column '" + required + "'");
  auto field = [&](const std::vector<std::string>& row, const std::string& name) -> std::string {
    auto it = col.find(name);
    if (it == col.end() || it->second >= row.size()) return {};
    return row[it->second];
  };
  std::vector<TransactionRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != rows[0].size())
      throw LoadError(kTransactionTable, path.string() + ": row " + std::to_string(i) + " has " +
                                             std::to_string(row.size()) + " fields");
    TransactionRecord t;
    t.pk = field(row, "pk");
    t.company_fk = field(row, "company_fk");
    t.description = field(row, "description");
    t.amount = field(row, "amount");
    t.memo = field(row, "memo");
    t.date = field(row, "date");
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace relcat
