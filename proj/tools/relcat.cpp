#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "relcat/cascade.hpp"
#include "relcat/config.hpp"
#include "relcat/evaluation.hpp"
#include "relcat/logging.hpp"
#include "relcat/pipeline.hpp"
#include "relcat/relational_store.hpp"
#include "relcat/synthetic.hpp"

using namespace relcat;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string data;
  std::string out;
  std::string model;
  std::string input;
  std::size_t top_k = 5;
  bool zero_shot = false;
  bool ablations = false;
};

ExperimentConfig make_config(const Common& c) {
  ExperimentConfig config = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  if (c.seed) apply_seed(config, *c.seed);
  config.cascade.k = c.top_k;
  config.validate();
  return config;
}

// stdout when `path` is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
  return value;
}

int cmd_generate(const Common& c) {
  const ExperimentConfig config = make_config(c);
  const RelationalDatabase db = generate_synthetic(config.data);
  save_database(db, require(c.out, "--out"));
  spdlog::info("wrote {} transactions, {} categories to {}", db.table(kTransactionTable).rows.size(),
               db.table(kCategoryTable).rows.size(), c.out);
  return 0;
}

int cmd_train_tokenizer(const Common& c) {
  const ExperimentConfig config = make_config(c);
  const RelationalDatabase db = load_database(require(c.data, "--data"));
  TrainedModels models;
  const auto corpus = tokenizer_corpus(db);
  models.vocab = train_wordpiece(corpus, config.tokenizer);
  save_models(models, config, require(c.model, "--model"));
  spdlog::info("vocabulary of {} pieces, {:.2f} tokens per line", models.vocab.size(),
               mean_tokens_per_line(models.vocab, corpus));
  return 0;
}

int cmd_train_encoder(const Common& c) {
  const ExperimentConfig config = make_config(c);
  const RelationalDatabase db = load_database(require(c.data, "--data"));
  ExperimentConfig stored;
  TrainedModels models = load_models(require(c.model, "--model"), stored);
  EncoderConfig enc = config.encoder;
  enc.vocab_size = models.vocab.size();
  const auto pairs = encoder_pairs(db);
  const std::size_t every = std::max<std::size_t>(1, config.encoder_train.steps / 20);
  std::ofstream metrics(std::filesystem::path(c.model) / "encoder_metrics.jsonl");
  models.encoder = train_encoder(pairs, models.vocab, enc, config.encoder_train, [&](const EncoderStepMetrics& m) {
    metrics << nlohmann::json{{"step", m.step + 1}, {"loss", m.loss}, {"learning_rate", m.learning_rate},
                              {"batch_size", m.batch_size}}.dump()
            << '\n';
    if ((m.step + 1) % every == 0) spdlog::info("step {} loss {:.4f} lr {:.2e}", m.step + 1, m.loss, m.learning_rate);
  });
  models.gnn = GnnModel{};
  save_models(models, config, c.model);
  return 0;
}

int cmd_train_gnn(const Common& c) {
  const ExperimentConfig config = make_config(c);
  const RelationalDatabase db = load_database(require(c.data, "--data"));
  ExperimentConfig stored;
  TrainedModels models = load_models(require(c.model, "--model"), stored);
  if (!has_encoder(models)) throw ConfigError("run train-encoder first");
  const auto features = encode_database(models.encoder, models.vocab, db, config.encode_batch_size);
  const HeteroGraph graph = build_graph(db, features);
  const HistoryIndex history(graph, features.at(kTransactionTable), config.history_candidates);
  GnnTrainOptions options = config.gnn_train;
  options.history = config.two_hop ? &history : nullptr;
  std::ofstream metrics(std::filesystem::path(c.model) / "gnn_metrics.jsonl");
  models.gnn = train_gnn(graph, config.gnn, options, [&](const GnnEpochMetrics& m) {
    metrics << nlohmann::json{{"epoch", m.epoch},       {"step", m.step},
                              {"loss", m.loss},         {"mean_loss", m.mean_loss},
                              {"accuracy", m.accuracy}, {"kept_fraction", m.kept_fraction},
                              {"num_pos", m.num_pos},   {"num_neg", m.num_neg}}.dump()
            << '\n';
    spdlog::info("epoch {} loss {:.4f} acc {:.3f} kept {:.2f}", m.epoch, m.mean_loss, m.accuracy, m.kept_fraction);
  });
  models.two_hop = config.two_hop;
  save_models(models, config, c.model);
  return 0;
}

int cmd_predict(const Common& c) {
  ExperimentConfig config;
  TrainedModels models = load_models(require(c.model, "--model"), config);
  config.cascade.k = c.top_k;
  const RelationalDatabase db = load_database(require(c.data, "--data"));
  const auto input = load_transaction_records(require(c.input, "--input"));
  const auto start = std::chrono::steady_clock::now();
  const auto responses = predict_transactions(models, config, db, input, c.zero_shot);
  spdlog::info("{} transactions in {:.2f}s", responses.size(),
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  Output out(c.out);
  for (const CascadeResponse& r : responses) out.stream() << to_json_line(r) << '\n';
  return 0;
}

int cmd_evaluate(const Common& c) {
  const ExperimentConfig config = make_config(c);
  RelationalDatabase db = c.data.empty() ? generate_synthetic(config.data) : load_database(c.data);
  Workspace ws = prepare_workspace(config, std::move(db));
  BenchmarkResult result;
  if (c.zero_shot) {
    result.runs.push_back({"zero-shot", evaluate(ws.split.test, zero_shot_predictions(ws, config.cascade.k), ws.history), 0.0});
  } else {
    result = run_benchmark(ws, c.ablations);
  }
  std::vector<std::pair<std::string, EvalReport>> rows;
  Output out(c.out);
  for (const BenchmarkRun& r : result.runs) {
    rows.emplace_back(r.label, r.report);
    out.stream() << to_json_line(r.report, r.label) << '\n';
  }
  std::cerr << format_report_table(rows);
  return 0;
}

int cmd_cascade_stats(const Common& c) {
  std::ifstream in(require(c.input, "--input"));
  if (!in) throw std::runtime_error("cannot open " + c.input);
  std::vector<CascadeResponse> responses;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) responses.push_back(parse_response(line));
  const CascadeStats stats = cascade_stats(responses);
  Output out(c.out);
  for (std::size_t k = 1; k <= CascadeStats::kMaxK; ++k)
    out.stream() << nlohmann::json{{"k", k}, {"resolved_without_gnn", stats.resolved[k - 1]},
                                   {"responses", stats.responses}}
                        .dump()
                 << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    configure_logging();
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Transaction categorization over relational data"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Base seed; overrides every seed in the config");
    sub->add_option("--top-k", common.top_k, "Predictions per transaction")->check(CLI::Range(1, 1000));
  };

  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  add_common(generate);
  generate->add_option("--out", common.out, "Output directory")->required();

  auto* tokenizer = app.add_subcommand("train-tokenizer", "Train the WordPiece vocabulary");
  add_common(tokenizer);
  tokenizer->add_option("--data", common.data, "Dataset directory")->required();
  tokenizer->add_option("--model,--out", common.model, "Model directory")->required();

  auto* encoder = app.add_subcommand("train-encoder", "Train the transaction text encoder");
  add_common(encoder);
  encoder->add_option("--data", common.data, "Dataset directory")->required();
  encoder->add_option("--model,--out", common.model, "Model directory holding vocab.txt")->required();

  auto* gnn = app.add_subcommand("train-gnn", "Train the graph model on the dataset's labels");
  add_common(gnn);
  gnn->add_option("--data", common.data, "Dataset directory")->required();
  gnn->add_option("--model,--out", common.model, "Model directory holding the encoder")->required();

  auto* predict = app.add_subcommand("predict", "Categorize transactions; one JSON line each");
  add_common(predict);
  predict->add_option("--model", common.model, "Model directory")->required();
  predict->add_option("--data", common.data, "Dataset directory with the history")->required();
  predict->add_option("--input", common.input, "CSV in the transactions.csv layout")->required();
  predict->add_option("--out", common.out, "Output file (default stdout)");
  predict->add_flag("--zero-shot", common.zero_shot, "Rank category names with the text encoder only");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Split, train and score on held-out transactions");
  add_common(evaluate_cmd);
  evaluate_cmd->add_option("--data", common.data, "Dataset directory (default: generate from the config)");
  evaluate_cmd->add_option("--out", common.out, "Metrics file, one JSON line per run (default stdout)");
  evaluate_cmd->add_flag("--zero-shot", common.zero_shot, "Only the zero-shot run");
  evaluate_cmd->add_flag("--ablations", common.ablations, "Also train the ablated graph models");

  auto* stats = app.add_subcommand("cascade-stats", "Share resolved without the GNN, per k");
  stats->add_option("--input", common.input, "Predictions written by predict")->required();
  stats->add_option("--out", common.out, "Output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(common);
    if (tokenizer->parsed()) return cmd_train_tokenizer(common);
    if (encoder->parsed()) return cmd_train_encoder(common);
    if (gnn->parsed()) return cmd_train_gnn(common);
    if (predict->parsed()) return cmd_predict(common);
    if (evaluate_cmd->parsed()) return cmd_evaluate(common);
    if (stats->parsed()) return cmd_cascade_stats(common);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
