#include "relcat/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/fmt/fmt.h>

#include "relcat/errors.hpp"
#include "relcat/rng.hpp"

namespace relcat {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: cannot parse '{}'", key, value));
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  // from_chars for double is unavailable in older libstdc++.
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw ConfigError(fmt::format("{}: cannot parse '{}'", key, value));
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, value));
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

template <typename M>
Field size_field(M member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            std::invoke(member, c) = parse_number<std::size_t>(k, v);
          },
          [member](const ExperimentConfig& c) { return fmt::format("{}", std::invoke(member, const_cast<ExperimentConfig&>(c))); }};
}

template <typename M>
Field u64_field(M member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            std::invoke(member, c) = parse_number<std::uint64_t>(k, v);
          },
          [member](const ExperimentConfig& c) { return fmt::format("{}", std::invoke(member, const_cast<ExperimentConfig&>(c))); }};
}

template <typename M>
Field real_field(M member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            std::invoke(member, c) = parse_real(k, v);
          },
          [member](const ExperimentConfig& c) { return fmt::format("{}", std::invoke(member, const_cast<ExperimentConfig&>(c))); }};
}

template <typename M>
Field bool_field(M member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            std::invoke(member, c) = parse_bool(k, v);
          },
          [member](const ExperimentConfig& c) { return std::string(std::invoke(member, const_cast<ExperimentConfig&>(c)) ? "true" : "false"); }};
}

const std::map<std::string, Field>& fields() {
  using C = ExperimentConfig;
  static const std::map<std::string, Field> table = {
      {"seed", u64_field([](C& c) -> auto& { return c.seed; })},

      {"data.num_companies", size_field([](C& c) -> auto& { return c.data.num_companies; })},
      {"data.min_transactions", size_field([](C& c) -> auto& { return c.data.min_transactions; })},
      {"data.max_transactions", size_field([](C& c) -> auto& { return c.data.max_transactions; })},
      {"data.min_categories", size_field([](C& c) -> auto& { return c.data.min_categories; })},
      {"data.max_categories", size_field([](C& c) -> auto& { return c.data.max_categories; })},
      {"data.type_zipf_exponent", real_field([](C& c) -> auto& { return c.data.type_zipf_exponent; })},
      {"data.zipf_exponent", real_field([](C& c) -> auto& { return c.data.zipf_exponent; })},
      {"data.favourite_merchant_rate", real_field([](C& c) -> auto& { return c.data.favourite_merchant_rate; })},
      {"data.abbreviation_noise_rate", real_field([](C& c) -> auto& { return c.data.abbreviation_noise_rate; })},
      {"data.memo_rate", real_field([](C& c) -> auto& { return c.data.memo_rate; })},
      {"data.name_quirk_rate", real_field([](C& c) -> auto& { return c.data.name_quirk_rate; })},
      {"data.late_category_rate", real_field([](C& c) -> auto& { return c.data.late_category_rate; })},
      {"data.seed", u64_field([](C& c) -> auto& { return c.data.seed; })},
      {"data.test_per_company", size_field([](C& c) -> auto& { return c.test_per_company; })},

      {"tokenizer.vocab_size", size_field([](C& c) -> auto& { return c.tokenizer.vocab_size; })},
      {"tokenizer.min_frequency", size_field([](C& c) -> auto& { return c.tokenizer.min_frequency; })},
      {"tokenizer.max_word_chars", size_field([](C& c) -> auto& { return c.tokenizer.max_word_chars; })},

      {"encoder.layers", size_field([](C& c) -> auto& { return c.encoder.layers; })},
      {"encoder.hidden_dim", size_field([](C& c) -> auto& { return c.encoder.hidden_dim; })},
      {"encoder.attention_heads", size_field([](C& c) -> auto& { return c.encoder.attention_heads; })},
      {"encoder.feedforward_dim", size_field([](C& c) -> auto& { return c.encoder.feedforward_dim; })},
      {"encoder.max_sequence_length", size_field([](C& c) -> auto& { return c.encoder.max_sequence_length; })},
      {"encoder.learnable_temperature", bool_field([](C& c) -> auto& { return c.encoder.learnable_temperature; })},
      {"encoder.steps", size_field([](C& c) -> auto& { return c.encoder_train.steps; })},
      {"encoder.batch_size", size_field([](C& c) -> auto& { return c.encoder_train.batch_size; })},
      {"encoder.learning_rate", real_field([](C& c) -> auto& { return c.encoder_train.learning_rate; })},
      {"encoder.warmup_fraction", real_field([](C& c) -> auto& { return c.encoder_train.warmup_fraction; })},
      {"encoder.weight_decay", real_field([](C& c) -> auto& { return c.encoder_train.weight_decay; })},
      {"encoder.seed", u64_field([](C& c) -> auto& { return c.encoder_train.seed; })},
      {"encoder.encode_batch_size", size_field([](C& c) -> auto& { return c.encode_batch_size; })},

      {"gnn.num_layers", size_field([](C& c) -> auto& { return c.gnn.num_layers; })},
      {"gnn.hidden_dim", size_field([](C& c) -> auto& { return c.gnn.hidden_dim; })},
      {"gnn.gat_negative_slope", real_field([](C& c) -> auto& { return c.gnn.gat_negative_slope; })},
      {"gnn.epochs", size_field([](C& c) -> auto& { return c.gnn_train.epochs; })},
      {"gnn.learning_rate", real_field([](C& c) -> auto& { return c.gnn_train.learning_rate; })},
      {"gnn.weight_decay", real_field([](C& c) -> auto& { return c.gnn_train.weight_decay; })},
      {"gnn.positive_fraction", real_field([](C& c) -> auto& { return c.gnn_train.positive_fraction; })},
      {"gnn.negatives_per_positive", size_field([](C& c) -> auto& { return c.gnn_train.negatives_per_positive; })},
      {"gnn.frequency_smoothing", real_field([](C& c) -> auto& { return c.gnn_train.frequency_smoothing; })},
      {"gnn.history_k", size_field([](C& c) -> auto& { return c.gnn_train.history_k; })},
      {"gnn.history_candidates", size_field([](C& c) -> auto& { return c.history_candidates; })},
      {"gnn.two_hop", bool_field([](C& c) -> auto& { return c.two_hop; })},
      {"gnn.seed", u64_field([](C& c) -> auto& { return c.gnn_train.seed; })},
      {"gnn.diversity",
       {[](C& c, const std::string&, const std::string& v) { c.gnn_train.diversity = parse_diversity(v); },
        [](const C& c) { return std::string(to_string(c.gnn_train.diversity)); }}},
      {"gnn.diversity_statistic",
       {[](C& c, const std::string&, const std::string& v) {
          if (v == "mean") c.gnn_train.redundancy = Redundancy::mean;
          else if (v == "max") c.gnn_train.redundancy = Redundancy::max;
          else throw ConfigError(fmt::format("diversity_statistic must be mean or max; got '{}'", v));
        },
        [](const C& c) { return std::string(c.gnn_train.redundancy == Redundancy::max ? "max" : "mean"); }}},
      {"gnn.history_sampling",
       {[](C& c, const std::string&, const std::string& v) {
          c.gnn_train.history_sampling = parse_history_sampling(v);
        },
        [](const C& c) { return std::string(to_string(c.gnn_train.history_sampling)); }}},

      {"sampler.default_fanout", size_field([](C& c) -> auto& { return c.sampler.default_fanout; })},
      {"sampler.num_hops", size_field([](C& c) -> auto& { return c.sampler.num_hops; })},

      {"cascade.k", size_field([](C& c) -> auto& { return c.cascade.k; })},
      {"cascade.nn_threshold", real_field([](C& c) -> auto& { return c.cascade.nn_threshold; })},
      {"cascade.nn_history_k", size_field([](C& c) -> auto& { return c.cascade.nn_history_k; })},
      {"cascade.use_nn", bool_field([](C& c) -> auto& { return c.cascade.use_nn; })},
      {"cascade.use_gnn", bool_field([](C& c) -> auto& { return c.cascade.use_gnn; })},
      {"cascade.company_candidates_only",
       bool_field([](C& c) -> auto& { return c.cascade.company_candidates_only; })},
      {"cascade.seed", u64_field([](C& c) -> auto& { return c.cascade.seed; })},
  };
  return table;
}

}  // namespace

DiversityMode parse_diversity(std::string_view s) {
  if (s == "off") return DiversityMode::off;
  if (s == "schedule") return DiversityMode::schedule;
  if (s == "strict") return DiversityMode::strict;
  if (s == "lenient") return DiversityMode::lenient;
  throw ConfigError(fmt::format("diversity must be off, schedule, strict or lenient; got '{}'", s));
}

std::string_view to_string(DiversityMode mode) {
  switch (mode) {
    case DiversityMode::off: return "off";
    case DiversityMode::schedule: return "schedule";
    case DiversityMode::strict: return "strict";
    case DiversityMode::lenient: return "lenient";
  }
  return "?";
}

HistorySampling parse_history_sampling(std::string_view s) {
  if (s == "similarity") return HistorySampling::similarity;
  if (s == "uniform") return HistorySampling::uniform;
  throw ConfigError(fmt::format("history_sampling must be similarity or uniform; got '{}'", s));
}

std::string_view to_string(HistorySampling mode) {
  return mode == HistorySampling::similarity ? "similarity" : "uniform";
}

void ExperimentConfig::validate() const {
  data.validate();
  // The vocabulary size is only known after tokenizer training.
  EncoderConfig enc = encoder;
  if (enc.vocab_size == 0) enc.vocab_size = tokenizer.vocab_size;
  enc.validate();
  gnn.validate();
  sampler.validate();
  if (tokenizer.vocab_size < Vocab::kNumSpecials) throw ConfigError("tokenizer.vocab_size too small");
  if (encoder_train.batch_size < 2) throw ConfigError("encoder.batch_size must be >= 2");
  if (encode_batch_size < 1) throw ConfigError("encoder.encode_batch_size must be >= 1");
  if (!(gnn_train.positive_fraction > 0.0 && gnn_train.positive_fraction <= 1.0))
    throw ConfigError("gnn.positive_fraction must lie in (0, 1]");
  if (gnn_train.negatives_per_positive < 1) throw ConfigError("gnn.negatives_per_positive must be >= 1");
  if (!(gnn_train.frequency_smoothing >= 0.0)) throw ConfigError("gnn.frequency_smoothing must be >= 0");
  if (gnn_train.history_k < 1) throw ConfigError("gnn.history_k must be >= 1");
  if (cascade.k < 1) throw ConfigError("cascade.k must be >= 1");
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
  it->second.set(config, key, value);
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected 'key = value'", lineno));
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(fmt::format("line {}: key '{}' repeated", lineno, key));
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  if (seen.contains("seed")) {
    if (!seen.contains("data.seed")) config.data.seed = derive_seed(config.seed, 0);
    if (!seen.contains("encoder.seed")) config.encoder_train.seed = derive_seed(config.seed, 1);
    if (!seen.contains("gnn.seed")) config.gnn_train.seed = derive_seed(config.seed, 2);
    if (!seen.contains("cascade.seed")) config.cascade.seed = derive_seed(config.seed, 3);
  }
  // The sampler keeps as many history edges as the graph was built with.
  config.sampler.history_k = config.gnn_train.history_k;
  config.cascade.fanout = config.sampler;
  config.cascade.history_sampling = config.gnn_train.history_sampling;
  config.validate();
  return config;
}

void apply_seed(ExperimentConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.data.seed = derive_seed(seed, 0);
  config.encoder_train.seed = derive_seed(seed, 1);
  config.gnn_train.seed = derive_seed(seed, 2);
  config.cascade.seed = derive_seed(seed, 3);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : fields()) out.push_back(k);
  return out;
}

std::string dump_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [k, f] : fields()) out += fmt::format("{} = {}\n", k, f.get(config));
  return out;
}

}  // namespace relcat
