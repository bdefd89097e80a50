#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "relcat/cascade.hpp"
#include "relcat/hetero_gnn.hpp"
#include "relcat/neighbor_sampler.hpp"
#include "relcat/synthetic.hpp"
#include "relcat/tokenizer.hpp"
#include "relcat/txn_encoder.hpp"

namespace relcat {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  SyntheticConfig data;
  std::size_t test_per_company = 2;
  WordPieceOptions tokenizer;
  EncoderConfig encoder;
  EncoderTrainOptions encoder_train;
  std::size_t encode_batch_size = 256;
  GnnConfig gnn;
  GnnTrainOptions gnn_train;  // history pointer unused
  bool two_hop = true;
  std::size_t history_candidates = 256;
  FanoutConfig sampler;
  CascadeConfig cascade;

  // Throws ConfigError.
  void validate() const;
};

// Flat "key = value" lines; '#' starts a comment line. Unknown or repeated
// keys and malformed values throw ConfigError naming the line.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Sets `seed` and derives the data, encoder, gnn and cascade seeds from it.
// In a config file the same derivation fills whichever of those is not set.
void apply_seed(ExperimentConfig& config, std::uint64_t seed);
// Sets one key on an existing config.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();
// Every key with its current value, in key order.
std::string dump_config(const ExperimentConfig& config);

DiversityMode parse_diversity(std::string_view s);
std::string_view to_string(DiversityMode mode);
HistorySampling parse_history_sampling(std::string_view s);
std::string_view to_string(HistorySampling mode);

}  // namespace relcat
