#pragma once

#include <cstdint>

#include "relcat/relational_store.hpp"

namespace relcat {

struct SyntheticConfig {
  std::size_t num_companies = 200;
  std::size_t min_transactions = 60;
  std::size_t max_transactions = 140;
  std::size_t min_categories = 2;
  std::size_t max_categories = 6;
  // Popularity skew of category types across companies.
  double type_zipf_exponent = 0.8;
  // Popularity skew of a company's own categories across its transactions.
  double zipf_exponent = 1.1;
  // Chance that a transaction goes to one of the company's usual merchants.
  double favourite_merchant_rate = 0.85;
  double abbreviation_noise_rate = 0.3;
  double memo_rate = 0.2;
  // Chance that a category is named after a different type.
  double name_quirk_rate = 0.05;
  // Chance that a category (other than the company's most used one) is only
  // opened in the last tenth of the company's timeline.
  double late_category_rate = 0.1;
  std::uint64_t seed = 20240611;

  // Throws ConfigError.
  void validate() const;
};

// Companies file their transactions under their own category rows, named from
// a shared pool of synonyms, with merchant text generated per category type.
RelationalDatabase generate_synthetic(const SyntheticConfig& config);

// Number of merchants across all category types.
std::size_t synthetic_merchant_count();

}  // namespace relcat
