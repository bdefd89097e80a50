#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relcat {

enum class PredictionSource { nn, gnn, zero_shot };

std::string_view to_string(PredictionSource source);
PredictionSource parse_source(std::string_view text);

struct Prediction {
  std::string category_pk;
  double score = 0.0;
  int rank = 0;  // 1-based
  PredictionSource source = PredictionSource::gnn;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// Top-k candidates by descending score, ties by ascending pk. Candidates whose
// pk is listed in `exclude` are skipped. Ranks start at `first_rank`.
std::vector<Prediction> rank_candidates(std::span<const double> scores, std::span<const std::string> pks,
                                        std::size_t k, PredictionSource source,
                                        std::span<const std::string> exclude = {}, int first_rank = 1);

}  // namespace relcat
