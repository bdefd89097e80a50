#include "relcat/prediction.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace relcat {

std::string_view to_string(PredictionSource source) {
  switch (source) {
    case PredictionSource::nn: return "nn";
    case PredictionSource::gnn: return "gnn";
    case PredictionSource::zero_shot: return "zero_shot";
  }
  return "unknown";
}

PredictionSource parse_source(std::string_view text) {
  if (text == "nn") return PredictionSource::nn;
  if (text == "gnn") return PredictionSource::gnn;
  if (text == "zero_shot") return PredictionSource::zero_shot;
  throw std::invalid_argument("unknown prediction source '" + std::string(text) + "'");
}

std::vector<Prediction> rank_candidates(std::span<const double> scores, std::span<const std::string> pks,
                                        std::size_t k, PredictionSource source,
                                        std::span<const std::string> exclude, int first_rank) {
  if (scores.size() != pks.size()) throw std::invalid_argument("rank_candidates: scores/pks size mismatch");
  std::vector<std::size_t> order;
  order.reserve(pks.size());
  for (std::size_t i = 0; i < pks.size(); ++i)
    if (std::find(exclude.begin(), exclude.end(), pks[i]) == exclude.end()) order.push_back(i);
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return pks[a] < pks[b];
  };
  const std::size_t n = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), better);
  std::vector<Prediction> out;
  out.reserve(n);
  for (std::size_t r = 0; r < n; ++r)
    out.push_back({pks[order[r]], scores[order[r]], first_rank + static_cast<int>(r), source});
  return out;
}

}  // namespace relcat
