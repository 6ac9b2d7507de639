#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "gmc/tensor.hpp"

namespace gmc {

/// Index of the row of `bank` closest to `query` in Euclidean distance.
/// Ties go to the lowest index.
inline std::size_t nearest_index(const Vector& query, std::span<const Vector> bank) {
  if (bank.empty()) throw Error("nearest_neighbor: empty bank");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double d = squared_distance(query.span(), bank[i].span());
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

template <typename Payload>
const Payload& nearest_neighbor(const Vector& query,
                                std::span<const std::pair<Vector, Payload>> bank) {
  if (bank.empty()) throw Error("nearest_neighbor: empty bank");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double d = squared_distance(query.span(), bank[i].first.span());
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return bank[best].second;
}

}  // namespace gmc
