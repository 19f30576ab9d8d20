#pragma once

// Pool-adjacent-violators for nondecreasing least-squares fits.

#include <cstddef>
#include <span>
#include <vector>

#include "cqpc/error.hpp"

namespace cqpc {

/// Weighted isotonic (nondecreasing) regression of `values`.
inline std::vector<double> isotonic_increasing(std::span<const double> values,
                                               std::span<const double> weights = {}) {
  if (!weights.empty() && weights.size() != values.size()) {
    throw InvalidArgument("isotonic: weights and values differ in length");
  }
  struct Block {
    double mean;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w > 0.0)) throw InvalidArgument("isotonic: weights must be positive");
    blocks.push_back({values[i], w, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
      Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      const double w_sum = prev.weight + top.weight;
      prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / w_sum;
      prev.weight = w_sum;
      prev.count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& b : blocks) out.insert(out.end(), b.count, b.mean);
  return out;
}

}  // namespace cqpc
