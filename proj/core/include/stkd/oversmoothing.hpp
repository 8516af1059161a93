#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "stkd/graph.hpp"
#include "stkd/tensor.hpp"

namespace stkd {

struct DepthMad {
  std::size_t depth = 0;
  double mad = 0.0;
  std::size_t zero_rows = 0;
};

struct OversmoothingConfig {
  std::size_t history = 12;
  std::size_t hidden = 64;
  std::size_t kernel = 3;
};

/// Fixed normalized input window for a graph: the last `history` steps of a
/// synthetic series generated on it, z-scored by their own mean and std.
/// Shape [history x n x 1].
Tensor probe_window(const Graph& g, std::size_t history, std::uint64_t seed);

/// For each depth, builds an untrained teacher of that many blocks (sharing
/// per-block initialization across depths), runs one forward pass on the
/// probe window and reports the MAD of its final representation. Depth 0
/// reports the MAD of the raw input history per node.
std::vector<DepthMad> oversmoothing_study(std::span<const std::size_t> depths, const Graph& g,
                                          std::uint64_t seed, const OversmoothingConfig& cfg = {});

}  // namespace stkd
