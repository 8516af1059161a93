#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "stkd/tensor.hpp"

namespace stkd {

struct Edge {
  std::size_t src;
  std::size_t dst;
  double weight;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected weighted road network. Each undirected edge is stored once
/// with src < dst; self-loops are never stored.
class Graph {
 public:
  Graph() = default;
  /// Validates ids and weights. Pairs given in both directions are merged
  /// keeping the larger weight; self-loops are dropped.
  Graph(std::size_t n_nodes, std::vector<Edge> edges);

  std::size_t n_nodes() const noexcept { return n_nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t dropped_self_loops() const noexcept { return dropped_self_loops_; }

 private:
  std::size_t n_nodes_ = 0;
  std::vector<Edge> edges_;
  std::size_t dropped_self_loops_ = 0;
};

/// Â = D^{-1/2} (A + I) D^{-1/2} in CSR form, D the degree matrix of A + I.
struct NormalizedAdjacency {
  std::size_t n = 0;
  std::vector<std::size_t> row_offsets;
  std::vector<std::size_t> cols;
  std::vector<double> values;

  static NormalizedAdjacency identity(std::size_t n);
  /// Row-major n x n copy.
  std::vector<double> dense() const;
  std::size_t nnz() const noexcept { return values.size(); }
};

NormalizedAdjacency symmetric_normalize(const Graph& g);

/// Â · X for X of shape [n x f], or per slice for [S x n x f]. Recorded on
/// the tape; the gradient uses Âᵀ = Â.
Tensor spmm(Tape& tape, const NormalizedAdjacency& adj, const Tensor& x);

/// Random geometric graph on the unit square: nodes uniform, edge (i, j)
/// iff dist < radius with weight exp(-dist² / σ²), σ = radius / 2.
Graph erdos_renyi_geometric(std::size_t n, double radius, std::uint64_t seed);

/// Every pair connected with unit weight.
Graph complete_graph(std::size_t n);

std::size_t connected_components(const Graph& g);

/// Largest |λ| of Â by power iteration (Â is symmetric, so this converges
/// to the spectral radius).
double spectral_radius(const NormalizedAdjacency& adj, std::size_t iterations = 500);

/// Edge-list CSV with header `src,dst,weight`. When n_nodes is zero the node
/// count is 1 + the largest id seen.
Graph load_edge_csv(const std::filesystem::path& path, std::size_t n_nodes = 0);
void save_edge_csv(const Graph& g, const std::filesystem::path& path);

}  // namespace stkd
