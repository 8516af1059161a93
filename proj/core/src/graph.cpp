#include "stkd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string>

#include "stkd/error.hpp"
#include "stkd/rng.hpp"
#include "text_util.hpp"

namespace stkd {

Graph::Graph(std::size_t n_nodes, std::vector<Edge> edges) : n_nodes_(n_nodes) {
  std::map<std::pair<std::size_t, std::size_t>, double> merged;
  for (const auto& e : edges) {
    if (e.src >= n_nodes || e.dst >= n_nodes) {
      throw DataError("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                      ") references a node outside [0, " + std::to_string(n_nodes) + ")");
    }
    if (!std::isfinite(e.weight) || e.weight < 0.0) {
      throw DataError("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                      ") has invalid weight " + std::to_string(e.weight));
    }
    if (e.src == e.dst) {
      ++dropped_self_loops_;
      continue;
    }
    const auto key = std::minmax(e.src, e.dst);
    auto [it, inserted] = merged.emplace(key, e.weight);
    if (!inserted) it->second = std::max(it->second, e.weight);
  }
  edges_.reserve(merged.size());
  for (const auto& [key, w] : merged) edges_.push_back(Edge{key.first, key.second, w});
}

NormalizedAdjacency NormalizedAdjacency::identity(std::size_t n) {
  NormalizedAdjacency adj;
  adj.n = n;
  adj.row_offsets.resize(n + 1);
  std::iota(adj.row_offsets.begin(), adj.row_offsets.end(), std::size_t{0});
  adj.cols.resize(n);
  std::iota(adj.cols.begin(), adj.cols.end(), std::size_t{0});
  adj.values.assign(n, 1.0);
  return adj;
}

std::vector<double> NormalizedAdjacency::dense() const {
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto k = row_offsets[i]; k < row_offsets[i + 1]; ++k) out[i * n + cols[k]] = values[k];
  }
  return out;
}

NormalizedAdjacency symmetric_normalize(const Graph& g) {
  const auto n = g.n_nodes();
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  std::vector<double> degree(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) rows[i].emplace_back(i, 1.0);
  for (const auto& e : g.edges()) {
    if (e.weight < 0.0) throw DataError("negative edge weight");
    rows[e.src].emplace_back(e.dst, e.weight);
    rows[e.dst].emplace_back(e.src, e.weight);
    degree[e.src] += e.weight;
    degree[e.dst] += e.weight;
  }
  NormalizedAdjacency adj;
  adj.n = n;
  adj.row_offsets.reserve(n + 1);
  adj.row_offsets.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = rows[i];
    std::sort(row.begin(), row.end());
    for (const auto& [j, w] : row) {
      adj.cols.push_back(j);
      adj.values.push_back(w / (std::sqrt(degree[i]) * std::sqrt(degree[j])));
    }
    adj.row_offsets.push_back(adj.cols.size());
  }
  return adj;
}

Tensor spmm(Tape& tape, const NormalizedAdjacency& adj, const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("spmm: expected [n x f] or [S x n x f], got " + shape_str(x.shape()));
  }
  const std::size_t slices = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t n = x.rank() == 3 ? x.dim(1) : x.dim(0);
  const std::size_t f = x.rank() == 3 ? x.dim(2) : x.dim(1);
  if (n != adj.n) {
    throw DimensionError("spmm: adjacency has " + std::to_string(adj.n) + " nodes, input " +
                         shape_str(x.shape()));
  }
  // Shared by forward and backward; Â is symmetric so the adjoint is Â again.
  auto apply = [&adj, slices, n, f](const double* in, double* out) {
    for (std::size_t s = 0; s < slices; ++s) {
      const double* src = in + s * n * f;
      double* dst = out + s * n * f;
      for (std::size_t i = 0; i < n; ++i) {
        double* o = dst + i * f;
        for (auto k = adj.row_offsets[i]; k < adj.row_offsets[i + 1]; ++k) {
          const double w = adj.values[k];
          const double* r = src + adj.cols[k] * f;
          for (std::size_t c = 0; c < f; ++c) o[c] += w * r[c];
        }
      }
    }
  };
  Tensor y = Tensor::zeros(x.shape());
  apply(x.data().data(), y.mutable_data().data());
  return tape.record(y, {x}, [x, y, apply]() mutable {
    apply(y.grad().data(), x.grad_buffer().data());
  });
}

Graph erdos_renyi_geometric(std::size_t n, double radius, std::uint64_t seed) {
  if (n < 2) throw ParameterError("geometric graph needs n >= 2, got " + std::to_string(n));
  if (!(radius > 0.0 && radius <= 1.0)) {
    throw ParameterError("geometric graph radius must be in (0, 1], got " + std::to_string(radius));
  }
  Rng rng(seed, /*stream=*/0x67656f);
  std::vector<std::pair<double, double>> pos(n);
  for (auto& p : pos) {
    p.first = rng.uniform();
    p.second = rng.uniform();
  }
  const double sigma = radius / 2.0;
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = pos[i].first - pos[j].first;
      const double dy = pos[i].second - pos[j].second;
      const double d2 = dx * dx + dy * dy;
      if (std::sqrt(d2) < radius) edges.push_back(Edge{i, j, std::exp(-d2 / (sigma * sigma))});
    }
  }
  return Graph(n, std::move(edges));
}

Graph complete_graph(std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back(Edge{i, j, 1.0});
  }
  return Graph(n, std::move(edges));
}

std::size_t connected_components(const Graph& g) {
  std::vector<std::size_t> parent(g.n_nodes());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&parent](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  std::size_t components = g.n_nodes();
  for (const auto& e : g.edges()) {
    const auto a = find(e.src), b = find(e.dst);
    if (a != b) {
      parent[std::max(a, b)] = std::min(a, b);
      --components;
    }
  }
  return components;
}

double spectral_radius(const NormalizedAdjacency& adj, std::size_t iterations) {
  std::vector<double> v(adj.n), w(adj.n);
  Rng rng(0x5eed);
  for (auto& x : v) x = rng.uniform(0.5, 1.5);
  double lambda = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < adj.n; ++i) {
      for (auto k = adj.row_offsets[i]; k < adj.row_offsets[i + 1]; ++k) {
        w[i] += adj.values[k] * v[adj.cols[k]];
      }
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    lambda = norm;
    for (std::size_t i = 0; i < adj.n; ++i) v[i] = w[i] / norm;
  }
  return lambda;
}

Graph load_edge_csv(const std::filesystem::path& path, std::size_t n_nodes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge list " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  const auto header = detail::split_csv(line);
  if (header.size() != 3 || header[0] != "src" || header[1] != "dst" || header[2] != "weight") {
    throw FormatError(path.string() + ":1: expected header `src,dst,weight`");
  }
  std::vector<Edge> edges;
  std::size_t max_id = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != 3) throw FormatError(where + ": expected 3 fields");
    const auto src = detail::parse_int<std::size_t>(cells[0]);
    const auto dst = detail::parse_int<std::size_t>(cells[1]);
    const auto w = detail::parse_double(cells[2]);
    if (!src || !dst || !w) throw FormatError(where + ": malformed edge");
    if (*w < 0.0) throw DataError(where + ": negative weight");
    max_id = std::max({max_id, *src, *dst});
    edges.push_back(Edge{*src, *dst, *w});
  }
  if (n_nodes == 0) n_nodes = edges.empty() ? 0 : max_id + 1;
  return Graph(n_nodes, std::move(edges));
}

void save_edge_csv(const Graph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write edge list " + path.string());
  out << "src,dst,weight\n";
  for (const auto& e : g.edges()) {
    out << e.src << ',' << e.dst << ',' << detail::format_double(e.weight) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace stkd
