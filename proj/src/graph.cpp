#include "tsgcn/graph.hpp"

#include <algorithm>
#include <cmath>

namespace tsgcn {

SkeletonGraph::SkeletonGraph(JointLayout layout) : layout_(std::move(layout)) {
  layout_.validate(/*require_connected=*/false);
  neighbor_sets_.resize(layout_.joint_count);
  for (std::size_t v = 0; v < layout_.joint_count; ++v) neighbor_sets_[v].push_back(v);
  for (auto [a, b] : layout_.edges) {
    neighbor_sets_[a].push_back(b);
    neighbor_sets_[b].push_back(a);
  }
  for (auto& s : neighbor_sets_) std::sort(s.begin(), s.end());
}

SkeletonGraph build_graph(const JointLayout& layout) { return SkeletonGraph(layout); }

AdjacencyMatrix adjacency(const SkeletonGraph& graph) {
  const std::size_t V = graph.size();
  AdjacencyMatrix adj{Tensor({V, V}), Tensor()};
  for (auto [a, b] : graph.layout().edges) {
    adj.raw(a, b) = 1.0;
    adj.raw(b, a) = 1.0;
  }
  return adj;
}

AdjacencyMatrix normalize_adjacency(AdjacencyMatrix adj) {
  const std::size_t V = adj.raw.dim(0);
  if (adj.raw.rank() != 2 || adj.raw.dim(1) != V) {
    throw ShapeError("normalize_adjacency: expected a square matrix, got " + to_string(adj.raw.shape()));
  }
  std::vector<double> inv_sqrt_deg(V);
  for (std::size_t i = 0; i < V; ++i) {
    double deg = 1.0;
    for (std::size_t j = 0; j < V; ++j) deg += adj.raw(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  adj.normalized = Tensor({V, V});
  for (std::size_t i = 0; i < V; ++i) {
    for (std::size_t j = 0; j < V; ++j) {
      const double a = adj.raw(i, j) + (i == j ? 1.0 : 0.0);
      adj.normalized(i, j) = a * inv_sqrt_deg[i] * inv_sqrt_deg[j];
    }
  }
  return adj;
}

Tensor normalized_adjacency(const JointLayout& layout) {
  return normalize_adjacency(adjacency(build_graph(layout))).normalized;
}

}  // namespace tsgcn
