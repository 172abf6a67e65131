#pragma once

#include <vector>

#include "tsgcn/skeleton.hpp"
#include "tsgcn/tensor.hpp"

namespace tsgcn {

/// Skeleton graph with per-joint neighbor sets B(v) = {v} + direct neighbors.
class SkeletonGraph {
 public:
  /// Edges are validated (range, self-edges, duplicates); connectivity is not
  /// required here so that degenerate graphs can be built directly.
  explicit SkeletonGraph(JointLayout layout);

  const JointLayout& layout() const { return layout_; }
  std::size_t size() const { return layout_.joint_count; }
  /// Sorted neighbor set of joint v, including v itself.
  const std::vector<std::size_t>& neighbors(std::size_t v) const { return neighbor_sets_.at(v); }
  const std::vector<std::vector<std::size_t>>& neighbor_sets() const { return neighbor_sets_; }

 private:
  JointLayout layout_;
  std::vector<std::vector<std::size_t>> neighbor_sets_;
};

struct AdjacencyMatrix {
  Tensor raw;         // [V x V], 1 where joints share an edge, zero diagonal
  Tensor normalized;  // [V x V], D^-1/2 (raw + I) D^-1/2; empty until normalized
};

SkeletonGraph build_graph(const JointLayout& layout);

/// Binary adjacency (normalized part left empty).
AdjacencyMatrix adjacency(const SkeletonGraph& graph);

/// Symmetric degree normalization with self-loops. D is the degree matrix of
/// raw + I, so every degree is at least 1.
AdjacencyMatrix normalize_adjacency(AdjacencyMatrix adj);

/// Shorthand for normalize_adjacency(adjacency(build_graph(layout))).normalized.
Tensor normalized_adjacency(const JointLayout& layout);

}  // namespace tsgcn
