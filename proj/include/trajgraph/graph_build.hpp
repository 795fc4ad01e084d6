#pragma once
// Sparse directed wiring of trajectory nodes. Node indices are 1-based in
// the edge list (matching the trajectory point index).
#include <cstdint>
#include <vector>

namespace trajgraph {

struct Edge {
  int src;
  int dst;
};

enum class Wiring { CausalGeometric, RandomRegular };

// Node i receives edges from i - floor(b_j), b_j = ratio^(j-1) geometric with
// b_1 = 1 and b_k = N-1, sources clamped at node 1, duplicates removed.
// Always a DAG (src < dst); node N receives an edge from node 1.
std::vector<Edge> build_causal_geometric(int n, int k);

// Every node gets in-degree exactly min(k, N-1); sources sampled uniformly
// without replacement from the other nodes. Cycles are allowed.
std::vector<Edge> build_random_regular(int n, int k, std::uint64_t seed);

// Test helpers over edge lists.
bool edges_are_dag(int n, const std::vector<Edge>& edges);
std::vector<int> in_degrees(int n, const std::vector<Edge>& edges);
// BFS hops from src to dst following edge direction; -1 when unreachable.
int shortest_path_hops(int n, const std::vector<Edge>& edges, int src, int dst);

}  // namespace trajgraph
