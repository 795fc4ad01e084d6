#include <trajgraph/graph_build.hpp>

#include <trajgraph/rng.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <unordered_set>

namespace trajgraph {

std::vector<Edge> build_causal_geometric(int n, int k) {
  if (n < 1 || k < 1) throw std::domain_error("build_causal_geometric: n,k >= 1");
  std::vector<Edge> edges;
  if (n < 2) return edges;
  std::vector<long> offsets;
  offsets.reserve(k);
  if (k == 1) {
    offsets.push_back(1);
  } else {
    const double ratio = std::pow(static_cast<double>(n - 1), 1.0 / (k - 1));
    double b = 1.0;
    for (int j = 0; j < k; ++j) {
      // +1e-9 absorbs pow() round-off so b_k floors to exactly N-1.
      offsets.push_back(static_cast<long>(std::floor(b + 1e-9)));
      b *= ratio;
    }
  }
  std::vector<int> srcs;
  for (int i = 2; i <= n; ++i) {
    srcs.clear();
    for (long off : offsets) {
      int s = static_cast<int>(std::max<long>(1, i - off));
      if (s < i) srcs.push_back(s);
    }
    std::sort(srcs.begin(), srcs.end());
    srcs.erase(std::unique(srcs.begin(), srcs.end()), srcs.end());
    for (int s : srcs) edges.push_back({s, i});
  }
  return edges;
}

std::vector<Edge> build_random_regular(int n, int k, std::uint64_t seed) {
  if (n < 2) throw std::domain_error("build_random_regular: n >= 2");
  const int deg = std::min(k, n - 1);
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n) * deg);
  std::unordered_set<int> chosen;
  std::vector<int> order;
  for (int dst = 1; dst <= n; ++dst) {
    Rng rng = stream_rng(seed, 0x6e0dU, static_cast<std::uint64_t>(dst));
    // Floyd sampling of `deg` distinct values from {1..n-1}; value v maps to
    // source v, with values >= dst shifted up by one to skip the self-loop.
    chosen.clear();
    order.clear();
    for (int j = n - deg; j <= n - 1; ++j) {
      int t = static_cast<int>(rng.uniform_int(1, j));
      int v = chosen.count(t) ? j : t;
      chosen.insert(v);
      order.push_back(v);
    }
    for (int v : order) {
      int s = v >= dst ? v + 1 : v;
      edges.push_back({s, dst});
    }
  }
  return edges;
}

bool edges_are_dag(int n, const std::vector<Edge>& edges) {
  // Kahn topological sort; true when all nodes drain.
  std::vector<int> indeg(n + 1, 0);
  std::vector<std::vector<int>> out(n + 1);
  for (const auto& e : edges) {
    if (e.src < 1 || e.src > n || e.dst < 1 || e.dst > n) return false;
    indeg[e.dst]++;
    out[e.src].push_back(e.dst);
  }
  std::deque<int> q;
  for (int i = 1; i <= n; ++i)
    if (indeg[i] == 0) q.push_back(i);
  int seen = 0;
  while (!q.empty()) {
    int u = q.front();
    q.pop_front();
    ++seen;
    for (int v : out[u])
      if (--indeg[v] == 0) q.push_back(v);
  }
  return seen == n;
}

std::vector<int> in_degrees(int n, const std::vector<Edge>& edges) {
  std::vector<int> deg(n + 1, 0);
  for (const auto& e : edges) deg[e.dst]++;
  return deg;
}

int shortest_path_hops(int n, const std::vector<Edge>& edges, int src, int dst) {
  std::vector<std::vector<int>> out(n + 1);
  for (const auto& e : edges) out[e.src].push_back(e.dst);
  std::vector<int> dist(n + 1, -1);
  std::deque<int> q{src};
  dist[src] = 0;
  while (!q.empty()) {
    int u = q.front();
    q.pop_front();
    if (u == dst) return dist[u];
    for (int v : out[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push_back(v);
      }
  }
  return dist[dst];
}

}  // namespace trajgraph
