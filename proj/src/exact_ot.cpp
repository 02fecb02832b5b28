#include "invot/exact_ot.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

namespace invot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFlowEps = 1e-15;

bool is_uniform(const Histogram& h) {
  const double target = 1.0 / static_cast<double>(h.size());
  return (h.mass().array() - target).abs().maxCoeff() <= 1e-15;
}

Coupling enumerate_permutations(const CostMatrix& c, const Histogram& p, const Histogram& q) {
  const Index n = c.rows();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::vector<Index> best = perm;
  double best_cost = kInf;
  do {
    double cost = 0.0;
    for (Index i = 0; i < n; ++i) cost += c.cost(i, perm[static_cast<std::size_t>(i)]);
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  Matrix gamma = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) gamma(i, best[static_cast<std::size_t>(i)]) = 1.0 / n;
  return Coupling(std::move(gamma), p, q);
}

struct Edge {
  int to;
  double cap;
  double cost;
};

// Successive shortest paths with Bellman-Ford on the residual graph
// source -> rows -> columns -> sink.
Coupling min_cost_flow(const CostMatrix& c, const Histogram& p, const Histogram& q) {
  const int n = static_cast<int>(c.rows());
  const int m = static_cast<int>(c.cols());
  const int source = n + m;
  const int sink = n + m + 1;
  const int nodes = n + m + 2;
  std::vector<Edge> edges;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(nodes));
  auto add_edge = [&](int from, int to, double cap, double cost) {
    adj[static_cast<std::size_t>(from)].push_back(static_cast<int>(edges.size()));
    edges.push_back({to, cap, cost});
    adj[static_cast<std::size_t>(to)].push_back(static_cast<int>(edges.size()));
    edges.push_back({from, 0.0, -cost});
  };
  for (int i = 0; i < n; ++i) add_edge(source, i, p[i], 0.0);
  std::vector<std::vector<int>> cell(static_cast<std::size_t>(n), std::vector<int>(m));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      cell[i][j] = static_cast<int>(edges.size());
      add_edge(i, n + j, kInf, c.cost(i, j));
    }
  }
  for (int j = 0; j < m; ++j) add_edge(n + j, sink, q[j], 0.0);

  double remaining = 1.0;
  for (int round = 0; round < 4 * nodes * nodes && remaining > 1e-14; ++round) {
    std::vector<double> dist(static_cast<std::size_t>(nodes), kInf);
    std::vector<int> via(static_cast<std::size_t>(nodes), -1);
    dist[source] = 0.0;
    for (int pass = 0; pass < nodes; ++pass) {
      bool changed = false;
      for (int u = 0; u < nodes; ++u) {
        if (dist[u] == kInf) continue;
        for (int e : adj[u]) {
          const Edge& edge = edges[e];
          if (edge.cap > kFlowEps && dist[u] + edge.cost < dist[edge.to] - 1e-15) {
            dist[edge.to] = dist[u] + edge.cost;
            via[edge.to] = e;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    if (dist[sink] == kInf) break;
    double push = remaining;
    for (int v = sink; v != source; v = edges[via[v] ^ 1].to) push = std::min(push, edges[via[v]].cap);
    for (int v = sink; v != source; v = edges[via[v] ^ 1].to) {
      edges[via[v]].cap -= push;
      edges[via[v] ^ 1].cap += push;
    }
    remaining -= push;
  }
  Matrix gamma(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) gamma(i, j) = edges[cell[i][j] ^ 1].cap;
  return Coupling(std::move(gamma), p, q, 1e-9);
}

}  // namespace

Coupling exact_ot_small(const CostMatrix& c, const Histogram& p, const Histogram& q) {
  c.validate();
  if (c.rows() != p.size() || c.cols() != q.size()) {
    throw InvalidInput("cost matrix and marginal shapes differ");
  }
  if (c.rows() * c.cols() > kExactSmallMaxCells) {
    throw InvalidInput("exact_ot_small supports at most " + std::to_string(kExactSmallMaxCells) +
                       " cells, got " + std::to_string(c.rows() * c.cols()));
  }
  if (c.rows() == c.cols() && is_uniform(p) && is_uniform(q)) return enumerate_permutations(c, p, q);
  return min_cost_flow(c, p, q);
}

std::vector<Index> exact_assignment(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw InvalidInput("assignment needs a square cost matrix");
  require_finite(cost, "assignment cost");
  const Index n = cost.rows();
  // 1-based potentials u (rows), v (columns); match[j] = row assigned to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Index> match(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const Index i0 = match[j0];
      double delta = kInf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> assignment(static_cast<std::size_t>(n));
  for (Index j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(match[j] - 1)] = j - 1;
  return assignment;
}

Coupling permutation_coupling(const std::vector<Index>& assignment) {
  const Index n = static_cast<Index>(assignment.size());
  Matrix gamma = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) gamma(i, assignment[static_cast<std::size_t>(i)]) = 1.0 / n;
  return Coupling(std::move(gamma), Histogram::uniform(n), Histogram::uniform(n));
}

}  // namespace invot
