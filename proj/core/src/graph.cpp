#include "tagnn/graph.hpp"

#include <sstream>
#include <unordered_map>

#include "tagnn/error.hpp"

namespace tagnn {

SessionGraph build_graph(const std::vector<int>& prefix) {
  if (prefix.empty()) raise(ErrorKind::contract, "cannot build a session graph from an empty prefix");
  for (int item : prefix)
    if (item < 0)
      raise(ErrorKind::contract, "negative item index " + std::to_string(item) + " in prefix");

  SessionGraph g;
  std::unordered_map<int, int> slot_of;
  g.alias.reserve(prefix.size());
  for (int item : prefix) {
    auto [it, inserted] = slot_of.try_emplace(item, static_cast<int>(g.nodes.size()));
    if (inserted) g.nodes.push_back(item);
    g.alias.push_back(it->second);
  }
  g.last_slot = g.alias.back();

  const int n = g.n();
  std::vector<int> counts(static_cast<size_t>(n) * n, 0);
  for (size_t i = 1; i < prefix.size(); ++i)
    counts[static_cast<size_t>(g.alias[i - 1]) * n + g.alias[i]] += 1;

  std::vector<int> out_deg(n, 0), in_deg(n, 0);
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      const int c = counts[static_cast<size_t>(u) * n + v];
      out_deg[u] += c;
      in_deg[v] += c;
    }

  g.a_out = Tensor::zeros({n, n});
  g.a_in = Tensor::zeros({n, n});
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      const int c = counts[static_cast<size_t>(u) * n + v];
      if (c == 0) continue;
      g.a_out.at(u, v) = static_cast<float>(c) / static_cast<float>(out_deg[u]);
      g.a_in.at(v, u) = static_cast<float>(c) / static_cast<float>(in_deg[v]);
    }
  return g;
}

std::vector<PaddedGraph> pad_graphs(const std::vector<SessionGraph>& graphs, int max_n,
                                    int pad_index) {
  for (const SessionGraph& g : graphs)
    if (g.n() > max_n)
      raise(ErrorKind::contract, "pad_graphs target " + std::to_string(max_n) +
                                     " is smaller than a graph with " + std::to_string(g.n()) +
                                     " nodes");
  std::vector<PaddedGraph> out;
  out.reserve(graphs.size());
  for (const SessionGraph& g : graphs) {
    PaddedGraph p;
    p.node_ids.assign(static_cast<size_t>(max_n), pad_index);
    p.mask.assign(static_cast<size_t>(max_n), 0);
    const int n = g.n();
    for (int i = 0; i < n; ++i) {
      p.node_ids[i] = g.nodes[i];
      p.mask[i] = 1;
    }
    p.a_out = Tensor::zeros({max_n, max_n});
    p.a_in = Tensor::zeros({max_n, max_n});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        p.a_out.at(i, j) = g.a_out.at(i, j);
        p.a_in.at(i, j) = g.a_in.at(i, j);
      }
    p.alias = g.alias;
    p.last_slot = g.last_slot;
    out.push_back(std::move(p));
  }
  return out;
}

std::string graph_edge_list(const SessionGraph& g) {
  std::ostringstream os;
  for (int u = 0; u < g.n(); ++u)
    for (int v = 0; v < g.n(); ++v)
      if (g.a_out.at(u, v) != 0.0f)
        os << g.nodes[u] << " -> " << g.nodes[v] << " : " << g.a_out.at(u, v) << "\n";
  return os.str();
}

}  // namespace tagnn
