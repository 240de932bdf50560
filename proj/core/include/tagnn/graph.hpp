#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tagnn/tensor.hpp"

namespace tagnn {

/// Directed weighted graph of one session prefix. Each consecutive click
/// pair contributes an edge; weights are occurrence counts normalized by
/// out-degree (a_out) resp. in-degree (a_in).
struct SessionGraph {
  std::vector<int> nodes;  // unique item indices, first-occurrence order
  std::vector<int> alias;  // position in the prefix -> slot in `nodes`
  Tensor a_out;            // [n,n]; row u, col v = weight of u->v
  Tensor a_in;             // [n,n]; row v, col u = weight of u->v
  int last_slot = -1;      // slot of the final prefix position

  int n() const { return static_cast<int>(nodes.size()); }
};

/// A graph padded to a fixed slot count so a batch shares tensor shapes.
/// Slots >= the real node count carry the reserved padding item index, an
/// all-zero adjacency row/column, and mask 0.
struct PaddedGraph {
  std::vector<int> node_ids;   // length max_n
  std::vector<uint8_t> mask;   // 1 for real slots
  Tensor a_out;                // [max_n, max_n]
  Tensor a_in;
  std::vector<int> alias;
  int last_slot = -1;

  int max_n() const { return static_cast<int>(node_ids.size()); }
};

SessionGraph build_graph(const std::vector<int>& prefix);

std::vector<PaddedGraph> pad_graphs(const std::vector<SessionGraph>& graphs, int max_n,
                                    int pad_index);

/// Edge-list text, one `u -> v : weight` line per outgoing edge. Debug aid.
std::string graph_edge_list(const SessionGraph& g);

}  // namespace tagnn
