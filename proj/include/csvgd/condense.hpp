#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "csvgd/ensemble.hpp"
#include "csvgd/net.hpp"

namespace csvgd {

/// A network viewed as a layered directed graph: nodes carry active flags
/// and the index they had in the network the graph was built from (-1 for
/// padding); edges are the weights of `net`.
struct NetGraph {
  LayeredNet net;
  std::vector<std::vector<bool>> active;
  std::vector<std::vector<std::ptrdiff_t>> origin;

  std::size_t num_layers() const { return net.widths().size(); }
  bool is_hidden(std::size_t layer) const { return layer > 0 && layer + 1 < num_layers(); }
  std::size_t active_count(std::size_t layer) const;
};

NetGraph make_graph(const LayeredNet& net);

/// Zero edges with |w| < epsilon, then repeatedly deactivate hidden nodes
/// lacking a nonzero outgoing edge, clearing their edges, until nothing
/// changes. A node without incoming edge (or bias) also dies when its
/// activation is the identity; a softplus node then emits the constant ln 2
/// and stays while it has outgoing edges, so outputs are preserved.
NetGraph prune(NetGraph graph, double epsilon);

/// Summed outgoing weight of every node in a hidden layer: signed on
/// matrices flagged nonneg, absolute otherwise. Inactive nodes score 0.
std::vector<double> importance(const NetGraph& graph, std::size_t layer);

/// Reorders every hidden layer: active nodes by descending importance
/// (stable), then inactive nodes in their current order. Adjacent matrices
/// are permuted consistently, so outputs are unchanged.
NetGraph sort_nodes(NetGraph graph);

/// Hidden widths are the maximum active count across the ensemble.
struct GraphTemplate {
  std::vector<std::size_t> widths;

  bool operator==(const GraphTemplate&) const = default;
};

GraphTemplate common_template(std::span<const NetGraph> graphs);

/// Embeds each graph into the template: active nodes first (in current
/// order), zero-weight padding after.
std::vector<NetGraph> reconcile(std::vector<NetGraph> graphs, const GraphTemplate& tmpl);

struct CondenseResult {
  std::vector<NetGraph> graphs;
  GraphTemplate tmpl;
  std::size_t passes = 0;
};

/// Prune / sort / template / reconcile until the template and every graph's
/// active-edge pattern stop changing. Hidden layers left with no active
/// node anywhere are removed when their activation is the identity;
/// otherwise DomainError.
CondenseResult condense_graphs(const std::vector<LayeredNet>& nets, double epsilon);

/// Rebuilds the ensemble on the condensed common template. Frozen flags and
/// optimizer state follow their coordinates through the permutation; when
/// freeze_zeros is set every exactly-zero weight becomes frozen.
Ensemble condense(const Ensemble& ensemble, double epsilon, bool freeze_zeros = false);

/// d(a, b) = sqrt(sum_l |W_l,a - W_l,b|_F^2) over weights only.
Eigen::MatrixXd distance_matrix(const Ensemble& ensemble);

/// nodes.csv (layer,index,importance,active) and edges.csv
/// (from_layer,from_index,to_layer,to_index,weight) for one graph.
void write_graph_dump(const NetGraph& graph, const std::filesystem::path& nodes_path,
                      const std::filesystem::path& edges_path);

}  // namespace csvgd
