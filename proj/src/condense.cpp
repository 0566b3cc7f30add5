#include "csvgd/condense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csvgd/csv.hpp"
#include "csvgd/error.hpp"

namespace csvgd {

namespace {

// Rebuilds hidden layer `layer` so that new node i is old node src[i]
// (src[i] < 0 inserts an inert zero node).
NetGraph remap_layer(const NetGraph& g, std::size_t layer, const std::vector<std::ptrdiff_t>& src) {
  const auto& old_w = g.net.widths();
  std::vector<std::size_t> widths = old_w;
  widths[layer] = src.size();
  NetGraph out;
  out.net = LayeredNet(widths, g.net.activations(), g.net.nonneg_mask(), g.net.has_bias());
  out.active = g.active;
  out.origin = g.origin;
  out.active[layer].assign(src.size(), false);
  out.origin[layer].assign(src.size(), -1);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] < 0) continue;
    const auto s = static_cast<std::size_t>(src[i]);
    out.active[layer][i] = g.active[layer][s];
    out.origin[layer][i] = g.origin[layer][s];
  }
  for (std::size_t k = 0; k < g.net.num_links(); ++k) {
    for (std::size_t i = 0; i < widths[k + 1]; ++i) {
      std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i);
      if (k + 1 == layer) si = src[i];
      if (si < 0) continue;
      for (std::size_t j = 0; j < widths[k]; ++j) {
        std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j);
        if (k == layer) sj = src[j];
        if (sj < 0) continue;
        out.net.weight(k, i, j) =
            g.net.weight(k, static_cast<std::size_t>(si), static_cast<std::size_t>(sj));
      }
      if (g.net.has_bias()) out.net.bias(k, i) = g.net.bias(k, static_cast<std::size_t>(si));
    }
  }
  return out;
}

// Removes a zero-width hidden layer whose activation is the identity by
// merging its two links into one all-zero link.
NetGraph collapse_layer(const NetGraph& g, std::size_t layer) {
  const auto& w = g.net.widths();
  if (g.net.activation(layer - 1) != Activation::kIdentity) {
    throw DomainError("hidden layer " + std::to_string(layer) +
                      " lost every node and its activation is not the identity; the network "
                      "cannot be collapsed");
  }
  std::vector<std::size_t> widths;
  std::vector<Activation> acts;
  std::vector<bool> nonneg;
  for (std::size_t l = 0; l < w.size(); ++l) {
    if (l != layer) widths.push_back(w[l]);
  }
  for (std::size_t k = 0; k < g.net.num_links(); ++k) {
    if (k + 1 == layer) continue;
    acts.push_back(g.net.activation(k));
    nonneg.push_back(g.net.nonneg(k));
  }
  NetGraph out;
  out.net = LayeredNet(widths, acts, nonneg, g.net.has_bias());
  for (std::size_t l = 0; l < w.size(); ++l) {
    if (l == layer) continue;
    out.active.push_back(g.active[l]);
    out.origin.push_back(g.origin[l]);
  }
  for (std::size_t k = 0, nk = 0; k < g.net.num_links(); ++k) {
    if (k + 1 == layer) continue;
    if (k != layer) {
      for (std::size_t i = 0; i < w[k + 1]; ++i) {
        for (std::size_t j = 0; j < w[k]; ++j) out.net.weight(nk, i, j) = g.net.weight(k, i, j);
      }
    }
    if (g.net.has_bias()) {
      for (std::size_t i = 0; i < w[k + 1]; ++i) out.net.bias(nk, i) = g.net.bias(k, i);
    }
    ++nk;
  }
  return out;
}

std::vector<bool> edge_pattern(const NetGraph& g) {
  std::vector<bool> p(g.net.num_params());
  const auto params = g.net.params();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = params[i] != 0.0;
  return p;
}

}  // namespace

std::size_t NetGraph::active_count(std::size_t layer) const {
  return static_cast<std::size_t>(std::count(active[layer].begin(), active[layer].end(), true));
}

NetGraph make_graph(const LayeredNet& net) {
  NetGraph g;
  g.net = net;
  for (std::size_t w : net.widths()) {
    g.active.emplace_back(w, true);
    std::vector<std::ptrdiff_t> o(w);
    std::iota(o.begin(), o.end(), 0);
    g.origin.push_back(std::move(o));
  }
  return g;
}

NetGraph prune(NetGraph g, double epsilon) {
  if (epsilon < 0.0) throw DomainError("prune threshold must be non-negative");
  auto& net = g.net;
  const auto& w = net.widths();
  for (std::size_t k = 0; k < net.num_links(); ++k) {
    for (std::size_t i = 0; i < w[k + 1]; ++i) {
      for (std::size_t j = 0; j < w[k]; ++j) {
        if (std::abs(net.weight(k, i, j)) < epsilon) net.weight(k, i, j) = 0.0;
      }
      if (net.has_bias() && std::abs(net.bias(k, i)) < epsilon) net.bias(k, i) = 0.0;
    }
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t l = 1; l + 1 < w.size(); ++l) {
      for (std::size_t n = 0; n < w[l]; ++n) {
        if (!g.active[l][n]) continue;
        // A node with no input still emits activation(0); softplus gives a
        // constant ln 2 that the next layer sees, so it only dies with its
        // outgoing edges.
        bool has_in = net.activation(l - 1) == Activation::kSoftplus ||
                      (net.has_bias() && net.bias(l - 1, n) != 0.0);
        for (std::size_t j = 0; j < w[l - 1] && !has_in; ++j) has_in = net.weight(l - 1, n, j) != 0.0;
        bool has_out = false;
        for (std::size_t i = 0; i < w[l + 1] && !has_out; ++i) has_out = net.weight(l, i, n) != 0.0;
        if (has_in && has_out) continue;
        g.active[l][n] = false;
        for (std::size_t j = 0; j < w[l - 1]; ++j) net.weight(l - 1, n, j) = 0.0;
        if (net.has_bias()) net.bias(l - 1, n) = 0.0;
        for (std::size_t i = 0; i < w[l + 1]; ++i) net.weight(l, i, n) = 0.0;
        changed = true;
      }
    }
  }
  return g;
}

std::vector<double> importance(const NetGraph& g, std::size_t layer) {
  if (!g.is_hidden(layer)) {
    throw DomainError("importance is only defined for hidden layers");
  }
  const auto& w = g.net.widths();
  const bool signed_sum = g.net.nonneg(layer);
  std::vector<double> s(w[layer], 0.0);
  for (std::size_t j = 0; j < w[layer]; ++j) {
    if (!g.active[layer][j]) continue;
    for (std::size_t i = 0; i < w[layer + 1]; ++i) {
      const double v = g.net.weight(layer, i, j);
      s[j] += signed_sum ? v : std::abs(v);
    }
  }
  return s;
}

NetGraph sort_nodes(NetGraph g) {
  for (std::size_t l = 1; l + 1 < g.num_layers(); ++l) {
    const auto s = importance(g, l);
    std::vector<std::ptrdiff_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::ptrdiff_t a, std::ptrdiff_t b) {
      const bool aa = g.active[l][static_cast<std::size_t>(a)];
      const bool ab = g.active[l][static_cast<std::size_t>(b)];
      if (aa != ab) return aa;
      if (!aa) return false;
      return s[static_cast<std::size_t>(a)] > s[static_cast<std::size_t>(b)];
    });
    bool identity = true;
    for (std::size_t i = 0; i < order.size(); ++i) identity &= order[i] == static_cast<std::ptrdiff_t>(i);
    if (!identity) g = remap_layer(g, l, order);
  }
  return g;
}

GraphTemplate common_template(std::span<const NetGraph> graphs) {
  if (graphs.empty()) throw ShapeError("cannot build a template from an empty ensemble");
  const auto& first = graphs.front().net.widths();
  GraphTemplate t;
  t.widths.assign(first.size(), 0);
  t.widths.front() = first.front();
  t.widths.back() = first.back();
  for (const auto& g : graphs) {
    const auto& w = g.net.widths();
    if (w.size() != first.size() || w.front() != first.front() || w.back() != first.back()) {
      throw ShapeError("ensemble graphs differ in layer count or input/output width");
    }
    for (std::size_t l = 1; l + 1 < w.size(); ++l) {
      t.widths[l] = std::max(t.widths[l], g.active_count(l));
    }
  }
  return t;
}

std::vector<NetGraph> reconcile(std::vector<NetGraph> graphs, const GraphTemplate& tmpl) {
  for (auto& g : graphs) {
    if (g.num_layers() != tmpl.widths.size()) throw ShapeError("graph does not fit the template");
    for (std::size_t l = 1; l + 1 < g.num_layers(); ++l) {
      const std::size_t target = tmpl.widths[l];
      std::vector<std::ptrdiff_t> src;
      for (std::size_t n = 0; n < g.active[l].size(); ++n) {
        if (g.active[l][n]) src.push_back(static_cast<std::ptrdiff_t>(n));
      }
      if (src.size() > target) {
        throw ShapeError("layer " + std::to_string(l) + " has " + std::to_string(src.size()) +
                         " active nodes, template allows " + std::to_string(target));
      }
      src.resize(target, -1);
      bool identity = src.size() == g.active[l].size();
      for (std::size_t i = 0; i < src.size() && identity; ++i) {
        identity = src[i] == static_cast<std::ptrdiff_t>(i);
      }
      if (!identity) g = remap_layer(g, l, src);
    }
  }
  return graphs;
}

CondenseResult condense_graphs(const std::vector<LayeredNet>& nets, double epsilon) {
  CondenseResult r;
  for (const auto& n : nets) r.graphs.push_back(make_graph(n));
  std::vector<std::vector<bool>> patterns;
  bool first = true;
  while (true) {
    ++r.passes;
    for (auto& g : r.graphs) g = sort_nodes(prune(std::move(g), epsilon));
    GraphTemplate t = common_template(r.graphs);
    r.graphs = reconcile(std::move(r.graphs), t);
    for (std::size_t l = t.widths.size() - 1; l-- > 1;) {
      if (t.widths[l] != 0) continue;
      for (auto& g : r.graphs) g = collapse_layer(g, l);
      t.widths.erase(t.widths.begin() + static_cast<std::ptrdiff_t>(l));
    }
    std::vector<std::vector<bool>> now;
    for (const auto& g : r.graphs) now.push_back(edge_pattern(g));
    const bool stable = !first && t == r.tmpl && now == patterns;
    r.tmpl = std::move(t);
    patterns = std::move(now);
    first = false;
    if (stable) break;
  }
  return r;
}

Ensemble condense(const Ensemble& ensemble, double epsilon, bool freeze_zeros) {
  if (!ensemble.shape) throw ShapeError("condensation needs a network ensemble");
  validate(ensemble);
  const LayeredNet& old_shape = *ensemble.shape;
  std::vector<LayeredNet> nets;
  for (const auto& p : ensemble.particles) nets.push_back(old_shape.with_params(p.values));
  CondenseResult r = condense_graphs(nets, epsilon);

  Ensemble out;
  out.iteration = ensemble.iteration;
  out.stage = ensemble.stage;
  out.rng = ensemble.rng;
  const LayeredNet& new_shape = r.graphs.front().net;
  out.shape = new_shape.with_params(std::vector<double>(new_shape.num_params(), 0.0));
  const bool collapsed = new_shape.widths().size() != old_shape.widths().size();

  for (std::size_t a = 0; a < r.graphs.size(); ++a) {
    const NetGraph& g = r.graphs[a];
    out.particles.push_back(g.net.flatten());

    // src[p] = old parameter index feeding new parameter p, or -1.
    std::vector<std::ptrdiff_t> src(new_shape.num_params(), -1);
    if (!collapsed) {
      const auto& w = new_shape.widths();
      for (std::size_t k = 0; k < new_shape.num_links(); ++k) {
        for (std::size_t i = 0; i < w[k + 1]; ++i) {
          const auto oi = g.origin[k + 1][i];
          if (oi < 0) continue;
          for (std::size_t j = 0; j < w[k]; ++j) {
            const auto oj = g.origin[k][j];
            if (oj < 0) continue;
            src[new_shape.weight_offset(k) + i * w[k] + j] = static_cast<std::ptrdiff_t>(
                old_shape.weight_offset(k) + static_cast<std::size_t>(oi) * old_shape.widths()[k] +
                static_cast<std::size_t>(oj));
          }
          if (new_shape.has_bias()) {
            src[new_shape.bias_offset(k) + i] =
                static_cast<std::ptrdiff_t>(old_shape.bias_offset(k) + static_cast<std::size_t>(oi));
          }
        }
      }
    }

    const auto& values = out.particles.back().values;
    if (freeze_zeros || !ensemble.frozen.empty()) {
      std::vector<std::uint8_t> f(values.size(), 0);
      for (std::size_t p = 0; p < values.size(); ++p) {
        if (freeze_zeros && values[p] == 0.0 && new_shape.is_weight_param(p)) f[p] = 1;
        if (!ensemble.frozen.empty() && src[p] >= 0) {
          f[p] |= ensemble.frozen[a][static_cast<std::size_t>(src[p])];
        }
        if (src[p] < 0 && values[p] == 0.0 && freeze_zeros) f[p] = 1;
      }
      out.frozen.push_back(std::move(f));
    }
    if (!ensemble.grad_sq_sum.empty() && !collapsed) {
      std::vector<double> s(values.size(), 0.0);
      for (std::size_t p = 0; p < values.size(); ++p) {
        if (src[p] >= 0) s[p] = ensemble.grad_sq_sum[a][static_cast<std::size_t>(src[p])];
      }
      out.grad_sq_sum.push_back(std::move(s));
    }
  }
  if (!ensemble.grad_sq_sum.empty() && collapsed) out.grad_sq_sum.clear();
  return out;
}

Eigen::MatrixXd distance_matrix(const Ensemble& ensemble) {
  validate(ensemble);
  const std::size_t n = ensemble.size();
  std::vector<bool> is_weight(ensemble.dim(), true);
  if (ensemble.shape) {
    for (std::size_t p = 0; p < is_weight.size(); ++p) is_weight[p] = ensemble.shape->is_weight_param(p);
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto& x = ensemble.particles[a].values;
      const auto& y = ensemble.particles[b].values;
      double s = 0.0;
      for (std::size_t p = 0; p < x.size(); ++p) {
        if (is_weight[p]) s += (x[p] - y[p]) * (x[p] - y[p]);
      }
      const auto ia = static_cast<Eigen::Index>(a);
      const auto ib = static_cast<Eigen::Index>(b);
      d(ia, ib) = d(ib, ia) = std::sqrt(s);
    }
  }
  return d;
}

void write_graph_dump(const NetGraph& g, const std::filesystem::path& nodes_path,
                      const std::filesystem::path& edges_path) {
  CsvWriter nodes(nodes_path, {"layer", "index", "importance", "active"});
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    std::vector<double> s;
    if (g.is_hidden(l)) s = importance(g, l);
    for (std::size_t n = 0; n < g.net.widths()[l]; ++n) {
      nodes << l << n;
      if (s.empty()) {
        nodes.skip();
      } else {
        nodes << s[n];
      }
      nodes << (g.active[l][n] ? 1 : 0);
      nodes.end_row();
    }
  }
  CsvWriter edges(edges_path, {"from_layer", "from_index", "to_layer", "to_index", "weight"});
  const auto& w = g.net.widths();
  for (std::size_t k = 0; k < g.net.num_links(); ++k) {
    for (std::size_t i = 0; i < w[k + 1]; ++i) {
      for (std::size_t j = 0; j < w[k]; ++j) {
        const double v = g.net.weight(k, i, j);
        if (v == 0.0) continue;
        edges << k << j << (k + 1) << i << v;
        edges.end_row();
      }
    }
  }
}

}  // namespace csvgd
