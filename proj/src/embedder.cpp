#include "lgsgm/embedder.hpp"

#include <cmath>

namespace lgsgm {

ReadoutParams ReadoutParams::create(std::size_t hidden_dim, ParameterSet& registry, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  ReadoutParams p;
  p.node_weight = registry.add("readout.node_weight", uniform_tensor(hidden_dim, hidden_dim, bound, rng));
  p.edge_weight = registry.add("readout.edge_weight", uniform_tensor(hidden_dim, hidden_dim, bound, rng));
  return p;
}

num::Tensor attention_pool(const num::Tensor& items, const num::Tensor& weight) {
  const std::size_t d = weight.rows();
  if (items.cols() != d || weight.cols() != d) {
    throw DimensionError("attention_pool: items " + num::shape_str(items.shape()) + " vs weight " +
                         num::shape_str(weight.shape()));
  }
  if (items.rows() == 0) return num::Tensor::zeros(1, d);
  // Row-vector form of W * mean: mean^T W^T.
  const num::Tensor context = num::relu(num::matmul(num::mean_rows(items), num::transpose(weight)));
  const num::Tensor attention = num::sigmoid(num::matmul(items, num::transpose(context)));  // N x 1
  return num::sum_rows(num::scale_rows(items, attention));
}

num::Tensor embed_graph(const FeatureGraph& g, const ReadoutParams& params) {
  if (g.num_nodes() == 0) throw ContractError("embed_graph: graph has no nodes");
  const num::Tensor halves[] = {attention_pool(g.nodes, params.node_weight),
                                attention_pool(g.edges, params.edge_weight)};
  return num::concat_cols(halves);
}

}  // namespace lgsgm
