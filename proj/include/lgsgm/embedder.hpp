#pragma once

#include "lgsgm/params.hpp"
#include "lgsgm/visual_encoder.hpp"

namespace lgsgm {

// Multi-scale node attention readout, shared by both modalities.
struct ReadoutParams {
  num::Tensor node_weight;  // W_h, d x d
  num::Tensor edge_weight;  // W_r, d x d

  static ReadoutParams create(std::size_t hidden_dim, ParameterSet& registry, std::mt19937_64& rng);
};

// sum_n sigmoid(x_n . relu(W mean(x))) x_n over the rows x_n of `items`.
// Returns 1 x d; a zero row when `items` has no rows.
num::Tensor attention_pool(const num::Tensor& items, const num::Tensor& weight);

// [pool(nodes, W_h) | pool(edges, W_r)], 1 x 2d. ContractError when the
// graph has no nodes; an edgeless graph contributes a zero edge half.
num::Tensor embed_graph(const FeatureGraph& g, const ReadoutParams& params);

}  // namespace lgsgm
