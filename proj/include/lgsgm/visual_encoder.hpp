#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "lgsgm/graphdata.hpp"
#include "lgsgm/layers.hpp"

namespace lgsgm {

struct ModelDims {
  std::size_t word_dim = 16;    // label / word embedding width
  std::size_t image_dim = 32;   // region feature width
  std::size_t fused_dim = 32;   // fused node/edge feature width
  std::size_t hidden_dim = 24;  // GCN output and LSTM hidden width

  static ModelDims desk() { return {}; }
  static ModelDims full_scale() { return {300, 2048, 2048, 1024}; }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Nodes and edges carrying dense features. Edge m joins endpoints[m].first
// (subject) to endpoints[m].second (object).
struct FeatureGraph {
  num::Tensor nodes;  // N x d
  num::Tensor edges;  // M x d
  std::vector<std::pair<std::size_t, std::size_t>> endpoints;

  std::size_t num_nodes() const { return nodes.rows(); }
  std::size_t num_edges() const { return edges.rows(); }
};

struct GcnLayer {
  Mlp node;  // h_o -> h_o', applied to each node on its own
  Mlp edge;  // [h_subject, h_edge, h_object] -> h_edge'
};

struct GcnParams {
  std::vector<GcnLayer> layers;

  // Layer 0 maps in_dim -> out_dim, later layers out_dim -> out_dim.
  static GcnParams create(const std::string& name, std::size_t in_dim, std::size_t out_dim, std::size_t n_layers,
                          std::size_t mlp_depth, num::Activation activation, ParameterSet& registry,
                          std::mt19937_64& rng);
};

// One message-passing step. Each node is updated from its own feature only;
// each edge from the concatenation subject | edge | object of the previous
// layer's features.
FeatureGraph gcn_layer(const FeatureGraph& g, const GcnLayer& layer);
FeatureGraph run_gcn(FeatureGraph g, const GcnParams& gcn);

struct VisualConfig {
  ModelDims dims;
  std::size_t num_object_classes = 0;
  std::size_t num_predicate_classes = 0;
  std::size_t gcn_layers = 1;
  std::size_t mlp_depth = 1;
  num::Activation fuse_activation = num::Activation::kSwish;
  num::Activation gcn_activation = num::Activation::kSwish;
  double dropout = 0.3;
  bool batch_norm = true;
};

struct VisualParams {
  VisualConfig config;
  // Row c holds the embedding of category c, i.e. column c of the
  // d_W x C embedding matrix.
  num::Tensor object_table;     // C_o x d_W
  num::Tensor predicate_table;  // C_p x d_W
  // Transposed fusion matrix: [image | semantic] (1 x (d_I + d_W)) times this
  // gives the d_F fused pre-activation. Shared by nodes and edges.
  num::Tensor fuse_weight;  // (d_I + d_W) x d_F
  num::Tensor node_norm_gamma, node_norm_beta;
  num::Tensor edge_norm_gamma, edge_norm_beta;
  num::BatchNormState node_norm;
  num::BatchNormState edge_norm;
  GcnParams gcn;

  static VisualParams create(const VisualConfig& config, ParameterSet& registry, std::mt19937_64& rng);
};

enum class NormSlot { kNodes, kEdges };

// Column selection: row i of the result is table row ids[i].
// DimensionError when an id is outside the table.
num::Tensor embed_labels(std::span<const std::size_t> ids, const num::Tensor& table);

// act(norm([image | semantic] W_u)) followed by dropout, one row per item.
num::Tensor fuse(const num::Tensor& image_feats, const num::Tensor& semantic, const VisualParams& params,
                 NormSlot slot, const ForwardMode& mode);

// Encodes a mini-batch. In training mode normalisation statistics are taken
// over all nodes (and separately all edges) of the batch.
std::vector<FeatureGraph> encode_visual_batch(std::span<const VisualGraph* const> graphs, const VisualParams& params,
                                              const ForwardMode& mode);
FeatureGraph encode_visual(const VisualGraph& g, const VisualParams& params,
                           const ForwardMode& mode = ForwardMode::eval());

}  // namespace lgsgm
