#include "lgsgm/visual_encoder.hpp"

#include <cmath>

namespace lgsgm {

GcnParams GcnParams::create(const std::string& name, std::size_t in_dim, std::size_t out_dim, std::size_t n_layers,
                            std::size_t mlp_depth, num::Activation activation, ParameterSet& registry,
                            std::mt19937_64& rng) {
  if (n_layers == 0) throw ConfigError(name + ": at least one GCN layer is required");
  GcnParams p;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = l == 0 ? in_dim : out_dim;
    const std::string prefix = name + ".layer" + std::to_string(l);
    GcnLayer layer;
    layer.node = Mlp::create(prefix + ".mlp_node", in, out_dim, mlp_depth, activation, registry, rng);
    layer.edge = Mlp::create(prefix + ".mlp_edge", 3 * in, out_dim, mlp_depth, activation, registry, rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

FeatureGraph gcn_layer(const FeatureGraph& g, const GcnLayer& layer) {
  if (g.edges.rows() != g.endpoints.size()) {
    throw DimensionError("gcn_layer: " + std::to_string(g.edges.rows()) + " edge rows but " +
                         std::to_string(g.endpoints.size()) + " endpoint pairs");
  }
  std::vector<std::size_t> src, dst;
  src.reserve(g.endpoints.size());
  dst.reserve(g.endpoints.size());
  for (const auto& [s, o] : g.endpoints) {
    if (s >= g.num_nodes() || o >= g.num_nodes()) throw DimensionError("gcn_layer: edge endpoint out of range");
    src.push_back(s);
    dst.push_back(o);
  }
  FeatureGraph out;
  out.endpoints = g.endpoints;
  out.nodes = layer.node.apply(g.nodes);
  const num::Tensor parts[] = {num::gather_rows(g.nodes, src), g.edges, num::gather_rows(g.nodes, dst)};
  out.edges = layer.edge.apply(num::concat_cols(parts));
  return out;
}

FeatureGraph run_gcn(FeatureGraph g, const GcnParams& gcn) {
  for (const auto& layer : gcn.layers) g = gcn_layer(g, layer);
  return g;
}

VisualParams VisualParams::create(const VisualConfig& config, ParameterSet& registry, std::mt19937_64& rng) {
  const auto& d = config.dims;
  if (config.num_object_classes == 0 || config.num_predicate_classes == 0) {
    throw ConfigError("visual encoder: category counts must be positive");
  }
  VisualParams p;
  p.config = config;
  const double emb_bound = 1.0 / std::sqrt(static_cast<double>(d.word_dim));
  p.object_table = registry.add("visual.object_embedding",
                                uniform_tensor(config.num_object_classes, d.word_dim, emb_bound, rng));
  p.predicate_table = registry.add("visual.predicate_embedding",
                                   uniform_tensor(config.num_predicate_classes, d.word_dim, emb_bound, rng));
  const std::size_t fuse_in = d.image_dim + d.word_dim;
  p.fuse_weight = registry.add("visual.fuse_weight",
                               uniform_tensor(fuse_in, d.fused_dim, std::sqrt(6.0 / static_cast<double>(fuse_in + d.fused_dim)), rng));
  auto norm = [&](const std::string& name, num::Tensor& gamma, num::Tensor& beta, num::BatchNormState& st) {
    gamma = registry.add(name + ".gamma", num::Tensor::full(1, d.fused_dim, 1.0));
    beta = registry.add(name + ".beta", num::Tensor::zeros(1, d.fused_dim));
    st.running_mean = registry.add(name + ".running_mean", num::Tensor::zeros(1, d.fused_dim), false);
    st.running_var = registry.add(name + ".running_var", num::Tensor::full(1, d.fused_dim, 1.0), false);
  };
  if (config.batch_norm) {
    norm("visual.node_norm", p.node_norm_gamma, p.node_norm_beta, p.node_norm);
    norm("visual.edge_norm", p.edge_norm_gamma, p.edge_norm_beta, p.edge_norm);
  }
  p.gcn = GcnParams::create("visual.gcn", d.fused_dim, d.hidden_dim, config.gcn_layers, config.mlp_depth,
                            config.gcn_activation, registry, rng);
  return p;
}

num::Tensor embed_labels(std::span<const std::size_t> ids, const num::Tensor& table) {
  return num::gather_rows(table, ids);
}

num::Tensor fuse(const num::Tensor& image_feats, const num::Tensor& semantic, const VisualParams& params,
                 NormSlot slot, const ForwardMode& mode) {
  const auto& d = params.config.dims;
  if (image_feats.cols() != d.image_dim || semantic.cols() != d.word_dim) {
    throw DimensionError("fuse: expected image width " + std::to_string(d.image_dim) + " and semantic width " +
                         std::to_string(d.word_dim) + ", got " + num::shape_str(image_feats.shape()) + " and " +
                         num::shape_str(semantic.shape()));
  }
  const num::Tensor parts[] = {image_feats, semantic};
  num::Tensor z = num::matmul(num::concat_cols(parts), params.fuse_weight);
  if (params.config.batch_norm) {
    const bool nodes = slot == NormSlot::kNodes;
    num::BatchNormState st = nodes ? params.node_norm : params.edge_norm;
    z = num::batch_norm(z, nodes ? params.node_norm_gamma : params.edge_norm_gamma,
                        nodes ? params.node_norm_beta : params.edge_norm_beta, st, mode.training);
  }
  return dropout(num::activate(z, params.config.fuse_activation), params.config.dropout, mode);
}

std::vector<FeatureGraph> encode_visual_batch(std::span<const VisualGraph* const> graphs, const VisualParams& params,
                                              const ForwardMode& mode) {
  const std::size_t d_img = params.config.dims.image_dim;
  std::vector<double> node_feats, edge_feats;
  std::vector<std::size_t> object_ids, predicate_ids;
  FeatureGraph batch;
  std::vector<std::size_t> node_offset, edge_offset;
  std::size_t n_nodes = 0, n_edges = 0;
  for (const VisualGraph* g : graphs) {
    if (g->feat_dim != d_img) {
      throw DimensionError("encode_visual: image '" + g->id + "' has feature width " + std::to_string(g->feat_dim) +
                           ", model expects " + std::to_string(d_img));
    }
    if (g->objects.empty()) throw ContractError("encode_visual: image '" + g->id + "' has no objects");
    node_offset.push_back(n_nodes);
    edge_offset.push_back(n_edges);
    node_feats.insert(node_feats.end(), g->node_feats.begin(), g->node_feats.end());
    edge_feats.insert(edge_feats.end(), g->edge_feats.begin(), g->edge_feats.end());
    object_ids.insert(object_ids.end(), g->objects.begin(), g->objects.end());
    for (const auto& r : g->relations) {
      predicate_ids.push_back(r.predicate);
      batch.endpoints.emplace_back(n_nodes + r.subject, n_nodes + r.object);
    }
    n_nodes += g->num_objects();
    n_edges += g->num_relations();
  }
  const num::Tensor v_nodes = num::Tensor::from(n_nodes, d_img, std::move(node_feats));
  const num::Tensor v_edges = num::Tensor::from(n_edges, d_img, std::move(edge_feats));
  batch.nodes = fuse(v_nodes, embed_labels(object_ids, params.object_table), params, NormSlot::kNodes, mode);
  batch.edges = fuse(v_edges, embed_labels(predicate_ids, params.predicate_table), params, NormSlot::kEdges, mode);
  batch = run_gcn(std::move(batch), params.gcn);

  std::vector<FeatureGraph> out;
  out.reserve(graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const VisualGraph& g = *graphs[i];
    FeatureGraph fg;
    fg.nodes = num::slice_rows(batch.nodes, node_offset[i], g.num_objects());
    fg.edges = num::slice_rows(batch.edges, edge_offset[i], g.num_relations());
    for (const auto& r : g.relations) fg.endpoints.emplace_back(r.subject, r.object);
    out.push_back(std::move(fg));
  }
  return out;
}

FeatureGraph encode_visual(const VisualGraph& g, const VisualParams& params, const ForwardMode& mode) {
  const VisualGraph* one[] = {&g};
  return std::move(encode_visual_batch(one, params, mode).front());
}

}  // namespace lgsgm
