#include "lgsgm/model.hpp"

#include <random>

namespace lgsgm {

using json = nlohmann::json;

ModelConfig ModelConfig::for_vocab(const Vocab& vocab, const ModelDims& dims) {
  ModelConfig c;
  c.dims = dims;
  c.num_object_classes = vocab.num_object_classes;
  c.num_predicate_classes = vocab.num_predicate_classes;
  c.vocab_size = vocab.size();
  return c;
}

json to_json(const ModelConfig& c) {
  return json{
      {"word_dim", c.dims.word_dim},
      {"image_dim", c.dims.image_dim},
      {"fused_dim", c.dims.fused_dim},
      {"hidden_dim", c.dims.hidden_dim},
      {"num_object_classes", c.num_object_classes},
      {"num_predicate_classes", c.num_predicate_classes},
      {"vocab_size", c.vocab_size},
      {"gcn_layers", c.gcn_layers},
      {"mlp_depth", c.mlp_depth},
      {"dropout", c.dropout},
      {"text_dropout", c.text_dropout},
      {"batch_norm", c.batch_norm},
      {"fuse_activation", num::activation_name(c.fuse_activation)},
      {"gcn_activation", num::activation_name(c.gcn_activation)},
      {"triplet_readout", triplet_readout_name(c.triplet_readout)},
      {"use_global", c.match.use_global},
      {"global_weight", c.match.global_weight},
      {"relation_fallback", c.match.relation_fallback == RelationFallback::kZero ? "zero" : "skip-pair"},
      {"init_seed", c.init_seed},
  };
}

ModelConfig model_config_from_json(const json& j) {
  try {
    ModelConfig c;
    c.dims.word_dim = j.at("word_dim").get<std::size_t>();
    c.dims.image_dim = j.at("image_dim").get<std::size_t>();
    c.dims.fused_dim = j.at("fused_dim").get<std::size_t>();
    c.dims.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.num_object_classes = j.at("num_object_classes").get<std::size_t>();
    c.num_predicate_classes = j.at("num_predicate_classes").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.gcn_layers = j.at("gcn_layers").get<std::size_t>();
    c.mlp_depth = j.at("mlp_depth").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.text_dropout = j.at("text_dropout").get<double>();
    c.batch_norm = j.at("batch_norm").get<bool>();
    c.fuse_activation = num::parse_activation(j.at("fuse_activation").get<std::string>());
    c.gcn_activation = num::parse_activation(j.at("gcn_activation").get<std::string>());
    c.triplet_readout = parse_triplet_readout(j.at("triplet_readout").get<std::string>());
    c.match.use_global = j.at("use_global").get<bool>();
    c.match.global_weight = j.at("global_weight").get<double>();
    const auto fallback = j.at("relation_fallback").get<std::string>();
    if (fallback != "zero" && fallback != "skip-pair") throw ConfigError("unknown relation_fallback '" + fallback + "'");
    c.match.relation_fallback = fallback == "zero" ? RelationFallback::kZero : RelationFallback::kSkipPair;
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

namespace {

VisualConfig visual_config(const ModelConfig& c) {
  VisualConfig v;
  v.dims = c.dims;
  v.num_object_classes = c.num_object_classes;
  v.num_predicate_classes = c.num_predicate_classes;
  v.gcn_layers = c.gcn_layers;
  v.mlp_depth = c.mlp_depth;
  v.fuse_activation = c.fuse_activation;
  v.gcn_activation = c.gcn_activation;
  v.dropout = c.dropout;
  v.batch_norm = c.batch_norm;
  return v;
}

TextualConfig textual_config(const ModelConfig& c) {
  TextualConfig t;
  t.dims = c.dims;
  t.vocab_size = c.vocab_size;
  t.gcn_layers = c.gcn_layers;
  t.mlp_depth = c.mlp_depth;
  t.gcn_activation = c.gcn_activation;
  t.dropout = c.text_dropout;
  t.triplet_readout = c.triplet_readout;
  return t;
}

}  // namespace

Model::Model(const ModelConfig& config) : config_(config) {
  if (config.dropout < 0.0 || config.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (config.text_dropout < 0.0 || config.text_dropout >= 1.0) throw ConfigError("text dropout must lie in [0, 1)");
  const auto& d = config.dims;
  if (d.word_dim == 0 || d.image_dim == 0 || d.fused_dim == 0 || d.hidden_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  std::mt19937_64 rng(config.init_seed);
  visual_ = VisualParams::create(visual_config(config), params_, rng);
  text_ = TextualParams::create(textual_config(config), params_, rng);
  readout_ = ReadoutParams::create(d.hidden_dim, params_, rng);
}

std::vector<ImageEncoding> Model::encode_images(std::span<const VisualGraph* const> images,
                                                const ForwardMode& mode) const {
  std::vector<FeatureGraph> graphs = encode_visual_batch(images, visual_, mode);
  std::vector<ImageEncoding> out;
  out.reserve(graphs.size());
  for (auto& g : graphs) {
    ImageEncoding e;
    e.embedding = embed_graph(g, readout_);
    e.graph = std::move(g);
    out.push_back(std::move(e));
  }
  return out;
}

ImageEncoding Model::encode_image(const VisualGraph& image, const ForwardMode& mode) const {
  const VisualGraph* one[] = {&image};
  return std::move(encode_images(one, mode).front());
}

CaptionEncoding Model::encode_caption(const TextGraph& caption, const ForwardMode& mode) const {
  CaptionEncoding e;
  e.text = encode_text(caption, text_, mode);
  if (e.text.graph.num_nodes() > 0) e.embedding = embed_graph(e.text.graph, readout_);
  return e;
}

ScoreTerms Model::score(const ImageEncoding& image, const CaptionEncoding& caption) const {
  return total_score(image, caption, config_.match);
}

}  // namespace lgsgm
