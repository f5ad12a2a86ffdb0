#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "lgsgm/embedder.hpp"
#include "lgsgm/graphdata.hpp"
#include "lgsgm/matcher.hpp"
#include "lgsgm/params.hpp"
#include "lgsgm/textual_encoder.hpp"
#include "lgsgm/visual_encoder.hpp"

namespace lgsgm {

struct ModelConfig {
  ModelDims dims;
  std::size_t num_object_classes = 0;
  std::size_t num_predicate_classes = 0;
  std::size_t vocab_size = 0;
  std::size_t gcn_layers = 1;
  std::size_t mlp_depth = 1;
  double dropout = 0.3;       // on fused visual features
  double text_dropout = 0.0;  // on word embeddings
  bool batch_norm = true;
  num::Activation fuse_activation = num::Activation::kSwish;
  num::Activation gcn_activation = num::Activation::kSwish;
  TripletReadout triplet_readout = TripletReadout::kFirstLast;
  MatchConfig match;
  std::uint64_t init_seed = 7;

  // Category and vocabulary sizes taken from `vocab`.
  static ModelConfig for_vocab(const Vocab& vocab, const ModelDims& dims = ModelDims::desk());
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Visual encoder, textual encoder and the single readout they share, with
// all their tensors in one registry.
class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  MatchConfig& match() { return config_.match; }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const VisualParams& visual() const { return visual_; }
  const TextualParams& text() const { return text_; }
  const ReadoutParams& readout() const { return readout_; }

  std::vector<ImageEncoding> encode_images(std::span<const VisualGraph* const> images,
                                           const ForwardMode& mode = ForwardMode::eval()) const;
  ImageEncoding encode_image(const VisualGraph& image, const ForwardMode& mode = ForwardMode::eval()) const;
  CaptionEncoding encode_caption(const TextGraph& caption, const ForwardMode& mode = ForwardMode::eval()) const;
  ScoreTerms score(const ImageEncoding& image, const CaptionEncoding& caption) const;

 private:
  ModelConfig config_;
  ParameterSet params_;
  VisualParams visual_;
  TextualParams text_;
  ReadoutParams readout_;
};

}  // namespace lgsgm
