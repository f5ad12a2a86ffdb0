#pragma once

#include "lgsgm/textual_encoder.hpp"
#include "lgsgm/visual_encoder.hpp"

namespace lgsgm {

struct ImageEncoding {
  FeatureGraph graph;     // h_o, h_p after the visual GCN
  num::Tensor embedding;  // 1 x 2d readout of `graph`
};

struct CaptionEncoding {
  TextEncoding text;
  num::Tensor embedding;  // 1 x 2d readout of text.graph; undefined when it is empty

  bool has_embedding() const { return embedding.defined(); }
};

// What to do with the relation term when either side has no relations.
enum class RelationFallback {
  kZero,      // S_Rel = 0
  kSkipPair,  // mark the pair as skipped; rankers place it last
};

struct MatchConfig {
  bool use_global = true;
  double global_weight = 1.0;
  RelationFallback relation_fallback = RelationFallback::kZero;
};

struct SimilarityReport {
  double s_node = 0.0;
  double s_rel = 0.0;
  double s_local = 0.0;
  double s_global = 0.0;
  double s_total = 0.0;
  bool skipped = false;
};

struct ScoreTerms {
  num::Tensor node;
  num::Tensor rel;
  num::Tensor local;
  num::Tensor global;
  num::Tensor total;
  bool skipped = false;

  SimilarityReport report() const;
};

// mean over words of max over objects of the dot product.
// ContractError when either side is empty.
num::Tensor node_score(const num::Tensor& word_feats, const num::Tensor& object_feats);

// mean over triplets of max over visual edges of the dot product; 0 when
// either side is empty.
num::Tensor edge_score(const num::Tensor& triplet_feats, const num::Tensor& edge_feats);

// Cosine similarity; NumericError for a zero vector.
num::Tensor global_score(const num::Tensor& image_embedding, const num::Tensor& caption_embedding);

// S = S_Node + S_Rel + S_Global. S_Global is 0 when the caption has no
// relation graph to embed, or when config.use_global is false.
ScoreTerms total_score(const ImageEncoding& image, const CaptionEncoding& caption, const MatchConfig& config = {});

}  // namespace lgsgm
