#include "lgsgm/matcher.hpp"

namespace lgsgm {

SimilarityReport ScoreTerms::report() const {
  SimilarityReport r;
  r.s_node = node.item();
  r.s_rel = rel.item();
  r.s_local = local.item();
  r.s_global = global.item();
  r.s_total = total.item();
  r.skipped = skipped;
  return r;
}

namespace {

num::Tensor mean_best_match(const num::Tensor& queries, const num::Tensor& candidates) {
  if (queries.cols() != candidates.cols()) {
    throw DimensionError("score: feature widths differ " + num::shape_str(queries.shape()) + " vs " +
                         num::shape_str(candidates.shape()));
  }
  const num::Tensor dots = num::matmul(queries, num::transpose(candidates));
  return num::mean(num::max_axis(dots, 1).values);
}

}  // namespace

num::Tensor node_score(const num::Tensor& word_feats, const num::Tensor& object_feats) {
  if (word_feats.rows() == 0) throw ContractError("node_score: caption has no words");
  if (object_feats.rows() == 0) throw ContractError("node_score: image has no objects");
  return mean_best_match(word_feats, object_feats);
}

num::Tensor edge_score(const num::Tensor& triplet_feats, const num::Tensor& edge_feats) {
  if (triplet_feats.rows() == 0 || edge_feats.rows() == 0) return num::Tensor::scalar(0.0);
  return mean_best_match(triplet_feats, edge_feats);
}

num::Tensor global_score(const num::Tensor& image_embedding, const num::Tensor& caption_embedding) {
  return num::cosine(image_embedding, caption_embedding);
}

ScoreTerms total_score(const ImageEncoding& image, const CaptionEncoding& caption, const MatchConfig& config) {
  ScoreTerms t;
  t.node = node_score(caption.text.word_feats, image.graph.nodes);
  const bool degenerate = caption.text.triplet_feats.rows() == 0 || image.graph.num_edges() == 0;
  t.skipped = degenerate && config.relation_fallback == RelationFallback::kSkipPair;
  t.rel = edge_score(caption.text.triplet_feats, image.graph.edges);
  t.local = num::add(t.node, t.rel);
  if (config.use_global && caption.has_embedding()) {
    t.global = global_score(image.embedding, caption.embedding);
    t.total = num::add(t.local, config.global_weight == 1.0 ? t.global : num::scale(t.global, config.global_weight));
  } else {
    t.global = num::Tensor::scalar(0.0);
    t.total = t.local;
  }
  return t;
}

}  // namespace lgsgm
