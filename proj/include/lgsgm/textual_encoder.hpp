#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lgsgm/graphdata.hpp"
#include "lgsgm/layers.hpp"
#include "lgsgm/visual_encoder.hpp"

namespace lgsgm {

// Gate layout along the 4h axis: input, forget, cell candidate, output.
struct LstmParams {
  num::Tensor input_weight;   // in x 4h
  num::Tensor hidden_weight;  // h x 4h
  num::Tensor bias;           // 1 x 4h

  std::size_t hidden_dim() const { return hidden_weight.rows(); }
  static LstmParams create(const std::string& name, std::size_t in_dim, std::size_t hidden_dim,
                           ParameterSet& registry, std::mt19937_64& rng);
};

struct BiLstmParams {
  LstmParams forward;
  LstmParams backward;

  static BiLstmParams create(const std::string& name, std::size_t in_dim, std::size_t hidden_dim,
                             ParameterSet& registry, std::mt19937_64& rng);
};

struct LstmState {
  num::Tensor h;  // 1 x hidden
  num::Tensor c;  // 1 x hidden

  static LstmState zero(std::size_t hidden_dim);
};

LstmState lstm_cell(const num::Tensor& x, const LstmState& prev, const LstmParams& params);

struct BiLstmOutput {
  std::vector<num::Tensor> forward;   // hidden state after reading position t left to right
  std::vector<num::Tensor> backward;  // hidden state after reading position t right to left
  num::Tensor averaged;               // T x h, row t = (forward[t] + backward[t]) / 2
};

// Both directions start from the zero state. `inputs` is T x in, T >= 1.
BiLstmOutput run_bilstm(const num::Tensor& inputs, const BiLstmParams& params);

// Which directional states summarise a whole triplet.
enum class TripletReadout {
  // Forward state at the first word plus backward state at the last word.
  kFirstLast,
  // Final state of each direction: forward at the last word, backward at the
  // first word.
  kFinalStates,
};

TripletReadout parse_triplet_readout(const std::string& name);
const char* triplet_readout_name(TripletReadout r);

struct TextualConfig {
  ModelDims dims;
  std::size_t vocab_size = 0;
  std::size_t gcn_layers = 1;
  std::size_t mlp_depth = 1;
  num::Activation gcn_activation = num::Activation::kSwish;
  double dropout = 0.0;
  TripletReadout triplet_readout = TripletReadout::kFirstLast;
};

struct TextualParams {
  TextualConfig config;
  num::Tensor word_table;  // vocab x d_W, shared by sentence and triplet paths
  BiLstmParams sentence;   // over the whole caption
  BiLstmParams triplet;    // one instance shared by every triplet
  GcnParams gcn;

  static TextualParams create(const TextualConfig& config, ParameterSet& registry, std::mt19937_64& rng);
};

// N_w x d per-word features. ContractError for an empty sentence.
num::Tensor encode_words(std::span<const std::size_t> tokens, const TextualParams& params,
                         const ForwardMode& mode = ForwardMode::eval());

struct TripletEncoding {
  num::Tensor features;                    // N_t x d
  std::vector<num::Tensor> word_features;  // per triplet: len x d
};

// DataError when a triplet has fewer than two words.
TripletEncoding encode_triplets(std::span<const std::vector<std::size_t>> triplets, const TextualParams& params,
                                const ForwardMode& mode = ForwardMode::eval());

// Two nodes (subject, object) and one edge per triplet. The edge feature is
// the mean of the interior (predicate) word features, or zero when the
// triplet has no interior word. Zero triplets give an empty graph.
FeatureGraph build_text_graph(std::span<const num::Tensor> word_features, std::size_t hidden_dim);

struct TextEncoding {
  num::Tensor word_feats;     // N_w x d
  num::Tensor triplet_feats;  // N_t x d
  FeatureGraph graph;         // after the textual GCN
};

TextEncoding encode_text(const TextGraph& caption, const TextualParams& params,
                         const ForwardMode& mode = ForwardMode::eval());

}  // namespace lgsgm
