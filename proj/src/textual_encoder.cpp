#include "lgsgm/textual_encoder.hpp"

#include <cmath>

namespace lgsgm {

LstmParams LstmParams::create(const std::string& name, std::size_t in_dim, std::size_t hidden_dim,
                              ParameterSet& registry, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  LstmParams p;
  p.input_weight = registry.add(name + ".input_weight", uniform_tensor(in_dim, 4 * hidden_dim, bound, rng));
  p.hidden_weight = registry.add(name + ".hidden_weight", uniform_tensor(hidden_dim, 4 * hidden_dim, bound, rng));
  // Zero bias except the forget gate, which starts open.
  num::Tensor bias = num::Tensor::zeros(1, 4 * hidden_dim);
  for (std::size_t j = hidden_dim; j < 2 * hidden_dim; ++j) bias.mutable_values()[j] = 1.0;
  p.bias = registry.add(name + ".bias", bias);
  return p;
}

BiLstmParams BiLstmParams::create(const std::string& name, std::size_t in_dim, std::size_t hidden_dim,
                                  ParameterSet& registry, std::mt19937_64& rng) {
  BiLstmParams p;
  p.forward = LstmParams::create(name + ".forward", in_dim, hidden_dim, registry, rng);
  p.backward = LstmParams::create(name + ".backward", in_dim, hidden_dim, registry, rng);
  return p;
}

LstmState LstmState::zero(std::size_t hidden_dim) {
  return {num::Tensor::zeros(1, hidden_dim), num::Tensor::zeros(1, hidden_dim)};
}

LstmState lstm_cell(const num::Tensor& x, const LstmState& prev, const LstmParams& params) {
  const std::size_t h = params.hidden_dim();
  const num::Tensor z = num::add(num::add_row(num::matmul(x, params.input_weight), params.bias),
                                 num::matmul(prev.h, params.hidden_weight));
  const num::Tensor i = num::sigmoid(num::slice_cols(z, 0, h));
  const num::Tensor f = num::sigmoid(num::slice_cols(z, h, h));
  const num::Tensor g = num::tanh(num::slice_cols(z, 2 * h, h));
  const num::Tensor o = num::sigmoid(num::slice_cols(z, 3 * h, h));
  LstmState next;
  next.c = num::add(num::mul(f, prev.c), num::mul(i, g));
  next.h = num::mul(o, num::tanh(next.c));
  return next;
}

BiLstmOutput run_bilstm(const num::Tensor& inputs, const BiLstmParams& params) {
  const std::size_t steps = inputs.rows();
  if (steps == 0) throw ContractError("run_bilstm: empty sequence");
  const std::size_t h = params.forward.hidden_dim();
  BiLstmOutput out;
  out.forward.resize(steps);
  out.backward.resize(steps);
  LstmState fwd = LstmState::zero(h);
  for (std::size_t t = 0; t < steps; ++t) {
    fwd = lstm_cell(num::slice_rows(inputs, t, 1), fwd, params.forward);
    out.forward[t] = fwd.h;
  }
  LstmState bwd = LstmState::zero(h);
  for (std::size_t t = steps; t-- > 0;) {
    bwd = lstm_cell(num::slice_rows(inputs, t, 1), bwd, params.backward);
    out.backward[t] = bwd.h;
  }
  std::vector<num::Tensor> rows(steps);
  for (std::size_t t = 0; t < steps; ++t) rows[t] = num::add(out.forward[t], out.backward[t]);
  out.averaged = num::scale(num::concat_rows(rows), 0.5);
  return out;
}

TripletReadout parse_triplet_readout(const std::string& name) {
  if (name == "first-last") return TripletReadout::kFirstLast;
  if (name == "final-states") return TripletReadout::kFinalStates;
  throw ConfigError("unknown triplet readout '" + name + "' (expected first-last or final-states)");
}

const char* triplet_readout_name(TripletReadout r) {
  return r == TripletReadout::kFirstLast ? "first-last" : "final-states";
}

TextualParams TextualParams::create(const TextualConfig& config, ParameterSet& registry, std::mt19937_64& rng) {
  const auto& d = config.dims;
  if (config.vocab_size == 0) throw ConfigError("textual encoder: vocabulary is empty");
  TextualParams p;
  p.config = config;
  p.word_table = registry.add("text.word_embedding",
                              uniform_tensor(config.vocab_size, d.word_dim,
                                             1.0 / std::sqrt(static_cast<double>(d.word_dim)), rng));
  p.sentence = BiLstmParams::create("text.lstm_words", d.word_dim, d.hidden_dim, registry, rng);
  p.triplet = BiLstmParams::create("text.lstm_triplets", d.word_dim, d.hidden_dim, registry, rng);
  p.gcn = GcnParams::create("text.gcn", d.hidden_dim, d.hidden_dim, config.gcn_layers, config.mlp_depth,
                            config.gcn_activation, registry, rng);
  return p;
}

namespace {

num::Tensor embed_words(std::span<const std::size_t> ids, const TextualParams& params, const ForwardMode& mode) {
  return dropout(num::gather_rows(params.word_table, ids), params.config.dropout, mode);
}

}  // namespace

num::Tensor encode_words(std::span<const std::size_t> tokens, const TextualParams& params, const ForwardMode& mode) {
  if (tokens.empty()) throw ContractError("encode_words: empty sentence");
  return run_bilstm(embed_words(tokens, params, mode), params.sentence).averaged;
}

TripletEncoding encode_triplets(std::span<const std::vector<std::size_t>> triplets, const TextualParams& params,
                                const ForwardMode& mode) {
  const std::size_t h = params.config.dims.hidden_dim;
  TripletEncoding enc;
  std::vector<num::Tensor> summaries;
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& trip = triplets[k];
    if (trip.size() < 2) {
      throw DataError("encode_triplets: triplet " + std::to_string(k) + " has " + std::to_string(trip.size()) +
                      " words, need at least 2");
    }
    const BiLstmOutput run = run_bilstm(embed_words(trip, params, mode), params.triplet);
    const std::size_t last = trip.size() - 1;
    const bool first_last = params.config.triplet_readout == TripletReadout::kFirstLast;
    const num::Tensor& fwd = first_last ? run.forward[0] : run.forward[last];
    const num::Tensor& bwd = first_last ? run.backward[last] : run.backward[0];
    summaries.push_back(num::scale(num::add(fwd, bwd), 0.5));
    enc.word_features.push_back(run.averaged);
  }
  enc.features = summaries.empty() ? num::Tensor::zeros(0, h) : num::concat_rows(summaries);
  return enc;
}

FeatureGraph build_text_graph(std::span<const num::Tensor> word_features, std::size_t hidden_dim) {
  FeatureGraph g;
  if (word_features.empty()) {
    g.nodes = num::Tensor::zeros(0, hidden_dim);
    g.edges = num::Tensor::zeros(0, hidden_dim);
    return g;
  }
  std::vector<num::Tensor> nodes, edges;
  for (std::size_t k = 0; k < word_features.size(); ++k) {
    const num::Tensor& w = word_features[k];
    const std::size_t len = w.rows();
    nodes.push_back(num::slice_rows(w, 0, 1));
    nodes.push_back(num::slice_rows(w, len - 1, 1));
    edges.push_back(len > 2 ? num::mean_rows(num::slice_rows(w, 1, len - 2)) : num::Tensor::zeros(1, hidden_dim));
    g.endpoints.emplace_back(2 * k, 2 * k + 1);
  }
  g.nodes = num::concat_rows(nodes);
  g.edges = num::concat_rows(edges);
  return g;
}

TextEncoding encode_text(const TextGraph& caption, const TextualParams& params, const ForwardMode& mode) {
  TextEncoding enc;
  enc.word_feats = encode_words(caption.tokens, params, mode);
  TripletEncoding trip = encode_triplets(caption.triplets, params, mode);
  enc.triplet_feats = trip.features;
  enc.graph = build_text_graph(trip.word_features, params.config.dims.hidden_dim);
  if (enc.graph.num_nodes() > 0) enc.graph = run_gcn(std::move(enc.graph), params.gcn);
  return enc;
}

}  // namespace lgsgm
