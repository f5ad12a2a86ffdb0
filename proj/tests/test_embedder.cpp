#include <algorithm>
#include <random>

#include "doctest.h"
#include "lgsgm/embedder.hpp"
#include "lgsgm/model.hpp"
#include "oracles.hpp"

using namespace lgsgm;
using num::Tensor;

namespace {

ReadoutParams make_readout(std::size_t d, ParameterSet& reg, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  return ReadoutParams::create(d, reg, rng);
}

FeatureGraph random_graph(std::size_t n, std::size_t m, std::size_t d, std::mt19937_64& rng) {
  FeatureGraph g;
  g.nodes = oracle::to_tensor(oracle::random_mat(n, d, rng), d);
  g.edges = oracle::to_tensor(oracle::random_mat(m, d, rng), d);
  for (std::size_t k = 0; k < m; ++k) g.endpoints.emplace_back(k % n, (k + 1) % n);
  return g;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) { return num::gather_rows(t, perm); }

}  // namespace

TEST_CASE("single node with identity weight") {
  ParameterSet reg;
  ReadoutParams p = make_readout(2, reg);
  for (double& v : p.node_weight.mutable_values()) v = 0.0;
  p.node_weight.mutable_values()[0] = p.node_weight.mutable_values()[3] = 1.0;
  FeatureGraph g;
  g.nodes = Tensor::from(1, 2, {1.0, 0.0});
  g.edges = Tensor::zeros(0, 2);
  const Tensor a = embed_graph(g, p);
  CHECK(a.shape() == num::Shape{1, 4});
  CHECK(a.at(0, 0) == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(a.at(0, 1) == 0.0);
  CHECK(a.at(0, 2) == 0.0);
  CHECK(a.at(0, 3) == 0.0);
}

TEST_CASE("zero node features pool to zero") {
  ParameterSet reg;
  const ReadoutParams p = make_readout(3, reg);
  FeatureGraph g;
  g.nodes = Tensor::zeros(4, 3);
  g.edges = Tensor::zeros(0, 3);
  const Tensor a = embed_graph(g, p);
  for (double v : a.values()) CHECK(v == 0.0);
}

TEST_CASE("readout matches the oracle") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ParameterSet reg;
    const ReadoutParams p = make_readout(4, reg, seed);
    std::mt19937_64 rng(seed);
    const FeatureGraph g = random_graph(1 + seed % 5, seed % 4, 4, rng);
    const oracle::Vec expect = oracle::embed_graph(oracle::to_mat(g.nodes), oracle::to_mat(g.edges),
                                                   oracle::to_mat(p.node_weight), oracle::to_mat(p.edge_weight));
    const Tensor a = embed_graph(g, p);
    REQUIRE(a.cols() == 8);
    for (std::size_t j = 0; j < 8; ++j) CHECK(a.at(0, j) == doctest::Approx(expect[j]).epsilon(1e-12));
  }
}

TEST_CASE("readout is bit-identical under node and edge permutations") {
  ParameterSet reg;
  const ReadoutParams p = make_readout(5, reg);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureGraph g = random_graph(6, 5, 5, rng);
    std::vector<std::size_t> pn(6), pe(5);
    for (std::size_t i = 0; i < 6; ++i) pn[i] = i;
    for (std::size_t i = 0; i < 5; ++i) pe[i] = i;
    std::shuffle(pn.begin(), pn.end(), rng);
    std::shuffle(pe.begin(), pe.end(), rng);
    FeatureGraph h;
    h.nodes = permute_rows(g.nodes, pn);
    h.edges = permute_rows(g.edges, pe);
    CHECK(oracle::to_mat(embed_graph(g, p)) == oracle::to_mat(embed_graph(h, p)));
  }
}

TEST_CASE("output width is twice the feature width") {
  ParameterSet reg;
  const ReadoutParams p = make_readout(3, reg);
  std::mt19937_64 rng(3);
  for (std::size_t n = 1; n <= 4; ++n)
    for (std::size_t m = 0; m <= 3; ++m) CHECK(embed_graph(random_graph(n, m, 3, rng), p).shape() == num::Shape{1, 6});
}

TEST_CASE("readout errors") {
  ParameterSet reg;
  const ReadoutParams p = make_readout(3, reg);
  FeatureGraph g;
  g.nodes = Tensor::zeros(0, 3);
  g.edges = Tensor::zeros(0, 3);
  CHECK_THROWS_AS(embed_graph(g, p), ContractError);
  g.nodes = Tensor::zeros(2, 4);
  CHECK_THROWS_AS(embed_graph(g, p), DimensionError);
}

TEST_CASE("one readout serves both modalities") {
  ModelConfig cfg;
  cfg.dims = ModelDims{4, 3, 4, 3};
  cfg.vocab_size = 4;
  cfg.num_object_classes = 2;
  cfg.num_predicate_classes = 1;
  Model model(cfg);
  std::size_t node_weights = 0, edge_weights = 0;
  for (const auto& e : model.params().entries()) {
    node_weights += e.name.find("node_weight") != std::string::npos;
    edge_weights += e.name.find("edge_weight") != std::string::npos;
  }
  CHECK(node_weights == 1);
  CHECK(edge_weights == 1);

  VisualGraph img;
  img.id = "i";
  img.feat_dim = 3;
  img.objects = {0, 1};
  img.boxes = {{0, 0, 1, 1}, {0, 0, 1, 1}};
  img.node_feats = {0.1, 0.2, 0.3, -0.4, 0.5, 0.6};
  img.relations = {{0, 0, 1}};
  img.edge_feats = {0.3, -0.2, 0.1};
  TextGraph cap;
  cap.tokens = {0, 2, 1};
  cap.triplets = {{0, 2, 1}};
  const auto v0 = oracle::to_mat(model.encode_image(img).embedding);
  const auto t0 = oracle::to_mat(model.encode_caption(cap).embedding);
  for (double& v : Tensor(model.readout().node_weight).mutable_values()) v += 0.25;
  CHECK(oracle::to_mat(model.encode_image(img).embedding) != v0);
  CHECK(oracle::to_mat(model.encode_caption(cap).embedding) != t0);
}

TEST_CASE("readout gradients match central differences") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    ParameterSet reg;
    const ReadoutParams p = make_readout(4, reg, seed);
    std::mt19937_64 rng(seed + 7);
    const FeatureGraph g = random_graph(3, 2, 4, rng);
    const Tensor probe = oracle::to_tensor(oracle::random_mat(1, 8, rng));
    const double err = oracle::gradient_check({p.node_weight, p.edge_weight, g.nodes, g.edges},
                                              [&] { return num::sum(num::mul(embed_graph(g, p), probe)); });
    CHECK(err < 1e-4);
  }
}
