#pragma once

#include <random>
#include <string>
#include <vector>

#include "lgsgm/numcore.hpp"
#include "lgsgm/params.hpp"

namespace lgsgm {

// Training mode turns on dropout (when an RNG is supplied) and batch
// statistics in normalisation layers.
struct ForwardMode {
  bool training = false;
  std::mt19937_64* rng = nullptr;

  static ForwardMode eval() { return {}; }
  static ForwardMode train(std::mt19937_64& rng) { return {true, &rng}; }
};

// y = x W + b with W stored in x out (row-vector convention).
struct Affine {
  num::Tensor weight;
  num::Tensor bias;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  num::Tensor apply(const num::Tensor& x) const;

  static Affine create(const std::string& name, std::size_t in, std::size_t out, ParameterSet& registry,
                       std::mt19937_64& rng);
};

// Stack of affine layers, each followed by the same activation.
struct Mlp {
  std::vector<Affine> layers;
  num::Activation activation = num::Activation::kSwish;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
  num::Tensor apply(const num::Tensor& x) const;

  // depth >= 1 layers: in -> out, then out -> out.
  static Mlp create(const std::string& name, std::size_t in, std::size_t out, std::size_t depth,
                    num::Activation activation, ParameterSet& registry, std::mt19937_64& rng);
};

// Inverted dropout; identity unless mode.training and an RNG is present.
num::Tensor dropout(const num::Tensor& x, double rate, const ForwardMode& mode);

}  // namespace lgsgm
