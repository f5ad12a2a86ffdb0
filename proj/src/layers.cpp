#include "lgsgm/layers.hpp"

#include <cmath>

namespace lgsgm {

num::Tensor Affine::apply(const num::Tensor& x) const { return num::add_row(num::matmul(x, weight), bias); }

Affine Affine::create(const std::string& name, std::size_t in, std::size_t out, ParameterSet& registry,
                      std::mt19937_64& rng) {
  // Glorot uniform weights, zero bias.
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Affine a;
  a.weight = registry.add(name + ".weight", uniform_tensor(in, out, bound, rng));
  a.bias = registry.add(name + ".bias", num::Tensor::zeros(1, out));
  return a;
}

num::Tensor Mlp::apply(const num::Tensor& x) const {
  num::Tensor h = x;
  for (const auto& layer : layers) h = num::activate(layer.apply(h), activation);
  return h;
}

Mlp Mlp::create(const std::string& name, std::size_t in, std::size_t out, std::size_t depth,
                num::Activation activation, ParameterSet& registry, std::mt19937_64& rng) {
  if (depth == 0) throw ConfigError(name + ": MLP depth must be >= 1");
  Mlp m;
  m.activation = activation;
  for (std::size_t l = 0; l < depth; ++l) {
    m.layers.push_back(Affine::create(name + "." + std::to_string(l), l == 0 ? in : out, out, registry, rng));
  }
  return m;
}

num::Tensor dropout(const num::Tensor& x, double rate, const ForwardMode& mode) {
  if (!mode.training || mode.rng == nullptr || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = keep(*mode.rng) ? s : 0.0;
  return num::mul(x, num::Tensor::from(x.rows(), x.cols(), std::move(mask)));
}

}  // namespace lgsgm
