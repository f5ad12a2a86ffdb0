#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lgsgm/numcore.hpp"

namespace lgsgm {

// Named registry of every tensor that makes up a model. Trainable entries
// receive optimiser updates; the rest are buffers (normalisation running
// statistics) that are saved and restored but never differentiated.
// Enumeration order is insertion order.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    num::Tensor tensor;
    bool trainable = true;
  };

  // Throws ContractError on a duplicate name.
  num::Tensor add(const std::string& name, num::Tensor tensor, bool trainable = true);

  const Entry* find(const std::string& name) const;
  num::Tensor get(const std::string& name) const;  // ContractError when missing
  std::span<const Entry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t num_scalars(bool trainable_only = true) const;

  // How many entries alias the storage of `t`.
  std::size_t count_aliases(const num::Tensor& t) const;

  // Zero-fills the gradient buffer of every trainable entry.
  void zero_grads();

  // Copies values entry by entry from `other`. Both sets must list the same
  // names with the same shapes; DimensionError names the first offender and
  // nothing is written in that case.
  void assign_from(const ParameterSet& other);

  // Deep copy with identical names and flags.
  ParameterSet clone() const;

  bool bitwise_equal(const ParameterSet& other) const;

 private:
  std::vector<Entry> entries_;
};

// Uniform(-bound, bound) initialised tensor.
num::Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng);

}  // namespace lgsgm
