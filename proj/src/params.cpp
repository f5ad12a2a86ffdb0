#include "lgsgm/params.hpp"

#include <algorithm>
#include <cstring>

namespace lgsgm {

num::Tensor ParameterSet::add(const std::string& name, num::Tensor tensor, bool trainable) {
  if (find(name) != nullptr) throw ContractError("parameter '" + name + "' registered twice");
  tensor.set_requires_grad(trainable);
  entries_.push_back(Entry{name, tensor, trainable});
  return tensor;
}

const ParameterSet::Entry* ParameterSet::find(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

num::Tensor ParameterSet::get(const std::string& name) const {
  const Entry* e = find(name);
  if (e == nullptr) throw ContractError("no parameter named '" + name + "'");
  return e->tensor;
}

std::size_t ParameterSet::num_scalars(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (!trainable_only || e.trainable) n += e.tensor.size();
  }
  return n;
}

std::size_t ParameterSet::count_aliases(const num::Tensor& t) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.tensor.same(t); }));
}

void ParameterSet::zero_grads() {
  for (auto& e : entries_) {
    if (e.trainable) e.tensor.zero_grad();
  }
}

void ParameterSet::assign_from(const ParameterSet& other) {
  if (other.size() != size()) {
    throw DimensionError("parameter sets differ in size: " + std::to_string(size()) + " vs " +
                         std::to_string(other.size()));
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& mine = entries_[i];
    const auto& theirs = other.entries_[i];
    if (mine.name != theirs.name) {
      throw DimensionError("parameter '" + mine.name + "' expected, found '" + theirs.name + "'");
    }
    if (mine.tensor.shape() != theirs.tensor.shape()) {
      throw DimensionError("parameter '" + mine.name + "' has shape " + num::shape_str(mine.tensor.shape()) +
                           ", source has " + num::shape_str(theirs.tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].tensor.mutable_values();
    auto src = other.entries_[i].tensor.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& e : entries_) out.entries_.push_back(Entry{e.name, e.tensor.clone(), e.trainable});
  return out;
}

bool ParameterSet::bitwise_equal(const ParameterSet& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.trainable != b.trainable || a.tensor.shape() != b.tensor.shape()) return false;
    if (std::memcmp(a.tensor.values().data(), b.tensor.values().data(), a.tensor.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

num::Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return num::Tensor::from(rows, cols, std::move(v));
}

}  // namespace lgsgm
