#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lvst/autograd.hpp"
#include "lvst/tensor.hpp"

namespace lvst {

/// Named learnable tensors in insertion order.
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }
  Tensor& tensor(std::size_t i) { return tensors_[i]; }
  std::size_t total_elements() const;

  bool operator==(const ParamStore& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Leaf Vars for every parameter of a store, recorded on one tape.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamStore& store, bool requires_grad = true);

  const Var& operator[](std::string_view name) const;
  Tape& tape() const { return *tape_; }
  const ParamStore& store() const { return *store_; }

  /// Gradients in store order after tape.backward().
  std::vector<Tensor> grads() const;

 private:
  Tape* tape_;
  const ParamStore* store_;
  std::vector<Var> vars_;
};

/// Uniform in [-bound, bound] from the top 53 bits of the generator.
Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng);
double uniform01(std::mt19937_64& rng);

}  // namespace lvst
