#include "lvst/params.hpp"

namespace lvst {

void ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw std::logic_error("duplicate parameter " + name);
  index_.emplace(name, tensors_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const Tensor& ParamStore::at(std::string_view name) const { return tensors_[index_of(name)]; }

Tensor& ParamStore::at(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ParamStore&>(*this).at(name));
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].shape() != other.tensors_[i].shape() ||
        tensors_[i].storage() != other.tensors_[i].storage())
      return false;
  }
  return true;
}

ParamBinding::ParamBinding(Tape& tape, const ParamStore& store, bool requires_grad)
    : tape_(&tape), store_(&store) {
  vars_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) vars_.push_back(tape.leaf(store.tensor(i), requires_grad));
}

const Var& ParamBinding::operator[](std::string_view name) const {
  return vars_[store_->index_of(name)];
}

std::vector<Tensor> ParamBinding::grads() const {
  std::vector<Tensor> out;
  out.reserve(vars_.size());
  for (const Var& v : vars_) out.push_back(tape_->grad(v));
  return out;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
  return t;
}

}  // namespace lvst
