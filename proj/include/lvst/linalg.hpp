#pragma once

#include <functional>
#include <vector>

#include "lvst/tensor.hpp"

namespace lvst {

struct SymEig {
  std::vector<double> values;  // ascending
  Tensor vectors;              // column i is the eigenvector of values[i]
  int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for a symmetric matrix. The input is symmetrized
/// as (m + m^T)/2 first. Each eigenvector's largest-magnitude component is
/// made positive (first index wins ties).
SymEig sym_eig(const Tensor& m);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every i.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double eps = 1e-4);

}  // namespace lvst
