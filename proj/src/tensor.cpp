#include "lvst/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lvst/kernels.hpp"

namespace lvst {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(numel(shape_), fill) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one axis");
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one axis");
  if (values_.size() != numel(shape_)) {
    throw DimensionError("tensor of shape " + shape_str(shape_) + " given " +
                         std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n_rows = rows.size();
  const std::size_t n_cols = n_rows ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(n_rows * n_cols);
  for (const auto& r : rows) {
    if (r.size() != n_cols) throw DimensionError("ragged rows in from_rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({n_rows, n_cols}, std::move(v));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(shape_));
  }
  return values_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != values_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), values_);
}

Tensor Tensor::transposed() const {
  if (rank() != 2) throw DimensionError("transpose needs a 2-D tensor, got " + shape_str(shape_));
  Tensor out({shape_[1], shape_[0]});
  for (std::size_t i = 0; i < shape_[0]; ++i)
    for (std::size_t j = 0; j < shape_[1]; ++j) out(j, i) = (*this)(i, j);
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  kernels::parallel::gemm(false, false, a.dim(0), b.dim(1), a.dim(1), a.data(), b.data(), c.data(),
                          false);
  return c;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.values()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void write_tensor_csv(std::ostream& os, const Tensor& t) {
  os << "# shape ";
  for (std::size_t i = 0; i < t.rank(); ++i) {
    if (i) os << 'x';
    os << t.dim(i);
  }
  os << '\n';
  const std::size_t cols = t.shape().back();
  std::ostringstream line;
  line.precision(17);
  for (std::size_t i = 0; i < t.size(); ++i) {
    line << t[i];
    if ((i + 1) % cols == 0) {
      os << line.str() << '\n';
      line.str("");
    } else {
      line << ',';
    }
  }
}

Tensor read_tensor_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# shape ", 0) != 0) throw InputError("tensor CSV: missing '# shape' header");
  Shape shape;
  std::istringstream hs(line.substr(8));
  std::string tok;
  while (std::getline(hs, tok, 'x')) {
    try {
      std::size_t pos = 0;
      const unsigned long long e = std::stoull(tok, &pos);
      if (pos != tok.size() || e == 0) throw InputError("");
      shape.push_back(static_cast<std::size_t>(e));
    } catch (const std::exception&) {
      throw InputError("tensor CSV: bad shape '" + line.substr(8) + "'");
    }
  }
  if (shape.empty()) throw InputError("tensor CSV: empty shape");
  std::vector<double> values;
  values.reserve(numel(shape));
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t count = 0;
    while (std::getline(ls, tok, ',')) {
      try {
        std::size_t pos = 0;
        values.push_back(std::stod(tok, &pos));
        if (pos != tok.size()) throw InputError("");
      } catch (const std::exception&) {
        throw InputError("tensor CSV line " + std::to_string(line_no) + ": bad value '" + tok + "'");
      }
      ++count;
    }
    if (count != shape.back())
      throw InputError("tensor CSV line " + std::to_string(line_no) + ": expected " + std::to_string(shape.back()) +
                       " values, got " + std::to_string(count));
  }
  if (values.size() != numel(shape)) throw InputError("tensor CSV: value count does not match shape " + shape_str(shape));
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace lvst
