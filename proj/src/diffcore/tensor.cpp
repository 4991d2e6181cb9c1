#include "dcreg/tensor.hpp"

#include <cmath>
#include <sstream>

#include "dcreg/error.hpp"

namespace dcreg {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (element_count(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_string() + " does not hold " + std::to_string(data.size()) +
                     " elements");
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> s) { return filled(std::move(s), 0.0); }

Tensor Tensor::filled(std::vector<std::size_t> s, double value) {
  auto n = element_count(s);
  return Tensor(std::move(s), std::vector<double>(n, value));
}

Tensor Tensor::vector(std::vector<double> v) {
  auto n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

std::size_t Tensor::rows() const {
  if (shape.empty()) return 1;
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() < 2) return 1;
  return shape[1];
}

double Tensor::item() const {
  if (data.size() != 1) throw ShapeError("tensor: item() on shape " + shape_string());
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace dcreg
