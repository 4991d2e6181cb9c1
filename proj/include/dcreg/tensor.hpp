#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace dcreg {

/// Dense row-major array of doubles with an explicit shape.
///
/// A scalar has an empty shape and one element. Vectors are rank 1, batches
/// and weight matrices rank 2; nothing in the library needs higher ranks.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() : data(1, 0.0) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor zeros(std::vector<std::size_t> s);
  static Tensor filled(std::vector<std::size_t> s, double value);
  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  double item() const;

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool all_finite() const;
  std::string shape_string() const;
};

std::size_t element_count(const std::vector<std::size_t>& shape);

}  // namespace dcreg
