/* Copyright 2026 The GRM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef GRM_TENSOR_H_
#define GRM_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace grm {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

// Dense row-major f64 array. A rank-0 shape holds one element.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Scalar(double value) { return Tensor(Shape{}, {value}); }
  static Tensor Matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor Vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Value of a single-element tensor.
  double item() const;

  Tensor Reshaped(Shape shape) const;

  bool AllFinite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Identical shapes and identical bit patterns (distinguishes -0.0 from 0.0).
bool BitwiseEqual(const Tensor& a, const Tensor& b);

double MaxAbsDiff(const Tensor& a, const Tensor& b);

// Boolean validity mask; true marks a valid entry.
class Mask {
 public:
  Mask() = default;
  explicit Mask(Shape shape, bool fill = true);
  Mask(Shape shape, std::vector<std::uint8_t> bits);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  bool at(std::size_t i, std::size_t j) const { return bits_[i * shape_[1] + j] != 0; }
  void set(std::size_t i, bool value) { bits_[i] = value ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  // 1.0 for valid entries, 0.0 otherwise.
  Tensor AsTensor() const;
  std::size_t CountValid() const;

  bool operator==(const Mask&) const = default;

 private:
  Shape shape_;
  std::vector<std::uint8_t> bits_;
};

}  // namespace grm

#endif  // GRM_TENSOR_H_
