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

#include "grm/tensor.h"

#include <bit>
#include <cmath>
#include <sstream>

#include "grm/errors.h"

namespace grm {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void CheckExtents(const Shape& shape) {
  for (std::size_t extent : shape) {
    if (extent == 0) {
      Throw(ErrorCode::kDimension, "zero extent in shape " + ShapeToString(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(NumElements(shape_), fill) {
  CheckExtents(shape_);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  CheckExtents(shape_);
  if (data_.size() != NumElements(shape_)) {
    Throw(ErrorCode::kDimension, "shape " + ShapeToString(shape_) + " needs " +
                                     std::to_string(NumElements(shape_)) +
                                     " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(n * m);
  for (const auto& row : rows) {
    if (row.size() != m) Throw(ErrorCode::kDimension, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({n, m}, std::move(data));
}

Tensor Tensor::Vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    Throw(ErrorCode::kDimension,
          "axis " + std::to_string(axis) + " out of range for " + ShapeToString(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    Throw(ErrorCode::kContract, "item() on non-scalar " + ShapeToString(shape_));
  }
  return data_[0];
}

Tensor Tensor::Reshaped(Shape shape) const {
  if (NumElements(shape) != data_.size()) {
    Throw(ErrorCode::kDimension,
          "cannot reshape " + ShapeToString(shape_) + " to " + ShapeToString(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool BitwiseEqual(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) {
      return false;
    }
  }
  return true;
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    Throw(ErrorCode::kDimension,
          "MaxAbsDiff shape mismatch " + ShapeToString(a.shape()) + " vs " +
              ShapeToString(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

Mask::Mask(Shape shape, bool fill)
    : shape_(std::move(shape)), bits_(NumElements(shape_), fill ? 1 : 0) {}

Mask::Mask(Shape shape, std::vector<std::uint8_t> bits)
    : shape_(std::move(shape)), bits_(std::move(bits)) {
  if (bits_.size() != NumElements(shape_)) {
    Throw(ErrorCode::kDimension, "mask shape " + ShapeToString(shape_) +
                                     " does not match " + std::to_string(bits_.size()) +
                                     " entries");
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

Tensor Mask::AsTensor() const {
  std::vector<double> values(bits_.size());
  for (std::size_t i = 0; i < bits_.size(); ++i) values[i] = bits_[i] ? 1.0 : 0.0;
  return Tensor(shape_, std::move(values));
}

std::size_t Mask::CountValid() const {
  std::size_t n = 0;
  for (auto b : bits_) n += b;
  return n;
}

}  // namespace grm
