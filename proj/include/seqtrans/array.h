// Copyright 2026 The seqtrans Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SEQTRANS_ARRAY_H_
#define SEQTRANS_ARRAY_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqtrans {

using Shape = std::vector<std::size_t>;

// Raised when operand shapes are incompatible or a configuration is invalid.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string ShapeToString(const Shape& shape);
std::size_t ShapeSize(const Shape& shape);

// Dense row-major float64 array. A rank-0 array (empty shape) is a scalar.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> data);

  static Array Scalar(double value) { return Array(Shape{}, value); }
  static Array Matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> data) {
    return Array(Shape{rows, cols}, std::move(data));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const { return data_.empty(); }

  // Rows/cols view an array as 2-D: the last axis is the column axis.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }
  double item() const;

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols(), cols()};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  Array Reshaped(Shape shape) const;
  void Fill(double value);
  bool AllFinite() const;

  friend bool operator==(const Array& a, const Array& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws ShapeError naming both shapes unless they are equal.
void CheckSameShape(const Shape& a, const Shape& b, const char* what);

}  // namespace seqtrans

#endif  // SEQTRANS_ARRAY_H_
