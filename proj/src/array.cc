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

#include "seqtrans/array.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace seqtrans {

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t ShapeSize(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

static void CheckExtents(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) {
      throw ShapeError("array extents must be positive, got " +
                       ShapeToString(shape));
    }
  }
}

Array::Array(Shape shape, double fill)
    : shape_(std::move(shape)), data_(ShapeSize(shape_), fill) {
  CheckExtents(shape_);
}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  CheckExtents(shape_);
  if (data_.size() != ShapeSize(shape_)) {
    throw ShapeError("array of shape " + ShapeToString(shape_) + " needs " +
                     std::to_string(ShapeSize(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

std::size_t Array::rows() const {
  if (shape_.empty()) return 1;
  return data_.size() / shape_.back();
}

std::size_t Array::cols() const {
  return shape_.empty() ? 1 : shape_.back();
}

double Array::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on non-scalar array of shape " +
                     ShapeToString(shape_));
  }
  return data_[0];
}

Array Array::Reshaped(Shape shape) const {
  if (ShapeSize(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + ShapeToString(shape_) + " to " +
                     ShapeToString(shape));
  }
  return Array(std::move(shape), data_);
}

void Array::Fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Array::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void CheckSameShape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     ShapeToString(a) + " vs " + ShapeToString(b));
  }
}

}  // namespace seqtrans
