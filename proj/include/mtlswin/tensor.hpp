#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mtlswin {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

/// Dense row-major n-d array of a single scalar type. Copies are shallow
/// (shared buffer); all operations that produce new values allocate fresh
/// buffers, so shared data is never mutated behind a reader's back.
template <typename S>
class Tensor {
 public:
  using MatrixXS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<MatrixXS>;
  using ConstMatMap = Eigen::Map<const MatrixXS>;
  using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
  using ConstArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

  Tensor() = default;

  explicit Tensor(Shape shape, S fill = S(0))
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<S>>(static_cast<size_t>(shape_numel(shape_)), fill)) {
    for (int64_t d : shape_) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive extent in " + shape_str(shape_));
    }
  }

  static Tensor from_data(Shape shape, std::vector<S> data) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
      throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                  std::to_string(data.size()) + " values");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<S>>(std::move(data));
    return t;
  }

  static Tensor scalar(S v) { return from_data({1}, {v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  bool empty() const { return size() == 0; }

  S* data() { return data_->data(); }
  const S* data() const { return data_->data(); }
  S& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
  S operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  /// Same buffer, new shape. numel must match.
  Tensor reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != size()) {
      throw std::invalid_argument("reshape: " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                                  " changes element count");
    }
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<S>>(*data_);
    return t;
  }

  void fill(S v) { std::fill(data_->begin(), data_->end(), v); }

  bool all_finite() const {
    for (S v : *data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  bool same_values(const Tensor& o) const {
    return shape_ == o.shape_ && *data_ == *o.data_;
  }

  bool shares_data(const Tensor& o) const { return data_ == o.data_; }

  MatMap mat(int64_t rows, int64_t cols) {
    check_view(rows * cols);
    return MatMap(data(), rows, cols);
  }
  ConstMatMap mat(int64_t rows, int64_t cols) const {
    check_view(rows * cols);
    return ConstMatMap(data(), rows, cols);
  }
  /// View with the last extent as columns and everything else collapsed to rows.
  MatMap mat2d() { return mat(size() / last_dim(), last_dim()); }
  ConstMatMap mat2d() const { return mat(size() / last_dim(), last_dim()); }

  ArrMap arr() { return ArrMap(data(), size()); }
  ConstArrMap arr() const { return ConstArrMap(data(), size()); }

  int64_t last_dim() const {
    if (shape_.empty()) throw std::invalid_argument("Tensor: rank-0 has no last extent");
    return shape_.back();
  }

  template <typename T>
  Tensor<T> cast() const {
    std::vector<T> out(static_cast<size_t>(size()));
    for (int64_t i = 0; i < size(); ++i) out[static_cast<size_t>(i)] = static_cast<T>((*data_)[i]);
    return Tensor<T>::from_data(shape_, std::move(out));
  }

 private:
  void check_view(int64_t n) const {
    if (n != size()) {
      throw std::invalid_argument("Tensor view of " + std::to_string(n) + " elements on " +
                                  shape_str(shape_));
    }
  }

  Shape shape_;
  std::shared_ptr<std::vector<S>> data_;
};

}  // namespace mtlswin
