#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace frvi {

// Error hierarchy shared by every module. The CLI maps InputError to exit
// code 2 and NumericError to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class InputError : public Error {
 public:
  using Error::Error;
};
class ShapeError : public InputError {
 public:
  using InputError::InputError;
};
class IoError : public InputError {
 public:
  using InputError::InputError;
};
class NumericError : public Error {
 public:
  using Error::Error;
};

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  int plane() const { return height * width; }
  std::int64_t size() const {
    return static_cast<std::int64_t>(channels) * height * width;
  }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << "(" << s.channels << ", " << s.height << ", " << s.width << ")";
  return os.str();
}

inline void require_shape(const Shape& got, const Shape& want,
                          const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": shape " + to_string(got) +
                     " does not match " + to_string(want));
  }
}

// Dense channel-first 3-D array. Storage is a row-major (channels x H*W)
// Eigen matrix, so one channel is one contiguous row and convolutions map
// directly onto GEMM.
template <typename Scalar>
class Tensor3 {
 public:
  using Matrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor3() = default;
  Tensor3(int channels, int height, int width)
      : shape_{channels, height, width},
        data_(Matrix::Zero(channels, height * width)) {}
  explicit Tensor3(Shape s) : Tensor3(s.channels, s.height, s.width) {}
  Tensor3(Shape s, Matrix data) : shape_(s), data_(std::move(data)) {
    if (data_.rows() != s.channels || data_.cols() != s.plane()) {
      throw ShapeError("Tensor3: storage does not match " + to_string(s));
    }
  }

  static Tensor3 zeros(Shape s) { return Tensor3(s); }
  static Tensor3 constant(Shape s, Scalar v) {
    return Tensor3(s, Matrix::Constant(s.channels, s.plane(), v));
  }
  static Tensor3 scalar(Scalar v) { return constant({1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::int64_t size() const { return shape_.size(); }
  bool empty() const { return shape_.size() == 0; }

  Scalar& operator()(int c, int y, int x) {
    return data_(c, y * shape_.width + x);
  }
  Scalar operator()(int c, int y, int x) const {
    return data_(c, y * shape_.width + x);
  }

  Matrix& matrix() { return data_; }
  const Matrix& matrix() const { return data_; }
  auto array() { return data_.array(); }
  auto array() const { return data_.array(); }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor");
    return data_(0, 0);
  }

  bool all_finite() const { return data_.allFinite(); }

  template <typename Other>
  Tensor3<Other> cast() const {
    return Tensor3<Other>(shape_, data_.template cast<Other>());
  }

  bool operator==(const Tensor3& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  Shape shape_;
  Matrix data_;
};

using Real = double;
using Tensor = Tensor3<Real>;

// Broadcasts a single-channel tensor to `channels` rows.
template <typename Scalar>
Tensor3<Scalar> broadcast_channels(const Tensor3<Scalar>& t, int channels) {
  if (t.channels() == channels) return t;
  if (t.channels() != 1) {
    throw ShapeError("broadcast_channels: source must have one channel");
  }
  typename Tensor3<Scalar>::Matrix m =
      t.matrix().replicate(channels, 1);
  return Tensor3<Scalar>({channels, t.height(), t.width()}, std::move(m));
}

template <typename Scalar>
Scalar max_abs_diff(const Tensor3<Scalar>& a, const Tensor3<Scalar>& b) {
  require_shape(b.shape(), a.shape(), "max_abs_diff");
  if (a.size() == 0) return Scalar(0);
  return (a.array() - b.array()).abs().maxCoeff();
}

}  // namespace frvi
