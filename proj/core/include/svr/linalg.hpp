#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "svr/rng.hpp"

namespace svr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Single-channel image; rows are the height, columns the width.
using Image = Eigen::MatrixXd;
using ImageStack = std::vector<Image>;

/// Dense row-major tensor of doubles. 2-D for fully connected weights
/// (out x in), 4-D for convolution weights (o x i x K x K).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor from_matrix(const Matrix& m);

  [[nodiscard]] const std::vector<std::size_t>& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  [[nodiscard]] std::size_t size() const { return values_.size(); }

  [[nodiscard]] std::span<double> values() { return values_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

  double& operator()(std::size_t o, std::size_t i, std::size_t kh, std::size_t kw) {
    return values_[((o * shape_[1] + i) * shape_[2] + kh) * shape_[3] + kw];
  }
  double operator()(std::size_t o, std::size_t i, std::size_t kh, std::size_t kw) const {
    return values_[((o * shape_[1] + i) * shape_[2] + kh) * shape_[3] + kw];
  }

  /// Copy of a 2-D tensor as a matrix.
  [[nodiscard]] Matrix as_matrix() const;

  Tensor& operator*=(double s);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

/// Thin SVD M = U diag(S) V^T with r = min(m, n) triplets, S non-increasing.
struct SvdFactors {
  Matrix U;  // m x r, orthonormal columns
  Vector S;  // r
  Matrix V;  // n x r, orthonormal columns

  [[nodiscard]] Eigen::Index rank() const { return S.size(); }
  [[nodiscard]] Matrix reconstruct() const { return U * S.asDiagonal() * V.transpose(); }
};

/// One-sided (Hestenes) Jacobi SVD, iterated until every column pair is
/// orthogonal to 1e-12 relative to the column norms. All min(m, n) triplets
/// are returned, including singular values at or near zero; exact-zero
/// directions are completed to an orthonormal basis.
///
/// Signs: each (U col, V col) pair is flipped so the largest-magnitude entry
/// of the V column is positive (lowest index on ties). Order: stable sort by
/// decreasing sigma, so tied values keep their pre-sort order.
///
/// Throws InputError on non-finite input, NumericalError when the sweep limit
/// is hit.
[[nodiscard]] SvdFactors svd(const Matrix& m);

/// True when two consecutive singular values differ by at most
/// `rel_tol * max(S)`. Adjacency is basis-dependent under such ties.
[[nodiscard]] bool has_tied_singular_values(const Vector& s, double rel_tol = 1e-10);

/// o x i x K x K  ->  o x (i K^2); column ((c K) + kh) K + kw.
[[nodiscard]] Matrix flatten_conv(const Tensor& t);
[[nodiscard]] Tensor unflatten_conv(const Matrix& m, std::size_t in_channels, std::size_t kernel);

/// o x i x K x K  ->  (o K^2) x i; row ((oc K) + kh) K + kw.
[[nodiscard]] Matrix flatten_conv_co(const Tensor& t);
[[nodiscard]] Tensor unflatten_conv_co(const Matrix& m, std::size_t out_channels, std::size_t kernel);

/// Multi-channel 2-D cross-correlation (no kernel flip), stride 1, zero
/// padding (K-1)/2, so output size equals input size. `filter` holds one
/// K x K kernel per input channel; K must be odd.
[[nodiscard]] Image conv2d(std::span<const Image> input, std::span<const Image> filter);

/// Full convolution layer: returns o output images for an o x i x K x K tensor.
[[nodiscard]] ImageStack conv_layer(std::span<const Image> input, const Tensor& weights);

/// The K x K kernels of output channel `out` of a conv tensor.
[[nodiscard]] ImageStack conv_filter(const Tensor& weights, std::size_t out);

/// exp(eps * A) for skew-symmetric A, by scaling and squaring a Taylor series.
[[nodiscard]] Matrix skew_expm(const Matrix& a, double eps);

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
/// of R's diagonal folded into Q.
[[nodiscard]] Matrix random_orthogonal(Eigen::Index n, Rng& rng);

[[nodiscard]] Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace svr
