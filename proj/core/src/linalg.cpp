#include "svr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "svr/error.hpp"

namespace svr {

namespace {

constexpr double kJacobiTolerance = 1e-12;
constexpr int kMaxSweeps = 80;
constexpr double kSeriesTolerance = 1e-14;

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    std::ostringstream msg;
    msg << what << ": expected a " << rank << "-D tensor, got " << t.rank() << "-D";
    throw InputError(msg.str());
  }
}

// Orthonormal completion of the columns of `u` flagged in `missing`, against
// all other columns. Uses canonical basis vectors as candidates.
void complete_basis(Matrix& u, const std::vector<bool>& missing) {
  std::vector<Eigen::Index> filled;
  for (Eigen::Index k = 0; k < u.cols(); ++k)
    if (!missing[k]) filled.push_back(k);

  Eigen::Index candidate = 0;
  for (Eigen::Index k = 0; k < u.cols(); ++k) {
    if (!missing[k]) continue;
    for (; candidate < u.rows(); ++candidate) {
      Vector v = Vector::Unit(u.rows(), candidate);
      for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index f : filled) v -= u.col(f).dot(v) * u.col(f);
      const double norm = v.norm();
      if (norm > 0.5) {
        u.col(k) = v / norm;
        filled.push_back(k);
        ++candidate;
        break;
      }
    }
  }
}

// Jacobi SVD for rows >= cols.
SvdFactors tall_svd(const Matrix& m) {
  const Eigen::Index n = m.cols();
  Matrix a = m;
  Matrix v = Matrix::Identity(n, n);

  bool converged = n < 2;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = a.col(p).squaredNorm();
        const double beta = a.col(q).squaredNorm();
        const double gamma = a.col(p).dot(a.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= kJacobiTolerance * std::sqrt(alpha) * std::sqrt(beta))
          continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::abs(zeta) > 1e150
                             ? 0.5 / zeta
                             : std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Matrix* target : {&a, &v}) {
          auto cp = target->col(p);
          auto cq = target->col(q);
          for (Eigen::Index r = 0; r < target->rows(); ++r) {
            const double xp = cp(r);
            const double xq = cq(r);
            cp(r) = c * xp - s * xq;
            cq(r) = s * xp + c * xq;
          }
        }
      }
    }
  }
  if (!converged) throw NumericalError("svd: Jacobi sweeps did not converge");

  SvdFactors f{Matrix(m.rows(), n), Vector(n), std::move(v)};
  std::vector<bool> missing(static_cast<std::size_t>(n), false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double sigma = a.col(k).norm();
    f.S(k) = sigma;
    if (sigma > 0.0 && std::isfinite(1.0 / sigma)) {
      f.U.col(k) = a.col(k) / sigma;
    } else {
      f.S(k) = 0.0;
      f.U.col(k).setZero();
      missing[k] = true;
    }
  }
  complete_basis(f.U, missing);
  return f;
}

void sort_and_fix_signs(SvdFactors& f) {
  const Eigen::Index r = f.S.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return f.S(x) > f.S(y); });

  SvdFactors sorted{Matrix(f.U.rows(), r), Vector(r), Matrix(f.V.rows(), r)};
  for (Eigen::Index k = 0; k < r; ++k) {
    const Eigen::Index src = order[k];
    sorted.U.col(k) = f.U.col(src);
    sorted.S(k) = f.S(src);
    sorted.V.col(k) = f.V.col(src);
  }
  for (Eigen::Index k = 0; k < r; ++k) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < sorted.V.rows(); ++i)
      if (std::abs(sorted.V(i, k)) > std::abs(sorted.V(best, k))) best = i;
    if (sorted.V.rows() > 0 && sorted.V(best, k) < 0.0) {
      sorted.U.col(k) *= -1.0;
      sorted.V.col(k) *= -1.0;
    }
  }
  f = std::move(sorted);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)), values_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_)) throw InputError("tensor: value count does not match shape");
}

Tensor Tensor::from_matrix(const Matrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t(r, c) = m(r, c);
  return t;
}

Matrix Tensor::as_matrix() const {
  require_rank(*this, 2, "as_matrix");
  Matrix m(shape_[0], shape_[1]);
  for (std::size_t r = 0; r < shape_[0]; ++r)
    for (std::size_t c = 0; c < shape_[1]; ++c) m(r, c) = (*this)(r, c);
  return m;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

SvdFactors svd(const Matrix& m) {
  if (!m.allFinite()) throw InputError("svd: matrix has non-finite entries");
  SvdFactors f;
  if (m.rows() >= m.cols()) {
    f = tall_svd(m);
  } else {
    SvdFactors t = tall_svd(m.transpose());
    f = SvdFactors{std::move(t.V), std::move(t.S), std::move(t.U)};
  }
  sort_and_fix_signs(f);
  return f;
}

bool has_tied_singular_values(const Vector& s, double rel_tol) {
  if (s.size() < 2) return false;
  const double scale = s.maxCoeff();
  for (Eigen::Index k = 0; k + 1 < s.size(); ++k)
    if (s(k) - s(k + 1) <= rel_tol * scale) return true;
  return false;
}

Matrix flatten_conv(const Tensor& t) {
  require_rank(t, 4, "flatten_conv");
  const std::size_t o = t.dim(0), in = t.dim(1), k = t.dim(2);
  if (t.dim(3) != k) throw InputError("flatten_conv: kernel must be square");
  Matrix m(o, in * k * k);
  for (std::size_t r = 0; r < o; ++r)
    for (std::size_t c = 0; c < in; ++c)
      for (std::size_t kh = 0; kh < k; ++kh)
        for (std::size_t kw = 0; kw < k; ++kw) m(r, (c * k + kh) * k + kw) = t(r, c, kh, kw);
  return m;
}

Tensor unflatten_conv(const Matrix& m, std::size_t in_channels, std::size_t kernel) {
  const auto cols = static_cast<std::size_t>(m.cols());
  if (in_channels * kernel * kernel != cols) throw InputError("unflatten_conv: column count mismatch");
  const auto o = static_cast<std::size_t>(m.rows());
  Tensor t({o, in_channels, kernel, kernel});
  for (std::size_t r = 0; r < o; ++r)
    for (std::size_t c = 0; c < in_channels; ++c)
      for (std::size_t kh = 0; kh < kernel; ++kh)
        for (std::size_t kw = 0; kw < kernel; ++kw) t(r, c, kh, kw) = m(r, (c * kernel + kh) * kernel + kw);
  return t;
}

Matrix flatten_conv_co(const Tensor& t) {
  require_rank(t, 4, "flatten_conv_co");
  const std::size_t o = t.dim(0), in = t.dim(1), k = t.dim(2);
  if (t.dim(3) != k) throw InputError("flatten_conv_co: kernel must be square");
  Matrix m(o * k * k, in);
  for (std::size_t r = 0; r < o; ++r)
    for (std::size_t c = 0; c < in; ++c)
      for (std::size_t kh = 0; kh < k; ++kh)
        for (std::size_t kw = 0; kw < k; ++kw) m((r * k + kh) * k + kw, c) = t(r, c, kh, kw);
  return m;
}

Tensor unflatten_conv_co(const Matrix& m, std::size_t out_channels, std::size_t kernel) {
  const auto rows = static_cast<std::size_t>(m.rows());
  if (out_channels * kernel * kernel != rows) throw InputError("unflatten_conv_co: row count mismatch");
  const auto in = static_cast<std::size_t>(m.cols());
  Tensor t({out_channels, in, kernel, kernel});
  for (std::size_t r = 0; r < out_channels; ++r)
    for (std::size_t c = 0; c < in; ++c)
      for (std::size_t kh = 0; kh < kernel; ++kh)
        for (std::size_t kw = 0; kw < kernel; ++kw) t(r, c, kh, kw) = m((r * kernel + kh) * kernel + kw, c);
  return t;
}

Image conv2d(std::span<const Image> input, std::span<const Image> filter) {
  if (input.size() != filter.size()) throw InputError("conv2d: channel count mismatch between input and filter");
  if (input.empty()) throw InputError("conv2d: no channels");
  const Eigen::Index k = filter[0].rows();
  if (k % 2 == 0) throw InputError("conv2d: kernel size must be odd");
  const Eigen::Index h = input[0].rows(), w = input[0].cols();
  const Eigen::Index pad = k / 2;

  Image out = Image::Zero(h, w);
  for (std::size_t c = 0; c < input.size(); ++c) {
    const Image& x = input[c];
    const Image& f = filter[c];
    if (x.rows() != h || x.cols() != w) throw InputError("conv2d: channel images differ in size");
    if (f.rows() != k || f.cols() != k) throw InputError("conv2d: filter kernels differ in size");
    for (Eigen::Index kh = 0; kh < k; ++kh) {
      for (Eigen::Index kw = 0; kw < k; ++kw) {
        const double coef = f(kh, kw);
        if (coef == 0.0) continue;
        const Eigen::Index dy = kh - pad, dx = kw - pad;
        const Eigen::Index y0 = std::max<Eigen::Index>(0, -dy), y1 = std::min(h, h - dy);
        const Eigen::Index x0 = std::max<Eigen::Index>(0, -dx), x1 = std::min(w, w - dx);
        if (y1 <= y0 || x1 <= x0) continue;
        out.block(y0, x0, y1 - y0, x1 - x0) += coef * x.block(y0 + dy, x0 + dx, y1 - y0, x1 - x0);
      }
    }
  }
  return out;
}

ImageStack conv_filter(const Tensor& weights, std::size_t out) {
  require_rank(weights, 4, "conv_filter");
  const std::size_t in = weights.dim(1), k = weights.dim(2);
  ImageStack f(in, Image(k, k));
  for (std::size_t c = 0; c < in; ++c)
    for (std::size_t kh = 0; kh < k; ++kh)
      for (std::size_t kw = 0; kw < k; ++kw) f[c](kh, kw) = weights(out, c, kh, kw);
  return f;
}

ImageStack conv_layer(std::span<const Image> input, const Tensor& weights) {
  require_rank(weights, 4, "conv_layer");
  if (weights.dim(1) != input.size()) throw InputError("conv_layer: input channel mismatch");
  ImageStack out;
  out.reserve(weights.dim(0));
  for (std::size_t o = 0; o < weights.dim(0); ++o) {
    const ImageStack f = conv_filter(weights, o);
    out.push_back(conv2d(input, f));
  }
  return out;
}

Matrix skew_expm(const Matrix& a, double eps) {
  if (a.rows() != a.cols()) throw InputError("skew_expm: matrix must be square");
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw InputError("skew_expm: eps must be finite and >= 0");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a + a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InputError("skew_expm: matrix is not skew-symmetric");

  const Eigen::Index n = a.rows();
  const Matrix b = eps * a;
  const double norm1 = n == 0 ? 0.0 : b.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  const Matrix c = b / std::ldexp(1.0, squarings);

  Matrix result = Matrix::Identity(n, n);
  Matrix term = Matrix::Identity(n, n);
  for (int k = 1; k < 64; ++k) {
    term = (term * c) / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() < kSeriesTolerance) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) g(r, c) = normal(rng);
  return g;
}

Matrix random_orthogonal(Eigen::Index n, Rng& rng) {
  const Matrix g = gaussian_matrix(n, n, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const auto& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

}  // namespace svr
