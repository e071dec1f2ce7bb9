#include "svr/dims.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "svr/error.hpp"
#include "svr/parallel.hpp"
#include "svr/spectra.hpp"

namespace svr {

namespace {

// Deviations closer than this are treated as equal, so exact-null inputs
// resolve through the tie-break rather than through rounding noise.
constexpr double kTieTolerance = 1e-12;

void require_orthonormal(const Matrix& m, const char* what) {
  const Matrix g = m.transpose() * m;
  if ((g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() > 1e-9)
    throw InputError(std::string("projection_identity_check: ") + what + " columns are not orthonormal");
}

}  // namespace

CumulativeMatrix cumulative_matrix(const Matrix& a, std::size_t n) {
  CumulativeMatrix c{Matrix::Zero(a.rows(), a.cols()), n};
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      row += a(i, j);
      c.B(i, j) = row + (i > 0 ? c.B(i - 1, j) : 0.0);
    }
  }
  return c;
}

InternalDims internal_dims(const Matrix& a, std::size_t n) {
  if (a.size() == 0) throw InputError("internal_dims: empty adjacency");
  if (n == 0) throw InputError("internal_dims: null dimension must be >= 1");
  const CumulativeMatrix c = cumulative_matrix(a, n);
  const double nn = static_cast<double>(n);
  InternalDims best{1, 1, c.B(0, 0) - 1.0 / nn};
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double dev = c.B(i, j) - static_cast<double>((i + 1) * (j + 1)) / nn;
      if (dev > best.deviation + kTieTolerance)
        best = InternalDims{static_cast<std::size_t>(i + 1), static_cast<std::size_t>(j + 1), dev};
    }
  }
  return best;
}

double projection_identity_check(const Matrix& u_cols, const Matrix& v_cols, std::size_t i, std::size_t j,
                                 bool swapped) {
  if (u_cols.rows() != v_cols.rows()) throw InputError("projection_identity_check: ambient dimensions differ");
  if (j > static_cast<std::size_t>(u_cols.cols()) || i > static_cast<std::size_t>(v_cols.cols()))
    throw InputError("projection_identity_check: subspace index out of range");
  require_orthonormal(u_cols, "U");
  require_orthonormal(v_cols, "V");
  const Matrix uj = u_cols.leftCols(static_cast<Eigen::Index>(j));
  const Matrix vi = v_cols.leftCols(static_cast<Eigen::Index>(i));
  const Matrix pf = uj * uj.transpose();
  const Matrix pg = vi * vi.transpose();
  return swapped ? (pg * pf).squaredNorm() : (pf * pg).squaredNorm();
}

Vector color_intensity(const Matrix& a, std::size_t n) {
  if (n == 0) throw InputError("color_intensity: null dimension must be >= 1");
  const double nn = static_cast<double>(n);
  Vector raw = Vector::Zero(a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    double running = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      running += a(i, j);
      best = std::max(best, running - static_cast<double>(i + 1) / nn);
    }
    raw(j) = std::max(0.0, best);
  }
  const double top = raw.size() ? raw.maxCoeff() : 0.0;
  if (top > 0.0) raw /= top;
  return raw;
}

void assign_colors(SvrGraph& graph) {
  for (std::size_t i = 0; i < graph.adjacencies.size(); ++i) {
    const AdjacencyMatrix& adj = graph.adjacencies[i];
    const Vector c = color_intensity(adj.values, adj.n_null);
    for (auto& neuron : graph.neurons[i]) neuron.color = c(static_cast<Eigen::Index>(neuron.rank));
  }
  if (!graph.adjacencies.empty()) {
    const AdjacencyMatrix& last = graph.adjacencies.back();
    const Vector c = color_intensity(last.values.transpose(), last.n_null);
    for (auto& neuron : graph.neurons.back()) neuron.color = c(static_cast<Eigen::Index>(neuron.rank));
  }
}

std::string BlockNoiseReport::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "# n=" << n << " p=" << block << " trials=" << trials << " seed=" << seed
      << " ci=normal95 index_base=1\n";
  out << "eps,mean_d_out,ci_low,ci_high\n";
  for (const BlockNoisePoint& p : points)
    out << p.eps << ',' << p.mean_d_out << ',' << p.ci_low << ',' << p.ci_high << '\n';
  return out.str();
}

BlockNoiseReport block_noise_experiment(std::size_t n, std::size_t p, std::span<const double> eps_grid,
                                        std::size_t trials, std::uint64_t seed, unsigned threads) {
  if (p < 1 || p >= n) throw InputError("block_noise_experiment: need 1 <= p < n");
  if (trials == 0) throw InputError("block_noise_experiment: trials must be >= 1");
  const auto ni = static_cast<Eigen::Index>(n);
  const auto pi = static_cast<Eigen::Index>(p);

  std::vector<std::vector<std::size_t>> found(trials, std::vector<std::size_t>(eps_grid.size()));
  parallel_for(trials, threads, [&](std::size_t t) {
    Rng rng = Rng::stream(seed, t);
    Matrix block = Matrix::Zero(ni, ni);
    block.topLeftCorner(pi, pi) = random_orthogonal(pi, rng);
    block.bottomRightCorner(ni - pi, ni - pi) = random_orthogonal(ni - pi, rng);
    const Matrix g = gaussian_matrix(ni, ni, rng);
    const Matrix skew = g - g.transpose();
    for (std::size_t e = 0; e < eps_grid.size(); ++e) {
      const Matrix noisy = block * skew_expm(skew, eps_grid[e]);
      found[t][e] = internal_dims(noisy.array().square().matrix(), n).d_out;
    }
  });

  BlockNoiseReport report{n, p, trials, seed, {}};
  for (std::size_t e = 0; e < eps_grid.size(); ++e) {
    BlockNoisePoint pt;
    pt.eps = eps_grid[e];
    for (std::size_t t = 0; t < trials; ++t) pt.per_trial.push_back(found[t][e]);
    const double count = static_cast<double>(trials);
    pt.mean_d_out = std::accumulate(pt.per_trial.begin(), pt.per_trial.end(), 0.0) / count;
    double ss = 0.0;
    for (std::size_t v : pt.per_trial) ss += (static_cast<double>(v) - pt.mean_d_out) * (static_cast<double>(v) - pt.mean_d_out);
    const double half = trials > 1 ? 1.96 * std::sqrt(ss / (count - 1.0)) / std::sqrt(count) : 0.0;
    pt.ci_low = pt.mean_d_out - half;
    pt.ci_high = pt.mean_d_out + half;
    report.points.push_back(std::move(pt));
  }
  return report;
}

}  // namespace svr
