#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svr/linalg.hpp"

namespace svr {

struct SvrGraph;

/// B(i, j) = sum over k <= i, l <= j of A(k, l) (1-based ranges; stored 0-based).
struct CumulativeMatrix {
  Matrix B;
  std::size_t n = 0;  // null dimension used for the ij/n baseline
};

/// Internal dimensions of one adjacency; 1-based like the cumulative ranges.
struct InternalDims {
  std::size_t d_out = 1;  // row count of the top-left block (next layer)
  std::size_t d_in = 1;   // column count of the top-left block (previous layer)
  double deviation = 0;   // B(d_out, d_in) - d_out d_in / n
};

CumulativeMatrix cumulative_matrix(const Matrix& a, std::size_t n);

/// argmax over (i, j) of B(i, j) - i j / n, ties to the smallest i then j.
InternalDims internal_dims(const Matrix& a, std::size_t n);

/// ||p_F o p_G||_F^2 with F = span of the first j columns of `u_cols` and G the
/// span of the first i columns of `v_cols`. `swapped` evaluates p_G o p_F.
/// Throws InputError when either column set is not orthonormal.
double projection_identity_check(const Matrix& u_cols, const Matrix& v_cols, std::size_t i, std::size_t j,
                                 bool swapped = false);

/// Per column j: max over i of (sum_{k<=i} A(k, j) - i/n), negatives clamped to
/// 0, then divided by the layer maximum (all zeros when the maximum is 0).
Vector color_intensity(const Matrix& a, std::size_t n);

/// Colors every spectral neuron of the graph: layers feeding an adjacency use
/// its columns; the last layer uses the rows of the final adjacency.
void assign_colors(SvrGraph& graph);

struct BlockNoisePoint {
  double eps = 0;
  double mean_d_out = 0;
  double ci_low = 0;
  double ci_high = 0;
  std::vector<std::size_t> per_trial;
};

struct BlockNoiseReport {
  std::size_t n = 0, block = 0, trials = 0;
  std::uint64_t seed = 0;
  std::vector<BlockNoisePoint> points;

  /// eps,mean_d_out,ci_low,ci_high (95% normal interval).
  [[nodiscard]] std::string to_csv() const;
};

/// Recovers the size of the leading block of a noisy block-orthogonal matrix:
/// P = diag(Q_p, Q_{n-p}) with Haar Q's, P(eps) = P exp(eps (G - G^T)) for a
/// standard Gaussian G, then d_out of internal_dims(P(eps)^2, n). Each trial
/// draws (Q_p, Q_{n-p}, G) once and reuses them across the eps grid.
BlockNoiseReport block_noise_experiment(std::size_t n, std::size_t p, std::span<const double> eps_grid,
                                        std::size_t trials, std::uint64_t seed, unsigned threads = 1);

}  // namespace svr
