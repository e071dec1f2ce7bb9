#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "svr/linalg.hpp"
#include "svr/stats.hpp"
#include "svr/tensorio.hpp"

namespace svr {

/// One singular direction of a layer: (U column, sigma, V column).
struct SpectralNeuron {
  std::size_t layer = 0;
  std::size_t rank = 0;  // 0-based, by decreasing sigma
  double sigma = 0;
  Vector in_rep;   // V column, length i (fc) or i*K^2 (conv)
  Vector out_rep;  // U column, length o
  double color = 0;  // in [0, 1]; see assign_colors()
};

enum class AdjacencyKind { fc, conv, cross };
std::string to_string(AdjacencyKind kind);

/// Rows index the next layer's spectral neurons, columns the previous layer's.
struct AdjacencyMatrix {
  Matrix values;
  AdjacencyKind kind = AdjacencyKind::fc;
  std::size_t n_null = 0;  // shared-space dimension (channels / features of the earlier layer)
  std::size_t k_null = 1;  // chi-square degrees of freedom: 1, K^2, or spatial taps
  // Non-empty when a convention had to be chosen for the layer boundary.
  std::string boundary_note;

  /// Throws InputError for cross adjacency, which has no null model.
  [[nodiscard]] NullModel null_model() const;
};

/// SVD of one flattened layer plus how its V rows split into (channel, tap).
struct LayerFactors {
  LayerKind kind = LayerKind::fc;
  std::size_t in_channels = 0;
  std::size_t taps = 1;  // K^2 for conv, spatial positions for fc-after-conv, else 1
  std::size_t kernel = 1;
  SvdFactors svd;
  bool tied = false;
};

struct SvrGraph {
  std::vector<std::vector<SpectralNeuron>> neurons;
  std::vector<AdjacencyMatrix> adjacencies;
  std::vector<bool> tie_flags;
  std::vector<LayerFactors> factors;

  [[nodiscard]] std::size_t layer_count() const { return neurons.size(); }
};

/// Factor one layer: fc weights directly, conv weights after flatten_conv.
LayerFactors factor_layer(const LayerSpec& spec, const Tensor& weights);

/// Entry (j, k) = <V_next[:, j], U_prev[:, k]>^2.
Matrix fc_adjacency(const Matrix& u_prev, const Matrix& v_next);

/// Entry (n, m) = sum_z (sum_c u[c, m] v[c*taps + z, n])^2, i.e. ||U_m^T V_n||_F^2
/// with V_n reshaped to channels x taps. taps = 1 is fc_adjacency.
Matrix tap_adjacency(const Matrix& u_prev, const Matrix& v_next, std::size_t taps);

/// Conv adjacency with V_next the flattened (o K^2) x M' input representations.
Matrix conv_adjacency(const Matrix& u_prev, const Matrix& v_next, std::size_t kernel);

/// A[n][m] = sum_k u[k, m] V_next[k, :, :, n], the K x K effective filters.
std::vector<std::vector<Image>> effective_filters(const Matrix& u_prev, const Matrix& v_next, std::size_t kernel);

/// SVD of the (o K^2) x i co-flattening.
SvdFactors co_svr(const Tensor& t);

/// |V_tilde_next^T U_bar_prev| (or its elementwise square).
Matrix cross_adjacency(const Matrix& u_bar_prev, const Matrix& v_tilde_next, bool squared = false);

/// Adjacency between two factored layers, dispatching on their kinds.
AdjacencyMatrix pair_adjacency(const LayerFactors& prev, const LayerFactors& next);

SvrGraph build_svr(const Model& model, unsigned threads = 1);

struct Edge {
  std::size_t row = 0;  // next-layer rank
  std::size_t col = 0;  // previous-layer rank
  double weight = 0;
};

/// Null-model value exceeded with probability p (p = expected survival fraction).
double edge_threshold(const AdjacencyMatrix& adj, double p);

/// Entries strictly above edge_threshold(adj, p). Throws InputError for p
/// outside (0, 1) and for cross adjacency.
std::vector<Edge> threshold_edges(const AdjacencyMatrix& adj, double p);

}  // namespace svr
