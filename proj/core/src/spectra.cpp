#include "svr/spectra.hpp"

#include <sstream>

#include "svr/error.hpp"
#include "svr/parallel.hpp"

namespace svr {

std::string to_string(AdjacencyKind kind) {
  switch (kind) {
    case AdjacencyKind::fc: return "fc";
    case AdjacencyKind::conv: return "conv";
    case AdjacencyKind::cross: return "cross";
  }
  return "?";
}

NullModel AdjacencyMatrix::null_model() const {
  if (kind == AdjacencyKind::cross) throw InputError("cross adjacency has no null model; thresholding is unsupported");
  const double k = static_cast<double>(k_null);
  return NullModel{k, 1.0 / (static_cast<double>(n_null) * k), n_null};
}

LayerFactors factor_layer(const LayerSpec& spec, const Tensor& weights) {
  LayerFactors f;
  f.kind = spec.kind;
  if (spec.kind == LayerKind::fc) {
    f.in_channels = spec.in_dim / spec.spatial;
    f.taps = spec.spatial;
    f.svd = svd(weights.as_matrix());
  } else {
    f.in_channels = spec.in_dim;
    f.kernel = spec.kernel;
    f.taps = spec.kernel * spec.kernel;
    f.svd = svd(flatten_conv(weights));
  }
  f.tied = has_tied_singular_values(f.svd.S);
  return f;
}

Matrix fc_adjacency(const Matrix& u_prev, const Matrix& v_next) {
  if (u_prev.rows() != v_next.rows()) throw InputError("fc_adjacency: shared dimension mismatch");
  return (v_next.transpose() * u_prev).array().square().matrix();
}

Matrix tap_adjacency(const Matrix& u_prev, const Matrix& v_next, std::size_t taps) {
  const Eigen::Index channels = u_prev.rows();
  const auto t = static_cast<Eigen::Index>(taps);
  if (taps == 0 || v_next.rows() != channels * t) {
    std::ostringstream msg;
    msg << "adjacency: next layer input size " << v_next.rows() << " is not " << channels << " channels x " << taps
        << " taps";
    throw InputError(msg.str());
  }
  Matrix a = Matrix::Zero(v_next.cols(), u_prev.cols());
  for (Eigen::Index z = 0; z < t; ++z) {
    // Rows c * taps + z of V: the tap-z slice, channels x M'.
    const Matrix slice = v_next(Eigen::seqN(z, channels, t), Eigen::all);
    a += (slice.transpose() * u_prev).array().square().matrix();
  }
  return a;
}

Matrix conv_adjacency(const Matrix& u_prev, const Matrix& v_next, std::size_t kernel) {
  return tap_adjacency(u_prev, v_next, kernel * kernel);
}

std::vector<std::vector<Image>> effective_filters(const Matrix& u_prev, const Matrix& v_next, std::size_t kernel) {
  const Eigen::Index o = u_prev.rows();
  const auto k = static_cast<Eigen::Index>(kernel);
  if (v_next.rows() != o * k * k) throw InputError("effective_filters: shared channel dimension mismatch");
  std::vector<std::vector<Image>> filters(static_cast<std::size_t>(v_next.cols()),
                                          std::vector<Image>(static_cast<std::size_t>(u_prev.cols()), Image::Zero(k, k)));
  for (Eigen::Index n = 0; n < v_next.cols(); ++n) {
    for (Eigen::Index m = 0; m < u_prev.cols(); ++m) {
      Image& f = filters[n][m];
      for (Eigen::Index c = 0; c < o; ++c) {
        const double u = u_prev(c, m);
        for (Eigen::Index kh = 0; kh < k; ++kh)
          for (Eigen::Index kw = 0; kw < k; ++kw) f(kh, kw) += u * v_next((c * k + kh) * k + kw, n);
      }
    }
  }
  return filters;
}

SvdFactors co_svr(const Tensor& t) { return svd(flatten_conv_co(t)); }

Matrix cross_adjacency(const Matrix& u_bar_prev, const Matrix& v_tilde_next, bool squared) {
  if (u_bar_prev.rows() != v_tilde_next.rows()) throw InputError("cross_adjacency: shared channel dimension mismatch");
  Matrix p = (v_tilde_next.transpose() * u_bar_prev).cwiseAbs();
  if (squared) p = p.array().square().matrix();
  return p;
}

AdjacencyMatrix pair_adjacency(const LayerFactors& prev, const LayerFactors& next) {
  AdjacencyMatrix adj;
  adj.n_null = static_cast<std::size_t>(prev.svd.U.rows());
  adj.k_null = next.taps;
  adj.values = tap_adjacency(prev.svd.U, next.svd.V, next.taps);
  if (prev.kind == LayerKind::fc && next.kind == LayerKind::fc && next.taps == 1) {
    adj.kind = AdjacencyKind::fc;
  } else {
    adj.kind = AdjacencyKind::conv;
    if (prev.kind == LayerKind::conv && next.kind == LayerKind::fc)
      adj.boundary_note = "conv->fc: spatial positions of the flattened input paired as kernel taps";
    else if (prev.kind == LayerKind::fc && next.kind == LayerKind::conv)
      adj.boundary_note = "fc->conv: fc output features paired with conv input channels";
  }
  return adj;
}

SvrGraph build_svr(const Model& model, unsigned threads) {
  model.validate();
  const std::size_t layers = model.spec.layers.size();
  SvrGraph g;
  g.factors.resize(layers);
  parallel_for(layers, threads,
               [&](std::size_t i) { g.factors[i] = factor_layer(model.spec.layers[i], model.weight(i)); });

  g.neurons.resize(layers);
  g.tie_flags.resize(layers);
  for (std::size_t i = 0; i < layers; ++i) {
    const SvdFactors& f = g.factors[i].svd;
    g.tie_flags[i] = g.factors[i].tied;
    for (Eigen::Index k = 0; k < f.S.size(); ++k)
      g.neurons[i].push_back(SpectralNeuron{i, static_cast<std::size_t>(k), f.S(k), f.V.col(k), f.U.col(k), 0.0});
  }

  g.adjacencies.resize(layers > 0 ? layers - 1 : 0);
  parallel_for(g.adjacencies.size(), threads,
               [&](std::size_t i) { g.adjacencies[i] = pair_adjacency(g.factors[i], g.factors[i + 1]); });
  return g;
}

double edge_threshold(const AdjacencyMatrix& adj, double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("threshold: p must lie in (0, 1)");
  return adj.null_model().threshold(p);
}

std::vector<Edge> threshold_edges(const AdjacencyMatrix& adj, double p) {
  const double t = edge_threshold(adj, p);
  std::vector<Edge> edges;
  for (Eigen::Index r = 0; r < adj.values.rows(); ++r)
    for (Eigen::Index c = 0; c < adj.values.cols(); ++c)
      if (adj.values(r, c) > t)
        edges.push_back(Edge{static_cast<std::size_t>(r), static_cast<std::size_t>(c), adj.values(r, c)});
  return edges;
}

}  // namespace svr
