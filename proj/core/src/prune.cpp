#include "svr/prune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "svr/dims.hpp"
#include "svr/error.hpp"

namespace svr {

Tensor truncate_layer(const LayerSpec& spec, const SvdFactors& f, std::size_t keep) {
  if (keep < 1 || keep > static_cast<std::size_t>(f.rank()))
    throw InputError("truncate_layer: keep must lie in [1, " + std::to_string(f.rank()) + "]");
  const auto k = static_cast<Eigen::Index>(keep);
  const Matrix w = f.U.leftCols(k) * f.S.head(k).asDiagonal() * f.V.leftCols(k).transpose();
  if (spec.kind == LayerKind::conv) return unflatten_conv(w, spec.in_dim, spec.kernel);
  return Tensor::from_matrix(w);
}

PrunedModel prune_to_internal_dims(const Model& model, const SvrGraph& graph) {
  const std::size_t layers = model.spec.layers.size();
  if (graph.factors.size() != layers || graph.adjacencies.size() + 1 != layers)
    throw InputError("prune_to_internal_dims: graph was not built on this model");

  std::vector<InternalDims> dims;
  for (const AdjacencyMatrix& adj : graph.adjacencies) dims.push_back(internal_dims(adj.values, adj.n_null));

  PrunedModel out{model, {}};
  for (std::size_t i = 0; i < layers; ++i) {
    const SvdFactors& f = graph.factors[i].svd;
    const auto rank = static_cast<std::size_t>(f.rank());
    std::size_t keep = layers == 1 ? rank : 0;
    if (i > 0) keep = std::max(keep, dims[i - 1].d_out);
    if (i + 1 < layers) keep = std::max(keep, dims[i].d_in);
    keep = std::min(keep, rank);
    const LayerSpec& spec = model.spec.layers[i];
    out.model.weights[spec.name] = truncate_layer(spec, f, keep);
    out.layers.push_back(LayerPruning{spec.name, keep, rank - keep, f.S(static_cast<Eigen::Index>(keep) - 1)});
  }
  return out;
}

std::size_t BlockPartition::block_of_col(std::size_t col) const {
  const auto it = std::upper_bound(col_boundaries.begin(), col_boundaries.end(), col);
  if (it == col_boundaries.end()) throw InputError("block_of_col: column outside the partition");
  return static_cast<std::size_t>(it - col_boundaries.begin());
}

namespace {

SigmaRange sigma_range(const Vector& s, std::size_t begin, std::size_t end) {
  const auto seg = s.segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  return SigmaRange{seg.minCoeff(), seg.maxCoeff()};
}

}  // namespace

BlockPartition kernel_blocks(const Matrix& cross, const Vector& sigmas_prev, const Vector& sigmas_next,
                             const KernelBlockOptions& options) {
  if (cross.size() == 0) throw InputError("kernel_blocks: empty matrix");
  if (sigmas_prev.size() != cross.cols() || sigmas_next.size() != cross.rows())
    throw InputError("kernel_blocks: sigma vectors must match the matrix axes");
  if ((cross.array() < 0.0).any()) throw InputError("kernel_blocks: entries must be non-negative");

  const Eigen::Index rows = cross.rows(), cols = cross.cols();
  Matrix prefix = Matrix::Zero(rows + 1, cols + 1);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      prefix(r + 1, c + 1) = cross(r, c) + prefix(r, c + 1) + prefix(r + 1, c) - prefix(r, c);
  const double total = prefix(rows, cols);
  const double cells = static_cast<double>(rows * cols);
  const double penalty = options.penalty.value_or(std::log(cells));
  // Regions with no mass are scored at a density far below the mean instead of log(0).
  const double floor_density = std::max(total / cells, std::numeric_limits<double>::min()) * 1e-12;

  auto block_mass = [&](Eigen::Index r0, Eigen::Index r1, Eigen::Index c0, Eigen::Index c1) {
    return prefix(r1, c1) - prefix(r0, c1) - prefix(r1, c0) + prefix(r0, c0);
  };
  // Maximized log-likelihood of `area` entries with total `mass` under an
  // exponential model sharing one density.
  auto region = [&](double mass, double area) {
    if (area <= 0.0) return 0.0;
    return -area * (std::log(std::max(mass / area, floor_density)) + 1.0);
  };
  // A block owns its row band: the diagonal block and the rest of those rows
  // are two regions with separate densities.
  auto block_score = [&](Eigen::Index r0, Eigen::Index r1, Eigen::Index c0, Eigen::Index c1) {
    const double inside = block_mass(r0, r1, c0, c1);
    const double band = block_mass(r0, r1, 0, cols);
    const double area = static_cast<double>((r1 - r0) * (c1 - c0));
    const double band_area = static_cast<double>((r1 - r0) * cols);
    return region(inside, area) + region(band - inside, band_area - area) - penalty;
  };

  // best(r, c): best score of a segmentation of the leading r rows and c columns.
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  Matrix best = Matrix::Constant(rows + 1, cols + 1, kNone);
  Eigen::MatrixXi from_r = Eigen::MatrixXi::Zero(rows + 1, cols + 1);
  Eigen::MatrixXi from_c = Eigen::MatrixXi::Zero(rows + 1, cols + 1);
  best(0, 0) = 0.0;
  for (Eigen::Index r = 1; r <= rows; ++r) {
    for (Eigen::Index c = 1; c <= cols; ++c) {
      for (Eigen::Index r0 = 0; r0 < r; ++r0) {
        for (Eigen::Index c0 = 0; c0 < c; ++c0) {
          if (best(r0, c0) == kNone) continue;
          const double score = best(r0, c0) + block_score(r0, r, c0, c);
          if (score > best(r, c)) {
            best(r, c) = score;
            from_r(r, c) = static_cast<int>(r0);
            from_c(r, c) = static_cast<int>(c0);
          }
        }
      }
    }
  }

  BlockPartition part;
  part.penalty = penalty;
  for (Eigen::Index r = rows, c = cols; r > 0;) {
    part.row_boundaries.push_back(static_cast<std::size_t>(r));
    part.col_boundaries.push_back(static_cast<std::size_t>(c));
    const Eigen::Index pr = from_r(r, c), pc = from_c(r, c);
    r = pr;
    c = pc;
  }
  std::reverse(part.row_boundaries.begin(), part.row_boundaries.end());
  std::reverse(part.col_boundaries.begin(), part.col_boundaries.end());

  auto within = [&](const BlockPartition& p) {
    double inside = 0.0;
    std::size_t r0 = 0, c0 = 0;
    for (std::size_t b = 0; b < p.row_boundaries.size(); ++b) {
      inside += block_mass(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(p.row_boundaries[b]),
                           static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(p.col_boundaries[b]));
      r0 = p.row_boundaries[b];
      c0 = p.col_boundaries[b];
    }
    return total > 0.0 ? std::clamp(inside / total, 0.0, 1.0) : 1.0;
  };
  part.within_mass = within(part);
  if (part.within_mass < options.mass_threshold) {
    part.row_boundaries = {static_cast<std::size_t>(rows)};
    part.col_boundaries = {static_cast<std::size_t>(cols)};
    part.within_mass = 1.0;
  }

  const double cutoff = options.negligible_rel * sigmas_prev.maxCoeff();
  std::size_t r0 = 0, c0 = 0;
  for (std::size_t b = 0; b < part.block_count(); ++b) {
    part.row_sigmas.push_back(sigma_range(sigmas_next, r0, part.row_boundaries[b]));
    part.col_sigmas.push_back(sigma_range(sigmas_prev, c0, part.col_boundaries[b]));
    part.negligible.push_back(part.col_sigmas.back().max <= cutoff);
    r0 = part.row_boundaries[b];
    c0 = part.col_boundaries[b];
  }
  return part;
}

PrunableReport prunable_neurons(const Matrix& u_bar, const BlockPartition& partition, double ambiguity_tol) {
  if (partition.col_boundaries.empty() || partition.col_boundaries.back() != static_cast<std::size_t>(u_bar.cols()))
    throw InputError("prunable_neurons: partition does not cover the columns of U_bar");
  PrunableReport report;
  for (Eigen::Index k = 0; k < u_bar.rows(); ++k) {
    const double norm = u_bar.row(k).squaredNorm();
    NeuronAssignment a;
    double top = -1.0;
    std::size_t c0 = 0;
    for (std::size_t b = 0; b < partition.block_count(); ++b) {
      const std::size_t c1 = partition.col_boundaries[b];
      const double mass =
          u_bar.row(k).segment(static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(c1 - c0)).squaredNorm();
      if (mass > top) {
        top = mass;
        a.block = b;
      }
      c0 = c1;
    }
    a.purity = norm > 0.0 ? top / norm : 0.0;
    a.unambiguous = a.purity >= 1.0 - ambiguity_tol;
    a.prunable = partition.negligible[a.block];
    if (a.prunable) report.prunable.push_back(static_cast<std::size_t>(k));
    report.neurons.push_back(a);
  }
  return report;
}

Model prune_channels(const Model& model, std::size_t layer, std::span<const std::size_t> channels) {
  const auto& layers = model.spec.layers;
  if (layer >= layers.size()) throw InputError("prune_channels: layer index out of range");
  Model out = model;
  Tensor& w = out.weight(layer);
  const std::size_t per_channel = w.size() / layers[layer].out_dim;
  for (std::size_t ch : channels) {
    if (ch >= layers[layer].out_dim) throw InputError("prune_channels: channel index out of range");
    std::fill_n(w.values().begin() + static_cast<std::ptrdiff_t>(ch * per_channel), per_channel, 0.0);
  }
  if (layer + 1 == layers.size()) return out;

  const LayerSpec& next = layers[layer + 1];
  Tensor& wn = out.weight(layer + 1);
  for (std::size_t ch : channels) {
    if (next.kind == LayerKind::fc) {
      for (std::size_t r = 0; r < next.out_dim; ++r)
        for (std::size_t s = 0; s < next.spatial; ++s) wn(r, ch * next.spatial + s) = 0.0;
    } else {
      for (std::size_t o = 0; o < next.out_dim; ++o)
        for (std::size_t kh = 0; kh < next.kernel; ++kh)
          for (std::size_t kw = 0; kw < next.kernel; ++kw) wn(o, ch, kh, kw) = 0.0;
    }
  }
  return out;
}

Equivalence equivalence_check(const Model& model, const Model& pruned, std::span<const Signal> inputs) {
  const auto& a = model.spec.layers;
  const auto& b = pruned.spec.layers;
  if (a.size() != b.size()) throw InputError("equivalence_check: layer counts differ");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].weight_shape() != b[i].weight_shape() || model.weight(i).shape() != pruned.weight(i).shape())
      throw InputError("equivalence_check: layer '" + a[i].name + "' shapes differ");

  Equivalence eq;
  std::size_t agree = 0;
  for (const Signal& x : inputs) {
    const ActivationTrace ta = forward(model, x);
    const ActivationTrace tb = forward(pruned, x);
    eq.max_discrepancy = std::max(eq.max_discrepancy, (ta.logits - tb.logits).cwiseAbs().maxCoeff());
    if (ta.predicted == tb.predicted) ++agree;
  }
  eq.inputs = inputs.size();
  eq.agreement = inputs.empty() ? 1.0 : static_cast<double>(agree) / static_cast<double>(inputs.size());
  return eq;
}

std::string prune_report_json(const PrunedModel& pruned, const Equivalence* check) {
  nlohmann::json j;
  j["layers"] = nlohmann::json::array();
  for (const LayerPruning& l : pruned.layers)
    j["layers"].push_back({{"name", l.name}, {"kept", l.kept}, {"dropped", l.dropped}, {"sigma_cutoff", l.sigma_cutoff}});
  if (check)
    j["equivalence"] = {
        {"max_discrepancy", check->max_discrepancy}, {"agreement", check->agreement}, {"inputs", check->inputs}};
  return j.dump(2);
}

std::string prunable_report_json(const BlockPartition& partition, const PrunableReport& report) {
  nlohmann::json j;
  j["blocks"] = nlohmann::json::array();
  for (std::size_t b = 0; b < partition.block_count(); ++b)
    j["blocks"].push_back({{"row_end", partition.row_boundaries[b]},
                           {"col_end", partition.col_boundaries[b]},
                           {"row_sigma", {partition.row_sigmas[b].min, partition.row_sigmas[b].max}},
                           {"col_sigma", {partition.col_sigmas[b].min, partition.col_sigmas[b].max}},
                           {"negligible", static_cast<bool>(partition.negligible[b])}});
  j["within_mass"] = partition.within_mass;
  j["penalty"] = partition.penalty;
  j["neurons"] = nlohmann::json::array();
  for (std::size_t k = 0; k < report.neurons.size(); ++k) {
    const NeuronAssignment& a = report.neurons[k];
    j["neurons"].push_back({{"neuron", k},
                            {"block", a.block},
                            {"purity", a.purity},
                            {"unambiguous", a.unambiguous},
                            {"prunable", a.prunable}});
  }
  j["prunable"] = report.prunable;
  return j.dump(2);
}

}  // namespace svr
