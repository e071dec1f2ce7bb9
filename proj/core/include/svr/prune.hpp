#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svr/flow.hpp"
#include "svr/linalg.hpp"
#include "svr/spectra.hpp"

namespace svr {

/// Rank-`keep` reconstruction of a layer, reshaped to the layer's weight shape.
/// Throws InputError unless 1 <= keep <= rank.
Tensor truncate_layer(const LayerSpec& spec, const SvdFactors& factors, std::size_t keep);

struct LayerPruning {
  std::string name;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  double sigma_cutoff = 0;  // smallest retained singular value
};

struct PrunedModel {
  Model model;
  std::vector<LayerPruning> layers;
};

/// Truncates every layer to its internal dimension. Inner layers take the
/// larger of two votes: d_out of the adjacency where the layer supplies V and
/// d_in of the adjacency where it supplies U.
PrunedModel prune_to_internal_dims(const Model& model, const SvrGraph& graph);

struct SigmaRange {
  double min = 0;
  double max = 0;
};

/// Diagonal blocks of a cross adjacency. Boundaries are exclusive end offsets,
/// so {3, 7, 10} describes ranks [0,3), [3,7), [7,10).
struct BlockPartition {
  std::vector<std::size_t> row_boundaries;  // next-layer (co-SVR) ranks
  std::vector<std::size_t> col_boundaries;  // previous-layer (SVR) ranks
  double within_mass = 0;                   // share of the total mass inside the blocks
  std::vector<SigmaRange> row_sigmas;
  std::vector<SigmaRange> col_sigmas;
  std::vector<bool> negligible;  // column block max sigma <= cutoff * layer max
  double penalty = 0;

  [[nodiscard]] std::size_t block_count() const { return col_boundaries.size(); }
  /// Block holding column `col`.
  [[nodiscard]] std::size_t block_of_col(std::size_t col) const;
};

struct KernelBlockOptions {
  /// Per-block penalty in log-likelihood units. Unset: log(rows * cols).
  std::optional<double> penalty;
  /// Segmentations keeping less than this share of the mass inside blocks
  /// collapse to a single block.
  double mass_threshold = 0.0;
  /// Relative cutoff: a block is negligible when its largest sigma is at most
  /// negligible_rel times the layer's largest sigma.
  double negligible_rel = 1e-6;
};

/// Segments both rank axes into the same number of contiguous blocks by
/// dynamic programming. Entries are modeled as exponential with one density
/// per diagonal block and one for the rest of that block's rows; the score is
/// the maximized log-likelihood minus the penalty per block, so a split must
/// explain a real density contrast. `sigmas_prev` annotates columns,
/// `sigmas_next` rows.
BlockPartition kernel_blocks(const Matrix& cross, const Vector& sigmas_prev, const Vector& sigmas_next,
                             const KernelBlockOptions& options = {});

struct NeuronAssignment {
  std::size_t block = 0;
  double purity = 0;
  bool unambiguous = false;
  bool prunable = false;
};

struct PrunableReport {
  std::vector<NeuronAssignment> neurons;  // one per row of U_bar
  std::vector<std::size_t> prunable;      // indices of prunable neurons, ascending
};

/// Assigns each usual neuron (row of U_bar) to the column block holding most
/// of its squared mass. Neurons landing in a negligible block are prunable.
PrunableReport prunable_neurons(const Matrix& u_bar, const BlockPartition& partition, double ambiguity_tol = 1e-6);

/// Removes output channels (or features) of layer `layer` by zeroing them and
/// the matching input slices of the next layer. Shapes are unchanged.
Model prune_channels(const Model& model, std::size_t layer, std::span<const std::size_t> channels);

struct Equivalence {
  double max_discrepancy = 0;  // max |logit - logit'|
  double agreement = 0;        // share of inputs with the same argmax
  std::size_t inputs = 0;
};

/// Throws InputError when the two models do not share layer shapes.
Equivalence equivalence_check(const Model& model, const Model& pruned, std::span<const Signal> inputs);

std::string prune_report_json(const PrunedModel& pruned, const Equivalence* check = nullptr);
std::string prunable_report_json(const BlockPartition& partition, const PrunableReport& report);

}  // namespace svr
