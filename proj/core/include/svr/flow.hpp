#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "svr/linalg.hpp"
#include "svr/tensorio.hpp"

namespace svr {

struct SvrGraph;

/// A layer activation: a feature vector (fc) or a stack of channel images (conv).
using Signal = std::variant<Vector, ImageStack>;

struct ActivationTrace {
  /// X[0] is the raw input; X[i+1] is the linear output of layer i.
  std::vector<Signal> X;
  /// What layer i actually consumes: X[0] for i = 0, otherwise
  /// pool(psi(X[i])) reshaped to the layer's kind.
  std::vector<Signal> inputs;
  /// Spectral activations V_i^T inputs[i]; empty unless spectral_activations() ran.
  std::vector<Signal> Y;
  Vector logits;
  int predicted = -1;  // argmax class when the head is argmax
};

/// Forward pass: psi between layers (never after the last), declared pooling
/// after psi, channel-major flattening at conv -> fc boundaries.
ActivationTrace forward(const Model& model, const Signal& input);

/// Fills trace.Y from an existing trace. fc: V_i^T x. conv: one image per
/// spectral neuron, the input convolved with the unflattened V column.
/// Activations are unscaled (no sigma).
void spectral_activations(const Model& model, const SvrGraph& graph, ActivationTrace& trace);
ActivationTrace spectral_activations(const Model& model, const SvrGraph& graph, const Signal& input);

/// The first top_k spectral images (decreasing sigma) of conv layer `layer`,
/// at that layer's input resolution. Throws InputError for fc layers.
ImageStack spectral_images(const Model& model, const SvrGraph& graph, const ImageStack& input, std::size_t layer,
                           std::size_t top_k);

/// Logits for each column of `inputs` (fc-first models). Fully connected
/// models run as batched matrix products.
Matrix predict_logits(const Model& model, const Matrix& inputs);
std::vector<int> predict_classes(const Model& model, const Matrix& inputs);
double accuracy(const Model& model, const Dataset& data);

Image max_pool(const Image& x, std::size_t window);
Image avg_pool(const Image& x, std::size_t window);

/// sqrt((Gx * X)^2 + (Gy * X)^2) with zero padding,
/// Gx = [-1 0 1; -2 0 2; -1 0 1], Gy = [-1 -2 -1; 0 0 0; 1 2 1].
Image sobel(const Image& x);

/// Channel mean (greyscale) followed by factor x factor average pooling.
/// Throws InputError when factor does not divide both image dimensions.
Image downsample(const ImageStack& rgb, std::size_t factor);

/// Cosine of the flattened images; 0 when either is all zeros.
double cosine_similarity(const Image& a, const Image& b);

struct RankSimilarity {
  std::size_t rank = 0;
  double mean = 0;
  double std = 0;
  std::size_t n = 0;
};

/// Cosine similarity between |spectral image k| and sobel(downsample(input))
/// per spectral rank k < top_k, averaged over `images`.
std::vector<RankSimilarity> edge_similarity(const Model& model, const SvrGraph& graph,
                                            std::span<const ImageStack> images, std::size_t layer, std::size_t top_k);

std::string similarity_csv(std::span<const RankSimilarity> rows);

}  // namespace svr
