#include "svr/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "svr/error.hpp"
#include "svr/spectra.hpp"

namespace svr {

namespace {

Signal activate(const Signal& s, Activation a) {
  if (a == Activation::identity) return s;
  if (const auto* v = std::get_if<Vector>(&s)) return Vector(v->cwiseMax(0.0));
  ImageStack out = std::get<ImageStack>(s);
  for (Image& im : out) im = im.cwiseMax(0.0);
  return out;
}

Signal pool(const Signal& s, const std::optional<Pooling>& p) {
  if (!p) return s;
  const auto* stack = std::get_if<ImageStack>(&s);
  if (!stack) throw InputError("pooling declared on a layer with vector output");
  ImageStack out;
  out.reserve(stack->size());
  for (const Image& im : *stack)
    out.push_back(p->kind == PoolKind::max ? max_pool(im, p->window) : avg_pool(im, p->window));
  return out;
}

// Reshapes a signal into what `layer` consumes.
Signal adapt(const Signal& s, const LayerSpec& layer) {
  if (layer.kind == LayerKind::fc) {
    if (const auto* v = std::get_if<Vector>(&s)) {
      if (static_cast<std::size_t>(v->size()) != layer.in_dim)
        throw InputError("layer '" + layer.name + "': input length does not match in_dim");
      return *v;
    }
    const auto& stack = std::get<ImageStack>(s);
    const std::size_t pixels = stack.empty() ? 0 : static_cast<std::size_t>(stack[0].size());
    if (stack.size() * pixels != layer.in_dim || pixels != layer.spatial)
      throw InputError("layer '" + layer.name + "': flattened conv output does not match in_dim/spatial");
    Vector flat(static_cast<Eigen::Index>(layer.in_dim));
    Eigen::Index k = 0;
    for (const Image& im : stack)
      for (Eigen::Index y = 0; y < im.rows(); ++y)
        for (Eigen::Index x = 0; x < im.cols(); ++x) flat(k++) = im(y, x);
    return flat;
  }
  if (const auto* v = std::get_if<Vector>(&s)) {
    if (static_cast<std::size_t>(v->size()) != layer.in_dim)
      throw InputError("layer '" + layer.name + "': input channels do not match in_dim");
    ImageStack stack;
    for (Eigen::Index c = 0; c < v->size(); ++c) stack.push_back(Image::Constant(1, 1, (*v)(c)));
    return stack;
  }
  const auto& stack = std::get<ImageStack>(s);
  if (stack.size() != layer.in_dim) throw InputError("layer '" + layer.name + "': input channels do not match in_dim");
  return stack;
}

Signal apply_layer(const Signal& input, const LayerSpec& layer, const Tensor& w) {
  if (layer.kind == LayerKind::fc) return Vector(w.as_matrix() * std::get<Vector>(input));
  return conv_layer(std::get<ImageStack>(input), w);
}

}  // namespace

ActivationTrace forward(const Model& model, const Signal& input) {
  const auto& layers = model.spec.layers;
  ActivationTrace t;
  t.X.push_back(input);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Signal in = i == 0 ? t.X[0] : pool(activate(t.X[i], model.spec.activation), layers[i - 1].pooling_after);
    in = adapt(in, layers[i]);
    t.X.push_back(apply_layer(in, layers[i], model.weight(i)));
    t.inputs.push_back(std::move(in));
  }
  if (const auto* v = std::get_if<Vector>(&t.X.back())) {
    t.logits = *v;
  } else {
    const auto& stack = std::get<ImageStack>(t.X.back());
    t.logits.resize(static_cast<Eigen::Index>(stack.size()));
    for (std::size_t c = 0; c < stack.size(); ++c) t.logits(static_cast<Eigen::Index>(c)) = stack[c].sum();
  }
  if (model.spec.head == Head::argmax && t.logits.size() > 0) {
    Eigen::Index best = 0;
    t.logits.maxCoeff(&best);
    t.predicted = static_cast<int>(best);
  }
  return t;
}

void spectral_activations(const Model& model, const SvrGraph& graph, ActivationTrace& trace) {
  const auto& layers = model.spec.layers;
  if (graph.factors.size() != layers.size() || trace.inputs.size() != layers.size())
    throw InputError("spectral_activations: graph and trace do not match the model");
  trace.Y.clear();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const SvdFactors& f = graph.factors[i].svd;
    if (layers[i].kind == LayerKind::fc) {
      trace.Y.emplace_back(Vector(f.V.transpose() * std::get<Vector>(trace.inputs[i])));
      continue;
    }
    const auto& x = std::get<ImageStack>(trace.inputs[i]);
    const Tensor filters = unflatten_conv(f.V.transpose(), layers[i].in_dim, layers[i].kernel);
    trace.Y.emplace_back(conv_layer(x, filters));
  }
}

ActivationTrace spectral_activations(const Model& model, const SvrGraph& graph, const Signal& input) {
  ActivationTrace t = forward(model, input);
  spectral_activations(model, graph, t);
  return t;
}

ImageStack spectral_images(const Model& model, const SvrGraph& graph, const ImageStack& input, std::size_t layer,
                           std::size_t top_k) {
  if (layer >= model.spec.layers.size()) throw InputError("spectral_images: layer index out of range");
  const LayerSpec& spec = model.spec.layers[layer];
  if (spec.kind != LayerKind::conv) throw InputError("spectral_images: layer '" + spec.name + "' is not a conv layer");
  const ActivationTrace t = forward(model, input);
  const auto& x = std::get<ImageStack>(t.inputs[layer]);
  const SvdFactors& f = graph.factors.at(layer).svd;
  const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(top_k), f.V.cols());
  const Tensor filters = unflatten_conv(f.V.leftCols(k).transpose(), spec.in_dim, spec.kernel);
  return conv_layer(x, filters);
}

Matrix predict_logits(const Model& model, const Matrix& inputs) {
  const auto& layers = model.spec.layers;
  for (const LayerSpec& l : layers)
    if (l.kind != LayerKind::fc) throw InputError("predict_logits: batched prediction needs a fully connected model");
  Matrix z = inputs;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i > 0 && model.spec.activation == Activation::relu) z = z.cwiseMax(0.0);
    if (static_cast<std::size_t>(z.rows()) != layers[i].in_dim)
      throw InputError("predict_logits: input rows do not match in_dim of layer '" + layers[i].name + "'");
    z = model.weight(i).as_matrix() * z;
  }
  return z;
}

std::vector<int> predict_classes(const Model& model, const Matrix& inputs) {
  const Matrix logits = predict_logits(model, inputs);
  std::vector<int> classes(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    Eigen::Index best = 0;
    logits.col(c).maxCoeff(&best);
    classes[static_cast<std::size_t>(c)] = static_cast<int>(best);
  }
  return classes;
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw InputError("accuracy: empty dataset");
  constexpr Eigen::Index kChunk = 2048;
  std::size_t correct = 0;
  for (Eigen::Index start = 0; start < static_cast<Eigen::Index>(data.size()); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, static_cast<Eigen::Index>(data.size()) - start);
    const std::vector<int> cls = predict_classes(model, data.images.middleCols(start, len).cast<double>());
    for (Eigen::Index k = 0; k < len; ++k)
      if (cls[static_cast<std::size_t>(k)] == data.labels[static_cast<std::size_t>(start + k)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Image max_pool(const Image& x, std::size_t window) {
  const auto w = static_cast<Eigen::Index>(window);
  Image out(x.rows() / w, x.cols() / w);
  for (Eigen::Index y = 0; y < out.rows(); ++y)
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(y, c) = x.block(y * w, c * w, w, w).maxCoeff();
  return out;
}

Image avg_pool(const Image& x, std::size_t window) {
  const auto w = static_cast<Eigen::Index>(window);
  Image out(x.rows() / w, x.cols() / w);
  for (Eigen::Index y = 0; y < out.rows(); ++y)
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(y, c) = x.block(y * w, c * w, w, w).mean();
  return out;
}

Image sobel(const Image& x) {
  Image gx(3, 3), gy(3, 3);
  gx << -1, 0, 1, -2, 0, 2, -1, 0, 1;
  gy << -1, -2, -1, 0, 0, 0, 1, 2, 1;
  const Image in[1] = {x};
  const Image fx[1] = {gx};
  const Image fy[1] = {gy};
  const Image ex = conv2d(in, fx);
  const Image ey = conv2d(in, fy);
  return (ex.array().square() + ey.array().square()).sqrt().matrix();
}

Image downsample(const ImageStack& rgb, std::size_t factor) {
  if (rgb.empty()) throw InputError("downsample: no channels");
  if (factor == 0) throw InputError("downsample: factor must be >= 1");
  const auto f = static_cast<Eigen::Index>(factor);
  if (rgb[0].rows() % f != 0 || rgb[0].cols() % f != 0)
    throw InputError("downsample: factor does not divide the image dimensions");
  Image grey = Image::Zero(rgb[0].rows(), rgb[0].cols());
  for (const Image& c : rgb) grey += c;
  grey /= static_cast<double>(rgb.size());
  return avg_pool(grey, factor);
}

double cosine_similarity(const Image& a, const Image& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InputError("cosine_similarity: image sizes differ");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.cwiseProduct(b).sum() / (na * nb);
}

std::vector<RankSimilarity> edge_similarity(const Model& model, const SvrGraph& graph,
                                            std::span<const ImageStack> images, std::size_t layer, std::size_t top_k) {
  if (images.empty()) throw InputError("edge_similarity: empty image set");
  std::vector<std::vector<double>> per_rank;
  for (const ImageStack& input : images) {
    const ImageStack spectral = spectral_images(model, graph, input, layer, top_k);
    if (per_rank.empty()) per_rank.resize(spectral.size());
    const std::size_t factor = static_cast<std::size_t>(input[0].rows() / spectral[0].rows());
    const Image proxy = sobel(downsample(input, factor));
    for (std::size_t k = 0; k < spectral.size(); ++k)
      per_rank[k].push_back(cosine_similarity(spectral[k].cwiseAbs(), proxy));
  }
  std::vector<RankSimilarity> rows;
  for (std::size_t k = 0; k < per_rank.size(); ++k) {
    const auto& v = per_rank[k];
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    rows.push_back(RankSimilarity{k, mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0, v.size()});
  }
  return rows;
}

std::string similarity_csv(std::span<const RankSimilarity> rows) {
  std::ostringstream out;
  out.precision(10);
  out << "rank,mean,std,n\n";
  for (const RankSimilarity& r : rows) out << r.rank << ',' << r.mean << ',' << r.std << ',' << r.n << '\n';
  return out.str();
}

}  // namespace svr
