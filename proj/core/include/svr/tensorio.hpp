#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svr/linalg.hpp"

namespace svr {

enum class LayerKind { fc, conv };
enum class Activation { relu, identity };
enum class Head { argmax, none };
enum class PoolKind { max, avg };

struct Pooling {
  PoolKind kind = PoolKind::max;
  std::size_t window = 2;  // window x window, stride = window
};

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::fc;
  std::size_t in_dim = 0;   // features (fc) or channels (conv)
  std::size_t out_dim = 0;
  std::size_t kernel = 0;   // conv only, K >= 1
  std::optional<Pooling> pooling_after;  // conv only
  // fc only: spatial positions per input channel when fed by a conv layer
  // (input is the channel-major flattening of o x H x W, so in_dim = o * spatial).
  std::size_t spatial = 1;
  // Reserved per-output scale (e.g. folded normalization); stored, never applied.
  std::optional<std::vector<double>> scale;

  /// Expected weight tensor shape: {out, in} or {out, in, K, K}.
  [[nodiscard]] std::vector<std::size_t> weight_shape() const;
};

/// Ordered layer list; manifest order is graph order.
struct ModelSpec {
  std::vector<LayerSpec> layers;
  Activation activation = Activation::relu;
  Head head = Head::argmax;

  /// Throws InputError when a layer is malformed or consecutive layers do not chain.
  void validate() const;
};

using WeightStore = std::map<std::string, Tensor>;

struct Model {
  ModelSpec spec;
  WeightStore weights;

  [[nodiscard]] const Tensor& weight(std::size_t layer) const;
  Tensor& weight(std::size_t layer);

  /// Validates the layer list and checks that every layer resolves to a finite tensor of the declared shape.
  void validate() const;
};

enum class DType { f32, f64 };

ModelSpec parse_manifest(const std::string& json_text);
std::string manifest_to_json(const ModelSpec& spec);

/// Reads the tensor container and manifest; all tensors are held as 64-bit.
Model load_model(const std::filesystem::path& container, const std::filesystem::path& manifest);

/// Writes container (+ manifest). F64 round-trips bit-exactly.
void save_model(const Model& model, const std::filesystem::path& container,
                const std::filesystem::path& manifest, DType dtype = DType::f64);

/// Container without a manifest: name -> tensor, plus optional string metadata.
WeightStore read_container(const std::filesystem::path& path);
void write_container(const std::filesystem::path& path, const WeightStore& tensors, DType dtype = DType::f64,
                     const std::map<std::string, std::string>& metadata = {});

/// Images stored column-wise (rows*cols x count), pixel bytes / 255.
struct Dataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Eigen::MatrixXf images;
  std::vector<std::uint8_t> labels;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] Vector image(std::size_t i) const { return images.col(static_cast<Eigen::Index>(i)).cast<double>(); }
  /// First `count` items (all when count >= size()).
  [[nodiscard]] Dataset head(std::size_t count) const;
};

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

std::string to_string(LayerKind kind);
std::string to_string(Activation a);

}  // namespace svr
