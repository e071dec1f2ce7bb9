#include "svr/tensorio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "svr/error.hpp"

namespace svr {

using nlohmann::json;

namespace {

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::uint64_t read_le64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

std::uint32_t read_be32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

void append_le(std::string& out, std::uint64_t bits, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint64_t load_le(const char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

LayerKind parse_kind(const std::string& s) {
  if (s == "fc") return LayerKind::fc;
  if (s == "conv") return LayerKind::conv;
  throw InputError("manifest: unknown layer kind '" + s + "'");
}

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw InputError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(where + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

std::string to_string(LayerKind kind) { return kind == LayerKind::fc ? "fc" : "conv"; }
std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

std::vector<std::size_t> LayerSpec::weight_shape() const {
  if (kind == LayerKind::fc) return {out_dim, in_dim};
  return {out_dim, in_dim, kernel, kernel};
}

void ModelSpec::validate() const {
  if (layers.empty()) throw InputError("model: at least one layer is required");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer '" + l.name + "'";
    if (l.name.empty()) throw InputError("model: layer " + std::to_string(i) + " has no name");
    if (l.in_dim == 0 || l.out_dim == 0) throw InputError(where + ": dimensions must be >= 1");
    if (l.kind == LayerKind::fc) {
      if (l.kernel != 0 || l.pooling_after) throw InputError(where + ": fc layers take no kernel or pooling");
      if (l.spatial == 0 || l.in_dim % l.spatial != 0)
        throw InputError(where + ": in_dim must be a multiple of spatial");
    } else {
      if (l.kernel == 0) throw InputError(where + ": conv layers need kernel >= 1");
      if (l.spatial != 1) throw InputError(where + ": spatial applies to fc layers only");
      if (l.pooling_after && l.pooling_after->window == 0) throw InputError(where + ": pooling window must be >= 1");
    }
    if (l.scale && l.scale->size() != l.out_dim) throw InputError(where + ": scale length must equal out_dim");
    if (i == 0) {
      if (l.kind == LayerKind::fc && l.spatial != 1) throw InputError(where + ": first layer cannot declare spatial");
      continue;
    }
    const LayerSpec& prev = layers[i - 1];
    const std::size_t expected = prev.out_dim * (l.kind == LayerKind::fc ? l.spatial : 1);
    if (l.in_dim != expected) {
      std::ostringstream msg;
      msg << where << ": in_dim " << l.in_dim << " does not chain with previous out_dim " << prev.out_dim;
      if (l.spatial != 1) msg << " x spatial " << l.spatial;
      throw InputError(msg.str());
    }
    if (l.spatial != 1 && prev.kind != LayerKind::conv)
      throw InputError(where + ": spatial > 1 requires a preceding conv layer");
  }
}

const Tensor& Model::weight(std::size_t layer) const {
  const auto& name = spec.layers.at(layer).name;
  auto it = weights.find(name);
  if (it == weights.end()) throw InputError("model: no tensor for layer '" + name + "'");
  return it->second;
}

Tensor& Model::weight(std::size_t layer) {
  const auto& name = spec.layers.at(layer).name;
  auto it = weights.find(name);
  if (it == weights.end()) throw InputError("model: no tensor for layer '" + name + "'");
  return it->second;
}

void Model::validate() const {
  spec.validate();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const Tensor& t = weight(i);
    if (t.shape() != l.weight_shape()) {
      std::ostringstream msg;
      msg << "layer '" << l.name << "': shape mismatch, tensor is [";
      for (std::size_t k = 0; k < t.rank(); ++k) msg << (k ? "," : "") << t.dim(k);
      msg << "], manifest declares [";
      const auto want = l.weight_shape();
      for (std::size_t k = 0; k < want.size(); ++k) msg << (k ? "," : "") << want[k];
      msg << "]";
      throw InputError(msg.str());
    }
    for (double v : t.values())
      if (!std::isfinite(v)) throw InputError("layer '" + l.name + "': non-finite weight value");
  }
}

ModelSpec parse_manifest(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InputError(std::string("manifest: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array())
    throw InputError("manifest: expected an object with a 'layers' array");

  ModelSpec spec;
  const std::string act = j.value("activation", "relu");
  if (act == "relu") spec.activation = Activation::relu;
  else if (act == "identity") spec.activation = Activation::identity;
  else throw InputError("manifest: unknown activation '" + act + "'");
  const std::string head = j.value("head", "argmax");
  if (head == "argmax") spec.head = Head::argmax;
  else if (head == "none") spec.head = Head::none;
  else throw InputError("manifest: unknown head '" + head + "'");

  for (const json& jl : j["layers"]) {
    LayerSpec l;
    const std::string where = "manifest layer";
    l.name = required<std::string>(jl, "name", where);
    l.kind = parse_kind(required<std::string>(jl, "kind", where));
    l.in_dim = required<std::size_t>(jl, "in_dim", where);
    l.out_dim = required<std::size_t>(jl, "out_dim", where);
    if (jl.contains("kernel")) l.kernel = required<std::size_t>(jl, "kernel", where);
    if (jl.contains("spatial")) l.spatial = required<std::size_t>(jl, "spatial", where);
    if (jl.contains("pooling_after") && !jl["pooling_after"].is_null()) {
      const json& jp = jl["pooling_after"];
      Pooling p;
      const std::string kind = jp.is_string() ? jp.get<std::string>() : required<std::string>(jp, "kind", where);
      if (kind == "max") p.kind = PoolKind::max;
      else if (kind == "avg") p.kind = PoolKind::avg;
      else throw InputError("manifest: unknown pooling kind '" + kind + "'");
      if (jp.is_object() && jp.contains("window")) p.window = required<std::size_t>(jp, "window", where);
      l.pooling_after = p;
    }
    if (jl.contains("scale")) l.scale = required<std::vector<double>>(jl, "scale", where);
    spec.layers.push_back(std::move(l));
  }
  spec.validate();
  return spec;
}

std::string manifest_to_json(const ModelSpec& spec) {
  json j;
  j["activation"] = to_string(spec.activation);
  j["head"] = spec.head == Head::argmax ? "argmax" : "none";
  j["layers"] = json::array();
  for (const LayerSpec& l : spec.layers) {
    json jl{{"name", l.name}, {"kind", to_string(l.kind)}, {"in_dim", l.in_dim}, {"out_dim", l.out_dim}};
    if (l.kind == LayerKind::conv) jl["kernel"] = l.kernel;
    if (l.spatial != 1) jl["spatial"] = l.spatial;
    if (l.pooling_after)
      jl["pooling_after"] = {{"kind", l.pooling_after->kind == PoolKind::max ? "max" : "avg"},
                             {"window", l.pooling_after->window}};
    if (l.scale) jl["scale"] = *l.scale;
    j["layers"].push_back(std::move(jl));
  }
  return j.dump(2);
}

WeightStore read_container(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_file(path);
  if (bytes.size() < 8) throw InputError("container: file shorter than the 8-byte header length");
  const std::uint64_t header_len = read_le64(bytes.data());
  if (header_len > bytes.size() - 8) throw InputError("container: header length exceeds file size");

  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    throw InputError(std::string("container: malformed header: ") + e.what());
  }
  if (!header.is_object()) throw InputError("container: header must be a JSON object");

  const char* data = bytes.data() + 8 + header_len;
  const std::uint64_t data_len = bytes.size() - 8 - header_len;
  WeightStore store;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") continue;
    const std::string where = "container tensor '" + name + "'";
    const auto dtype = required<std::string>(entry, "dtype", where);
    const auto shape = required<std::vector<std::size_t>>(entry, "shape", where);
    const auto offsets = required<std::vector<std::uint64_t>>(entry, "data_offsets", where);
    int width = 0;
    if (dtype == "F64") width = 8;
    else if (dtype == "F32") width = 4;
    else throw InputError(where + ": unsupported dtype '" + dtype + "'");
    if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > data_len)
      throw InputError(where + ": data_offsets out of range");
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    if (offsets[1] - offsets[0] != count * static_cast<std::uint64_t>(width))
      throw InputError(where + ": byte range does not match shape and dtype");

    std::vector<double> values(count);
    const char* p = data + offsets[0];
    for (std::size_t i = 0; i < count; ++i, p += width) {
      const std::uint64_t raw = load_le(p, width);
      double v;
      if (width == 8) {
        v = std::bit_cast<double>(raw);
      } else {
        v = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(raw)));
      }
      if (!std::isfinite(v)) throw InputError(where + ": non-finite value");
      values[i] = v;
    }
    store.emplace(name, Tensor(shape, std::move(values)));
  }
  return store;
}

void write_container(const std::filesystem::path& path, const WeightStore& tensors, DType dtype,
                     const std::map<std::string, std::string>& metadata) {
  const int width = dtype == DType::f64 ? 8 : 4;
  json header = json::object();
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const std::uint64_t len = t.size() * static_cast<std::uint64_t>(width);
    header[name] = {{"dtype", dtype == DType::f64 ? "F64" : "F32"}, {"shape", t.shape()}, {"data_offsets", {offset, offset + len}}};
    offset += len;
  }
  std::string head = header.dump();
  while ((head.size() + 8) % 8 != 0) head.push_back(' ');

  std::string out;
  out.reserve(8 + head.size() + offset);
  append_le(out, head.size(), 8);
  out += head;
  for (const auto& [name, t] : tensors) {
    for (double v : t.values()) {
      if (dtype == DType::f64) append_le(out, std::bit_cast<std::uint64_t>(v), 8);
      else append_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    }
  }
  write_file(path, out);
}

Model load_model(const std::filesystem::path& container, const std::filesystem::path& manifest) {
  const std::vector<char> text = read_file(manifest);
  Model model{parse_manifest(std::string(text.begin(), text.end())), read_container(container)};
  model.validate();
  return model;
}

void save_model(const Model& model, const std::filesystem::path& container, const std::filesystem::path& manifest,
                DType dtype) {
  model.validate();
  WeightStore subset;
  for (const LayerSpec& l : model.spec.layers) subset.emplace(l.name, model.weights.at(l.name));
  write_container(container, subset, dtype);
  write_file(manifest, manifest_to_json(model.spec));
}

Dataset Dataset::head(std::size_t count) const {
  if (count >= size()) return *this;
  Dataset d;
  d.rows = rows;
  d.cols = cols;
  d.images = images.leftCols(static_cast<Eigen::Index>(count));
  d.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(count));
  return d;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const std::vector<char> img = read_file(images);
  const std::vector<char> lab = read_file(labels);
  if (img.size() < 16) throw InputError("idx: truncated image header in " + images.string());
  if (lab.size() < 8) throw InputError("idx: truncated label header in " + labels.string());
  if (read_be32(img.data()) != 0x00000803) throw InputError("idx: bad image magic number in " + images.string());
  if (read_be32(lab.data()) != 0x00000801) throw InputError("idx: bad label magic number in " + labels.string());

  const std::size_t count = read_be32(img.data() + 4);
  const std::size_t rows = read_be32(img.data() + 8);
  const std::size_t cols = read_be32(img.data() + 12);
  const std::size_t label_count = read_be32(lab.data() + 4);
  if (count != label_count) throw InputError("idx: image count and label count differ");
  if (img.size() < 16 + count * rows * cols) throw InputError("idx: truncated image data");
  if (lab.size() < 8 + count) throw InputError("idx: truncated label data");

  Dataset d;
  d.rows = rows;
  d.cols = cols;
  d.images.resize(static_cast<Eigen::Index>(rows * cols), static_cast<Eigen::Index>(count));
  const auto* px = reinterpret_cast<const unsigned char*>(img.data() + 16);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = 0; k < rows * cols; ++k)
      d.images(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          static_cast<float>(px[i * rows * cols + k]) / 255.0f;
  const auto* lb = reinterpret_cast<const unsigned char*>(lab.data() + 8);
  d.labels.assign(lb, lb + count);
  return d;
}

}  // namespace svr
