#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "svr/linalg.hpp"
#include "svr/spectra.hpp"

namespace svr {

struct ExportOptions {
  double p = 0.15;  // null survival fraction used for thresholding
  std::uint64_t seed = 0;
  std::string model_path;
};

/// Graph as JSON: nodes {layer, rank, sigma, color, tie_flag}, edges
/// {from: [layer, rank], to: [layer + 1, rank], weight} above each adjacency's
/// threshold, and meta (p, thresholds, null parameters, boundary notes, seed,
/// version). Ranks are 0-based.
std::string graph_json(const SvrGraph& graph, const ExportOptions& options);

/// Lossy DOT view: node x = layer, y = rank, edge gray level = weight.
std::string graph_dot(const SvrGraph& graph, const ExportOptions& options);

/// Adjacency values as CSV, one matrix row per line.
std::string matrix_csv(const Matrix& m);

/// Binary PGM (P5), min-max normalized to 8 or 16 bits, plus a sidecar
/// `<path>.json` recording the normalization.
void write_pgm(const std::filesystem::path& path, const Matrix& image, int bits = 8);

/// Writes `text` to `path`, throwing InputError when the file cannot be opened.
void write_text(const std::filesystem::path& path, const std::string& text);

std::string version();

}  // namespace svr
