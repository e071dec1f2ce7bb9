#include "svr/export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "svr/error.hpp"

namespace svr {

std::string version() { return SVR_VERSION; }

std::string graph_json(const SvrGraph& graph, const ExportOptions& options) {
  using nlohmann::json;
  json nodes = json::array();
  for (const auto& layer : graph.neurons)
    for (const SpectralNeuron& n : layer)
      nodes.push_back({{"layer", n.layer},
                       {"rank", n.rank},
                       {"sigma", n.sigma},
                       {"color", n.color},
                       {"tie_flag", static_cast<bool>(graph.tie_flags[n.layer])}});

  json edges = json::array();
  json adjacencies = json::array();
  for (std::size_t i = 0; i < graph.adjacencies.size(); ++i) {
    const AdjacencyMatrix& adj = graph.adjacencies[i];
    const NullModel null = adj.null_model();
    const double t = edge_threshold(adj, options.p);
    json entry{{"from_layer", i},
               {"kind", to_string(adj.kind)},
               {"threshold", t},
               {"null", {{"dof", null.dof}, {"scale", null.scale}, {"n", null.n}}}};
    if (!adj.boundary_note.empty()) entry["boundary_note"] = adj.boundary_note;
    adjacencies.push_back(entry);
    for (const Edge& e : threshold_edges(adj, options.p))
      edges.push_back({{"from", {i, e.col}}, {"to", {i + 1, e.row}}, {"weight", e.weight}});
  }

  json meta{{"p", options.p},
            {"seed", options.seed},
            {"version", version()},
            {"index_base", 0},
            {"adjacencies", adjacencies},
            {"tie_flags", graph.tie_flags}};
  if (!options.model_path.empty()) meta["model"] = options.model_path;
  return json{{"nodes", nodes}, {"edges", edges}, {"meta", meta}}.dump(2);
}

std::string graph_dot(const SvrGraph& graph, const ExportOptions& options) {
  std::ostringstream out;
  out << "digraph svr {\n  // p=" << options.p << " seed=" << options.seed << " version=" << version() << "\n";
  out << "  node [shape=circle, style=filled, label=\"\"];\n";
  for (const auto& layer : graph.neurons)
    for (const SpectralNeuron& n : layer) {
      const int shade = 255 - static_cast<int>(std::lround(200.0 * std::clamp(n.color, 0.0, 1.0)));
      out << "  n" << n.layer << '_' << n.rank << " [pos=\"" << n.layer << ',' << -static_cast<long>(n.rank)
          << "!\", fillcolor=\"#ff" << std::hex;
      out.width(2);
      out.fill('0');
      out << shade;
      out.width(2);
      out << shade << std::dec << "\"];\n";
    }
  for (std::size_t i = 0; i < graph.adjacencies.size(); ++i) {
    for (const Edge& e : threshold_edges(graph.adjacencies[i], options.p)) {
      const int grey = 255 - static_cast<int>(std::lround(255.0 * std::clamp(e.weight, 0.0, 1.0)));
      out << "  n" << i << '_' << e.col << " -> n" << i + 1 << '_' << e.row << " [color=\"#" << std::hex;
      for (int k = 0; k < 3; ++k) {
        out.width(2);
        out.fill('0');
        out << grey;
      }
      out << std::dec << "\"];\n";
    }
  }
  out << "}\n";
  return out.str();
}

std::string matrix_csv(const Matrix& m) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw InputError("failed writing '" + path.string() + "'");
}

void write_pgm(const std::filesystem::path& path, const Matrix& image, int bits) {
  if (bits != 8 && bits != 16) throw InputError("write_pgm: bits must be 8 or 16");
  if (image.size() == 0) throw InputError("write_pgm: empty image");
  const double lo = image.minCoeff(), hi = image.maxCoeff();
  const int maxval = bits == 8 ? 255 : 65535;
  std::ostringstream data;
  data << "P5\n" << image.cols() << ' ' << image.rows() << '\n' << maxval << '\n';
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      const double unit = hi > lo ? (image(r, c) - lo) / (hi - lo) : 0.0;
      const auto v = static_cast<unsigned>(std::lround(unit * maxval));
      if (bits == 16) data.put(static_cast<char>(v >> 8));
      data.put(static_cast<char>(v & 0xff));
    }
  }
  write_text(path, data.str());
  const nlohmann::json side{{"normalization", "minmax"}, {"min", lo}, {"max", hi}, {"bits", bits},
                            {"rows", image.rows()}, {"cols", image.cols()}};
  write_text(path.string() + ".json", side.dump(2));
}

}  // namespace svr
