#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "json.hpp"
#include "svr/error.hpp"
#include "svr/parallel.hpp"
#include "svr/spectra.hpp"
#include "svr/stats.hpp"

namespace svr {

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, WeightInit init, Rng& rng) {
  Tensor t(std::move(shape));
  if (init == WeightInit::normal) {
    std::normal_distribution<double> d(0.0, 1.0);
    for (double& v : t.values()) v = d(rng);
  } else {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (double& v : t.values()) v = d(rng);
  }
  return t;
}

std::pair<LayerSpec, LayerSpec> pair_specs(const LayerPairSpec& p) {
  LayerSpec a{"first", p.conv ? LayerKind::conv : LayerKind::fc, p.in, p.mid, p.conv ? p.kernel : 0, {}, 1, {}};
  LayerSpec b{"second", p.conv ? LayerKind::conv : LayerKind::fc, p.mid, p.out, p.conv ? p.kernel : 0, {}, 1, {}};
  return {a, b};
}

}  // namespace

double SurvivalReport::max_gap(double model_floor) const {
  double gap = 0.0;
  for (const SurvivalRow& r : rows)
    if (r.model >= model_floor) gap = std::max(gap, std::abs(r.empirical - r.model));
  return gap;
}

std::string SurvivalReport::to_csv() const {
  std::ostringstream out;
  out.precision(12);
  out << "threshold,empirical,model\n";
  for (const SurvivalRow& r : rows) out << r.threshold << ',' << r.empirical << ',' << r.model << '\n';
  return out.str();
}

std::string SurvivalReport::to_json() const {
  nlohmann::json j{{"pair",
                    {{"kind", pair.conv ? "conv" : "fc"},
                     {"in", pair.in},
                     {"mid", pair.mid},
                     {"out", pair.out},
                     {"kernel", pair.conv ? pair.kernel : 1}}},
                   {"init", init == WeightInit::normal ? "normal" : "uniform"},
                   {"seed", seed},
                   {"trials", trials},
                   {"coefficients", coefficients},
                   {"null_model", {{"dof", model.dof}, {"scale", model.scale}, {"n", model.n}}},
                   {"max_gap_model_survival_ge_1e-2", max_gap()}};
  j["rows"] = nlohmann::json::array();
  for (const SurvivalRow& r : rows)
    j["rows"].push_back({{"threshold", r.threshold}, {"empirical", r.empirical}, {"model", r.model}});
  return j.dump(2);
}

SurvivalReport survival_validation(const LayerPairSpec& pair, WeightInit init, std::uint64_t seed, std::size_t trials,
                                   std::size_t grid_points, unsigned threads) {
  if (trials == 0 || grid_points < 2) throw InputError("survival_validation: need trials >= 1 and grid_points >= 2");
  const auto specs = pair_specs(pair);
  const LayerSpec& first = specs.first;
  const LayerSpec& second = specs.second;

  std::vector<Matrix> per_trial(trials);
  std::vector<NullModel> models(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    Rng rng = Rng::stream(seed, t);
    const Tensor w0 = random_tensor(first.weight_shape(), init, rng);
    const Tensor w1 = random_tensor(second.weight_shape(), init, rng);
    const AdjacencyMatrix adj = pair_adjacency(factor_layer(first, w0), factor_layer(second, w1));
    per_trial[t] = adj.values;
    models[t] = adj.null_model();
  });

  SurvivalReport report;
  report.pair = pair;
  report.init = init;
  report.seed = seed;
  report.trials = trials;
  report.model = models.front();

  std::vector<double> coeffs;
  for (const Matrix& m : per_trial) coeffs.insert(coeffs.end(), m.data(), m.data() + m.size());
  std::sort(coeffs.begin(), coeffs.end());
  report.coefficients = coeffs.size();

  const double lo = std::log(report.model.threshold(0.99));
  const double hi = std::log(report.model.threshold(1e-3));
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double x = std::exp(lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_points - 1));
    const auto above = coeffs.end() - std::upper_bound(coeffs.begin(), coeffs.end(), x);
    report.rows.push_back(
        SurvivalRow{x, static_cast<double>(above) / static_cast<double>(coeffs.size()), report.model.survival(x)});
  }
  return report;
}

}  // namespace svr
