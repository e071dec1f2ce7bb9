#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svr/linalg.hpp"
#include "svr/rng.hpp"

namespace svr {

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), accurate in the tail.
double gamma_q(double a, double x);

/// CDF of chi-square with k degrees of freedom. Throws InputError for x < 0 or k < 1.
double chi2_cdf(double x, double k);
/// 1 - chi2_cdf, without cancellation.
double chi2_survival(double x, double k);
/// Inverse of chi2_cdf for p in (0, 1).
double chi2_quantile(double p, double k);
/// Inverse of chi2_survival for q in (0, 1); use for upper-tail levels.
double chi2_quantile_upper(double q, double k);

/// Rescaled chi-square scale * chi2(dof) approximating adjacency coefficients
/// between independent random frames: dof 1, scale 1/n for fully connected
/// pairs; dof K^2, scale 1/(n K^2) for convolutional pairs.
struct NullModel {
  double dof = 1.0;
  double scale = 1.0;
  std::size_t n = 1;

  static NullModel fc(std::size_t n);
  static NullModel conv(std::size_t channels, std::size_t kernel);

  [[nodiscard]] double cdf(double x) const;
  [[nodiscard]] double survival(double x) const;
  /// Value exceeded with probability `survival_fraction` under the model.
  [[nodiscard]] double threshold(double survival_fraction) const;
};

/// Uniform point on S^{n-1}: a normalized standard normal vector.
Vector sample_sphere(std::size_t n, Rng& rng);

/// n <X, Y>^2 scaled coefficient for independent uniform unit vectors in R^n.
double sample_fc_coefficient(std::size_t n, Rng& rng);
/// ||X^T Y||_F^2 for X on S^{c-1}, Y on S^{cK^2-1} reshaped to c x K^2.
double sample_conv_coefficient(std::size_t channels, std::size_t kernel, Rng& rng);

struct Moments {
  double m2 = 0;         // E<X,Y>^2
  double m4 = 0;         // E<X,Y>^4
  double gamma = 0;      // E x1^2 x2^2
  double mean_r1sq = 0;  // E r1^2
  double std_r1sq = 0;   // std r1^2
};

/// Closed forms: m2 = 1/n, m4 = 3/(n^2+2n), gamma = 1/(n^2+2n),
/// E r1^2 = 1/K^2, std r1^2 = (1/K^2) sqrt((2K^2-2)/(cK^2+2)) with c = `channels`.
Moments analytic_moments(std::size_t n, std::size_t kernel, std::size_t channels);
inline Moments analytic_moments(std::size_t n, std::size_t kernel) { return analytic_moments(n, kernel, n); }

struct MomentReport {
  std::size_t n = 0, kernel = 1, channels = 0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  Moments analytic;
  Moments empirical;
  Moments standard_error;
  // Per moment: |empirical - analytic| <= 4 standard errors.
  bool m2_ok = false, m4_ok = false, gamma_ok = false, mean_r1sq_ok = false, std_r1sq_ok = false;

  [[nodiscard]] bool all_ok() const { return m2_ok && m4_ok && gamma_ok && mean_r1sq_ok && std_r1sq_ok; }
  [[nodiscard]] std::string to_json() const;
};

inline constexpr double kMonteCarloSigmas = 4.0;

/// Monte Carlo check of the sphere moments (n) and of r1^2 (c channels,
/// K x K kernel). Requires n_samples >= 1000. Trials are split into
/// per-index RNG streams, so results do not depend on `threads`.
MomentReport validate_moments(std::size_t n, std::size_t kernel, std::size_t channels, std::size_t n_samples,
                              std::uint64_t seed, unsigned threads = 1);

/// Exact two-sided Kolmogorov-Smirnov statistic of sorted samples against
/// the model CDF. Throws InputError when unsorted or fewer than 100 samples.
double ks_distance(std::span<const double> sorted_samples, const NullModel& model);

/// Draws N null coefficients (scaled so the limit is `model`) and returns the
/// KS distance. kind "fc": n <X,Y>^2 vs chi2(1); "conv": c ||X^T Y||_F^2 vs chi2(K^2)/K^2.
struct KsReport {
  std::string kind;
  std::size_t n = 0, kernel = 1, samples = 0;
  std::uint64_t seed = 0;
  double distance = 0;
  [[nodiscard]] std::string to_json() const;
};
KsReport ks_null_check(const std::string& kind, std::size_t n, std::size_t kernel, std::size_t samples,
                       std::uint64_t seed, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Survival of adjacency coefficients between randomly initialised layers.

enum class WeightInit { normal, uniform };

/// Two consecutive layers in -> mid -> out. For conv pairs the shapes are
/// (mid x in x K x K) then (out x mid x K x K).
struct LayerPairSpec {
  bool conv = false;
  std::size_t in = 16, mid = 64, out = 32;
  std::size_t kernel = 3;
};

struct SurvivalRow {
  double threshold = 0;
  double empirical = 0;
  double model = 0;
};

struct SurvivalReport {
  LayerPairSpec pair;
  WeightInit init = WeightInit::normal;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::size_t coefficients = 0;
  NullModel model;
  std::vector<SurvivalRow> rows;

  /// max |empirical - model| over rows whose model survival >= floor.
  [[nodiscard]] double max_gap(double model_floor = 1e-2) const;
  [[nodiscard]] std::string to_csv() const;
  [[nodiscard]] std::string to_json() const;
};

/// Initialises `trials` independent layer pairs i.i.d. (standard normal or
/// uniform on [-1, 1]), builds their adjacency and compares the empirical
/// survival of all coefficients to the rescaled chi-square model on a log
/// grid of `grid_points` thresholds spanning model survival 1 .. 1e-3.
SurvivalReport survival_validation(const LayerPairSpec& pair, WeightInit init, std::uint64_t seed,
                                   std::size_t trials = 40, std::size_t grid_points = 40, unsigned threads = 1);

}  // namespace svr
