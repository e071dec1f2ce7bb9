#include "svr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "svr/error.hpp"
#include "svr/parallel.hpp"

namespace svr {

namespace {

constexpr double kGammaEps = 1e-16;
constexpr int kGammaMaxIter = 10000;
constexpr std::size_t kBlock = 1024;

// Series for P(a, x), valid and fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kGammaMaxIter; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kGammaEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for Q(a, x), x >= a + 1.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kGammaEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kGammaMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kGammaEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

void check_chi2_args(double x, double k) {
  if (!(k >= 1.0)) throw InputError("chi2: degrees of freedom must be >= 1");
  if (!(x >= 0.0)) throw InputError("chi2: x must be >= 0");
}

// Normal quantile, Abramowitz & Stegun 26.2.23 (|error| < 4.5e-4). Seed only.
double normal_quantile_seed(double p) {
  const double q = p < 0.5 ? p : 1.0 - p;
  const double t = std::sqrt(-2.0 * std::log(q));
  const double z = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                           (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
  return p < 0.5 ? -z : z;
}

// Seed for the chi-square quantile at standard normal quantile z.
double wilson_hilferty(double z, double k) {
  const double h = 2.0 / (9.0 * k);
  const double base = 1.0 - h + z * std::sqrt(h);
  const double x = k * base * base * base;
  return std::isfinite(x) ? std::max(x, 1e-8) : k;
}

// Bisection on an increasing function g with g(x) crossing zero.
template <typename F>
double bisect_increasing(F&& g, double seed) {
  double lo = 0.0;
  double hi = std::max(seed, 1e-8);
  while (g(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw NumericalError("chi2 quantile: bracket expansion overflowed");
  }
  if (seed < hi && seed > lo && g(seed) >= 0.0) hi = seed;
  for (int i = 0; i < 400 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct SampleStats {
  double mean = 0, sd = 0, se = 0;
};

SampleStats describe(const std::vector<double>& v) {
  SampleStats s;
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / (n - 1.0));
  s.se = s.sd / std::sqrt(n);
  return s;
}

bool within(double empirical, double analytic, double se) {
  return std::abs(empirical - analytic) <= kMonteCarloSigmas * se + 1e-12;
}

// Fills out[i] = draw(rng) with one RNG stream per block of kBlock samples.
template <typename Draw>
std::vector<double> blocked_samples(std::size_t count, std::uint64_t seed, std::uint64_t salt, unsigned threads,
                                    Draw&& draw) {
  std::vector<double> out(count);
  const std::size_t blocks = (count + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t b) {
    Rng rng = Rng::stream(seed ^ salt, b);
    const std::size_t end = std::min(count, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) out[i] = draw(rng);
  });
  return out;
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw InputError("gamma_p: need a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_fraction(a, x);
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw InputError("gamma_q: need a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chi2_cdf(double x, double k) {
  check_chi2_args(x, k);
  return gamma_p(0.5 * k, 0.5 * x);
}

double chi2_survival(double x, double k) {
  check_chi2_args(x, k);
  return gamma_q(0.5 * k, 0.5 * x);
}

double chi2_quantile(double p, double k) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("chi2_quantile: p must lie in (0, 1)");
  if (!(k >= 1.0)) throw InputError("chi2_quantile: degrees of freedom must be >= 1");
  // Upper-tail levels invert more accurately through the survival function.
  if (p > 0.5) return chi2_quantile_upper(1.0 - p, k);
  return bisect_increasing([&](double x) { return chi2_cdf(x, k) - p; },
                           wilson_hilferty(normal_quantile_seed(p), k));
}

double chi2_quantile_upper(double q, double k) {
  if (!(q > 0.0 && q < 1.0)) throw InputError("chi2_quantile_upper: q must lie in (0, 1)");
  if (!(k >= 1.0)) throw InputError("chi2_quantile_upper: degrees of freedom must be >= 1");
  return bisect_increasing([&](double x) { return q - chi2_survival(x, k); },
                           wilson_hilferty(-normal_quantile_seed(q), k));
}

NullModel NullModel::fc(std::size_t n) {
  if (n == 0) throw InputError("null model: n must be >= 1");
  return NullModel{1.0, 1.0 / static_cast<double>(n), n};
}

NullModel NullModel::conv(std::size_t channels, std::size_t kernel) {
  if (channels == 0 || kernel == 0) throw InputError("null model: channels and kernel must be >= 1");
  const double k2 = static_cast<double>(kernel * kernel);
  return NullModel{k2, 1.0 / (static_cast<double>(channels) * k2), channels};
}

double NullModel::cdf(double x) const { return x <= 0.0 ? 0.0 : chi2_cdf(x / scale, dof); }
double NullModel::survival(double x) const { return x <= 0.0 ? 1.0 : chi2_survival(x / scale, dof); }
double NullModel::threshold(double survival_fraction) const {
  return scale * chi2_quantile_upper(survival_fraction, dof);
}

Vector sample_sphere(std::size_t n, Rng& rng) {
  if (n == 0) throw InputError("sample_sphere: dimension must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(static_cast<Eigen::Index>(n));
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    norm = z.norm();
  } while (norm == 0.0);
  return z / norm;
}

double sample_fc_coefficient(std::size_t n, Rng& rng) {
  const Vector x = sample_sphere(n, rng);
  const Vector y = sample_sphere(n, rng);
  const double d = x.dot(y);
  return d * d;
}

double sample_conv_coefficient(std::size_t channels, std::size_t kernel, Rng& rng) {
  const Vector x = sample_sphere(channels, rng);
  const Vector y = sample_sphere(channels * kernel * kernel, rng);
  // y is the row-major flattening of a c x K^2 matrix.
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> ym(
      y.data(), static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(kernel * kernel));
  return (x.transpose() * ym).squaredNorm();
}

Moments analytic_moments(std::size_t n, std::size_t kernel, std::size_t channels) {
  const double nn = static_cast<double>(n);
  const double k2 = static_cast<double>(kernel * kernel);
  const double c = static_cast<double>(channels);
  Moments m;
  m.m2 = 1.0 / nn;
  m.m4 = 3.0 / (nn * nn + 2.0 * nn);
  m.gamma = 1.0 / (nn * nn + 2.0 * nn);
  m.mean_r1sq = 1.0 / k2;
  m.std_r1sq = (1.0 / k2) * std::sqrt((2.0 * k2 - 2.0) / (c * k2 + 2.0));
  return m;
}

MomentReport validate_moments(std::size_t n, std::size_t kernel, std::size_t channels, std::size_t n_samples,
                              std::uint64_t seed, unsigned threads) {
  if (n_samples < 1000) throw InputError("validate_moments: need at least 1000 samples");
  if (n == 0 || kernel == 0 || channels == 0) throw InputError("validate_moments: dimensions must be >= 1");

  MomentReport r;
  r.n = n;
  r.kernel = kernel;
  r.channels = channels;
  r.n_samples = n_samples;
  r.seed = seed;
  r.analytic = analytic_moments(n, kernel, channels);

  // Sphere pairs: one draw yields <X,Y>^2 and x1^2 x2^2.
  std::vector<double> dot2(n_samples), cross(n_samples);
  const std::size_t blocks = (n_samples + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t b) {
    Rng rng = Rng::stream(seed, b);
    const std::size_t end = std::min(n_samples, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      const Vector x = sample_sphere(n, rng);
      const Vector y = sample_sphere(n, rng);
      const double d = x.dot(y);
      dot2[i] = d * d;
      cross[i] = n >= 2 ? x(0) * x(0) * x(1) * x(1) : 0.0;
    }
  });
  std::vector<double> dot4(n_samples);
  std::transform(dot2.begin(), dot2.end(), dot4.begin(), [](double v) { return v * v; });

  const std::size_t k2 = kernel * kernel;
  const std::vector<double> r1sq = blocked_samples(n_samples, seed, 0x5eedf00dULL, threads, [&](Rng& rng) {
    const Vector y = sample_sphere(channels * k2, rng);
    double s = 0;
    for (std::size_t c = 0; c < channels; ++c) s += y(static_cast<Eigen::Index>(c * k2)) * y(static_cast<Eigen::Index>(c * k2));
    return s;
  });

  const SampleStats s2 = describe(dot2), s4 = describe(dot4), sg = describe(cross), sr = describe(r1sq);
  r.empirical = {s2.mean, s4.mean, sg.mean, sr.mean, sr.sd};
  double mu4 = 0;  // fourth central moment of r1^2, for the delta-method SE of its std
  for (double v : r1sq) mu4 += std::pow(v - sr.mean, 4);
  mu4 /= static_cast<double>(n_samples);
  const double var = sr.sd * sr.sd;
  const double se_std =
      sr.sd > 0 ? std::sqrt(std::max(0.0, mu4 - var * var) / static_cast<double>(n_samples)) / (2.0 * sr.sd) : 0.0;
  r.standard_error = {s2.se, s4.se, sg.se, sr.se, se_std};

  r.m2_ok = within(s2.mean, r.analytic.m2, s2.se);
  r.m4_ok = within(s4.mean, r.analytic.m4, s4.se);
  r.gamma_ok = n < 2 || within(sg.mean, r.analytic.gamma, sg.se);
  r.mean_r1sq_ok = within(sr.mean, r.analytic.mean_r1sq, sr.se);
  r.std_r1sq_ok = within(sr.sd, r.analytic.std_r1sq, se_std);
  return r;
}

std::string MomentReport::to_json() const {
  auto pack = [](const Moments& m) {
    return nlohmann::json{{"m2", m.m2}, {"m4", m.m4}, {"gamma", m.gamma}, {"mean_r1sq", m.mean_r1sq},
                          {"std_r1sq", m.std_r1sq}};
  };
  nlohmann::json j{{"n", n},
                   {"kernel", kernel},
                   {"channels", channels},
                   {"n_samples", n_samples},
                   {"seed", seed},
                   {"margin_standard_errors", kMonteCarloSigmas},
                   {"analytic", pack(analytic)},
                   {"empirical", pack(empirical)},
                   {"standard_error", pack(standard_error)},
                   {"ok",
                    {{"m2", m2_ok}, {"m4", m4_ok}, {"gamma", gamma_ok}, {"mean_r1sq", mean_r1sq_ok},
                     {"std_r1sq", std_r1sq_ok}}}};
  return j.dump(2);
}

double ks_distance(std::span<const double> sorted_samples, const NullModel& model) {
  if (sorted_samples.size() < 100) throw InputError("ks_distance: need at least 100 samples");
  if (!std::is_sorted(sorted_samples.begin(), sorted_samples.end()))
    throw InputError("ks_distance: samples must be sorted");
  const double n = static_cast<double>(sorted_samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted_samples.size(); ++i) {
    const double f = model.cdf(sorted_samples[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

KsReport ks_null_check(const std::string& kind, std::size_t n, std::size_t kernel, std::size_t samples,
                       std::uint64_t seed, unsigned threads) {
  KsReport r{kind, n, kernel, samples, seed, 0.0};
  std::vector<double> values;
  NullModel limit;
  const double nn = static_cast<double>(n);
  if (kind == "fc") {
    values = blocked_samples(samples, seed, 0xf1ULL, threads, [&](Rng& rng) { return nn * sample_fc_coefficient(n, rng); });
    limit = NullModel{1.0, 1.0, n};
  } else if (kind == "conv") {
    values = blocked_samples(samples, seed, 0xc0ULL, threads,
                             [&](Rng& rng) { return nn * sample_conv_coefficient(n, kernel, rng); });
    const double k2 = static_cast<double>(kernel * kernel);
    limit = NullModel{k2, 1.0 / k2, n};
  } else {
    throw InputError("ks_null_check: kind must be 'fc' or 'conv'");
  }
  std::sort(values.begin(), values.end());
  r.distance = ks_distance(values, limit);
  return r;
}

std::string KsReport::to_json() const {
  return nlohmann::json{{"kind", kind}, {"n", n}, {"kernel", kernel}, {"samples", samples}, {"seed", seed},
                        {"ks_distance", distance}}
      .dump(2);
}

}  // namespace svr
