#include "qfluct/spectral_stats.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>
#include "json.hpp"

#include "linalg.hpp"
#include "qfluct/errors.hpp"

namespace qfluct {

namespace {

RStatReport mean_ratio(std::span<const double> levels, std::size_t first, std::size_t count, double tol) {
  if (count < 3) throw ParameterError("the r statistic needs at least three levels");
  for (std::size_t k = 1; k < levels.size(); ++k) {
    if (levels[k] < levels[k - 1]) throw ParameterError("levels must be ascending");
  }
  const double span = levels.back() - levels.front();
  const double floor = tol * span;
  RStatReport r;
  r.levels = count;
  r.center = levels[first + count / 2];
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t k = first + 1; k + 1 < first + count; ++k) {
    const double s0 = levels[k] - levels[k - 1];
    const double s1 = levels[k + 1] - levels[k];
    if (s0 <= floor || s1 <= floor) {
      ++r.excluded;
      continue;
    }
    const double v = std::min(s0 / s1, s1 / s0);
    sum += v;
    sum2 += v * v;
    ++r.pairs;
  }
  if (r.pairs == 0) throw NumericalError("every spacing pair in the window is degenerate");
  r.mean = sum / static_cast<double>(r.pairs);
  if (r.pairs > 1) {
    const double var = (sum2 - r.pairs * r.mean * r.mean) / static_cast<double>(r.pairs - 1);
    r.stderr_ = std::sqrt(std::max(var, 0.0) / static_cast<double>(r.pairs));
  }
  return r;
}

}  // namespace

RStatReport r_statistic(std::span<const double> levels, double center, std::size_t count, double tol) {
  if (levels.size() < count || count < 3) throw ParameterError("not enough levels for the requested window");
  const auto it = std::lower_bound(levels.begin(), levels.end(), center);
  std::size_t c = static_cast<std::size_t>(it - levels.begin());
  if (c == levels.size() || (c > 0 && center - levels[c - 1] <= levels[c] - center)) --c;
  const std::size_t half = count / 2;
  if (c < half || c - half + count > levels.size()) {
    throw NumericalError("the r-statistic window is clipped by the spectral edge");
  }
  return mean_ratio(levels, c - half, count, tol);
}

RStatReport r_statistic_range(std::span<const double> levels, double lo, double hi, double tol) {
  const auto a = std::lower_bound(levels.begin(), levels.end(), lo);
  const auto b = std::upper_bound(levels.begin(), levels.end(), hi);
  return mean_ratio(levels, static_cast<std::size_t>(a - levels.begin()), static_cast<std::size_t>(b - a), tol);
}

std::vector<double> poisson_spectrum(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::exponential_distribution<double> gap(1.0);
  std::vector<double> e(n);
  double x = 0.0;
  for (auto& v : e) v = (x += gap(engine));
  return e;
}

std::vector<double> goe_spectrum(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t r = 0; r < n; ++r) a(r, c) = normal(engine);
  }
  const Eigen::MatrixXd h = 0.5 * (a + a.transpose());
  const Eigen::VectorXd w = detail::symmetric_eigenvalues(h);
  return {w.data(), w.data() + w.size()};
}

std::string rstat_json(const RStatReport& r) {
  nlohmann::json j = {{"center", r.center},     {"levels", r.levels}, {"pairs", r.pairs},
                      {"excluded_pairs", r.excluded}, {"mean_r", r.mean},  {"stderr", r.stderr_}};
  return j.dump(2);
}

}  // namespace qfluct
