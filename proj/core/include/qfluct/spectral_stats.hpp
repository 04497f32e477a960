#pragma once

// Consecutive level-spacing ratios as a chaos indicator.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qfluct {

inline constexpr double kPoissonMeanR = 0.38629436111989061;  // 2 ln 2 - 1
inline constexpr double kGoeMeanR = 0.5307;

struct RStatReport {
  double center = 0.0;       ///< energy of the central level
  std::size_t levels = 0;    ///< levels inside the window
  std::size_t pairs = 0;     ///< spacing pairs that entered the mean
  std::size_t excluded = 0;  ///< pairs dropped for a degenerate gap
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// r_n = min(s_n / s_{n-1}, s_{n-1} / s_n) over `count` levels centred on
/// the level nearest `center`. Gaps below tolerance * span are degenerate.
RStatReport r_statistic(std::span<const double> levels, double center, std::size_t count,
                        double degeneracy_tolerance = 1e-10);
/// Same over all levels with lo <= E <= hi.
RStatReport r_statistic_range(std::span<const double> levels, double lo, double hi,
                              double degeneracy_tolerance = 1e-10);

/// Sorted cumulative sums of unit-mean exponential spacings.
std::vector<double> poisson_spectrum(std::size_t n, std::uint64_t seed);
/// Eigenvalues of a GOE matrix (off-diagonal variance 1/2, diagonal variance 1).
std::vector<double> goe_spectrum(std::size_t n, std::uint64_t seed);

std::string rstat_json(const RStatReport& r);

}  // namespace qfluct
