#include "qfluct/semiclassics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include "qfluct/errors.hpp"

namespace qfluct {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::mt19937_64 partition_engine(std::uint64_t seed, unsigned partition) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(partition), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

std::uint64_t partition_size(std::uint64_t total, unsigned parts, unsigned k) {
  const std::uint64_t base = total / parts;
  return k + 1 == parts ? total - base * (parts - 1) : base;
}

// Runs `body(engine, count, partition)` on every partition and returns the
// per-partition results in partition order.
template <class Body>
auto run_partitions(const QuadratureSpec& spec, Body body) {
  if (spec.samples == 0) throw ParameterError("quadrature needs at least one sample");
  const unsigned parts = std::max(1u, spec.partitions);
  using Result = decltype(body(std::declval<std::mt19937_64&>(), std::uint64_t{}, 0u));
  std::vector<std::future<Result>> jobs;
  jobs.reserve(parts);
  for (unsigned k = 0; k < parts; ++k) {
    jobs.push_back(std::async(std::launch::async, [&, k] {
      auto engine = partition_engine(spec.seed, k);
      return body(engine, partition_size(spec.samples, parts, k), k);
    }));
  }
  std::vector<Result> out;
  out.reserve(parts);
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

struct BinAccumulator {
  std::vector<double> count;
  std::vector<double> sum;
  std::vector<double> sum2;
  std::uint64_t inside = 0;
};

BinAccumulator accumulate_bins(const ClassicalModel& model, const PhaseFunction* observable, const EnergyGrid& grid,
                               std::mt19937_64& engine, std::uint64_t count) {
  BinAccumulator acc;
  acc.count.assign(grid.bins, 0.0);
  if (observable) {
    acc.sum.assign(grid.bins, 0.0);
    acc.sum2.assign(grid.bins, 0.0);
  }
  const std::size_t dim = model.coordinates.size();
  std::vector<double> unit(dim), point(dim);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double inv_width = 1.0 / grid.width();
  for (std::uint64_t s = 0; s < count; ++s) {
    for (auto& u : unit) u = uniform(engine);
    model.from_unit(unit, point);
    const double e = model.energy(point);
    const double pos = (e - grid.lo) * inv_width;
    if (pos < 0.0 || pos >= static_cast<double>(grid.bins)) continue;
    const auto k = static_cast<std::size_t>(pos);
    acc.count[k] += 1.0;
    ++acc.inside;
    if (observable) {
      const double o = (*observable)(point);
      acc.sum[k] += o;
      acc.sum2[k] += o * o;
    }
  }
  return acc;
}

BinAccumulator reduce(std::vector<BinAccumulator> parts) {
  BinAccumulator total = std::move(parts.front());
  for (std::size_t p = 1; p < parts.size(); ++p) {
    for (std::size_t k = 0; k < total.count.size(); ++k) {
      total.count[k] += parts[p].count[k];
      if (!total.sum.empty()) {
        total.sum[k] += parts[p].sum[k];
        total.sum2[k] += parts[p].sum2[k];
      }
    }
    total.inside += parts[p].inside;
  }
  return total;
}

double lmg_energy_impl(double q, double p, double alpha, LmgClassicalForm form) {
  const double pq = p * (1.0 - p);
  const double s = std::sin(q);
  const double sign = form == LmgClassicalForm::negative_sin2 ? -1.0 : 1.0;
  return alpha * p * p + (5.0 * alpha - 4.0) * pq + sign * 4.0 * (1.0 - alpha) * pq * s * s;
}

double dicke_energy_impl(double jz, double phi, double q, double p, const DickeParams& d, DickeCoupling c) {
  const double j = d.j();
  const double ratio = jz / j;
  const double spin = std::sqrt(std::max(0.0, 1.0 - ratio * ratio));
  const double field = c == DickeCoupling::field ? q : 1.0;
  return d.omega0 * jz + 0.5 * d.omega * (q * q + p * p) + 2.0 * d.alpha * std::sqrt(j) * field * spin * std::cos(phi);
}

}  // namespace

double classical_lmg_energy(double q, double p, double alpha, LmgClassicalForm form) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("LMG coordinate p must lie in [0, 1]");
  if (!(q >= 0.0 && q <= kTwoPi)) throw DomainError("LMG coordinate q must lie in [0, 2 pi]");
  return lmg_energy_impl(q, p, alpha, form);
}

double classical_dicke_energy(double jz, double phi, double q, double p, const DickeParams& params,
                              DickeCoupling coupling) {
  if (!(std::abs(jz) <= params.j())) throw DomainError("Dicke coordinate |jz| must not exceed j");
  return dicke_energy_impl(jz, phi, q, p, params, coupling);
}

PhaseFunction lmg_classical_observable(std::string_view name) {
  if (name == "nt_over_N") return [](std::span<const double> x) { return x[1]; };
  if (name == "nt2_over_N2") return [](std::span<const double> x) { return x[1] * x[1]; };
  if (name == "ntns_over_N2") return [](std::span<const double> x) { return x[1] * (1.0 - x[1]); };
  if (name == "QQ_over_N2") {
    return [](std::span<const double> x) {
      const double c = std::cos(x[0]);
      return 4.0 * x[1] * (1.0 - x[1]) * c * c;
    };
  }
  throw ParameterError("no classical limit for observable '" + std::string(name) + "'");
}

ClassicalModel lmg_classical(double alpha, LmgClassicalForm form) {
  ClassicalModel m;
  m.tag = "lmg";
  m.coordinates = {"q", "p"};
  m.alpha = alpha;
  m.volume = kTwoPi;
  m.density_factor = 1.0 / kTwoPi;
  m.measure = "dq dp on [0,2pi) x [0,1]";
  m.energy = [alpha, form](std::span<const double> x) { return lmg_energy_impl(x[0], x[1], alpha, form); };
  m.from_unit = [](std::span<const double> u, std::span<double> x) {
    x[0] = kTwoPi * u[0];
    x[1] = u[1];
  };
  return m;
}

double dicke_disk_radius(const DickeParams& params, double max_energy, double margin) {
  const double j = params.j();
  const double c = 2.0 * std::abs(params.alpha) * std::sqrt(j);
  const double floor = max_energy + params.omega0 * j + c;  // angle-only coupling bound folded in
  const double disc = c * c + 2.0 * params.omega * std::max(floor, 0.0);
  return (c + std::sqrt(disc)) / params.omega + margin;
}

ClassicalModel dicke_classical(const DickeParams& params, double disk_radius, DickeCoupling coupling) {
  params.validate();
  if (!(disk_radius > 0.0)) throw ParameterError("Dicke disk radius must be positive");
  ClassicalModel m;
  m.tag = "dicke";
  m.coordinates = {"jz", "phi", "q", "p"};
  m.alpha = params.alpha;
  const double j = params.j();
  m.volume = 2.0 * j * kTwoPi * std::numbers::pi * disk_radius * disk_radius;
  m.density_factor = 1.0 / (kTwoPi * kTwoPi);
  m.disk_radius = disk_radius;
  m.measure = "djz dphi dq dp, (q,p) disk";
  m.energy = [params, coupling](std::span<const double> x) {
    return dicke_energy_impl(x[0], x[1], x[2], x[3], params, coupling);
  };
  m.from_unit = [j, disk_radius](std::span<const double> u, std::span<double> x) {
    x[0] = j * (2.0 * u[0] - 1.0);
    x[1] = kTwoPi * u[1];
    const double r = disk_radius * std::sqrt(u[2]);
    const double theta = kTwoPi * u[3];
    x[2] = r * std::cos(theta);
    x[3] = r * std::sin(theta);
  };
  return m;
}

void EnergyGrid::validate() const {
  if (!(hi > lo) || bins == 0) throw ParameterError("energy grid must be sorted and non-empty");
}

double DosCurve::at(double e) const {
  if (energy.empty()) return 0.0;
  if (energy.size() == 1) return std::abs(e - energy.front()) <= 0.5 * bin_width ? density.front() : 0.0;
  if (e < energy.front() || e > energy.back()) return 0.0;
  const double pos = (e - energy.front()) / bin_width;
  const auto k = std::min(static_cast<std::size_t>(pos), energy.size() - 2);
  const double t = pos - static_cast<double>(k);
  return (1.0 - t) * density[k] + t * density[k + 1];
}

DosCurve density_of_states(const ClassicalModel& model, const EnergyGrid& grid, const QuadratureSpec& spec) {
  grid.validate();
  DosCurve dos;
  dos.model = model.tag;
  dos.alpha = model.alpha;
  dos.bin_width = grid.width();
  dos.bandwidth = spec.bandwidth;
  dos.disk_radius = model.disk_radius;
  dos.samples = spec.samples;
  dos.seed = spec.seed;
  dos.energy.resize(grid.bins);
  for (std::size_t k = 0; k < grid.bins; ++k) dos.energy[k] = grid.center(k);
  dos.density.assign(grid.bins, 0.0);
  dos.stderr_.assign(grid.bins, 0.0);
  const double S = static_cast<double>(spec.samples);
  const double scale = model.volume * model.density_factor / S;

  if (spec.bandwidth <= 0.0) {
    auto parts = run_partitions(spec, [&](std::mt19937_64& eng, std::uint64_t count, unsigned) {
      return accumulate_bins(model, nullptr, grid, eng, count);
    });
    const BinAccumulator acc = reduce(std::move(parts));
    for (std::size_t k = 0; k < grid.bins; ++k) {
      const double c = acc.count[k];
      dos.density[k] = scale * c / grid.width();
      dos.stderr_[k] = scale * std::sqrt(c * std::max(0.0, 1.0 - c / S)) / grid.width();
    }
    dos.captured_fraction = static_cast<double>(acc.inside) / S;
  } else {
    const double reach = 6.0 * spec.bandwidth;
    auto parts = run_partitions(spec, [&](std::mt19937_64& eng, std::uint64_t count, unsigned) {
      std::vector<double> energies;
      const std::size_t dim = model.coordinates.size();
      std::vector<double> unit(dim), point(dim);
      std::uniform_real_distribution<double> uniform(0.0, 1.0);
      for (std::uint64_t s = 0; s < count; ++s) {
        for (auto& u : unit) u = uniform(eng);
        model.from_unit(unit, point);
        const double e = model.energy(point);
        if (e >= grid.lo - reach && e <= grid.hi + reach) energies.push_back(e);
      }
      return energies;
    });
    std::vector<double> all;
    for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    std::sort(all.begin(), all.end());
    const double norm = 1.0 / (std::sqrt(kTwoPi) * spec.bandwidth);
    std::uint64_t inside = 0;
    for (double e : all) inside += (e >= grid.lo && e < grid.hi) ? 1 : 0;
    for (std::size_t k = 0; k < grid.bins; ++k) {
      const double c = grid.center(k);
      auto first = std::lower_bound(all.begin(), all.end(), c - reach);
      auto last = std::upper_bound(all.begin(), all.end(), c + reach);
      double sum = 0.0, sum2 = 0.0;
      for (auto it = first; it != last; ++it) {
        const double z = (*it - c) / spec.bandwidth;
        const double w = norm * std::exp(-0.5 * z * z);
        sum += w;
        sum2 += w * w;
      }
      dos.density[k] = scale * sum;
      dos.stderr_[k] = scale * std::sqrt(sum2);
    }
    dos.captured_fraction = static_cast<double>(inside) / S;
  }

  bool any = false;
  for (std::size_t k = 0; k < grid.bins; ++k) {
    if (dos.density[k] > 0.0) {
      any = true;
      if (dos.stderr_[k] > spec.max_relative_stderr * dos.density[k]) dos.stderr_warning = true;
    }
  }
  if (!any) throw NumericalError("energy shell is empty on the whole grid");
  return dos;
}

std::vector<ShellAverage> microcanonical_profile(const ClassicalModel& model, const PhaseFunction& observable,
                                                 const EnergyGrid& grid, const QuadratureSpec& spec) {
  grid.validate();
  auto parts = run_partitions(spec, [&](std::mt19937_64& eng, std::uint64_t count, unsigned) {
    return accumulate_bins(model, &observable, grid, eng, count);
  });
  const BinAccumulator acc = reduce(std::move(parts));
  std::vector<ShellAverage> out(grid.bins);
  for (std::size_t k = 0; k < grid.bins; ++k) {
    const double c = acc.count[k];
    out[k].shell_samples = static_cast<std::uint64_t>(c);
    if (c == 0.0) {
      out[k].value = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double mean = acc.sum[k] / c;
    const double var = std::max(0.0, acc.sum2[k] / c - mean * mean);
    out[k].value = mean;
    out[k].stderr_ = std::sqrt(var / c);
  }
  return out;
}

ShellAverage microcanonical_average_classical(const ClassicalModel& model, const PhaseFunction& observable,
                                              double energy, double shell_width, const QuadratureSpec& spec) {
  if (!(shell_width > 0.0)) throw ParameterError("shell width must be positive");
  const EnergyGrid grid{energy - 0.5 * shell_width, energy + 0.5 * shell_width, 1};
  const ShellAverage avg = microcanonical_profile(model, observable, grid, spec).front();
  if (avg.shell_samples == 0) throw NumericalError("density of states vanishes at E = " + std::to_string(energy));
  return avg;
}

double Curve::at(double e) const {
  if (x.size() < 2 || e < x.front() || e > x.back()) return std::numeric_limits<double>::quiet_NaN();
  const double h = step();
  const auto k = std::min(static_cast<std::size_t>((e - x.front()) / h), x.size() - 2);
  const double t = (e - x[k]) / h;
  return (1.0 - t) * y[k] + t * y[k + 1];
}

Curve extensive_curve(const DosCurve& dos, double scale) {
  Curve c;
  c.x.reserve(dos.energy.size());
  c.y.reserve(dos.energy.size());
  for (std::size_t k = 0; k < dos.energy.size(); ++k) {
    c.x.push_back(scale * dos.energy[k]);
    c.y.push_back(dos.density[k] / scale);
  }
  return c;
}

Curve local_quadratic_smooth(std::span<const double> xs, std::span<const double> ys, std::span<const double> grid,
                             double window) {
  if (xs.size() != ys.size()) throw ParameterError("sample abscissae and ordinates differ in length");
  if (!(window > 0.0)) throw ParameterError("smoothing window must be positive");
  Curve out;
  out.x.assign(grid.begin(), grid.end());
  out.y.resize(grid.size());
  const double half = 0.5 * window;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x0 = grid[g];
    Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    std::size_t used = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double u = (xs[i] - x0) / half;
      if (std::abs(u) > 1.0) continue;
      const Eigen::Vector3d phi(1.0, u, u * u);
      a += phi * phi.transpose();
      b += phi * ys[i];
      ++used;
    }
    if (used < 3) {
      out.y[g] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    out.y[g] = a.ldlt().solve(b)(0);
  }
  return out;
}

namespace {

std::array<double, 3> central_differences(const Curve& c, double e, const char* what) {
  const double h = c.step();
  const double f0 = c.at(e), fm = c.at(e - h), fp = c.at(e + h);
  if (!(h > 0.0) || std::isnan(f0) || std::isnan(fm) || std::isnan(fp)) {
    throw NumericalError(std::string(what) + " curve does not cover E +- h for central differences");
  }
  return {f0, (fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h)};
}

}  // namespace

CrookCondition evaluate_crook_condition(const Curve& dos, const Curve& transition, double delta_e2, double energy) {
  CrookCondition c;
  c.energy = energy;
  c.delta_e2 = delta_e2;
  const auto g = central_differences(dos, energy, "density-of-states");
  const auto p = central_differences(transition, energy, "transition-probability");
  c.g = g[0];
  c.dg = g[1];
  c.d2g = g[2];
  c.P = p[0];
  c.dP = p[1];
  c.d2P = p[2];
  c.g_step = dos.step();
  c.p_step = transition.step();
  if (!(c.g > 0.0)) throw NumericalError("density of states is not positive at E = " + std::to_string(energy));
  if (!(c.P > 0.0)) throw NumericalError("transition probability is not positive at E = " + std::to_string(energy));
  c.value = std::abs(c.d2g / c.g + c.d2P / c.P + c.dP * c.dg / (c.P * c.g)) * delta_e2;
  return c;
}

SrednickiCondition evaluate_srednicki_condition(const Curve& profile, double delta_e2, double energy,
                                                double tolerance) {
  const auto o = central_differences(profile, energy, "observable");
  if (std::abs(o[0]) < tolerance) throw NumericalError("observable profile vanishes at E; ratio O''/O is singular");
  SrednickiCondition s;
  s.energy = energy;
  s.delta_e2 = delta_e2;
  s.O = o[0];
  s.d2O = o[2];
  s.step = profile.step();
  s.value = delta_e2 * std::abs(o[2] / o[0]);
  return s;
}

namespace {

// Gauss-Legendre nodes and weights on [-1, 1].
constexpr std::array<double, 5> kGaussX = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                           0.9061798459386640};
constexpr std::array<double, 5> kGaussW = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                           0.4786286704993665, 0.2369268850561891};

// H(q, p) = a p^2 + b p at fixed q.
std::pair<double, double> lmg_quadratic(double q, double alpha, LmgClassicalForm form) {
  if (form == LmgClassicalForm::qq_consistent) {
    const double c = 4.0 * (1.0 - alpha) * std::cos(q) * std::cos(q);
    return {c, alpha - c};
  }
  const double s = std::sin(q);
  const double b = 5.0 * alpha - 4.0 - 4.0 * (1.0 - alpha) * s * s;
  return {alpha - b, b};
}

// Sub-intervals of [0, 1] on which a p^2 + b p < e.
int below_segments(double a, double b, double e, std::array<std::pair<double, double>, 2>& out) {
  std::array<double, 4> cuts{0.0, 1.0, 0.0, 0.0};
  int n = 2;
  auto add = [&](double r) {
    if (r > 0.0 && r < 1.0) cuts[static_cast<std::size_t>(n++)] = r;
  };
  if (std::abs(a) < 1e-14) {
    if (b != 0.0) add(e / b);
  } else {
    const double disc = b * b + 4.0 * a * e;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      const double qv = -0.5 * (b + std::copysign(sq, b));  // stable roots of a p^2 + b p - e
      if (qv != 0.0) {
        add(qv / a);
        add(-e / qv);
      } else {
        add(0.0);
      }
    }
  }
  std::sort(cuts.begin(), cuts.begin() + n);
  int m = 0;
  for (int k = 0; k + 1 < n; ++k) {
    const double lo = cuts[static_cast<std::size_t>(k)], hi = cuts[static_cast<std::size_t>(k + 1)];
    if (!(hi > lo)) continue;
    const double mid = 0.5 * (lo + hi);
    if (a * mid * mid + b * mid < e) {
      if (m > 0 && out[static_cast<std::size_t>(m - 1)].second == lo) {
        out[static_cast<std::size_t>(m - 1)].second = hi;
      } else {
        out[static_cast<std::size_t>(m++)] = {lo, hi};
      }
    }
  }
  return m;
}

double dicke_shift(const DickeParams& d, DickeCoupling coupling, double jz, double cos_phi) {
  const double j = d.j();
  const double ratio = jz / j;
  const double c = 2.0 * d.alpha * std::sqrt(j) * std::sqrt(std::max(0.0, 1.0 - ratio * ratio)) * cos_phi;
  return coupling == DickeCoupling::field ? c * c / (2.0 * d.omega) : -c;
}

}  // namespace

double lmg_phase_integral(double alpha, double energy, LmgClassicalForm form, const PhaseFunction* weight,
                          const ReducedQuadrature& rq) {
  if (rq.points == 0) throw ParameterError("reduced quadrature needs at least one node");
  const double h = kTwoPi / static_cast<double>(rq.points);
  std::array<std::pair<double, double>, 2> seg;
  double total = 0.0;
  std::array<double, 2> x{};
  for (std::size_t i = 0; i < rq.points; ++i) {
    const double q = (static_cast<double>(i) + 0.5) * h;
    const auto [a, b] = lmg_quadratic(q, alpha, form);
    const int m = below_segments(a, b, energy, seg);
    for (int k = 0; k < m; ++k) {
      const auto [lo, hi] = seg[static_cast<std::size_t>(k)];
      if (!weight) {
        total += hi - lo;
        continue;
      }
      const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
      x[0] = q;
      for (std::size_t g = 0; g < kGaussX.size(); ++g) {
        x[1] = mid + half * kGaussX[g];
        total += half * kGaussW[g] * (*weight)(x);
      }
    }
  }
  return total * h / kTwoPi;
}

double dicke_phase_volume(const DickeParams& params, double energy, DickeCoupling coupling,
                          const ReducedQuadrature& rq) {
  params.validate();
  if (rq.points == 0) throw ParameterError("reduced quadrature needs at least one node");
  const double j = params.j();
  const std::size_t m = rq.points;
  const double hz = 2.0 * j / static_cast<double>(m);
  const double hp = kTwoPi / static_cast<double>(m);
  std::vector<double> cosines(m);
  for (std::size_t k = 0; k < m; ++k) cosines[k] = std::cos((static_cast<double>(k) + 0.5) * hp);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double jz = -j + (static_cast<double>(i) + 0.5) * hz;
    const double base = energy - params.omega0 * jz;
    for (std::size_t k = 0; k < m; ++k) total += std::max(0.0, base + dicke_shift(params, coupling, jz, cosines[k]));
  }
  // (q, p) disk area 2 pi / w * (E - w0 jz + shift)
  return total * hz * hp * (kTwoPi / params.omega) / (kTwoPi * kTwoPi);
}

namespace {

template <class Volume>
DosCurve reduced_dos(const std::string& tag, double alpha, const EnergyGrid& grid, Volume volume) {
  grid.validate();
  DosCurve dos;
  dos.model = tag;
  dos.alpha = alpha;
  dos.bin_width = grid.width();
  std::vector<double> edges(grid.bins + 1);
  for (std::size_t k = 0; k <= grid.bins; ++k) edges[k] = volume(grid.lo + static_cast<double>(k) * grid.width());
  for (std::size_t k = 0; k < grid.bins; ++k) {
    dos.energy.push_back(grid.center(k));
    dos.density.push_back(std::max(0.0, edges[k + 1] - edges[k]) / grid.width());
    dos.stderr_.push_back(0.0);
  }
  dos.captured_fraction = edges.back() - edges.front();
  if (std::none_of(dos.density.begin(), dos.density.end(), [](double g) { return g > 0.0; })) {
    throw NumericalError("energy shell is empty on the whole grid");
  }
  return dos;
}

}  // namespace

DosCurve lmg_density_reduced(double alpha, const EnergyGrid& grid, LmgClassicalForm form, const ReducedQuadrature& rq) {
  return reduced_dos("lmg", alpha, grid, [&](double e) { return lmg_phase_integral(alpha, e, form, nullptr, rq); });
}

DosCurve dicke_density_reduced(const DickeParams& params, const EnergyGrid& grid, DickeCoupling coupling,
                               const ReducedQuadrature& rq) {
  return reduced_dos("dicke", params.alpha, grid,
                     [&](double e) { return dicke_phase_volume(params, e, coupling, rq); });
}

double lmg_shell_average_reduced(double alpha, const PhaseFunction& observable, double energy, double shell_width,
                                 LmgClassicalForm form, const ReducedQuadrature& rq) {
  if (!(shell_width > 0.0)) throw ParameterError("shell width must be positive");
  const double lo = energy - 0.5 * shell_width, hi = energy + 0.5 * shell_width;
  const double g = lmg_phase_integral(alpha, hi, form, nullptr, rq) - lmg_phase_integral(alpha, lo, form, nullptr, rq);
  if (!(g > 0.0)) throw NumericalError("density of states vanishes at E = " + std::to_string(energy));
  return (lmg_phase_integral(alpha, hi, form, &observable, rq) - lmg_phase_integral(alpha, lo, form, &observable, rq)) /
         g;
}

void write_dos_csv(std::ostream& out, const DosCurve& dos) {
  out << "E,g,stderr\n" << std::setprecision(17);
  for (std::size_t k = 0; k < dos.energy.size(); ++k) {
    out << dos.energy[k] << ',' << dos.density[k] << ',' << dos.stderr_[k] << '\n';
  }
}

}  // namespace qfluct
