#include "qfluct/equilibration.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "qfluct/errors.hpp"

namespace qfluct {

namespace {

double system_size(const ModelSpec& m) {
  if (const auto* l = std::get_if<LmgParams>(&m)) return l->atoms;
  return std::get<DickeParams>(m).two_j;
}

double resolve_tolerance(double tol, const ModelSpec& m) { return tol < 0.0 ? 1e-6 * system_size(m) : tol; }

double mean_energy(const Eigen::VectorXcd& c, const Eigen::VectorXd& energies) {
  return (c.cwiseAbs2().array() * energies.array()).sum();
}

Eigen::VectorXcd unit_coefficients(Eigen::Index dim, Eigen::Index k) {
  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(dim);
  c(k) = 1.0;
  return c;
}

std::vector<Eigen::Index> support(const Eigen::VectorXcd& c, double cutoff) {
  std::vector<Eigen::Index> s;
  for (Eigen::Index n = 0; n < c.size(); ++n) {
    if (std::norm(c(n)) > cutoff) s.push_back(n);
  }
  return s;
}

// Level index -> block id, for degenerate grouping.
std::vector<Eigen::Index> block_ids(const Eigen::VectorXd& energies, double tol) {
  std::vector<Eigen::Index> id(static_cast<std::size_t>(energies.size()));
  Eigen::Index b = 0;
  for (const auto& [start, len] : degenerate_blocks(energies, tol)) {
    for (Eigen::Index i = start; i < start + len; ++i) id[static_cast<std::size_t>(i)] = b;
    ++b;
  }
  return id;
}

struct Bisection {
  double alpha = 0.0;
  double energy = 0.0;
  bool converged = false;
};

// Bisection for f(alpha) = target on a bracket [a, b] with f(a) - target and
// f(b) - target of opposite sign.
template <class F>
Bisection bisect(F&& f, double a, double fa, double b, double target, double tol, int max_iter) {
  Bisection best{a, fa, std::abs(fa - target) <= tol};
  double lo = a, flo = fa - target;
  double hi = b;
  for (int it = 0; it < max_iter && !best.converged; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (std::abs(fm - target) < std::abs(best.energy - target)) best = {mid, fm, false};
    if (std::abs(fm - target) <= tol) {
      best.converged = true;
      break;
    }
    if ((fm - target > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm - target;
    } else {
      hi = mid;
    }
    if (hi - lo == 0.0 || std::abs(hi - lo) < 1e-15) break;
  }
  return best;
}

}  // namespace

Quench::Quench(SpectrumPtr from, SpectrumPtr to) : from_(std::move(from)), to_(std::move(to)) {
  if (!from_ || !to_ || !same_basis(from_->model, to_->model)) {
    throw ParameterError("quench endpoints must share the same Hilbert space");
  }
  overlap_ = to_->vectors.transpose() * from_->vectors;
}

Eigen::VectorXcd expand_in(const SpectralDecomposition& spec, const Eigen::VectorXd& vector) {
  if (vector.size() != spec.dimension()) throw ParameterError("vector dimension does not match the eigenbasis");
  return (spec.vectors.transpose() * vector).cast<std::complex<double>>();
}

double quenched_ground_energy(const SpectralDecomposition& target, double alpha_ini) {
  const auto [e0, g] = ground_state(with_alpha(target.model, alpha_ini));
  const HamiltonianMatrix h = build_hamiltonian(target.model);
  return g.dot(h.entries * g);
}

QuantumState prepare_procedure_i(SpectrumPtr target, double target_energy, const ProcedureIOptions& opts) {
  const double tol = resolve_tolerance(opts.tolerance, target->model);
  const double alpha_t = model_alpha(target->model);
  const Eigen::Index dim = target->dimension();

  QuantumState state;
  state.basis = target;
  state.provenance.procedure = "i";

  if (std::abs(target->energies(0) - target_energy) <= tol) {
    state.coeffs = unit_coefficients(dim, 0);
    state.provenance.alpha_history = {alpha_t, alpha_t};
    return state;
  }

  if (opts.scan_points < 2 || !(opts.alpha_max > opts.alpha_min)) throw ParameterError("invalid alpha_ini search interval");
  auto f = [&](double a) { return quenched_ground_energy(*target, a); };
  std::vector<double> grid(static_cast<std::size_t>(opts.scan_points));
  std::vector<double> values(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    grid[k] = opts.alpha_min + (opts.alpha_max - opts.alpha_min) * static_cast<double>(k) / (grid.size() - 1.0);
    values[k] = f(grid[k]);
  }
  // Bracket closest to alpha_target; ties go to the upper side.
  std::optional<std::size_t> pick;
  double pick_distance = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    if ((values[k] - target_energy) * (values[k + 1] - target_energy) > 0.0) continue;
    const double d = std::abs(0.5 * (grid[k] + grid[k + 1]) - alpha_t);
    if (!pick || d < pick_distance || (d == pick_distance && grid[k] > grid[*pick])) {
      pick = k;
      pick_distance = d;
    }
  }
  if (!pick) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    throw NumericalError("target energy " + std::to_string(target_energy) + " unreachable from ground states; window [" +
                         std::to_string(*mn) + ", " + std::to_string(*mx) + "]");
  }
  const Bisection b = bisect(f, grid[*pick], values[*pick], grid[*pick + 1], target_energy, tol, opts.max_iterations);

  const auto [e0, g] = ground_state(with_alpha(target->model, b.alpha));
  state.coeffs = expand_in(*target, g);
  state.provenance.alpha_history = {b.alpha, alpha_t};
  state.provenance.energy_trajectory = {mean_energy(state.coeffs, target->energies)};
  if (!b.converged) state.provenance.note = "best-achievable: tolerance not reached";
  return state;
}

namespace {

class Agitator {
 public:
  Agitator(SpectrumPtr intermediate, SpectrumPtr target, const ProcedureIIOptions& opts)
      : quench_(target, intermediate), intermediate_(std::move(intermediate)), target_(std::move(target)), opts_(opts) {}

  struct Run {
    Eigen::VectorXcd coeffs;  // in the target eigenbasis after the last landing
    std::vector<double> trajectory;
  };

  // Landings on the target basis; stops after `landings` or, if landings == 0,
  // at the first landing with energy >= target - tol (or max_cycles + 1 landings).
  Run run(double alpha_ini, int landings, double target_energy, double tol) const {
    const auto [e0, g] = ground_state(with_alpha(target_->model, alpha_ini));
    Eigen::VectorXcd c_int = expand_in(*intermediate_, g);
    Run r;
    const int cap = opts_.max_cycles + 1;
    for (int k = 0;; ++k) {
      relax(c_int, *intermediate_, k, 0);
      r.coeffs = quench_.backward(c_int);
      const double e = mean_energy(r.coeffs, target_->energies);
      r.trajectory.push_back(e);
      if (landings > 0 ? k + 1 == landings : (e >= target_energy - tol || k + 1 >= cap)) return r;
      relax(r.coeffs, *target_, k, 1);
      c_int = quench_.forward(r.coeffs);
    }
  }

 private:
  void relax(Eigen::VectorXcd& c, const SpectralDecomposition& basis, int cycle, int leg) const {
    if (opts_.relax.mode == Relaxation::unitary) {
      for (Eigen::Index n = 0; n < c.size(); ++n) c(n) *= std::polar(1.0, -basis.energies(n) * opts_.relax.time);
      return;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(opts_.seed & 0xffffffffu), static_cast<std::uint32_t>(opts_.seed >> 32),
                      static_cast<std::uint32_t>(cycle), static_cast<std::uint32_t>(leg)};
    std::mt19937_64 engine(seq);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (Eigen::Index n = 0; n < c.size(); ++n) c(n) *= std::polar(1.0, phase(engine));
  }

  Quench quench_;  // target -> intermediate
  SpectrumPtr intermediate_;
  SpectrumPtr target_;
  ProcedureIIOptions opts_;
};

// alpha_ini whose quenched ground state sits at `start_energy` in the target basis.
double start_alpha(const SpectrumPtr& target, double start_energy, const ProcedureIOptions& opts) {
  ProcedureIOptions o = opts;
  o.tolerance = resolve_tolerance(o.tolerance, target->model) * 1e-3;
  const QuantumState s = prepare_procedure_i(target, start_energy, o);
  return s.provenance.alpha_history.front();
}

}  // namespace

QuantumState prepare_procedure_ii(SpectrumPtr intermediate, SpectrumPtr target, double target_energy,
                                  const ProcedureIIOptions& opts) {
  if (!same_basis(intermediate->model, target->model)) throw ParameterError("alpha_int spectrum uses a different basis");
  if (opts.max_cycles < 0) throw ParameterError("max_cycles must be non-negative");
  const double tol = resolve_tolerance(opts.tolerance, target->model);
  const Agitator agitator(intermediate, target, opts);

  const double start_energy = target_energy - opts.start_offset;
  const double alpha0 = start_alpha(target, start_energy, opts.start);
  const Agitator::Run first = agitator.run(alpha0, 0, target_energy, tol);
  int landings = static_cast<int>(first.trajectory.size());
  const double e_first = first.trajectory.back();
  if (e_first < target_energy - tol) {
    std::string traj;
    for (std::size_t k = 0; k < first.trajectory.size(); k += std::max<std::size_t>(1, first.trajectory.size() / 8)) {
      traj += " " + std::to_string(first.trajectory[k]);
    }
    throw NumericalError("agitation did not reach the target energy within max_cycles; trajectory:" + traj + " ... " +
                         std::to_string(e_first));
  }

  auto finish = [&](double alpha_ini, Agitator::Run run, bool converged) {
    QuantumState s;
    s.basis = target;
    s.coeffs = std::move(run.coeffs);
    s.provenance.procedure = "ii";
    s.provenance.alpha_history = {alpha_ini, model_alpha(intermediate->model), model_alpha(target->model)};
    s.provenance.cycles = landings - 1;
    s.provenance.relaxation = opts.relax.mode == Relaxation::dephase ? "dephase" : "unitary";
    if (opts.relax.mode == Relaxation::dephase) s.provenance.seed = opts.seed;
    s.provenance.energy_trajectory = std::move(run.trajectory);
    if (!converged) s.provenance.note = "best-achievable: tolerance not reached";
    return s;
  };

  if (std::abs(e_first - target_energy) <= tol) return finish(alpha0, first, true);

  // With the phase sequence fixed, the energy after a given number of
  // landings is a continuous function of alpha_ini. Scan alpha_ini from the
  // first start toward alpha_target (lower starting energies) for a sign
  // change, trying landing counts near the first crossing, then bisect.
  const double alpha_t = model_alpha(target->model);
  constexpr int scan = 24;
  constexpr int extra_landings = 8;
  const int base = landings;
  for (int step = 0; step <= 2 * extra_landings; ++step) {
    const int k = base + (step % 2 ? (step + 1) / 2 : -step / 2);
    if (k < 1 || k > opts.max_cycles + 1) continue;
    landings = k;
    auto energy_after = [&](double a) { return agitator.run(a, landings, target_energy, tol).trajectory.back(); };
    double prev_a = alpha0;
    double prev_e = energy_after(alpha0);
    if (std::abs(prev_e - target_energy) <= tol) return finish(alpha0, agitator.run(alpha0, landings, target_energy, tol), true);
    for (int i = 1; i <= scan; ++i) {
      const double a = alpha0 + (alpha_t - alpha0) * static_cast<double>(i) / (scan + 1.0);
      const double e = energy_after(a);
      if ((e - target_energy) * (prev_e - target_energy) <= 0.0) {
        const Bisection b = bisect(energy_after, prev_a, prev_e, a, target_energy, tol, opts.max_iterations);
        return finish(b.alpha, agitator.run(b.alpha, landings, target_energy, tol), b.converged);
      }
      prev_a = a;
      prev_e = e;
    }
  }
  landings = base;
  return finish(alpha0, first, false);
}

FockSelection select_fock_state(SpectrumPtr spec, double target_energy, std::span<const std::string> observables,
                                int window_k, double slack) {
  const auto* p = std::get_if<DickeParams>(&spec->model);
  if (p == nullptr) throw ParameterError("Fock-state selection requires the Dicke model");
  std::vector<Eigen::VectorXd> diagonals;
  for (const auto& name : observables) diagonals.push_back(eigenbasis_diagonal(*spec, observable_matrix(name, spec->model)));

  FockSelection sel;
  for (std::size_t i = 0; i < spec->basis.size(); ++i) {
    const BasisLabel& b = spec->basis[i];
    const double e = p->omega0 * 0.5 * b.two_m + p->omega * b.n;
    if (std::abs(e - target_energy) > slack) continue;
    FockCandidate cand{b, static_cast<Eigen::Index>(i), e, 0.0};
    const Eigen::VectorXd pops = spec->vectors.row(static_cast<Eigen::Index>(i)).transpose().cwiseAbs2();
    double err = 0.0;
    for (const auto& d : diagonals) {
      const double bar = pops.dot(d);
      const double mic = microcanonical_window_average(*spec, d, e, window_k);
      err += std::abs(mic) > 1e-12 ? std::abs(bar - mic) / std::abs(mic) : std::abs(bar - mic);
    }
    cand.mean_relative_error = diagonals.empty() ? 0.0 : err / static_cast<double>(diagonals.size());
    sel.candidates.push_back(cand);
  }
  if (sel.candidates.empty()) {
    throw NumericalError("no Fock state within " + std::to_string(slack) + " of E = " + std::to_string(target_energy));
  }
  sel.best = *std::min_element(sel.candidates.begin(), sel.candidates.end(), [](const auto& a, const auto& b) {
    return a.mean_relative_error < b.mean_relative_error;
  });
  sel.state.basis = spec;
  sel.state.coeffs = spec->vectors.row(sel.best.basis_index).transpose().cast<std::complex<double>>();
  sel.state.provenance.procedure = "fock";
  sel.state.provenance.alpha_history = {p->alpha};
  sel.state.provenance.note = "n=" + std::to_string(sel.best.label.n) + " 2m=" + std::to_string(sel.best.label.two_m);
  return sel;
}

DiagonalEnsemble diagonal_ensemble(const QuantumState& state) { return {state.basis, state.coeffs.cwiseAbs2()}; }

DiagonalEnsemble microcanonical_window_ensemble(SpectrumPtr spec, double energy, int window_k) {
  const auto [first, count] = level_window(spec->energies, energy, window_k);
  DiagonalEnsemble e{spec, Eigen::VectorXd::Zero(spec->dimension())};
  e.populations.segment(first, count).setConstant(1.0 / static_cast<double>(count));
  return e;
}

std::vector<double> uniform_times(double horizon, std::size_t samples) {
  std::vector<double> t(samples);
  for (std::size_t k = 0; k < samples; ++k) t[k] = horizon * static_cast<double>(k) / static_cast<double>(samples);
  return t;
}

ObservableTimeSeries evolve_expectation(const QuantumState& state, const ObservableMatrix& obs,
                                        std::span<const double> times, double cutoff) {
  if (!same_basis(state.basis->model, obs.model)) throw ParameterError("observable and state use different bases");
  const auto s = support(state.coeffs, cutoff);
  const Eigen::MatrixXd o = eigenbasis_block(*state.basis, obs, s);
  const auto m = static_cast<Eigen::Index>(s.size());
  Eigen::VectorXcd c0(m);
  Eigen::VectorXd e(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    c0(k) = state.coeffs(s[static_cast<std::size_t>(k)]);
    e(k) = state.basis->energies(s[static_cast<std::size_t>(k)]);
  }
  ObservableTimeSeries out;
  out.observable = obs.name;
  out.times.assign(times.begin(), times.end());
  out.values.reserve(times.size());
  out.horizon = times.empty() ? 0.0 : times.back();
  Eigen::VectorXcd ct(m);
  for (double t : times) {
    for (Eigen::Index k = 0; k < m; ++k) ct(k) = c0(k) * std::polar(1.0, -e(k) * t);
    out.values.push_back((ct.adjoint() * (o * ct))(0).real());
  }
  return out;
}

double long_time_average(const QuantumState& state, const ObservableMatrix& obs, double degeneracy_tolerance) {
  const SpectralDecomposition& spec = *state.basis;
  double total = 0.0;
  const Eigen::VectorXd diag = eigenbasis_diagonal(spec, obs);
  for (const auto& [start, len] : degenerate_blocks(spec.energies, degeneracy_tolerance)) {
    if (len == 1) {
      total += std::norm(state.coeffs(start)) * diag(start);
      continue;
    }
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(len));
    for (Eigen::Index k = 0; k < len; ++k) idx[static_cast<std::size_t>(k)] = start + k;
    const Eigen::MatrixXd block = eigenbasis_block(spec, obs, idx);
    const Eigen::VectorXcd c = state.coeffs.segment(start, len);
    total += (c.adjoint() * (block * c))(0).real();
  }
  return total;
}

FluctuationResult fluctuation_variance(const QuantumState& state, const ObservableMatrix& obs, VarianceMode mode,
                                       double horizon, std::size_t samples, double degeneracy_tolerance, double cutoff) {
  FluctuationResult r;
  r.mode = mode;
  r.horizon = horizon;
  r.samples = samples;
  const auto s = support(state.coeffs, cutoff);
  if (s.size() > 1) {
    const double band = state.basis->energies(s.back()) - state.basis->energies(s.front());
    const double spacing = band / static_cast<double>(s.size() - 1);
    r.short_horizon = spacing > 0.0 && horizon < 2.0 * std::numbers::pi / spacing;
  }
  if (mode == VarianceMode::sampled) {
    const double bar = long_time_average(state, obs, degeneracy_tolerance);
    const auto times = uniform_times(horizon, samples);
    const ObservableTimeSeries ts = evolve_expectation(state, obs, times, cutoff);
    double acc = 0.0;
    for (double v : ts.values) acc += (v - bar) * (v - bar);
    r.variance = ts.values.empty() ? 0.0 : acc / static_cast<double>(ts.values.size());
    return r;
  }
  const Eigen::MatrixXd o = eigenbasis_block(*state.basis, obs, s);
  const auto ids = block_ids(state.basis->energies, degeneracy_tolerance);
  double acc = 0.0;
  for (std::size_t a = 0; a < s.size(); ++a) {
    const double pa = std::norm(state.coeffs(s[a]));
    for (std::size_t b = 0; b < s.size(); ++b) {
      if (ids[static_cast<std::size_t>(s[a])] == ids[static_cast<std::size_t>(s[b])]) continue;
      const double x = o(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      acc += pa * std::norm(state.coeffs(s[b])) * x * x;
    }
  }
  r.variance = acc;
  return r;
}

double effective_dimension(const DiagonalEnsemble& ensemble) { return 1.0 / ensemble.populations.squaredNorm(); }

EnergyMoments energy_moments(const DiagonalEnsemble& ensemble, const SpectralDecomposition& spectrum) {
  if (ensemble.populations.size() != spectrum.dimension()) throw ParameterError("ensemble and spectrum differ in dimension");
  EnergyMoments m;
  m.mean = ensemble.populations.dot(spectrum.energies);
  m.delta_e2 = (ensemble.populations.array() * (spectrum.energies.array() - m.mean).square()).sum();
  return m;
}

std::pair<Eigen::Index, Eigen::Index> level_window(const Eigen::VectorXd& energies, double energy, int window_k) {
  if (window_k < 0) throw ParameterError("window half-width must be non-negative");
  const Eigen::Index n = energies.size();
  const auto* begin = energies.data();
  const auto* it = std::lower_bound(begin, begin + n, energy);
  Eigen::Index center = it - begin;
  if (center == n || (center > 0 && energy - energies(center - 1) <= energies(center) - energy)) --center;
  if (center - window_k < 0 || center + window_k >= n) {
    throw NumericalError("a window of " + std::to_string(2 * window_k + 1) + " levels around E = " +
                         std::to_string(energy) + " is clipped by the spectral edge");
  }
  return {center - window_k, 2 * static_cast<Eigen::Index>(window_k) + 1};
}

double microcanonical_window_average(const SpectralDecomposition& spectrum, const Eigen::VectorXd& observable_diagonal,
                                     double energy, int window_k) {
  const auto [first, count] = level_window(spectrum.energies, energy, window_k);
  return observable_diagonal.segment(first, count).mean();
}

double microcanonical_window_average(const SpectralDecomposition& spectrum, const ObservableMatrix& obs, double energy,
                                     int window_k) {
  return microcanonical_window_average(spectrum, eigenbasis_diagonal(spectrum, obs), energy, window_k);
}

}  // namespace qfluct
