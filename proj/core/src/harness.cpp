#include "qfluct/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "qfluct/errors.hpp"

namespace qfluct {

PowerLawFit fit_power_law(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ParameterError("power-law fit: xs and ys differ in length");
  if (xs.size() < 3) throw ParameterError("power-law fit needs at least three points");
  const auto n = static_cast<double>(xs.size());
  std::vector<double> lx(xs.size()), ly(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw DomainError("power-law fit needs positive data");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("power-law fit needs at least two distinct abscissae");
  PowerLawFit f;
  f.points = xs.size();
  f.slope = sxy / sxx;
  f.exponent = f.slope == 0.0 ? 0.0 : -f.slope;
  const double intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - intercept - f.slope * lx[i];
    rss += r * r;
  }
  f.stderr_ = std::sqrt(rss / (n - 2.0) / sxx);
  f.r2 = syy > 0.0 ? 1.0 - rss / syy : 1.0;
  return f;
}

namespace {

const std::set<std::string> kProcedures{"i", "ii", "fock", "window"};

bool is_config_error(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const ParameterError&) {
    return true;
  } catch (...) {
    return false;
  }
}

std::string describe(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& x) {
    return x.what();
  } catch (...) {
    return "unknown error";
  }
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

std::vector<std::string> observables_for(const ExperimentConfig& cfg, const ModelSpec& model) {
  return cfg.diagnostics.observables.empty() ? observable_names(model) : cfg.diagnostics.observables;
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto names = recipe_names();
  if (!recipe.empty() && std::find(names.begin(), names.end(), recipe) == names.end()) {
    throw ParameterError("unknown recipe '" + recipe + "'");
  }
  if (model.name != "lmg" && model.name != "dicke") throw ParameterError("model must be 'lmg' or 'dicke'");
  parity_from_string(model.parity);
  for (int s : model.sizes) {
    if (s < 1) throw ParameterError("sizes must be positive");
  }
  if (!(model.n_max_per_j > 0.0)) throw ParameterError("n_max_per_j must be positive");
  if (!(model.tail_tolerance > 0.0)) throw ParameterError("tail_tolerance must be positive");
  for (const auto& p : prep.procedures) {
    if (!kProcedures.count(p)) throw ParameterError("unknown procedure '" + p + "'");
    if (p == "fock" && model.name != "dicke") throw ParameterError("Fock states need the Dicke model");
    if (p == "ii" && prep.seeds.empty()) throw ParameterError("procedure (ii) needs at least one explicit seed");
  }
  if (prep.relaxation != "dephase" && prep.relaxation != "unitary") {
    throw ParameterError("relaxation must be 'dephase' or 'unitary'");
  }
  if (prep.relaxation == "unitary" && !(prep.relax_time > 0.0)) {
    throw ParameterError("unitary relaxation needs relax_time > 0");
  }
  if (!(prep.energy_tolerance > 0.0)) throw ParameterError("energy_tolerance must be positive");
  if (prep.start_offset < 0.0) throw ParameterError("start_offset must be non-negative");
  if (prep.max_cycles < 1) throw ParameterError("max_cycles must be at least 1");
  if (prep.window_k < 0) throw ParameterError("window_k must be non-negative");
  if (diagnostics.variance_mode != "exact" && diagnostics.variance_mode != "sampled") {
    throw ParameterError("variance_mode must be 'exact' or 'sampled'");
  }
  if (!(diagnostics.horizon > 0.0) || diagnostics.time_samples < 2) {
    throw ParameterError("time series need horizon > 0 and at least two samples");
  }
  if (!(diagnostics.shell_width > 0.0)) throw ParameterError("shell_width must be positive");
  for (const auto& t : crook.trajectories) {
    if (t.size() < 2) throw ParameterError("each trajectory needs at least two alpha values");
  }
  if (!(crook.backward_step > 0.0) || crook.backward_hi < crook.backward_lo) {
    throw ParameterError("backward ladder needs step > 0 and hi >= lo");
  }
  if (crook.fock_lattice && model.name == "dicke" && model.omega != model.omega0) {
    throw ParameterError("the Fock lattice is uniform only for omega == omega0");
  }
  if (crook.dos_bins < 10) throw ParameterError("dos_bins must be at least 10");
  if (!(condition.bin_width > 0.0) || !(condition.smoothing > 0.0) || !(condition.half_range > 0.0)) {
    throw ParameterError("condition widths must be positive");
  }
  if (condition.size < 1) throw ParameterError("condition size must be positive");
  if (!(rstat.hi > rstat.lo)) throw ParameterError("rstat range needs lo < hi");
  if (workers < 1) throw ParameterError("workers must be at least 1");
}

ModelSpec model_spec(const ExperimentConfig& cfg, int size, double alpha) {
  const Parity parity = parity_from_string(cfg.model.parity);
  if (cfg.model.name == "lmg") return LmgParams{size, alpha, parity};
  DickeParams p;
  p.two_j = size;
  p.n_max = static_cast<int>(std::lround(cfg.model.n_max_per_j * 0.5 * size));
  p.omega = cfg.model.omega;
  p.omega0 = cfg.model.omega0;
  p.alpha = alpha;
  p.sector = parity;
  p.tail_tolerance = cfg.model.tail_tolerance;
  return p;
}

double energy_unit(const ModelSpec& model) {
  if (const auto* l = std::get_if<LmgParams>(&model)) return l->atoms;
  return std::get<DickeParams>(model).j();
}

double fock_lattice_energy(const DickeParams& params, double energy) {
  double best = std::numeric_limits<double>::quiet_NaN();
  for (int two_m = -params.two_j; two_m <= params.two_j; two_m += 2) {
    for (int n = 0; n <= params.n_max; ++n) {
      const int parity = (n + (two_m + params.two_j) / 2) % 2;
      if ((params.sector == Parity::even && parity != 0) || (params.sector == Parity::odd && parity != 1)) continue;
      const double e = params.omega0 * 0.5 * two_m + params.omega * n;
      const double d = std::abs(e - energy), db = std::abs(best - energy);
      if (std::isnan(best) || d < db || (d == db && e < best)) best = e;
    }
  }
  if (std::isnan(best)) throw ParameterError("the parity sector holds no Fock state");
  return best;
}

QuantumState prepare_state(const ExperimentConfig& cfg, const std::string& procedure, SpectrumCache& spectra,
                           double alpha, double energy, double alpha_int, std::uint64_t seed) {
  const SpectrumPtr target = spectra.get(alpha);
  const double unit = energy_unit(target->model);
  const double e = energy * unit;
  const double tol = cfg.prep.energy_tolerance * unit;
  ProcedureIOptions start;
  start.tolerance = tol;
  if (cfg.model.name == "dicke") start.alpha_max = 3.0;
  if (procedure == "i") return prepare_procedure_i(target, e, start);
  if (procedure == "ii") {
    ProcedureIIOptions o;
    o.start_offset = cfg.prep.start_offset * unit;
    o.max_cycles = cfg.prep.max_cycles;
    o.tolerance = tol;
    o.relax = {cfg.prep.relaxation == "unitary" ? Relaxation::unitary : Relaxation::dephase, cfg.prep.relax_time};
    o.seed = seed;
    o.start = start;
    return prepare_procedure_ii(spectra.get(alpha_int), target, e, o);
  }
  if (procedure == "fock") {
    const auto names = observables_for(cfg, target->model);
    return select_fock_state(target, e, names, cfg.prep.window_k, cfg.prep.fock_slack).state;
  }
  if (procedure == "window") throw ParameterError("window ensembles are mixed states without a state vector");
  throw ParameterError("unknown procedure '" + procedure + "'");
}

DiagonalEnsemble prepare_ensemble(const ExperimentConfig& cfg, const std::string& procedure, SpectrumCache& spectra,
                                  double alpha, double energy, double alpha_int, std::uint64_t seed) {
  if (procedure == "window") {
    const SpectrumPtr target = spectra.get(alpha);
    return microcanonical_window_ensemble(target, energy * energy_unit(target->model), cfg.prep.window_k);
  }
  return diagonal_ensemble(prepare_state(cfg, procedure, spectra, alpha, energy, alpha_int, seed));
}

std::vector<std::exception_ptr> parallel_for(std::size_t n, unsigned workers,
                                             const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto drain = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto count = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), std::max<std::size_t>(n, 1)));
  if (count == 1) {
    drain();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < count; ++k) pool.emplace_back(drain);
  }
  return errors;
}

// Thermalisation -------------------------------------------------------------

namespace {

struct StateJob {
  SweepPoint point;
  std::string procedure;
  std::uint64_t seed = 0;
};

std::vector<StateJob> state_jobs(const ExperimentConfig& cfg, std::span<const SweepPoint> points) {
  std::vector<StateJob> jobs;
  for (const auto& pt : points) {
    for (const auto& proc : cfg.prep.procedures) {
      if (proc == "ii") {
        for (auto s : cfg.prep.seeds) jobs.push_back({pt, proc, s});
      } else {
        jobs.push_back({pt, proc, 0});
      }
    }
  }
  return jobs;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

ThermalStudy thermalisation_study(const ExperimentConfig& cfg) {
  cfg.validate();
  for (const auto& p : cfg.prep.procedures) {
    if (p == "window") throw ParameterError("thermalisation diagnostics need pure states; drop 'window'");
  }
  ThermalStudy study;
  const auto& points = cfg.diagnostics.points;
  if (points.empty() || cfg.model.sizes.empty()) return study;

  for (int size : cfg.model.sizes) {
    SpectrumCache spectra(model_spec(cfg, size, points.front().alpha));
    const ModelSpec base = spectra.model();
    const auto names = observables_for(cfg, base);
    std::vector<ObservableMatrix> obs;
    for (const auto& n : names) obs.push_back(observable_matrix(n, base));

    // microcanonical reference per point and observable
    std::vector<std::vector<double>> reference(points.size());
    const auto ref_errors = parallel_for(points.size(), cfg.workers, [&](std::size_t k) {
      const auto& pt = points[k];
      for (std::size_t o = 0; o < names.size(); ++o) {
        double r = 0.0;
        if (cfg.model.name == "lmg") {
          r = lmg_shell_average_reduced(pt.alpha, lmg_classical_observable(names[o]), pt.energy,
                                        cfg.diagnostics.shell_width);
        } else {
          const SpectrumPtr s = spectra.get(pt.alpha);
          r = microcanonical_window_average(*s, obs[o], pt.energy * energy_unit(s->model), cfg.prep.window_k);
        }
        reference[k].push_back(r);
      }
    });
    for (const auto& e : ref_errors) {
      if (e && is_config_error(e)) std::rethrow_exception(e);
    }

    const auto jobs = state_jobs(cfg, points);
    std::vector<ThermalCell> cells(jobs.size());
    const VarianceMode mode = cfg.diagnostics.variance_mode == "exact" ? VarianceMode::exact : VarianceMode::sampled;
    const auto errors = parallel_for(jobs.size(), cfg.workers, [&](std::size_t k) {
      const auto& job = jobs[k];
      ThermalCell& c = cells[k];
      c.size = size;
      c.point = job.point;
      c.procedure = job.procedure;
      c.seed = job.seed;
      const QuantumState st =
          prepare_state(cfg, job.procedure, spectra, job.point.alpha, job.point.energy, job.point.alpha_int, job.seed);
      const double unit = energy_unit(st.basis->model);
      const DiagonalEnsemble d = diagonal_ensemble(st);
      const EnergyMoments m = energy_moments(d, *st.basis);
      c.mean_energy = m.mean / unit;
      c.energy_width = std::sqrt(m.delta_e2) / unit;
      c.d_eff = effective_dimension(d);
      const auto idx = static_cast<std::size_t>(
          std::find_if(points.begin(), points.end(),
                       [&](const SweepPoint& p) { return near(p.alpha, job.point.alpha) && near(p.energy, job.point.energy); }) -
          points.begin());
      // a point without a classical reference fails its own cells only
      if (ref_errors[idx]) std::rethrow_exception(ref_errors[idx]);
      for (std::size_t o = 0; o < obs.size(); ++o) {
        const ObservableMatrix om{obs[o].name, st.basis->model, obs[o].entries};
        const auto f = fluctuation_variance(st, om, mode, cfg.diagnostics.horizon, cfg.diagnostics.time_samples);
        c.sigma2 += f.variance / static_cast<double>(obs.size());
        c.short_horizon = c.short_horizon || f.short_horizon;
        c.delta += std::abs(long_time_average(st, om) - reference[idx][o]) / static_cast<double>(obs.size());
      }
      c.cycles = st.provenance.cycles;
      c.note = st.provenance.note;
    });
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      if (!errors[k]) continue;
      if (is_config_error(errors[k])) std::rethrow_exception(errors[k]);
      cells[k] = ThermalCell{};
      cells[k].size = size;
      cells[k].point = jobs[k].point;
      cells[k].procedure = jobs[k].procedure;
      cells[k].seed = jobs[k].seed;
      cells[k].error = describe(errors[k]);
      study.partial = true;
    }
    study.cells.insert(study.cells.end(), cells.begin(), cells.end());
  }

  for (const auto& proc : cfg.prep.procedures) {
    ThermalScaling sc;
    sc.procedure = proc;
    for (int size : cfg.model.sizes) {
      std::vector<double> s2, dl, ew, de, ew_all, de_all;
      for (const auto& c : study.cells) {
        if (c.size != size || c.procedure != proc || !c.error.empty()) continue;
        s2.push_back(c.sigma2);
        dl.push_back(c.delta);
        ew_all.push_back(c.energy_width);
        de_all.push_back(c.d_eff);
        if (near(c.point.alpha, cfg.diagnostics.focus_alpha) && near(c.point.energy, cfg.diagnostics.focus_energy)) {
          ew.push_back(c.energy_width);
          de.push_back(c.d_eff);
        }
      }
      if (s2.empty()) continue;
      sc.sizes.push_back(size);
      sc.sigma2.push_back(mean_of(s2));
      sc.delta.push_back(mean_of(dl));
      sc.energy_width.push_back(mean_of(ew.empty() ? ew_all : ew));
      sc.d_eff.push_back(mean_of(de.empty() ? de_all : de));
    }
    if (sc.sizes.size() >= 3) {
      std::vector<double> sigma(sc.sigma2.size());
      std::transform(sc.sigma2.begin(), sc.sigma2.end(), sigma.begin(), [](double v) { return std::sqrt(v); });
      sc.sigma2_fit = fit_power_law(sc.sizes, sc.sigma2);
      sc.sigma_fit = fit_power_law(sc.sizes, sigma);
      sc.delta_fit = fit_power_law(sc.sizes, sc.delta);
      sc.energy_width_fit = fit_power_law(sc.sizes, sc.energy_width);
      sc.d_eff_fit = fit_power_law(sc.sizes, sc.d_eff);
    }
    study.scaling.push_back(std::move(sc));
  }
  return study;
}

// Crook ---------------------------------------------------------------------

namespace {

// Summed squared weight of each eigenvector on the top 5% photon layers.
Eigen::VectorXd layer_tails(const SpectralDecomposition& s) {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(s.dimension());
  const auto* p = std::get_if<DickeParams>(&s.model);
  if (p == nullptr) return t;
  const int top = std::max(1, static_cast<int>(std::ceil(0.05 * (p->n_max + 1))));
  for (std::size_t r = 0; r < s.basis.size(); ++r) {
    if (s.basis[r].n > p->n_max - top) t += s.vectors.row(static_cast<Eigen::Index>(r)).transpose().cwiseAbs2();
  }
  return t;
}

// Tail weights that matter for one trajectory direction: per initial level
// at the start, on the worst intermediate stop pulled back to the start, and
// the worst eigenvector among final levels up to the highest compared landing.
struct TailMaps {
  Eigen::VectorXd start, intermediate;
  double landing = 0.0;
};

TailMaps tail_maps(const Trajectory& tr, SpectrumCache& spectra, double landing_max) {
  TailMaps out;
  const auto& a = tr.alphas;
  const SpectrumPtr first = spectra.get(a.front());
  out.start = layer_tails(*first);
  out.landing = photon_tail_report(*spectra.get(a.back()), landing_max).worst_tail;
  out.intermediate = Eigen::VectorXd::Zero(first->dimension());
  for (std::size_t k = 1; k + 1 < a.size(); ++k) {
    // pull the stop-k tails back to the start, leg by leg
    Eigen::VectorXd u = layer_tails(*spectra.get(a[k]));
    for (std::size_t l = k; l >= 1; --l) u = transition_matrix(*spectra.get(a[l - 1]), *spectra.get(a[l])).transpose() * u;
    out.intermediate = out.intermediate.cwiseMax(u);
  }
  return out;
}

struct CrookSetup {
  Trajectory trajectory;
  TailMaps forward_tails, backward_tails;
  DosCurve dos_initial, dos_final;
};

DosCurve crook_dos(const ExperimentConfig& cfg, const ModelSpec& model, double alpha, double lo, double hi) {
  const EnergyGrid grid{lo, hi, cfg.crook.dos_bins};
  if (const auto* d = std::get_if<DickeParams>(&model)) {
    DickeParams p = *d;
    p.alpha = alpha;
    return dicke_density_reduced(p, grid);
  }
  return lmg_density_reduced(alpha, grid);
}

}  // namespace

CrookStudy crook_study(const ExperimentConfig& cfg) {
  cfg.validate();
  CrookStudy study;
  const auto& cc = cfg.crook;
  if (cc.trajectories.empty() || cfg.model.sizes.empty()) return study;

  for (int size : cfg.model.sizes) {
    SpectrumCache spectra(model_spec(cfg, size, cc.trajectories.front().front()));
    const ModelSpec base = spectra.model();
    const double unit = energy_unit(base);
    const bool dicke = cfg.model.name == "dicke";

    double ef = cc.forward_energy * unit;
    double lo = cc.backward_lo * unit, hi = cc.backward_hi * unit, step = cc.backward_step * unit;
    if (cc.fock_lattice && dicke) {
      const auto& p = std::get<DickeParams>(base);
      ef = fock_lattice_energy(p, ef);
      lo = fock_lattice_energy(p, lo);
      hi = fock_lattice_energy(p, hi);
      step = 2.0 * p.omega;
    }
    const std::vector<double> ladder = energy_ladder(lo, hi, step);

    // DOS curves read at E / scale: intensive for LMG, absolute for Dicke
    const double scale = dicke ? 1.0 : unit;
    const double span_lo = std::min(ef, lo) / scale, span_hi = std::max(ef, hi) / scale;
    const double pad = dicke ? 4.0 * step : 0.05;
    std::set<double> endpoints;
    for (const auto& alphas : cc.trajectories) {
      endpoints.insert(alphas.front());
      endpoints.insert(alphas.back());
    }
    std::vector<CrookSetup> setups;
    for (const auto& alphas : cc.trajectories) {
      CrookSetup s;
      s.trajectory = Trajectory{alphas};
      s.dos_initial = crook_dos(cfg, base, alphas.front(), span_lo - pad, span_hi + pad);
      s.dos_final = crook_dos(cfg, base, alphas.back(), span_lo - pad, span_hi + pad);
      spectra.propagator(s.trajectory);
      spectra.propagator(s.trajectory.reversed());
      if (dicke) {
        s.forward_tails = tail_maps(s.trajectory, spectra, ladder.back() + step);
        s.backward_tails = tail_maps(s.trajectory.reversed(), spectra, ef + step);
      }
      // intermediate spectra are no longer needed once the propagators exist
      for (std::size_t k = 1; k + 1 < alphas.size(); ++k) {
        if (!endpoints.count(alphas[k])) spectra.release(alphas[k]);
      }
      setups.push_back(std::move(s));
    }

    struct Job {
      std::size_t setup;
      std::string procedure;
      std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& proc : cfg.prep.procedures) {
      for (std::size_t t = 0; t < setups.size(); ++t) {
        if (proc == "ii") {
          for (auto sd : cfg.prep.seeds) jobs.push_back({t, proc, sd});
        } else {
          jobs.push_back({t, proc, 0});
        }
      }
    }
    std::vector<CrookCell> cells(jobs.size());
    const auto errors = parallel_for(jobs.size(), cfg.workers, [&](std::size_t k) {
      const Job& job = jobs[k];
      const CrookSetup& s = setups[job.setup];
      CrookCell& c = cells[k];
      c.size = size;
      c.procedure = job.procedure;
      c.seed = job.seed;
      c.trajectory = s.trajectory.label();
      const double a0 = s.trajectory.alphas.front(), a1 = s.trajectory.alphas.back();
      const DiagonalEnsemble fwd =
          prepare_ensemble(cfg, job.procedure, spectra, a0, ef / unit, cc.alpha_int_forward, job.seed);
      c.forward_mean_energy = fwd.populations.dot(fwd.basis->energies) / unit;
      const double anchor = ladder.front() - ef;
      WorkHistogram fh =
          tpm_work_distribution(fwd, s.trajectory, spectra, support_bins(fwd, s.trajectory, spectra, anchor, step));
      if (dicke) {
        c.endpoint_tail = std::max(fwd.populations.dot(s.forward_tails.start), s.forward_tails.landing);
        c.intermediate_tail = fwd.populations.dot(s.forward_tails.intermediate);
      }
      const Trajectory back = s.trajectory.reversed();
      for (double e : ladder) {
        DiagonalEnsemble ens;
        try {
          ens = prepare_ensemble(cfg, job.procedure, spectra, a1, e / unit, cc.alpha_int_backward, job.seed);
        } catch (const ParameterError&) {
          throw;
        } catch (const Error&) {
          c.dropped_energies.push_back(e / unit);
          continue;
        }
        BackwardMember m;
        m.energy = e;
        m.mean_energy = ens.populations.dot(ens.basis->energies);
        m.histogram = tpm_work_distribution(ens, back, spectra, support_bins(ens, back, spectra, ef - e, step));
        if (dicke) {
          c.endpoint_tail =
              std::max({c.endpoint_tail, ens.populations.dot(s.backward_tails.start), s.backward_tails.landing});
          c.intermediate_tail = std::max(c.intermediate_tail, ens.populations.dot(s.backward_tails.intermediate));
        }
        c.backward.push_back(std::move(m));
      }
      if (c.backward.empty()) throw NumericalError("no backward state could be prepared");
      CrookOptions co;
      co.min_mass = cc.min_mass;
      co.energy_scale = scale;
      c.comparison = crook_ratio(fh, ef, c.backward, s.dos_initial, s.dos_final, co);
      double acc = 0.0;
      for (std::size_t b = 0; b < c.comparison.w.size(); ++b) {
        const double w = c.comparison.w[b] / unit;
        if (!c.comparison.included[b] || !(w > cc.w_lo && w < cc.w_hi)) continue;
        acc += std::abs(c.comparison.measured[b] - c.comparison.theory[b]) / c.comparison.theory[b];
        ++c.range_bins;
      }
      c.range_error = c.range_bins ? acc / static_cast<double>(c.range_bins) : 0.0;
      c.forward = std::move(fh);
    });
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      if (!errors[k]) continue;
      if (is_config_error(errors[k])) std::rethrow_exception(errors[k]);
      cells[k].error = describe(errors[k]);
      study.partial = true;
    }
    study.cells.insert(study.cells.end(), std::make_move_iterator(cells.begin()), std::make_move_iterator(cells.end()));
  }

  // seed-averaged distance series
  for (const auto& proc : cfg.prep.procedures) {
    for (const auto& alphas : cc.trajectories) {
      CrookStudy::Series sr;
      sr.procedure = proc;
      sr.trajectory = Trajectory{alphas}.label();
      for (int size : cfg.model.sizes) {
        std::vector<double> d;
        for (const auto& c : study.cells) {
          if (c.size == size && c.procedure == proc && c.trajectory == sr.trajectory && c.error.empty()) {
            d.push_back(c.comparison.distance);
          }
        }
        if (d.empty()) continue;
        sr.sizes.push_back(size);
        sr.distance.push_back(mean_of(d));
      }
      if (sr.sizes.size() >= 3 && std::all_of(sr.distance.begin(), sr.distance.end(), [](double v) { return v > 0.0; })) {
        sr.fit = fit_power_law(sr.sizes, sr.distance);
      }
      study.series.push_back(std::move(sr));
    }
  }
  return study;
}

// Validity condition --------------------------------------------------------------

std::vector<ConditionCell> condition_study(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& cd = cfg.condition;
  SpectrumCache spectra(model_spec(cfg, cd.size, cd.alpha));
  const SpectrumPtr target = spectra.get(cd.alpha);
  const SpectrumPtr final_spec = spectra.get(cd.alpha_final);
  const double unit = energy_unit(target->model);
  const double e = cd.energy * unit;
  const double dw = cd.bin_width * unit;

  std::vector<ConditionCell> cells;
  std::vector<DiagonalEnsemble> ensembles;
  for (const auto& job : state_jobs(cfg, std::vector<SweepPoint>{{cd.alpha, cd.energy, cd.alpha_int}})) {
    ConditionCell c;
    c.procedure = job.procedure;
    c.seed = job.seed;
    ensembles.push_back(prepare_ensemble(cfg, job.procedure, spectra, cd.alpha, cd.energy, cd.alpha_int, job.seed));
    cells.push_back(std::move(c));
  }
  if (cells.empty()) return cells;

  const Eigen::MatrixXd t = transition_matrix(*target, *final_spec);
  // P(E, w) is read at the mean work of the narrowest state (procedure (i) when present)
  std::size_t ref = 0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (cells[k].procedure == "i") {
      ref = k;
      break;
    }
  }
  const Eigen::VectorXd mean_final = t.transpose() * final_spec->energies;
  const double work = ensembles[ref].populations.dot(mean_final - target->energies);

  std::vector<double> xs, ys;
  for (Eigen::Index n = 0; n < target->dimension(); ++n) {
    const double en = target->energies(n);
    if (std::abs(en - e) > cd.half_range * unit) continue;
    double p = 0.0;
    for (Eigen::Index m = 0; m < final_spec->dimension(); ++m) {
      if (std::abs(final_spec->energies(m) - en - work) <= 0.5 * dw) p += t(m, n);
    }
    xs.push_back(en);
    ys.push_back(p);
  }
  const double grid_step = 0.4 * dw;
  std::vector<double> grid;
  for (int k = -20; k <= 20; ++k) grid.push_back(e + k * grid_step);
  const Curve transition = local_quadratic_smooth(xs, ys, grid, cd.smoothing * target->span());

  Curve dos;
  if (const auto* d = std::get_if<DickeParams>(&target->model)) {
    const DosCurve g = dicke_density_reduced(*d, {e - 50.0 * grid_step, e + 50.0 * grid_step, 100});
    dos = Curve{g.energy, g.density};
  } else {
    const double c = cd.energy;
    dos = extensive_curve(lmg_density_reduced(cd.alpha, {c - 0.06, c + 0.06, 120}), unit);
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    cells[k].work = work;
    cells[k].transition = transition;
    const double de2 = energy_moments(ensembles[k], *target).delta_e2;
    cells[k].condition = evaluate_crook_condition(dos, transition, de2, e);
  }
  return cells;
}

// Chaos indicator --------------------------------------------------------------

RStatStudy rstat_study(const ExperimentConfig& cfg) {
  cfg.validate();
  RStatStudy out;
  for (int size : cfg.model.sizes) {
    const SpectrumPtr s = diagonalize_shared(model_spec(cfg, size, cfg.rstat.alpha));
    const double unit = energy_unit(s->model);
    if (std::holds_alternative<DickeParams>(s->model)) require_photon_convergence(*s, cfg.rstat.hi * unit);
    const std::vector<double> levels(s->energies.data(), s->energies.data() + s->energies.size());
    out.model.emplace_back(size, r_statistic_range(levels, cfg.rstat.lo * unit, cfg.rstat.hi * unit));
  }
  const std::uint64_t seed = cfg.prep.seeds.empty() ? 1 : cfg.prep.seeds.front();
  if (!cfg.rstat.synthetic_sizes.empty()) {
    const std::size_t n = cfg.rstat.synthetic_sizes.front();
    const auto pois = poisson_spectrum(n, seed);
    const auto goe = goe_spectrum(n, seed);
    out.poisson = r_statistic_range(pois, pois.front(), pois.back());
    // central half of the semicircle, away from the soft edges
    out.goe = r_statistic_range(goe, goe[n / 4], goe[3 * n / 4]);
  }
  return out;
}

// Quantum-classical staircase -----------------------------------------------------

StaircaseCheck staircase_check(const ExperimentConfig& cfg, int size, double alpha, double trim) {
  cfg.validate();
  if (cfg.model.name != "lmg") throw ParameterError("the staircase check is defined for the LMG model");
  if (!(trim >= 0.0 && trim < 0.5)) throw ParameterError("trim must lie in [0, 0.5)");
  const SpectrumPtr s = diagonalize_shared(model_spec(cfg, size, alpha));
  StaircaseCheck out;
  out.size = size;
  out.alpha = alpha;
  out.trim = trim;
  const auto n = static_cast<std::size_t>(s->dimension());
  const auto skip = static_cast<std::size_t>(std::floor(trim * static_cast<double>(n)));
  out.energy.resize(n);
  out.quantum.resize(n);
  out.classical.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.energy[k] = s->energies(static_cast<Eigen::Index>(k)) / size;
    out.quantum[k] = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
    out.classical[k] = lmg_phase_integral(alpha, out.energy[k], LmgClassicalForm::qq_consistent, nullptr);
    if (k >= skip && k + skip < n) out.sup_error = std::max(out.sup_error, std::abs(out.quantum[k] - out.classical[k]));
  }
  return out;
}

}  // namespace qfluct
