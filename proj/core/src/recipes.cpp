#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "io.hpp"
#include "qfluct/errors.hpp"
#include "qfluct/harness.hpp"
#include "qfluct/runtime.hpp"

namespace qfluct {

namespace {

std::vector<SweepPoint> lmg_sweep_points() {
  std::vector<SweepPoint> pts{{0.2, -0.6, 0.25}};
  for (int k = 0; k < 9; ++k) pts.push_back({0.5, -0.26 + 0.005 * k, 0.53});
  return pts;
}

}  // namespace

std::vector<std::string> recipe_names() { return {"fig1", "fig2", "fig3", "fig4", "condition", "rstat", "dos"}; }

ExperimentConfig recipe_config(const std::string& recipe) {
  ExperimentConfig c;
  c.recipe = recipe;
  c.output_dir = "out/" + recipe;
  c.model.parity = "even";
  if (recipe == "fig1" || recipe == "fig4") {
    c.model.sizes = {250, 500, 1000, 2000};
    c.prep.procedures = {"i", "ii"};
    c.prep.seeds = {1, 2, 3};
    c.diagnostics.points = recipe == "fig1" ? lmg_sweep_points() : std::vector<SweepPoint>{{0.5, -0.24, 0.53}};
    c.diagnostics.time_samples = 4000;
  } else if (recipe == "fig2") {
    c.model.sizes = {500, 1000, 2000};
    c.prep.seeds = {1, 2, 3};
    c.crook.trajectories = {{0.2, 0.5}};
  } else if (recipe == "fig3") {
    c.model.name = "dicke";
    c.model.sizes = {20, 30};
    c.model.n_max_per_j = 28.0;
    c.prep.procedures = {"fock", "window"};
    c.crook.trajectories = {{1.2, 2.0, 0.6}, {1.2, 0.0, 0.6}};
    c.crook.forward_energy = -0.12;
    c.crook.backward_lo = -0.6;
    c.crook.backward_hi = 4.2;
    c.crook.backward_step = 0.2;  // replaced by the Fock lattice step
    c.crook.fock_lattice = true;
    c.crook.w_lo = 0.0;
    c.crook.w_hi = 4.3;
    c.diagnostics.focus_alpha = 0.6;
    c.diagnostics.focus_energy = 3.48;
  } else if (recipe == "condition") {
    c.prep.seeds = {1};
    c.condition.size = 1600;
  } else if (recipe == "rstat") {
    c.model.name = "dicke";
    c.model.sizes = {20};
    c.prep.procedures = {};
    c.rstat = RStatSection{};
  } else if (recipe == "dos") {
    c.model.sizes = {2000};
    c.prep.procedures = {};
    c.diagnostics.points = {{0.2, 0.0, 0.25}, {0.5, 0.0, 0.53}};
  } else {
    throw ParameterError("unknown recipe '" + recipe + "'");
  }
  return c;
}

// Runner -----------------------------------------------------------------

namespace {

class Run {
 public:
  explicit Run(const ExperimentConfig& cfg) : cfg_(cfg) { m_.config = cfg; }

  RunManifest& manifest() { return m_; }
  bool failed() const { return m_.failure.has_value(); }

  // Times one stage; errors other than configuration errors end the run.
  void stage(const std::string& name, const std::function<void()>& fn) {
    if (failed()) return;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const ParameterError&) {
      throw;
    } catch (const std::exception& e) {
      m_.failure = StageFailure{name, "numerical", e.what()};
    }
    m_.timings.push_back({name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
  }

  void partial(const std::string& stage, const std::string& what) {
    if (!failed()) m_.failure = StageFailure{stage, "partial", what};
  }

  template <class F>
  void write(const std::string& rel, F&& fill) {
    const auto path = cfg_.output_dir / rel;
    {
      std::ofstream out(path, std::ios::binary);
      if (!out) throw NumericalError("cannot write " + path.string());
      fill(out);
    }
    m_.outputs.push_back({rel, sha256_file(path), std::filesystem::file_size(path)});
  }

 private:
  const ExperimentConfig& cfg_;
  RunManifest m_;
};

std::string safe(const std::string& s) {
  std::string out;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s.compare(k, 2, "->") == 0) {
      out += '_';
      ++k;
    } else {
      const auto ch = static_cast<unsigned char>(s[k]);
      out += std::isalnum(ch) || ch == '.' || ch == '-' ? s[k] : '_';
    }
  }
  return out;
}

std::string cell_tag(const CrookCell& c) {
  std::ostringstream t;
  t << "n" << c.size << "_" << c.procedure;
  if (c.procedure == "ii") t << "_s" << c.seed;
  t << "_" << safe(c.trajectory);
  return t.str();
}

void thermal_stage(Run& run, const ExperimentConfig& cfg) {
  ThermalStudy st;
  run.stage("thermalisation", [&] {
    st = thermalisation_study(cfg);
    run.write("thermal_cells.csv", [&](std::ostream& o) { io::write_thermal_cells_csv(o, st); });
    run.write("thermal_scaling.csv", [&](std::ostream& o) { io::write_thermal_scaling_csv(o, st); });
    run.write("thermal_fits.csv", [&](std::ostream& o) { io::write_thermal_fits_csv(o, st); });
  });
  if (st.partial) run.partial("thermalisation", "some sweep cells failed; see thermal_cells.csv");
}

// <nt/N>(t) at the focus point of the largest size, one series per procedure.
void timeseries_stage(Run& run, const ExperimentConfig& cfg) {
  if (cfg.model.name != "lmg" || cfg.model.sizes.empty()) return;
  run.stage("timeseries", [&] {
    const int size = *std::max_element(cfg.model.sizes.begin(), cfg.model.sizes.end());
    const auto& d = cfg.diagnostics;
    const SweepPoint* pt = nullptr;
    for (const auto& p : d.points) {
      if (std::abs(p.alpha - d.focus_alpha) < 1e-12 && std::abs(p.energy - d.focus_energy) < 1e-12) pt = &p;
    }
    if (pt == nullptr) return;
    SpectrumCache spectra(model_spec(cfg, size, pt->alpha));
    const auto obs = observable_matrix("nt_over_N", spectra.model());
    const double ref = lmg_shell_average_reduced(pt->alpha, lmg_classical_observable("nt_over_N"), pt->energy,
                                                 d.shell_width);
    const auto times = uniform_times(d.horizon, d.time_samples);
    std::vector<std::pair<std::string, ObservableTimeSeries>> series;
    for (const auto& proc : cfg.prep.procedures) {
      const std::uint64_t seed = cfg.prep.seeds.empty() ? 1 : cfg.prep.seeds.front();
      const auto st = prepare_state(cfg, proc, spectra, pt->alpha, pt->energy, pt->alpha_int, seed);
      series.emplace_back(proc, evolve_expectation(st, obs, times));
    }
    run.write("timeseries.csv", [&](std::ostream& o) {
      io::write_timeseries_csv(o, series, std::vector<double>(series.size(), ref));
    });
  });
}

// Energy distributions of every procedure at the focus point.
void populations_stage(Run& run, const ExperimentConfig& cfg, bool all_sizes) {
  if (cfg.model.sizes.empty()) return;
  run.stage("populations", [&] {
    std::vector<std::pair<std::string, DiagonalEnsemble>> states;
    const auto& d = cfg.diagnostics;
    const double alpha_int = d.focus_alpha < 0.35 ? 0.25 : 0.53;
    const std::size_t count = all_sizes ? cfg.model.sizes.size() : 1;
    for (std::size_t k = 0; k < count; ++k) {
      const int size = cfg.model.sizes[k];
      SpectrumCache spectra(model_spec(cfg, size, d.focus_alpha));
      double energy = d.focus_energy;
      if (const auto* p = std::get_if<DickeParams>(&spectra.model()); p && cfg.crook.fock_lattice) {
        energy = fock_lattice_energy(*p, energy * p->j()) / p->j();
      }
      for (const auto& proc : cfg.prep.procedures) {
        const std::uint64_t seed = cfg.prep.seeds.empty() ? 1 : cfg.prep.seeds.front();
        states.emplace_back("n" + std::to_string(size) + "_" + proc,
                            prepare_ensemble(cfg, proc, spectra, d.focus_alpha, energy, alpha_int, seed));
      }
    }
    run.write("populations.csv", [&](std::ostream& o) { io::write_populations_csv(o, states); });
  });
}

void crook_stage(Run& run, const ExperimentConfig& cfg) {
  CrookStudy st;
  run.stage("crook", [&] {
    st = crook_study(cfg);
    run.write("crook_cells.csv", [&](std::ostream& o) { io::write_crook_cells_csv(o, st); });
    run.write("crook_series.csv", [&](std::ostream& o) { io::write_crook_series_csv(o, st); });
    for (const auto& c : st.cells) {
      if (!c.error.empty()) continue;
      const std::string tag = cell_tag(c);
      run.write("forward_" + tag + ".csv", [&](std::ostream& o) { write_histogram_csv(o, c.forward); });
      run.write("backward_" + tag + ".csv", [&](std::ostream& o) { io::write_backward_csv(o, c); });
      run.write("ratio_" + tag + ".csv", [&](std::ostream& o) { write_crook_csv(o, c.comparison); });
      run.write("ratio_" + tag + ".json", [&](std::ostream& o) { o << crook_summary_json(c.comparison) << '\n'; });
    }
  });
  if (st.partial) run.partial("crook", "some sweep cells failed; see crook_cells.csv");
  for (const auto& c : st.cells) {
    if (!c.dropped_energies.empty()) {
      std::ostringstream n;
      n << cell_tag(c) << ": " << c.dropped_energies.size() << " backward energies could not be prepared";
      run.manifest().notes.push_back(n.str());
    }
  }
}

void condition_stage(Run& run, const ExperimentConfig& cfg) {
  run.stage("condition", [&] {
    const auto cells = condition_study(cfg);
    if (cells.empty()) return;
    run.write("condition.json", [&](std::ostream& o) { io::write_condition_json(o, cells); });
    run.write("transition.csv", [&](std::ostream& o) { io::write_transition_csv(o, cells.front().transition); });
  });
}

void rstat_stage(Run& run, const ExperimentConfig& cfg) {
  run.stage("rstat", [&] {
    const auto st = rstat_study(cfg);
    run.write("rstat.json", [&](std::ostream& o) { io::write_rstat_json(o, st); });
  });
}

void dos_stage(Run& run, const ExperimentConfig& cfg) {
  if (cfg.model.name != "lmg") return;
  run.stage("dos", [&] {
    std::set<double> alphas;
    for (const auto& p : cfg.diagnostics.points) alphas.insert(p.alpha);
    for (int size : cfg.model.sizes) {
      for (double a : alphas) {
        const auto chk = staircase_check(cfg, size, a);
        std::ostringstream tag;
        tag << "n" << size << "_a" << a;
        run.write("dos_" + tag.str() + ".csv", [&](std::ostream& o) {
          write_dos_csv(o, lmg_density_reduced(a, {chk.energy.front(), chk.energy.back(), 400}));
        });
        run.write("staircase_" + tag.str() + ".csv", [&](std::ostream& o) {
          o << "E,quantum,classical\n";
          for (std::size_t k = 0; k < chk.energy.size(); ++k) {
            o << io::num(chk.energy[k]) << ',' << io::num(chk.quantum[k]) << ',' << io::num(chk.classical[k]) << '\n';
          }
        });
        run.manifest().notes.push_back(tag.str() + ": staircase sup error " + io::num(chk.sup_error));
      }
    }
  });
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  Run run(cfg);
  const bool empty = cfg.model.sizes.empty() && cfg.recipe != "condition";
  std::filesystem::create_directories(cfg.output_dir);
  if (empty) {
    run.manifest().notes.push_back("empty sweep");
  } else {
    run.stage("blas", [] { require_sound_blas(); });
    const std::string& r = cfg.recipe;
    if (r == "fig1" || r == "fig4") {
      thermal_stage(run, cfg);
      timeseries_stage(run, cfg);
      if (r == "fig4") populations_stage(run, cfg, true);
    } else if (r == "fig2") {
      crook_stage(run, cfg);
    } else if (r == "fig3") {
      crook_stage(run, cfg);
      populations_stage(run, cfg, false);
    } else if (r == "condition") {
      condition_stage(run, cfg);
    } else if (r == "rstat") {
      rstat_stage(run, cfg);
    } else if (r == "dos") {
      dos_stage(run, cfg);
    } else {
      if (!cfg.diagnostics.points.empty()) thermal_stage(run, cfg);
      if (!cfg.crook.trajectories.empty()) crook_stage(run, cfg);
    }
  }
  RunManifest m = run.manifest();
  std::ofstream(cfg.output_dir / "manifest.json") << manifest_to_json(m) << '\n';
  return m;
}

}  // namespace qfluct
