// Command-line front end. Every flag writes straight into an ExperimentConfig
// field; stage-specific flags only select what to compute.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "qfluct/errors.hpp"
#include "qfluct/harness.hpp"
#include "qfluct/runtime.hpp"

namespace {

using namespace qfluct;
using nlohmann::json;

constexpr int kOk = 0, kConfig = 2, kNumerical = 3, kPartial = 4;

struct Common {
  ExperimentConfig cfg;
  std::string config_file;
  std::vector<std::uint64_t> seeds;
  int size = 0;
  double alpha = 0.5, energy = -0.24, alpha_int = 0.53;
  std::string procedure = "i";
  std::string out;  // file for single-product stages, "-" or empty for stdout
};

void model_flags(CLI::App* a, Common& c) {
  auto& m = c.cfg.model;
  a->add_option("--config", c.config_file, "JSON config; flags override its fields");
  a->add_option("--model", m.name, "lmg | dicke")->check(CLI::IsMember({"lmg", "dicke"}));
  a->add_option("--parity", m.parity, "full | even | odd")->check(CLI::IsMember({"full", "even", "odd"}));
  a->add_option("--omega", m.omega, "Dicke field frequency");
  a->add_option("--omega0", m.omega0, "Dicke atomic splitting");
  a->add_option("--n-max-per-j", m.n_max_per_j, "Dicke photon cutoff per unit j");
  a->add_option("--tail-tolerance", m.tail_tolerance, "allowed weight on the top photon layers");
  a->add_option("--workers", c.cfg.workers, "worker threads")->check(CLI::PositiveNumber);
}

void prep_flags(CLI::App* a, Common& c) {
  auto& p = c.cfg.prep;
  a->add_option("--seed", c.seeds, "seed(s) for stochastic preparation")->delimiter(',');
  a->add_option("--start-offset", p.start_offset, "procedure (ii) starting offset, intensive");
  a->add_option("--energy-tolerance", p.energy_tolerance, "intensive energy tolerance");
  a->add_option("--relaxation", p.relaxation, "dephase | unitary")->check(CLI::IsMember({"dephase", "unitary"}));
  a->add_option("--relax-time", p.relax_time, "unitary relaxation time");
  a->add_option("--max-cycles", p.max_cycles, "procedure (ii) cycle limit");
  a->add_option("--window-k", p.window_k, "microcanonical window half-width in levels");
  a->add_option("--fock-slack", p.fock_slack, "Fock candidate energy slack");
}

void point_flags(CLI::App* a, Common& c, bool with_size) {
  if (with_size) a->add_option("--size", c.size, "N (LMG) or 2j (Dicke)")->required();
  a->add_option("--alpha", c.alpha, "coupling");
  a->add_option("--energy", c.energy, "intensive target energy (E/N or E/j)");
  a->add_option("--alpha-int", c.alpha_int, "procedure (ii) intermediate coupling");
}

void sweep_flags(CLI::App* a, Common& c) {
  a->add_option("--sizes", c.cfg.model.sizes, "N (LMG) or 2j (Dicke) values")->delimiter(',');
  a->add_option("--procedures", c.cfg.prep.procedures, "i, ii, fock, window")->delimiter(',');
  a->add_option("--out", c.cfg.output_dir, "output directory");
}

// Applies the config file first, then lets explicitly given flags win.
void resolve(Common& c, CLI::App* a) {
  if (!c.config_file.empty()) {
    Common flags = c;
    c.cfg = load_config(c.config_file);
    auto given = [&](const char* name) { return a->count(name) > 0; };
    auto& m = c.cfg.model;
    if (given("--model")) m.name = flags.cfg.model.name;
    if (given("--parity")) m.parity = flags.cfg.model.parity;
    if (given("--omega")) m.omega = flags.cfg.model.omega;
    if (given("--omega0")) m.omega0 = flags.cfg.model.omega0;
    if (given("--n-max-per-j")) m.n_max_per_j = flags.cfg.model.n_max_per_j;
    if (given("--tail-tolerance")) m.tail_tolerance = flags.cfg.model.tail_tolerance;
    if (given("--workers")) c.cfg.workers = flags.cfg.workers;
    if (given("--sizes")) m.sizes = flags.cfg.model.sizes;
    if (given("--procedures")) c.cfg.prep.procedures = flags.cfg.prep.procedures;
    if (given("--out")) c.cfg.output_dir = flags.cfg.output_dir;
    auto& p = c.cfg.prep;
    const auto& fp = flags.cfg.prep;
    if (given("--start-offset")) p.start_offset = fp.start_offset;
    if (given("--energy-tolerance")) p.energy_tolerance = fp.energy_tolerance;
    if (given("--relaxation")) p.relaxation = fp.relaxation;
    if (given("--relax-time")) p.relax_time = fp.relax_time;
    if (given("--max-cycles")) p.max_cycles = fp.max_cycles;
    if (given("--window-k")) p.window_k = fp.window_k;
    if (given("--fock-slack")) p.fock_slack = fp.fock_slack;
  }
  if (!c.seeds.empty()) c.cfg.prep.seeds = c.seeds;
}

void require_seed(const Common& c, bool stochastic, const std::string& stage) {
  if (stochastic && c.seeds.empty() && c.config_file.empty()) {
    throw ParameterError(stage + " is stochastic here; pass --seed");
  }
}

bool uses_ii(const std::vector<std::string>& procs) {
  return std::find(procs.begin(), procs.end(), "ii") != procs.end();
}

std::ostream& sink(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw ParameterError("cannot write " + path);
  return file;
}

std::uint64_t first_seed(const ExperimentConfig& cfg) { return cfg.prep.seeds.empty() ? 1 : cfg.prep.seeds.front(); }

int manifest_status(const RunManifest& m) {
  std::cout << manifest_to_json(m) << '\n';
  if (!m.failure) return kOk;
  std::cerr << "stage " << m.failure->stage << ": " << m.failure->message << '\n';
  return m.failure->kind == "partial" ? kPartial : kNumerical;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) v.push_back(std::stod(tok));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  if (!ensure_sound_blas(argc, argv)) {
    std::cerr << "BLAS self-check failed and no fallback kernel was available\n";
    return kNumerical;
  }

  CLI::App app{"Equilibration, work statistics and Crook tests for the LMG and Dicke models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  Common c;
  std::function<int()> action;

  // spectrum
  auto* spectrum = app.add_subcommand("spectrum", "eigenvalues of one model instance as CSV");
  model_flags(spectrum, c);
  spectrum->add_option("--size", c.size, "N (LMG) or 2j (Dicke)")->required();
  spectrum->add_option("--alpha", c.alpha, "coupling");
  spectrum->add_option("--out", c.out, "CSV file (default stdout)");
  spectrum->callback([&] {
    action = [&] {
      resolve(c, spectrum);
      c.cfg.validate();
      const auto s = diagonalize_shared(model_spec(c.cfg, c.size, c.alpha));
      std::ofstream f;
      write_spectrum_csv(sink(c.out, f), *s);
      return kOk;
    };
  });

  // prepare
  auto* prepare = app.add_subcommand("prepare", "prepare one equilibrium state and report its energy distribution");
  model_flags(prepare, c);
  prep_flags(prepare, c);
  point_flags(prepare, c, true);
  prepare->add_option("--procedure", c.procedure, "i | ii | fock | window")
      ->check(CLI::IsMember({"i", "ii", "fock", "window"}));
  std::string populations_file;
  prepare->add_option("--populations", populations_file, "write index,energy,population CSV here");
  prepare->callback([&] {
    action = [&] {
      resolve(c, prepare);
      require_seed(c, c.procedure == "ii", "procedure (ii)");
      c.cfg.validate();
      SpectrumCache spectra(model_spec(c.cfg, c.size, c.alpha));
      const auto d = prepare_ensemble(c.cfg, c.procedure, spectra, c.alpha, c.energy, c.alpha_int, first_seed(c.cfg));
      const double unit = energy_unit(d.basis->model);
      const auto m = energy_moments(d, *d.basis);
      json j = {{"procedure", c.procedure},
                {"size", c.size},
                {"alpha", c.alpha},
                {"target_energy", c.energy},
                {"mean_energy", m.mean / unit},
                {"energy_width", std::sqrt(m.delta_e2) / unit},
                {"d_eff", effective_dimension(d)}};
      if (c.procedure == "ii") j["seed"] = first_seed(c.cfg);
      std::cout << j.dump(2) << '\n';
      if (!populations_file.empty()) {
        std::ofstream f(populations_file);
        f << "index,energy,population\n" << std::setprecision(17);
        for (Eigen::Index n = 0; n < d.populations.size(); ++n) {
          f << n << ',' << d.basis->energies(n) << ',' << d.populations(n) << '\n';
        }
      }
      return kOk;
    };
  });

  // thermalize-check
  auto* thermal = app.add_subcommand("thermalize-check", "fluctuation and long-time-average scaling over sizes");
  model_flags(thermal, c);
  prep_flags(thermal, c);
  sweep_flags(thermal, c);
  point_flags(thermal, c, false);
  auto& dg = c.cfg.diagnostics;
  thermal->add_option("--variance-mode", dg.variance_mode, "exact | sampled")->check(CLI::IsMember({"exact", "sampled"}));
  thermal->add_option("--horizon", dg.horizon, "time horizon");
  thermal->add_option("--time-samples", dg.time_samples, "samples on the horizon");
  thermal->add_option("--shell-width", dg.shell_width, "classical reference shell width, intensive");
  thermal->add_option("--observables", dg.observables, "observable names")->delimiter(',');
  thermal->callback([&] {
    action = [&] {
      resolve(c, thermal);
      if (c.config_file.empty() || thermal->count("--alpha") || thermal->count("--energy")) {
        c.cfg.diagnostics.points = {{c.alpha, c.energy, c.alpha_int}};
        c.cfg.diagnostics.focus_alpha = c.alpha;
        c.cfg.diagnostics.focus_energy = c.energy;
      }
      require_seed(c, uses_ii(c.cfg.prep.procedures), "procedure (ii)");
      c.cfg.recipe.clear();
      c.cfg.crook.trajectories.clear();
      return manifest_status(run_experiment(c.cfg));
    };
  });

  // dos
  auto* dos = app.add_subcommand("dos", "semiclassical density of states by reduced quadrature");
  model_flags(dos, c);
  double lo = -1.0, hi = 0.0;
  std::size_t bins = 200;
  int dicke_two_j = 20;
  dos->add_option("--alpha", c.alpha, "coupling");
  dos->add_option("--lo", lo, "lower energy, intensive");
  dos->add_option("--hi", hi, "upper energy, intensive");
  dos->add_option("--bins", bins, "grid bins");
  dos->add_option("--two-j", dicke_two_j, "Dicke 2j (absolute energies scale with j)");
  dos->add_option("--out", c.out, "CSV file (default stdout)");
  dos->callback([&] {
    action = [&] {
      resolve(c, dos);
      c.cfg.validate();
      std::ofstream f;
      if (c.cfg.model.name == "lmg") {
        write_dos_csv(sink(c.out, f), lmg_density_reduced(c.alpha, {lo, hi, bins}));
      } else {
        const auto p = std::get<DickeParams>(model_spec(c.cfg, dicke_two_j, c.alpha));
        write_dos_csv(sink(c.out, f), dicke_density_reduced(p, {lo * p.j(), hi * p.j(), bins}));
      }
      return kOk;
    };
  });

  // tpm
  auto* tpm = app.add_subcommand("tpm", "two-point-measurement work histogram along a trajectory");
  model_flags(tpm, c);
  prep_flags(tpm, c);
  point_flags(tpm, c, true);
  std::string trajectory = "0.2,0.5";
  double bin_width = 0.005;
  tpm->add_option("--procedure", c.procedure, "i | ii | fock | window")
      ->check(CLI::IsMember({"i", "ii", "fock", "window"}));
  tpm->add_option("--trajectory", trajectory, "comma-separated alpha stops; the state is prepared at the first");
  tpm->add_option("--bin-width", bin_width, "intensive work bin width");
  tpm->add_option("--out", c.out, "CSV file (default stdout)");
  tpm->callback([&] {
    action = [&] {
      resolve(c, tpm);
      require_seed(c, c.procedure == "ii", "procedure (ii)");
      c.cfg.validate();
      Trajectory tr{parse_list(trajectory)};
      tr.validate();
      SpectrumCache spectra(model_spec(c.cfg, c.size, tr.alphas.front()));
      const auto d =
          prepare_ensemble(c.cfg, c.procedure, spectra, tr.alphas.front(), c.energy, c.alpha_int, first_seed(c.cfg));
      const double w = bin_width * energy_unit(d.basis->model);
      const auto h = tpm_work_distribution(d, tr, spectra, support_bins(d, tr, spectra, 0.0, w));
      std::ofstream f;
      write_histogram_csv(sink(c.out, f), h);
      return kOk;
    };
  });

  // crook
  auto* crook = app.add_subcommand("crook", "forward/backward work ratios against the DOS ratio");
  model_flags(crook, c);
  prep_flags(crook, c);
  sweep_flags(crook, c);
  auto& ck = c.cfg.crook;
  std::vector<std::string> trajectories;
  crook->add_option("--trajectory", trajectories, "alpha stops, comma-separated; repeat for several");
  crook->add_option("--forward-energy", ck.forward_energy, "intensive forward energy");
  crook->add_option("--backward-lo", ck.backward_lo, "lowest backward energy, intensive");
  crook->add_option("--backward-hi", ck.backward_hi, "highest backward energy, intensive");
  crook->add_option("--backward-step", ck.backward_step, "backward ladder step, intensive");
  crook->add_option("--alpha-int-forward", ck.alpha_int_forward, "procedure (ii) coupling for the forward state");
  crook->add_option("--alpha-int-backward", ck.alpha_int_backward, "procedure (ii) coupling for backward states");
  crook->add_flag("--fock-lattice", ck.fock_lattice, "snap Dicke energies to the Fock lattice");
  crook->add_option("--min-mass", ck.min_mass, "minimum bin mass on both sides");
  crook->add_option("--w-lo", ck.w_lo, "error range lower bound, intensive");
  crook->add_option("--w-hi", ck.w_hi, "error range upper bound, intensive");
  crook->add_option("--dos-bins", ck.dos_bins, "bins of the DOS curves");
  crook->callback([&] {
    action = [&] {
      const CrookSection flags = c.cfg.crook;
      resolve(c, crook);
      if (!c.config_file.empty()) {
        // crook flags given together with a config file still win
        auto& k = c.cfg.crook;
        if (crook->count("--forward-energy")) k.forward_energy = flags.forward_energy;
        if (crook->count("--backward-lo")) k.backward_lo = flags.backward_lo;
        if (crook->count("--backward-hi")) k.backward_hi = flags.backward_hi;
        if (crook->count("--backward-step")) k.backward_step = flags.backward_step;
        if (crook->count("--alpha-int-forward")) k.alpha_int_forward = flags.alpha_int_forward;
        if (crook->count("--alpha-int-backward")) k.alpha_int_backward = flags.alpha_int_backward;
        if (crook->count("--fock-lattice")) k.fock_lattice = flags.fock_lattice;
        if (crook->count("--min-mass")) k.min_mass = flags.min_mass;
        if (crook->count("--w-lo")) k.w_lo = flags.w_lo;
        if (crook->count("--w-hi")) k.w_hi = flags.w_hi;
        if (crook->count("--dos-bins")) k.dos_bins = flags.dos_bins;
      }
      if (!trajectories.empty()) {
        c.cfg.crook.trajectories.clear();
        for (const auto& t : trajectories) c.cfg.crook.trajectories.push_back(parse_list(t));
      }
      if (c.cfg.crook.trajectories.empty()) throw ParameterError("crook needs at least one --trajectory");
      require_seed(c, uses_ii(c.cfg.prep.procedures), "procedure (ii)");
      c.cfg.recipe.clear();
      c.cfg.diagnostics.points.clear();
      return manifest_status(run_experiment(c.cfg));
    };
  });

  // rstat
  auto* rstat = app.add_subcommand("rstat", "mean consecutive level-spacing ratio");
  model_flags(rstat, c);
  auto& rs = c.cfg.rstat;
  std::string synthetic;
  std::size_t synthetic_n = 4000;
  rstat->add_option("--size", c.size, "N (LMG) or 2j (Dicke)");
  rstat->add_option("--alpha", rs.alpha, "coupling");
  rstat->add_option("--lo", rs.lo, "lowest energy, intensive");
  rstat->add_option("--hi", rs.hi, "highest energy, intensive");
  rstat->add_option("--synthetic", synthetic, "poisson | goe instead of a model")
      ->check(CLI::IsMember({"poisson", "goe"}));
  rstat->add_option("--levels", synthetic_n, "synthetic spectrum size");
  rstat->add_option("--seed", c.seeds, "seed for synthetic spectra")->delimiter(',');
  rstat->callback([&] {
    action = [&] {
      resolve(c, rstat);
      if (!synthetic.empty()) {
        require_seed(c, true, "a synthetic spectrum");
        const auto lv = synthetic == "poisson" ? poisson_spectrum(synthetic_n, first_seed(c.cfg))
                                               : goe_spectrum(synthetic_n, first_seed(c.cfg));
        const auto r = synthetic == "poisson" ? r_statistic_range(lv, lv.front(), lv.back())
                                              : r_statistic_range(lv, lv[synthetic_n / 4], lv[3 * synthetic_n / 4]);
        std::cout << rstat_json(r) << '\n';
        return kOk;
      }
      if (c.size < 1) throw ParameterError("rstat needs --size or --synthetic");
      c.cfg.model.sizes = {c.size};
      c.cfg.rstat.synthetic_sizes.clear();
      const auto st = rstat_study(c.cfg);
      std::cout << rstat_json(st.model.front().second) << '\n';
      return kOk;
    };
  });

  // fit
  auto* fit = app.add_subcommand("fit", "power-law fit of y against x");
  std::string fit_input, fit_x = "x", fit_y = "y";
  fit->add_option("input", fit_input, "CSV with a header row")->required()->check(CLI::ExistingFile);
  fit->add_option("--x", fit_x, "abscissa column");
  fit->add_option("--y", fit_y, "ordinate column");
  fit->callback([&] {
    action = [&] {
      std::ifstream in(fit_input);
      std::string line;
      std::getline(in, line);
      std::vector<std::string> header;
      {
        std::stringstream ss(line);
        for (std::string tok; std::getline(ss, tok, ',');) header.push_back(tok);
      }
      const auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ParameterError("column '" + name + "' not found in " + fit_input);
        return static_cast<std::size_t>(it - header.begin());
      };
      const std::size_t ix = col(fit_x), iy = col(fit_y);
      std::vector<double> xs, ys;
      while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
        if (f.size() <= std::max(ix, iy)) continue;
        xs.push_back(std::stod(f[ix]));
        ys.push_back(std::stod(f[iy]));
      }
      const auto r = fit_power_law(xs, ys);
      std::cout << json{{"exponent", r.exponent}, {"stderr", r.stderr_}, {"r2", r.r2}, {"points", r.points}}.dump(2)
                << '\n';
      return kOk;
    };
  });

  // run
  auto* run = app.add_subcommand("run", "execute a recipe file (JSON config) or a named recipe");
  std::string recipe_file, recipe_name;
  run->add_option("config", recipe_file, "JSON recipe/config file")->check(CLI::ExistingFile);
  run->add_option("--recipe", recipe_name, "built-in recipe name");
  std::string run_out;
  unsigned run_workers = 0;
  run->add_option("--out", run_out, "output directory override");
  run->add_option("--workers", run_workers, "worker threads override");
  run->callback([&] {
    action = [&] {
      if (recipe_file.empty() == recipe_name.empty()) throw ParameterError("give exactly one of a recipe file or --recipe");
      ExperimentConfig cfg = recipe_file.empty() ? recipe_config(recipe_name) : load_config(recipe_file);
      if (!run_out.empty()) cfg.output_dir = run_out;
      if (run_workers > 0) cfg.workers = run_workers;
      return manifest_status(run_experiment(cfg));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  try {
    return action();
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  }
}
