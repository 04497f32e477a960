// Acceptance checks with pinned tolerances. One PASS/FAIL line per
// criterion; "info" lines carry the numbers behind it.
//
//   qfluct_acceptance [criterion ...]     (no argument runs all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qfluct/errors.hpp"
#include "qfluct/harness.hpp"
#include "qfluct/runtime.hpp"

using namespace qfluct;

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

class Report {
 public:
  void info(const std::string& line) { std::cout << "  info " << line << '\n' << std::flush; }
  // records a sub-check; the criterion passes only if all of them do
  bool check(bool ok, const std::string& what) {
    std::cout << "  " << (ok ? "ok   " : "BAD  ") << what << '\n' << std::flush;
    all_ = all_ && ok;
    return ok;
  }
  bool all() const { return all_; }

 private:
  bool all_ = true;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string join(const std::vector<double>& v, const char* f = "%.4g") {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + fmt(f, v[k]);
  return s;
}

// Oracle ----------------------------------------------------------------------

bool oracle(Report& r) {
  constexpr double tol = 1e-12;
  double worst = 0.0;
  int cases = 0;
  for (int n = 2; n <= 8; ++n)
    for (double a : {0.0, 0.13, 0.5, 0.81, 1.0})
      for (Parity p : {Parity::full, Parity::even, Parity::odd}) {
        const ModelSpec m = LmgParams{n, a, p};
        const auto h = build_hamiltonian(m), o = fock_oracle(m);
        if (h.basis != o.basis) return r.check(false, fmt("LMG N=%d basis mismatch", n));
        worst = std::max(worst, (h.dense() - o.dense()).cwiseAbs().maxCoeff());
        ++cases;
      }
  for (int two_j = 1; two_j <= 7; ++two_j)
    for (double a : {0.0, 0.4, 1.3})
      for (Parity p : {Parity::full, Parity::even, Parity::odd}) {
        DickeParams d;
        d.two_j = two_j;
        d.n_max = 200 / (two_j + 1) - 1;
        d.omega = 1.1;
        d.omega0 = 0.7;
        d.alpha = a;
        d.sector = p;
        const auto h = build_hamiltonian(d), o = fock_oracle(d);
        if (h.dimension() > 200 || h.basis != o.basis) return r.check(false, fmt("Dicke 2j=%d bad basis", two_j));
        worst = std::max(worst, (h.dense() - o.dense()).cwiseAbs().maxCoeff());
        ++cases;
      }
  return r.check(worst <= tol, fmt("%d cases, max entry difference %.3g <= %.0e", cases, worst, tol));
}

// Exact limits ----------------------------------------------------------------

bool limits(Report& r) {
  double worst_lmg = 0.0, worst_dicke = 0.0;
  for (int n : {10, 101, 400}) {
    const auto s = diagonalize_shared(LmgParams{n, 1.0, Parity::full});
    for (int k = 0; k <= n; ++k) worst_lmg = std::max(worst_lmg, std::abs(s->energies(k) - k) / std::max(1, k));
  }
  for (int two_j : {3, 8, 20}) {
    DickeParams d;
    d.two_j = two_j;
    d.n_max = 40;
    d.omega = 1.0;
    d.omega0 = 0.6;
    d.alpha = 0.0;
    const auto s = diagonalize_shared(d);
    std::vector<double> expect;
    for (int n = 0; n <= d.n_max; ++n)
      for (int two_m = -two_j; two_m <= two_j; two_m += 2) expect.push_back(d.omega0 * 0.5 * two_m + d.omega * n);
    std::sort(expect.begin(), expect.end());
    for (std::size_t k = 0; k < expect.size(); ++k)
      worst_dicke = std::max(worst_dicke, std::abs(s->energies(static_cast<Eigen::Index>(k)) - expect[k]) /
                                              std::max(1.0, std::abs(expect[k])));
  }
  // relative error in units of epsilon
  constexpr double tol = 4.0 * kEps;
  r.check(worst_lmg <= tol, fmt("LMG alpha=1 = {0..N}: worst relative error %.3g (tol %.3g)", worst_lmg, tol));
  r.check(worst_dicke <= tol, fmt("Dicke alpha=0 = {w0 m + w n}: worst relative error %.3g (tol %.3g)", worst_dicke, tol));
  return r.all();
}

// TPM soundness -----------------------------------------------------------------

DickeParams small_dicke(int two_j, double alpha) {
  DickeParams d;
  d.two_j = two_j;
  d.n_max = 15 * two_j;
  d.alpha = alpha;
  d.sector = Parity::even;
  return d;
}

bool tpm(Report& r) {
  constexpr double tol = 1e-10;
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  double worst_moment = 0.0, worst_norm = 0.0, worst_stoch = 0.0;
  for (int c = 0; c < 20; ++c) {
    ModelSpec a, b;
    if (c % 2 == 0) {
      const int n = 60 + 40 * (c % 5);
      a = LmgParams{n, u(rng), Parity::even};
      b = LmgParams{n, u(rng), Parity::even};
    } else {
      const int two_j = 4 + 2 * (c % 3);
      a = small_dicke(two_j, 1.4 * u(rng));
      b = small_dicke(two_j, 1.4 * u(rng));
    }
    SpectrumCache cache(a);
    const double aa = model_alpha(a), ab = model_alpha(b);
    const auto sa = cache.get(aa);
    const auto n = static_cast<Eigen::Index>(u(rng) * 0.5 * static_cast<double>(sa->dimension()));
    const auto lines = tpm_work_spectrum({sa, Eigen::VectorXd::Unit(sa->dimension(), n)}, Trajectory{{aa, ab}}, cache);
    const Eigen::VectorXd v = sa->vectors.col(n);
    const double expect = v.dot(build_hamiltonian(b).entries * v) - sa->energies(n);
    worst_moment = std::max(worst_moment, std::abs(lines.mean() - expect) / std::max(1.0, std::abs(expect)));
    worst_norm = std::max(worst_norm, std::abs(lines.total() - 1.0));
    const auto t = transition_matrix(*sa, *cache.get(ab));
    worst_stoch = std::max({worst_stoch, (t.colwise().sum().array() - 1.0).abs().maxCoeff(),
                            (t.rowwise().sum().array() - 1.0).abs().maxCoeff()});
  }

  // binned distributions of the kinds used downstream
  struct Case {
    ModelSpec model;
    std::vector<double> alphas;
    double energy;
    int k;
  };
  const std::vector<Case> bins_cases{
      {LmgParams{400, 0.2, Parity::even}, {0.2, 0.5}, -0.4 * 400, 12},
      {LmgParams{400, 0.5, Parity::even}, {0.5, 0.2}, -0.1 * 400, 12},
      {small_dicke(8, 1.2), {1.2, 2.0, 0.6}, -0.12 * 4, 10},
      {small_dicke(8, 1.2), {1.2, 0.0, 0.6}, -0.12 * 4, 10},
  };
  for (const auto& bc : bins_cases) {
    SpectrumCache cache(bc.model);
    const Trajectory tr{bc.alphas};
    const auto init = microcanonical_window_ensemble(cache.get(bc.alphas.front()), bc.energy, bc.k);
    const auto bins = support_bins(init, tr, cache, 0.0, 0.5);
    const auto h = tpm_work_distribution(init, tr, cache, bins);
    double total = 0.0;
    for (double p : h.probability) total += p;
    worst_norm = std::max({worst_norm, std::abs(total - 1.0), std::abs(h.total - 1.0)});
    const auto p = cache.propagator(tr);
    worst_stoch = std::max({worst_stoch, ((*p).colwise().sum().array() - 1.0).abs().maxCoeff()});
  }
  r.check(worst_norm <= tol, fmt("normalisation: worst |sum P - 1| = %.3g", worst_norm));
  r.check(worst_stoch <= tol, fmt("unistochastic rows/columns: worst deviation %.3g", worst_stoch));
  r.check(worst_moment <= tol, fmt("20 sudden quenches: worst relative first-moment error %.3g", worst_moment));
  return r.all();
}

// Thermalisation and energy width ---------------------------------------------------------

std::map<std::string, ThermalScaling> scalings(const ThermalStudy& s) {
  std::map<std::string, ThermalScaling> m;
  for (const auto& sc : s.scaling) m[sc.procedure] = sc;
  return m;
}

bool failed_cells(Report& r, const ThermalStudy& s) {
  std::size_t bad = 0;
  for (const auto& c : s.cells) bad += !c.error.empty();
  return r.check(bad == 0, fmt("%zu of %zu cells succeeded", s.cells.size() - bad, s.cells.size()));
}

bool decreasing(const std::vector<double>& v) {
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] < v[k - 1])) return false;
  return v.size() >= 2;
}

bool thermal(Report& r) {
  auto cfg = recipe_config("fig1");
  const auto study = thermalisation_study(cfg);
  failed_cells(r, study);
  auto sc = scalings(study);
  if (!sc.count("i") || !sc.count("ii")) return r.check(false, "missing procedure");
  for (const auto& [p, s] : sc) {
    r.info(fmt("(%s) N = %s", p.c_str(), join(s.sizes).c_str()));
    r.info(fmt("(%s) sigma^2 = %s", p.c_str(), join(s.sigma2).c_str()));
    r.info(fmt("(%s) Delta = %s  exponent %.3f", p.c_str(), join(s.delta).c_str(), s.delta_fit.exponent));
    r.info(fmt("(%s) sigma^2 exponent %.3f", p.c_str(), s.sigma2_fit.exponent));
  }
  const auto& i = sc["i"].sigma_fit;
  const auto& ii = sc["ii"].sigma_fit;
  r.check(i.exponent >= 0.15 && i.exponent <= 0.35, fmt("(i) sigma exponent %.3f +- %.3f in [0.15, 0.35]", i.exponent, i.stderr_));
  r.check(ii.exponent >= 0.40 && ii.exponent <= 0.65,
          fmt("(ii) sigma exponent %.3f +- %.3f in [0.40, 0.65]", ii.exponent, ii.stderr_));
  r.check(decreasing(sc["i"].delta), "(i) Delta strictly decreasing in N");
  r.check(decreasing(sc["ii"].delta), "(ii) Delta strictly decreasing in N");
  return r.all();
}

bool width(Report& r) {
  auto cfg = recipe_config("fig4");
  const auto study = thermalisation_study(cfg);
  failed_cells(r, study);
  auto sc = scalings(study);
  if (!sc.count("i") || !sc.count("ii")) return r.check(false, "missing procedure");
  for (const auto& [p, s] : sc) {
    r.info(fmt("(%s) N = %s", p.c_str(), join(s.sizes).c_str()));
    r.info(fmt("(%s) sigma(E)/N = %s", p.c_str(), join(s.energy_width).c_str()));
    r.info(fmt("(%s) d_eff = %s", p.c_str(), join(s.d_eff).c_str()));
  }
  const auto& wi = sc["i"].energy_width_fit;
  r.check(wi.exponent >= 0.2 && wi.exponent <= 0.3,
          fmt("(i) sigma(E) exponent %.4f +- %.4f in [0.2, 0.3]", wi.exponent, wi.stderr_));
  {
    std::vector<double> root(sc["i"].energy_width.size());
    std::transform(sc["i"].energy_width.begin(), sc["i"].energy_width.end(), root.begin(),
                   [](double v) { return std::sqrt(v); });
    r.info(fmt("(i) exponent of sqrt(sigma(E)) = %.4f (not a pass criterion)",
               fit_power_law(sc["i"].sizes, root).exponent));
  }
  const auto& w2 = sc["ii"].energy_width;
  const double spread = *std::max_element(w2.begin(), w2.end()) / *std::min_element(w2.begin(), w2.end());
  r.check(spread < 2.0, fmt("(ii) sigma(E) max/min = %.3f < 2", spread));
  const double di = sc["i"].d_eff_fit.slope, dii = sc["ii"].d_eff_fit.slope;
  r.check(di >= 0.4 && di <= 0.6, fmt("(i) d_eff exponent %.4f in [0.4, 0.6]", di));
  r.check(dii >= 0.85 && dii <= 1.15, fmt("(ii) d_eff exponent %.4f in [0.85, 1.15]", dii));
  return r.all();
}

// Crook violation -------------------------------------------------------------------

bool crook(Report& r) {
  const auto cfg = recipe_config("fig2");
  const auto study = crook_study(cfg);
  for (const auto& c : study.cells) {
    if (!c.error.empty()) r.check(false, fmt("N=%d (%s) seed %llu: %s", c.size, c.procedure.c_str(),
                                             static_cast<unsigned long long>(c.seed), c.error.c_str()));
  }
  const CrookStudy::Series* si = nullptr;
  const CrookStudy::Series* sii = nullptr;
  for (const auto& s : study.series) {
    r.info(fmt("(%s) N = %s  D = %s", s.procedure.c_str(), join(s.sizes).c_str(), join(s.distance).c_str()));
    if (s.procedure == "i") si = &s;
    if (s.procedure == "ii") sii = &s;
  }
  if (!si || !sii || !si->fit || !sii->fit) return r.check(false, "series incomplete; no fit");
  r.check(si->fit->exponent >= 0.4 && si->fit->exponent <= 1.2,
          fmt("(i) D exponent %.3f +- %.3f in [0.4, 1.2]", si->fit->exponent, si->fit->stderr_));
  r.check(sii->fit->exponent <= 0.2, fmt("(ii) no decreasing trend: D exponent %.3f <= 0.2", sii->fit->exponent));
  const double lo = *std::min_element(sii->distance.begin(), sii->distance.end());
  r.check(lo >= 0.05, fmt("(ii) min D = %.3f >= 0.05", lo));
  return r.all();
}

// Trajectory dependence -----------------------------------------------------------------

// Mean relative deviation between two measured ratio curves over bins that
// both count and that fall in the error range.
double curve_gap(const CrookCell& a, const CrookCell& b, double lo, double hi, double unit) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < a.comparison.w.size(); ++k) {
    for (std::size_t m = 0; m < b.comparison.w.size(); ++m) {
      if (std::abs(a.comparison.w[k] - b.comparison.w[m]) > 1e-9 * std::max(1.0, std::abs(a.comparison.w[k]))) continue;
      const double x = a.comparison.w[k] / unit;
      if (!a.comparison.included[k] || !b.comparison.included[m] || x <= lo || x >= hi) continue;
      const double ref = 0.5 * (a.comparison.measured[k] + b.comparison.measured[m]);
      sum += std::abs(a.comparison.measured[k] - b.comparison.measured[m]) / ref;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::infinity();
}

bool trajectory(Report& r) {
  const auto cfg = recipe_config("fig3");
  const auto study = crook_study(cfg);
  const double tail_tol = cfg.model.tail_tolerance;
  for (int size : cfg.model.sizes) {
    const double unit = 0.5 * size;
    std::map<std::string, std::vector<const CrookCell*>> by;
    for (const auto& c : study.cells) {
      if (c.size != size) continue;
      if (!c.error.empty()) {
        r.check(false, fmt("j=%g %s %s: %s", unit, c.procedure.c_str(), c.trajectory.c_str(), c.error.c_str()));
        continue;
      }
      by[c.procedure].push_back(&c);
      r.info(fmt("j=%g %-6s %-12s error %.4f over %zu bins, endpoint tail %.2g, intermediate tail %.2g, %zu dropped",
                 unit, c.procedure.c_str(), c.trajectory.c_str(), c.range_error, c.range_bins, c.endpoint_tail,
                 c.intermediate_tail, c.dropped_energies.size()));
      r.check(c.endpoint_tail <= tail_tol,
              fmt("j=%g %s %s end-point photon tail %.2g <= %.0e", unit, c.procedure.c_str(), c.trajectory.c_str(),
                  c.endpoint_tail, tail_tol));
    }
    const auto& win = by["window"];
    const auto& fock = by["fock"];
    if (win.size() != 2 || fock.size() != 2) {
      r.check(false, fmt("j=%g: expected two trajectories per procedure", unit));
      continue;
    }
    for (const auto* c : win)
      r.check(c->range_error <= 0.10, fmt("j=%g window %s vs DOS ratio %.4f <= 0.10", unit, c->trajectory.c_str(), c->range_error));
    const double gap = curve_gap(*win[0], *win[1], cfg.crook.w_lo, cfg.crook.w_hi, unit);
    r.check(gap <= 0.10, fmt("j=%g window trajectories agree: mean relative gap %.4f <= 0.10", unit, gap));
    double best = 0.0;
    for (std::size_t t = 0; t < 2; ++t) {
      const auto* w = win[t];
      const auto* f = *std::find_if(fock.begin(), fock.end(), [&](const CrookCell* c) { return c->trajectory == w->trajectory; });
      best = std::max(best, f->range_error / w->range_error);
    }
    r.check(best >= 2.0, fmt("j=%g largest Fock/window error ratio %.2f >= 2", unit, best));
  }
  return r.all();
}

// Chaos --------------------------------------------------------------------------------

bool chaos(Report& r) {
  const auto cfg = recipe_config("rstat");
  const auto s = rstat_study(cfg);
  const auto within = [&](const RStatReport& x, double ref, const char* name) {
    const double z = std::abs(x.mean - ref) / x.stderr_;
    r.check(z <= 3.0, fmt("%s <r> = %.4f +- %.4f vs %.4f: %.2f se <= 3", name, x.mean, x.stderr_, ref, z));
  };
  within(s.poisson, kPoissonMeanR, "Poisson");
  within(s.goe, kGoeMeanR, "GOE");
  if (s.model.empty()) return r.check(false, "no model spectrum");
  for (const auto& [size, x] : s.model)
    r.check(x.mean >= 0.5, fmt("Dicke j=%g alpha=%.2g <r> = %.4f +- %.4f (%zu pairs) >= 0.5", 0.5 * size, cfg.rstat.alpha,
                               x.mean, x.stderr_, x.pairs));
  return r.all();
}

// Validity condition ---------------------------------------------------------------------

bool condition(Report& r) {
  const auto cfg = recipe_config("condition");
  const auto cells = condition_study(cfg);
  std::map<std::string, std::vector<double>> v;
  for (const auto& c : cells) {
    v[c.procedure].push_back(c.condition.value);
    r.info(fmt("(%s) seed %llu: value %.4g (dE^2 %.4g, g'/g %.3g, P'/P %.3g)", c.procedure.c_str(),
               static_cast<unsigned long long>(c.seed), c.condition.value, c.condition.delta_e2,
               c.condition.dg / c.condition.g, c.condition.dP / c.condition.P));
  }
  if (v["i"].empty() || v["ii"].empty()) return r.check(false, "missing procedure");
  const auto mean = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double y : x) s += y;
    return s / static_cast<double>(x.size());
  };
  const double ratio = mean(v["ii"]) / mean(v["i"]);
  return r.check(ratio >= 10.0, fmt("condition(ii) / condition(i) = %.3g >= 10", ratio));
}

// DOS -------------------------------------------------------------------------------------

bool dos(Report& r) {
  const auto cfg = recipe_config("dos");
  for (double a : {0.2, 0.5}) {
    const auto s = staircase_check(cfg, 2000, a, 0.02);
    r.check(s.sup_error <= 0.03, fmt("N=2000 alpha=%.1f staircase sup error %.4f <= 0.03", a, s.sup_error));
  }
  return r.all();
}

const std::vector<std::pair<std::string, std::function<bool(Report&)>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<bool(Report&)>>> all{
      {"oracle", oracle}, {"limits", limits}, {"tpm", tpm},     {"thermal", thermal},     {"width", width},
      {"crook", crook},   {"trajectory", trajectory}, {"chaos", chaos}, {"condition", condition}, {"dos", dos},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  if (!ensure_sound_blas(argc, argv)) {
    std::cerr << "BLAS self-check failed\n";
    return 3;
  }
  std::vector<std::string> wanted(argv + 1, argv + argc);
  for (const auto& w : wanted) {
    if (std::none_of(criteria().begin(), criteria().end(), [&](const auto& c) { return c.first == w; })) {
      std::cerr << "unknown criterion " << w << '\n';
      return 2;
    }
  }
  int failures = 0;
  for (const auto& [name, fn] : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    Report rep;
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string why;
    try {
      ok = fn(rep) && rep.all();
    } catch (const std::exception& e) {
      why = std::string(" (") + e.what() + ")";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (ok ? "PASS " : "FAIL ") << name << fmt(" [%.1f s]", secs) << why << '\n' << std::flush;
    failures += !ok;
  }
  return failures ? 1 : 0;
}
