#include "qfluct/workstats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "qfluct/errors.hpp"

namespace qfluct {

SpectrumCache::SpectrumCache(ModelSpec model, DiagonalizeOptions opts) : model_(std::move(model)), opts_(opts) {}

SpectrumPtr SpectrumCache::get(double alpha) {
  std::shared_future<SpectrumPtr> fut;
  std::promise<SpectrumPtr> promise;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = spectra_.find(alpha);
    if (it == spectra_.end()) {
      fut = promise.get_future().share();
      spectra_.emplace(alpha, fut);
      owner = true;
    } else {
      fut = it->second;
    }
  }
  if (owner) {
    try {
      promise.set_value(diagonalize_shared(with_alpha(model_, alpha), opts_));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return fut.get();
}

std::shared_ptr<const Eigen::MatrixXd> SpectrumCache::propagator(const Trajectory& trajectory) {
  trajectory.validate();
  const auto key = std::make_pair(trajectory.alphas, static_cast<int>(trajectory.composition));
  std::shared_future<std::shared_ptr<const Eigen::MatrixXd>> fut;
  std::promise<std::shared_ptr<const Eigen::MatrixXd>> promise;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = propagators_.find(key);
    if (it == propagators_.end()) {
      fut = promise.get_future().share();
      propagators_.emplace(key, fut);
      owner = true;
    } else {
      fut = it->second;
    }
  }
  if (!owner) return fut.get();
  try {
    const auto& a = trajectory.alphas;
    Eigen::MatrixXd m;
    // Dephased legs compose symmetric |<m|n>|^2 factors, so the reversed
    // trajectory's propagator is the transpose.
    std::shared_ptr<const Eigen::MatrixXd> mirror;
    if (trajectory.composition == Composition::dephased) {
      std::lock_guard lock(mutex_);
      auto it = propagators_.find(std::make_pair(trajectory.reversed().alphas, key.second));
      if (it != propagators_.end() && it->second.wait_for(std::chrono::seconds(0)) == std::future_status::ready) {
        mirror = it->second.get();
      }
    }
    if (mirror) {
      m = mirror->transpose();
    } else if (trajectory.composition == Composition::dephased) {
      m = transition_matrix(*get(a[0]), *get(a[1]));
      for (std::size_t k = 2; k < a.size(); ++k) m = transition_matrix(*get(a[k - 1]), *get(a[k])) * m;
    } else {
      Eigen::MatrixXd amp = get(a[1])->vectors.transpose() * get(a[0])->vectors;
      for (std::size_t k = 2; k < a.size(); ++k) amp = (get(a[k])->vectors.transpose() * get(a[k - 1])->vectors) * amp;
      m = amp.cwiseAbs2();
    }
    promise.set_value(std::make_shared<const Eigen::MatrixXd>(std::move(m)));
  } catch (...) {
    promise.set_exception(std::current_exception());
  }
  return fut.get();
}

void SpectrumCache::release(double alpha) {
  std::lock_guard lock(mutex_);
  spectra_.erase(alpha);
}

void Trajectory::validate() const {
  if (alphas.size() < 2) throw ParameterError("a trajectory needs at least two alpha values");
}

Trajectory Trajectory::reversed() const {
  Trajectory t = *this;
  std::reverse(t.alphas.begin(), t.alphas.end());
  return t;
}

std::string Trajectory::label() const {
  std::ostringstream s;
  for (std::size_t k = 0; k < alphas.size(); ++k) s << (k ? "->" : "") << alphas[k];
  if (composition == Composition::coherent) s << " (coherent)";
  return s.str();
}

Eigen::MatrixXd transition_matrix(const SpectralDecomposition& a, const SpectralDecomposition& b) {
  if (a.dimension() != b.dimension() || !same_basis(a.model, b.model)) {
    throw ParameterError("transition matrix needs two spectra of the same Hilbert space");
  }
  Eigen::MatrixXd t = b.vectors.transpose() * a.vectors;
  t.array() = t.array().square();
  return t;
}

double WorkSpectrum::total() const { return std::accumulate(probability.begin(), probability.end(), 0.0); }

double WorkSpectrum::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < work.size(); ++k) m += work[k] * probability[k];
  return m;
}

WorkBins WorkBins::uniform(double anchor, double width, double lo, double hi) {
  if (!(width > 0.0) || !(hi > lo)) throw ParameterError("work bins need positive width and lo < hi");
  // bins centred on anchor + k width
  const double first = std::floor((lo - anchor) / width + 0.5);
  const double last = std::ceil((hi - anchor) / width - 0.5);
  WorkBins b;
  for (double k = first; k <= last + 1.0; k += 1.0) b.edges.push_back(anchor + (k - 0.5) * width);
  return b;
}

std::optional<std::size_t> WorkBins::locate(double w) const {
  if (edges.size() < 2 || w < edges.front() || w >= edges.back()) return std::nullopt;
  const auto it = std::upper_bound(edges.begin(), edges.end(), w);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

void WorkBins::validate() const {
  if (edges.size() < 2) throw ParameterError("work bins need at least two edges");
  for (std::size_t k = 1; k < edges.size(); ++k) {
    if (!(edges[k] > edges[k - 1])) throw ParameterError("work bin edges must be strictly increasing");
  }
}

double WorkHistogram::mass_at(double w) const {
  if (edges.size() < 2 || w < edges.front() || w >= edges.back()) return 0.0;
  const auto it = std::upper_bound(edges.begin(), edges.end(), w);
  return probability[static_cast<std::size_t>(it - edges.begin()) - 1];
}

namespace {

WorkSpectrum exact_lines(const DiagonalEnsemble& initial, const Trajectory& trajectory, SpectrumCache& spectra,
                         double cutoff) {
  const auto prop = spectra.propagator(trajectory);
  const SpectrumPtr first = spectra.get(trajectory.alphas.front());
  const SpectrumPtr last = spectra.get(trajectory.alphas.back());
  WorkSpectrum out;
  const Eigen::Index dim = first->dimension();
  for (Eigen::Index n = 0; n < dim; ++n) {
    const double p = initial.populations(n);
    if (p <= cutoff) continue;
    for (Eigen::Index m = 0; m < dim; ++m) {
      const double q = (*prop)(m, n) * p;
      if (q == 0.0) continue;
      out.work.push_back(last->energies(m) - first->energies(n));
      out.probability.push_back(q);
    }
  }
  return out;
}

// Markov sampling leg by leg; transition columns are computed on demand.
WorkSpectrum sampled_lines(const DiagonalEnsemble& initial, const Trajectory& trajectory, SpectrumCache& spectra,
                           const WorkOptions& opts) {
  if (trajectory.composition != Composition::dephased) throw ParameterError("sampled work mode requires dephased legs");
  if (opts.samples == 0) throw ParameterError("sampled work mode needs a positive sample count");
  std::vector<SpectrumPtr> stops;
  for (double a : trajectory.alphas) stops.push_back(spectra.get(a));
  std::vector<std::unordered_map<Eigen::Index, std::discrete_distribution<Eigen::Index>>> legs(stops.size() - 1);

  std::mt19937_64 engine(opts.seed);
  const Eigen::VectorXd& p = initial.populations;
  std::discrete_distribution<Eigen::Index> start(p.data(), p.data() + p.size());
  std::map<std::pair<Eigen::Index, Eigen::Index>, std::uint64_t> counts;
  for (std::uint64_t s = 0; s < opts.samples; ++s) {
    const Eigen::Index n0 = start(engine);
    Eigen::Index n = n0;
    for (std::size_t k = 0; k + 1 < stops.size(); ++k) {
      auto it = legs[k].find(n);
      if (it == legs[k].end()) {
        const Eigen::VectorXd col = (stops[k + 1]->vectors.transpose() * stops[k]->vectors.col(n)).cwiseAbs2();
        it = legs[k].emplace(n, std::discrete_distribution<Eigen::Index>(col.data(), col.data() + col.size())).first;
      }
      n = it->second(engine);
    }
    ++counts[{n0, n}];
  }
  WorkSpectrum out;
  for (const auto& [pair, c] : counts) {
    out.work.push_back(stops.back()->energies(pair.second) - stops.front()->energies(pair.first));
    out.probability.push_back(static_cast<double>(c) / static_cast<double>(opts.samples));
  }
  return out;
}

}  // namespace

WorkSpectrum tpm_work_spectrum(const DiagonalEnsemble& initial, const Trajectory& trajectory, SpectrumCache& spectra,
                               const WorkOptions& opts) {
  trajectory.validate();
  const SpectrumPtr first = spectra.get(trajectory.alphas.front());
  if (initial.basis && (!same_basis(initial.basis->model, first->model) ||
                        model_alpha(initial.basis->model) != trajectory.alphas.front())) {
    throw ParameterError("initial ensemble is not defined on the first trajectory eigenbasis");
  }
  if (initial.populations.size() != first->dimension()) throw ParameterError("initial ensemble has the wrong dimension");
  return opts.mode == WorkMode::exact ? exact_lines(initial, trajectory, spectra, opts.population_cutoff)
                                      : sampled_lines(initial, trajectory, spectra, opts);
}

WorkHistogram bin_work(const WorkSpectrum& lines, const WorkBins& bins, double max_uncovered) {
  bins.validate();
  WorkHistogram h;
  h.edges = bins.edges;
  h.probability.assign(bins.size(), 0.0);
  for (std::size_t k = 0; k < lines.work.size(); ++k) {
    if (const auto b = bins.locate(lines.work[k])) {
      h.probability[*b] += lines.probability[k];
    } else {
      h.uncovered += lines.probability[k];
    }
  }
  h.total = std::accumulate(h.probability.begin(), h.probability.end(), 0.0);
  if (h.uncovered > max_uncovered) {
    std::ostringstream msg;
    msg << "work bins [" << bins.edges.front() << ", " << bins.edges.back() << ") miss probability mass "
        << h.uncovered;
    throw DomainError(msg.str());
  }
  return h;
}

WorkBins support_bins(const DiagonalEnsemble& initial, const Trajectory& trajectory, SpectrumCache& spectra,
                      double anchor, double width) {
  trajectory.validate();
  const SpectrumPtr first = spectra.get(trajectory.alphas.front());
  const SpectrumPtr last = spectra.get(trajectory.alphas.back());
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index n = 0; n < initial.populations.size(); ++n) {
    if (initial.populations(n) <= 0.0) continue;
    lo = std::min(lo, first->energies(n));
    hi = std::max(hi, first->energies(n));
  }
  if (!(hi >= lo)) throw ParameterError("initial ensemble has no populated level");
  const double wlo = last->energies(0) - hi;
  const double whi = last->energies(last->dimension() - 1) - lo;
  return WorkBins::uniform(anchor, width, wlo, whi + 0.5 * width);
}

WorkHistogram tpm_work_distribution(const DiagonalEnsemble& initial, const Trajectory& trajectory, SpectrumCache& spectra,
                                    const WorkBins& bins, const WorkOptions& opts, double max_uncovered) {
  WorkHistogram h;
  if (opts.mode == WorkMode::sampled) {
    h = bin_work(tpm_work_spectrum(initial, trajectory, spectra, opts), bins, max_uncovered);
    h.samples = opts.samples;
    h.seed = opts.seed;
  } else {
    // Exact summation straight into the bins; the (n, m) line list can be
    // dimension^2 long.
    bins.validate();
    trajectory.validate();
    const SpectrumPtr first = spectra.get(trajectory.alphas.front());
    const SpectrumPtr last = spectra.get(trajectory.alphas.back());
    if (initial.basis && (!same_basis(initial.basis->model, first->model) ||
                          model_alpha(initial.basis->model) != trajectory.alphas.front())) {
      throw ParameterError("initial ensemble is not defined on the first trajectory eigenbasis");
    }
    if (initial.populations.size() != first->dimension()) throw ParameterError("initial ensemble has the wrong dimension");
    const auto prop = spectra.propagator(trajectory);
    h.edges = bins.edges;
    h.probability.assign(bins.size(), 0.0);
    const Eigen::Index dim = first->dimension();
    for (Eigen::Index n = 0; n < dim; ++n) {
      const double p = initial.populations(n);
      if (p <= opts.population_cutoff) continue;
      const double en = first->energies(n);
      for (Eigen::Index m = 0; m < dim; ++m) {
        const double q = (*prop)(m, n) * p;
        if (q == 0.0) continue;
        if (const auto b = bins.locate(last->energies(m) - en)) {
          h.probability[*b] += q;
        } else {
          h.uncovered += q;
        }
      }
    }
    h.total = std::accumulate(h.probability.begin(), h.probability.end(), 0.0);
    if (h.uncovered > max_uncovered) {
      std::ostringstream msg;
      msg << "work bins [" << bins.edges.front() << ", " << bins.edges.back() << ") miss probability mass "
          << h.uncovered;
      throw DomainError(msg.str());
    }
  }
  h.initial = trajectory.label();
  if (initial.basis) h.initial_energy = initial.populations.dot(initial.basis->energies);
  h.mode = opts.mode;
  return h;
}

std::vector<BackwardMember> backward_family(const Trajectory& forward, std::span<const double> energies,
                                            double forward_energy, double width, const EnsembleFactory& prepare,
                                            SpectrumCache& spectra, const WorkOptions& opts) {
  if (energies.empty()) return {};
  if (width <= 0.0) {
    if (energies.size() < 2) throw ParameterError("a single backward energy needs an explicit bin width");
    width = std::abs(energies[1] - energies[0]);
  }
  const Trajectory back = forward.reversed();
  const SpectrumPtr start = spectra.get(back.alphas.front());
  // bins for member k are centred on -(E_k - E_f), one lattice for all k
  const double anchor = forward_energy - energies[0];
  std::vector<BackwardMember> out;
  out.reserve(energies.size());
  for (double e : energies) {
    const DiagonalEnsemble ens = prepare(start, e);
    BackwardMember m;
    m.energy = e;
    m.mean_energy = ens.populations.dot(start->energies);
    m.histogram = tpm_work_distribution(ens, back, spectra, support_bins(ens, back, spectra, anchor, width), opts);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<double> energy_ladder(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw ParameterError("energy ladder needs step > 0 and hi >= lo");
  std::vector<double> e;
  const auto count = static_cast<long>(std::floor((hi - lo) / step * (1.0 + 1e-12) + 1e-6));
  for (long k = 0; k <= count; ++k) e.push_back(lo + static_cast<double>(k) * step);
  return e;
}

namespace {

// Mass of the bin centred on w; the histograms must sit on the ladder lattice.
double aligned_mass(const WorkHistogram& h, double w, double width) {
  if (h.edges.size() < 2 || w < h.edges.front() || w >= h.edges.back()) return 0.0;
  const auto it = std::upper_bound(h.edges.begin(), h.edges.end(), w);
  const auto k = static_cast<std::size_t>(it - h.edges.begin()) - 1;
  const double centre = 0.5 * (h.edges[k] + h.edges[k + 1]);
  const double tol = 1e-9 * width;
  if (std::abs(centre - w) > tol || std::abs(h.edges[k + 1] - h.edges[k] - width) > tol) {
    throw ParameterError("work histogram bins are not centred on the backward energy ladder");
  }
  return h.probability[k];
}

}  // namespace

CrookComparison crook_ratio(const WorkHistogram& forward, double forward_energy, std::span<const BackwardMember> backward,
                            const DosCurve& dos_initial, const DosCurve& dos_final, const CrookOptions& opts) {
  if (backward.empty()) throw ParameterError("the backward family is empty");
  if (forward.edges.size() < 2) throw ParameterError("forward histogram has no bins");
  CrookComparison c;
  c.bin_width = forward.edges[1] - forward.edges[0];
  c.forward_energy = forward_energy;
  const double g_i = dos_initial.at(forward_energy / opts.energy_scale);
  if (!(g_i > 0.0)) throw DomainError("initial density of states vanishes at the forward energy");

  std::vector<double> rel;
  for (const auto& b : backward) {
    const double w = b.energy - forward_energy;
    const double pf = aligned_mass(forward, w, c.bin_width);
    const double pb = aligned_mass(b.histogram, -w, c.bin_width);
    const double theory = dos_final.at(b.energy / opts.energy_scale) / g_i;
    const bool use = pf >= opts.min_mass && pb >= opts.min_mass && theory > 0.0;
    c.w.push_back(w);
    c.forward.push_back(pf);
    c.backward.push_back(pb);
    c.measured.push_back(pb > 0.0 ? pf / pb : 0.0);
    c.theory.push_back(theory);
    c.match_distance.push_back(std::abs(b.mean_energy - b.energy));
    c.included.push_back(use);
  }
  c.included_count = static_cast<std::size_t>(std::count(c.included.begin(), c.included.end(), true));
  c.distance = c.included_count ? histogram_distance(c.measured, c.theory, c.included) : 0.0;
  return c;
}

double histogram_distance(std::span<const double> h, std::span<const double> ref, const std::vector<bool>& include) {
  if (h.size() != ref.size()) throw ParameterError("histograms must share the bin grid");
  if (!include.empty() && include.size() != h.size()) throw ParameterError("inclusion mask has the wrong length");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (!include.empty() && !include[k]) continue;
    if (!(ref[k] > 0.0)) throw DomainError("reference histogram is not positive on an included bin");
    acc += std::abs(h[k] - ref[k]) / ref[k];
    ++n;
  }
  if (n == 0) throw DomainError("no bins included in the distance");
  return acc / static_cast<double>(n);
}

void write_histogram_csv(std::ostream& out, const WorkHistogram& h) {
  out << "bin_left,bin_right,probability\n" << std::setprecision(17);
  for (std::size_t k = 0; k < h.probability.size(); ++k) {
    out << h.edges[k] << ',' << h.edges[k + 1] << ',' << h.probability[k] << '\n';
  }
}

void write_crook_csv(std::ostream& out, const CrookComparison& c) {
  out << "w,measured_ratio,theory_ratio,included_flag\n" << std::setprecision(17);
  for (std::size_t k = 0; k < c.w.size(); ++k) {
    out << c.w[k] << ',' << c.measured[k] << ',' << c.theory[k] << ',' << (c.included[k] ? 1 : 0) << '\n';
  }
}

std::string crook_summary_json(const CrookComparison& c) {
  nlohmann::json j;
  j["D"] = c.distance;
  j["bin_width"] = c.bin_width;
  j["forward_energy"] = c.forward_energy;
  j["included_bins"] = c.included_count;
  std::vector<double> excluded;
  for (std::size_t k = 0; k < c.w.size(); ++k) {
    if (!c.included[k]) excluded.push_back(c.w[k]);
  }
  j["excluded_w"] = excluded;
  j["matching"] = {{"rule", "nearest backward energy"},
                   {"max_mismatch", c.match_distance.empty() ? 0.0
                                                             : *std::max_element(c.match_distance.begin(),
                                                                                 c.match_distance.end())}};
  return j.dump(2);
}

}  // namespace qfluct
