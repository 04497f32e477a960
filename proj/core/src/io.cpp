#include "io.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qfluct/errors.hpp"

namespace qfluct {

using nlohmann::json;

namespace {

// Reads one JSON object and rejects keys it was never asked about.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ParameterError(where_ + ": expected an object");
  }
  void done() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ParameterError(where_ + ": unknown key '" + k + "'");
    }
  }
  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ParameterError(where_ + "." + key + ": " + e.what());
    }
  }
  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json point_json(const SweepPoint& p) { return {{"alpha", p.alpha}, {"energy", p.energy}, {"alpha_int", p.alpha_int}}; }

}  // namespace

std::string config_to_json(const ExperimentConfig& c) {
  json points = json::array();
  for (const auto& p : c.diagnostics.points) points.push_back(point_json(p));
  json j = {
      {"recipe", c.recipe},
      {"model",
       {{"name", c.model.name},
        {"sizes", c.model.sizes},
        {"parity", c.model.parity},
        {"omega", c.model.omega},
        {"omega0", c.model.omega0},
        {"n_max_per_j", c.model.n_max_per_j},
        {"tail_tolerance", c.model.tail_tolerance}}},
      {"prep",
       {{"procedures", c.prep.procedures},
        {"seeds", c.prep.seeds},
        {"start_offset", c.prep.start_offset},
        {"energy_tolerance", c.prep.energy_tolerance},
        {"relaxation", c.prep.relaxation},
        {"relax_time", c.prep.relax_time},
        {"max_cycles", c.prep.max_cycles},
        {"window_k", c.prep.window_k},
        {"fock_slack", c.prep.fock_slack}}},
      {"diagnostics",
       {{"points", points},
        {"observables", c.diagnostics.observables},
        {"variance_mode", c.diagnostics.variance_mode},
        {"horizon", c.diagnostics.horizon},
        {"time_samples", c.diagnostics.time_samples},
        {"shell_width", c.diagnostics.shell_width},
        {"focus_alpha", c.diagnostics.focus_alpha},
        {"focus_energy", c.diagnostics.focus_energy}}},
      {"crook",
       {{"trajectories", c.crook.trajectories},
        {"forward_energy", c.crook.forward_energy},
        {"backward_lo", c.crook.backward_lo},
        {"backward_hi", c.crook.backward_hi},
        {"backward_step", c.crook.backward_step},
        {"alpha_int_forward", c.crook.alpha_int_forward},
        {"alpha_int_backward", c.crook.alpha_int_backward},
        {"fock_lattice", c.crook.fock_lattice},
        {"min_mass", c.crook.min_mass},
        {"w_lo", c.crook.w_lo},
        {"w_hi", c.crook.w_hi},
        {"dos_bins", c.crook.dos_bins}}},
      {"condition",
       {{"alpha", c.condition.alpha},
        {"energy", c.condition.energy},
        {"alpha_int", c.condition.alpha_int},
        {"alpha_final", c.condition.alpha_final},
        {"bin_width", c.condition.bin_width},
        {"smoothing", c.condition.smoothing},
        {"half_range", c.condition.half_range},
        {"size", c.condition.size}}},
      {"rstat",
       {{"alpha", c.rstat.alpha},
        {"lo", c.rstat.lo},
        {"hi", c.rstat.hi},
        {"synthetic_sizes", c.rstat.synthetic_sizes}}},
      {"output_dir", c.output_dir.string()},
      {"workers", c.workers},
  };
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Fields top(j, "config");
  top.get("recipe", c.recipe);
  if (!c.recipe.empty()) c = recipe_config(c.recipe);  // sections override the recipe defaults
  if (const json* m = top.sub("model")) {
    Fields f(*m, "model");
    f.get("name", c.model.name);
    f.get("sizes", c.model.sizes);
    f.get("parity", c.model.parity);
    f.get("omega", c.model.omega);
    f.get("omega0", c.model.omega0);
    f.get("n_max_per_j", c.model.n_max_per_j);
    f.get("tail_tolerance", c.model.tail_tolerance);
    f.done();
  }
  if (const json* m = top.sub("prep")) {
    Fields f(*m, "prep");
    f.get("procedures", c.prep.procedures);
    f.get("seeds", c.prep.seeds);
    f.get("start_offset", c.prep.start_offset);
    f.get("energy_tolerance", c.prep.energy_tolerance);
    f.get("relaxation", c.prep.relaxation);
    f.get("relax_time", c.prep.relax_time);
    f.get("max_cycles", c.prep.max_cycles);
    f.get("window_k", c.prep.window_k);
    f.get("fock_slack", c.prep.fock_slack);
    f.done();
  }
  if (const json* m = top.sub("diagnostics")) {
    Fields f(*m, "diagnostics");
    if (const json* pts = f.sub("points")) {
      if (!pts->is_array()) throw ParameterError("diagnostics.points: expected an array");
      c.diagnostics.points.clear();
      for (const auto& p : *pts) {
        SweepPoint sp;
        Fields g(p, "diagnostics.points[]");
        g.get("alpha", sp.alpha);
        g.get("energy", sp.energy);
        g.get("alpha_int", sp.alpha_int);
        g.done();
        c.diagnostics.points.push_back(sp);
      }
    }
    f.get("observables", c.diagnostics.observables);
    f.get("variance_mode", c.diagnostics.variance_mode);
    f.get("horizon", c.diagnostics.horizon);
    f.get("time_samples", c.diagnostics.time_samples);
    f.get("shell_width", c.diagnostics.shell_width);
    f.get("focus_alpha", c.diagnostics.focus_alpha);
    f.get("focus_energy", c.diagnostics.focus_energy);
    f.done();
  }
  if (const json* m = top.sub("crook")) {
    Fields f(*m, "crook");
    f.get("trajectories", c.crook.trajectories);
    f.get("forward_energy", c.crook.forward_energy);
    f.get("backward_lo", c.crook.backward_lo);
    f.get("backward_hi", c.crook.backward_hi);
    f.get("backward_step", c.crook.backward_step);
    f.get("alpha_int_forward", c.crook.alpha_int_forward);
    f.get("alpha_int_backward", c.crook.alpha_int_backward);
    f.get("fock_lattice", c.crook.fock_lattice);
    f.get("min_mass", c.crook.min_mass);
    f.get("w_lo", c.crook.w_lo);
    f.get("w_hi", c.crook.w_hi);
    f.get("dos_bins", c.crook.dos_bins);
    f.done();
  }
  if (const json* m = top.sub("condition")) {
    Fields f(*m, "condition");
    f.get("alpha", c.condition.alpha);
    f.get("energy", c.condition.energy);
    f.get("alpha_int", c.condition.alpha_int);
    f.get("alpha_final", c.condition.alpha_final);
    f.get("bin_width", c.condition.bin_width);
    f.get("smoothing", c.condition.smoothing);
    f.get("half_range", c.condition.half_range);
    f.get("size", c.condition.size);
    f.done();
  }
  if (const json* m = top.sub("rstat")) {
    Fields f(*m, "rstat");
    f.get("alpha", c.rstat.alpha);
    f.get("lo", c.rstat.lo);
    f.get("hi", c.rstat.hi);
    f.get("synthetic_sizes", c.rstat.synthetic_sizes);
    f.done();
  }
  std::string out = c.output_dir.string();
  top.get("output_dir", out);
  c.output_dir = out;
  top.get("workers", c.workers);
  top.done();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 initialisation failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

std::string manifest_to_json(const RunManifest& m) {
  json timings = json::array(), outputs = json::array();
  for (const auto& t : m.timings) timings.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  for (const auto& o : m.outputs) outputs.push_back({{"path", o.path}, {"sha256", o.sha256}, {"bytes", o.bytes}});
  json j = {{"version", m.version},
            {"config", json::parse(config_to_json(m.config))},
            {"timings", timings},
            {"outputs", outputs},
            {"notes", m.notes},
            {"status", m.ok() ? "ok" : m.failure->kind}};
  if (m.failure) {
    j["failure"] = {{"stage", m.failure->stage}, {"kind", m.failure->kind}, {"message", m.failure->message}};
  }
  return j.dump(2);
}

std::vector<std::string> verify_manifest(const RunManifest& m) {
  std::vector<std::string> bad;
  for (const auto& o : m.outputs) {
    const auto p = m.config.output_dir / o.path;
    std::error_code ec;
    if (!std::filesystem::exists(p, ec) || sha256_file(p) != o.sha256) bad.push_back(o.path);
  }
  return bad;
}

namespace io {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void fit_row(std::ostream& out, const std::string& proc, const char* quantity, const PowerLawFit& f) {
  out << proc << ',' << quantity << ',' << num(f.exponent) << ',' << num(f.slope) << ',' << num(f.stderr_) << ',' << num(f.r2) << ','
      << f.points << '\n';
}

}  // namespace

void write_thermal_cells_csv(std::ostream& out, const ThermalStudy& s) {
  out << "size,alpha,energy,alpha_int,procedure,seed,sigma2,delta,mean_energy,energy_width,d_eff,cycles,"
         "short_horizon,error\n";
  for (const auto& c : s.cells) {
    out << c.size << ',' << num(c.point.alpha) << ',' << num(c.point.energy) << ',' << num(c.point.alpha_int) << ','
        << c.procedure << ',' << c.seed << ',' << num(c.sigma2) << ',' << num(c.delta) << ',' << num(c.mean_energy)
        << ',' << num(c.energy_width) << ',' << num(c.d_eff) << ',' << c.cycles << ',' << (c.short_horizon ? 1 : 0)
        << ',' << (c.error.empty() ? "" : "\"" + c.error + "\"") << '\n';
  }
}

void write_thermal_scaling_csv(std::ostream& out, const ThermalStudy& s) {
  out << "procedure,size,sigma2,sigma,delta,energy_width,d_eff\n";
  for (const auto& sc : s.scaling) {
    for (std::size_t k = 0; k < sc.sizes.size(); ++k) {
      out << sc.procedure << ',' << num(sc.sizes[k]) << ',' << num(sc.sigma2[k]) << ',' << num(std::sqrt(sc.sigma2[k]))
          << ',' << num(sc.delta[k]) << ',' << num(sc.energy_width[k]) << ',' << num(sc.d_eff[k]) << '\n';
    }
  }
}

void write_thermal_fits_csv(std::ostream& out, const ThermalStudy& s) {
  out << "procedure,quantity,exponent,slope,stderr,r2,points\n";
  for (const auto& sc : s.scaling) {
    if (sc.sigma2_fit.points == 0) continue;
    fit_row(out, sc.procedure, "sigma2", sc.sigma2_fit);
    fit_row(out, sc.procedure, "sigma", sc.sigma_fit);
    fit_row(out, sc.procedure, "delta", sc.delta_fit);
    fit_row(out, sc.procedure, "energy_width", sc.energy_width_fit);
    fit_row(out, sc.procedure, "d_eff", sc.d_eff_fit);
  }
}

void write_timeseries_csv(std::ostream& out, const std::vector<std::pair<std::string, ObservableTimeSeries>>& series,
                          const std::vector<double>& reference) {
  out << "procedure,observable,t,value,microcanonical\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& [proc, ts] = series[k];
    for (std::size_t i = 0; i < ts.times.size(); ++i) {
      out << proc << ',' << ts.observable << ',' << num(ts.times[i]) << ',' << num(ts.values[i]) << ','
          << num(reference[k]) << '\n';
    }
  }
}

void write_populations_csv(std::ostream& out, const std::vector<std::pair<std::string, DiagonalEnsemble>>& states) {
  out << "label,index,energy,population\n";
  for (const auto& [label, d] : states) {
    for (Eigen::Index n = 0; n < d.populations.size(); ++n) {
      out << label << ',' << n << ',' << num(d.basis->energies(n)) << ',' << num(d.populations(n)) << '\n';
    }
  }
}

void write_crook_cells_csv(std::ostream& out, const CrookStudy& s) {
  out << "size,procedure,seed,trajectory,D,included_bins,range_error,range_bins,forward_mean_energy,backward_members,"
         "dropped_members,endpoint_tail,intermediate_tail,error\n";
  for (const auto& c : s.cells) {
    out << c.size << ',' << c.procedure << ',' << c.seed << ',' << c.trajectory << ',' << num(c.comparison.distance)
        << ',' << c.comparison.included_count << ',' << num(c.range_error) << ',' << c.range_bins << ','
        << num(c.forward_mean_energy) << ',' << c.backward.size() << ',' << c.dropped_energies.size() << ','
        << num(c.endpoint_tail) << ',' << num(c.intermediate_tail) << ','
        << (c.error.empty() ? "" : "\"" + c.error + "\"") << '\n';
  }
}

void write_crook_series_csv(std::ostream& out, const CrookStudy& s) {
  out << "procedure,trajectory,size,D,exponent,stderr\n";
  for (const auto& sr : s.series) {
    for (std::size_t k = 0; k < sr.sizes.size(); ++k) {
      out << sr.procedure << ',' << sr.trajectory << ',' << num(sr.sizes[k]) << ',' << num(sr.distance[k]) << ','
          << (sr.fit ? num(sr.fit->exponent) : "") << ',' << (sr.fit ? num(sr.fit->stderr_) : "") << '\n';
    }
  }
}

void write_backward_csv(std::ostream& out, const CrookCell& c) {
  out << "member,energy,mean_energy,bin_left,bin_right,probability\n";
  for (std::size_t m = 0; m < c.backward.size(); ++m) {
    const auto& b = c.backward[m];
    for (std::size_t k = 0; k < b.histogram.probability.size(); ++k) {
      if (b.histogram.probability[k] == 0.0) continue;
      out << m << ',' << num(b.energy) << ',' << num(b.mean_energy) << ',' << num(b.histogram.edges[k]) << ','
          << num(b.histogram.edges[k + 1]) << ',' << num(b.histogram.probability[k]) << '\n';
    }
  }
}

void write_condition_json(std::ostream& out, const std::vector<ConditionCell>& cells) {
  json arr = json::array();
  for (const auto& c : cells) {
    const auto& k = c.condition;
    arr.push_back({{"procedure", c.procedure},
                   {"seed", c.seed},
                   {"work", c.work},
                   {"energy", k.energy},
                   {"delta_e2", k.delta_e2},
                   {"g", k.g},
                   {"dg", k.dg},
                   {"d2g", k.d2g},
                   {"P", k.P},
                   {"dP", k.dP},
                   {"d2P", k.d2P},
                   {"g_step", k.g_step},
                   {"p_step", k.p_step},
                   {"value", k.value}});
  }
  out << arr.dump(2) << '\n';
}

void write_transition_csv(std::ostream& out, const Curve& c) {
  out << "E,P\n";
  for (std::size_t k = 0; k < c.x.size(); ++k) out << num(c.x[k]) << ',' << num(c.y[k]) << '\n';
}

void write_rstat_json(std::ostream& out, const RStatStudy& s) {
  json models = json::array();
  for (const auto& [size, r] : s.model) {
    json e = json::parse(rstat_json(r));
    e["size"] = size;
    models.push_back(e);
  }
  json j = {{"model", models},
            {"poisson", json::parse(rstat_json(s.poisson))},
            {"goe", json::parse(rstat_json(s.goe))},
            {"reference", {{"poisson", kPoissonMeanR}, {"goe", kGoeMeanR}}}};
  out << j.dump(2) << '\n';
}

}  // namespace io

}  // namespace qfluct
