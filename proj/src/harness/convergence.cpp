#include "spimex/harness/convergence.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "spimex/harness/initial.hpp"

namespace spimex::harness {

namespace {

FinalState simulate_crime(const ConvergeSection& cv, int n, double tau, long steps, Auditor* auditor) {
  const GridSpec spec(n);
  const SpectralPlan plan(spec);
  const auto params = crime::CrimeParams::general(cv.D_crime, cv.eta, GridField(spec, cv.p0));
  crime::CrimeState state;
  state.phi = smooth_density(spec);
  state.p = smooth_field(spec);

  crime::StepResult r = crime::advance_first_interval(state, params, tau, cv.first_step_substeps, plan);
  if (auditor) auditor->check(r);
  for (long k = 1; k < steps; ++k) {
    r = crime::step(r.state, params, tau, plan);
    if (auditor) auditor->check(r);
  }
  return {{r.state.phi}, r.state.p};
}

FinalState simulate_epidemic(const ConvergeSection& cv, int n, double tau, long steps, Auditor* auditor) {
  const GridSpec spec(n);
  const SpectralPlan plan(spec);
  auto params = epidemic::EpidemicParams::uniform_rates(spec, cv.rate, cv.D_epidemic, cv.eta);
  params.p0 = GridField(spec, cv.p0);
  epidemic::EpidemicState state = smooth_epidemic(spec);

  epidemic::StepResult r = epidemic::advance_first_interval(state, params, tau, cv.first_step_substeps, plan);
  if (auditor) auditor->check(r);
  for (long k = 1; k < steps; ++k) {
    r = epidemic::step_epi(r.state, params, tau, plan);
    if (auditor) auditor->check(r);
  }
  return {std::vector<GridField>(r.state.psi.begin(), r.state.psi.end()), r.state.p};
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Everything that determines a reference solution, in a fixed textual form.
std::string reference_key(Model model, const ConvergeSection& cv, int n, double tau, double T) {
  std::string key = model == Model::Crime ? "crime" : "epidemic";
  key += " n=" + std::to_string(n) + " tau=" + format_real(tau) + " T=" + format_real(T);
  key += " substeps=" + std::to_string(cv.first_step_substeps) + " eta=" + format_real(cv.eta);
  key += " p0=" + format_real(cv.p0);
  key += model == Model::Crime ? " D=" + format_real(cv.D_crime)
                               : " D=" + format_real(cv.D_epidemic) + " rate=" + format_real(cv.rate);
  return key + " v1";
}

double density_error(const std::vector<GridField>& a, const std::vector<GridField>& b) {
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double e = l2_norm(a[k] - b[k]);
    sq += e * e;
  }
  return std::sqrt(sq);
}

}  // namespace

long step_count(double T, double tau) {
  const long steps = std::lround(T / tau);
  if (steps < 1 || std::abs(steps * tau - T) > 1e-9 * T) {
    throw ConfigError("final time " + std::to_string(T) + " is not a whole number of steps of " + std::to_string(tau));
  }
  return steps;
}

FinalState simulate_smooth(Model model, const ConvergeSection& cv, int n, double tau, double T, Auditor* auditor) {
  const long steps = step_count(T, tau);
  return model == Model::Crime ? simulate_crime(cv, n, tau, steps, auditor)
                               : simulate_epidemic(cv, n, tau, steps, auditor);
}

GridField restrict_to(const GridField& fine, const GridSpec& coarse) {
  const GridSpec& f = fine.spec();
  if (f.lo != coarse.lo || f.hi != coarse.hi || f.n % coarse.n != 0) {
    throw NonNestedGrids("grid n=" + std::to_string(coarse.n) + " does not share nodes with n=" +
                         std::to_string(f.n));
  }
  const Index stride = f.n / coarse.n;
  GridField out(coarse);
  for (Index j = 0; j < coarse.n; ++j)
    for (Index i = 0; i < coarse.n; ++i) out(i, j) = fine(i * stride, j * stride);
  return out;
}

void fill_orders(ConvergenceTable& table) {
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    auto& row = table.rows[k];
    if (k == 0) {
      row.order_density.reset();
      row.order_field.reset();
      continue;
    }
    const auto& prev = table.rows[k - 1];
    row.order_density = std::log2(prev.err_density / row.err_density);
    row.order_field = std::log2(prev.err_field / row.err_field);
  }
}

void save_reference(const FinalState& s, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write reference cache " + tmp.string());
    out << "SPIMEXREF1\n" << s.densities.size() << " " << s.field.n() << "\n";
    auto dump = [&](const GridField& f) {
      out.write(reinterpret_cast<const char*>(f.values().data()),
                static_cast<std::streamsize>(f.values().size() * sizeof(double)));
    };
    for (const auto& d : s.densities) dump(d);
    dump(s.field);
    if (!out) throw std::runtime_error("cannot write reference cache " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::optional<FinalState> load_reference(const std::filesystem::path& path, const GridSpec& spec,
                                         std::size_t densities) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string magic;
  std::size_t count = 0;
  Index n = 0;
  std::getline(in, magic);
  in >> count >> n;
  in.get();
  if (magic != "SPIMEXREF1" || count != densities || n != spec.n) return std::nullopt;
  auto read = [&](GridField& f) {
    f = GridField(spec);
    in.read(reinterpret_cast<char*>(f.values().data()),
            static_cast<std::streamsize>(f.values().size() * sizeof(double)));
  };
  FinalState s;
  s.densities.resize(count);
  for (auto& d : s.densities) read(d);
  read(s.field);
  if (!in) return std::nullopt;
  return s;
}

ConvergenceTable run_convergence(const ExperimentConfig& cfg, const Logger& log) {
  const ConvergeSection& cv = cfg.converge;
  auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };
  ConvergenceTable table;
  table.model = cv.model;
  table.mode = cv.mode;
  Auditor auditor;
  const std::size_t density_count = cv.model == Model::Crime ? 1 : epidemic::kCompartments;

  const bool spatial = cv.mode == StudyMode::Spatial;
  const int ref_n = spatial ? cv.reference_n : cv.temporal_n;
  const double ref_tau = spatial ? cv.tau : cv.tau_ref;
  const double T = spatial ? cv.T : cv.temporal_T;
  if (spatial) {
    for (int n : cv.resolutions) restrict_to(GridField(GridSpec(ref_n)), GridSpec(n));
  }

  const GridSpec ref_spec(ref_n);
  std::optional<FinalState> reference;
  std::filesystem::path cache_path;
  if (!cv.cache_dir.empty()) {
    cache_path = std::filesystem::path(cv.cache_dir) /
                 ("reference-" + fnv1a_hex(reference_key(cv.model, cv, ref_n, ref_tau, T)) + ".bin");
    reference = load_reference(cache_path, ref_spec, density_count);
  }
  if (reference) {
    table.reference_from_cache = true;
    say("reference loaded from " + cache_path.string());
  } else {
    say("computing reference: n=" + std::to_string(ref_n) + " tau=" + format_real(ref_tau));
    reference = simulate_smooth(cv.model, cv, ref_n, ref_tau, T, &auditor);
    if (!cache_path.empty()) save_reference(*reference, cache_path);
  }

  if (spatial) {
    for (int n : cv.resolutions) {
      const GridSpec spec(n);
      const FinalState s = simulate_smooth(cv.model, cv, n, cv.tau, T, &auditor);
      std::vector<GridField> ref_d;
      for (const auto& d : reference->densities) ref_d.push_back(restrict_to(d, spec));
      ConvergenceRow row;
      row.resolution = spec.h();
      row.err_density = density_error(s.densities, ref_d);
      row.err_field = h1_norm(s.field - restrict_to(reference->field, spec));
      table.rows.push_back(row);
      say("h=1/" + std::to_string(n) + " done");
    }
  } else {
    for (double tau : cv.taus) {
      const FinalState s = simulate_smooth(cv.model, cv, ref_n, tau, T, &auditor);
      ConvergenceRow row;
      row.resolution = tau;
      row.err_density = density_error(s.densities, reference->densities);
      row.err_field = h1_norm(s.field - reference->field);
      table.rows.push_back(row);
      say("tau=" + format_real(tau) + " done");
    }
  }
  fill_orders(table);
  table.audit = auditor.summary();
  return table;
}

Series convergence_series(const ConvergenceTable& table, const ExperimentConfig& cfg) {
  Series s;
  s.seed = cfg.run.seed;
  s.config_hash = config_hash(cfg, "converge.");
  const bool spatial = table.mode == StudyMode::Spatial;
  s.notes = {{"model", table.model == Model::Crime ? "crime" : "epidemic"},
             {"mode", spatial ? "spatial" : "temporal"},
             {"reference", table.reference_from_cache ? "cache" : "computed"}};
  s.columns = {{"h_or_tau", spatial ? "length" : "time"},
               {"err_phi", "L2"},
               {"order_phi", ""},
               {"err_p", "H1"},
               {"order_p", ""}};
  for (const auto& r : table.rows) {
    s.add_row({r.resolution, r.err_density, r.order_density.value_or(std::nan("")), r.err_field,
               r.order_field.value_or(std::nan(""))});
  }
  return s;
}

}  // namespace spimex::harness
