#include "spimex/harness/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "spimex/harness/export.hpp"
#include "spimex/harness/initial.hpp"

namespace spimex::harness {

namespace {

std::string tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::filesystem::path cell_dir(const ExperimentConfig& cfg, const char* model, double D, double eta) {
  return std::filesystem::path(cfg.run.out) / model / ("D" + tag(D) + "_eta" + tag(eta));
}

// Step index -> label for every requested snapshot time.
std::map<long, std::string> snapshot_steps(const std::vector<double>& times, double tau) {
  std::map<long, std::string> out;
  for (double t : times) out.emplace(std::lround(t / tau), "t" + tag(t));
  return out;
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

bool sample_now(long step, long steps, int every) { return step % every == 0 || step == steps; }

Series base_series(const ExperimentConfig& cfg, const char* model, double D, double eta,
                   std::vector<Column> columns) {
  Series s;
  s.seed = cfg.run.seed;
  s.config_hash = config_hash(cfg);
  s.notes = {{"model", model},
             {"D", tag(D)},
             {"eta", tag(eta)},
             {"mode", cfg.run.uncorrected ? "uncorrected" : "corrected"}};
  s.columns = std::move(columns);
  return s;
}

GridField mobile_density(const epidemic::Compartments& psi) {
  using namespace epidemic;
  GridField out(psi[S].spec());
  for (int c : kMobileCompartment) out.values() += psi[c].values();
  return out;
}

epidemic::OdeVector spatial_mean(const epidemic::EpidemicState& s) {
  epidemic::OdeVector y{};
  for (int k = 0; k < epidemic::kCompartments; ++k) y[k] = total_mass(s.psi[k]) / s.psi[k].spec().area();
  return y;
}

epidemic::OdeOptions ode_options(const EpidemicSection& e) {
  epidemic::OdeOptions o;
  o.tau = e.tau;
  o.T = e.T;
  o.sample_interval = e.tau * e.sample_every;
  o.method = e.ode_method == "rk4" ? epidemic::OdeMethod::RungeKutta4 : epidemic::OdeMethod::AdamsBashforth2;
  o.first_step_substeps = e.first_step_substeps;
  return o;
}

double ode_carriers(const epidemic::OdeVector& y) {
  using namespace epidemic;
  return y[E] + y[P] + y[A] + y[Im] + y[Ip];
}

template <typename Cell>
SweepReport run_sweep(const std::vector<double>& Ds, const std::vector<double>& etas, int threads,
                      const Logger& log, Cell cell) {
  std::vector<std::pair<double, double>> jobs;
  for (double D : Ds)
    for (double eta : etas) jobs.emplace_back(D, eta);

  std::mutex log_mutex;
  const Logger safe_log = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    log(msg);
  };

  SweepReport report;
  report.cells.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size() && !failed; k = next++) {
      try {
        report.cells[k] = cell(jobs[k].first, jobs[k].second, safe_log);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed = true;
      }
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return report;
}

}  // namespace

bool SweepReport::any_diverged() const {
  return std::any_of(cells.begin(), cells.end(), [](const CellOutcome& c) { return c.diverged.has_value(); });
}

crime::CrimeState crime_initial_state(const ExperimentConfig& cfg, const GridSpec& spec) {
  const CrimeSection& c = cfg.crime;
  GridField delta(spec);
  if (c.perturb) {
    UniformSource rng(cfg.run.seed);
    const auto& pt = c.perturbation;
    delta = gaussian_perturbation(rng, pt.count, pt.height_scale, pt.width_scale, spec, pt.images);
  }
  return perturbed_crime_equilibrium(spec, c.A0, crime::CrimeForm{c.gamma, c.omega, c.kappa}, delta);
}

epidemic::EpidemicParams epidemic_params(const ExperimentConfig& cfg, const GridSpec& spec, double D,
                                         double eta_field) {
  const EpidemicSection& e = cfg.epidemic;
  epidemic::EpidemicParams q = epidemic::EpidemicParams::published(spec, D, eta_field);
  q.lambda_inf = e.lambda_inf;
  q.beta = e.beta;
  q.eta_lat = e.eta_lat;
  q.eta_prime = e.eta_prime;
  q.rho_sym = e.rho_sym;
  q.p_H = e.p_H;
  q.delta_I_plus = e.delta_I_plus;
  q.delta_I_minus = e.delta_I_minus;
  q.delta_A = e.delta_A;
  q.delta_H = e.delta_H;
  q.delta_R = e.delta_R;
  q.delta_P_plus = e.delta_P_plus;
  q.delta_P_minus = e.delta_P_minus;
  q.p0 = GridField(spec, e.p_min);
  q.validate();
  return q;
}

epidemic::EpidemicState epidemic_initial_state(const ExperimentConfig& cfg, const GridSpec& spec,
                                               const epidemic::EpidemicParams& params) {
  const EpidemicSection& e = cfg.epidemic;
  if (e.ic == "uniform") return uniform_epidemic(spec, params, e.uniform_seed);
  UniformSource rng(cfg.run.seed);
  const auto& pt = e.perturbation;
  return seeded_epidemic(rng, spec, params, pt.count, pt.height_scale, pt.width_scale, pt.images);
}

CellOutcome run_crime_cell(const ExperimentConfig& cfg, double D, double eta, const Logger& log) {
  const CrimeSection& c = cfg.crime;
  const GridSpec spec(c.n, c.lo, c.hi);
  const SpectralPlan plan(spec);
  const auto params =
      crime::CrimeParams::crime(D, eta, GridField(spec, c.A0), crime::CrimeForm{c.gamma, c.omega, c.kappa});
  const long steps = step_count(c.T, c.tau);
  const auto snaps = snapshot_steps(c.snapshot_times, c.tau);

  CellOutcome out;
  out.D = D;
  out.eta = eta;
  out.dir = cell_dir(cfg, "crime", D, eta);
  std::filesystem::create_directories(out.dir);
  const std::string who = "crime D=" + tag(D) + " eta=" + tag(eta);

  Series series = base_series(cfg, "crime", D, eta,
                              {{"step", ""},
                               {"time", "time"},
                               {"rho_min", ""},
                               {"rho_max", ""},
                               {"rho_mass", "mass"},
                               {"A_min", ""},
                               {"A_max", ""},
                               {"A_mass", "mass"},
                               {"rho_source", "mass/time"},
                               {"h1_newton", "iterations"}});
  auto record = [&](const crime::CrimeState& s, int newton) {
    const double source = total_mass(crime::reaction_terms(s.phi, s.p, params).phi);
    series.add_row({static_cast<double>(s.step), s.time, s.phi.min(), s.phi.max(), total_mass(s.phi), s.p.min(),
                    s.p.max(), total_mass(s.p), source, static_cast<double>(newton)});
  };
  auto snapshot = [&](const crime::CrimeState& s, const std::string& label) {
    export_heatmap(s.phi, out.dir / ("rho_" + label + ".pgm"), "rho " + label);
    export_heatmap(s.p, out.dir / ("A_" + label + ".pgm"), "A " + label);
  };

  crime::CrimeState state = crime_initial_state(cfg, spec);
  record(state, 0);
  if (auto it = snaps.find(0); it != snaps.end()) snapshot(state, it->second);

  Auditor auditor;
  try {
    for (long k = 0; k < steps; ++k) {
      int newton = 0;
      if (cfg.run.uncorrected) {
        try {
          state = crime::step_uncorrected(state, params, c.tau, plan, c.blowup_threshold).state;
        } catch (const Diverged& e) {
          out.diverged = e.what();
          out.diverged_time = e.time();
          snapshot(state, "last_valid");
          say(log, who + ": " + e.what());
          break;
        }
      } else {
        crime::StepResult r = k == 0 ? crime::advance_first_interval(state, params, c.tau, c.first_step_substeps, plan)
                                     : crime::step(state, params, c.tau, plan);
        auditor.check(r);
        newton = r.projection.newton_iterations;
        state = std::move(r.state);
      }
      if (sample_now(k + 1, steps, c.sample_every)) record(state, newton);
      if (auto it = snaps.find(k + 1); it != snaps.end()) snapshot(state, it->second);
    }
  } catch (const InvariantViolation&) {
    export_csv(series, out.dir / "series.csv");
    throw;
  }
  export_csv(series, out.dir / "series.csv");
  out.steps = state.step;
  out.final_time = state.time;
  out.audit = auditor.summary();
  say(log, who + ": " + std::to_string(out.steps) + " steps");
  return out;
}

CellOutcome run_epidemic_cell(const ExperimentConfig& cfg, double D, double eta_field, const Logger& log) {
  using namespace epidemic;
  const EpidemicSection& e = cfg.epidemic;
  const GridSpec spec(e.n, e.lo, e.hi);
  const SpectralPlan plan(spec);
  const EpidemicParams params = epidemic_params(cfg, spec, D, eta_field);
  const long steps = step_count(e.T, e.tau);
  const auto snaps = snapshot_steps(e.snapshot_times, e.tau);

  CellOutcome out;
  out.D = D;
  out.eta = eta_field;
  out.dir = cell_dir(cfg, "epidemic", D, eta_field);
  std::filesystem::create_directories(out.dir);
  const std::string who = "epidemic D=" + tag(D) + " eta=" + tag(eta_field);

  EpidemicState state = epidemic_initial_state(cfg, spec, params);
  const OdeVector y0 = spatial_mean(state);
  const std::vector<OdeSample> ode = ode_reference(y0, params, ode_options(e));
  double ode_total = 0.0;
  for (double v : y0) ode_total += v;
  // Same units as the PDE column: a fraction of the initial mass, or a mass over the domain.
  const double ode_scale = e.renormalize ? 1.0 / ode_total : spec.area();
  std::size_t ode_row = 0;

  Series series = base_series(cfg, "epidemic", D, eta_field,
                              {{"step", ""},
                               {"time", "time"},
                               {"carriers", e.renormalize ? "fraction" : "mass"},
                               {"ode_carriers", e.renormalize ? "fraction" : "mass"},
                               {"total_mass", "mass"},
                               {"mass_drift_rel", ""},
                               {"min_psi", ""},
                               {"min_p", ""},
                               {"xi", ""},
                               {"scalar_newton", "iterations"},
                               {"h1_newton", "iterations"}});
  auto record = [&](const EpidemicState& s, double lowest, double xi, int scalar, int newton) {
    const double mass = total_compartment_mass(s.psi);
    const double reference =
        ode_row < ode.size() ? ode_carriers(ode[ode_row].y) * ode_scale : std::nan("");
    ++ode_row;
    series.add_row({static_cast<double>(s.step), s.time, virus_carriers(s, e.renormalize), reference, mass,
                    (mass - s.mass0) / s.mass0, lowest, s.p.min(), xi, static_cast<double>(scalar),
                    static_cast<double>(newton)});
  };
  auto lowest_density = [](const EpidemicState& s) {
    double m = s.psi[0].min();
    for (const auto& f : s.psi) m = std::min(m, f.min());
    return m;
  };
  auto snapshot = [&](const EpidemicState& s, const std::string& label) {
    export_heatmap(mobile_density(s.psi), out.dir / ("mobile_" + label + ".pgm"), "mobile density " + label);
    export_heatmap(s.p, out.dir / ("p_" + label + ".pgm"), "p " + label);
  };

  record(state, lowest_density(state), 0.0, 0, 0);
  if (auto it = snaps.find(0); it != snaps.end()) snapshot(state, it->second);

  Auditor auditor;
  try {
    for (long k = 0; k < steps; ++k) {
      double lowest = 0.0, xi = 0.0;
      int scalar = 0, newton = 0;
      if (cfg.run.uncorrected) {
        try {
          UncorrectedResult r = step_epi_uncorrected(state, params, e.tau, plan, e.blowup_threshold);
          lowest = r.min_value;
          state = std::move(r.state);
        } catch (const Diverged& err) {
          out.diverged = err.what();
          out.diverged_time = err.time();
          snapshot(state, "last_valid");
          say(log, who + ": " + err.what());
          break;
        }
      } else {
        StepResult r = k == 0 ? advance_first_interval(state, params, e.tau, e.first_step_substeps, plan)
                              : step_epi(state, params, e.tau, plan);
        auditor.check(r);
        xi = r.projection.multiplier_xi;
        scalar = r.projection.scalar_newton_iterations;
        newton = r.projection.newton_iterations;
        state = std::move(r.state);
        lowest = lowest_density(state);
      }
      if (sample_now(k + 1, steps, e.sample_every)) record(state, lowest, xi, scalar, newton);
      if (auto it = snaps.find(k + 1); it != snaps.end()) snapshot(state, it->second);
    }
  } catch (const InvariantViolation&) {
    export_csv(series, out.dir / "series.csv");
    throw;
  }
  export_csv(series, out.dir / "series.csv");
  out.steps = state.step;
  out.final_time = state.time;
  out.audit = auditor.summary();
  say(log, who + ": " + std::to_string(out.steps) + " steps");
  return out;
}

SweepReport run_crime(const ExperimentConfig& cfg, const Logger& log) {
  return run_sweep(cfg.crime.D, cfg.crime.eta, cfg.run.threads, log,
                   [&](double D, double eta, const Logger& l) { return run_crime_cell(cfg, D, eta, l); });
}

SweepReport run_epidemic(const ExperimentConfig& cfg, const Logger& log) {
  return run_sweep(cfg.epidemic.D, cfg.epidemic.eta_field, cfg.run.threads, log,
                   [&](double D, double eta, const Logger& l) { return run_epidemic_cell(cfg, D, eta, l); });
}

std::filesystem::path run_ode_reference(const ExperimentConfig& cfg, const Logger& log) {
  using namespace epidemic;
  const EpidemicSection& e = cfg.epidemic;
  const GridSpec spec(e.n, e.lo, e.hi);
  const EpidemicParams params = epidemic_params(cfg, spec, e.D.front(), e.eta_field.front());
  const OdeVector y0 = spatial_mean(epidemic_initial_state(cfg, spec, params));

  Series series;
  series.seed = cfg.run.seed;
  series.config_hash = config_hash(cfg);
  series.notes = {{"model", "homogeneous epidemic"}, {"method", e.ode_method}};
  series.columns.push_back({"time", "time"});
  for (const char* name : kCompartmentNames) series.columns.push_back({name, "fraction"});
  series.columns.push_back({"carriers", "fraction"});
  series.columns.push_back({"total", "fraction"});
  for (const OdeSample& s : ode_reference(y0, params, ode_options(e))) {
    std::vector<double> row{s.time};
    double total = 0.0;
    for (double v : s.y) {
      row.push_back(v);
      total += v;
    }
    row.push_back(ode_carriers(s.y));
    row.push_back(total);
    series.add_row(std::move(row));
  }
  const auto path = std::filesystem::path(cfg.run.out) / "ode" / "reference.csv";
  export_csv(series, path);
  say(log, "ode reference: " + std::to_string(series.rows.size()) + " samples written to " + path.string());
  return path;
}

}  // namespace spimex::harness
