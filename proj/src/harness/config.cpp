#include "spimex/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace spimex::harness {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError(std::string(key) + ": cannot parse '" + std::string(value) + "' as " +
                    std::string(expected));
}

double parse_double(std::string_view key, std::string_view v) {
  // from_chars for doubles is available in libstdc++ 11.
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "a real number");
  return out;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "an integer");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// One entry per configuration key: how to read it and how to print it.
struct Binding {
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
};

using Registry = std::vector<std::pair<std::string, Binding>>;

struct Builder {
  Registry reg;

  void bind(const std::string& key, double& x) {
    reg.push_back({key, {[&x, key](std::string_view v) { x = parse_double(key, v); },
                         [&x] { return format_double(x); }}});
  }
  void bind(const std::string& key, int& x) {
    reg.push_back({key, {[&x, key](std::string_view v) { x = parse_int<int>(key, v); },
                         [&x] { return std::to_string(x); }}});
  }
  void bind(const std::string& key, std::uint64_t& x) {
    reg.push_back({key, {[&x, key](std::string_view v) { x = parse_int<std::uint64_t>(key, v); },
                         [&x] { return std::to_string(x); }}});
  }
  void bind(const std::string& key, bool& x) {
    reg.push_back({key, {[&x, key](std::string_view v) { x = parse_bool(key, v); },
                         [&x] { return std::string(x ? "true" : "false"); }}});
  }
  void bind(const std::string& key, std::string& x) {
    reg.push_back({key, {[&x](std::string_view v) { x = std::string(v); }, [&x] { return x; }}});
  }
  void bind(const std::string& key, std::vector<double>& x) {
    reg.push_back({key, {[&x, key](std::string_view v) {
                           x.clear();
                           for (auto item : split_list(v)) x.push_back(parse_double(key, item));
                         },
                         [&x] {
                           std::string s;
                           for (double d : x) s += (s.empty() ? "" : ", ") + format_double(d);
                           return s;
                         }}});
  }
  void bind(const std::string& key, std::vector<int>& x) {
    reg.push_back({key, {[&x, key](std::string_view v) {
                           x.clear();
                           for (auto item : split_list(v)) x.push_back(parse_int<int>(key, item));
                         },
                         [&x] {
                           std::string s;
                           for (int d : x) s += (s.empty() ? "" : ", ") + std::to_string(d);
                           return s;
                         }}});
  }
  void bind(const std::string& key, Model& x) {
    reg.push_back({key, {[&x, key](std::string_view v) {
                           if (v == "crime") x = Model::Crime;
                           else if (v == "epidemic") x = Model::Epidemic;
                           else bad_value(key, v, "crime|epidemic");
                         },
                         [&x] { return std::string(x == Model::Crime ? "crime" : "epidemic"); }}});
  }
  void bind(const std::string& key, StudyMode& x) {
    reg.push_back({key, {[&x, key](std::string_view v) {
                           if (v == "spatial") x = StudyMode::Spatial;
                           else if (v == "temporal") x = StudyMode::Temporal;
                           else bad_value(key, v, "spatial|temporal");
                         },
                         [&x] { return std::string(x == StudyMode::Spatial ? "spatial" : "temporal"); }}});
  }
  void bind_perturbation(const std::string& section, PerturbationSection& p) {
    bind(section + ".perturbation_count", p.count);
    bind(section + ".height_scale", p.height_scale);
    bind(section + ".width_scale", p.width_scale);
    bind(section + ".images", p.images);
  }
};

Registry registry(ExperimentConfig& c) {
  Builder b;
  b.bind("run.seed", c.run.seed);
  b.bind("run.out", c.run.out);
  b.bind("run.threads", c.run.threads);
  b.bind("run.uncorrected", c.run.uncorrected);

  auto& k = c.crime;
  b.bind("crime.n", k.n);
  b.bind("crime.lo", k.lo);
  b.bind("crime.hi", k.hi);
  b.bind("crime.tau", k.tau);
  b.bind("crime.T", k.T);
  b.bind("crime.D", k.D);
  b.bind("crime.eta", k.eta);
  b.bind("crime.A0", k.A0);
  b.bind("crime.gamma", k.gamma);
  b.bind("crime.omega", k.omega);
  b.bind("crime.kappa", k.kappa);
  b.bind("crime.perturb", k.perturb);
  b.bind_perturbation("crime", k.perturbation);
  b.bind("crime.first_step_substeps", k.first_step_substeps);
  b.bind("crime.snapshot_times", k.snapshot_times);
  b.bind("crime.sample_every", k.sample_every);
  b.bind("crime.blowup_threshold", k.blowup_threshold);

  auto& e = c.epidemic;
  b.bind("epidemic.n", e.n);
  b.bind("epidemic.lo", e.lo);
  b.bind("epidemic.hi", e.hi);
  b.bind("epidemic.tau", e.tau);
  b.bind("epidemic.T", e.T);
  b.bind("epidemic.D", e.D);
  b.bind("epidemic.eta_field", e.eta_field);
  b.bind("epidemic.lambda_inf", e.lambda_inf);
  b.bind("epidemic.beta", e.beta);
  b.bind("epidemic.eta_lat", e.eta_lat);
  b.bind("epidemic.eta_prime", e.eta_prime);
  b.bind("epidemic.rho_sym", e.rho_sym);
  b.bind("epidemic.p_H", e.p_H);
  b.bind("epidemic.delta_I_plus", e.delta_I_plus);
  b.bind("epidemic.delta_I_minus", e.delta_I_minus);
  b.bind("epidemic.delta_A", e.delta_A);
  b.bind("epidemic.delta_H", e.delta_H);
  b.bind("epidemic.delta_R", e.delta_R);
  b.bind("epidemic.delta_P_plus", e.delta_P_plus);
  b.bind("epidemic.delta_P_minus", e.delta_P_minus);
  b.bind("epidemic.p_min", e.p_min);
  b.bind("epidemic.ic", e.ic);
  b.bind("epidemic.uniform_seed", e.uniform_seed);
  b.bind_perturbation("epidemic", e.perturbation);
  b.bind("epidemic.first_step_substeps", e.first_step_substeps);
  b.bind("epidemic.snapshot_times", e.snapshot_times);
  b.bind("epidemic.sample_every", e.sample_every);
  b.bind("epidemic.renormalize", e.renormalize);
  b.bind("epidemic.ode_method", e.ode_method);
  b.bind("epidemic.blowup_threshold", e.blowup_threshold);

  auto& v = c.converge;
  b.bind("converge.model", v.model);
  b.bind("converge.mode", v.mode);
  b.bind("converge.resolutions", v.resolutions);
  b.bind("converge.reference_n", v.reference_n);
  b.bind("converge.tau", v.tau);
  b.bind("converge.T", v.T);
  b.bind("converge.temporal_n", v.temporal_n);
  b.bind("converge.taus", v.taus);
  b.bind("converge.tau_ref", v.tau_ref);
  b.bind("converge.temporal_T", v.temporal_T);
  b.bind("converge.first_step_substeps", v.first_step_substeps);
  b.bind("converge.D_crime", v.D_crime);
  b.bind("converge.D_epidemic", v.D_epidemic);
  b.bind("converge.eta", v.eta);
  b.bind("converge.p0", v.p0);
  b.bind("converge.rate", v.rate);
  b.bind("converge.cache_dir", v.cache_dir);
  return std::move(b.reg);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void check_time(const std::string& section, double tau, double T) {
  require(tau > 0.0 && std::isfinite(tau), section + ".tau must be positive");
  require(T >= tau, section + ".T must be at least tau");
}

}  // namespace

void ExperimentConfig::validate() const {
  require(run.threads >= 1, "run.threads must be >= 1");

  require(crime.n >= 4 && crime.hi > crime.lo, "crime grid: need n >= 4 and hi > lo");
  check_time("crime", crime.tau, crime.T);
  require(!crime.D.empty() && !crime.eta.empty(), "crime.D and crime.eta must not be empty");
  for (double d : crime.D) require(d > 0.0, "crime.D entries must be positive");
  for (double h : crime.eta) require(h > 0.0, "crime.eta entries must be positive");
  require(crime.A0 > 0.0, "crime.A0 must be positive");
  require(crime.first_step_substeps >= 1 && crime.sample_every >= 1, "crime: substeps and sample_every must be >= 1");
  require(crime.perturbation.count >= 1 && crime.perturbation.height_scale >= 0.0 &&
              crime.perturbation.width_scale > 0.0 && crime.perturbation.images >= 0,
          "crime perturbation: need count >= 1, height_scale >= 0, width_scale > 0, images >= 0");

  require(epidemic.n >= 4 && epidemic.hi > epidemic.lo, "epidemic grid: need n >= 4 and hi > lo");
  check_time("epidemic", epidemic.tau, epidemic.T);
  require(!epidemic.D.empty() && !epidemic.eta_field.empty(), "epidemic.D and epidemic.eta_field must not be empty");
  for (double d : epidemic.D) require(d >= 0.0, "epidemic.D entries must be non-negative");
  for (double h : epidemic.eta_field) require(h >= 0.0, "epidemic.eta_field entries must be non-negative");
  require(epidemic.p_min > 0.0, "epidemic.p_min must be positive");
  require(epidemic.ic == "example" || epidemic.ic == "uniform", "epidemic.ic must be example or uniform");
  require(epidemic.ode_method == "ab2" || epidemic.ode_method == "rk4", "epidemic.ode_method must be ab2 or rk4");
  require(epidemic.uniform_seed >= 0.0 && epidemic.uniform_seed < 1.0, "epidemic.uniform_seed must lie in [0, 1)");
  require(epidemic.first_step_substeps >= 1 && epidemic.sample_every >= 1,
          "epidemic: substeps and sample_every must be >= 1");
  require(epidemic.perturbation.count >= 1 && epidemic.perturbation.height_scale >= 0.0 &&
              epidemic.perturbation.width_scale > 0.0 && epidemic.perturbation.images >= 0,
          "epidemic perturbation: need count >= 1, height_scale >= 0, width_scale > 0, images >= 0");

  require(!converge.resolutions.empty() && !converge.taus.empty(), "converge: resolutions and taus must not be empty");
  for (int n : converge.resolutions) require(n >= 4, "converge.resolutions entries must be >= 4");
  require(converge.reference_n >= 4 && converge.temporal_n >= 4, "converge: grid sizes must be >= 4");
  check_time("converge", converge.tau, converge.T);
  require(converge.tau_ref > 0.0 && converge.temporal_T > 0.0, "converge: tau_ref and temporal_T must be positive");
  for (double t : converge.taus) require(t > 0.0 && converge.temporal_T >= t, "converge.taus entries must lie in (0, temporal_T]");
  require(converge.first_step_substeps >= 1, "converge.first_step_substeps must be >= 1");
  require(converge.p0 > 0.0 && converge.D_crime > 0.0 && converge.D_epidemic >= 0.0 && converge.eta > 0.0,
          "converge: model parameters out of range");
}

void assign(ExperimentConfig& cfg, std::string_view dotted_key, std::string_view value) {
  for (auto& [key, binding] : registry(cfg)) {
    if (key == dotted_key) {
      binding.set(trim(value));
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + std::string(dotted_key) + "'");
}

ExperimentConfig parse_config(std::string_view text, std::string_view origin) {
  ExperimentConfig cfg;
  std::string section;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto c = line.find_first_of("#;"); c != std::string_view::npos) line = line.substr(0, c);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "run" && section != "crime" && section != "epidemic" && section != "converge") {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
    try {
      assign(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> describe(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  std::vector<std::pair<std::string, std::string>> out;
  for (auto& [key, binding] : registry(copy)) out.emplace_back(key, binding.get());
  return out;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& cfg, std::string_view prefix) {
  std::string canonical;
  for (const auto& [key, value] : describe(cfg)) {
    if (key.rfind(prefix, 0) != 0) continue;
    // Output location and worker count do not change results.
    if (key == "run.out" || key == "run.threads" || key == "converge.cache_dir") continue;
    canonical += key + "=" + value + "\n";
  }
  return fnv1a_hex(canonical);
}

}  // namespace spimex::harness
