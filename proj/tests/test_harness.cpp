#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "spimex/harness/config.hpp"
#include "spimex/harness/convergence.hpp"
#include "spimex/harness/experiments.hpp"
#include "spimex/harness/export.hpp"
#include "spimex/harness/initial.hpp"
#include "test_support.hpp"

using namespace spimex;
using namespace spimex::harness;
namespace fs = std::filesystem;

namespace {

struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& name)
      : path(fs::temp_directory_path() / ("spimex-test-" + std::to_string(::getpid()) + "-" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
};

std::string slurp_payload(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream out;
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("# written:", 0) == 0) continue;
    out << line << '\n';
  }
  return out.str();
}

std::size_t column(const CsvContent& csv, const std::string& name) {
  for (std::size_t k = 0; k < csv.column_names.size(); ++k)
    if (csv.column_names[k] == name) return k;
  FAIL("missing column " << name);
  return 0;
}

ExperimentConfig small_crime(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.run.out = out.string();
  cfg.crime.n = 16;
  cfg.crime.tau = 0.01;
  cfg.crime.T = 1.0;
  cfg.crime.D = {0.1};
  cfg.crime.eta = {0.2};
  cfg.crime.perturbation.height_scale = 0.2;
  cfg.crime.perturbation.width_scale = 0.5;
  cfg.crime.snapshot_times = {1.0};
  cfg.crime.sample_every = 1;
  return cfg;
}

ExperimentConfig small_epidemic(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.run.out = out.string();
  cfg.epidemic.n = 16;
  cfg.epidemic.T = 3.0;
  cfg.epidemic.D = {0.01};
  cfg.epidemic.eta_field = {0.5};
  cfg.epidemic.snapshot_times = {3.0};
  cfg.epidemic.sample_every = 1;
  cfg.epidemic.perturbation.images = 2;
  return cfg;
}

}  // namespace

TEST_CASE("configuration parsing") {
  SUBCASE("defaults are valid") { CHECK_NOTHROW(ExperimentConfig{}.validate()); }

  SUBCASE("sections, lists and comments") {
    const auto cfg = parse_config(
        "# leading comment\n[run]\nseed = 7\nuncorrected = true ; trailing\n"
        "[crime]\nD = 0.5, 0.25\nn = 64\n[converge]\nmodel = epidemic\nmode = temporal\n");
    CHECK(cfg.run.seed == 7u);
    CHECK(cfg.run.uncorrected);
    CHECK(cfg.crime.D == std::vector<double>{0.5, 0.25});
    CHECK(cfg.crime.n == 64);
    CHECK(cfg.converge.model == Model::Epidemic);
    CHECK(cfg.converge.mode == StudyMode::Temporal);
    CHECK(cfg.converge.tau_ref == 1e-5);
  }

  SUBCASE("errors carry the origin and line") {
    auto message = [](const std::string& text) {
      try {
        parse_config(text, "cfg.ini");
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("[crime]\nbogus = 1\n").find("cfg.ini:2") != std::string::npos);
    CHECK(message("[nowhere]\n").find("unknown section") != std::string::npos);
    CHECK(message("n = 3\n").find("outside") != std::string::npos);
    CHECK(message("[crime]\nn 3\n").find("cfg.ini:2") != std::string::npos);
    CHECK(message("[crime]\nn = three\n").find("cannot parse") != std::string::npos);
    CHECK(message("[crime]\ntau = 0\n").find("tau") != std::string::npos);
    CHECK(message("[crime]\ntau = 10\nT = 1\n") != "");
  }

  SUBCASE("describe round-trips and the hash ignores output locations") {
    ExperimentConfig cfg;
    assign(cfg, "epidemic.D", "0.1, 0.2");
    assign(cfg, "crime.perturb", "false");
    std::string text, section;
    for (const auto& [key, value] : describe(cfg)) {
      const auto dot = key.find('.');
      if (key.substr(0, dot) != section) {
        section = key.substr(0, dot);
        text += "[" + section + "]\n";
      }
      text += key.substr(dot + 1) + " = " + value + "\n";
    }
    const ExperimentConfig back = parse_config(text);
    CHECK(config_hash(back) == config_hash(cfg));
    CHECK(back.epidemic.D == cfg.epidemic.D);

    ExperimentConfig moved = cfg;
    moved.run.out = "elsewhere";
    moved.run.threads = 3;
    CHECK(config_hash(moved) == config_hash(cfg));
    moved.run.seed += 1;
    CHECK(config_hash(moved) != config_hash(cfg));
  }
}

TEST_CASE("uniform source") {
  // The C++ standard fixes the 10000th output of a default-seeded mt19937_64.
  UniformSource u(5489u);
  for (int k = 0; k < 9999; ++k) u.next();
  CHECK(u.next() == static_cast<double>(9981545732273789042ull >> 11) * 0x1.0p-53);

  UniformSource a(11), b(11);
  for (int k = 0; k < 100; ++k) {
    const double x = a.next();
    CHECK(x == b.next());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("gaussian perturbation") {
  const GridSpec spec(12, -1.0, 2.0);

  SUBCASE("single gaussian matches the closed form") {
    const std::uint64_t seed = 424242;
    std::mt19937_64 raw(seed);
    auto r = [&] { return static_cast<double>(raw() >> 11) / 9007199254740992.0; };
    const double h = 0.7 * r(), sigma = 0.3 * r(), xc = -1.0 + 3.0 * r(), yc = -1.0 + 3.0 * r();

    UniformSource rng(seed);
    const int L = 2;
    const GridField f = gaussian_perturbation(rng, 1, 0.7, 0.3, spec, L);
    double worst = 0.0;
    for (Index j = 0; j < spec.n; ++j)
      for (Index i = 0; i < spec.n; ++i) {
        const double x = -1.0 + 0.25 * i, y = -1.0 + 0.25 * j;
        double expect = 0.0;
        for (int a = -L; a <= L; ++a)
          for (int b = -L; b <= L; ++b) {
            const double dx = x - xc + 3.0 * a, dy = y - yc + 3.0 * b;
            expect += h * std::exp(-(dx * dx + dy * dy) / sigma);
          }
        worst = std::max(worst, std::abs(f(i, j) - expect));
      }
    CHECK(worst <= 1e-14);
  }

  SUBCASE("zero height gives a zero field") {
    UniformSource rng(3);
    CHECK(linf_norm(gaussian_perturbation(rng, 30, 0.0, 0.01, spec, 1)) == 0.0);
  }

  SUBCASE("same seed, same field") {
    UniformSource a(99), b(99);
    const GridField fa = gaussian_perturbation(a, 30, 0.02, 0.005, spec, 1);
    const GridField fb = gaussian_perturbation(b, 30, 0.02, 0.005, spec, 1);
    CHECK(testing::max_abs_diff(fa, fb) == 0.0);
  }
}

TEST_CASE("csv export") {
  ScratchDir dir("csv");

  SUBCASE("empty series is header only") {
    Series s;
    s.seed = 5;
    s.config_hash = "abc";
    s.columns = {{"t", "time"}, {"m", "mass"}};
    export_csv(s, dir.path / "nested" / "empty.csv");
    const CsvContent csv = read_csv(dir.path / "nested" / "empty.csv");
    CHECK(csv.rows.empty());
    CHECK(csv.column_names == std::vector<std::string>{"t", "m"});
    int written = 0;
    bool seed = false;
    for (const auto& line : csv.header_lines) {
      written += line.rfind("# written:", 0) == 0;
      seed = seed || line == "# seed: 5";
    }
    CHECK(written == 1);
    CHECK(seed);
  }

  SUBCASE("convergence table layout") {
    ConvergenceTable t;
    t.rows = {{0.5, 4.0, 8.0, {}, {}}, {0.25, 1.0, 2.0, {}, {}}, {0.125, 0.25, 1.0, {}, {}}};
    fill_orders(t);
    CHECK_FALSE(t.rows[0].order_density);
    CHECK(*t.rows[1].order_density == doctest::Approx(2.0));
    CHECK(*t.rows[2].order_field == doctest::Approx(1.0));

    const ExperimentConfig cfg;
    export_csv(convergence_series(t, cfg), dir.path / "table.csv");
    const CsvContent csv = read_csv(dir.path / "table.csv");
    CHECK(csv.column_names == std::vector<std::string>{"h_or_tau", "err_phi", "order_phi", "err_p", "order_p"});
    REQUIRE(csv.rows.size() == 3);
    CHECK(std::isnan(csv.rows[0][2]));
    CHECK(csv.rows[2][1] == 0.25);
  }

  SUBCASE("values survive at full precision") {
    Series s;
    s.columns = {{"x", ""}};
    s.add_row({0.1});
    s.add_row({1.0 / 3.0});
    export_csv(s, dir.path / "precise.csv");
    const CsvContent csv = read_csv(dir.path / "precise.csv");
    CHECK(csv.rows[1][0] == 1.0 / 3.0);
  }

  SUBCASE("unwritable path surfaces the system error") {
    Series s;
    std::ofstream(dir.path / "file") << "x";
    CHECK_THROWS_AS(export_csv(s, dir.path / "file" / "below.csv"), std::exception);
  }
}

TEST_CASE("heatmap export") {
  ScratchDir dir("pgm");
  const GridSpec spec(8);

  SUBCASE("constant field") {
    export_heatmap(GridField(spec, 2.5), dir.path / "flat.pgm");
    const Heatmap h = read_heatmap(dir.path / "flat.pgm");
    CHECK(h.min == 2.5);
    CHECK(h.max == 2.5);
    for (auto px : h.pixels) CHECK(px == h.pixels.front());
    CHECK(testing::max_abs_diff(h.to_field(spec), GridField(spec, 2.5)) == 0.0);
  }

  SUBCASE("round trip within the quantisation bound") {
    std::mt19937_64 rng(4);
    const GridField f = testing::random_field(spec, rng, -3.0, 5.0);
    export_heatmap(f, dir.path / "f.pgm", "test");
    const Heatmap h = read_heatmap(dir.path / "f.pgm");
    CHECK(h.width == 8);
    CHECK(h.height == 8);
    CHECK(h.min == f.min());
    CHECK(h.max == f.max());
    CHECK(testing::max_abs_diff(h.to_field(spec), f) <= (h.max - h.min) / 131070.0 * (1 + 1e-12));
    // Node (0, n-1) is the top-left pixel.
    const double top_left = h.min + (h.max - h.min) * h.pixels[0] / 65535.0;
    CHECK(std::abs(top_left - f(0, 7)) <= (h.max - h.min) / 131070.0 * (1 + 1e-12));
  }
}

TEST_CASE("restriction to coarse grids") {
  const GridSpec fine(16), coarse(4);
  const GridField f = GridField::from_function(fine, [](double x, double y) { return 10 * x + y; });
  const GridField c = restrict_to(f, coarse);
  for (Index j = 0; j < 4; ++j)
    for (Index i = 0; i < 4; ++i) CHECK(c(i, j) == f(4 * i, 4 * j));
  CHECK_THROWS_AS(restrict_to(f, GridSpec(6)), NonNestedGrids);
  CHECK_THROWS_AS(restrict_to(f, GridSpec(4, 0.0, 2.0)), NonNestedGrids);
  CHECK_THROWS_AS(step_count(1.0, 0.3), ConfigError);
  CHECK(step_count(0.1, 1e-4) == 1000);
}

TEST_CASE("crime runs") {
  ScratchDir dir("crime");

  SUBCASE("unperturbed equilibrium stays put") {
    ExperimentConfig cfg = small_crime(dir.path);
    cfg.crime.perturb = false;
    const CellOutcome out = run_crime_cell(cfg, 0.1, 0.2);
    CHECK(out.steps == 100);
    const CrimeSection& c = cfg.crime;
    const double a_bar = c.kappa * c.gamma / c.omega;
    const double rho_bar = c.gamma / (a_bar + c.A0);
    const CsvContent csv = read_csv(out.dir / "series.csv");
    REQUIRE(csv.rows.size() == 101);
    for (const auto& row : csv.rows) {
      CHECK(std::abs(row[column(csv, "rho_min")] - rho_bar) <= 1e-8);
      CHECK(std::abs(row[column(csv, "rho_max")] - rho_bar) <= 1e-8);
      CHECK(std::abs(row[column(csv, "A_min")] - a_bar) <= 1e-8);
      CHECK(std::abs(row[column(csv, "A_max")] - a_bar) <= 1e-8);
    }
  }

  SUBCASE("density mass follows its source") {
    ExperimentConfig cfg = small_crime(dir.path);
    const CellOutcome out = run_crime_cell(cfg, 0.1, 0.2);
    const CsvContent csv = read_csv(out.dir / "series.csv");
    const auto mass = column(csv, "rho_mass"), source = column(csv, "rho_source"), time = column(csv, "time");
    double worst = 0.0, scale = 0.0;
    for (std::size_t k = 1; k + 1 < csv.rows.size(); ++k) {
      const double dt = csv.rows[k + 1][time] - csv.rows[k - 1][time];
      const double rate = (csv.rows[k + 1][mass] - csv.rows[k - 1][mass]) / dt;
      worst = std::max(worst, std::abs(rate - csv.rows[k][source]));
      scale = std::max(scale, std::abs(csv.rows[k][source]));
    }
    REQUIRE(scale > 1e-3);
    CHECK(worst <= 1e-3 * scale);
    CHECK(fs::exists(out.dir / "rho_t1.pgm"));
    CHECK(fs::exists(out.dir / "A_t1.pgm"));
    CHECK(out.audit.steps == 100);
  }

  SUBCASE("sweep is deterministic across thread counts") {
    ExperimentConfig one = small_crime(dir.path / "one");
    one.crime.D = {0.1, 0.05};
    one.crime.T = 0.2;
    ExperimentConfig two = one;
    two.run.out = (dir.path / "two").string();
    two.run.threads = 2;
    const SweepReport a = run_crime(one), b = run_crime(two);
    REQUIRE(a.cells.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(slurp_payload(a.cells[k].dir / "series.csv") == slurp_payload(b.cells[k].dir / "series.csv"));
    }
    CHECK_FALSE(a.any_diverged());
  }

  SUBCASE("uncorrected divergence keeps the last valid state") {
    ExperimentConfig cfg = small_crime(dir.path);
    cfg.run.uncorrected = true;
    cfg.crime.blowup_threshold = 0.5;
    const CellOutcome out = run_crime_cell(cfg, 0.1, 0.2);
    REQUIRE(out.diverged);
    CHECK(fs::exists(out.dir / "rho_last_valid.pgm"));
    CHECK(fs::exists(out.dir / "series.csv"));
  }
}

TEST_CASE("epidemic runs") {
  ScratchDir dir("epidemic");

  SUBCASE("seeded run passes its audits") {
    ExperimentConfig cfg = small_epidemic(dir.path);
    const CellOutcome out = run_epidemic_cell(cfg, 0.01, 0.5);
    CHECK(out.steps == 30);
    CHECK(out.audit.max_mass_drift <= 1e-11);
    const CsvContent csv = read_csv(out.dir / "series.csv");
    for (const auto& row : csv.rows) {
      CHECK(std::abs(row[column(csv, "mass_drift_rel")]) <= 1e-11);
      CHECK(row[column(csv, "min_psi")] >= 0.0);
      CHECK(row[column(csv, "xi")] >= 0.0);
      CHECK(std::isfinite(row[column(csv, "carriers")]));
    }
    CHECK(fs::exists(out.dir / "mobile_t3.pgm"));
  }

  SUBCASE("uniform state follows the homogeneous model") {
    ExperimentConfig cfg = small_epidemic(dir.path);
    cfg.epidemic.ic = "uniform";
    const CellOutcome out = run_epidemic_cell(cfg, 0.01, 0.5);
    const CsvContent csv = read_csv(out.dir / "series.csv");
    const auto pde = column(csv, "carriers"), ode = column(csv, "ode_carriers");
    for (const auto& row : csv.rows) CHECK(std::abs(row[pde] - row[ode]) <= 1e-12 * row[ode]);
  }

  SUBCASE("ode reference file") {
    ExperimentConfig cfg = small_epidemic(dir.path);
    const fs::path p = run_ode_reference(cfg);
    const CsvContent csv = read_csv(p);
    CHECK(csv.rows.size() == 31);
    const auto total = column(csv, "total");
    for (const auto& row : csv.rows) CHECK(row[total] == doctest::Approx(csv.rows[0][total]).epsilon(1e-12));
  }
}
