#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "s3p/harness.hpp"

using namespace s3p;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string suite;
  double tol_scale = 0;
  std::string pole;
  int L = 0;
};

SuiteConfig resolve(const Options& o) {
  SuiteConfig c = o.config.empty() ? SuiteConfig{} : load_config(o.config);
  if (o.seed_set) c.seed = o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.tol_scale != 0) c.tol_scale = o.tol_scale;
  c.validate();
  return c;
}

bool run_and_emit(const SuiteConfig& c, const std::string& suite) {
  auto rep = run_suite(c, suite);
  auto paths = emit_report(rep, c.output_dir);
  for (const auto& e : rep.entries)
    if (!e.pass)
      std::printf("FAIL %s [%s] computed %.6g expected %.6g tol %.3g%s%s\n", e.id.c_str(), e.anchor.c_str(), e.computed,
                  e.expected, e.tolerance, e.error.empty() ? "" : " error: ", e.error.c_str());
  std::printf("%s: %zu entries, %zu failed, report %s\n", suite.c_str(), rep.entries.size(), rep.failures(),
              paths.front().c_str());
  return rep.passed();
}

int solve_pole(const SuiteConfig& c, const Options& o) {
  const int L = o.L > 0 ? o.L : c.truncation;
  auto s = nu_solve(parse_pole(o.pole), L);
  const std::string text = nu_solution_text(s);
  std::fputs(text.c_str(), stdout);
  std::filesystem::create_directories(c.output_dir);
  const auto dir = std::filesystem::path(c.output_dir);
  std::ofstream out(dir / "nu_solution.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "nu_solution.json").string());
  out << text;
  write_nu_coefficients((dir / "nu_coefficients.bin").string(), s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical checks for the Paneitz operator and its Green's function on the round 3-sphere"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "key = value configuration file");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { o.seed = s, o.seed_set = true; }, "seed for random perturbations and points");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--tol-scale", o.tol_scale, "multiplies every tolerance");

  struct Sub {
    const char* name;
    const char* suite;
    const char* help;
  };
  const Sub subs[] = {
      {"verify-expansion", "expansion-validate", "finite-difference slopes of the metric expansions"},
      {"first-variation", "first-variation", "first variation of G and nu at the pole"},
      {"second-variation", "second-variation", "sign and gauge nullity of the second variation"},
      {"symbol-check", "symbol-check", "symbol identities and the Fourier route"},
  };
  std::string chosen_suite;
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    sc->callback([&chosen_suite, s] { chosen_suite = s.suite; });
  }
  auto* nu = app.add_subcommand("nu-solve", "nu-solve suite, or a single pole with --pole");
  nu->add_option("--pole", o.pole, "N, S or north-chart coordinates x,y,z");
  nu->add_option("--L", o.L, "harmonic truncation degree")->check(CLI::Range(2, 200));
  nu->callback([&] { chosen_suite = "nu-solve"; });
  auto* report = app.add_subcommand("report", "run one suite, or every suite with --suite all");
  report->add_option("--suite", o.suite, "suite id or all")->required();
  report->callback([&] { chosen_suite = o.suite; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const SuiteConfig c = resolve(o);
    if (chosen_suite == "nu-solve" && !o.pole.empty()) return solve_pole(c, o);
    std::vector<std::string> suites;
    if (chosen_suite == "all")
      suites = suite_ids();
    else if (std::find(suite_ids().begin(), suite_ids().end(), chosen_suite) != suite_ids().end())
      suites = {chosen_suite};
    else
      throw ConfigError("unknown suite '" + chosen_suite + "'");
    bool ok = true;
    for (const auto& s : suites) ok = run_and_emit(c, s) && ok;
    return ok ? 0 : 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
