#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "catalog.hpp"
#include "expansion.hpp"
#include "fields.hpp"
#include "sphere.hpp"
#include "symbol.hpp"
#include "variation.hpp"

namespace s3p {

inline constexpr const char* kReportSchema = "s3p-report/1";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- configuration -----------------------------------------------------------------

inline const std::map<std::string, double>& default_tolerances() {
  static const std::map<std::string, double> t = {
      {"adjoint", 1e-8},        {"audit", 1e-12},        {"constants", 1e-8},      {"covariance", 1e-8},
      {"cross-assembly", 1e-2}, {"fd-slope", 0.3},       {"first-variation", 1e-6}, {"gauge-jet", 1e-10},
      {"gauge-null", 1e-6},     {"gauge-solve", 1e-12},  {"green", 1e-8},          {"ii-sign", 1e-8},
      {"nu", 1e-3},             {"nu-alpha", 1e-2},      {"nu-residual", 1e-10},   {"nu-second", 1e-6},
      {"rotation", 1e-10},      {"route", 1e-6},         {"spectrum", 1e-14},      {"strict-bound", 1e-15},
      {"symbol", 1e-12},
  };
  return t;
}

inline const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> n = {"bump",      "second-bump", "two-bump", "conformal",
                                             "ambient-a", "ambient-b",   "ambient-c"};
  return n;
}

struct SuiteConfig {
  double grid_radius = 6.0;
  int resolution = 40;
  std::vector<double> t_grid = default_t_grid();
  int truncation = 30;
  std::map<std::string, double> tolerances = default_tolerances();
  std::vector<std::string> catalog = catalog_names();
  std::string output_dir = "reports";
  std::uint64_t seed = 20240611;
  double tol_scale = 1.0;

  double tolerance(const std::string& key) const {
    auto it = tolerances.find(key);
    if (it == tolerances.end()) throw ConfigError("no tolerance for check '" + key + "'");
    return it->second * tol_scale;
  }

  void validate() const {
    if (!(grid_radius > 0)) throw ConfigError("grid_radius must be positive");
    // order-4 stencils need a two-node margin on each side and the FFT routes need an even count
    if (resolution < 16 || resolution % 2) throw ConfigError("resolution must be even and at least 16");
    if (t_grid.size() < 2) throw ConfigError("t_grid needs at least two values");
    for (std::size_t i = 0; i < t_grid.size(); ++i)
      if (!(t_grid[i] > 0) || (i > 0 && !(t_grid[i] < t_grid[i - 1])))
        throw ConfigError("t_grid must be positive and decreasing");
    if (truncation < 2) throw ConfigError("truncation must be at least 2");
    if (!(tol_scale > 0)) throw ConfigError("tol-scale must be positive");
    for (const auto& [k, v] : tolerances)
      if (!(v > 0)) throw ConfigError("tolerance '" + k + "' must be strictly positive");
    for (const auto& [k, v] : default_tolerances())
      if (!tolerances.count(k)) throw ConfigError("tolerance '" + k + "' missing");
    std::set<std::string> seen;
    for (const auto& c : catalog) {
      if (std::find(catalog_names().begin(), catalog_names().end(), c) == catalog_names().end())
        throw ConfigError("unknown catalog entry '" + c + "'");
      if (!seen.insert(c).second) throw ConfigError("duplicate catalog entry '" + c + "'");
    }
  }
};

namespace harness_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad number for '" + key + "': " + v);
  }
  if (pos != v.size()) throw ConfigError("bad number for '" + key + "': " + v);
  return d;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long d;
  try {
    d = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad integer for '" + key + "': " + v);
  }
  if (pos != v.size()) throw ConfigError("bad integer for '" + key + "': " + v);
  return d;
}

}  // namespace harness_detail

// key = value lines; '#' starts a comment. Tolerances are set with tol.<check> = value.
inline SuiteConfig parse_config(std::istream& in) {
  using namespace harness_detail;
  SuiteConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    if (key == "grid_radius") {
      c.grid_radius = parse_double(key, val);
    } else if (key == "resolution") {
      c.resolution = int(parse_int(key, val));
    } else if (key == "t_grid") {
      c.t_grid.clear();
      for (const auto& s : split_list(val)) c.t_grid.push_back(parse_double(key, s));
    } else if (key == "truncation") {
      c.truncation = int(parse_int(key, val));
    } else if (key == "catalog") {
      c.catalog = split_list(val);
    } else if (key == "output") {
      c.output_dir = val;
    } else if (key == "seed") {
      c.seed = std::uint64_t(parse_int(key, val));
    } else if (key == "tol_scale") {
      c.tol_scale = parse_double(key, val);
    } else if (key.rfind("tol.", 0) == 0) {
      const std::string name = key.substr(4);
      if (!default_tolerances().count(name)) throw ConfigError("unknown tolerance '" + name + "'");
      c.tolerances[name] = parse_double(key, val);
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

inline SuiteConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  return parse_config(in);
}

// ---- reports -----------------------------------------------------------------------

struct ErrorBudget {
  double quadrature = 0;
  double truncation = 0;
  double stencil = 0;
};

struct ReportEntry {
  std::string id;
  std::string anchor;
  double computed = 0;
  double expected = 0;
  std::string provenance;
  double tolerance = 0;
  bool pass = false;
  ErrorBudget budget;
  std::string detail;
  std::string error;
};

struct Report {
  std::string suite;
  std::uint64_t seed = 0;
  SuiteConfig config;
  std::vector<ReportEntry> entries;
  std::map<std::string, std::string> plots;  // name -> CSV text

  bool passed() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
  std::size_t failures() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += !e.pass;
    return n;
  }
};

// Fixed registry of the identities the suites check; "plumbing" marks pure infrastructure checks.
struct Anchor {
  std::string tag;
  std::string statement;
};

inline const std::vector<Anchor>& anchor_registry() {
  static const std::vector<Anchor> a = {
      {"round-sphere-curvature", "round metric in the chart has R = 6 and Q = 15/8"},
      {"paneitz-round-spectrum", "P = Delta^2 + Delta/2 - 15/16 on the round sphere, P 1 = -15/16"},
      {"paneitz-conformal-covariance", "P of rho^-4 g applied to phi equals rho^7 P_g(rho phi)"},
      {"metric-expansion", "second-order Taylor expansion of curvature quantities and P in t"},
      {"adjoint-defect", "P1 fails to be self-adjoint exactly by the trace term"},
      {"green-pole-value", "G_N(N) = 0, G_N(S) = -1/4pi, |G_N|_L2 = 1/4 on the round sphere"},
      {"green-conformal-law", "Green's function transforms with the conformal factors at both points"},
      {"first-variation-pole", "I(N, N, h) vanishes as a flux at infinity"},
      {"nu-first-variation", "the first variation of nu at N vanishes"},
      {"second-variation-sign", "II(N, N, h) <= 0, strictly negative off the gauge directions"},
      {"second-variation-gauge-null", "II vanishes on L_X g + f g"},
      {"gauge-normal-form", "h - L_X g vanishes to first order at N with decaying theta"},
      {"symbol-rotation-identity", "symbol integrand equals the rotated sum of squares"},
      {"symbol-null-forms", "the symbol form vanishes exactly on alpha delta + beta xi + xi beta"},
      {"parseval-route", "real-space and Fourier evaluations of II agree"},
      {"nu-constrained-minimizer", "nu_p lies between the first two eigenvalues of P"},
      {"nu-round-example", "on the round sphere nu_N = 0, alpha_N = 4 and u is a multiple of G_N"},
      {"nu-second-variation", "nu'' at N equals -16 II, assembled from P2, P1 and I"},
      {"plumbing", "infrastructure check with no mathematical content"},
  };
  return a;
}

inline bool anchor_known(const std::string& tag) {
  for (const auto& a : anchor_registry())
    if (a.tag == tag) return true;
  return false;
}

inline nlohmann::json to_json(const ErrorBudget& b) {
  return {{"quadrature", b.quadrature}, {"stencil", b.stencil}, {"truncation", b.truncation}};
}

inline nlohmann::json to_json(const ReportEntry& e) {
  nlohmann::json j = {{"id", e.id},
                      {"anchor", e.anchor},
                      {"computed", e.computed},
                      {"expected", e.expected},
                      {"provenance", e.provenance},
                      {"tolerance", e.tolerance},
                      {"pass", e.pass},
                      {"budget", to_json(e.budget)}};
  if (!e.detail.empty()) j["detail"] = e.detail;
  if (!e.error.empty()) j["error"] = e.error;
  return j;
}

inline nlohmann::json to_json(const SuiteConfig& c) {
  return {{"grid_radius", c.grid_radius}, {"resolution", c.resolution}, {"t_grid", c.t_grid},
          {"truncation", c.truncation},   {"tolerances", c.tolerances}, {"catalog", c.catalog},
          {"seed", c.seed},               {"tol_scale", c.tol_scale}};
}

inline nlohmann::json to_json(const Report& r) {
  nlohmann::json j;
  j["schema"] = kReportSchema;
  j["suite"] = r.suite;
  j["seed"] = r.seed;
  j["config"] = to_json(r.config);
  j["conventions"] = {{"fourier", "unitary: h^3 (2 pi)^(-3/2) sum e^(-i xi x)"}};
  j["entries"] = nlohmann::json::array();
  j["failures"] = nlohmann::json::array();
  for (const auto& e : r.entries) {
    j["entries"].push_back(to_json(e));
    if (!e.pass) {
      nlohmann::json f = {{"id", e.id}, {"anchor", e.anchor}, {"budget", to_json(e.budget)}};
      if (!e.error.empty()) f["error"] = e.error;
      j["failures"].push_back(f);
    }
  }
  j["summary"] = {{"total", r.entries.size()}, {"failed", r.failures()}};
  return j;
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline std::string entries_csv(const Report& r) {
  std::ostringstream os;
  os << "id,anchor,computed,expected,tolerance,pass,quadrature,truncation,stencil\n";
  for (const auto& e : r.entries)
    os << csv_field(e.id) << ',' << e.anchor << ',' << format_number(e.computed) << ',' << format_number(e.expected)
       << ',' << format_number(e.tolerance) << ',' << (e.pass ? 1 : 0) << ',' << format_number(e.budget.quadrature)
       << ',' << format_number(e.budget.truncation) << ',' << format_number(e.budget.stencil) << '\n';
  return os.str();
}

inline std::string report_text(const Report& r) { return to_json(r).dump(2) + "\n"; }

// Writes <suite>.json, <suite>.csv and <suite>-<plot>.csv; returns the paths written.
inline std::vector<std::string> emit_report(const Report& r, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
  std::vector<std::string> paths;
  auto put = [&](const std::string& name, const std::string& text) {
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
    paths.push_back(path);
  };
  put(r.suite + ".json", report_text(r));
  put(r.suite + ".csv", entries_csv(r));
  for (const auto& [name, text] : r.plots) put(r.suite + "-" + name + ".csv", text);
  return paths;
}

// ---- nu solutions on disk ----------------------------------------------------------

inline std::string nu_solution_text(const NuSolution& s) {
  nlohmann::json j = {{"schema", "s3p-nu/1"},
                      {"pole", s.pole},
                      {"L", s.L},
                      {"nu", s.nu},
                      {"alpha", s.alpha},
                      {"nu_truncated", s.nu_truncated},
                      {"alpha_truncated", s.alpha_truncated},
                      {"el_residual", s.el_residual},
                      {"constraint_residual", s.constraint_residual},
                      {"green_correlation", s.green_correlation},
                      {"tail_estimate", s.u.tail_estimate},
                      {"coefficients", s.u.c.size()}};
  return j.dump(2) + "\n";
}

// magic "S3PCOEF1", int32 L, int64 count, count little-endian doubles
inline void write_nu_coefficients(std::ostream& out, const NuSolution& s) {
  out.write("S3PCOEF1", 8);
  const std::int32_t L = s.L;
  const std::int64_t n = std::int64_t(s.u.c.size());
  out.write(reinterpret_cast<const char*>(&L), sizeof L);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(s.u.c.data()), std::streamsize(n * sizeof(double)));
}

inline SphereExpansion read_nu_coefficients(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "S3PCOEF1") throw std::runtime_error("bad coefficient blob");
  std::int32_t L;
  std::int64_t n;
  in.read(reinterpret_cast<char*>(&L), sizeof L);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || L < 0 || L > 1000) throw std::runtime_error("bad coefficient header");
  SphereExpansion u(L);
  if (n != std::int64_t(u.c.size())) throw std::runtime_error("bad coefficient count");
  in.read(reinterpret_cast<char*>(u.c.data()), std::streamsize(n * sizeof(double)));
  if (!in) throw std::runtime_error("truncated coefficient blob");
  return u;
}

inline void write_nu_coefficients(const std::string& path, const NuSolution& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_nu_coefficients(out, s);
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline SphereExpansion read_nu_coefficients(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  try {
    return read_nu_coefficients(in);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) + " in " + path);
  }
}

// ---- perturbation catalog ----------------------------------------------------------

enum class CatalogKind { bump, conformal, ambient };

struct CatalogItem {
  std::string name;
  CatalogKind kind = CatalogKind::bump;
  SymTensorField chart;  // h in the north chart, used for pointwise expansions
  SphereTensor sphere;
  SymTensorField theta;  // tau^4 h
};

namespace harness_detail {

inline Mat4 random_symmetric4(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1, 1);
  Mat4 S{};
  for (int a = 0; a < 4; ++a)
    for (int b = a; b < 4; ++b) S[a][b] = S[b][a] = U(rng);
  return S;
}

inline std::vector<Vec3d> random_points(std::uint64_t seed, int n, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-scale, scale);
  std::vector<Vec3d> r;
  for (int i = 0; i < n; ++i) r.push_back({U(rng), U(rng), U(rng)});
  return r;
}

inline CatalogItem from_theta(std::string name, const SymTensorField& theta) {
  CatalogItem c;
  c.name = std::move(name);
  c.kind = CatalogKind::bump;
  c.theta = theta;
  c.chart = theta;
  c.sphere = sphere_tensor_from_north(pushforward_theta(theta));
  return c;
}

}  // namespace harness_detail

inline CatalogItem catalog_item(const std::string& name, std::uint64_t seed) {
  using namespace harness_detail;
  if (name == "bump") return from_theta(name, gaussian_tensor({{0.8, -0.5, 0.3, -0.6, 0.2, 0.4}}, {0.2, -0.1, 0.3}, 1.0));
  if (name == "second-bump")
    return from_theta(name, gaussian_tensor({{-0.5, 0.1, 0.6, 0.9, -0.2, 0.3}}, {0.4, 0.1, -0.2}, 1.2));
  if (name == "two-bump")
    return from_theta(name, 0.5 * (gaussian_tensor({{0.2, 0.7, -0.4, 0.1, 0.5, -0.9}}, {-0.3, 0.4, 0.0}, 0.8) +
                                   gaussian_tensor({{-0.5, 0.1, 0.6, 0.9, -0.2, 0.3}}, {0.4, 0.1, -0.2}, 1.2)));
  if (name == "conformal") {
    auto f = gaussian({0.1, -0.3, 0.2}, 0.9, 0.7);
    CatalogItem c;
    c.name = name;
    c.kind = CatalogKind::conformal;
    c.chart = conformal_direction(f);
    c.sphere = sphere_tensor_from_north(c.chart);
    c.theta = pure_trace(f);
    return c;
  }
  const std::vector<std::string> ambient = {"ambient-a", "ambient-b", "ambient-c"};
  for (std::size_t k = 0; k < ambient.size(); ++k)
    if (name == ambient[k]) {
      CatalogItem c;
      c.name = name;
      c.kind = CatalogKind::ambient;
      c.sphere = ambient_form_tensor(random_symmetric4(seed * 1000003u + k));
      c.chart = c.sphere.north;
      c.theta = pullback_theta(c.sphere.north);
      return c;
    }
  throw ConfigError("unknown catalog entry '" + name + "'");
}

// ---- suite execution ---------------------------------------------------------------

class SuiteRun {
 public:
  SuiteRun(const SuiteConfig& cfg, std::string group, std::vector<std::string> anchors)
      : cfg_(cfg), group_(std::move(group)), anchors_(std::move(anchors)) {}

  const SuiteConfig& config() const { return cfg_; }

  // pass <=> |computed - expected| <= tolerance
  ReportEntry& check(const std::string& id, const std::string& anchor, double computed, double expected,
                     const std::string& provenance, const std::string& tol_key, ErrorBudget budget = {},
                     std::string detail = {}) {
    if (std::find(anchors_.begin(), anchors_.end(), anchor) == anchors_.end())
      throw std::logic_error("anchor '" + anchor + "' not declared by group " + group_);
    ReportEntry e;
    e.id = group_ + "." + id;
    e.anchor = anchor;
    e.computed = computed;
    e.expected = expected;
    e.provenance = provenance;
    e.tolerance = cfg_.tolerance(tol_key);
    e.pass = std::abs(computed - expected) <= e.tolerance;
    e.budget = budget;
    e.detail = std::move(detail);
    entries.push_back(std::move(e));
    return entries.back();
  }

  // runs f, recording a failing entry if it throws
  template <class F>
  void guarded(const std::string& id, const std::string& anchor, F&& f) {
    try {
      f();
    } catch (const std::exception& ex) {
      ReportEntry e;
      e.id = group_ + "." + id;
      e.anchor = anchor;
      e.provenance = "module error";
      e.tolerance = 0;
      e.computed = std::numeric_limits<double>::quiet_NaN();
      e.pass = false;
      e.error = ex.what();
      entries.push_back(std::move(e));
    }
  }

  std::vector<ReportEntry> entries;
  std::map<std::string, std::string> plots;

 private:
  const SuiteConfig& cfg_;
  std::string group_;
  std::vector<std::string> anchors_;
};

struct CheckGroup {
  std::string id;
  std::vector<std::string> anchors;
  std::function<void(SuiteRun&)> run;
};

namespace harness_detail {

inline std::vector<CatalogItem> catalog(const SuiteConfig& c) {
  std::vector<CatalogItem> r;
  for (const auto& n : c.catalog) r.push_back(catalog_item(n, c.seed));
  return r;
}

inline std::string detail(const char* fmt, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b, c);
  return buf;
}

inline std::uint64_t stream(const SuiteConfig& c, std::uint64_t k) { return c.seed * 6364136223846793005ull + k; }

// gaussian bumps whose theta is not a gauge direction
inline std::vector<std::pair<std::string, SymTensorField>> bump_family() {
  return {
      {"axis", gaussian_tensor({{1, 0, 0, 0, 0, 0}}, {0, 0, 0}, 1.0)},
      {"mixed", gaussian_tensor({{0.8, -0.5, 0.3, -0.6, 0.2, 0.4}}, {0.2, -0.1, 0.3}, 1.0)},
      {"wide", gaussian_tensor({{-0.5, 0.1, 0.6, 0.9, -0.2, 0.3}}, {0.4, 0.1, -0.2}, 1.2)},
      {"narrow", gaussian_tensor({{0.3, 0.7, -0.4, 0.2, 0.5, -0.1}}, {-0.3, 0.2, 0.1}, 0.9)},
  };
}

inline SpaceQuadrature gauged_quadrature(const GaugeSolution& s) {
  SpaceQuadrature q;
  q.n_r = 24;
  q.n_theta = 24;
  q.breaks = s.cutoff_breaks();
  return q;
}

inline const char* kind_name(CatalogKind k) {
  switch (k) {
    case CatalogKind::bump: return "bump";
    case CatalogKind::conformal: return "conformal";
    case CatalogKind::ambient: return "ambient";
  }
  return "";
}

// ---- expansion-validate ----

inline void fd_slopes(SuiteRun& r) {
  const auto& c = r.config();
  auto phi = gaussian({0.1, 0.2, -0.1}, 0.9);
  auto pts = random_points(stream(c, 1), 5, 0.8);
  std::ostringstream csv;
  csv << "background,perturbation,quantity,t,remainder,slope\n";
  for (const auto& g : {flat_metric(), round_metric()})
    for (const auto& item : catalog(c)) {
      if (item.kind == CatalogKind::ambient) continue;
      for (auto q : all_quantities()) {
        const std::string id = g.label + "." + item.name + "." + quantity_name(q);
        r.guarded(id, "metric-expansion", [&] {
          auto f = fd_validate(q, g, item.chart, &phi, pts, c.t_grid);
          for (std::size_t k = 0; k < f.t.size(); ++k)
            csv << g.label << ',' << item.name << ',' << quantity_name(q) << ',' << format_number(f.t[k]) << ','
                << format_number(f.remainder[k]) << ',' << format_number(f.slope) << '\n';
          ErrorBudget b;
          b.truncation = f.remainder.back();
          r.check(id, "metric-expansion", f.slope, 3.0, "derived: third-order remainder", "fd-slope", b);
        });
      }
    }
  r.plots["slopes"] = csv.str();
}

inline void adjoint_defect(SuiteRun& r) {
  const auto& c = r.config();
  std::mt19937_64 rng(stream(c, 2));
  std::uniform_real_distribution<double> U(-1, 1), W(0.8, 1.1);
  auto center = [&] {
    Vec3d x;
    for (auto& v : x) v = 0.4 * U(rng);
    return x;
  };
  auto quad = box_trapezoid({0, 0, 0}, 5.0, 40);
  for (int t = 0; t < 10; ++t) {
    Sym3<double> A;
    for (auto& v : A.v) v = U(rng);
    const Vec3d ch = center();
    const double wh = W(rng);
    const Vec3d cp = center();
    const double wp = W(rng);
    const Vec3d cq = center();
    const double wq = W(rng);
    auto h = gaussian_tensor(A, ch, wh);
    auto phi = gaussian(cp, wp);
    auto psi = gaussian(cq, wq);
    const std::string id = "triple-" + std::to_string(t);
    r.guarded(id, "adjoint-defect", [&] {
      r.check(id, "adjoint-defect", adjoint_defect_residual(flat_metric(), h, phi, psi, quad), 0.0,
              "closed-form: adjoint defect identity", "adjoint");
    });
  }
}

// ---- first-variation ----

inline void pole_flux(SuiteRun& r) {
  std::ostringstream csv;
  csv << "perturbation,R,flux\n";
  const auto pts = norm_sample_points();
  for (const auto& item : catalog(r.config())) {
    r.guarded(item.name, "first-variation-pole", [&] {
      auto f = first_variation_pole(item.theta);
      const double c4 = ck_norm<4>(item.theta, pts);
      for (std::size_t k = 0; k < f.radii.size(); ++k)
        csv << item.name << ',' << format_number(f.radii[k]) << ',' << format_number(f.samples[k]) << '\n';
      ErrorBudget b;
      b.truncation = f.error / c4;
      r.check(item.name, "first-variation-pole", f.value / c4, 0.0, "closed-form: I(N,N,h) = 0, per unit C4 norm",
              "first-variation", b, detail("I = %.6g, |theta|_C4 = %.6g", f.value, c4));
    });
  }
  r.plots["flux"] = csv.str();
}

inline void nu_first(SuiteRun& r) {
  const auto pts = norm_sample_points();
  for (const auto& item : catalog(r.config())) {
    r.guarded(item.name, "nu-first-variation", [&] {
      auto f = nu_first_variation(item.theta);
      const double c4 = ck_norm<4>(item.theta, pts);
      ErrorBudget b;
      b.truncation = f.error / c4;
      r.check(item.name, "nu-first-variation", f.value / c4, 0.0, "closed-form: nu' = 0 at N, per unit C4 norm",
              "first-variation", b, detail("nu' = %.6g, |theta|_C4 = %.6g", f.value, c4));
    });
  }
}

// ---- second-variation ----

inline void ii_sign(SuiteRun& r) {
  for (const auto& item : catalog(r.config())) {
    r.guarded(item.name, "second-variation-sign", [&] {
      IntegralEstimate e;
      if (item.kind == CatalogKind::ambient) {
        auto s = gauge_normalize(item.sphere);
        e = ii_quadform(s.theta, gauged_quadrature(s));
      } else {
        e = ii_quadform(item.theta);
      }
      ErrorBudget b;
      b.quadrature = e.quadrature_error;
      b.truncation = e.tail_bound;
      r.check(item.name, "second-variation-sign", std::max(0.0, e.value), 0.0, "closed-form: II <= 0", "ii-sign", b,
              detail("II = %.6g", e.value));
    });
  }
}

inline void gauge_null(SuiteRun& r) {
  const auto& c = r.config();
  AmbientQuadratic q;
  q.c = 0.3;
  q.b = {0.5, -0.2, 0.1, 0.7};
  q.A[0][3] = q.A[3][0] = 0.4;
  std::vector<std::pair<std::string, std::function<SymTensorField()>>> dirs = {
      {"lie-bump", [] { return lie_derivative_round(gaussian_vector({0.3, -0.7, 0.5}, {0.1, 0.2, -0.3}, 0.8)); }},
      {"lie-wide", [] { return lie_derivative_round(gaussian_vector({1.0, 0.2, 0.0}, {-0.4, 0.0, 0.2}, 1.1)); }},
      {"lie-ambient",
       [&] { return pullback_theta(lie_tensor({0.2, -0.1, 0.4, 0.3}, random_symmetric4(stream(c, 3))).north); }},
      {"conformal-ambient", [&] { return pullback_theta(ambient_conformal_tensor(q).north); }},
      {"conformal-bump", [] { return pure_trace(gaussian({0.1, -0.2, 0.3}, 0.9)); }},
  };
  for (const auto& [name, make] : dirs) {
    r.guarded(name, "second-variation-gauge-null", [&] {
      auto theta = make();
      auto e = ii_quadform(theta);
      const double scale = ii_magnitude(theta).value;
      ErrorBudget b;
      b.quadrature = e.quadrature_error / scale;
      b.truncation = e.tail_bound / scale;
      r.check(name, "second-variation-gauge-null", std::abs(e.value) / scale, 0.0,
              "closed-form: II vanishes on gauge directions, relative to int |M|^2 + 3/2 F^2", "gauge-null", b,
              detail("II = %.6g, scale = %.6g", e.value, scale));
    });
  }
}

inline void bump_negativity(SuiteRun& r) {
  for (const auto& [name, theta] : bump_family()) {
    r.guarded(name, "second-variation-sign", [&] {
      auto e = ii_quadform(theta);
      auto n2 = flat_l2_norm2(theta);
      const double ratio = e.value / n2.value;
      const double ratio_h2 = e.value / flat_h2_norm2(theta).value;
      ErrorBudget b;
      b.quadrature = e.quadrature_error / n2.value;
      b.truncation = e.tail_bound / n2.value;
      // excess over the bound II / |theta|^2 < -1e-3
      r.check(name, "second-variation-sign", std::max(0.0, ratio + 1e-3), 0.0,
              "closed-form: II < 0 off the gauge directions", "strict-bound", b,
              detail("II / |theta|_L2^2 = %.6g, II / |theta|_H2^2 = %.6g, bound = %.3g", ratio, ratio_h2, -1e-3));
    });
  }
}

inline void gauge_solver(SuiteRun& r) {
  const auto& c = r.config();
  r.guarded("linear-solve", "gauge-normal-form", [&] {
    std::mt19937_64 rng(stream(c, 4));
    std::uniform_real_distribution<double> U(-1, 1);
    double worst = 0;
    for (int n = 0; n < 1000; ++n) {
      LinearFormMatrix H;
      for (auto& row : H.c)
        for (auto& v : row) v = U(rng);
      worst = std::max(worst, max_abs_difference(symmetric_gradient(gauge_linear_solve(H)), H));
    }
    r.check("linear-solve", "gauge-normal-form", worst, 0.0, "derived: exact 18x18 solve", "gauge-solve");
  });
  for (const auto& item : catalog(c)) {
    if (item.kind == CatalogKind::bump) continue;
    r.guarded(item.name + ".jet", "gauge-normal-form", [&] {
      auto s = gauge_normalize(item.sphere);
      r.check(item.name + ".jet", "gauge-normal-form", s.residual_jet, 0.0, "closed-form: normal form at N", "gauge-jet");
      auto a = decay_audit(s.theta, -2.0);
      const double growth = std::max(a.ratio[1], a.ratio[2]) / std::max(a.ratio[0], 1e-300);
      r.check(item.name + ".decay", "gauge-normal-form", std::max(0.0, growth - 2.0), 0.0,
              "closed-form: gauged theta is O(|x|^-2)", "audit", {}, detail("ray ratio growth = %.6g", growth));
    });
  }
}

// ---- symbol-check ----

inline void rotation_identity(SuiteRun& r) {
  std::mt19937_64 rng(stream(r.config(), 5));
  std::normal_distribution<double> N(0, 1);
  auto z = [&] {
    const double re = N(rng);
    return Complex(re, N(rng));
  };
  double worst = 0, most_negative = 0;
  for (int t = 0; t < 100000; ++t) {
    SymbolMatrix s;
    for (auto& a : s.A.v) a = z();
    const double sc = std::exp(N(rng));
    for (auto& x : s.xi) x = sc * N(rng);
    const double x2 = dot(s.xi, s.xi);
    const double scale = 1 + symbol_detail::norm2(s.A) * x2 * x2;
    const double a = symbol_integrand(s), b = rotated_symbol_value(s);
    worst = std::max(worst, std::abs(a - b) / scale);
    most_negative = std::min(most_negative, a / scale);
  }
  r.check("identity", "symbol-rotation-identity", worst, 0.0, "closed-form: rotated symbol identity, per 1 + |A|^2 |xi|^4",
          "symbol");
  r.check("nonnegative", "symbol-rotation-identity", std::max(0.0, -most_negative), 0.0,
          "closed-form: symbol integrand >= 0", "symbol");
}

inline void null_forms(SuiteRun& r) {
  std::mt19937_64 rng(stream(r.config(), 6));
  std::normal_distribution<double> N(0, 1);
  auto z = [&] {
    const double re = N(rng);
    return Complex(re, N(rng));
  };
  double worst_value = 0, worst_kernel = 0;
  for (int t = 0; t < 200; ++t) {
    SymbolMatrix s;
    for (auto& x : s.xi) x = N(rng);
    const Complex alpha = z();
    CVec3 beta;
    for (auto& b : beta) b = z();
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) s.A(i, j) = (i == j ? alpha : 0.0) + beta[i] * s.xi[j] + beta[j] * s.xi[i];
    const double x2 = dot(s.xi, s.xi);
    worst_value = std::max(worst_value, std::abs(symbol_integrand(s)) / (1 + symbol_detail::norm2(s.A) * x2 * x2));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(symbol_form_matrix(s.xi));
    int kernel = 0;
    for (int a = 0; a < 6; ++a) kernel += es.eigenvalues()(a) < 1e-12 * x2 * x2;
    worst_kernel = std::max(worst_kernel, std::abs(kernel - 4.0));
  }
  r.check("vanish", "symbol-null-forms", worst_value, 0.0, "closed-form: null forms", "symbol");
  r.check("kernel-dimension", "symbol-null-forms", worst_kernel, 0.0, "derived: kernel is four dimensional",
          "symbol");
}

inline void parseval_route(SuiteRun& r) {
  const auto& c = r.config();
  for (const auto& [name, theta] : bump_family()) {
    r.guarded(name, "parseval-route", [&] {
      auto real = ii_quadform(theta);
      auto freq = parseval_ii(theta, c.grid_radius, c.resolution);
      const double den = std::max({std::abs(real.value), std::abs(freq.value), 1e-10});
      ErrorBudget b;
      b.quadrature = (real.quadrature_error + freq.quadrature_error) / den;
      b.truncation = (real.tail_bound + freq.tail_bound) / den;
      r.check(name, "parseval-route", std::abs(real.value - freq.value) / den, 0.0,
              "derived: Parseval, unitary transform", "route", b,
              detail("real = %.12g, fourier = %.12g", real.value, freq.value));
    });
  }
}

// ---- nu-solve ----

inline void nu_spectrum(SuiteRun& r) {
  r.check("sigma0", "nu-constrained-minimizer", paneitz_eigenvalue(0), -15.0 / 16.0, "closed-form: lambda_1 = -15/16",
          "spectrum");
  r.check("sigma1", "nu-constrained-minimizer", paneitz_eigenvalue(1), 105.0 / 16.0, "closed-form: lambda_2 = 105/16",
          "spectrum");
}

inline void nu_round(SuiteRun& r) {
  const auto& c = r.config();
  std::ostringstream csv;
  csv << "L,nu,alpha,nu_truncated,alpha_truncated,tail\n";
  for (int L = 2; L <= c.truncation; ++L) {
    auto s = nu_solve(kNorthPole, L);
    csv << L << ',' << format_number(s.nu) << ',' << format_number(s.alpha) << ',' << format_number(s.nu_truncated)
        << ',' << format_number(s.alpha_truncated) << ',' << format_number(s.u.tail_estimate) << '\n';
  }
  r.plots["nu-vs-L"] = csv.str();
  std::vector<int> levels;
  for (int L : {10, 20})
    if (L < c.truncation) levels.push_back(L);
  levels.push_back(c.truncation);
  for (int L : levels) {
    const std::string tag = "L" + std::to_string(L);
    r.guarded(tag, "nu-round-example", [&] {
      auto s = nu_solve(kNorthPole, L);
      ErrorBudget b;
      b.truncation = s.u.tail_estimate;
      r.check(tag + ".nu", "nu-round-example", s.nu, 0.0, "closed-form: nu_N = 0 on the round sphere", "nu", b,
              detail("truncated Rayleigh-Ritz value %.6g", s.nu_truncated));
      r.check(tag + ".alpha", "nu-round-example", s.alpha, 4.0, "closed-form: alpha_N = 4", "nu-alpha", b,
              detail("truncated value %.6g", s.alpha_truncated));
      r.check(tag + ".correlation", "nu-round-example", s.green_correlation, 1.0, "closed-form: u = 4 G_N", "nu", b);
      r.check(tag + ".el-residual", "nu-round-example", s.el_residual, 0.0, "derived: Euler-Lagrange equation",
              "nu-residual");
    });
  }
}

inline void nu_random_poles(SuiteRun& r) {
  const auto& c = r.config();
  std::mt19937_64 rng(stream(c, 7));
  std::normal_distribution<double> N(0, 1);
  const double ref = nu_solve(kNorthPole, c.truncation).nu;
  for (int i = 0; i < 10; ++i) {
    const Vec4 p = normalized({N(rng), N(rng), N(rng), N(rng)});
    const std::string id = "pole-" + std::to_string(i);
    r.guarded(id, "nu-constrained-minimizer", [&] {
      auto s = nu_solve(p, c.truncation);
      const double excess = std::max({0.0, paneitz_eigenvalue(0) - s.nu, s.nu - paneitz_eigenvalue(1)});
      r.check(id + ".bounds", "nu-constrained-minimizer", excess, 0.0, "closed-form: lambda_1 <= nu_p <= lambda_2",
              "strict-bound", {}, detail("nu = %.12g", s.nu));
      r.check(id + ".rotation", "nu-constrained-minimizer", s.nu, ref, "derived: rotation invariance",
              "rotation");
    });
  }
}

inline void nu_cross_assembly(SuiteRun& r) {
  const auto& c = r.config();
  int used = 0;
  for (const auto& item : catalog(c)) {
    if (item.kind != CatalogKind::bump || used == 3) continue;
    ++used;
    r.guarded(item.name, "nu-second-variation", [&] {
      auto gauge = gauge_normalize(item.sphere);
      auto ii = ii_quadform(item.theta);
      auto k = off_diagonal_constants(item.sphere);
      auto a = nu_second_variation_assembled(item.theta, k.weight(), 5.0, 32);
      ErrorBudget b;
      b.quadrature = 16 * ii.quadrature_error + k.quadrature_error;
      b.truncation = 16 * ii.tail_bound;
      // tolerance is relative to |II|
      auto& e = r.check(item.name + ".assembly", "nu-second-variation", a.total, -16 * ii.value,
                        "closed-form: nu'' = -16 II", "cross-assembly", b,
                        detail("gauge jet residual %.3g, II = %.12g", gauge.residual_jet, ii.value));
      e.tolerance *= std::abs(ii.value);
      e.pass = std::abs(e.computed - e.expected) <= e.tolerance;
      const double scale = 16 * ii_magnitude(item.theta).value;
      r.check(item.name + ".sign", "nu-second-variation", std::max(0.0, -a.total) / scale, 0.0,
              "closed-form: nu'' >= 0", "nu-second", b);
    });
  }
}

// ---- covariance ----

inline void round_constants(SuiteRun& r) {
  const auto& c = r.config();
  auto g = round_metric();
  double worst_r = 6, worst_q = 15.0 / 8.0, worst_p = -15.0 / 16.0;
  for (const auto& x : random_points(stream(c, 8), 100, 3.0)) {
    auto k = curvature_pipeline(g, x);
    if (std::abs(k.scalar - 6) > std::abs(worst_r - 6)) worst_r = k.scalar;
    if (std::abs(k.q - 15.0 / 8.0) > std::abs(worst_q - 15.0 / 8.0)) worst_q = k.q;
    const double p = paneitz_apply_exact(g, constant_scalar(1.0), x);
    if (std::abs(p + 15.0 / 16.0) > std::abs(worst_p + 15.0 / 16.0)) worst_p = p;
  }
  r.check("scalar", "round-sphere-curvature", worst_r, 6.0, "closed-form: R = 6", "constants");
  r.check("q", "round-sphere-curvature", worst_q, 15.0 / 8.0, "closed-form: Q = 15/8", "constants");
  r.check("paneitz-one", "paneitz-round-spectrum", worst_p, -15.0 / 16.0, "closed-form: P 1 = -Q/2 = -15/16", "constants");
}

inline void green_values(SuiteRun& r) {
  r.check("pole", "green-pole-value", green_sphere(kNorthPole, kNorthPole), 0.0, "closed-form: G_N(N) = 0", "green");
  r.check("origin", "green-pole-value", green_pole({0, 0, 0}), -1 / (4 * M_PI), "closed-form: G_N(S) = -1/(4 pi)",
          "green");
  auto n2 = green_l2_norm2();
  ErrorBudget b;
  b.quadrature = n2.quadrature_error;
  b.truncation = n2.tail_bound;
  r.check("l2-norm", "green-pole-value", std::sqrt(n2.value), 0.25, "closed-form: |G_N|_L2 = 1/4", "green", b);
}

inline void mobius(SuiteRun& r) {
  const auto& c = r.config();
  std::mt19937_64 rng(stream(c, 9));
  std::normal_distribution<double> N(0, 1);
  std::vector<std::pair<Vec3d, Vec3d>> pairs;
  for (int i = 0; i < 100; ++i) pairs.push_back({{N(rng), N(rng), N(rng)}, {N(rng), N(rng), N(rng)}});
  const double a = 0.4, bb = 1.1;
  const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(bb), sb = std::sin(bb);
  std::array<Vec3d, 3> rot{{{ca, -sa * cb, sa * sb}, {sa, ca * cb, -ca * sb}, {0, sb, cb}}};
  MobiusMap M;
  M.translate({0.3, -0.2, 0.5}).dilate(1.7).rotate(rot).invert().translate({-0.1, 0.4, 0.2});
  r.check("green", "green-conformal-law", green_covariance_residual(M, pairs), 0.0, "closed-form: Green's function law",
          "covariance");
}

inline void paneitz_covariance(SuiteRun& r) {
  const auto& c = r.config();
  auto phi = poly_gaussian({{1.0, 0, 0, 0}, {0.5, 1, 0, 1}}, {0.1, 0.2, 0}, 1.2);
  auto pts = random_points(stream(c, 10), 6, 1.5);
  auto rho = constant_scalar(1.0) + 0.1 * gaussian({0.2, 0, -0.1}, 0.8);
  r.check("paneitz-tau", "paneitz-conformal-covariance", conformal_covariance_residual(flat_metric(), tau_field(), phi, pts),
          0.0, "closed-form: conformal covariance of P", "covariance");
  r.check("paneitz-bump", "paneitz-conformal-covariance", conformal_covariance_residual(round_metric(), rho, phi, pts),
          0.0, "closed-form: conformal covariance of P", "covariance");
  for (const auto& item : catalog(c)) {
    if (item.kind == CatalogKind::ambient) continue;
    r.guarded("p1." + item.name, "paneitz-conformal-covariance", [&] {
      r.check("p1." + item.name, "paneitz-conformal-covariance",
              p1_covariance_residual(round_metric(), item.chart, rho, phi, pts), 0.0,
              "derived: covariance of the first variation of P", "covariance");
    });
  }
}

}  // namespace harness_detail

namespace harness_detail {

inline void blob_roundtrip(SuiteRun& r) {
  auto s = nu_solve(kNorthPole, r.config().truncation);
  std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
  write_nu_coefficients(buf, s);
  auto u = read_nu_coefficients(buf);
  double worst = u.c.size() == s.u.c.size() ? 0.0 : kInf;
  for (std::size_t i = 0; i < std::min(u.c.size(), s.u.c.size()); ++i) worst = std::max(worst, std::abs(u.c[i] - s.u.c[i]));
  r.check("coefficients", "plumbing", worst, 0.0, "plumbing", "strict-bound");
}

}  // namespace harness_detail

inline const std::vector<std::string>& suite_ids() {
  static const std::vector<std::string> s = {"expansion-validate", "first-variation", "second-variation",
                                             "symbol-check",       "nu-solve",        "covariance"};
  return s;
}

inline std::vector<CheckGroup> suite_groups(const std::string& suite) {
  using namespace harness_detail;
  if (suite == "expansion-validate")
    return {{"fd-slopes", {"metric-expansion"}, fd_slopes}, {"adjoint-defect", {"adjoint-defect"}, adjoint_defect}};
  if (suite == "first-variation")
    return {{"pole-flux", {"first-variation-pole"}, pole_flux}, {"nu-first", {"nu-first-variation"}, nu_first}};
  if (suite == "second-variation")
    return {{"sign", {"second-variation-sign"}, ii_sign},
            {"gauge-null", {"second-variation-gauge-null"}, gauge_null},
            {"bump-family", {"second-variation-sign"}, bump_negativity},
            {"gauge-solver", {"gauge-normal-form"}, gauge_solver}};
  if (suite == "symbol-check")
    return {{"rotation", {"symbol-rotation-identity"}, rotation_identity},
            {"null-forms", {"symbol-null-forms"}, null_forms},
            {"route", {"parseval-route"}, parseval_route}};
  if (suite == "nu-solve")
    return {{"spectrum", {"nu-constrained-minimizer"}, nu_spectrum},
            {"round-pole", {"nu-round-example"}, nu_round},
            {"random-poles", {"nu-constrained-minimizer"}, nu_random_poles},
            {"cross-assembly", {"nu-second-variation"}, nu_cross_assembly},
            {"blob", {"plumbing"}, blob_roundtrip}};
  if (suite == "covariance")
    return {{"round-constants", {"round-sphere-curvature", "paneitz-round-spectrum"}, round_constants},
            {"green-values", {"green-pole-value"}, green_values},
            {"mobius", {"green-conformal-law"}, mobius},
            {"paneitz-covariance", {"paneitz-conformal-covariance"}, paneitz_covariance}};
  throw ConfigError("unknown suite '" + suite + "'");
}

// Optional per-group observer, called with the group id and its wall time in seconds.
using GroupObserver = std::function<void(const std::string&, double)>;

inline Report run_suite(const SuiteConfig& cfg, const std::string& suite, const GroupObserver& observe = {}) {
  cfg.validate();
  auto groups = suite_groups(suite);
  Report rep;
  rep.suite = suite;
  rep.seed = cfg.seed;
  rep.config = cfg;
  for (const auto& g : groups) {
    SuiteRun run(cfg, g.id, g.anchors);
    const auto t0 = std::chrono::steady_clock::now();
    run.guarded("group", g.anchors.front(), [&] { g.run(run); });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (observe) observe(g.id, secs);
    for (auto& e : run.entries) rep.entries.push_back(std::move(e));
    for (auto& [k, v] : run.plots) rep.plots[g.id + "-" + k] = std::move(v);
  }
  return rep;
}

// "N", "S", or chart coordinates "x,y,z" in the north chart
inline Vec4 parse_pole(const std::string& s) {
  if (s == "N") return kNorthPole;
  if (s == "S") return kSouthPole;
  auto parts = harness_detail::split_list(s);
  if (parts.size() != 3) throw ConfigError("pole must be N, S or x,y,z");
  Vec3d x;
  for (int i = 0; i < 3; ++i) x[i] = harness_detail::parse_double("pole", parts[i]);
  return embed(x, Chart::north);
}

}  // namespace s3p
