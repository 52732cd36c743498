#pragma once

#include <filesystem>
#include <map>

#include "driftflow/dynamics.hpp"

namespace driftflow {

// Where a density comes from in a config: an analytic Gaussian or a CSV file.
struct DistributionSpec {
  bool is_file = false;
  std::string path;                       // is_file
  std::array<double, 2> mean{0.0, 0.0};   // gaussian
  std::array<double, 2> var{1.0, 1.0};
  int dim = 1;

  ReferenceDistribution to_reference() const {
    if (is_file)
      throw InvalidArgument("config: this distribution must be an analytic gauss(...) spec");
    return dim == 1 ? ReferenceDistribution::gaussian1(mean[0], var[0])
                    : ReferenceDistribution::gaussian2(mean[0], var[0], mean[1], var[1]);
  }

  Density to_density(const Grid& g) const {
    if (is_file) return read_density_csv(g, path);
    const ReferenceDistribution r = to_reference();
    if (r.dim != g.dim) throw InvalidArgument("config: distribution dimension mismatch");
    return discretize(g, [&](const Vec& z) { return r.pdf(z); });
  }
};

// One scenario, fully validated. Flat `section.key = value` text format.
struct ScenarioConfig {
  std::string regime_kind;  // aligned | competitive_coupled | competitive_fastx |
                            // competitive_fastrho | naive | sampled | two_populations
  double tau = 1.0;
  std::optional<Vec> fixed_x;
  int samples = 0;
  uint64_t sample_seed = 0;
  bool best_respond = false;

  int dim = 1;
  std::array<double, 2> lower{0.0, 0.0};
  std::array<double, 2> upper{1.0, 0.0};
  std::array<int, 2> cells{0, 1};

  double alpha = 0.1;
  double beta = 1.0;
  std::string cost_kind;  // zero | logistic1d | logistic2d
  double slope = 1.0;
  Vec x0;
  std::string kernel_kind = "none";  // none | quadratic | consensus
  double kernel_param = 0.0;
  DistributionSpec rho_tilde, rho_bar, rho_init;
  std::optional<DistributionSpec> tau_tilde, tau_init;

  double t_final = 1.0;
  double dt = 0.01;
  double cfl = 0.45;
  int sample_stride = 10;

  double newton_tol = 1e-10;
  double gibbs_tol = 1e-9;
  double gibbs_damping = 0.5;
  int gibbs_max_iter = 500;

  uint64_t seed = 1;
  std::string out_dir = "out";
  int snapshot_every = 10;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (...) {
    throw InvalidArgument("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (...) {
    throw InvalidArgument("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw InvalidArgument("config: key '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v, int want) {
  std::vector<double> out;
  std::istringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_double(key, trim(tok)));
  if (static_cast<int>(out.size()) != want)
    throw InvalidArgument("config: key '" + key + "' expects " + std::to_string(want) +
                          " comma-separated value(s)");
  return out;
}

// gauss(m,v) / gauss(m0,v0;m1,v1) / file:relative-or-absolute-path
inline DistributionSpec parse_distribution(const std::string& key, const std::string& v,
                                           const std::filesystem::path& base) {
  DistributionSpec d;
  if (v.rfind("file:", 0) == 0) {
    d.is_file = true;
    std::filesystem::path p = v.substr(5);
    if (p.is_relative()) p = base / p;
    if (!std::filesystem::exists(p))
      throw InvalidArgument("config: key '" + key + "' references missing file " + p.string());
    d.path = p.string();
    return d;
  }
  if (v.rfind("gauss(", 0) == 0 && v.back() == ')') {
    const std::string body = v.substr(6, v.size() - 7);
    std::vector<std::array<double, 2>> axes;
    std::istringstream ss(body);
    std::string part;
    while (std::getline(ss, part, ';')) {
      const std::vector<double> mv = parse_list(key, trim(part), 2);
      axes.push_back({mv[0], mv[1]});
    }
    if (axes.empty() || axes.size() > 2)
      throw InvalidArgument("config: key '" + key + "' expects 1 or 2 gaussian axes");
    d.dim = static_cast<int>(axes.size());
    for (size_t a = 0; a < axes.size(); ++a) {
      d.mean[a] = axes[a][0];
      d.var[a] = axes[a][1];
      if (!(d.var[a] > 0.0))
        throw InvalidArgument("config: key '" + key + "' needs a positive variance");
    }
    return d;
  }
  throw InvalidArgument("config: key '" + key + "' expects gauss(...) or file:..., got '" + v + "'");
}

struct KeyBag {
  std::map<std::string, std::string> kv;
  std::filesystem::path base;

  std::optional<std::string> take(const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  }
  std::string require(const std::string& key) {
    auto v = take(key);
    if (!v) throw InvalidArgument("config: missing required key '" + key + "'");
    return *v;
  }
  void reject_leftovers() const {
    if (!kv.empty()) throw InvalidArgument("config: unknown key '" + kv.begin()->first + "'");
  }
  void reject_if_present(const std::string& key, const std::string& why) {
    if (kv.count(key)) throw InvalidArgument("config: key '" + key + "' " + why);
  }
};

}  // namespace detail

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open " + path);
  detail::KeyBag bag;
  bag.base = std::filesystem::path(path).parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    const size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config: line " + std::to_string(lineno) + " is not key = value");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string val = detail::trim(s.substr(eq + 1));
    if (key.empty() || val.empty())
      throw InvalidArgument("config: line " + std::to_string(lineno) + " has empty key or value");
    if (!bag.kv.emplace(key, val).second)
      throw InvalidArgument("config: duplicate key '" + key + "'");
  }

  ScenarioConfig c;
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  using detail::parse_list;

  c.regime_kind = bag.require("regime.kind");
  const bool coupled = c.regime_kind == "competitive_coupled";
  const bool naive = c.regime_kind == "naive";
  const bool sampled = c.regime_kind == "sampled";
  const bool two_pop = c.regime_kind == "two_populations";
  if (!(c.regime_kind == "aligned" || coupled || c.regime_kind == "competitive_fastx" ||
        c.regime_kind == "competitive_fastrho" || naive || sampled || two_pop))
    throw InvalidArgument("config: unknown regime.kind '" + c.regime_kind + "'");

  c.dim = static_cast<int>(parse_int("grid.dim", bag.require("grid.dim")));
  if (c.dim != 1 && c.dim != 2) throw InvalidArgument("config: grid.dim must be 1 or 2");
  {
    const std::vector<double> lo = parse_list("grid.lower", bag.require("grid.lower"), c.dim);
    const std::vector<double> hi = parse_list("grid.upper", bag.require("grid.upper"), c.dim);
    const std::string cs = bag.require("grid.cells");
    std::vector<double> nc = parse_list("grid.cells", cs, c.dim);
    for (int a = 0; a < c.dim; ++a) {
      c.lower[static_cast<size_t>(a)] = lo[static_cast<size_t>(a)];
      c.upper[static_cast<size_t>(a)] = hi[static_cast<size_t>(a)];
      c.cells[static_cast<size_t>(a)] = static_cast<int>(nc[static_cast<size_t>(a)]);
      if (!(hi[static_cast<size_t>(a)] > lo[static_cast<size_t>(a)]))
        throw InvalidArgument("config: grid.upper must exceed grid.lower");
      if (c.cells[static_cast<size_t>(a)] < 4)
        throw InvalidArgument("config: grid.cells must be at least 4 per axis");
    }
  }

  c.cost_kind = bag.require("model.cost");
  int xdim;
  if (c.cost_kind == "zero") {
    xdim = c.dim;
    bag.reject_if_present("model.slope", "applies to logistic1d only");
  } else if (c.cost_kind == "logistic1d") {
    if (c.dim != 1) throw InvalidArgument("config: logistic1d needs a 1D grid");
    xdim = 1;
    c.slope = parse_double("model.slope", bag.require("model.slope"));
    if (!(c.slope > 0.0)) throw InvalidArgument("config: model.slope must be positive");
  } else if (c.cost_kind == "logistic2d") {
    if (c.dim != 2) throw InvalidArgument("config: logistic2d needs a 2D grid");
    xdim = 2;
    bag.reject_if_present("model.slope", "applies to logistic1d only");
  } else {
    throw InvalidArgument("config: unknown model.cost '" + c.cost_kind + "'");
  }

  c.alpha = parse_double("model.alpha", bag.require("model.alpha"));
  c.beta = parse_double("model.beta", bag.require("model.beta"));
  if (!(c.alpha > 0.0)) throw InvalidArgument("config: model.alpha must be positive");
  if (!(c.beta > 0.0)) throw InvalidArgument("config: model.beta must be positive");
  {
    const std::vector<double> xs = parse_list("model.x0", bag.require("model.x0"), xdim);
    c.x0 = (xdim == 1) ? Vec::scalar(xs[0]) : Vec::of(xs[0], xs[1]);
  }

  c.kernel_kind = bag.take("model.kernel").value_or("none");
  if (c.kernel_kind == "none") {
    bag.reject_if_present("model.kernel_param", "needs a quadratic or consensus kernel");
  } else if (c.kernel_kind == "quadratic" || c.kernel_kind == "consensus") {
    c.kernel_param = parse_double("model.kernel_param", bag.require("model.kernel_param"));
    if (!(c.kernel_param >= 0.0))
      throw InvalidArgument("config: model.kernel_param must be nonnegative");
  } else {
    throw InvalidArgument("config: unknown model.kernel '" + c.kernel_kind + "'");
  }

  c.rho_tilde = detail::parse_distribution("model.rho_tilde", bag.require("model.rho_tilde"), bag.base);
  if (c.rho_tilde.is_file)
    throw InvalidArgument("config: model.rho_tilde must be an analytic gauss(...) spec");
  c.rho_bar = detail::parse_distribution("model.rho_bar", bag.require("model.rho_bar"), bag.base);
  c.rho_init = detail::parse_distribution("model.rho_init", bag.require("model.rho_init"), bag.base);

  if (coupled) {
    if (auto v = bag.take("regime.tau")) c.tau = parse_double("regime.tau", *v);
    if (!(c.tau > 0.0)) throw InvalidArgument("config: regime.tau must be positive");
  } else {
    bag.reject_if_present("regime.tau", "applies to competitive_coupled only");
  }
  if (naive) {
    const std::vector<double> xs = parse_list("regime.fixed_x", bag.require("regime.fixed_x"), xdim);
    c.fixed_x = (xdim == 1) ? Vec::scalar(xs[0]) : Vec::of(xs[0], xs[1]);
  } else {
    bag.reject_if_present("regime.fixed_x", "applies to the naive regime only");
  }
  if (sampled) {
    c.samples = static_cast<int>(parse_int("regime.samples", bag.require("regime.samples")));
    if (c.samples <= 0) throw InvalidArgument("config: regime.samples must be positive");
    if (auto v = bag.take("regime.best_respond")) c.best_respond = parse_bool("regime.best_respond", *v);
  } else {
    bag.reject_if_present("regime.samples", "applies to the sampled regime only");
    bag.reject_if_present("regime.best_respond", "applies to the sampled regime only");
  }
  if (two_pop) {
    c.tau_tilde =
        detail::parse_distribution("model.tau_tilde", bag.require("model.tau_tilde"), bag.base);
    if (c.tau_tilde->is_file)
      throw InvalidArgument("config: model.tau_tilde must be an analytic gauss(...) spec");
    c.tau_init =
        detail::parse_distribution("model.tau_init", bag.require("model.tau_init"), bag.base);
  } else {
    bag.reject_if_present("model.tau_tilde", "applies to two_populations only");
    bag.reject_if_present("model.tau_init", "applies to two_populations only");
  }

  c.t_final = parse_double("time.t_final", bag.require("time.t_final"));
  c.dt = parse_double("time.dt", bag.require("time.dt"));
  if (!(c.t_final >= 0.0)) throw InvalidArgument("config: time.t_final must be nonnegative");
  if (!(c.dt > 0.0)) throw InvalidArgument("config: time.dt must be positive");
  if (auto v = bag.take("time.cfl")) c.cfl = parse_double("time.cfl", *v);
  if (!(c.cfl > 0.0 && c.cfl <= 0.5))
    throw InvalidArgument("config: time.cfl must be in (0,0.5] (positivity)");
  if (auto v = bag.take("time.sample_stride"))
    c.sample_stride = static_cast<int>(parse_int("time.sample_stride", *v));
  if (c.sample_stride <= 0) throw InvalidArgument("config: time.sample_stride must be positive");

  if (auto v = bag.take("solver.newton_tol")) c.newton_tol = parse_double("solver.newton_tol", *v);
  if (auto v = bag.take("solver.gibbs_tol")) c.gibbs_tol = parse_double("solver.gibbs_tol", *v);
  if (auto v = bag.take("solver.gibbs_damping"))
    c.gibbs_damping = parse_double("solver.gibbs_damping", *v);
  if (auto v = bag.take("solver.gibbs_max_iter"))
    c.gibbs_max_iter = static_cast<int>(parse_int("solver.gibbs_max_iter", *v));
  if (!(c.newton_tol > 0.0 && c.gibbs_tol > 0.0))
    throw InvalidArgument("config: solver tolerances must be positive");
  if (!(c.gibbs_damping > 0.0 && c.gibbs_damping <= 1.0))
    throw InvalidArgument("config: solver.gibbs_damping must be in (0,1]");
  if (c.gibbs_max_iter <= 0) throw InvalidArgument("config: solver.gibbs_max_iter must be positive");

  if (auto v = bag.take("seed")) c.seed = static_cast<uint64_t>(parse_int("seed", *v));
  c.sample_seed = c.seed;
  if (sampled) {
    if (auto v = bag.take("regime.sample_seed"))
      c.sample_seed = static_cast<uint64_t>(parse_int("regime.sample_seed", *v));
  } else {
    bag.reject_if_present("regime.sample_seed", "applies to the sampled regime only");
  }
  if (auto v = bag.take("output.dir")) c.out_dir = *v;
  if (auto v = bag.take("output.snapshot_every"))
    c.snapshot_every = static_cast<int>(parse_int("output.snapshot_every", *v));
  if (c.snapshot_every <= 0) throw InvalidArgument("config: output.snapshot_every must be positive");

  bag.reject_leftovers();
  return c;
}

namespace detail {
inline std::string dist_str(const DistributionSpec& d) {
  if (d.is_file) return "file:" + d.path;
  std::string s = "gauss(" + fmt17(d.mean[0]) + "," + fmt17(d.var[0]);
  if (d.dim == 2) s += ";" + fmt17(d.mean[1]) + "," + fmt17(d.var[1]);
  return s + ")";
}
inline std::string vec_str(const Vec& v) {
  std::string s = fmt17(v[0]);
  if (v.dim == 2) s += "," + fmt17(v[1]);
  return s;
}
}  // namespace detail

// Serializes every effective value; load_config(write_config(c)) == c.
inline void write_config(const ScenarioConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("config: cannot write " + path);
  using detail::fmt17;
  out << "regime.kind = " << c.regime_kind << "\n";
  if (c.regime_kind == "competitive_coupled") out << "regime.tau = " << fmt17(c.tau) << "\n";
  if (c.fixed_x) out << "regime.fixed_x = " << detail::vec_str(*c.fixed_x) << "\n";
  if (c.regime_kind == "sampled") {
    out << "regime.samples = " << c.samples << "\n";
    out << "regime.sample_seed = " << c.sample_seed << "\n";
    out << "regime.best_respond = " << (c.best_respond ? "true" : "false") << "\n";
  }
  out << "grid.dim = " << c.dim << "\n";
  out << "grid.lower = " << fmt17(c.lower[0]);
  if (c.dim == 2) out << "," << fmt17(c.lower[1]);
  out << "\ngrid.upper = " << fmt17(c.upper[0]);
  if (c.dim == 2) out << "," << fmt17(c.upper[1]);
  out << "\ngrid.cells = " << c.cells[0];
  if (c.dim == 2) out << "," << c.cells[1];
  out << "\nmodel.cost = " << c.cost_kind << "\n";
  if (c.cost_kind == "logistic1d") out << "model.slope = " << fmt17(c.slope) << "\n";
  out << "model.alpha = " << fmt17(c.alpha) << "\n";
  out << "model.beta = " << fmt17(c.beta) << "\n";
  out << "model.x0 = " << detail::vec_str(c.x0) << "\n";
  out << "model.kernel = " << c.kernel_kind << "\n";
  if (c.kernel_kind != "none") out << "model.kernel_param = " << fmt17(c.kernel_param) << "\n";
  out << "model.rho_tilde = " << detail::dist_str(c.rho_tilde) << "\n";
  out << "model.rho_bar = " << detail::dist_str(c.rho_bar) << "\n";
  out << "model.rho_init = " << detail::dist_str(c.rho_init) << "\n";
  if (c.tau_tilde) out << "model.tau_tilde = " << detail::dist_str(*c.tau_tilde) << "\n";
  if (c.tau_init) out << "model.tau_init = " << detail::dist_str(*c.tau_init) << "\n";
  out << "time.t_final = " << fmt17(c.t_final) << "\n";
  out << "time.dt = " << fmt17(c.dt) << "\n";
  out << "time.cfl = " << fmt17(c.cfl) << "\n";
  out << "time.sample_stride = " << c.sample_stride << "\n";
  out << "solver.newton_tol = " << fmt17(c.newton_tol) << "\n";
  out << "solver.gibbs_tol = " << fmt17(c.gibbs_tol) << "\n";
  out << "solver.gibbs_damping = " << fmt17(c.gibbs_damping) << "\n";
  out << "solver.gibbs_max_iter = " << c.gibbs_max_iter << "\n";
  out << "seed = " << c.seed << "\n";
  out << "output.dir = " << c.out_dir << "\n";
  out << "output.snapshot_every = " << c.snapshot_every << "\n";
  if (!out) throw IoError("config: write failed for " + path);
}

// Everything needed to integrate a loaded scenario.
struct BuiltScenario {
  Grid grid;
  EnergyModel model;
  RunParams params;
};

inline Regime regime_from_config(const ScenarioConfig& c) {
  Regime r;
  if (c.regime_kind == "aligned")
    r.kind = Regime::Kind::Aligned;
  else if (c.regime_kind == "competitive_coupled")
    r.kind = Regime::Kind::CompetitiveCoupled;
  else if (c.regime_kind == "competitive_fastx")
    r.kind = Regime::Kind::CompetitiveFastX;
  else if (c.regime_kind == "competitive_fastrho")
    r.kind = Regime::Kind::CompetitiveFastRho;
  else if (c.regime_kind == "naive")
    r.kind = Regime::Kind::NaiveClassifier;
  else if (c.regime_kind == "sampled")
    r.kind = Regime::Kind::SampledGradient;
  else if (c.regime_kind == "two_populations")
    r.kind = Regime::Kind::TwoPopulations;
  else
    throw InvalidArgument("config: unknown regime.kind '" + c.regime_kind + "'");
  r.tau = c.tau;
  if (c.fixed_x) r.fixed_x = *c.fixed_x;
  r.sample_count = c.samples;
  r.sample_seed = c.sample_seed;
  r.sample_best_respond = c.best_respond;
  return r;
}

inline BuiltScenario build_scenario(const ScenarioConfig& c) {
  const Grid grid = (c.dim == 1)
                        ? Grid::make_1d(c.lower[0], c.upper[0], c.cells[0])
                        : Grid::make_2d(c.lower[0], c.upper[0], c.cells[0], c.lower[1], c.upper[1],
                                        c.cells[1]);
  LogisticCost cost = (c.cost_kind == "zero")     ? LogisticCost::zero(c.dim)
                      : (c.cost_kind == "logistic1d") ? LogisticCost::one_d(c.slope)
                                                      : LogisticCost::two_d();
  InteractionKernel kernel = (c.kernel_kind == "none") ? InteractionKernel::none()
                             : (c.kernel_kind == "quadratic")
                                 ? InteractionKernel::quadratic(c.kernel_param)
                                 : InteractionKernel::consensus(c.kernel_param);
  EnergyModel model = EnergyModel::make(cost, kernel, c.rho_tilde.to_reference(), grid,
                                        c.rho_bar.to_density(grid), c.alpha, c.beta, c.x0);
  RunParams p;
  p.regime = regime_from_config(c);
  p.rho0 = c.rho_init.to_density(grid);
  p.t_final = c.t_final;
  p.dt = c.dt;
  p.sample_stride = c.sample_stride;
  p.solver.cfl = c.cfl;
  p.solver.newton_tol = c.newton_tol;
  p.solver.gibbs_tol = c.gibbs_tol;
  p.solver.gibbs_max_iter = c.gibbs_max_iter;
  p.solver.gibbs_damping = c.gibbs_damping;
  if (p.regime.kind == Regime::Kind::TwoPopulations) {
    TwoPopulationSetup tp{c.tau_tilde->to_reference(), Density{}};
    tp.tau_tilde = discretize(grid, [&](const Vec& z) { return tp.tau_ref.pdf(z); });
    p.two_pop = std::move(tp);
    p.tau0 = c.tau_init->to_density(grid);
  }
  return BuiltScenario{grid, std::move(model), std::move(p)};
}

}  // namespace driftflow
