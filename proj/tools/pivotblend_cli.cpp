// Command-line front end for the pivot-blend library.
//
// Subcommands:
//   fit        joint pivot-blend regression over a CSV
//   twopart    sparse skewed two-part model with penalty selection
//   diagnose   backward-blend residual diagnostics
//   simulate   replicated synthetic experiments (presets or custom TOML)
//   bootstrap  pairs bootstrap percentile intervals for the joint fit
//
// Exit codes: 0 success, 1 user/input error, 2 numerical non-convergence
// (artifacts still written when a fit exists), 3 internal invariant
// violation.  A --config TOML overrides any flag it names.  Wall-clock
// timings are reported on stdout only, so artifact files are byte-identical
// across reruns with the same seed and inputs.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pivotblend/densities.hpp"
#include "pivotblend/diagnostics.hpp"
#include "pivotblend/io.hpp"
#include "pivotblend/simharness.hpp"
#include "pivotblend/speus.hpp"
#include "pivotblend/twopart.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace pivotblend;

// ---------------------------------------------------------------------------
// Small shared helpers.

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd json_vec(const json& a, const std::string& what) {
  if (!a.is_array())
    throw ParseError(what + " must be an array of numbers");
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number())
      throw ParseError(what + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

void write_json_file(const fs::path& path, const json& doc) {
  write_text_file(path.string(), doc.dump(2) + "\n");
}

json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

const json& member(const json& doc, const std::string& key,
                   const std::string& origin) {
  if (!doc.contains(key))
    throw ParseError(origin + ": missing member '" + key + "'");
  return doc.at(key);
}

struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> predictors;
};

Dataset split_table(const CsvTable& table, const std::string& response,
                    const std::string& origin) {
  const int yc = table.column(response);
  if (yc < 0)
    throw std::invalid_argument(origin + ": response column '" + response +
                                "' not found");
  Dataset d;
  d.y = table.values.col(yc);
  d.x.resize(table.values.rows(), table.values.cols() - 1);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
    if (j == yc) continue;
    d.x.col(k++) = table.values.col(j);
    d.predictors.push_back(table.columns[static_cast<std::size_t>(j)]);
  }
  return d;
}

Dataset load_dataset(const std::string& path, const std::string& response) {
  return split_table(read_csv(path), response, path);
}

std::string join(const std::vector<std::string>& parts,
                 const std::string& sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string format_vec(const Eigen::VectorXd& v) {
  std::ostringstream os;
  os.precision(6);
  os << "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// TOML --config access: every key read is marked consumed; unread keys are
// rejected so typos fail loudly instead of being ignored.

class Config {
 public:
  void load(const std::string& path) {
    if (path.empty()) return;
    table_ = read_toml(path);
    origin_ = path;
  }

  bool has(const std::string& key) const { return table_.count(key) != 0; }

  double number(const std::string& key) {
    return want(key, TomlValue::Kind::Number).number;
  }
  std::uint64_t uinteger(const std::string& key) {
    const double d = number(key);
    if (d < 0.0 || d != std::floor(d))
      throw std::invalid_argument(origin_ + ": key '" + key +
                                  "' must be a nonnegative integer");
    return static_cast<std::uint64_t>(d);
  }
  std::string str(const std::string& key) {
    return want(key, TomlValue::Kind::String).str;
  }
  bool boolean(const std::string& key) {
    return want(key, TomlValue::Kind::Boolean).boolean;
  }
  Eigen::VectorXd numbers(const std::string& key) {
    const std::vector<double>& v =
        want(key, TomlValue::Kind::NumberList).numbers;
    return Eigen::Map<const Eigen::VectorXd>(
        v.data(), static_cast<Eigen::Index>(v.size()));
  }

  // Every key must have been consumed by now.
  void finish() const {
    for (const auto& [key, value] : table_)
      if (!consumed_.count(key))
        throw std::invalid_argument(origin_ + ": unknown config key '" + key +
                                    "'");
  }

 private:
  const TomlValue& want(const std::string& key, TomlValue::Kind kind) {
    auto it = table_.find(key);
    if (it == table_.end())
      throw std::invalid_argument(origin_ + ": missing config key '" + key +
                                  "'");
    consumed_.insert(key);
    if (it->second.kind != kind) {
      const char* names[] = {"a boolean", "a number", "a string",
                             "an array of numbers", "an array of strings"};
      throw std::invalid_argument(origin_ + ": key '" + key + "' must be " +
                                  names[static_cast<int>(kind)]);
    }
    return it->second;
  }

  TomlTable table_;
  std::set<std::string> consumed_;
  std::string origin_ = "config";
};

Transform parse_transform(const std::string& name) {
  Transform t;
  if (name == "log") {
    t.kind = TransformKind::Log;
  } else if (name == "identity") {
    t.kind = TransformKind::Identity;
  } else if (name == "sqrt") {
    t.kind = TransformKind::Power;
    t.power = 0.5;
  } else if (name.rfind("power", 0) == 0) {
    t.kind = TransformKind::Power;
    t.power = 0.5;
    if (name.size() > 5) {
      if (name[5] != '(' || name.back() != ')')
        throw std::invalid_argument("unknown transform '" + name +
                                    "'; use log, identity, sqrt, or power(x)");
      t.power = std::stod(name.substr(6, name.size() - 7));
    }
  } else {
    throw std::invalid_argument("unknown transform '" + name +
                                "'; use log, identity, sqrt, or power(x)");
  }
  return t;
}

std::string transform_name(const Transform& t) {
  switch (t.kind) {
    case TransformKind::Log: return "log";
    case TransformKind::Identity: return "identity";
    case TransformKind::Power: {
      std::ostringstream os;
      os << "power(" << t.power << ")";
      return os.str();
    }
  }
  return "log";
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string input;
  std::string response = "y";
  std::string base = "gaussian";
  std::string out = ".";
  std::uint64_t seed = 1;
  double tau = -1.0;
  double m_fixed = 0.0;
  bool has_m_fixed = false;
  bool equal_scales = false;
  std::string config;
};

FitOptions fit_options(const FitArgs& a) {
  FitOptions opts;
  if (a.tau >= 0.0) {
    opts.tau_scale = a.tau;
    opts.tau_pivot = a.tau;
  }
  opts.equal_scales = a.equal_scales;
  if (a.has_m_fixed) {
    opts.fix_m = true;
    opts.m_fixed = a.m_fixed;
  }
  return opts;
}

void apply_config(FitArgs& a) {
  Config cfg;
  cfg.load(a.config);
  if (cfg.has("input")) a.input = cfg.str("input");
  if (cfg.has("response")) a.response = cfg.str("response");
  if (cfg.has("base")) a.base = cfg.str("base");
  if (cfg.has("out")) a.out = cfg.str("out");
  if (cfg.has("seed")) a.seed = cfg.uinteger("seed");
  if (cfg.has("tau")) a.tau = cfg.number("tau");
  if (cfg.has("m-fixed")) {
    a.m_fixed = cfg.number("m-fixed");
    a.has_m_fixed = true;
  }
  if (cfg.has("equal-scales")) a.equal_scales = cfg.boolean("equal-scales");
  cfg.finish();
}

json fit_to_json(const SPFit& fit, const AbsorbResult& absorb,
                 const Dataset& d, const FitArgs& a,
                 const BaseDensity& base) {
  SPDistribution dist(base, fit.skew);
  json doc;
  doc["model"] = "pivot-blend";
  doc["base"] = base.name();
  doc["response"] = a.response;
  doc["predictors"] = d.predictors;
  doc["n"] = static_cast<int>(d.y.size());
  doc["p"] = static_cast<int>(d.x.cols());
  doc["beta"] = vec_json(fit.beta);
  doc["alpha"] = fit.alpha;
  doc["m"] = fit.skew.m;
  doc["sigma"] = fit.skew.sigma;
  doc["nu"] = fit.skew.nu;
  doc["left_mass"] = dist.left_mass();
  doc["objective"] = fit.objective;
  doc["converged"] = fit.converged;
  doc["iters"] = fit.iters;
  doc["grad_norm"] = fit.grad_norm;
  doc["absorb"] = {{"absorbed", absorb.absorbed},
                   {"alpha_prime", absorb.alpha_prime},
                   {"reason", absorb.reason}};
  doc["warnings"] = fit.warnings;
  doc["seed"] = a.seed;
  return doc;
}

int cmd_fit(FitArgs a) {
  apply_config(a);
  Dataset d = load_dataset(a.input, a.response);

  SpeusProblem prob;
  prob.x = d.x;
  prob.y = d.y;
  prob.base = BaseDensity::parse(a.base);
  SPFit fit = speus_fit(prob, fit_options(a));

  const Eigen::Index n = d.y.size();
  Eigen::VectorXd fitted = prob.x * fit.beta;
  fitted.array() += fit.alpha;
  Eigen::VectorXd resid = prob.y - fitted;
  AbsorbResult absorb = absorb_pivot(fit, resid.minCoeff(), resid.maxCoeff());
  WeightedSample back = backward_blend(resid, fit.skew);

  fs::create_directories(a.out);
  Eigen::MatrixXd rtab(n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    rtab(i, 0) = static_cast<double>(i);
    rtab(i, 1) = prob.y[i];
    rtab(i, 2) = fitted[i];
    rtab(i, 3) = resid[i];
    rtab(i, 4) = resid[i] <= fit.skew.m ? -1.0 : 1.0;
    rtab(i, 5) = back.values[i];
  }
  write_csv((fs::path(a.out) / "residuals.csv").string(),
            {"index", "response", "fitted", "residual", "side", "backmapped"},
            rtab);
  write_json_file(fs::path(a.out) / "fit.json",
                  fit_to_json(fit, absorb, d, a, prob.base));

  SPDistribution dist(prob.base, fit.skew);
  std::cout << "pivot-blend fit (base " << prob.base.name() << ", n=" << n
            << ", p=" << d.x.cols() << ")\n"
            << "  beta      = " << format_vec(fit.beta) << "\n"
            << "  alpha     = " << fit.alpha << "\n"
            << "  pivot m   = " << fit.skew.m << ", sigma = " << fit.skew.sigma
            << ", nu = " << fit.skew.nu << "\n"
            << "  left mass = " << dist.left_mass() << "\n"
            << "  objective = " << fit.objective << " ("
            << (fit.converged ? "converged" : "NOT converged") << " in "
            << fit.iters << " iterations, grad " << fit.grad_norm << ")\n"
            << "  pivot absorbable into intercept: "
            << (absorb.absorbed ? "yes" : "no") << " (" << absorb.reason
            << ")\n";
  for (const auto& w : fit.warnings)
    std::cout << "  warning: " << w << "\n";
  return fit.converged ? 0 : 2;
}

// ---------------------------------------------------------------------------
// twopart

struct TwopartArgs {
  std::string input;
  std::string response = "y";
  std::string base = "huber(1.345)";
  std::string transform = "log";
  std::string lambda = "scv";
  int folds = 5;
  double tau = -1.0;
  double q = 2.0;
  double a_const = 1.0;
  std::string out = ".";
  std::uint64_t seed = 1;
  std::string config;
};

void apply_config(TwopartArgs& a) {
  Config cfg;
  cfg.load(a.config);
  if (cfg.has("input")) a.input = cfg.str("input");
  if (cfg.has("response")) a.response = cfg.str("response");
  if (cfg.has("base")) a.base = cfg.str("base");
  if (cfg.has("transform")) a.transform = cfg.str("transform");
  if (cfg.has("lambda")) {
    // Accept either a rule name or a numeric level.
    auto it_kind = cfg.has("lambda");
    (void)it_kind;
    try {
      a.lambda = cfg.str("lambda");
    } catch (const std::invalid_argument&) {
      std::ostringstream os;
      os.precision(17);
      os << cfg.number("lambda");
      a.lambda = os.str();
    }
  }
  if (cfg.has("folds")) a.folds = static_cast<int>(cfg.uinteger("folds"));
  if (cfg.has("tau")) a.tau = cfg.number("tau");
  if (cfg.has("q")) a.q = cfg.number("q");
  if (cfg.has("A")) a.a_const = cfg.number("A");
  if (cfg.has("out")) a.out = cfg.str("out");
  if (cfg.has("seed")) a.seed = cfg.uinteger("seed");
  cfg.finish();
}

void write_diagnostics_bundle(const fs::path& out_dir,
                              const DiagnosticsReport& rep,
                              const BaseDensity& base, const SkewSpec& skew) {
  json doc;
  doc["base"] = base.name();
  doc["m"] = skew.m;
  doc["sigma"] = skew.sigma;
  doc["nu"] = skew.nu;
  doc["n"] = static_cast<int>(rep.sample.values.size());
  doc["n_left"] = rep.sample.n_left;
  doc["n_right"] = rep.sample.n_right;
  doc["q_hat"] = rep.sample.q_hat;
  doc["ks"] = {{"statistic", rep.ks.statistic},
               {"p_value", rep.ks.p_value},
               {"n_eff", rep.ks.n_eff}};
  doc["adequate"] = rep.adequate;
  doc["bandwidth"] = rep.bandwidth;
  doc["histogram"] = {{"edges", vec_json(rep.bin_edges)},
                      {"density", vec_json(rep.bin_density)}};
  doc["kde"] = {{"grid", vec_json(rep.kde_grid)},
                {"density", vec_json(rep.kde_density)},
                {"base_density", vec_json(rep.base_density)}};
  write_json_file(out_dir / "diagnostics.json", doc);

  WeightedEcdf ecdf(rep.sample);
  Eigen::MatrixXd qq(99, 3);
  for (int k = 1; k <= 99; ++k) {
    const double p = k / 100.0;
    qq(k - 1, 0) = p;
    qq(k - 1, 1) = base.quantile(p);
    qq(k - 1, 2) = ecdf.quantile(p);
  }
  write_csv((out_dir / "qq.csv").string(), {"p", "theoretical", "sample"},
            qq);
}

int cmd_twopart(TwopartArgs a) {
  apply_config(a);
  Dataset d = load_dataset(a.input, a.response);

  const int n_zero = static_cast<int>((d.y.array() == 0.0).count());
  const int n_pos = static_cast<int>((d.y.array() > 0.0).count());
  if (n_pos == 0)
    throw std::invalid_argument(
        a.input +
        ": the response is identically zero, so there is no continuous part; "
        "fit a logistic-only model instead");
  if (n_zero == 0)
    throw std::invalid_argument(
        a.input +
        ": the response has no zeros, so there is no binary part; use the "
        "'fit' subcommand (fit-only mode) on the transformed response");

  TwoPartProblem prob;
  prob.x = d.x;
  prob.y = d.y;
  prob.base = BaseDensity::parse(a.base);
  prob.transform = parse_transform(a.transform);
  if (a.tau >= 0.0) prob.tau = a.tau;

  const int n_lambda = 20;
  S2Options opts;
  std::vector<TwoPartFit> path = s2_path(prob, n_lambda, opts);

  TwoPartFit fit;
  std::string rule;
  double lambda_min_val = -1.0, lambda_1se_val = -1.0;
  Eigen::MatrixXd cv_table;
  Eigen::VectorXd cv_grid;
  if (a.lambda == "scv") {
    ScvResult scv = select_lambda_scv(prob, a.folds, n_lambda, a.seed, opts);
    fit = scv.fit;
    rule = "scv-1se";
    lambda_min_val = scv.lambda_min;
    lambda_1se_val = scv.lambda_1se;
    cv_table = scv.cv_table;
    cv_grid = scv.lambda_grid;
  } else if (a.lambda == "theory") {
    // The automatic noise level needs fitted scales; the null-model fit at
    // the top of the path provides them without touching the design.
    const double lam = lambda_theory(prob, path.front().skew, a.q, a.a_const);
    fit = s2_fit(prob, lam, opts);
    rule = "theory";
  } else if (a.lambda == "path") {
    fit = path.back();
    rule = "path-end";
  } else {
    double lam = 0.0;
    try {
      std::size_t used = 0;
      lam = std::stod(a.lambda, &used);
      if (used != a.lambda.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument(
          "--lambda must be a nonnegative number or one of scv, theory, "
          "path (got '" +
          a.lambda + "')");
    }
    if (!(lam >= 0.0))
      throw std::invalid_argument("--lambda must be >= 0");
    fit = s2_fit(prob, lam, opts);
    rule = "fixed";
  }

  fs::create_directories(a.out);
  const fs::path out_dir(a.out);

  Eigen::MatrixXd ptab(static_cast<Eigen::Index>(path.size()), 4);
  for (std::size_t i = 0; i < path.size(); ++i) {
    ptab(static_cast<Eigen::Index>(i), 0) = path[i].lambda;
    ptab(static_cast<Eigen::Index>(i), 1) =
        static_cast<double>(path[i].support.size());
    ptab(static_cast<Eigen::Index>(i), 2) = path[i].objective;
    ptab(static_cast<Eigen::Index>(i), 3) = path[i].converged ? 1.0 : 0.0;
  }
  write_csv((out_dir / "path.csv").string(),
            {"lambda", "support_size", "objective", "converged"}, ptab);

  if (rule == "scv-1se") {
    Eigen::MatrixXd ctab(cv_table.rows() * cv_table.cols(), 3);
    Eigen::Index r = 0;
    for (Eigen::Index k = 0; k < cv_table.cols(); ++k)
      for (Eigen::Index f = 0; f < cv_table.rows(); ++f) {
        ctab(r, 0) = cv_grid[k];
        ctab(r, 1) = static_cast<double>(f);
        ctab(r, 2) = cv_table(f, k);
        ++r;
      }
    write_csv((out_dir / "cv.csv").string(), {"lambda", "fold", "val_nll"},
              ctab);
  }

  TwoPartData data = two_part_partition(prob);
  Eigen::VectorXd resid = data.ty - data.x_pos * fit.beta;
  resid.array() -= fit.alpha;
  DiagnosticsReport rep = diagnose(resid, fit.skew, prob.base);
  write_diagnostics_bundle(out_dir, rep, prob.base, fit.skew);

  std::vector<std::string> support_names;
  for (int kcol : fit.support)
    support_names.push_back(d.predictors[static_cast<std::size_t>(kcol)]);

  json doc;
  doc["model"] = "sparse-two-part";
  doc["base"] = prob.base.name();
  doc["transform"] = transform_name(prob.transform);
  doc["response"] = a.response;
  doc["predictors"] = d.predictors;
  doc["n"] = static_cast<int>(d.y.size());
  doc["n_pos"] = data.n_pos;
  doc["p"] = static_cast<int>(d.x.cols());
  doc["lambda"] = fit.lambda;
  doc["lambda_rule"] = rule;
  if (rule == "scv-1se") {
    doc["lambda_min"] = lambda_min_val;
    doc["lambda_1se"] = lambda_1se_val;
  }
  doc["beta"] = vec_json(fit.beta);
  doc["alpha"] = fit.alpha;
  doc["b"] = vec_json(fit.b);
  doc["b0"] = fit.b0;
  doc["m"] = fit.skew.m;
  doc["sigma"] = fit.skew.sigma;
  doc["nu"] = fit.skew.nu;
  doc["support"] = fit.support;
  doc["support_names"] = support_names;
  doc["objective"] = fit.objective;
  doc["converged"] = fit.converged;
  doc["outer_iters"] = fit.outer_iters;
  json warn = json::array();
  for (const auto& w : fit.warnings) warn.push_back(w);
  for (const auto& w : data.warnings) warn.push_back(w);
  doc["warnings"] = warn;
  doc["seed"] = a.seed;
  write_json_file(out_dir / "fit.json", doc);

  std::cout << "sparse two-part fit (base " << prob.base.name()
            << ", transform " << transform_name(prob.transform)
            << ", n=" << d.y.size() << ", n_pos=" << data.n_pos
            << ", p=" << d.x.cols() << ")\n"
            << "  lambda = " << fit.lambda << " (" << rule;
  if (rule == "scv-1se")
    std::cout << "; lambda_min = " << lambda_min_val;
  std::cout << ")\n"
            << "  support (" << fit.support.size() << " of " << d.x.cols()
            << "): " << (support_names.empty() ? std::string("empty")
                                               : join(support_names))
            << "\n"
            << "  continuous part: beta = " << format_vec(fit.beta)
            << ", alpha = " << fit.alpha << "\n"
            << "  binary part:     b = " << format_vec(fit.b)
            << ", b0 = " << fit.b0 << "\n"
            << "  skew: m = " << fit.skew.m << ", sigma = " << fit.skew.sigma
            << ", nu = " << fit.skew.nu << "\n"
            << "  objective = " << fit.objective << " ("
            << (fit.converged ? "converged" : "NOT converged") << " in "
            << fit.outer_iters << " outer iterations)\n"
            << "  continuous-part diagnostics: KS p = " << rep.ks.p_value
            << " -> " << (rep.adequate ? "fit adequate" : "fit NOT adequate")
            << "\n";
  return fit.converged ? 0 : 2;
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseArgs {
  std::string input;
  std::string fit_path;
  std::string response = "y";
  std::string base = "gaussian";
  std::string out = ".";
  std::uint64_t seed = 1;
  double tau = -1.0;
  double m_fixed = 0.0;
  bool has_m_fixed = false;
  bool equal_scales = false;
  std::string config;
};

void apply_config(DiagnoseArgs& a) {
  Config cfg;
  cfg.load(a.config);
  if (cfg.has("input")) a.input = cfg.str("input");
  if (cfg.has("fit")) a.fit_path = cfg.str("fit");
  if (cfg.has("response")) a.response = cfg.str("response");
  if (cfg.has("base")) a.base = cfg.str("base");
  if (cfg.has("out")) a.out = cfg.str("out");
  if (cfg.has("seed")) a.seed = cfg.uinteger("seed");
  if (cfg.has("tau")) a.tau = cfg.number("tau");
  if (cfg.has("m-fixed")) {
    a.m_fixed = cfg.number("m-fixed");
    a.has_m_fixed = true;
  }
  if (cfg.has("equal-scales")) a.equal_scales = cfg.boolean("equal-scales");
  cfg.finish();
}

int cmd_diagnose(DiagnoseArgs a) {
  apply_config(a);

  Eigen::VectorXd resid;
  BaseDensity base = BaseDensity::parse(a.base);
  SkewSpec skew;
  if (!a.fit_path.empty()) {
    const json jf = parse_json_file(a.fit_path);
    const std::string fit_response =
        member(jf, "response", a.fit_path).get<std::string>();
    std::vector<std::string> fit_preds;
    for (const auto& name : member(jf, "predictors", a.fit_path))
      fit_preds.push_back(name.get<std::string>());

    CsvTable table = read_csv(a.input);
    std::set<std::string> have(table.columns.begin(), table.columns.end());
    std::set<std::string> want(fit_preds.begin(), fit_preds.end());
    want.insert(fit_response);
    if (have != want) {
      std::vector<std::string> have_v(have.begin(), have.end());
      std::vector<std::string> want_v(want.begin(), want.end());
      throw std::invalid_argument(
          "fit/data mismatch (column sets differ): the fit expects {" +
          join(want_v) + "} but " + a.input + " has {" + join(have_v) + "}");
    }

    base = BaseDensity::parse(
        member(jf, "base", a.fit_path).get<std::string>());
    skew.m = member(jf, "m", a.fit_path).get<double>();
    skew.sigma = member(jf, "sigma", a.fit_path).get<double>();
    skew.nu = member(jf, "nu", a.fit_path).get<double>();
    const Eigen::VectorXd beta =
        json_vec(member(jf, "beta", a.fit_path), a.fit_path + ": beta");
    const double alpha = member(jf, "alpha", a.fit_path).get<double>();

    Eigen::VectorXd y = table.values.col(table.column(fit_response));
    resid = y;
    resid.array() -= alpha;
    for (std::size_t k = 0; k < fit_preds.size(); ++k)
      resid -= beta[static_cast<Eigen::Index>(k)] *
               table.values.col(table.column(fit_preds[k]));
  } else {
    Dataset d = load_dataset(a.input, a.response);
    SpeusProblem prob;
    prob.x = d.x;
    prob.y = d.y;
    prob.base = base;
    FitArgs fa;
    fa.tau = a.tau;
    fa.m_fixed = a.m_fixed;
    fa.has_m_fixed = a.has_m_fixed;
    fa.equal_scales = a.equal_scales;
    SPFit fit = speus_fit(prob, fit_options(fa));
    skew = fit.skew;
    resid = prob.y - prob.x * fit.beta;
    resid.array() -= fit.alpha;
  }

  DiagnosticsReport rep = diagnose(resid, skew, base);
  fs::create_directories(a.out);
  write_diagnostics_bundle(fs::path(a.out), rep, base, skew);

  std::cout << "backward-blend diagnostics (base " << base.name()
            << ", n=" << resid.size() << ")\n"
            << "  m = " << skew.m << ", sigma = " << skew.sigma
            << ", nu = " << skew.nu << "\n"
            << "  branch split: " << rep.sample.n_left << " left / "
            << rep.sample.n_right << " right, base left mass q_hat = "
            << rep.sample.q_hat << "\n"
            << "  weighted KS = " << rep.ks.statistic
            << ", p = " << rep.ks.p_value << " (n_eff " << rep.ks.n_eff
            << ")\n"
            << "  verdict: "
            << (rep.adequate ? "skewness addressed (fit adequate)"
                             : "fit NOT adequate (KS p <= 0.05)")
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string preset_name;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  int reps = -1;
  long long seed = -1;
  std::string out = ".";
  std::string config;
};

int cmd_simulate(SimulateArgs a) {
  Config cfg;
  cfg.load(a.config);
  if (cfg.has("ratio")) a.ratio = cfg.number("ratio");
  if (cfg.has("reps")) a.reps = static_cast<int>(cfg.uinteger("reps"));
  if (cfg.has("seed")) a.seed = static_cast<long long>(cfg.uinteger("seed"));
  if (cfg.has("out")) a.out = cfg.str("out");

  const bool custom = cfg.has("design.n") || cfg.has("truth.beta");
  ExperimentSpec spec;
  std::string preset_label;
  double ratio_label = 0.0;
  if (custom) {
    if (!a.preset_name.empty())
      throw std::invalid_argument(
          "simulate: give either a preset name or a [design]/[truth] config, "
          "not both");
    preset_label = "custom";
    spec.truth.beta_star = cfg.numbers("truth.beta");
    spec.design.n = static_cast<int>(cfg.uinteger("design.n"));
    spec.design.p = cfg.has("design.p")
                        ? static_cast<int>(cfg.uinteger("design.p"))
                        : static_cast<int>(spec.truth.beta_star.size());
    if (cfg.has("design.kappa")) spec.design.kappa = cfg.number("design.kappa");
    if (cfg.has("design.seed")) spec.design.seed = cfg.uinteger("design.seed");
    if (cfg.has("truth.alpha")) spec.truth.alpha_star = cfg.number("truth.alpha");
    if (cfg.has("truth.m")) spec.truth.skew_star.m = cfg.number("truth.m");
    if (cfg.has("truth.sigma"))
      spec.truth.skew_star.sigma = cfg.number("truth.sigma");
    if (cfg.has("truth.nu")) spec.truth.skew_star.nu = cfg.number("truth.nu");
    if (cfg.has("truth.base"))
      spec.truth.base = BaseDensity::parse(cfg.str("truth.base"));
    if (cfg.has("truth.noiseless"))
      spec.truth.noiseless = cfg.boolean("truth.noiseless");
    if (cfg.has("replications"))
      spec.replications = static_cast<int>(cfg.uinteger("replications"));
  } else {
    if (a.preset_name.empty())
      throw std::invalid_argument(
          "simulate: name a preset (" + join(preset_names()) +
          ") or supply a [design]/[truth] config");
    if (std::isnan(a.ratio))
      throw std::invalid_argument("simulate: --ratio is required with preset '" +
                                  a.preset_name + "'");
    spec = preset(a.preset_name, a.ratio);
    preset_label = a.preset_name;
    ratio_label = a.ratio;
  }
  cfg.finish();
  if (a.reps >= 0) spec.replications = a.reps;
  if (a.seed >= 0) spec.design.seed = static_cast<std::uint64_t>(a.seed);

  ExperimentResult res = run_experiment(spec);

  fs::create_directories(a.out);
  const fs::path out_dir(a.out);
  const int p = spec.design.p;

  // Per-replication table; failed rows keep zero placeholders and ok=0.
  Eigen::MatrixXd rtab(static_cast<Eigen::Index>(res.rows.size()), p + 6);
  rtab.setZero();
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const ReplicationRow& row = res.rows[i];
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    rtab(r, 0) = row.rep;
    rtab(r, 1) = row.ok ? 1.0 : 0.0;
    if (row.ok) {
      for (int j = 0; j < p; ++j) rtab(r, 2 + j) = row.beta[j];
      rtab(r, p + 2) = row.alpha;
      rtab(r, p + 3) = row.skew.sigma;
      rtab(r, p + 4) = row.skew.nu;
      rtab(r, p + 5) = row.skew.m;
    }
  }
  std::vector<std::string> rcols = {"rep", "ok"};
  for (int j = 0; j < p; ++j) rcols.push_back("beta_" + std::to_string(j));
  rcols.insert(rcols.end(), {"alpha", "sigma", "nu", "m"});
  write_csv((out_dir / "replications.csv").string(), rcols, rtab);

  Eigen::MatrixXd mtab(1, 7);
  mtab << ratio_label, res.metrics.err_beta, res.metrics.err_sigma,
      res.metrics.err_nu, res.metrics.err_m,
      static_cast<double>(res.metrics.used),
      static_cast<double>(res.metrics.failures);
  write_csv((out_dir / "metrics.csv").string(),
            {"ratio", "err_beta", "err_sigma", "err_nu", "err_m", "used",
             "failures"},
            mtab);

  json doc;
  doc["preset"] = preset_label;
  doc["ratio"] = ratio_label;
  doc["design"] = {{"n", spec.design.n},
                   {"p", spec.design.p},
                   {"kappa", spec.design.kappa},
                   {"seed", spec.design.seed}};
  doc["truth"] = {{"beta", vec_json(spec.truth.beta_star)},
                  {"alpha", spec.truth.alpha_star},
                  {"m", spec.truth.skew_star.m},
                  {"sigma", spec.truth.skew_star.sigma},
                  {"nu", spec.truth.skew_star.nu},
                  {"base", spec.truth.base.name()},
                  {"noiseless", spec.truth.noiseless}};
  doc["replications"] = spec.replications;
  doc["metrics"] = {{"err_beta", res.metrics.err_beta},
                    {"err_sigma", res.metrics.err_sigma},
                    {"err_nu", res.metrics.err_nu},
                    {"err_m", res.metrics.err_m},
                    {"used", res.metrics.used},
                    {"failures", res.metrics.failures}};
  write_json_file(out_dir / "metrics.json", doc);

  std::cout << preset_label;
  if (!custom) std::cout << " (ratio " << ratio_label << ")";
  std::cout << ": " << spec.replications << " replications, "
            << res.metrics.failures << " failures\n"
            << "  Err(beta) = " << res.metrics.err_beta
            << "  Err(sigma) = " << res.metrics.err_sigma
            << "  Err(nu) = " << res.metrics.err_nu
            << "  Err(m) = " << res.metrics.err_m << "\n"
            << "  mean fit time " << res.metrics.mean_runtime << " s\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bootstrap

struct BootstrapArgs {
  std::string input;
  std::string response = "y";
  std::string base = "gaussian";
  int b_draws = 100;
  double level = 0.90;
  std::string out = ".";
  std::uint64_t seed = 1;
  double tau = -1.0;
  double m_fixed = 0.0;
  bool has_m_fixed = false;
  bool equal_scales = false;
  std::string config;
};

void apply_config(BootstrapArgs& a) {
  Config cfg;
  cfg.load(a.config);
  if (cfg.has("input")) a.input = cfg.str("input");
  if (cfg.has("response")) a.response = cfg.str("response");
  if (cfg.has("base")) a.base = cfg.str("base");
  if (cfg.has("B")) a.b_draws = static_cast<int>(cfg.uinteger("B"));
  if (cfg.has("level")) a.level = cfg.number("level");
  if (cfg.has("out")) a.out = cfg.str("out");
  if (cfg.has("seed")) a.seed = cfg.uinteger("seed");
  if (cfg.has("tau")) a.tau = cfg.number("tau");
  if (cfg.has("m-fixed")) {
    a.m_fixed = cfg.number("m-fixed");
    a.has_m_fixed = true;
  }
  if (cfg.has("equal-scales")) a.equal_scales = cfg.boolean("equal-scales");
  cfg.finish();
}

int cmd_bootstrap(BootstrapArgs a) {
  apply_config(a);
  Dataset d = load_dataset(a.input, a.response);

  FitArgs fa;
  fa.tau = a.tau;
  fa.m_fixed = a.m_fixed;
  fa.has_m_fixed = a.has_m_fixed;
  fa.equal_scales = a.equal_scales;
  BootstrapResult res =
      bootstrap(d.x, d.y, BaseDensity::parse(a.base), a.b_draws, a.level,
                a.seed, fit_options(fa));

  fs::create_directories(a.out);
  const fs::path out_dir(a.out);
  const int p = static_cast<int>(d.x.cols());

  // Successful draws only: the CSV dialect has no missing-value marker.
  std::vector<Eigen::Index> kept;
  for (Eigen::Index r = 0; r < res.draws.rows(); ++r)
    if (res.draws.row(r).allFinite()) kept.push_back(r);
  Eigen::MatrixXd dtab(static_cast<Eigen::Index>(kept.size()),
                       res.draws.cols());
  for (std::size_t i = 0; i < kept.size(); ++i)
    dtab.row(static_cast<Eigen::Index>(i)) = res.draws.row(kept[i]);
  std::vector<std::string> dcols;
  for (int j = 0; j < p; ++j) dcols.push_back("beta_" + std::to_string(j));
  dcols.insert(dcols.end(), {"alpha", "sigma", "nu", "m"});
  write_csv((out_dir / "draws.csv").string(), dcols, dtab);

  json doc;
  doc["level"] = a.level;
  doc["draws"] = a.b_draws;
  doc["used"] = static_cast<int>(kept.size());
  doc["failures"] = res.failures;
  doc["reliable"] = res.reliable;
  doc["estimate"] = {{"beta", vec_json(res.full_fit.beta)},
                     {"alpha", res.full_fit.alpha},
                     {"m", res.full_fit.skew.m},
                     {"sigma", res.full_fit.skew.sigma},
                     {"nu", res.full_fit.skew.nu}};
  doc["m"] = {res.ci_m[0], res.ci_m[1]};
  doc["sigma"] = {res.ci_sigma[0], res.ci_sigma[1]};
  doc["nu"] = {res.ci_nu[0], res.ci_nu[1]};
  json betas = json::array();
  for (int j = 0; j < p; ++j)
    betas.push_back({res.ci_beta(j, 0), res.ci_beta(j, 1)});
  doc["beta"] = betas;
  doc["warnings"] = res.warnings;
  write_json_file(out_dir / "intervals.json", doc);

  std::cout << "pairs bootstrap (" << a.b_draws << " draws, "
            << res.failures << " failures, level " << a.level << ")\n"
            << "  m     in [" << res.ci_m[0] << ", " << res.ci_m[1] << "]\n"
            << "  sigma in [" << res.ci_sigma[0] << ", " << res.ci_sigma[1]
            << "]\n"
            << "  nu    in [" << res.ci_nu[0] << ", " << res.ci_nu[1] << "]\n";
  for (int j = 0; j < p; ++j)
    std::cout << "  beta_" << j << " in [" << res.ci_beta(j, 0) << ", "
              << res.ci_beta(j, 1) << "]\n";
  if (!res.reliable)
    std::cout << "  UNRELIABLE: " << join(res.warnings, "; ") << "\n";
  return res.full_fit.converged ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Skewed pivot-blend models: joint fits, sparse two-part selection, "
      "residual diagnostics, synthetic experiments, and bootstrap intervals"};
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand(
      "fit", "Joint pivot-blend regression fit over a CSV");
  fit->add_option("--input", fit_args.input, "Input CSV path")->required();
  fit->add_option("--response", fit_args.response,
                  "Response column name (default y)");
  fit->add_option("--base", fit_args.base,
                  "Base density, e.g. gaussian, laplace, huber(1.345)");
  fit->add_option("--out", fit_args.out, "Output directory");
  fit->add_option("--seed", fit_args.seed, "Seed echoed into artifacts");
  fit->add_option("--tau", fit_args.tau, "Ridge strength for scales and pivot");
  CLI::Option* fit_m =
      fit->add_option("--m-fixed", fit_args.m_fixed, "Pin the pivot");
  fit->add_flag("--equal-scales", fit_args.equal_scales,
                "Constrain sigma == nu");
  fit->add_option("--config", fit_args.config,
                  "TOML config; overrides flags it names");

  TwopartArgs tp_args;
  CLI::App* tp = app.add_subcommand(
      "twopart", "Sparse skewed two-part model for semicontinuous responses");
  tp->add_option("--input", tp_args.input, "Input CSV path")->required();
  tp->add_option("--response", tp_args.response, "Response column name");
  tp->add_option("--base", tp_args.base, "Base density for the positives");
  tp->add_option("--transform", tp_args.transform,
                 "Response transform: log, identity, sqrt, power(x)");
  tp->add_option("--lambda", tp_args.lambda,
                 "Penalty level: a number, scv, theory, or path");
  tp->add_option("--folds", tp_args.folds, "Cross-validation folds");
  tp->add_option("--tau", tp_args.tau, "Ridge strength for scales and pivot");
  tp->add_option("--q", tp_args.q, "Tail exponent for --lambda theory");
  tp->add_option("--A", tp_args.a_const, "Constant for --lambda theory");
  tp->add_option("--out", tp_args.out, "Output directory");
  tp->add_option("--seed", tp_args.seed, "Cross-validation fold seed");
  tp->add_option("--config", tp_args.config,
                 "TOML config; overrides flags it names");

  DiagnoseArgs dg_args;
  CLI::App* dg = app.add_subcommand(
      "diagnose", "Backward-blend residual diagnostics");
  dg->add_option("--input", dg_args.input, "Input CSV path")->required();
  dg->add_option("--fit", dg_args.fit_path,
                 "Prior fit.json; omitted means fit the data first");
  dg->add_option("--response", dg_args.response, "Response column name");
  dg->add_option("--base", dg_args.base, "Base density when fitting here");
  dg->add_option("--out", dg_args.out, "Output directory");
  dg->add_option("--seed", dg_args.seed, "Accepted for interface symmetry");
  dg->add_option("--tau", dg_args.tau, "Ridge strength when fitting here");
  CLI::Option* dg_m =
      dg->add_option("--m-fixed", dg_args.m_fixed, "Pin the pivot");
  dg->add_flag("--equal-scales", dg_args.equal_scales,
               "Constrain sigma == nu when fitting here");
  dg->add_option("--config", dg_args.config,
                 "TOML config; overrides flags it names");

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand(
      "simulate", "Replicated synthetic experiments (presets or custom TOML)");
  sim->add_option("preset", sim_args.preset_name,
                  "Preset name: " + join(preset_names()));
  sim->add_option("--ratio", sim_args.ratio, "Scale ratio within the preset");
  sim->add_option("--reps", sim_args.reps, "Replication count override");
  sim->add_option("--seed", sim_args.seed, "Design seed override");
  sim->add_option("--out", sim_args.out, "Output directory");
  sim->add_option("--config", sim_args.config,
                  "TOML config; overrides flags, or a [design]/[truth] spec");

  BootstrapArgs bs_args;
  CLI::App* bs = app.add_subcommand(
      "bootstrap", "Pairs bootstrap percentile intervals for the joint fit");
  bs->add_option("--input", bs_args.input, "Input CSV path")->required();
  bs->add_option("--response", bs_args.response, "Response column name");
  bs->add_option("--base", bs_args.base, "Base density");
  bs->add_option("--B", bs_args.b_draws, "Bootstrap draws");
  bs->add_option("--level", bs_args.level, "Interval level in (0,1)");
  bs->add_option("--out", bs_args.out, "Output directory");
  bs->add_option("--seed", bs_args.seed, "Resampling seed");
  bs->add_option("--tau", bs_args.tau, "Ridge strength for scales and pivot");
  CLI::Option* bs_m =
      bs->add_option("--m-fixed", bs_args.m_fixed, "Pin the pivot");
  bs->add_flag("--equal-scales", bs_args.equal_scales,
               "Constrain sigma == nu");
  bs->add_option("--config", bs_args.config,
                 "TOML config; overrides flags it names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  fit_args.has_m_fixed = fit_m->count() > 0;
  dg_args.has_m_fixed = dg_m->count() > 0;
  bs_args.has_m_fixed = bs_m->count() > 0;

  try {
    if (fit->parsed()) return cmd_fit(fit_args);
    if (tp->parsed()) return cmd_twopart(tp_args);
    if (dg->parsed()) return cmd_diagnose(dg_args);
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (bs->parsed()) return cmd_bootstrap(bs_args);
  } catch (const OptimizationFailure& e) {
    std::cerr << "error: optimization failed: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::logic_error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
