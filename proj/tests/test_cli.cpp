// End-to-end tests for the command-line tool: frozen golden artifacts,
// JSON schema conformance, error messages that name the offending row or
// column, byte-identical reruns, and config-file precedence over flags.
//
// Golden artifact values in tests/data/*_golden.json were frozen from
// tolerance-verified runs whose parameter estimates were checked against
// the generating truth of the bundled datasets.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "pivotblend/densities.hpp"
#include "pivotblend/io.hpp"
#include "pivotblend/jsonschema.hpp"
#include "pivotblend/twopart.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pivotblend;

namespace {

std::string data_file(const std::string& name) {
  return (fs::path(PB_TEST_DATA_DIR) / name).string();
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::path("cli_scratch") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI with stdout/stderr captured into the scratch directory.
RunResult run_cli(const std::string& args, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string out_path = (dir / "stdout.txt").string();
  const std::string err_path = (dir / "stderr.txt").string();
  const std::string cmd = std::string(PB_CLI_PATH) + " " + args + " > " +
                          out_path + " 2> " + err_path;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text_file(out_path);
  r.err = read_text_file(err_path);
  return r;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

json load_json(const fs::path& path) {
  return json::parse(read_text_file(path.string()));
}

void expect_schema_ok(const fs::path& doc_path,
                      const std::string& schema_name) {
  const json doc = load_json(doc_path);
  const json schema = load_json(fs::path(PB_SCHEMA_DIR) / schema_name);
  const std::string err = schema_validate(doc, schema);
  INFO(doc_path.string() << " vs " << schema_name << ": " << err);
  CHECK(err.empty());
}

// Recursive structural comparison: numbers within a mixed absolute/relative
// tolerance, everything else exactly.
void check_json_close(const json& got, const json& want,
                      const std::string& where) {
  INFO("at " << where);
  if (want.is_number() && got.is_number()) {
    CHECK(got.get<double>() ==
          doctest::Approx(want.get<double>()).epsilon(1e-6));
    return;
  }
  REQUIRE(got.type() == want.type());
  if (want.is_object()) {
    for (auto it = want.begin(); it != want.end(); ++it) {
      INFO("missing member " << it.key());
      REQUIRE(got.contains(it.key()));
      check_json_close(got.at(it.key()), it.value(), where + "/" + it.key());
    }
    CHECK(got.size() == want.size());
  } else if (want.is_array()) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
      check_json_close(got[i], want[i], where + "/" + std::to_string(i));
  } else {
    CHECK(got == want);
  }
}

// Ordinary least squares on a single-predictor table, reported in the same
// layout as a stored joint fit but with a symmetric residual model
// (equal scales, pivot at zero).  Used to probe the diagnostics verdict.
json symmetric_ls_fit(const std::string& csv_path) {
  CsvTable t = read_csv(csv_path);
  const Eigen::VectorXd x = t.values.col(t.column("x1"));
  const Eigen::VectorXd y = t.values.col(t.column("y"));
  const double xm = x.mean();
  const double ym = y.mean();
  const double sxx = (x.array() - xm).square().sum();
  const double sxy = ((x.array() - xm) * (y.array() - ym)).sum();
  const double slope = sxy / sxx;
  const double intercept = ym - slope * xm;
  Eigen::VectorXd r = y - slope * x;
  r.array() -= intercept;
  const double scale = std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
  json jf;
  jf["response"] = "y";
  jf["predictors"] = json::array({"x1"});
  jf["base"] = "gaussian";
  jf["beta"] = json::array({slope});
  jf["alpha"] = intercept;
  jf["m"] = 0.0;
  jf["sigma"] = scale;
  jf["nu"] = scale;
  return jf;
}

}  // namespace

TEST_CASE("fit reproduces the frozen golden artifact") {
  const fs::path dir = scratch("fit_golden");
  const fs::path out_a = dir / "a";
  RunResult r = run_cli(
      "fit --input " + data_file("tiny_fit.csv") + " --out " + out_a.string(),
      dir);
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "converged"));

  const json got = load_json(out_a / "fit.json");
  const json want = load_json(data_file("tiny_fit_golden.json"));
  check_json_close(got, want, "fit.json");
  expect_schema_ok(out_a / "fit.json", "fit.schema.json");

  // Residual table: one row per observation, residual == response - fitted,
  // side flags match the fitted pivot.
  CsvTable resid = read_csv((out_a / "residuals.csv").string());
  const std::vector<std::string> cols = {"index",    "response", "fitted",
                                         "residual", "side",     "backmapped"};
  CHECK(resid.columns == cols);
  REQUIRE(resid.values.rows() == 10);
  const double m_hat = want.at("m").get<double>();
  for (Eigen::Index i = 0; i < resid.values.rows(); ++i) {
    const double res = resid.values(i, 3);
    CHECK(res == doctest::Approx(resid.values(i, 1) - resid.values(i, 2))
                     .epsilon(1e-12));
    CHECK(resid.values(i, 4) == (res <= m_hat ? -1.0 : 1.0));
  }

  // A rerun with the same inputs writes byte-identical artifacts.
  const fs::path out_b = dir / "b";
  RunResult r2 = run_cli(
      "fit --input " + data_file("tiny_fit.csv") + " --out " + out_b.string(),
      dir);
  REQUIRE(r2.code == 0);
  CHECK(read_text_file((out_a / "fit.json").string()) ==
        read_text_file((out_b / "fit.json").string()));
  CHECK(read_text_file((out_a / "residuals.csv").string()) ==
        read_text_file((out_b / "residuals.csv").string()));
}

TEST_CASE("fit honors base selection and a pinned pivot") {
  const fs::path dir = scratch("fit_pinned");
  RunResult r = run_cli("fit --input " + data_file("tiny_fit.csv") +
                            " --base laplace --m-fixed 0 --out " +
                            dir.string(),
                        dir);
  REQUIRE(r.code == 0);
  const json jf = load_json(dir / "fit.json");
  CHECK(jf.at("base") == "laplace");
  CHECK(jf.at("m").get<double>() == 0.0);
  CHECK(jf.at("sigma").get<double>() > 0.0);
  CHECK(jf.at("nu").get<double>() > 0.0);
  expect_schema_ok(dir / "fit.json", "fit.schema.json");
}

TEST_CASE("fit names the offending row or column on malformed input") {
  const fs::path dir = scratch("fit_errors");

  SUBCASE("ragged row is reported with its line number") {
    const std::string path = (dir / "ragged.csv").string();
    write_text_file(path, "x1,x2,y\n1,2,3\n4,5\n");
    RunResult r = run_cli("fit --input " + path, dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "ragged.csv:3"));
    CHECK(contains(r.err, "header has 3"));
  }

  SUBCASE("non-numeric cell is reported with its column") {
    const std::string path = (dir / "na.csv").string();
    write_text_file(path, "x1,y\n1,2\n3,NA\n");
    RunResult r = run_cli("fit --input " + path, dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "column 'y'"));
    CHECK(contains(r.err, "NA"));
  }

  SUBCASE("missing response column") {
    RunResult r = run_cli(
        "fit --input " + data_file("tiny_fit.csv") + " --response z", dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "response column 'z' not found"));
  }

  SUBCASE("missing input file") {
    RunResult r = run_cli("fit --input " + (dir / "absent.csv").string(), dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "absent.csv"));
  }
}

TEST_CASE("twopart reproduces the frozen cross-validated artifact") {
  const fs::path dir = scratch("twopart_golden");
  RunResult r = run_cli("twopart --input " + data_file("semicont.csv") +
                            " --seed 7 --out " + dir.string(),
                        dir);
  REQUIRE(r.code == 0);

  const json got = load_json(dir / "fit.json");
  const json want = load_json(data_file("semicont_golden.json"));
  check_json_close(got, want, "fit.json");
  CHECK(got.at("support") == json::array({0, 2}));
  CHECK(got.at("support_names") == json::array({"x1", "x3"}));
  expect_schema_ok(dir / "fit.json", "twopart_fit.schema.json");
  expect_schema_ok(dir / "diagnostics.json", "diagnostics.schema.json");

  CsvTable path_tab = read_csv((dir / "path.csv").string());
  CHECK(path_tab.columns == std::vector<std::string>{
                                "lambda", "support_size", "objective",
                                "converged"});
  CHECK(path_tab.values.rows() == 20);

  CsvTable cv_tab = read_csv((dir / "cv.csv").string());
  CHECK(cv_tab.columns ==
        std::vector<std::string>{"lambda", "fold", "val_nll"});
  CHECK(cv_tab.values.rows() == 5 * 20);

  CsvTable qq = read_csv((dir / "qq.csv").string());
  CHECK(qq.columns ==
        std::vector<std::string>{"p", "theoretical", "sample"});
  CHECK(qq.values.rows() == 99);
}

TEST_CASE("twopart plug-in penalty matches the library rule") {
  const fs::path dir = scratch("twopart_theory");
  RunResult r = run_cli("twopart --input " + data_file("semicont.csv") +
                            " --lambda theory --q 2 --A 1 --out " +
                            dir.string(),
                        dir);
  REQUIRE(r.code == 0);
  const json jf = load_json(dir / "fit.json");
  CHECK(jf.at("lambda_rule") == "theory");

  // Reproduce the rule in-process: the null-model fit at the top of the
  // path supplies the scales for the automatic noise level.
  CsvTable t = read_csv(data_file("semicont.csv"));
  TwoPartProblem prob;
  prob.y = t.values.col(t.column("y"));
  prob.x.resize(t.values.rows(), t.values.cols() - 1);
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < t.values.cols(); ++j)
    if (t.columns[static_cast<std::size_t>(j)] != "y")
      prob.x.col(c++) = t.values.col(j);
  prob.base = BaseDensity::parse("huber(1.345)");
  std::vector<TwoPartFit> path = s2_path(prob, 20, S2Options{});
  const double lam = lambda_theory(prob, path.front().skew, 2.0, 1.0);
  CHECK(jf.at("lambda").get<double>() == doctest::Approx(lam).epsilon(1e-9));
}

TEST_CASE("twopart rejects bad penalty arguments and degenerate responses") {
  const fs::path dir = scratch("twopart_errors");

  SUBCASE("unparseable penalty") {
    RunResult r = run_cli("twopart --input " + data_file("semicont.csv") +
                              " --lambda bogus",
                          dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "--lambda"));
    CHECK(contains(r.err, "bogus"));
  }

  SUBCASE("identically zero response") {
    const std::string path = (dir / "zeros.csv").string();
    write_text_file(path, "x1,y\n1,0\n2,0\n3,0\n");
    RunResult r = run_cli("twopart --input " + path, dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "logistic-only"));
  }

  SUBCASE("response with no zeros") {
    const std::string path = (dir / "allpos.csv").string();
    write_text_file(path, "x1,y\n1,2\n2,3\n3,4\n");
    RunResult r = run_cli("twopart --input " + path, dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "use the 'fit' subcommand"));
  }
}

TEST_CASE("simulate validates presets and reruns byte-identically") {
  const fs::path dir = scratch("simulate");

  SUBCASE("unknown preset lists the available names") {
    RunResult r = run_cli("simulate nope --ratio 2", dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "unknown preset 'nope'"));
    CHECK(contains(r.err, "ex1-gauss"));
    CHECK(contains(r.err, "ex5"));
  }

  SUBCASE("preset requires a ratio") {
    RunResult r = run_cli("simulate ex1-gauss", dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "--ratio is required"));
  }

  SUBCASE("one replication runs and reruns identically") {
    const fs::path out_a = dir / "a";
    const fs::path out_b = dir / "b";
    RunResult r = run_cli(
        "simulate ex1-gauss --ratio 2 --reps 1 --seed 7 --out " +
            out_a.string(),
        dir);
    REQUIRE(r.code == 0);
    expect_schema_ok(out_a / "metrics.json", "simulate_metrics.schema.json");

    const json m = load_json(out_a / "metrics.json");
    CHECK(m.at("preset") == "ex1-gauss");
    CHECK(m.at("replications") == 1);
    CHECK(m.at("metrics").at("used").get<int>() +
              m.at("metrics").at("failures").get<int>() ==
          1);

    CsvTable reps = read_csv((out_a / "replications.csv").string());
    CHECK(reps.columns ==
          std::vector<std::string>{"rep", "ok", "beta_0", "beta_1", "beta_2",
                                   "alpha", "sigma", "nu", "m"});
    CHECK(reps.values.rows() == 1);

    RunResult r2 = run_cli(
        "simulate ex1-gauss --ratio 2 --reps 1 --seed 7 --out " +
            out_b.string(),
        dir);
    REQUIRE(r2.code == 0);
    for (const char* name :
         {"metrics.json", "metrics.csv", "replications.csv"})
      CHECK(read_text_file((out_a / name).string()) ==
            read_text_file((out_b / name).string()));
  }
}

TEST_CASE("simulate accepts a custom experiment config") {
  const fs::path dir = scratch("simulate_custom");
  const std::string cfg_path = (dir / "exp.toml").string();
  write_text_file(cfg_path,
                  "replications = 2\n"
                  "seed = 11\n"
                  "\n"
                  "[design]\n"
                  "n = 80\n"
                  "kappa = 0.3\n"
                  "\n"
                  "[truth]\n"
                  "beta = [1.0, -0.5]\n"
                  "alpha = 0.2\n"
                  "sigma = 0.5\n"
                  "nu = 1.0\n"
                  "base = \"gaussian\"\n");

  SUBCASE("runs the configured experiment") {
    RunResult r = run_cli(
        "simulate --config " + cfg_path + " --out " + dir.string(), dir);
    REQUIRE(r.code == 0);
    expect_schema_ok(dir / "metrics.json", "simulate_metrics.schema.json");
    const json m = load_json(dir / "metrics.json");
    CHECK(m.at("preset") == "custom");
    CHECK(m.at("design").at("n") == 80);
    CHECK(m.at("design").at("p") == 2);
    CHECK(m.at("replications") == 2);
    CHECK(m.at("metrics").at("used").get<int>() +
              m.at("metrics").at("failures").get<int>() ==
          2);
  }

  SUBCASE("zero replications is rejected") {
    RunResult r = run_cli("simulate --config " + cfg_path +
                              " --reps 0 --out " + dir.string(),
                          dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "replications"));
  }

  SUBCASE("preset name and custom config together are rejected") {
    RunResult r = run_cli("simulate ex3 --ratio 2 --config " + cfg_path, dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "not both"));
  }
}

TEST_CASE("diagnose separates adequate fits from symmetric misfits") {
  const fs::path dir = scratch("diagnose");

  SUBCASE("a fresh fit on skewed data is adequate") {
    const fs::path out = dir / "fresh";
    RunResult r = run_cli("diagnose --input " +
                              data_file("skewed_seed01.csv") + " --out " +
                              out.string(),
                          dir);
    REQUIRE(r.code == 0);
    CHECK(contains(r.out, "skewness addressed"));
    expect_schema_ok(out / "diagnostics.json", "diagnostics.schema.json");
    const json d = load_json(out / "diagnostics.json");
    CHECK(d.at("adequate") == true);
    CHECK(d.at("ks").at("p_value").get<double>() > 0.05);
  }

  SUBCASE("stored symmetric least-squares fits are rejected on skewed data") {
    int rejected = 0;
    for (int s = 1; s <= 10; ++s) {
      char name[32];
      std::snprintf(name, sizeof(name), "skewed_seed%02d.csv", s);
      const std::string csv = data_file(name);
      const fs::path out = dir / ("ols" + std::to_string(s));
      fs::create_directories(out);
      const std::string fit_path = (out / "ls_fit.json").string();
      write_text_file(fit_path, symmetric_ls_fit(csv).dump(2) + "\n");
      RunResult r = run_cli("diagnose --input " + csv + " --fit " + fit_path +
                                " --out " + out.string(),
                            dir);
      REQUIRE(r.code == 0);
      const json d = load_json(out / "diagnostics.json");
      if (d.at("adequate") == false) ++rejected;
    }
    // The symmetric model ignores the planted scale asymmetry, so the
    // backward-blend check should reject it nearly always.
    CHECK(rejected >= 9);
  }

  SUBCASE("stored fit must match the data columns") {
    const fs::path out = dir / "mismatch";
    fs::create_directories(out);
    const std::string fit_path = (out / "ls_fit.json").string();
    write_text_file(fit_path,
                    symmetric_ls_fit(data_file("skewed_seed01.csv")).dump(2) +
                        "\n");
    RunResult r = run_cli("diagnose --input " + data_file("tiny_fit.csv") +
                              " --fit " + fit_path + " --out " + out.string(),
                          dir);
    CHECK(r.code == 1);
    CHECK(contains(r.err, "fit/data mismatch"));
  }
}

TEST_CASE("bootstrap intervals are well-formed and deterministic") {
  const fs::path dir = scratch("bootstrap");
  const fs::path out_a = dir / "a";
  RunResult r = run_cli("bootstrap --input " + data_file("tiny_fit.csv") +
                            " --B 30 --level 0.90 --seed 3 --out " +
                            out_a.string(),
                        dir);
  REQUIRE(r.code == 0);
  expect_schema_ok(out_a / "intervals.json", "intervals.schema.json");

  const json iv = load_json(out_a / "intervals.json");
  CHECK(iv.at("level").get<double>() == 0.90);
  CHECK(iv.at("draws") == 30);
  CHECK(iv.at("used").get<int>() + iv.at("failures").get<int>() == 30);
  for (const char* key : {"m", "sigma", "nu"}) {
    REQUIRE(iv.at(key).size() == 2);
    CHECK(iv.at(key)[0].get<double>() <= iv.at(key)[1].get<double>());
  }
  REQUIRE(iv.at("beta").size() == 2);
  for (const auto& ci : iv.at("beta")) {
    REQUIRE(ci.size() == 2);
    CHECK(ci[0].get<double>() <= ci[1].get<double>());
  }

  // draws.csv keeps exactly the successful refits.
  CsvTable draws = read_csv((out_a / "draws.csv").string());
  CHECK(draws.columns ==
        std::vector<std::string>{"beta_0", "beta_1", "alpha", "sigma", "nu",
                                 "m"});
  CHECK(draws.values.rows() == iv.at("used").get<int>());

  const fs::path out_b = dir / "b";
  RunResult r2 = run_cli("bootstrap --input " + data_file("tiny_fit.csv") +
                             " --B 30 --level 0.90 --seed 3 --out " +
                             out_b.string(),
                         dir);
  REQUIRE(r2.code == 0);
  CHECK(read_text_file((out_a / "intervals.json").string()) ==
        read_text_file((out_b / "intervals.json").string()));
  CHECK(read_text_file((out_a / "draws.csv").string()) ==
        read_text_file((out_b / "draws.csv").string()));
}

TEST_CASE("config file values override command-line flags") {
  const fs::path dir = scratch("config_override");
  const std::string cfg_path = (dir / "fit.toml").string();
  write_text_file(cfg_path, "base = \"laplace\"\nseed = 99\n");
  RunResult r = run_cli("fit --input " + data_file("tiny_fit.csv") +
                            " --base gaussian --seed 1 --config " + cfg_path +
                            " --out " + dir.string(),
                        dir);
  REQUIRE(r.code == 0);
  const json jf = load_json(dir / "fit.json");
  CHECK(jf.at("base") == "laplace");
  CHECK(jf.at("seed") == 99);
}
