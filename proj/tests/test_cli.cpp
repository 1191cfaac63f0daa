#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "gformula/simstudy.hpp"
#include "gformula/table.hpp"
#include "helpers.hpp"

namespace {

using Json = nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string command = std::string(GFORMULA_CLI_PATH) + " " + args;
  const int status = std::system(command.c_str());
  if (status == -1) {
    return -1;
  }
  return WEXITSTATUS(status);
}

const char* schema_json() {
  return R"({"columns": [
    {"name": "L0", "kind": "continuous", "role": "baseline_confounder", "time": 0},
    {"name": "A0", "kind": "binary", "role": "treatment", "time": 0},
    {"name": "L1", "kind": "continuous", "role": "timevarying_confounder", "time": 1},
    {"name": "A1", "kind": "binary", "role": "treatment", "time": 1},
    {"name": "L2", "kind": "continuous", "role": "timevarying_confounder", "time": 2},
    {"name": "A2", "kind": "binary", "role": "treatment", "time": 2},
    {"name": "Y", "kind": "continuous", "role": "outcome", "time": 3}
  ]})";
}

std::string base_config(const std::string& dataset, const std::string& extra = "") {
  return std::string(R"({
  "dataset": ")") + dataset + R"(",
  "schema": )" + schema_json() + R"(,
  "models": "auto",
  "regimes": [
    {"name": "all-1", "values": {"A0": 1, "A1": 1, "A2": 1}},
    {"name": "all-0", "values": {"A0": 0, "A1": 0, "A2": 0}}
  ],
  "m_initial": 8,
  "seed": 7)" + extra + "\n}";
}

struct Fixture {
  testing_support::TempDir dir;
  std::string dataset;

  Fixture() {
    gformula::RngStream rng(900);
    const auto table = gformula::generate_dgm(120, rng);
    dataset = dir.path("data.csv");
    gformula::write_csv(table, dataset);
  }

  std::string write_config(const std::string& name, const std::string& text) const {
    const auto path = dir.path(name);
    std::ofstream out(path);
    out << text;
    return path;
  }
};

}  // namespace

TEST_CASE("validate accepts a consistent config") {
  Fixture fx;
  const auto config = fx.write_config("ok.json", base_config(fx.dataset));
  CHECK(run_cli("validate --config " + config + " --log-level quiet >/dev/null 2>&1") == 0);
}

TEST_CASE("validate rejects a continuous treatment and an incomplete regime") {
  Fixture fx;
  std::string bad_kind = base_config(fx.dataset);
  const auto pos = bad_kind.find(R"("name": "A0", "kind": "binary")");
  REQUIRE(pos != std::string::npos);
  bad_kind.replace(pos, std::string(R"("name": "A0", "kind": "binary")").size(),
                   R"("name": "A0", "kind": "continuous")");
  const auto config1 = fx.write_config("bad_kind.json", bad_kind);
  CHECK(run_cli("validate --config " + config1 + " --log-level quiet >/dev/null 2>&1") == 1);

  std::string missing_a2 = base_config(fx.dataset);
  const auto pos2 = missing_a2.find(R"({"name": "all-0", "values": {"A0": 0, "A1": 0, "A2": 0}})");
  REQUIRE(pos2 != std::string::npos);
  missing_a2.replace(pos2, std::string(R"({"name": "all-0", "values": {"A0": 0, "A1": 0, "A2": 0}})").size(),
                     R"({"name": "all-0", "values": {"A0": 0, "A1": 0}})");
  const auto config2 = fx.write_config("bad_regime.json", missing_a2);
  CHECK(run_cli("validate --config " + config2 + " --log-level quiet >/dev/null 2>&1") == 1);
}

TEST_CASE("analyze with the MI estimator emits the full document") {
  Fixture fx;
  const auto out = fx.dir.path("result.json");
  const auto config = fx.write_config("mi.json", base_config(fx.dataset));
  REQUIRE(run_cli("analyze --config " + config + " --output " + out +
                  " --log-level quiet 2>/dev/null") == 0);
  const Json doc = Json::parse(read_file(out));
  CHECK(doc.at("format_version") == 1);
  CHECK(doc.at("method") == "mi");
  CHECK(doc.at("config").at("m_initial") == 8);
  const auto& result = doc.at("result");
  CHECK(result.contains("point"));
  CHECK(result.contains("se"));
  CHECK(result.contains("df"));
  CHECK(result.at("ci_t").size() == 2);
  CHECK(result.at("ci_z").size() == 2);
  CHECK(result.at("m_used").get<int>() >= 8);
  CHECK(result.at("regimes").size() == 2);
}

TEST_CASE("analyze output is byte-identical across reruns with one seed") {
  Fixture fx;
  const auto out1 = fx.dir.path("r1.json");
  const auto out2 = fx.dir.path("r2.json");
  const auto config = fx.write_config("det.json", base_config(fx.dataset));
  REQUIRE(run_cli("analyze --config " + config + " --output " + out1 +
                  " --log-level quiet 2>/dev/null") == 0);
  REQUIRE(run_cli("analyze --config " + config + " --output " + out2 +
                  " --log-level quiet 2>/dev/null") == 0);
  const auto doc1 = read_file(out1);
  CHECK(!doc1.empty());
  CHECK(doc1 == read_file(out2));

  // a different seed changes the result
  const auto out3 = fx.dir.path("r3.json");
  REQUIRE(run_cli("analyze --config " + config + " --output " + out3 +
                  " --seed 8 --log-level quiet 2>/dev/null") == 0);
  CHECK(doc1 != read_file(out3));
}

TEST_CASE("analyze with method=mc rejects datasets containing NA") {
  Fixture fx;
  auto table = gformula::load_csv(fx.dataset, gformula::dgm_schema());
  table.set_missing(3, 2);
  const auto holey = fx.dir.path("holey.csv");
  gformula::write_csv(table, holey);
  const auto config = fx.write_config("mc_bad.json", base_config(holey, R"(,
  "method": "mc")"));
  CHECK(run_cli("analyze --config " + config + " --log-level quiet >/dev/null 2>&1") == 1);
}

TEST_CASE("analyze with method=mc runs the bootstrap") {
  Fixture fx;
  const auto out = fx.dir.path("mc.json");
  const auto config = fx.write_config("mc.json", base_config(fx.dataset, R"(,
  "method": "mc",
  "n_syn": 2000,
  "n_boot": 40)"));
  REQUIRE(run_cli("analyze --config " + config + " --output " + out +
                  " --log-level quiet 2>/dev/null") == 0);
  const Json doc = Json::parse(read_file(out));
  CHECK(doc.at("method") == "mc");
  CHECK(doc.at("result").contains("bootstrap_se"));
  CHECK(doc.at("result").at("n_boot") == 40);
  CHECK(doc.at("result").at("ci").size() == 2);
  // the mc path samples the first confounder empirically unless configured
  CHECK(doc.at("config").at("l0_family") == "empirical");
}

TEST_CASE("auto method routes incomplete data through the two-stage pipeline") {
  Fixture fx;
  auto table = gformula::load_csv(fx.dataset, gformula::dgm_schema());
  gformula::RngStream rng(901);
  const auto masked = gformula::apply_mcar(table, 0.08, {"L1", "A1", "L2", "A2", "Y"}, rng);
  const auto holey = fx.dir.path("auto.csv");
  gformula::write_csv(masked, holey);
  const auto out = fx.dir.path("auto.json");
  const auto config = fx.write_config("auto.json", base_config(holey, R"(,
  "chain": {"n_iterations": 3})"));
  REQUIRE(run_cli("analyze --config " + config + " --output " + out +
                  " --log-level quiet 2>/dev/null") == 0);
  const Json doc = Json::parse(read_file(out));
  CHECK(doc.at("method") == "mi+chained");
}

TEST_CASE("simulate presets: toy runs and unknown names list the catalogue") {
  Fixture fx;
  const auto out = fx.dir.path("toy.json");
  REQUIRE(run_cli("simulate --preset toy --replicates 400 --output " + out +
                  " --log-level quiet >/dev/null 2>&1") == 0);
  const Json doc = Json::parse(read_file(out));
  CHECK(doc.at("report").contains("mean_vsyn"));
  CHECK(doc.at("report").contains("negative_frequency"));

  const auto err = fx.dir.path("err.txt");
  CHECK(run_cli("simulate --preset table9-s9 --log-level quiet >/dev/null 2>" + err) == 1);
  const auto message = read_file(err);
  CHECK(message.find("table2-s1") != std::string::npos);
}

TEST_CASE("simulate runs a small study from a config document") {
  Fixture fx;
  const auto out = fx.dir.path("study.json");
  const auto config = fx.write_config("study.json", R"({
  "study": {"label": "cli-smoke", "n_obs": 120, "n_syn": 80, "m_initial": 5,
            "n_replicates": 8, "seed": 3, "truth": 3.0}
})");
  REQUIRE(run_cli("simulate --config " + config + " --output " + out +
                  " --log-level quiet >/dev/null 2>&1") == 0);
  const Json doc = Json::parse(read_file(out));
  CHECK(doc.at("report").at("config").at("label") == "cli-smoke");
  CHECK(doc.at("report").at("estimators").size() == 1);
}

TEST_CASE("environment variables override the config seed") {
  Fixture fx;
  const auto out1 = fx.dir.path("env1.json");
  const auto out2 = fx.dir.path("env2.json");
  const auto config = fx.write_config("env.json", base_config(fx.dataset));
  REQUIRE(run_cli("analyze --config " + config + " --output " + out1 +
                  " --log-level quiet 2>/dev/null") == 0);
  REQUIRE(std::system((std::string("GFORMULA_SEED=99 ") + GFORMULA_CLI_PATH +
                       " analyze --config " + config + " --output " + out2 +
                       " --log-level quiet 2>/dev/null")
                          .c_str()) == 0);
  CHECK(read_file(out1) != read_file(out2));
  const Json doc = Json::parse(read_file(out2));
  CHECK(doc.at("config").at("seed") == 99);
}

TEST_CASE("a missing dataset file exits with the io code") {
  Fixture fx;
  const auto config = fx.write_config("gone.json", base_config(fx.dir.path("gone.csv")));
  CHECK(run_cli("analyze --config " + config + " --log-level quiet >/dev/null 2>&1") == 3);
  CHECK(run_cli("analyze --config " + fx.dir.path("no_such_config.json") +
                " --log-level quiet >/dev/null 2>&1") == 3);
}

TEST_CASE("chained analyses can emit a convergence trace") {
  Fixture fx;
  auto table = gformula::load_csv(fx.dataset, gformula::dgm_schema());
  gformula::RngStream rng(902);
  const auto masked = gformula::apply_mcar(table, 0.1, {"L1", "Y"}, rng);
  const auto holey = fx.dir.path("trace.csv");
  gformula::write_csv(masked, holey);
  const auto trace_path = fx.dir.path("chain_trace.csv");
  const auto config = fx.write_config("trace.json", base_config(holey, R"(,
  "m_initial": 4,
  "chain": {"n_iterations": 3, "trace": ")" + trace_path + R"("})"));
  REQUIRE(run_cli("analyze --config " + config + " --log-level quiet >/dev/null 2>&1") == 0);
  const auto trace = read_file(trace_path);
  CHECK(trace.find("m,iteration,variable,mean_imputed") == 0);
  CHECK(trace.find("L1") != std::string::npos);
  CHECK(trace.find("Y") != std::string::npos);
}

TEST_CASE("imputed datasets can be dumped for audit") {
  Fixture fx;
  const auto dump_dir = fx.dir.path("dump");
  const auto config = fx.write_config("dump.json", base_config(fx.dataset, R"(,
  "m_initial": 3,
  "dump_imputations_dir": ")" + dump_dir + R"(")"));
  REQUIRE(run_cli("analyze --config " + config + " --log-level quiet >/dev/null 2>&1") == 0);
  const auto block = gformula::load_csv(dump_dir + "/imputation_m1_regime1.csv",
                                        gformula::dgm_schema());
  CHECK(block.n_rows() == 120);  // n_syn defaults to n_obs
  CHECK(block.n_missing_cells() == 0);
  CHECK(block.cell(0, 1) == 1.0);  // first regime sets A0 = 1
}
