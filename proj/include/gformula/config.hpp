#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "gformula/chained.hpp"
#include "gformula/mc.hpp"
#include "gformula/mi.hpp"
#include "gformula/pooling.hpp"
#include "gformula/simstudy.hpp"
#include "gformula/table.hpp"

namespace gformula {

using Json = nlohmann::ordered_json;

enum class AnalysisMethod { mi, mc, automatic };

struct RunConfig {
  std::string dataset;  // CSV path; empty only when dgm_n > 0
  std::size_t dgm_n = 0;
  Schema schema;
  std::optional<SequentialModelSpec> models;  // nullopt = auto from schema
  ModelFamily l0_family = ModelFamily::normal_linear;
  bool l0_family_explicit = false;  // MC defaults to empirical unless set
  std::vector<Regime> regimes;
  AnalysisMethod method = AnalysisMethod::automatic;
  std::size_t m_initial = 50;
  int max_batches = 20;
  std::size_t n_syn = 0;  // 0 = default (n_obs for MI, 100000 for MC)
  std::size_t n_boot = 1000;
  int chain_iterations = 5;
  std::string chain_trace;  // optional CSV path for the per-sweep imputed means
  ContrastRoute contrast_route = ContrastRoute::direct;
  bool independent_draws = false;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string output;
  std::string dump_imputations_dir;
};

Schema schema_from_json(const Json& j);
Json schema_to_json(const Schema& schema);

SequentialModelSpec models_from_json(const Json& j);
Json models_to_json(const SequentialModelSpec& spec);

std::vector<Regime> regimes_from_json(const Json& j);
Json regimes_to_json(const std::vector<Regime>& regimes);

ModelFamily family_from_string(const std::string& s);
std::string family_to_string(ModelFamily family);

RunConfig run_config_from_json(const Json& j);
Json run_config_to_json(const RunConfig& config);

// Full config validation against the loaded dataset: header/kind consistency,
// regime coverage, model spec validity, treatment columns binary.
void validate_run_config(const RunConfig& config, const LongitudinalTable& table);

StudyConfig study_config_from_json(const Json& j);
Json study_config_to_json(const StudyConfig& config);

// Named scenarios: table2-s1..s5, table3-p05/p10/p25/p50, toy, abb.
std::vector<std::string> preset_names();
Json preset_study(const std::string& name);

Json pooled_result_to_json(const PooledResult& result);
Json mc_estimate_to_json(const McEstimate& estimate);
Json study_report_to_json(const StudyReport& report, bool include_wall_time = true);
Json toy_report_to_json(const ToyReport& report);

}  // namespace gformula
