#include "gformula/config.hpp"

#include <cmath>

#include "gformula/error.hpp"

namespace gformula {

namespace {

ColumnKind kind_from_string(const std::string& s) {
  if (s == "continuous") return ColumnKind::continuous;
  if (s == "binary") return ColumnKind::binary;
  throw Error::validation("unknown column kind '" + s + "'");
}

std::string kind_to_string(ColumnKind kind) {
  return kind == ColumnKind::continuous ? "continuous" : "binary";
}

ColumnRole role_from_string(const std::string& s) {
  if (s == "baseline_confounder") return ColumnRole::baseline_confounder;
  if (s == "timevarying_confounder") return ColumnRole::timevarying_confounder;
  if (s == "treatment") return ColumnRole::treatment;
  if (s == "outcome") return ColumnRole::outcome;
  throw Error::validation("unknown column role '" + s + "'");
}

std::string role_to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::baseline_confounder:
      return "baseline_confounder";
    case ColumnRole::timevarying_confounder:
      return "timevarying_confounder";
    case ColumnRole::treatment:
      return "treatment";
    case ColumnRole::outcome:
      return "outcome";
  }
  return "unknown";
}

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) {
    return fallback;
  }
  return j.at(key).get<T>();
}

Json number_or_null(double x) {
  if (std::isfinite(x)) {
    return x;
  }
  return nullptr;
}

}  // namespace

ModelFamily family_from_string(const std::string& s) {
  if (s == "normal_linear") return ModelFamily::normal_linear;
  if (s == "logistic") return ModelFamily::logistic;
  if (s == "empirical") return ModelFamily::empirical;
  if (s == "abb") return ModelFamily::abb;
  throw Error::validation("unknown model family '" + s + "'");
}

std::string family_to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::normal_linear:
      return "normal_linear";
    case ModelFamily::logistic:
      return "logistic";
    case ModelFamily::empirical:
      return "empirical";
    case ModelFamily::abb:
      return "abb";
  }
  return "unknown";
}

Schema schema_from_json(const Json& j) {
  if (!j.contains("columns") || !j.at("columns").is_array()) {
    throw Error::validation("schema must contain a 'columns' array");
  }
  std::vector<ColumnSpec> columns;
  for (const auto& cj : j.at("columns")) {
    ColumnSpec c;
    c.name = cj.at("name").get<std::string>();
    c.kind = kind_from_string(get_or<std::string>(cj, "kind", "continuous"));
    c.role = role_from_string(cj.at("role").get<std::string>());
    c.time_index = get_or<int>(cj, "time", 0);
    columns.push_back(std::move(c));
  }
  return Schema(std::move(columns));
}

Json schema_to_json(const Schema& schema) {
  Json columns = Json::array();
  for (const auto& c : schema.columns()) {
    Json cj;
    cj["name"] = c.name;
    cj["kind"] = kind_to_string(c.kind);
    cj["role"] = role_to_string(c.role);
    cj["time"] = c.time_index;
    columns.push_back(std::move(cj));
  }
  Json out;
  out["columns"] = std::move(columns);
  return out;
}

SequentialModelSpec models_from_json(const Json& j) {
  if (!j.is_array()) {
    throw Error::validation("models must be an array or the string 'auto'");
  }
  SequentialModelSpec spec;
  for (const auto& mj : j) {
    DesignSpec m;
    m.target = mj.at("target").get<std::string>();
    if (mj.contains("predictors")) {
      for (const auto& p : mj.at("predictors")) {
        m.predictors.push_back(p.get<std::string>());
      }
    }
    m.family = family_from_string(get_or<std::string>(mj, "family", "normal_linear"));
    spec.models.push_back(std::move(m));
  }
  return spec;
}

Json models_to_json(const SequentialModelSpec& spec) {
  Json out = Json::array();
  for (const auto& m : spec.models) {
    Json mj;
    mj["target"] = m.target;
    mj["predictors"] = m.predictors;
    mj["family"] = family_to_string(m.family);
    out.push_back(std::move(mj));
  }
  return out;
}

std::vector<Regime> regimes_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) {
    throw Error::validation("regimes must be a non-empty array");
  }
  std::vector<Regime> out;
  for (const auto& rj : j) {
    Regime r;
    r.name = get_or<std::string>(rj, "name", "regime-" + std::to_string(out.size() + 1));
    if (!rj.contains("values") || !rj.at("values").is_object()) {
      throw Error::validation("regime '" + r.name + "' must contain a 'values' object");
    }
    for (const auto& [key, value] : rj.at("values").items()) {
      r.assignments.emplace_back(key, value.get<double>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

Json regimes_to_json(const std::vector<Regime>& regimes) {
  Json out = Json::array();
  for (const auto& r : regimes) {
    Json rj;
    rj["name"] = r.name;
    Json values;
    for (const auto& [name, value] : r.assignments) {
      values[name] = value;
    }
    rj["values"] = std::move(values);
    out.push_back(std::move(rj));
  }
  return out;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig config;
  config.dataset = get_or<std::string>(j, "dataset", "");
  config.dgm_n = get_or<std::size_t>(j, "dgm_n", 0);
  if (config.dataset.empty() && config.dgm_n == 0) {
    throw Error::validation("config needs a 'dataset' path or a positive 'dgm_n'");
  }
  if (j.contains("schema")) {
    config.schema = schema_from_json(j.at("schema"));
  } else if (config.dgm_n > 0) {
    config.schema = dgm_schema();
  } else {
    throw Error::validation("config needs a 'schema'");
  }
  if (j.contains("models") && !j.at("models").is_null()) {
    if (j.at("models").is_string()) {
      if (j.at("models").get<std::string>() != "auto") {
        throw Error::validation("models must be an array or the string 'auto'");
      }
    } else {
      config.models = models_from_json(j.at("models"));
    }
  }
  config.l0_family_explicit = j.contains("l0_family") && !j.at("l0_family").is_null();
  config.l0_family = family_from_string(get_or<std::string>(j, "l0_family", "normal_linear"));
  if (!j.contains("regimes")) {
    throw Error::validation("config needs 'regimes'");
  }
  config.regimes = regimes_from_json(j.at("regimes"));

  const std::string method = get_or<std::string>(j, "method", "auto");
  if (method == "mi") {
    config.method = AnalysisMethod::mi;
  } else if (method == "mc") {
    config.method = AnalysisMethod::mc;
  } else if (method == "auto") {
    config.method = AnalysisMethod::automatic;
  } else {
    throw Error::validation("unknown method '" + method + "' (expected mi, mc or auto)");
  }

  config.m_initial = get_or<std::size_t>(j, "m_initial", 50);
  config.max_batches = get_or<int>(j, "max_batches", 20);
  config.n_syn = get_or<std::size_t>(j, "n_syn", 0);
  config.n_boot = get_or<std::size_t>(j, "n_boot", 1000);
  if (j.contains("chain")) {
    config.chain_iterations = get_or<int>(j.at("chain"), "n_iterations", 5);
    config.chain_trace = get_or<std::string>(j.at("chain"), "trace", "");
  }
  const std::string route = get_or<std::string>(j, "contrast_pooling", "direct");
  if (route == "direct") {
    config.contrast_route = ContrastRoute::direct;
  } else if (route == "sum") {
    config.contrast_route = ContrastRoute::sum_regimes;
  } else {
    throw Error::validation("unknown contrast_pooling '" + route + "' (expected direct or sum)");
  }
  config.independent_draws = get_or<bool>(j, "independent_draws", false);
  config.seed = get_or<std::uint64_t>(j, "seed", 1);
  config.threads = get_or<unsigned>(j, "threads", 0);
  config.output = get_or<std::string>(j, "output", "");
  config.dump_imputations_dir = get_or<std::string>(j, "dump_imputations_dir", "");
  return config;
}

Json run_config_to_json(const RunConfig& config) {
  Json j;
  if (!config.dataset.empty()) {
    j["dataset"] = config.dataset;
  }
  if (config.dgm_n > 0) {
    j["dgm_n"] = config.dgm_n;
  }
  j["schema"] = schema_to_json(config.schema);
  if (config.models) {
    j["models"] = models_to_json(*config.models);
  } else {
    j["models"] = "auto";
  }
  j["l0_family"] = family_to_string(config.l0_family);
  j["regimes"] = regimes_to_json(config.regimes);
  switch (config.method) {
    case AnalysisMethod::mi:
      j["method"] = "mi";
      break;
    case AnalysisMethod::mc:
      j["method"] = "mc";
      break;
    case AnalysisMethod::automatic:
      j["method"] = "auto";
      break;
  }
  j["m_initial"] = config.m_initial;
  j["max_batches"] = config.max_batches;
  j["n_syn"] = config.n_syn;
  j["n_boot"] = config.n_boot;
  j["chain"] = Json{{"n_iterations", config.chain_iterations}};
  j["contrast_pooling"] = config.contrast_route == ContrastRoute::direct ? "direct" : "sum";
  j["independent_draws"] = config.independent_draws;
  j["seed"] = config.seed;
  j["threads"] = config.threads;
  // delivery paths (output, dump dir) are not part of the analysis config
  return j;
}

void validate_run_config(const RunConfig& config, const LongitudinalTable& table) {
  std::vector<std::string> problems;
  for (const auto& c : config.schema.columns()) {
    if (c.role == ColumnRole::treatment && c.kind != ColumnKind::binary) {
      problems.push_back("treatment column " + c.name + " must be declared binary");
    }
  }
  for (const auto& regime : config.regimes) {
    try {
      validate_regime(regime, config.schema);
    } catch (const Error& e) {
      problems.emplace_back(e.what());
    }
  }
  try {
    const SequentialModelSpec spec =
        config.models ? *config.models : auto_sequential_spec(config.schema, config.l0_family);
    validate_sequential_spec(spec, config.schema);
  } catch (const Error& e) {
    problems.emplace_back(e.what());
  }
  if (config.method == AnalysisMethod::mc &&
      missingness_pattern(table, PatternScope::original_rows) != MissingnessPattern::complete) {
    problems.push_back("method=mc requires complete data; dataset has missing cells");
  }
  if (config.m_initial < 2) {
    problems.push_back("m_initial must be at least 2");
  }
  if (config.max_batches < 1) {
    problems.push_back("max_batches must be at least 1");
  }
  if (config.chain_iterations < 1) {
    problems.push_back("chain.n_iterations must be at least 1");
  }
  if (!problems.empty()) {
    std::string message = "configuration invalid:";
    for (const auto& p : problems) {
      message += "\n  - " + p;
    }
    throw Error::validation(message);
  }
}

StudyConfig study_config_from_json(const Json& j) {
  StudyConfig config;
  config.label = get_or<std::string>(j, "label", "study");
  config.n_obs = get_or<std::size_t>(j, "n_obs", 500);
  config.n_syn = get_or<std::size_t>(j, "n_syn", 500);
  config.m_initial = get_or<std::size_t>(j, "m_initial", 50);
  config.pi = get_or<double>(j, "pi", 0.0);
  config.n_replicates = get_or<std::size_t>(j, "n_replicates", 1000);
  const std::string estimators = get_or<std::string>(j, "estimators", "mi");
  if (estimators == "mi") {
    config.estimators = EstimatorSet::mi;
  } else if (estimators == "mc") {
    config.estimators = EstimatorSet::mc_bootstrap;
  } else if (estimators == "both") {
    config.estimators = EstimatorSet::both;
  } else {
    throw Error::validation("unknown estimators '" + estimators + "' (expected mi, mc or both)");
  }
  config.seed = get_or<std::uint64_t>(j, "seed", 1);
  config.truth = get_or<double>(j, "truth", 3.0);
  config.max_batches = get_or<int>(j, "max_batches", 20);
  config.chain_iterations = get_or<int>(j, "chain_iterations", 5);
  config.l0_family = family_from_string(get_or<std::string>(j, "l0_family", "normal_linear"));
  const std::string route = get_or<std::string>(j, "contrast_pooling", "direct");
  config.contrast_route = route == "sum" ? ContrastRoute::sum_regimes : ContrastRoute::direct;
  config.n_boot = get_or<std::size_t>(j, "n_boot", 200);
  config.threads = get_or<unsigned>(j, "threads", 0);
  return config;
}

Json study_config_to_json(const StudyConfig& config) {
  Json j;
  j["label"] = config.label;
  j["n_obs"] = config.n_obs;
  j["n_syn"] = config.n_syn;
  j["m_initial"] = config.m_initial;
  j["pi"] = config.pi;
  j["n_replicates"] = config.n_replicates;
  switch (config.estimators) {
    case EstimatorSet::mi:
      j["estimators"] = "mi";
      break;
    case EstimatorSet::mc_bootstrap:
      j["estimators"] = "mc";
      break;
    case EstimatorSet::both:
      j["estimators"] = "both";
      break;
  }
  j["seed"] = config.seed;
  j["truth"] = config.truth;
  j["max_batches"] = config.max_batches;
  j["chain_iterations"] = config.chain_iterations;
  j["l0_family"] = family_to_string(config.l0_family);
  j["contrast_pooling"] = config.contrast_route == ContrastRoute::direct ? "direct" : "sum";
  j["n_boot"] = config.n_boot;
  j["threads"] = config.threads;
  return j;
}

std::vector<std::string> preset_names() {
  return {"table2-s1", "table2-s2", "table2-s3", "table2-s4", "table2-s5",
          "table3-p05", "table3-p10", "table3-p25", "table3-p50",
          "toy", "abb"};
}

Json preset_study(const std::string& name) {
  StudyConfig config;
  config.label = name;
  config.truth = 3.0;
  const auto table2 = [&](std::size_t m) {
    config.m_initial = m;
    return study_config_to_json(config);
  };
  const auto table3 = [&](double pi, int iterations) {
    config.m_initial = 50;
    config.pi = pi;
    config.chain_iterations = iterations;
    return study_config_to_json(config);
  };
  if (name == "table2-s1") return table2(5);
  if (name == "table2-s2") return table2(10);
  if (name == "table2-s3") return table2(25);
  if (name == "table2-s4") return table2(50);
  if (name == "table2-s5") return table2(100);
  if (name == "table3-p05") return table3(0.05, 5);
  if (name == "table3-p10") return table3(0.10, 5);
  if (name == "table3-p25") return table3(0.25, 5);
  if (name == "table3-p50") return table3(0.50, 50);
  if (name == "abb") {
    config.m_initial = 50;
    config.l0_family = ModelFamily::abb;
    return study_config_to_json(config);
  }
  if (name == "toy") {
    Json j;
    j["toy"] = Json{{"n_obs", 100}, {"n_syn", 100}, {"m", 5},
                    {"sigma2", 1.0}, {"n_replicates", 10000}, {"seed", 1}};
    return j;
  }
  std::string known;
  for (const auto& p : preset_names()) {
    known += known.empty() ? p : ", " + p;
  }
  throw Error::validation("unknown preset '" + name + "'; available presets: " + known);
}

Json pooled_result_to_json(const PooledResult& result) {
  Json j;
  j["point"] = result.point;
  j["between"] = result.between;
  j["within"] = result.within;
  j["variance"] = result.variance;
  j["se"] = result.se;
  j["df"] = number_or_null(result.df);
  j["ci_t"] = Json::array({result.ci_t.first, result.ci_t.second});
  j["ci_z"] = Json::array({result.ci_z.first, result.ci_z.second});
  j["m_used"] = result.m_used;
  j["batches_added"] = result.batches_added;
  j["rule"] = result.rule == PoolRule::synthetic ? "synthetic" : "rubin";
  j["flags"] = Json{{"df_floored", result.df_floored},
                    {"degenerate", result.degenerate},
                    {"negative_initial", result.negative_initial},
                    {"df_infinite", !std::isfinite(result.df)}};
  return j;
}

Json mc_estimate_to_json(const McEstimate& estimate) {
  Json j;
  j["regimes"] = estimate.regimes;
  j["point"] = estimate.point;
  j["n_syn"] = estimate.n_syn;
  if (estimate.bootstrap_se) {
    j["bootstrap_se"] = *estimate.bootstrap_se;
  }
  if (estimate.ci) {
    j["ci"] = Json::array({estimate.ci->first, estimate.ci->second});
  }
  j["n_boot"] = estimate.n_boot;
  j["n_boot_failed"] = estimate.n_boot_failed;
  return j;
}

Json study_report_to_json(const StudyReport& report, bool include_wall_time) {
  Json j;
  j["config"] = study_config_to_json(report.config);
  Json list = Json::array();
  for (const auto& er : report.estimators) {
    Json ej;
    ej["name"] = er.name;
    ej["bias"] = er.bias;
    ej["empirical_se"] = er.empirical_se;
    ej["mean_estimated_se"] = er.mean_estimated_se;
    ej["t_coverage"] = er.t_coverage;
    ej["z_coverage"] = er.z_coverage;
    ej["rubin_z_coverage"] = er.rubin_z_coverage;
    ej["mean_m"] = er.mean_m;
    ej["max_m"] = er.max_m;
    ej["negative_vsyn_count"] = er.negative_vsyn_count;
    ej["n_failed"] = er.n_failed;
    ej["n_used"] = er.n_used;
    list.push_back(std::move(ej));
  }
  j["estimators"] = std::move(list);
  if (include_wall_time) {
    j["wall_seconds"] = report.wall_seconds;
  }
  return j;
}

Json toy_report_to_json(const ToyReport& report) {
  Json j;
  j["config"] = Json{{"n_obs", report.config.n_obs},   {"n_syn", report.config.n_syn},
                     {"m", report.config.m},           {"sigma2", report.config.sigma2},
                     {"n_replicates", report.config.n_replicates}, {"seed", report.config.seed}};
  j["empirical_var_point"] = report.empirical_var_point;
  j["mean_vsyn"] = report.mean_vsyn;
  j["analytic_var"] = report.analytic_var;
  j["mean_rubin"] = report.mean_rubin;
  j["negative_frequency"] = report.negative_frequency;
  j["prob_negative"] = report.prob_negative;
  j["prob_negative_approx"] = report.prob_negative_approx;
  j["max_identity_error"] = report.max_identity_error;
  return j;
}

}  // namespace gformula
