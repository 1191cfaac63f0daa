#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "gformula/config.hpp"
#include "gformula/error.hpp"
#include "gformula/parallel.hpp"

namespace {

using gformula::Json;

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel g_log_level = LogLevel::info;

void log_info(const std::string& message) {
  if (g_log_level >= LogLevel::info) {
    std::fprintf(stderr, "[info] %s\n", message.c_str());
  }
}

void log_debug(const std::string& message) {
  if (g_log_level >= LogLevel::debug) {
    std::fprintf(stderr, "[debug] %s\n", message.c_str());
  }
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw gformula::Error::io("cannot open config file " + path);
  }
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw gformula::Error::validation("config file " + path + " is not valid JSON: " + e.what());
  }
  return j;
}

void emit_document(const Json& document, const std::string& output_path) {
  const std::string text = document.dump(2) + "\n";
  if (output_path.empty()) {
    std::fputs(text.c_str(), stdout);
    return;
  }
  std::ofstream out(output_path);
  if (!out) {
    throw gformula::Error::io("cannot open output file " + output_path);
  }
  out << text;
  if (!out) {
    throw gformula::Error::io("write failed for " + output_path);
  }
}

struct CommonOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> output;
};

void apply_env_overrides(Json& j) {
  if (const char* seed = std::getenv("GFORMULA_SEED")) {
    j["seed"] = static_cast<std::uint64_t>(std::strtoull(seed, nullptr, 10));
  }
  if (const char* threads = std::getenv("GFORMULA_THREADS")) {
    j["threads"] = static_cast<unsigned>(std::strtoul(threads, nullptr, 10));
  }
}

gformula::LongitudinalTable load_dataset(const gformula::RunConfig& config) {
  if (!config.dataset.empty()) {
    log_debug("loading dataset " + config.dataset);
    return gformula::load_csv(config.dataset, config.schema);
  }
  log_debug("generating " + std::to_string(config.dgm_n) + " rows from the built-in generator");
  gformula::RngStream rng(config.seed);
  auto data_stream = rng.split(0xD67);
  return gformula::generate_dgm(config.dgm_n, data_stream);
}

void dump_retained(const gformula::ImputationRun& run, const gformula::RunConfig& config,
                   std::size_t n_original) {
  if (config.dump_imputations_dir.empty() || run.retained.empty()) {
    return;
  }
  std::filesystem::create_directories(config.dump_imputations_dir);
  for (std::size_t m = 0; m < run.retained.size(); ++m) {
    const auto& table = run.retained[m];
    for (std::size_t r = 0; r < run.regime_names.size(); ++r) {
      std::vector<std::size_t> rows;
      const std::size_t begin = n_original + r * run.n_syn;
      for (std::size_t i = 0; i < run.n_syn; ++i) {
        rows.push_back(begin + i);
      }
      const auto block = table.select_rows(rows);
      const std::string path = config.dump_imputations_dir + "/imputation_m" +
                               std::to_string(m + 1) + "_regime" + std::to_string(r + 1) + ".csv";
      gformula::write_csv(block, path);
    }
  }
  log_info("wrote " + std::to_string(run.retained.size() * run.regime_names.size()) +
           " imputed datasets to " + config.dump_imputations_dir);
}

int cmd_analyze(const std::string& config_path, const CommonOverrides& overrides,
                std::optional<std::string> method_flag, std::optional<std::size_t> n_syn_flag,
                std::optional<std::size_t> m_initial_flag, std::optional<std::size_t> n_boot_flag) {
  Json j = load_json_file(config_path);
  apply_env_overrides(j);
  if (overrides.seed) j["seed"] = *overrides.seed;
  if (overrides.threads) j["threads"] = *overrides.threads;
  if (overrides.output) j["output"] = *overrides.output;
  if (method_flag) j["method"] = *method_flag;
  if (n_syn_flag) j["n_syn"] = *n_syn_flag;
  if (m_initial_flag) j["m_initial"] = *m_initial_flag;
  if (n_boot_flag) j["n_boot"] = *n_boot_flag;

  gformula::RunConfig config = gformula::run_config_from_json(j);
  const auto table = load_dataset(config);
  gformula::validate_run_config(config, table);
  if (config.regimes.size() > 2) {
    throw gformula::Error::validation("analyze supports one regime or a two-regime contrast");
  }

  const auto pattern = gformula::missingness_pattern(table, gformula::PatternScope::original_rows);
  const bool complete = pattern == gformula::MissingnessPattern::complete;
  const bool use_mc = config.method == gformula::AnalysisMethod::mc;
  if (config.n_syn == 0) {
    config.n_syn = use_mc ? 100000 : table.n_original();
  }
  log_info("dataset: " + std::to_string(table.n_original()) + " rows, " +
           (complete ? "complete" : "incomplete") + "; n_syn=" + std::to_string(config.n_syn));

  Json document;
  document["format_version"] = 1;
  document["command"] = "analyze";

  gformula::RngStream rng(config.seed);
  if (use_mc) {
    if (config.regimes.size() != 2) {
      throw gformula::Error::validation("method=mc estimates a two-regime contrast");
    }
    // classical G-formula samples the first confounder from its empirical
    // distribution unless told otherwise
    if (!config.l0_family_explicit) {
      config.l0_family = gformula::ModelFamily::empirical;
    }
    const auto spec = config.models
                          ? *config.models
                          : gformula::auto_sequential_spec(config.schema, config.l0_family);
    gformula::McOptions options;
    options.threads = gformula::resolve_threads(config.threads);
    const auto est = gformula::bootstrap_contrast_mc(table, spec, config.regimes[0],
                                                     config.regimes[1], config.n_syn,
                                                     config.n_boot, rng.split(1), options);
    document["method"] = "mc";
    document["config"] = run_config_to_json(config);
    document["result"] = mc_estimate_to_json(est);
  } else {
    const auto spec = config.models
                          ? *config.models
                          : gformula::auto_sequential_spec(config.schema, config.l0_family);
    gformula::MiOptions options;
    options.shared_draws = !config.independent_draws;
    options.retain_datasets = !config.dump_imputations_dir.empty();

    std::unique_ptr<gformula::ImputationEngine> engine;
    const unsigned threads = gformula::resolve_threads(config.threads);
    if (complete) {
      engine = std::make_unique<gformula::SyntheticImputer>(table, spec, config.regimes,
                                                            config.n_syn, rng.split(2), options);
      document["method"] = "mi";
    } else {
      gformula::ChainConfig chain;
      chain.n_iterations = config.chain_iterations;
      engine = std::make_unique<gformula::TwoStageImputer>(table, chain, spec, config.regimes,
                                                           config.n_syn, rng.split(2), options);
      document["method"] = "mi+chained";
      if (!config.chain_trace.empty()) {
        // Same base stream and per-m derivation as the two-stage engine, so
        // this trace reproduces the analysis chains exactly.
        gformula::ChainTrace trace;
        gformula::chained_impute(table, chain, config.m_initial, rng.split(2), threads, &trace);
        std::ofstream trace_out(config.chain_trace);
        if (!trace_out) {
          throw gformula::Error::io("cannot open chain trace path " + config.chain_trace);
        }
        trace_out << trace.to_csv();
        log_info("wrote chain trace to " + config.chain_trace);
      }
    }
    auto run = gformula::run_imputations(*engine, config.m_initial, options.retain_datasets,
                                         threads);
    gformula::PooledResult pooled;
    if (config.regimes.size() == 1) {
      pooled = gformula::pool_regime_mean(run, *engine, 0, config.max_batches, threads);
    } else {
      pooled = gformula::pool_contrast(run, *engine, 0, 1, config.contrast_route,
                                       config.max_batches, threads);
    }
    document["config"] = run_config_to_json(config);
    document["result"] = pooled_result_to_json(pooled);
    Json per_regime = Json::array();
    for (std::size_t r = 0; r < config.regimes.size(); ++r) {
      const auto stats = gformula::regime_stats(run, r);
      const auto bw = gformula::between_within(stats.estimates, stats.withins);
      Json rj;
      rj["name"] = config.regimes[r].name;
      rj["point"] = gformula::point_estimate(run, r);
      rj["vsyn"] = gformula::synthetic_variance(bw.between, bw.within, stats.estimates.size());
      rj["mcse"] = gformula::mi_monte_carlo_se(bw.between, stats.estimates.size());
      per_regime.push_back(std::move(rj));
    }
    document["result"]["regimes"] = std::move(per_regime);
    dump_retained(run, config, table.n_original());
  }

  emit_document(document, config.output);
  return 0;
}

int cmd_validate(const std::string& config_path, const CommonOverrides& overrides) {
  Json j = load_json_file(config_path);
  apply_env_overrides(j);
  if (overrides.seed) j["seed"] = *overrides.seed;
  if (overrides.threads) j["threads"] = *overrides.threads;

  const gformula::RunConfig config = gformula::run_config_from_json(j);
  const auto table = load_dataset(config);
  gformula::validate_run_config(config, table);

  const auto pattern = gformula::missingness_pattern(table, gformula::PatternScope::original_rows);
  const char* pattern_name = pattern == gformula::MissingnessPattern::complete ? "complete"
                             : pattern == gformula::MissingnessPattern::monotone ? "monotone"
                                                                                 : "non_monotone";
  std::printf("OK: %zu rows, %zu columns, %zu missing cells, pattern=%s\n", table.n_rows(),
              table.n_cols(), table.n_missing_cells(), pattern_name);
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& preset,
                 const CommonOverrides& overrides, std::optional<std::size_t> replicates_flag) {
  Json j;
  if (!preset.empty()) {
    j = gformula::preset_study(preset);
    if (!j.contains("toy")) {
      Json wrapped;
      wrapped["study"] = j;
      j = std::move(wrapped);
    }
  } else if (!config_path.empty()) {
    j = load_json_file(config_path);
  } else {
    throw gformula::Error::validation("simulate needs --preset or --config");
  }

  Json document;
  document["format_version"] = 1;
  document["command"] = "simulate";
  std::string output = overrides.output.value_or("");

  if (j.contains("toy")) {
    Json tj = j.at("toy");
    apply_env_overrides(tj);
    if (overrides.seed) tj["seed"] = *overrides.seed;
    if (replicates_flag) tj["n_replicates"] = *replicates_flag;
    gformula::ToyConfig config;
    config.n_obs = tj.value("n_obs", config.n_obs);
    config.n_syn = tj.value("n_syn", config.n_syn);
    config.m = tj.value("m", config.m);
    config.sigma2 = tj.value("sigma2", config.sigma2);
    config.n_replicates = tj.value("n_replicates", config.n_replicates);
    config.seed = tj.value("seed", config.seed);
    log_info("running toy normal-mean oracle");
    const auto report = gformula::toy_normal_mean(config);
    std::fputs(gformula::format_toy_report(report).c_str(), stdout);
    document["report"] = gformula::toy_report_to_json(report);
    if (!output.empty()) {
      emit_document(document, output);
    }
    return 0;
  }

  if (!j.contains("study")) {
    throw gformula::Error::validation("simulate config needs a 'study' or 'toy' object");
  }
  Json sj = j.at("study");
  apply_env_overrides(sj);
  if (overrides.seed) sj["seed"] = *overrides.seed;
  if (overrides.threads) sj["threads"] = *overrides.threads;
  if (replicates_flag) sj["n_replicates"] = *replicates_flag;
  const gformula::StudyConfig config = gformula::study_config_from_json(sj);
  log_info("running study '" + config.label + "' with " + std::to_string(config.n_replicates) +
           " replicates");
  const auto report = gformula::run_study(config);
  std::fputs(gformula::format_report_table(report).c_str(), stdout);
  document["report"] = gformula::study_report_to_json(report);
  if (!output.empty()) {
    emit_document(document, output);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal causal effect estimation: parametric G-formula by Monte-Carlo "
               "simulation or by synthetic multiple imputation"};
  app.require_subcommand(1);

  std::string log_level = "info";
  app.add_option("--log-level", log_level, "quiet, info or debug")->envname("GFORMULA_LOG_LEVEL");

  CommonOverrides overrides;
  std::string config_path;
  std::string preset;
  std::optional<std::string> method_flag;
  std::optional<std::size_t> n_syn_flag;
  std::optional<std::size_t> m_initial_flag;
  std::optional<std::size_t> n_boot_flag;
  std::optional<std::size_t> replicates_flag;

  auto add_common = [&overrides](CLI::App* cmd) {
    cmd->fallthrough();
    cmd->add_option("--seed", overrides.seed, "master seed (overrides config)");
    cmd->add_option("--threads", overrides.threads, "worker pool cap; 0 = hardware");
    cmd->add_option("--output", overrides.output, "write the result document to this path");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "run an estimator on a dataset");
  analyze->add_option("--config", config_path, "JSON run configuration")->required();
  analyze->add_option("--method", method_flag, "mi, mc or auto");
  analyze->add_option("--n-syn", n_syn_flag, "synthetic sample size");
  analyze->add_option("--m-initial", m_initial_flag, "initial number of imputations");
  analyze->add_option("--n-boot", n_boot_flag, "bootstrap replicates (mc)");
  add_common(analyze);

  CLI::App* simulate = app.add_subcommand("simulate", "run a simulation study");
  simulate->add_option("--config", config_path, "JSON study configuration");
  simulate->add_option("--preset", preset, "named scenario (see --help-presets)");
  simulate->add_option("--replicates", replicates_flag, "override the replicate count");
  add_common(simulate);
  bool list_presets = false;
  simulate->add_flag("--help-presets", list_presets, "list preset names and exit");

  CLI::App* validate = app.add_subcommand("validate", "check config/dataset consistency only");
  validate->add_option("--config", config_path, "JSON run configuration")->required();
  add_common(validate);

  CLI11_PARSE(app, argc, argv);

  if (log_level == "quiet") {
    g_log_level = LogLevel::quiet;
  } else if (log_level == "debug") {
    g_log_level = LogLevel::debug;
  } else {
    g_log_level = LogLevel::info;
  }

  try {
    if (list_presets) {
      for (const auto& name : gformula::preset_names()) {
        std::printf("%s\n", name.c_str());
      }
      return 0;
    }
    if (app.got_subcommand(analyze)) {
      return cmd_analyze(config_path, overrides, method_flag, n_syn_flag, m_initial_flag,
                         n_boot_flag);
    }
    if (app.got_subcommand(simulate)) {
      return cmd_simulate(config_path, preset, overrides, replicates_flag);
    }
    if (app.got_subcommand(validate)) {
      return cmd_validate(config_path, overrides);
    }
  } catch (const gformula::Error& e) {
    const char* category = e.kind() == gformula::ErrorKind::validation ? "validation"
                           : e.kind() == gformula::ErrorKind::numeric  ? "numeric"
                                                                       : "io";
    std::fprintf(stderr, "error (%s): %s\n", category, e.what());
    switch (e.kind()) {
      case gformula::ErrorKind::validation:
        return 1;
      case gformula::ErrorKind::numeric:
        return 2;
      case gformula::ErrorKind::io:
        return 3;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
