#include "gformula/chained.hpp"

#include <cmath>
#include <cstdio>
#include <mutex>

#include "gformula/error.hpp"
#include "gformula/parallel.hpp"

namespace gformula {

namespace {

struct IncompleteVar {
  std::size_t col = 0;
  std::vector<std::size_t> missing_rows;
  std::vector<std::uint8_t> is_missing_row;  // indexed by row
  DesignSpec spec;
};

std::vector<IncompleteVar> incomplete_variables(const LongitudinalTable& table) {
  const auto& schema = table.schema();
  std::vector<IncompleteVar> vars;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    IncompleteVar v;
    v.col = c;
    v.is_missing_row.assign(table.n_rows(), 0);
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
      if (table.missing(r, c)) {
        v.missing_rows.push_back(r);
        v.is_missing_row[r] = 1;
      }
    }
    if (v.missing_rows.empty()) {
      continue;
    }
    if (v.missing_rows.size() == table.n_rows()) {
      throw Error::validation("column " + schema.column(c).name + " is 100% missing");
    }
    v.spec.target = schema.column(c).name;
    v.spec.family = schema.column(c).kind == ColumnKind::binary ? ModelFamily::logistic
                                                                : ModelFamily::normal_linear;
    for (std::size_t p = 0; p < schema.size(); ++p) {
      if (p != c) {
        v.spec.predictors.push_back(schema.column(p).name);
      }
    }
    vars.push_back(std::move(v));
  }
  return vars;
}

void record_trace(ChainTrace* trace, std::size_t m, int iteration, const std::string& name,
                  const LongitudinalTable& working, const IncompleteVar& var) {
  if (trace == nullptr) {
    return;
  }
  double sum = 0.0;
  for (const std::size_t r : var.missing_rows) {
    sum += working.cell(r, var.col);
  }
  trace->rows.push_back(ChainTrace::Row{m, iteration, name,
                                        sum / static_cast<double>(var.missing_rows.size())});
}

}  // namespace

std::string ChainTrace::to_csv() const {
  std::string out = "m,iteration,variable,mean_imputed\n";
  char buf[64];
  for (const auto& row : rows) {
    out += std::to_string(row.m);
    out += ',';
    out += std::to_string(row.iteration);
    out += ',';
    out += row.variable;
    out += ',';
    std::snprintf(buf, sizeof(buf), "%.17g", row.mean_imputed);
    out += buf;
    out += '\n';
  }
  return out;
}

void complete_one_chain(LongitudinalTable& working, const ChainConfig& config, RngStream stream,
                        std::size_t trace_m, ChainTrace* trace) {
  if (config.n_iterations < 1) {
    throw Error::validation("chained imputation requires n_iterations >= 1");
  }
  const auto vars = incomplete_variables(working);
  if (vars.empty()) {
    return;
  }

  // Initial fill: marginal draws from each variable's observed values.
  for (const auto& var : vars) {
    const auto donors = working.observed_values(var.col, false);
    for (const std::size_t r : var.missing_rows) {
      working.set_cell(r, var.col, donors[stream.uniform_index(donors.size())]);
    }
  }

  std::vector<std::optional<ParameterDraw>> last_draw(vars.size());
  Eigen::VectorXd covariates;
  for (int iter = 0; iter < config.n_iterations; ++iter) {
    const bool final_sweep = iter + 1 == config.n_iterations;
    for (std::size_t v = 0; v < vars.size(); ++v) {
      const auto& var = vars[v];
      // Rows where the target was genuinely observed; predictor gaps are
      // filled with the chain's current imputations, so the design is
      // complete by construction.
      const auto observed_target = [&var](std::size_t r) { return var.is_missing_row[r] == 0; };
      try {
        const auto model = fit(var.spec, working, observed_target, config.fit);
        last_draw[v] = posterior_draw(model, stream);
      } catch (const Error&) {
        // Transient failure (e.g. separation on a half-imputed design):
        // keep the previous accepted draw for this sweep. A failure on the
        // final sweep with nothing to fall back on is fatal.
        if (final_sweep && !last_draw[v].has_value()) {
          throw;
        }
      }
      if (!last_draw[v].has_value()) {
        continue;  // first sweep failed; cells keep their marginal fill
      }
      for (const std::size_t r : var.missing_rows) {
        covariates.resize(static_cast<Eigen::Index>(var.spec.predictors.size()));
        for (std::size_t j = 0; j < var.spec.predictors.size(); ++j) {
          const std::size_t col = working.schema().index_of(var.spec.predictors[j]);
          covariates[static_cast<Eigen::Index>(j)] = working.cell(r, col);
        }
        working.set_cell(r, var.col, predictive_draw(*last_draw[v], covariates, stream));
      }
      record_trace(trace, trace_m, iter + 1, var.spec.target, working, var);
    }
  }
}

std::vector<LongitudinalTable> chained_impute(const LongitudinalTable& table,
                                              const ChainConfig& config, std::size_t m,
                                              RngStream base, unsigned threads,
                                              ChainTrace* trace) {
  if (m < 1) {
    throw Error::validation("chained_impute requires m >= 1");
  }
  std::vector<LongitudinalTable> completed(m, LongitudinalTable{});
  std::vector<ChainTrace> traces(trace != nullptr ? m : 0);
  parallel_for(m, threads, [&](std::size_t i) {
    LongitudinalTable working = table;
    ChainTrace* t = trace != nullptr ? &traces[i] : nullptr;
    complete_one_chain(working, config, base.split(i).split(0), i, t);
    completed[i] = std::move(working);
  });
  if (trace != nullptr) {
    for (auto& t : traces) {
      trace->rows.insert(trace->rows.end(), t.rows.begin(), t.rows.end());
    }
  }
  return completed;
}

TwoStageImputer::TwoStageImputer(const LongitudinalTable& observed, const ChainConfig& chain,
                                 const SequentialModelSpec& spec, std::vector<Regime> regimes,
                                 std::size_t n_syn, RngStream base, MiOptions options)
    : observed_(observed),
      chain_(chain),
      spec_(spec),
      regimes_(std::move(regimes)),
      n_syn_(n_syn),
      base_(base),
      options_(options) {
  if (n_syn_ < 2) {
    throw Error::validation("synthetic imputation requires n_syn >= 2");
  }
  validate_sequential_spec(spec_, observed.schema());
  for (const auto& r : regimes_) {
    validate_regime(r, observed.schema());
    regime_names_.push_back(r.name);
  }
  const auto& schema = observed.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (observed.observed_values(c, true).empty()) {
      throw Error::validation("column " + schema.column(c).name + " has no observed values");
    }
  }
}

ImputationRecord TwoStageImputer::impute_once(std::uint64_t m, LongitudinalTable* keep) const {
  RngStream stream_m = base_.split(m);

  // Stage 1: a fresh chained completion of the actual missing data.
  LongitudinalTable completed = observed_;
  complete_one_chain(completed, chain_, stream_m.split(0), static_cast<std::size_t>(m), nullptr);

  // Stage 2: augment and impute the counterfactual rows once.
  LongitudinalTable augmented = completed;
  const auto blocks = detail::augment_blocks(augmented, regimes_, n_syn_);
  const auto filter = [&augmented](std::size_t r) { return augmented.original(r); };
  const auto fits = fit_sequential(spec_, augmented, filter, options_.fit);
  RngStream pass_stream = stream_m.split(1);
  return detail::sequential_block_pass(spec_, fits, augmented, blocks, options_.shared_draws,
                                       pass_stream, keep);
}

ImputationRun two_stage_synthetic(const LongitudinalTable& observed, const ChainConfig& chain,
                                  const SequentialModelSpec& spec,
                                  const std::vector<Regime>& regimes, std::size_t m,
                                  std::size_t n_syn, RngStream base, const MiOptions& options,
                                  unsigned threads) {
  TwoStageImputer engine(observed, chain, spec, regimes, n_syn, base, options);
  return run_imputations(engine, m, options.retain_datasets, threads);
}

LongitudinalTable apply_mcar(const LongitudinalTable& table, double pi,
                             const std::vector<std::string>& columns, RngStream& rng) {
  if (pi < 0.0 || pi >= 1.0) {
    throw Error::validation("MCAR probability must lie in [0, 1)");
  }
  std::vector<std::size_t> cols;
  cols.reserve(columns.size());
  for (const auto& name : columns) {
    cols.push_back(table.schema().index_of(name));
  }
  LongitudinalTable out = table;
  if (pi == 0.0) {
    return out;
  }
  for (std::size_t r = 0; r < out.n_rows(); ++r) {
    for (const std::size_t c : cols) {
      if (rng.bernoulli(pi)) {
        out.set_missing(r, c);
      }
    }
  }
  return out;
}

}  // namespace gformula
