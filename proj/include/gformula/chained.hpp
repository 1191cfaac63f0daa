#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gformula/mi.hpp"
#include "gformula/models.hpp"
#include "gformula/rng.hpp"
#include "gformula/table.hpp"

namespace gformula {

// Fully conditional specification over the original rows: every incomplete
// variable is regressed on all other variables, with families chosen by
// column kind (normal linear / logistic).
struct ChainConfig {
  int n_iterations = 5;
  FitOptions fit;
  bool record_trace = false;
};

// Per-(imputation, sweep, variable) mean of the currently imputed cells, for
// eyeballing chain convergence.
struct ChainTrace {
  struct Row {
    std::size_t m = 0;
    int iteration = 0;
    std::string variable;
    double mean_imputed = 0.0;
  };
  std::vector<Row> rows;
  std::string to_csv() const;
};

// M independent chains, each: marginal-draw initial fill, then n_iterations
// sweeps in causal time order refitting each incomplete variable on the rows
// where it is observed, posterior-drawing parameters and imputing its missing
// cells given all other (current) values. Observed cells are never altered.
std::vector<LongitudinalTable> chained_impute(const LongitudinalTable& table,
                                              const ChainConfig& config, std::size_t m,
                                              RngStream base, unsigned threads = 1,
                                              ChainTrace* trace = nullptr);

// Completes one chain in place; exposed for the two-stage engine.
void complete_one_chain(LongitudinalTable& working, const ChainConfig& config, RngStream stream,
                        std::size_t trace_m = 0, ChainTrace* trace = nullptr);

// Two-stage pipeline for partially observed data: per imputation, stage 1
// runs one fresh chained completion of the original rows, stage 2 augments
// that completed dataset per regime and imputes the counterfactual rows once
// through the sequential models (refit on the completed dataset, one
// posterior draw). Extension batches repeat both stages.
class TwoStageImputer : public ImputationEngine {
 public:
  TwoStageImputer(const LongitudinalTable& observed, const ChainConfig& chain,
                  const SequentialModelSpec& spec, std::vector<Regime> regimes,
                  std::size_t n_syn, RngStream base, MiOptions options = {});

  ImputationRecord impute_once(std::uint64_t m, LongitudinalTable* keep) const override;
  std::size_t n_regimes() const override { return regimes_.size(); }
  std::size_t n_syn() const override { return n_syn_; }
  const std::vector<std::string>& regime_names() const override { return regime_names_; }

 private:
  LongitudinalTable observed_;
  ChainConfig chain_;
  SequentialModelSpec spec_;
  std::vector<Regime> regimes_;
  std::vector<std::string> regime_names_;
  std::size_t n_syn_ = 0;
  RngStream base_;
  MiOptions options_;
};

ImputationRun two_stage_synthetic(const LongitudinalTable& observed, const ChainConfig& chain,
                                  const SequentialModelSpec& spec,
                                  const std::vector<Regime>& regimes, std::size_t m,
                                  std::size_t n_syn, RngStream base,
                                  const MiOptions& options = {}, unsigned threads = 1);

// Masks each cell of the listed columns independently with probability pi.
LongitudinalTable apply_mcar(const LongitudinalTable& table, double pi,
                             const std::vector<std::string>& columns, RngStream& rng);

}  // namespace gformula
