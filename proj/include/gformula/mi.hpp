#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gformula/models.hpp"
#include "gformula/pooling.hpp"
#include "gformula/rng.hpp"
#include "gformula/table.hpp"

namespace gformula {

// Per-imputation sufficient statistics: for each regime block, the mean of
// the imputed outcomes and the complete-data variance of that mean
// (sample variance / n_syn).
struct ImputationRecord {
  std::vector<double> block_mean;
  std::vector<double> block_mean_variance;
};

struct ImputationRun {
  std::vector<ImputationRecord> records;
  std::vector<std::string> regime_names;
  std::size_t n_syn = 0;
  std::uint64_t next_m = 0;
  // Retained imputed datasets (optional, memory heavy): one augmented table
  // per imputation covering all regime blocks.
  std::vector<LongitudinalTable> retained;
};

struct MiOptions {
  // One parameter draw per model per imputation, shared by every regime
  // block (what a single chained-equations call over the stacked augmented
  // dataset produces). When false each block gets its own draws.
  bool shared_draws = true;
  bool retain_datasets = false;
  FitOptions fit;
};

// Anything that can produce imputation m on demand. Imputations are i.i.d.
// given the observed data; m only selects the random substream, so any batch
// can be (re)generated in isolation and in parallel.
class ImputationEngine {
 public:
  virtual ~ImputationEngine() = default;
  virtual ImputationRecord impute_once(std::uint64_t m, LongitudinalTable* keep) const = 0;
  virtual std::size_t n_regimes() const = 0;
  virtual std::size_t n_syn() const = 0;
  virtual const std::vector<std::string>& regime_names() const = 0;
};

// Synthetic imputation for a complete original dataset: the table is
// augmented once per regime, models are fitted on the original rows only,
// and each imputation takes one posterior draw per model followed by a
// single sequential pass over the augmented rows (the augmented pattern is
// monotone by construction, so one pass completes every block).
class SyntheticImputer : public ImputationEngine {
 public:
  SyntheticImputer(const LongitudinalTable& observed, const SequentialModelSpec& spec,
                   std::vector<Regime> regimes, std::size_t n_syn, RngStream base,
                   MiOptions options = {});

  ImputationRecord impute_once(std::uint64_t m, LongitudinalTable* keep) const override;
  std::size_t n_regimes() const override { return regimes_.size(); }
  std::size_t n_syn() const override { return n_syn_; }
  const std::vector<std::string>& regime_names() const override { return regime_names_; }

  const std::vector<FittedModel>& fits() const { return fits_; }
  const LongitudinalTable& augmented_template() const { return augmented_; }

 private:
  SequentialModelSpec spec_;
  std::vector<Regime> regimes_;
  std::vector<std::string> regime_names_;
  std::size_t n_syn_ = 0;
  RngStream base_;
  MiOptions options_;
  LongitudinalTable augmented_;
  std::vector<std::pair<std::size_t, std::size_t>> blocks_;  // per-regime [begin, end)
  std::vector<FittedModel> fits_;
};

// Shared sequential-pass machinery, also used by the two-stage pipeline.
namespace detail {
ImputationRecord sequential_block_pass(const SequentialModelSpec& spec,
                                       const std::vector<FittedModel>& fits,
                                       const LongitudinalTable& augmented,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& blocks,
                                       bool shared_draws, RngStream& stream,
                                       LongitudinalTable* keep);
std::vector<std::pair<std::size_t, std::size_t>> augment_blocks(LongitudinalTable& table,
                                                                const std::vector<Regime>& regimes,
                                                                std::size_t n_syn);
}  // namespace detail

// Runs M imputations (appending to the run), deterministically in m
// regardless of the thread count.
void extend_run(ImputationRun& run, const ImputationEngine& engine, std::size_t batch,
                unsigned threads = 1);

ImputationRun run_imputations(const ImputationEngine& engine, std::size_t m, bool retain,
                              unsigned threads = 1);

// Convenience one-shot: augment + M synthetic imputations.
ImputationRun impute_synthetic(const LongitudinalTable& observed, const SequentialModelSpec& spec,
                               const std::vector<Regime>& regimes, std::size_t m,
                               std::size_t n_syn, RngStream base, const MiOptions& options = {},
                               unsigned threads = 1);

double point_estimate(const ImputationRun& run, std::size_t regime);

// Per-imputation scalars for one regime mean.
ImputationStats regime_stats(const ImputationRun& run, std::size_t regime);

// Per-imputation contrast d_m = mean_a - mean_b with within-variance
// v_a + v_b (the two blocks are independent given the parameter draws).
ImputationStats contrast_stats(const ImputationRun& run, std::size_t regime_a,
                               std::size_t regime_b);

enum class ContrastRoute {
  direct,       // pool the per-imputation contrasts through the synthetic rule
  sum_regimes,  // point = difference of pooled means, variance = sum of per-regime V_syn
};

// Pooled single-regime mean with the negative-variance extension protocol.
PooledResult pool_regime_mean(ImputationRun& run, const ImputationEngine& engine,
                              std::size_t regime, int max_batches, unsigned threads = 1);

// Pooled contrast between two regimes with the extension protocol.
PooledResult pool_contrast(ImputationRun& run, const ImputationEngine& engine,
                           std::size_t regime_a, std::size_t regime_b, ContrastRoute route,
                           int max_batches, unsigned threads = 1);

}  // namespace gformula
