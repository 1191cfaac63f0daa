#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gformula/models.hpp"
#include "gformula/rng.hpp"
#include "gformula/table.hpp"

namespace gformula {

struct McOptions {
  // Reuse one stream state for both regimes (common random numbers). Off by
  // default: each regime gets its own substream, matching the usual
  // simulate-each-regime-independently implementations.
  bool common_random_numbers = false;
  FitOptions fit;
  unsigned threads = 1;
};

struct McEstimate {
  std::vector<std::string> regimes;
  double point = 0.0;
  std::size_t n_syn = 0;
  std::optional<double> bootstrap_se;
  std::optional<std::pair<double, double>> ci;
  std::size_t n_boot = 0;
  std::size_t n_boot_failed = 0;
};

// Sequentially simulates n_syn trajectories under the regime with parameters
// fixed at the fits, and returns the simulated outcomes.
std::vector<double> simulate_regime(const SequentialModelSpec& spec,
                                    const std::vector<FittedModel>& fits, const Regime& regime,
                                    std::size_t n_syn, RngStream& rng);

// Fits the sequential models once by maximum likelihood on the (complete)
// table and returns the difference in mean simulated outcomes a - b.
McEstimate estimate_contrast_mc(const LongitudinalTable& table, const SequentialModelSpec& spec,
                                const Regime& regime_a, const Regime& regime_b, std::size_t n_syn,
                                RngStream rng, const McOptions& options = {});

// Nonparametric bootstrap over original rows; SE = sd of replicate contrasts,
// normal-based CI around the full-data estimate. Replicates whose fits fail
// are skipped and counted; more than 10% failures is an error.
McEstimate bootstrap_contrast_mc(const LongitudinalTable& table, const SequentialModelSpec& spec,
                                 const Regime& regime_a, const Regime& regime_b,
                                 std::size_t n_syn, std::size_t n_boot, RngStream rng,
                                 const McOptions& options = {});

// Monte-Carlo SE of a simulated contrast: sqrt(var_a/n_syn + var_b/n_syn).
double mc_standard_error(const std::vector<double>& outcomes_a,
                         const std::vector<double>& outcomes_b);

}  // namespace gformula
