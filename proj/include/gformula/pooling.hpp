#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace gformula {

struct BetweenWithin {
  double between = 0.0;  // B-hat: sample variance of the per-imputation estimates
  double within = 0.0;   // V-hat: mean of the complete-data variances
};

BetweenWithin between_within(const std::vector<double>& estimates,
                             const std::vector<double>& withins);

// Rubin's combiner for missing-data MI: (1 + 1/M) B + V.
double rubin_variance(double between, double within, std::size_t m);

// Synthetic-data combiner: (1 + 1/M) B - V. May be <= 0; the sign is data.
double synthetic_variance(double between, double within, std::size_t m);

// t reference degrees of freedom for synthetic-MI inference,
// v_f = (M-1) (1 - M V / ((M+1) B))^2. Infinite when B == 0.
double raghu_rubin_df(double between, double within, std::size_t m);

// Probability that the synthetic variance estimator goes negative in the
// known-variance normal-mean setting: P{chi2_{M-1} < (M-1)/((1+1/M)(r+1))}
// with r = n_syn/n_obs. This is the exact threshold the chi-square bound
// derives from; the commonly quoted shorthand with threshold M/(r+1) is
// available below and is noticeably off for small M.
double prob_negative_vsyn(std::size_t m, double n_syn, double n_obs);
double prob_negative_vsyn_approx(std::size_t m, double n_syn, double n_obs);

// Variance of a contrast of two independently-imputed regime means.
double contrast_variance(double vsyn_a, double vsyn_b);

double chi_squared_cdf(double x, double df);
double student_t_quantile_975(double df);

enum class PoolRule { synthetic, rubin };

struct PooledResult {
  double point = 0.0;
  double between = 0.0;
  double within = 0.0;
  double variance = 0.0;
  double se = 0.0;
  double df = std::numeric_limits<double>::infinity();
  std::pair<double, double> ci_t{0.0, 0.0};
  std::pair<double, double> ci_z{0.0, 0.0};
  std::size_t m_used = 0;
  std::size_t batches_added = 0;
  PoolRule rule = PoolRule::synthetic;
  bool df_floored = false;        // v_f < 1 floored to 1 for the t interval
  bool degenerate = false;        // B = V = 0: no variation at all
  bool negative_initial = false;  // first V_syn was <= 0 and batches were added
};

// Per-imputation scalars for one estimand.
struct ImputationStats {
  std::vector<double> estimates;
  std::vector<double> withins;
};

PooledResult pool_synthetic(const ImputationStats& stats);
PooledResult pool_rubin(const ImputationStats& stats);

// The negative-variance protocol: compute V_syn; while it is <= 0 ask
// `extend` for one more batch of imputations and recompute over everything
// accumulated so far. `stats` must reflect all imputations on each call.
// Throws (numeric) if V_syn is still <= 0 after max_batches extra batches,
// except in the fully degenerate B = V = 0 case which returns variance 0.
PooledResult pool_with_extension(const std::function<ImputationStats()>& stats,
                                 const std::function<void()>& extend, int max_batches);

}  // namespace gformula
