#pragma once

#include "repmart/esg.hpp"
#include "repmart/fit.hpp"
#include "repmart/portfolios.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace repmart {

// Empirical distribution of time-t value estimates over outer paths.
struct ValueDistribution {
    int horizon = 0;
    Vector values;
    double v0 = 0.0;
    std::string method;
};

struct NestedMcConfig {
    int n_outer = 0;
    int n_inner = 0;
    int horizon = 1;
    std::uint64_t seed = 0;
};

// V_t per outer prefix: G_t(x_{1:t})^T beta; v0 = G_0^T beta.
ValueDistribution eval_value_process(const ReplicatingMartingale& model, const Matrix& x_prefix,
                                     int t);

// Standard nested Monte Carlo: per outer prefix, the mean of f over n_inner
// independent completions; v0 is the grand mean.
ValueDistribution nested_mc(const Portfolio& portfolio, const EsgConfig& esg,
                            const NestedMcConfig& cfg);

// Empirical lower quantile: smallest order statistic y with F(y) >= alpha.
double value_at_risk(const Vector& losses, double alpha);

// Mean of the worst ceil((1-alpha) n) losses.
double expected_shortfall(const Vector& losses, double alpha);

// Loss samples -(V_t - V_{t-1}).
Vector delta_v_losses(const ValueDistribution& dist, double v_prev);
Vector delta_v_losses(const ValueDistribution& dist, const ValueDistribution& prev);

// Inner/outer budget split selection against a benchmark ES ------------------

struct SplitCandidate {
    int n_inner = 0;
    int n_outer = 0;
    double mape_es = 0.0;
};

struct SplitChoice {
    int n_outer = 0;
    int n_inner = 0;
    std::vector<SplitCandidate> candidates;
};

// estimator(n_outer, n_inner, repetition) returns one ES estimate for that
// split. Each candidate runs `repetitions` times; the split with the lowest
// MApE ES wins, ties going to the larger n_outer.
SplitChoice split_search(long total_budget, const std::vector<int>& inner_candidates,
                         int repetitions, double bench_es,
                         const std::function<double(int, int, int)>& estimator);

// Convenience overload running nested MC on the portfolio.
SplitChoice split_search(const Portfolio& portfolio, const EsgConfig& esg, long total_budget,
                         const std::vector<int>& inner_candidates, int repetitions,
                         double bench_es, int horizon, double alpha, std::uint64_t seed);

} // namespace repmart
