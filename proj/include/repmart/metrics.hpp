#pragma once

#include "repmart/risk.hpp"

#include <optional>
#include <string>
#include <vector>

namespace repmart {

// Large-sample reference distribution of V_t on a fixed validation driver
// set, shared between the benchmark and every estimator.
struct BenchmarkDistribution {
    int horizon = 1;
    double alpha = 0.99;
    double v0 = 0.0;
    Vector values;
    double es = 0.0;         // expected_shortfall(-(values - v0), alpha)
    double mean_abs_v = 0.0; // E|V_t| over the validation set
    std::string provenance;
    std::string dataset_id;

    void finalize(); // recomputes es and mean_abs_v from values and v0
};

struct RunRecord {
    double v0_hat = 0.0;
    double es_hat = 0.0;
    double l1_num = 0.0; // mean |V_hat - V_bench| on the shared validation set
    double seconds = 0.0;
    bool has_l1 = false;
    bool failed = false;
    std::string error;
    int fit_iterations = 0;
    bool fit_converged = true;
    double fit_residual = 0.0;
};

struct MacroRunResult {
    std::string method;
    int samples = 0;
    std::string dataset_id; // validation set the runs were evaluated on
    std::vector<RunRecord> runs;
};

// Appendix-style quality metrics, in percent.
double mape_pv(const MacroRunResult& results, const BenchmarkDistribution& bench);
double mape_es(const MacroRunResult& results, const BenchmarkDistribution& bench);
double mean_rel_l1(const MacroRunResult& results, const BenchmarkDistribution& bench);

// Experiment orchestration ----------------------------------------------------

struct MethodSpec {
    enum class Kind { nested_mc, regress_now, regress_later };
    Kind kind = Kind::regress_later;
    FitConfig fit; // family and hyper-parameters for the regression kinds
    std::vector<int> nmc_inner_grid = {1, 10, 25, 50, 100, 250, 400, 500};
    std::string label;
};

struct ExperimentCell {
    std::string method;
    int samples = 0;
    double mape_pv = 0.0;
    double mape_es = 0.0;
    double mean_rel_l1 = 0.0;
    bool has_l1 = false;
    double mean_seconds = 0.0;
    int failures = 0;
    MacroRunResult result;
};

struct RiskReport {
    std::string portfolio;
    int maturity = 0;
    int repetitions = 0;
    double alpha = 0.99;
    double bench_v0 = 0.0;
    double bench_es = 0.0;
    std::string bench_provenance;
    std::vector<ExperimentCell> cells;
};

// Validation driver prefixes (n x d*t) drawn from a dedicated stream.
Matrix sample_validation_prefix(const EsgConfig& esg, int n_paths, int horizon,
                                std::uint64_t seed);

// Benchmark via closed-form call valuation on the validation set (exact
// bivariate log-normal exchange pricing under this generator).
BenchmarkDistribution make_call_benchmark_closed_form(const EsgConfig& esg, const CallSpec& spec,
                                                      const Matrix& validation_prefix,
                                                      int horizon, double alpha,
                                                      const std::string& dataset_id);

// Benchmark via nested MC with n_inner completions per validation prefix.
BenchmarkDistribution make_benchmark_nested_mc(const Portfolio& portfolio, const EsgConfig& esg,
                                               const Matrix& validation_prefix, int horizon,
                                               int n_inner, double alpha, std::uint64_t seed,
                                               const std::string& dataset_id);

// Closed-form time-t value of the (short) call given the time-t state;
// eq_discounted_t is EQ_t / C_t (equal to index_init at t = 0).
double call_value_closed_form(const EsgConfig& esg, const CallSpec& spec, double r_t,
                              double log_cash_t, double eq_discounted_t, int t);

// Optional persistence for completed (method, sample-size) cells, used to
// resume interrupted experiments.
struct CellCache {
    virtual ~CellCache() = default;
    virtual bool load(const std::string& method, int samples, ExperimentCell& out) = 0;
    virtual void store(const ExperimentCell& cell) = 0;
};

// One repetition of the simulation -> fit -> evaluation chain for each
// (method, sample size); aggregates MApE PV / MApE ES / mean relative L1.
// Repetitions run in parallel with slot-indexed records, so results do not
// depend on the thread count.
RiskReport run_macro_experiment(const Portfolio& portfolio, const EsgConfig& esg,
                                const std::vector<MethodSpec>& methods,
                                const std::vector<int>& sample_sizes, int repetitions,
                                const BenchmarkDistribution& bench,
                                const Matrix& validation_prefix, std::uint64_t master_seed,
                                CellCache* cache = nullptr);

} // namespace repmart
