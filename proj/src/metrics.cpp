#include "repmart/metrics.hpp"

#include "repmart/errors.hpp"
#include "repmart/parallel.hpp"
#include "repmart/rng.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace repmart {

namespace {

constexpr std::uint64_t kValidationStream = 0x56414c49;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

void BenchmarkDistribution::finalize() {
    es = expected_shortfall((v0 - values.array()).matrix(), alpha);
    mean_abs_v = values.cwiseAbs().mean();
}

double mape_pv(const MacroRunResult& results, const BenchmarkDistribution& bench) {
    if (bench.v0 == 0.0) throw std::invalid_argument("mape_pv: zero benchmark present value");
    double acc = 0.0;
    int count = 0;
    for (const auto& run : results.runs) {
        if (run.failed) continue;
        acc += std::abs(run.v0_hat - bench.v0) / std::abs(bench.v0);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("mape_pv: no successful runs");
    return 100.0 * acc / count;
}

double mape_es(const MacroRunResult& results, const BenchmarkDistribution& bench) {
    if (!(bench.es > 0.0)) throw std::invalid_argument("mape_es: benchmark ES must be positive");
    double acc = 0.0;
    int count = 0;
    for (const auto& run : results.runs) {
        if (run.failed) continue;
        acc += std::abs(run.es_hat - bench.es) / bench.es;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("mape_es: no successful runs");
    return 100.0 * acc / count;
}

double mean_rel_l1(const MacroRunResult& results, const BenchmarkDistribution& bench) {
    if (!(bench.mean_abs_v > 0.0))
        throw std::invalid_argument("mean_rel_l1: benchmark E|V_t| must be positive");
    if (results.dataset_id != bench.dataset_id)
        throw std::invalid_argument(
            "mean_rel_l1: runs and benchmark use different validation sets (paired "
            "evaluation required)");
    double acc = 0.0;
    int count = 0;
    for (const auto& run : results.runs) {
        if (run.failed) continue;
        if (!run.has_l1)
            throw std::invalid_argument("mean_rel_l1: run lacks pathwise values on the shared set");
        acc += run.l1_num / bench.mean_abs_v;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("mean_rel_l1: no successful runs");
    return 100.0 * acc / count;
}

Matrix sample_validation_prefix(const EsgConfig& esg, int n_paths, int horizon,
                                std::uint64_t seed) {
    DriverPaths drv = sample_driver(n_paths, horizon, esg.dim,
                                    derive_seed(seed, kValidationStream));
    const int cols = horizon * esg.dim;
    Matrix out(n_paths, cols);
    for (int p = 0; p < n_paths; ++p)
        for (int c = 0; c < cols; ++c) out(p, c) = drv.x.path(p)[c];
    return out;
}

// Closed-form call value ------------------------------------------------------
//
// Discounting the payoff, max(EQ_T - K, 0)/C_T = (e^P - e^W)^+ with
// P = log(EQ_T/C_T) = log(EQ_t/C_t) + U and W = log K - Y_T, where U is the
// accumulated log excess return. Given the time-t state, (P, W) is bivariate
// normal, so the value prices as an exchange option.
double call_value_closed_form(const EsgConfig& esg, const CallSpec& spec, double r_t,
                              double log_cash_t, double eq_discounted_t, int t) {
    if (t > spec.maturity) throw std::invalid_argument("call_value_closed_form: t beyond maturity");
    const HullWhiteStep hw = hull_white_step(esg);
    const double s3 = esg.sigma_eq;
    const double rho3 = esg.rho_eq_rate;

    // Accumulate moments of (r_s, dY, U) over the remaining steps, where dY
    // is the log-cash increment and U the log excess-return increment.
    double mu_r = r_t, var_r = 0.0;
    double mu_y = 0.0, var_y = 0.0, cov_ry = 0.0;
    double mu_u = 0.0, var_u = 0.0, cov_uy = 0.0, cov_ur = 0.0;
    for (int s = t; s < spec.maturity; ++s) {
        mu_y += hw.phi * mu_r + hw.mean_y;
        var_y += hw.phi * hw.phi * var_r + 2.0 * hw.phi * cov_ry + hw.std_y * hw.std_y;
        cov_uy += hw.phi * cov_ur + s3 * rho3 * hw.std_y * hw.rho_ry;
        cov_ry = hw.decay * (cov_ry + hw.phi * var_r) + hw.std_r * hw.std_y * hw.rho_ry;
        cov_ur = hw.decay * cov_ur + s3 * rho3 * hw.std_r;
        var_r = hw.decay * hw.decay * var_r + hw.std_r * hw.std_r;
        mu_r = hw.decay * mu_r + hw.mean_r;
        mu_u += -0.5 * s3 * s3;
        var_u += s3 * s3;
    }

    const double mu_p = std::log(eq_discounted_t) + mu_u;
    const double var_p = var_u;
    const double mu_w = std::log(spec.strike) - log_cash_t - mu_y;
    const double var_w = var_y;
    const double cov_pw = -cov_uy;

    const double s2 = var_p + var_w - 2.0 * cov_pw;
    const double fwd_p = std::exp(mu_p + 0.5 * var_p);
    const double fwd_w = std::exp(mu_w + 0.5 * var_w);
    double value;
    if (s2 <= 0.0) {
        value = std::max(fwd_p - fwd_w, 0.0);
    } else {
        const double s = std::sqrt(s2);
        const double d1 = (mu_p - mu_w + var_p - cov_pw) / s;
        const double d2 = (mu_p - mu_w + cov_pw - var_w) / s;
        value = fwd_p * normal_cdf(d1) - fwd_w * normal_cdf(d2);
    }
    return -value; // short position
}

BenchmarkDistribution make_call_benchmark_closed_form(const EsgConfig& esg, const CallSpec& spec,
                                                      const Matrix& validation_prefix,
                                                      int horizon, double alpha,
                                                      const std::string& dataset_id) {
    EsgConfig cfg = esg;
    cfg.horizon = horizon;
    cfg.validate();
    const int n = static_cast<int>(validation_prefix.rows());
    if (validation_prefix.cols() != horizon * cfg.dim)
        throw std::invalid_argument("make_call_benchmark_closed_form: prefix dims mismatch");

    // One-step economy per validation prefix to get the time-t state.
    DriverPaths drv;
    drv.x = PathTensor(n, horizon, cfg.dim);
    for (int p = 0; p < n; ++p)
        for (int c = 0; c < horizon * cfg.dim; ++c) drv.x.data[static_cast<std::size_t>(p) * horizon * cfg.dim + c] = validation_prefix(p, c);
    EconomicPaths econ = simulate_economy(drv, cfg);

    BenchmarkDistribution bench;
    bench.horizon = horizon;
    bench.alpha = alpha;
    bench.dataset_id = dataset_id;
    bench.provenance = "closed_form_call";
    bench.values = Vector(n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const int pi = static_cast<int>(p);
            const double s3 = econ.eq_index.at(pi, horizon) / econ.cash.at(pi, horizon);
            bench.values[static_cast<Eigen::Index>(p)] = call_value_closed_form(
                cfg, spec, econ.short_rate.at(pi, horizon), econ.log_cash.at(pi, horizon), s3,
                horizon);
        }
    });
    bench.v0 = call_value_closed_form(cfg, spec, cfg.r0, 0.0, cfg.index_init, 0);
    bench.finalize();
    return bench;
}

BenchmarkDistribution make_benchmark_nested_mc(const Portfolio& portfolio, const EsgConfig& esg,
                                               const Matrix& validation_prefix, int horizon,
                                               int n_inner, double alpha, std::uint64_t seed,
                                               const std::string& dataset_id) {
    const int T = portfolio.maturity();
    EsgConfig cfg = esg;
    cfg.horizon = T;
    cfg.validate();
    const int n = static_cast<int>(validation_prefix.rows());
    const int d = cfg.dim;
    if (validation_prefix.cols() != horizon * d)
        throw std::invalid_argument("make_benchmark_nested_mc: prefix dims mismatch");

    BenchmarkDistribution bench;
    bench.horizon = horizon;
    bench.alpha = alpha;
    bench.dataset_id = dataset_id;
    bench.provenance = "nested_mc_inner_" + std::to_string(n_inner);
    bench.values = Vector(n);

    double v0_acc = 0.0;
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
        DriverPaths block;
        block.x = PathTensor(n_inner, T, d);
        block.seed = seed;
        for (std::size_t o = lo; o < hi; ++o) {
            for (int j = 0; j < n_inner; ++j) {
                Rng rng = Rng::substream(seed, o * static_cast<std::size_t>(n_inner) + j,
                                         kValidationStream + 1);
                double* row = block.x.data.data() + static_cast<std::size_t>(j) * T * d;
                for (int c = 0; c < horizon * d; ++c) row[c] = validation_prefix(static_cast<Eigen::Index>(o), c);
                for (int c = horizon * d; c < T * d; ++c) row[c] = rng.next_normal();
            }
            EconomicPaths econ = simulate_economy(block, cfg);
            CashflowSample cf = portfolio.evaluate(econ);
            double acc = 0.0;
            for (double v : cf.terminal) acc += v;
            bench.values[static_cast<Eigen::Index>(o)] = acc / n_inner;
        }
    });
    for (Eigen::Index i = 0; i < bench.values.size(); ++i) v0_acc += bench.values[i];
    bench.v0 = v0_acc / n;
    bench.finalize();
    return bench;
}

// Macro experiment -------------------------------------------------------------

namespace {

struct Evaluation {
    double v0_hat;
    double es_hat;
    double l1_num;
    bool has_l1;
};

Evaluation evaluate_on_validation(const Vector& values, double v0_hat,
                                  const BenchmarkDistribution& bench) {
    Evaluation ev;
    ev.v0_hat = v0_hat;
    ev.es_hat = expected_shortfall((v0_hat - values.array()).matrix(), bench.alpha);
    ev.l1_num = (values - bench.values).cwiseAbs().mean();
    ev.has_l1 = true;
    return ev;
}

} // namespace

RiskReport run_macro_experiment(const Portfolio& portfolio, const EsgConfig& esg,
                                const std::vector<MethodSpec>& methods,
                                const std::vector<int>& sample_sizes, int repetitions,
                                const BenchmarkDistribution& bench,
                                const Matrix& validation_prefix, std::uint64_t master_seed,
                                CellCache* cache) {
    if (repetitions < 1) throw std::invalid_argument("run_macro_experiment: repetitions must be >= 1");
    if (static_cast<int>(bench.values.size()) != validation_prefix.rows())
        throw std::invalid_argument("run_macro_experiment: benchmark/validation size mismatch");
    const int T = portfolio.maturity();
    const int t = bench.horizon;
    EsgConfig sim_cfg = esg;
    sim_cfg.horizon = T;
    sim_cfg.validate();
    const int d = sim_cfg.dim;

    RiskReport report;
    report.portfolio = portfolio.name();
    report.maturity = T;
    report.repetitions = repetitions;
    report.alpha = bench.alpha;
    report.bench_v0 = bench.v0;
    report.bench_es = bench.es;
    report.bench_provenance = bench.provenance;

    for (const auto& method : methods) {
        for (int samples : sample_sizes) {
            ExperimentCell cell;
            if (cache && cache->load(method.label, samples, cell)) {
                report.cells.push_back(std::move(cell));
                continue;
            }
            cell.method = method.label;
            cell.samples = samples;
            cell.result.method = method.label;
            cell.result.samples = samples;
            cell.result.dataset_id = bench.dataset_id;
            const std::uint64_t cell_seed = derive_seed(
                derive_seed(master_seed, fnv1a(method.label)), static_cast<std::uint64_t>(samples));

            // Nested MC picks one optimal inner/outer split per budget, using
            // knowledge of the benchmark (optimistic by construction).
            SplitChoice split;
            std::string split_error;
            if (method.kind == MethodSpec::Kind::nested_mc) {
                try {
                    split = split_search(portfolio, sim_cfg, samples, method.nmc_inner_grid,
                                         repetitions, bench.es, t, bench.alpha,
                                         derive_seed(cell_seed, 0x53504c54));
                } catch (const std::exception& e) {
                    split_error = e.what();
                }
            }

            cell.result.runs.resize(repetitions);
            parallel_for(static_cast<std::size_t>(repetitions), [&](std::size_t rep_lo,
                                                                    std::size_t rep_hi) {
              for (std::size_t rep = rep_lo; rep < rep_hi; ++rep) {
                RunRecord record;
                const std::uint64_t run_seed = derive_seed(cell_seed, static_cast<std::uint64_t>(rep));
                const auto started = std::chrono::steady_clock::now();
                try {
                    if (method.kind == MethodSpec::Kind::nested_mc) {
                        if (!split_error.empty())
                            throw NumericalError("split search failed: " + split_error);
                        NestedMcConfig mc;
                        mc.n_outer = split.n_outer;
                        mc.n_inner = split.n_inner;
                        mc.horizon = t;
                        mc.seed = derive_seed(run_seed, 0x4e4d43);
                        ValueDistribution dist = nested_mc(portfolio, sim_cfg, mc);
                        record.v0_hat = dist.v0;
                        record.es_hat =
                            expected_shortfall(delta_v_losses(dist, dist.v0), bench.alpha);
                        record.has_l1 = false;
                    } else {
                        DriverPaths drv = sample_driver(samples, T, d, derive_seed(run_seed, 0x545241));
                        EconomicPaths econ = simulate_economy(drv, sim_cfg);
                        CashflowSample cf = portfolio.evaluate(econ);
                        TrainingSet train;
                        train.x = Matrix(samples, T * d);
                        for (int p = 0; p < samples; ++p)
                            for (int c = 0; c < T * d; ++c) train.x(p, c) = drv.x.path(p)[c];
                        train.y = Eigen::Map<const Vector>(cf.terminal.data(), samples);

                        FitConfig fit_cfg = method.fit;
                        fit_cfg.driver_dim = d;
                        fit_cfg.seed = derive_seed(run_seed, 0x464954);

                        Evaluation ev{};
                        if (method.kind == MethodSpec::Kind::regress_later) {
                            ReplicatingMartingale model = fit_regress_later(train, fit_cfg);
                            ValueDistribution dist =
                                eval_value_process(model, validation_prefix, t);
                            ev = evaluate_on_validation(dist.values, dist.v0, bench);
                            record.fit_iterations = model.diagnostics.iterations;
                            record.fit_converged = model.diagnostics.converged;
                            record.fit_residual = model.diagnostics.residual;
                        } else {
                            RegressNowModel model = fit_regress_now(train, t, fit_cfg);
                            Vector values = model.predict(validation_prefix);
                            ev = evaluate_on_validation(values, model.v0, bench);
                            record.fit_iterations = model.diagnostics.iterations;
                            record.fit_converged = model.diagnostics.converged;
                            record.fit_residual = model.diagnostics.residual;
                        }
                        record.v0_hat = ev.v0_hat;
                        record.es_hat = ev.es_hat;
                        record.l1_num = ev.l1_num;
                        record.has_l1 = ev.has_l1;
                    }
                } catch (const std::exception& e) {
                    record.failed = true;
                    record.error = e.what();
                }
                record.seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                        .count();
                cell.result.runs[rep] = std::move(record);
              }
            });

            int ok = 0;
            double seconds = 0.0;
            bool all_l1 = true;
            for (const auto& run : cell.result.runs) {
                if (run.failed) {
                    ++cell.failures;
                    continue;
                }
                ++ok;
                seconds += run.seconds;
                all_l1 = all_l1 && run.has_l1;
            }
            if (ok > 0) {
                cell.mape_pv = mape_pv(cell.result, bench);
                cell.mape_es = mape_es(cell.result, bench);
                cell.mean_seconds = seconds / ok;
                cell.has_l1 = all_l1;
                if (all_l1) cell.mean_rel_l1 = mean_rel_l1(cell.result, bench);
            }
            if (cache) cache->store(cell);
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

} // namespace repmart
