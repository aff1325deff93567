// Long-horizon cases: the full polynomial basis is infeasible at T = 40
// (302,621 elements for d = 3), but the reduced families stay tractable.

#include "repmart/metrics.hpp"

#include "repmart/errors.hpp"

#include "repmart/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace repmart;

namespace {

TrainingSet training_from(const DriverPaths& drv, const CashflowSample& cf) {
    const int n = drv.n_paths();
    const int cols = drv.horizon() * drv.dim();
    TrainingSet train;
    train.x = Matrix(n, cols);
    for (int p = 0; p < n; ++p)
        for (int c = 0; c < cols; ++c) train.x(p, c) = drv.x.path(p)[c];
    train.y = Eigen::Map<const Vector>(cf.terminal.data(), n);
    return train;
}

} // namespace

TEST_CASE("40-year call: LDR fit stays tractable where the full basis cannot") {
    EsgConfig cfg;
    cfg.dim = 3;
    cfg.horizon = 40;
    const int n = 1500;
    DriverPaths drv = sample_driver(n, 40, 3, 606);
    EconomicPaths econ = simulate_economy(drv, cfg);
    CashflowSample cf = call_terminal_value(econ, CallSpec{100.0, 40});
    TrainingSet train = training_from(drv, cf);

    FitConfig fit;
    fit.family = FitFamily::poly_ldr;
    fit.driver_dim = 3;
    fit.delta = 3;
    fit.p = 3;
    fit.ldr_start = LdrStart::folding;
    fit.max_iter = 150;
    ReplicatingMartingale model = fit_regress_later(train, fit);
    CHECK(model.spec.feature_count() == 20);
    CHECK(std::isfinite(model.diagnostics.residual));

    // The fitted value process prices within the training sample's own noise
    // of the closed form (the 40-year payoff is heavily skewed, so the sample
    // mean itself carries most of the error at this n) and keeps the
    // martingale identity on fresh horizon-1 states.
    const double v0_true = call_value_closed_form(cfg, CallSpec{100.0, 40}, cfg.r0, 0.0,
                                                  cfg.index_init, 0);
    const double y_noise =
        std::sqrt((train.y.array() - train.y.mean()).square().mean() / n);
    Rng rng(607);
    const int n_eval = 100000;
    Matrix x1(n_eval, 3);
    for (int i = 0; i < n_eval; ++i)
        for (int j = 0; j < 3; ++j) x1(i, j) = rng.next_normal();
    ValueDistribution dist = eval_value_process(model, x1, 1);
    CHECK(std::abs(dist.v0 - v0_true) <= 4.0 * y_noise + 0.01 * std::abs(v0_true));
    const double mean = dist.values.mean();
    const double sd = std::sqrt((dist.values.array() - mean).square().sum() / n_eval);
    CHECK(std::abs(mean - dist.v0) <= 4.0 * sd / std::sqrt(static_cast<double>(n_eval)));
    CHECK(expected_shortfall(delta_v_losses(dist, dist.v0), 0.99) > 0.0);

    // The corresponding full basis is refused by the size guard.
    FitConfig full;
    full.family = FitFamily::full_hermite;
    full.driver_dim = 3;
    full.delta = 3;
    CHECK_THROWS_AS(fit_regress_later(train, full), ConfigError);
}

TEST_CASE("40-year annuity: LDR with p = 10 and the folding start") {
    EsgConfig cfg;
    cfg.dim = 5;
    cfg.horizon = 40;
    AnnuitySpec spec;
    spec.maturity = 40;
    const int n = 1000;
    DriverPaths drv = sample_driver(n, 40, 5, 909);
    EconomicPaths econ = simulate_economy(drv, cfg);
    CashflowSample cf = annuity_cashflows(econ, spec);
    TrainingSet train = training_from(drv, cf);

    FitConfig fit;
    fit.family = FitFamily::poly_ldr;
    fit.driver_dim = 5;
    fit.delta = 3;
    fit.p = 10;
    fit.ldr_start = LdrStart::folding;
    fit.max_iter = 60;
    ReplicatingMartingale model = fit_regress_later(train, fit);
    CHECK(model.spec.feature_count() == 286);
    CHECK(std::isfinite(model.diagnostics.residual));
    // In-sample fit captures most of the cash-flow variation.
    const double y_sd = std::sqrt((train.y.array() - train.y.mean()).square().mean());
    CHECK(model.diagnostics.residual < y_sd);

    Rng rng(910);
    const int n_eval = 20000;
    Matrix x1(n_eval, 5);
    for (int i = 0; i < n_eval; ++i)
        for (int j = 0; j < 5; ++j) x1(i, j) = rng.next_normal();
    ValueDistribution dist = eval_value_process(model, x1, 1);
    const double mean = dist.values.mean();
    const double sd = std::sqrt((dist.values.array() - mean).square().sum() / n_eval);
    CHECK(std::abs(mean - dist.v0) <= 4.0 * sd / std::sqrt(static_cast<double>(n_eval)));
    // Present value is positive (liability) and near the sample mean.
    CHECK(dist.v0 > 0.0);
    CHECK(std::abs(dist.v0 - train.y.mean()) / train.y.mean() < 0.05);
}
