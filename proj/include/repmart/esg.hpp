#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace repmart {

// One band of Lee-Carter parameters, covering ages [age_lo, age_hi].
struct LeeCarterRow {
    int age_lo = 0;
    int age_hi = 0;
    double a = 0.0;
    double b = 0.0;
};

struct LeeCarterTable {
    std::vector<LeeCarterRow> rows;

    const LeeCarterRow& lookup(int age) const; // throws ConfigError if uncovered
    bool covers(int age) const;
    int max_age() const;
};

// Lee-Carter parameters for ages 0..108.
const LeeCarterTable& default_lee_carter_table();

// Economic scenario generator configuration. The Hull-White calibration
// values and the index correlations are implementation defaults, not
// published values.
struct EsgConfig {
    double kappa = 0.1;    // mean-reversion rate (1/year)
    double sigma_r = 0.01; // short-rate volatility (1/year^0.5)
    double b0 = 0.02;      // constant mean-reversion level
    double r0 = 0.02;      // initial short rate

    double sigma_eq = 0.2;
    double sigma_re = 0.1;
    double rho_eq_rate = 0.3; // corr of equity driver with the first rate driver
    double rho_re_rate = 0.3; // corr of real-estate driver with the first rate driver
    // Initial index level: EQ_t = index_init * C_t * S_3. The nominal 100
    // strike is at the money at time zero under the default.
    double index_init = 100.0;

    double lc_k0 = -11.41;
    double lc_drift = -0.365;
    double lc_eps_sigma = 0.621;
    LeeCarterTable lc_table = default_lee_carter_table();

    int horizon = 5; // T, annual steps
    int dim = 3;     // driver dimension d, 3 or 5

    void validate() const; // throws ConfigError
};

// Exact one-step Gaussian discretization of the Hull-White (r, Y) pair
// under constant mean-reversion level b0. std_* are standard deviations.
struct HullWhiteStep {
    double decay;   // e^{-kappa}
    double mean_r;  // kappa * g(t) = b0 (1 - e^{-kappa})
    double phi;     // (1 - e^{-kappa}) / kappa
    double mean_y;  // kappa * h(t) = b0 (1 - phi)
    double std_r;
    double std_y;
    double rho_ry;
};

HullWhiteStep hull_white_step(const EsgConfig& cfg);

// Dense (path, t, component) tensor, path-major then t-major.
struct PathTensor {
    int n_paths = 0;
    int horizon = 0;
    int dim = 0;
    std::vector<double> data;

    PathTensor() = default;
    PathTensor(int n, int t, int d)
        : n_paths(n), horizon(t), dim(d),
          data(static_cast<std::size_t>(n) * t * d) {}

    double& at(int p, int t, int j) {
        return data[(static_cast<std::size_t>(p) * horizon + t) * dim + j];
    }
    double at(int p, int t, int j) const {
        return data[(static_cast<std::size_t>(p) * horizon + t) * dim + j];
    }
    // Full path as a flat vector of length horizon*dim, t-major.
    std::span<const double> path(int p) const {
        return {data.data() + static_cast<std::size_t>(p) * horizon * dim,
                static_cast<std::size_t>(horizon) * dim};
    }
};

// i.i.d. N(0,1) stochastic driver sample.
struct DriverPaths {
    PathTensor x;
    std::uint64_t seed = 0;

    int n_paths() const { return x.n_paths; }
    int horizon() const { return x.horizon; }
    int dim() const { return x.dim; }
};

// Per-path grid over t = 0..T, path-major.
struct PathGrid {
    int n_paths = 0;
    int horizon = 0; // T; grid has horizon+1 points per path
    std::vector<double> data;

    PathGrid() = default;
    PathGrid(int n, int t)
        : n_paths(n), horizon(t),
          data(static_cast<std::size_t>(n) * (t + 1)) {}

    double& at(int p, int t) { return data[static_cast<std::size_t>(p) * (horizon + 1) + t]; }
    double at(int p, int t) const { return data[static_cast<std::size_t>(p) * (horizon + 1) + t]; }
};

struct RatePaths {
    PathGrid short_rate; // r_t
    PathGrid log_cash;   // Y_t, Y_0 = 0
};

struct IndexPaths {
    PathGrid eq_excess; // S_3
    PathGrid re_excess; // S_4 (d=5 only; empty otherwise)
};

struct MortalityPaths {
    PathGrid lc_k; // Lee-Carter period index k(t)
};

// Derived market and demographic quantities per path. Bond prices and death
// rates are evaluated on demand from the stored state.
struct EconomicPaths {
    EsgConfig cfg;
    int n_paths = 0;
    int horizon = 0;

    PathGrid short_rate;
    PathGrid log_cash;
    PathGrid cash;      // C_t = exp(Y_t), C_0 = 1
    PathGrid eq_index;  // EQ_t = C_t * S_3
    PathGrid re_index;  // RE_t (d=5 only)
    PathGrid lc_k;      // mortality period index (d=5 only)

    // Zero-coupon price B(t, maturity) on path p; maturity in years >= t.
    double bond(int p, int t, int maturity) const;

    // Death rate q_age(t) on path p for period (t-1, t], t >= 1.
    double death_rate(int p, int t, int age) const;
};

// Operations ---------------------------------------------------------------

DriverPaths sample_driver(int n_paths, int horizon, int dim, std::uint64_t seed);

// X' = correlated driver: X'_1 = X_1, X'_2 from the Hull-White (r, Y)
// correlation, X'_3/X'_4 correlated with X_1, X'_5 untouched (mortality).
PathTensor correlate_driver(const DriverPaths& x, const EsgConfig& cfg);

RatePaths simulate_rates(const DriverPaths& x, const EsgConfig& cfg);

// A(tau) and C(tau) of B = exp(-A r + C) under constant b0; tau = T' - t.
double bond_a(double tau, const EsgConfig& cfg);
double bond_c(double tau, const EsgConfig& cfg);
double bond_price(double r_t, int t, int maturity, const EsgConfig& cfg);

IndexPaths simulate_indices(const PathTensor& x_corr, const EsgConfig& cfg);

MortalityPaths simulate_mortality(const DriverPaths& x, const EsgConfig& cfg);

// Death rate from a Lee-Carter state: q = 1 - exp(-exp(a + b k)).
double death_rate_from_k(double k, int age, const EsgConfig& cfg);

// Full pipeline: correlate, rates, indices, mortality (d=5).
EconomicPaths simulate_economy(const DriverPaths& x, const EsgConfig& cfg);

} // namespace repmart
