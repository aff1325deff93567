#include "repmart/esg.hpp"

#include "repmart/errors.hpp"
#include "repmart/parallel.hpp"
#include "repmart/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace repmart {

namespace {

constexpr std::uint64_t kDriverStream = 0x44524956;

LeeCarterTable build_default_lc_table() {
    // Lee-Carter a_x, b_x by age band.
    return LeeCarterTable{{
        {0, 0, -3.641090, 0.90640},
        {1, 4, -6.705810, 0.11049},
        {5, 9, -7.510640, 0.09179},
        {10, 14, -7.557170, 0.08358},
        {15, 19, -6.760120, 0.04744},
        {20, 24, -6.443340, 0.05351},
        {25, 29, -6.400620, 0.05966},
        {30, 34, -6.229090, 0.06173},
        {35, 39, -5.913250, 0.05899},
        {40, 44, -5.513230, 0.05279},
        {45, 49, -5.090240, 0.04458},
        {50, 54, -4.656800, 0.03830},
        {55, 59, -4.254970, 0.03382},
        {60, 64, -3.856080, 0.02949},
        {65, 69, -3.473130, 0.02880},
        {70, 74, -3.061170, 0.02908},
        {75, 79, -2.630230, 0.03240},
        {80, 84, -2.204980, 0.03091},
        {85, 89, -1.799600, 0.03091},
        {90, 94, -1.409363, 0.03091},
        {95, 99, -1.036550, 0.03091},
        {100, 104, -0.680350, 0.03091},
        {105, 108, -0.341050, 0.03091},
    }};
}

} // namespace

const LeeCarterRow& LeeCarterTable::lookup(int age) const {
    for (const auto& row : rows) {
        if (age >= row.age_lo && age <= row.age_hi) return row;
    }
    throw ConfigError("Lee-Carter table does not cover age " + std::to_string(age));
}

bool LeeCarterTable::covers(int age) const {
    for (const auto& row : rows) {
        if (age >= row.age_lo && age <= row.age_hi) return true;
    }
    return false;
}

int LeeCarterTable::max_age() const {
    int m = -1;
    for (const auto& row : rows) m = std::max(m, row.age_hi);
    return m;
}

const LeeCarterTable& default_lee_carter_table() {
    static const LeeCarterTable table = build_default_lc_table();
    return table;
}

void EsgConfig::validate() const {
    if (kappa <= 0.0) throw ConfigError("kappa must be positive");
    if (sigma_r <= 0.0) throw ConfigError("sigma_r must be positive");
    if (sigma_eq < 0.0) throw ConfigError("sigma_eq must be nonnegative");
    if (sigma_re < 0.0) throw ConfigError("sigma_re must be nonnegative");
    if (std::abs(rho_eq_rate) > 1.0) throw ConfigError("rho_eq_rate outside [-1,1]");
    if (std::abs(rho_re_rate) > 1.0) throw ConfigError("rho_re_rate outside [-1,1]");
    if (index_init <= 0.0) throw ConfigError("index_init must be positive");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (dim != 3 && dim != 5) throw ConfigError("driver dimension must be 3 or 5");
    if (lc_eps_sigma < 0.0) throw ConfigError("lc_eps_sigma must be nonnegative");
}

HullWhiteStep hull_white_step(const EsgConfig& cfg) {
    const double k = cfg.kappa;
    const double s2 = cfg.sigma_r * cfg.sigma_r;
    const double e1 = std::exp(-k);
    const double e2 = std::exp(-2.0 * k);

    HullWhiteStep hw;
    hw.decay = e1;
    hw.mean_r = cfg.b0 * (1.0 - e1);
    hw.phi = (1.0 - e1) / k;
    hw.mean_y = cfg.b0 * (1.0 - hw.phi);
    const double var_r = s2 * (1.0 - e2) / (2.0 * k);
    const double var_y = s2 / (k * k) * (1.0 + (1.0 - e2) / (2.0 * k) + 2.0 * (e1 - 1.0) / k);
    const double cov_ry = s2 / (2.0 * k) * (1.0 + e2 - 2.0 * e1);
    hw.std_r = std::sqrt(var_r);
    hw.std_y = std::sqrt(var_y);
    hw.rho_ry = cov_ry / (hw.std_r * hw.std_y);
    return hw;
}

DriverPaths sample_driver(int n_paths, int horizon, int dim, std::uint64_t seed) {
    if (n_paths < 1) throw std::invalid_argument("sample_driver: n_paths must be >= 1");
    if (horizon < 1) throw std::invalid_argument("sample_driver: horizon must be >= 1");
    if (dim < 1) throw std::invalid_argument("sample_driver: dim must be >= 1");

    DriverPaths out;
    out.x = PathTensor(n_paths, horizon, dim);
    out.seed = seed;
    const std::size_t per_path = static_cast<std::size_t>(horizon) * dim;
    parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            // Per-path substream: path p draws the same numbers for any n_paths.
            Rng rng = Rng::substream(seed, p, kDriverStream);
            double* row = out.x.data.data() + p * per_path;
            for (std::size_t i = 0; i < per_path; ++i) row[i] = rng.next_normal();
        }
    });
    return out;
}

PathTensor correlate_driver(const DriverPaths& x, const EsgConfig& cfg) {
    cfg.validate();
    if (x.dim() != cfg.dim)
        throw std::invalid_argument("correlate_driver: driver dim does not match config");

    const HullWhiteStep hw = hull_white_step(cfg);
    const double r2 = hw.rho_ry;
    const double c2 = std::sqrt(1.0 - r2 * r2);
    const double r3 = cfg.rho_eq_rate;
    const double c3 = std::sqrt(1.0 - r3 * r3);
    const double r4 = cfg.rho_re_rate;
    const double c4 = std::sqrt(1.0 - r4 * r4);
    const int d = x.dim();
    const int T = x.horizon();

    PathTensor out(x.n_paths(), T, d);
    parallel_for(static_cast<std::size_t>(x.n_paths()), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t pi = lo; pi < hi; ++pi) {
            int p = static_cast<int>(pi);
            for (int t = 0; t < T; ++t) {
                const double z1 = x.x.at(p, t, 0);
                out.at(p, t, 0) = z1;
                out.at(p, t, 1) = r2 * z1 + c2 * x.x.at(p, t, 1);
                out.at(p, t, 2) = r3 * z1 + c3 * x.x.at(p, t, 2);
                if (d == 5) {
                    out.at(p, t, 3) = r4 * z1 + c4 * x.x.at(p, t, 3);
                    out.at(p, t, 4) = x.x.at(p, t, 4);
                }
            }
        }
    });
    return out;
}

RatePaths simulate_rates(const DriverPaths& x, const EsgConfig& cfg) {
    cfg.validate();
    if (x.dim() < 2) throw std::invalid_argument("simulate_rates: needs at least 2 driver components");

    const HullWhiteStep hw = hull_white_step(cfg);
    const double c2 = std::sqrt(1.0 - hw.rho_ry * hw.rho_ry);
    const int T = x.horizon();

    RatePaths out;
    out.short_rate = PathGrid(x.n_paths(), T);
    out.log_cash = PathGrid(x.n_paths(), T);
    parallel_for(static_cast<std::size_t>(x.n_paths()), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t pi = lo; pi < hi; ++pi) {
            int p = static_cast<int>(pi);
            double r = cfg.r0;
            double y = 0.0;
            out.short_rate.at(p, 0) = r;
            out.log_cash.at(p, 0) = y;
            for (int t = 1; t <= T; ++t) {
                const double z1 = x.x.at(p, t - 1, 0);
                const double z2c = hw.rho_ry * z1 + c2 * x.x.at(p, t - 1, 1);
                y += hw.phi * r + hw.mean_y + hw.std_y * z2c;
                r = hw.decay * r + hw.mean_r + hw.std_r * z1;
                out.short_rate.at(p, t) = r;
                out.log_cash.at(p, t) = y;
            }
        }
    });
    return out;
}

double bond_a(double tau, const EsgConfig& cfg) {
    return (1.0 - std::exp(-cfg.kappa * tau)) / cfg.kappa;
}

double bond_c(double tau, const EsgConfig& cfg) {
    const double k = cfg.kappa;
    const double s2 = cfg.sigma_r * cfg.sigma_r;
    const double a = bond_a(tau, cfg);
    // kappa * h(t,T) = b0 (tau - A) under constant b0.
    const double kh = cfg.b0 * (tau - a);
    const double conv = s2 / (2.0 * k * k) *
                        (tau + (1.0 - std::exp(-2.0 * k * tau)) / (2.0 * k) +
                         2.0 * (std::exp(-k * tau) - 1.0) / k);
    return -kh + conv;
}

double bond_price(double r_t, int t, int maturity, const EsgConfig& cfg) {
    if (maturity < t) throw std::invalid_argument("bond_price: maturity before valuation date");
    const double tau = static_cast<double>(maturity - t);
    return std::exp(-bond_a(tau, cfg) * r_t + bond_c(tau, cfg));
}

IndexPaths simulate_indices(const PathTensor& x_corr, const EsgConfig& cfg) {
    cfg.validate();
    if (x_corr.dim != cfg.dim)
        throw std::invalid_argument("simulate_indices: driver dim does not match config");
    const int T = x_corr.horizon;
    const bool has_re = cfg.dim == 5;

    IndexPaths out;
    out.eq_excess = PathGrid(x_corr.n_paths, T);
    if (has_re) out.re_excess = PathGrid(x_corr.n_paths, T);
    parallel_for(static_cast<std::size_t>(x_corr.n_paths), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t pi = lo; pi < hi; ++pi) {
            int p = static_cast<int>(pi);
            double s3 = 1.0, s4 = 1.0;
            out.eq_excess.at(p, 0) = s3;
            if (has_re) out.re_excess.at(p, 0) = s4;
            for (int t = 1; t <= T; ++t) {
                s3 *= std::exp(-0.5 * cfg.sigma_eq * cfg.sigma_eq +
                               cfg.sigma_eq * x_corr.at(p, t - 1, 2));
                out.eq_excess.at(p, t) = s3;
                if (has_re) {
                    s4 *= std::exp(-0.5 * cfg.sigma_re * cfg.sigma_re +
                                   cfg.sigma_re * x_corr.at(p, t - 1, 3));
                    out.re_excess.at(p, t) = s4;
                }
            }
        }
    });
    return out;
}

MortalityPaths simulate_mortality(const DriverPaths& x, const EsgConfig& cfg) {
    cfg.validate();
    if (x.dim() != 5)
        throw std::invalid_argument("simulate_mortality: mortality uses driver component 5 (d=5)");
    const int T = x.horizon();

    MortalityPaths out;
    out.lc_k = PathGrid(x.n_paths(), T);
    parallel_for(static_cast<std::size_t>(x.n_paths()), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t pi = lo; pi < hi; ++pi) {
            int p = static_cast<int>(pi);
            double k = cfg.lc_k0;
            out.lc_k.at(p, 0) = k;
            for (int t = 1; t <= T; ++t) {
                k += cfg.lc_drift + cfg.lc_eps_sigma * x.x.at(p, t - 1, 4);
                out.lc_k.at(p, t) = k;
            }
        }
    });
    return out;
}

double death_rate_from_k(double k, int age, const EsgConfig& cfg) {
    const LeeCarterRow& row = cfg.lc_table.lookup(age);
    const double force = std::exp(row.a + row.b * k);
    // -expm1 keeps precision for small forces; the clamp keeps q strictly
    // below 1 when the force overflows the representable range.
    const double q = -std::expm1(-force);
    return std::min(q, std::nextafter(1.0, 0.0));
}

double EconomicPaths::bond(int p, int t, int maturity) const {
    return bond_price(short_rate.at(p, t), t, maturity, cfg);
}

double EconomicPaths::death_rate(int p, int t, int age) const {
    return death_rate_from_k(lc_k.at(p, t), age, cfg);
}

EconomicPaths simulate_economy(const DriverPaths& x, const EsgConfig& cfg) {
    cfg.validate();

    EconomicPaths out;
    out.cfg = cfg;
    out.n_paths = x.n_paths();
    out.horizon = x.horizon();

    RatePaths rates = simulate_rates(x, cfg);
    PathTensor corr = correlate_driver(x, cfg);
    IndexPaths idx = simulate_indices(corr, cfg);

    out.short_rate = std::move(rates.short_rate);
    out.log_cash = std::move(rates.log_cash);
    out.cash = PathGrid(out.n_paths, out.horizon);
    out.eq_index = PathGrid(out.n_paths, out.horizon);
    if (cfg.dim == 5) out.re_index = PathGrid(out.n_paths, out.horizon);
    for (int p = 0; p < out.n_paths; ++p) {
        for (int t = 0; t <= out.horizon; ++t) {
            const double c = std::exp(out.log_cash.at(p, t));
            out.cash.at(p, t) = c;
            out.eq_index.at(p, t) = cfg.index_init * c * idx.eq_excess.at(p, t);
            if (cfg.dim == 5) out.re_index.at(p, t) = cfg.index_init * c * idx.re_excess.at(p, t);
        }
    }
    if (cfg.dim == 5) out.lc_k = simulate_mortality(x, cfg).lc_k;
    return out;
}

} // namespace repmart
