#include "repmart/portfolios.hpp"

#include "repmart/errors.hpp"
#include "repmart/parallel.hpp"

#include <cmath>
#include <stdexcept>
#include <type_traits>

namespace repmart {

CashflowSample call_terminal_value(const EconomicPaths& paths, const CallSpec& spec) {
    if (paths.horizon < spec.maturity)
        throw std::invalid_argument("call_terminal_value: path horizon shorter than maturity");

    const int T = spec.maturity;
    CashflowSample out;
    out.n_paths = paths.n_paths;
    out.horizon = T;
    out.zeta.assign(static_cast<std::size_t>(paths.n_paths) * T, 0.0);
    out.terminal.assign(paths.n_paths, 0.0);
    parallel_for(static_cast<std::size_t>(paths.n_paths), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t pi = lo; pi < hi; ++pi) {
            int p = static_cast<int>(pi);
            const double payoff = std::max(paths.eq_index.at(p, T) - spec.strike, 0.0);
            const double z = -payoff / paths.cash.at(p, T);
            out.zeta[pi * T + (T - 1)] = z;
            out.terminal[pi] = z;
        }
    });
    return out;
}

CashflowSample annuity_cashflows(const EconomicPaths& paths, const AnnuitySpec& spec) {
    if (paths.horizon < spec.maturity)
        throw std::invalid_argument("annuity_cashflows: path horizon shorter than maturity");
    if (paths.cfg.dim != 5)
        throw std::invalid_argument("annuity_cashflows: requires the 5-driver economy");
    const int T = spec.maturity;
    const int n_ages = spec.age_hi - spec.age_lo + 1;
    if (n_ages < 1) throw std::invalid_argument("annuity_cashflows: empty cohort age range");
    // Cohort members aged age_hi at t=0 reach age_hi + T - 1 in the last period.
    if (!paths.cfg.lc_table.covers(spec.age_hi + T - 1))
        throw ConfigError("annuity_cashflows: Lee-Carter table does not cover terminal ages");

    CashflowSample out;
    out.n_paths = paths.n_paths;
    out.horizon = T;
    out.zeta.assign(static_cast<std::size_t>(paths.n_paths) * T, 0.0);
    out.terminal.assign(paths.n_paths, 0.0);

    parallel_for(static_cast<std::size_t>(paths.n_paths), [&](std::size_t lo, std::size_t hi) {
        std::vector<double> alive(n_ages);
        for (std::size_t pi = lo; pi < hi; ++pi) {
            const int p = static_cast<int>(pi);
            alive.assign(n_ages, spec.cohort_size);

            // Unit price of asset i at t, and its price one period before
            // replacement (rolled bonds keep constant time to maturity).
            auto price = [&](int i, int t) {
                switch (i) {
                    case 0: return paths.bond(p, t, t + spec.bond_tenor_1);
                    case 1: return paths.bond(p, t, t + spec.bond_tenor_2);
                    case 2: return paths.eq_index.at(p, t);
                    default: return paths.re_index.at(p, t);
                }
            };
            auto price_pre = [&](int i, int t) {
                switch (i) {
                    case 0: return paths.bond(p, t, t + spec.bond_tenor_1 - 1);
                    case 1: return paths.bond(p, t, t + spec.bond_tenor_2 - 1);
                    default: return price(i, t);
                }
            };

            std::array<double, 4> units = {0.0, 0.0, 0.0, 0.0}; // U_{-1} = 0
            double guarantee = 0.0;                             // G_0 = 0
            double total = 0.0;
            for (int t = 0; t <= T; ++t) {
                const double prem = t < T ? spec.premium : 0.0;
                double assets = prem;
                for (int i = 0; i < 4; ++i) assets += units[i] * price_pre(i, t);
                for (int i = 0; i < 4; ++i)
                    units[i] = (units[i] * price_pre(i, t) + spec.mix[i] * prem) / price(i, t);
                if (t >= 1) {
                    const double payout = std::max(assets, guarantee);
                    double dead = 0.0;
                    if (t < T) {
                        for (int a = 0; a < n_ages; ++a) {
                            const int age = spec.age_lo + a + (t - 1);
                            const double d = alive[a] * paths.death_rate(p, t, age);
                            alive[a] -= d;
                            dead += d;
                        }
                        out.zeta[pi * T + (t - 1)] = dead * payout / paths.cash.at(p, t);
                    } else {
                        double survivors = 0.0;
                        for (int a = 0; a < n_ages; ++a) survivors += alive[a];
                        out.zeta[pi * T + (t - 1)] = survivors * payout / paths.cash.at(p, t);
                    }
                    total += out.zeta[pi * T + (t - 1)];
                }
                guarantee += t < T ? spec.premium : 0.0; // G_{t+1} = G_t + P_t
            }
            out.terminal[pi] = total;
        }
    });
    return out;
}

int Portfolio::maturity() const {
    return std::visit([](const auto& s) { return s.maturity; }, spec);
}

int Portfolio::required_dim() const {
    return std::holds_alternative<AnnuitySpec>(spec) ? 5 : 3;
}

std::string Portfolio::name() const {
    return std::holds_alternative<AnnuitySpec>(spec) ? "variable_annuity" : "european_call";
}

CashflowSample Portfolio::evaluate(const EconomicPaths& paths) const {
    return std::visit(
        [&](const auto& s) {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, CallSpec>)
                return call_terminal_value(paths, s);
            else
                return annuity_cashflows(paths, s);
        },
        spec);
}

} // namespace repmart
