#pragma once

#include "repmart/esg.hpp"

#include <array>
#include <string>
#include <variant>
#include <vector>

namespace repmart {

// Discounted cash flows zeta_t (t = 1..T) and their path totals
// f(x) = sum_t zeta_t.
struct CashflowSample {
    int n_paths = 0;
    int horizon = 0;
    std::vector<double> zeta;     // n_paths x horizon, path-major
    std::vector<double> terminal; // row sums, exactly

    double zeta_at(int p, int t) const { // t in 1..horizon
        return zeta[static_cast<std::size_t>(p) * horizon + (t - 1)];
    }
};

// Short European call on the equity index; single discounted cash flow at T.
struct CallSpec {
    double strike = 100.0;
    int maturity = 5;
};

// Variable annuity with return-premium-on-death guarantee.
struct AnnuitySpec {
    int maturity = 5;
    double premium = 100.0;                              // P_t, paid at t = 0..T-1
    std::array<double, 4> mix = {1.0 / 3.0, 1.0 / 3.0,   // bonds (10y, 20y)
                                 1.0 / 5.0, 2.0 / 15.0}; // equity, real estate
    int bond_tenor_1 = 10;
    int bond_tenor_2 = 20;
    int age_lo = 31; // cohort x in (30, 70) read as integer ages 31..69
    int age_hi = 69;
    double cohort_size = 1000.0; // L_0^x per age
};

CashflowSample call_terminal_value(const EconomicPaths& paths, const CallSpec& spec);
CashflowSample annuity_cashflows(const EconomicPaths& paths, const AnnuitySpec& spec);

// Portfolio handle for generic pipelines (nested MC, experiments).
struct Portfolio {
    std::variant<CallSpec, AnnuitySpec> spec;

    int maturity() const;
    int required_dim() const; // driver dimension the portfolio needs
    std::string name() const;
    CashflowSample evaluate(const EconomicPaths& paths) const;
};

} // namespace repmart
