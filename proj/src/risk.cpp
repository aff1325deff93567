#include "repmart/risk.hpp"

#include "repmart/parallel.hpp"
#include "repmart/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace repmart {

namespace {

constexpr std::uint64_t kOuterStream = 0x4f555445;
constexpr std::uint64_t kInnerStream = 0x494e4e45;

} // namespace

ValueDistribution eval_value_process(const ReplicatingMartingale& model, const Matrix& x_prefix,
                                     int t) {
    if (model.beta.size() != model.spec.feature_count())
        throw std::invalid_argument("eval_value_process: model not fitted");
    if (t < 0 || t > model.spec.horizon())
        throw std::invalid_argument("eval_value_process: horizon beyond model horizon");
    const int dt = model.spec.driver_dim * t;
    if (static_cast<int>(x_prefix.cols()) != dt)
        throw std::invalid_argument("eval_value_process: prefix has wrong dimension");

    ValueDistribution out;
    out.horizon = t;
    out.method = model.spec.family_name();
    CondExpPlan plan0 = CondExpPlan::make(model.spec, 0);
    out.v0 = plan0.eval({}).dot(model.beta);
    if (t == 0) {
        out.values = Vector::Constant(x_prefix.rows(), out.v0);
        return out;
    }
    CondExpPlan plan = CondExpPlan::make(model.spec, t);
    // Chunked evaluation keeps the n x m feature block bounded.
    const Eigen::Index n = x_prefix.rows();
    const Eigen::Index chunk = std::max<Eigen::Index>(1, (1 << 22) / std::max(1, model.spec.feature_count()));
    out.values = Vector(n);
    for (Eigen::Index lo = 0; lo < n; lo += chunk) {
        const Eigen::Index len = std::min(chunk, n - lo);
        out.values.segment(lo, len) = plan.eval_batch(x_prefix.middleRows(lo, len)) * model.beta;
    }
    return out;
}

ValueDistribution nested_mc(const Portfolio& portfolio, const EsgConfig& esg,
                            const NestedMcConfig& cfg) {
    if (cfg.n_outer < 1 || cfg.n_inner < 1)
        throw std::invalid_argument("nested_mc: need n_outer >= 1 and n_inner >= 1");
    const int T = portfolio.maturity();
    if (cfg.horizon < 0 || cfg.horizon > T)
        throw std::invalid_argument("nested_mc: risk horizon beyond portfolio maturity");
    EsgConfig sim_cfg = esg;
    sim_cfg.horizon = T;
    sim_cfg.validate();
    const int d = sim_cfg.dim;
    const int t = cfg.horizon;

    ValueDistribution out;
    out.horizon = t;
    out.method = "nested_mc";
    out.values = Vector(cfg.n_outer);

    parallel_for(static_cast<std::size_t>(cfg.n_outer), [&](std::size_t lo, std::size_t hi) {
        DriverPaths block;
        block.x = PathTensor(cfg.n_inner, T, d);
        block.seed = cfg.seed;
        for (std::size_t o = lo; o < hi; ++o) {
            Rng outer_rng = Rng::substream(cfg.seed, o, kOuterStream);
            std::vector<double> prefix(static_cast<std::size_t>(t) * d);
            for (auto& v : prefix) v = outer_rng.next_normal();
            for (int j = 0; j < cfg.n_inner; ++j) {
                Rng inner_rng =
                    Rng::substream(cfg.seed, o * static_cast<std::size_t>(cfg.n_inner) + j,
                                   kInnerStream);
                double* row = block.x.data.data() +
                              static_cast<std::size_t>(j) * T * d;
                std::copy(prefix.begin(), prefix.end(), row);
                for (std::size_t i = prefix.size(); i < static_cast<std::size_t>(T) * d; ++i)
                    row[i] = inner_rng.next_normal();
            }
            EconomicPaths econ = simulate_economy(block, sim_cfg);
            CashflowSample cf = portfolio.evaluate(econ);
            double acc = 0.0;
            for (double v : cf.terminal) acc += v;
            out.values[static_cast<Eigen::Index>(o)] = acc / cfg.n_inner;
        }
    });
    out.v0 = out.values.mean();
    return out;
}

double value_at_risk(const Vector& losses, double alpha) {
    if (losses.size() < 1) throw std::invalid_argument("value_at_risk: empty sample");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("value_at_risk: alpha must lie in (0,1)");
    const auto n = losses.size();
    std::vector<double> sorted(losses.data(), losses.data() + n);
    std::sort(sorted.begin(), sorted.end());
    auto k = static_cast<Eigen::Index>(std::ceil(alpha * static_cast<double>(n) - 1e-9));
    k = std::clamp<Eigen::Index>(k, 1, n);
    return sorted[k - 1];
}

double expected_shortfall(const Vector& losses, double alpha) {
    if (losses.size() < 1) throw std::invalid_argument("expected_shortfall: empty sample");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("expected_shortfall: alpha must lie in (0,1)");
    const auto n = losses.size();
    auto k = static_cast<Eigen::Index>(std::ceil((1.0 - alpha) * static_cast<double>(n) - 1e-9));
    k = std::clamp<Eigen::Index>(k, 1, n);
    std::vector<double> sorted(losses.data(), losses.data() + n);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) acc += sorted[i];
    return acc / static_cast<double>(k);
}

Vector delta_v_losses(const ValueDistribution& dist, double v_prev) {
    return (v_prev - dist.values.array()).matrix();
}

Vector delta_v_losses(const ValueDistribution& dist, const ValueDistribution& prev) {
    if (dist.values.size() != prev.values.size())
        throw std::invalid_argument("delta_v_losses: misaligned path counts");
    return -(dist.values - prev.values);
}

SplitChoice split_search(long total_budget, const std::vector<int>& inner_candidates,
                         int repetitions, double bench_es,
                         const std::function<double(int, int, int)>& estimator) {
    if (inner_candidates.empty()) throw std::invalid_argument("split_search: empty candidate list");
    if (repetitions < 1) throw std::invalid_argument("split_search: repetitions must be >= 1");
    if (bench_es == 0.0) throw std::invalid_argument("split_search: zero benchmark ES");

    std::vector<int> inner = inner_candidates;
    std::sort(inner.begin(), inner.end());

    SplitChoice out;
    double best = std::numeric_limits<double>::infinity();
    for (int n_inner : inner) {
        if (n_inner < 1) throw std::invalid_argument("split_search: n_inner must be >= 1");
        const int n_outer = static_cast<int>(total_budget / n_inner);
        if (n_outer < 1) continue;
        double err = 0.0;
        for (int rep = 0; rep < repetitions; ++rep)
            err += std::abs(estimator(n_outer, n_inner, rep) - bench_es) / std::abs(bench_es);
        const double mape = err / repetitions;
        out.candidates.push_back(SplitCandidate{n_inner, n_outer, mape});
        // Strict improvement wins; ties keep the earlier (smaller n_inner,
        // therefore larger n_outer) candidate.
        if (mape < best) {
            best = mape;
            out.n_inner = n_inner;
            out.n_outer = n_outer;
        }
    }
    if (out.candidates.empty())
        throw std::invalid_argument("split_search: no candidate fits within the budget");
    return out;
}

SplitChoice split_search(const Portfolio& portfolio, const EsgConfig& esg, long total_budget,
                         const std::vector<int>& inner_candidates, int repetitions,
                         double bench_es, int horizon, double alpha, std::uint64_t seed) {
    auto estimator = [&](int n_outer, int n_inner, int rep) {
        NestedMcConfig cfg;
        cfg.n_outer = n_outer;
        cfg.n_inner = n_inner;
        cfg.horizon = horizon;
        cfg.seed = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(n_inner)),
                               static_cast<std::uint64_t>(rep));
        ValueDistribution dist = nested_mc(portfolio, esg, cfg);
        return expected_shortfall(delta_v_losses(dist, dist.v0), alpha);
    };
    return split_search(total_budget, inner_candidates, repetitions, bench_es, estimator);
}

} // namespace repmart
