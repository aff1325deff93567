#include "repmart/features.hpp"

#include "repmart/errors.hpp"
#include "repmart/parallel.hpp"
#include "repmart/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>
#include <stdexcept>

namespace repmart {

std::int64_t basis_size(int q, int delta) {
    if (q < 1 || delta < 0) throw std::invalid_argument("basis_size: need q >= 1, delta >= 0");
    // binom(q + delta, delta), the smaller upper index first.
    unsigned __int128 acc = 1;
    for (int i = 1; i <= delta; ++i) {
        acc = acc * static_cast<unsigned>(q + i) / static_cast<unsigned>(i);
        if (acc > static_cast<unsigned __int128>(std::numeric_limits<std::int64_t>::max()))
            throw std::overflow_error("basis_size: dimension exceeds 2^63");
    }
    return static_cast<std::int64_t>(acc);
}

std::int64_t stiefel_dim(int n, int p) {
    if (p < 1 || p > n) throw std::invalid_argument("stiefel_dim: need 1 <= p <= n");
    return static_cast<std::int64_t>(n) * p - static_cast<std::int64_t>(p) * (p + 1) / 2;
}

// Hermite utilities ----------------------------------------------------------

double hermite_value(int k, double x) {
    double prev = 1.0;
    if (k == 0) return prev;
    double cur = x;
    for (int n = 1; n < k; ++n) {
        double next = x * cur - n * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

void hermite_values(int delta, double x, double* out) {
    out[0] = 1.0;
    if (delta == 0) return;
    out[1] = x;
    for (int n = 1; n < delta; ++n) out[n + 1] = x * out[n] - n * out[n - 1];
}

const std::vector<double>& hermite_monomial_coeffs(int k) {
    static std::vector<std::vector<double>> cache = {{1.0}, {0.0, 1.0}};
    static std::mutex mutex;
    std::lock_guard<std::mutex> lock(mutex);
    while (static_cast<int>(cache.size()) <= k) {
        const int n = static_cast<int>(cache.size()) - 1;
        std::vector<double> next(n + 2, 0.0);
        for (int j = 0; j <= n; ++j) next[j + 1] += cache[n][j];      // x He_n
        for (int j = 0; j + 1 <= n; ++j) next[j] -= n * cache[n - 1][j]; // - n He_{n-1}
        cache.push_back(std::move(next));
    }
    return cache[k];
}

// Multi-index basis ----------------------------------------------------------

namespace {

void enumerate_indices(int dims, int budget, std::vector<int>& scratch,
                       std::vector<std::vector<int>>& out) {
    const int pos = static_cast<int>(scratch.size());
    if (pos == dims - 1) {
        scratch.push_back(budget);
        out.push_back(scratch);
        scratch.pop_back();
        return;
    }
    for (int v = 0; v <= budget; ++v) {
        scratch.push_back(v);
        enumerate_indices(dims, budget - v, scratch, out);
        scratch.pop_back();
    }
}

// (coordinate, degree) pairs of the nonzero entries of each index.
struct CompactIndex {
    std::vector<std::pair<int, int>> nz;
};

std::vector<CompactIndex> compact(const MultiIndexBasis& basis) {
    std::vector<CompactIndex> out(basis.indices.size());
    for (std::size_t i = 0; i < basis.indices.size(); ++i) {
        for (int c = 0; c < basis.dims; ++c) {
            if (basis.indices[i][c] > 0) out[i].nz.emplace_back(c, basis.indices[i][c]);
        }
    }
    return out;
}

// Hermite products on the rows of y (n x q); returns n x m.
Matrix hermite_design(const Matrix& y, const MultiIndexBasis& basis) {
    const auto nz = compact(basis);
    const int n = static_cast<int>(y.rows());
    const int q = basis.dims;
    const int m = basis.size();
    Matrix out(n, m);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
        std::vector<double> table(static_cast<std::size_t>(q) * (basis.degree + 1));
        for (std::size_t r = lo; r < hi; ++r) {
            for (int c = 0; c < q; ++c)
                hermite_values(basis.degree, y(r, c), table.data() + c * (basis.degree + 1));
            for (int i = 0; i < m; ++i) {
                double v = 1.0;
                for (auto [c, k] : nz[i].nz) v *= table[c * (basis.degree + 1) + k];
                out(static_cast<Eigen::Index>(r), i) = v;
            }
        }
    });
    return out;
}

Vector hermite_features_row(std::span<const double> y, const MultiIndexBasis& basis) {
    const int q = basis.dims;
    std::vector<double> table(static_cast<std::size_t>(q) * (basis.degree + 1));
    for (int c = 0; c < q; ++c)
        hermite_values(basis.degree, y[c], table.data() + c * (basis.degree + 1));
    Vector out(basis.size());
    for (int i = 0; i < basis.size(); ++i) {
        double v = 1.0;
        const auto& alpha = basis.indices[i];
        for (int c = 0; c < q; ++c) {
            if (alpha[c] > 0) v *= table[c * (basis.degree + 1) + alpha[c]];
        }
        out[i] = v;
    }
    return out;
}

} // namespace

Matrix hermite_design_matrix(const Matrix& y, const MultiIndexBasis& basis) {
    if (static_cast<int>(y.cols()) != basis.dims)
        throw std::invalid_argument("hermite_design_matrix: dimension mismatch");
    return hermite_design(y, basis);
}

Matrix hermite_weighted_gradient(const Matrix& y, const MultiIndexBasis& basis,
                                 const Vector& weights) {
    if (static_cast<int>(y.cols()) != basis.dims)
        throw std::invalid_argument("hermite_weighted_gradient: dimension mismatch");
    if (weights.size() != basis.size())
        throw std::invalid_argument("hermite_weighted_gradient: weight count mismatch");
    const auto nz = compact(basis);
    const int n = static_cast<int>(y.rows());
    const int q = basis.dims;
    Matrix out = Matrix::Zero(n, q);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
        std::vector<double> table(static_cast<std::size_t>(q) * (basis.degree + 1));
        for (std::size_t r = lo; r < hi; ++r) {
            for (int c = 0; c < q; ++c)
                hermite_values(basis.degree, y(r, c), table.data() + c * (basis.degree + 1));
            for (int i = 0; i < basis.size(); ++i) {
                const double w = weights[i];
                if (w == 0.0) continue;
                // d/dy_j of the product: He'_k = k He_{k-1}.
                for (std::size_t jj = 0; jj < nz[i].nz.size(); ++jj) {
                    const auto [c_j, k_j] = nz[i].nz[jj];
                    double partial = k_j * table[c_j * (basis.degree + 1) + (k_j - 1)];
                    for (std::size_t ll = 0; ll < nz[i].nz.size(); ++ll) {
                        if (ll == jj) continue;
                        const auto [c_l, k_l] = nz[i].nz[ll];
                        partial *= table[c_l * (basis.degree + 1) + k_l];
                    }
                    out(static_cast<Eigen::Index>(r), c_j) += w * partial;
                }
            }
        }
    });
    return out;
}

MultiIndexBasis MultiIndexBasis::build(int dims, int degree) {
    if (dims < 1 || degree < 0)
        throw std::invalid_argument("MultiIndexBasis: need dims >= 1, degree >= 0");
    MultiIndexBasis basis;
    basis.dims = dims;
    basis.degree = degree;
    std::vector<int> scratch;
    for (int total = 0; total <= degree; ++total)
        enumerate_indices(dims, total, scratch, basis.indices);
    return basis;
}

// Spec constructors ----------------------------------------------------------

FullHermiteSpec FullHermiteSpec::make(int dims, int degree) {
    FullHermiteSpec s;
    s.dims = dims;
    s.degree = degree;
    s.basis = MultiIndexBasis::build(dims, degree);
    return s;
}

PolyLdrSpec PolyLdrSpec::make(const Matrix& a, int degree) {
    const int p = static_cast<int>(a.cols());
    if (p < 1 || a.rows() < p) throw std::invalid_argument("PolyLdrSpec: need 1 <= p <= dT");
    Matrix gram = a.transpose() * a;
    if ((gram - Matrix::Identity(p, p)).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("PolyLdrSpec: A is not orthonormal (A^T A != I)");
    PolyLdrSpec s;
    s.stiefel_a = a;
    s.degree = degree;
    s.basis = MultiIndexBasis::build(p, degree);
    return s;
}

ReluNetSpec ReluNetSpec::make(const Matrix& a, const Vector& b) {
    if (a.cols() != b.size()) throw std::invalid_argument("ReluNetSpec: weight/bias size mismatch");
    if (a.cols() < 1) throw std::invalid_argument("ReluNetSpec: need at least one node");
    return ReluNetSpec{a, b};
}

int FeatureMapSpec::input_dims() const {
    return std::visit(
        [](const auto& s) -> int {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, FullHermiteSpec>)
                return s.dims;
            else
                return s.dims();
        },
        family);
}

int FeatureMapSpec::feature_count() const {
    return std::visit(
        [](const auto& s) -> int {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ReluNetSpec>)
                return s.nodes();
            else
                return s.basis.size();
        },
        family);
}

const char* FeatureMapSpec::family_name() const {
    switch (family.index()) {
        case 0: return "full_hermite";
        case 1: return "poly_ldr";
        default: return "relu_net";
    }
}

// Evaluation -----------------------------------------------------------------

Vector eval_features(std::span<const double> x, const FeatureMapSpec& spec) {
    if (static_cast<int>(x.size()) != spec.input_dims())
        throw std::invalid_argument("eval_features: sample dimension mismatch");
    return std::visit(
        [&](const auto& s) -> Vector {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, FullHermiteSpec>) {
                return hermite_features_row(x, s.basis);
            } else if constexpr (std::is_same_v<T, PolyLdrSpec>) {
                Eigen::Map<const Vector> xv(x.data(), x.size());
                Vector y = s.stiefel_a.transpose() * xv;
                return hermite_features_row({y.data(), static_cast<std::size_t>(y.size())}, s.basis);
            } else {
                Eigen::Map<const Vector> xv(x.data(), x.size());
                Vector z = s.weights.transpose() * xv + s.bias;
                return z.cwiseMax(0.0);
            }
        },
        spec.family);
}

Matrix eval_features_batch(const Matrix& x, const FeatureMapSpec& spec) {
    if (static_cast<int>(x.cols()) != spec.input_dims())
        throw std::invalid_argument("eval_features_batch: sample dimension mismatch");
    return std::visit(
        [&](const auto& s) -> Matrix {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, FullHermiteSpec>) {
                return hermite_design(x, s.basis);
            } else if constexpr (std::is_same_v<T, PolyLdrSpec>) {
                Matrix y = x * s.stiefel_a;
                return hermite_design(y, s.basis);
            } else {
                Matrix z = (x * s.weights).rowwise() + s.bias.transpose();
                return z.cwiseMax(0.0);
            }
        },
        spec.family);
}

Vector eval_poly_map(std::span<const double> x, const Matrix& a, const Vector& b,
                     const MultiIndexBasis& basis) {
    Eigen::Map<const Vector> xv(x.data(), x.size());
    Vector y = a.transpose() * xv + b;
    return hermite_features_row({y.data(), static_cast<std::size_t>(y.size())}, basis);
}

// Conditional expectations ---------------------------------------------------

Vector hermite_conditional_expectation(std::span<const double> x_prefix,
                                       const MultiIndexBasis& basis, int t, int driver_dim) {
    const int dt = t * driver_dim;
    if (static_cast<int>(x_prefix.size()) != dt)
        throw std::invalid_argument("hermite_conditional_expectation: prefix length != d*t");
    if (dt > basis.dims) throw std::invalid_argument("hermite_conditional_expectation: t beyond horizon");

    std::vector<double> table(static_cast<std::size_t>(dt) * (basis.degree + 1));
    for (int c = 0; c < dt; ++c)
        hermite_values(basis.degree, x_prefix[c], table.data() + c * (basis.degree + 1));
    Vector out(basis.size());
    for (int i = 0; i < basis.size(); ++i) {
        const auto& alpha = basis.indices[i];
        bool future_zero = true;
        for (int c = dt; c < basis.dims; ++c) {
            if (alpha[c] != 0) {
                future_zero = false;
                break;
            }
        }
        if (!future_zero) {
            out[i] = 0.0;
            continue;
        }
        double v = 1.0;
        for (int c = 0; c < dt; ++c) {
            if (alpha[c] > 0) v *= table[c * (basis.degree + 1) + alpha[c]];
        }
        out[i] = v;
    }
    return out;
}

std::vector<KanTerm> kan_monomial_decomposition(const std::vector<int>& alpha) {
    const int p = static_cast<int>(alpha.size());
    int total = 0;
    for (int a : alpha) {
        if (a < 0) throw std::invalid_argument("kan_monomial_decomposition: negative exponent");
        total += a;
    }
    if (total < 1)
        throw std::invalid_argument("kan_monomial_decomposition: alpha = 0 has no decomposition");

    double factorial = 1.0;
    for (int i = 2; i <= total; ++i) factorial *= i;

    std::vector<KanTerm> terms;
    std::vector<int> nu(p, 0);
    while (true) {
        // h = alpha/2 - nu; keep one representative of each +/-h pair.
        Vector h(p);
        bool zero = true;
        int lead_sign = 0;
        for (int j = 0; j < p; ++j) {
            h[j] = 0.5 * alpha[j] - nu[j];
            if (lead_sign == 0 && h[j] != 0.0) lead_sign = h[j] > 0.0 ? 1 : -1;
            if (h[j] != 0.0) zero = false;
        }
        if (!zero && lead_sign > 0) {
            double coeff = 2.0;
            int nu_total = 0;
            for (int j = 0; j < p; ++j) {
                nu_total += nu[j];
                // binom(alpha_j, nu_j)
                double binom = 1.0;
                for (int i = 1; i <= nu[j]; ++i)
                    binom = binom * (alpha[j] - i + 1) / i;
                coeff *= binom;
            }
            if (nu_total % 2 != 0) coeff = -coeff;
            terms.push_back(KanTerm{coeff / factorial, std::move(h), total});
        }
        int pos = p - 1;
        while (pos >= 0 && nu[pos] == alpha[pos]) nu[pos--] = 0;
        if (pos < 0) break;
        ++nu[pos];
    }
    return terms;
}

double normal_moment(int k, double mu, double sigma) {
    if (k < 0) throw std::invalid_argument("normal_moment: negative order");
    // E[(mu + sigma Z)^k] = sum over even j of binom(k,j) (j-1)!! mu^{k-j} sigma^j.
    double acc = 0.0;
    for (int j = 0; j <= k; j += 2) {
        double binom = 1.0;
        for (int i = 1; i <= j; ++i) binom = binom * (k - i + 1) / i;
        double dfact = 1.0;
        for (int i = j - 1; i > 1; i -= 2) dfact *= i;
        acc += binom * dfact * std::pow(mu, k - j) * std::pow(sigma, j);
    }
    return acc;
}

double expected_positive_part(double mu, double sigma) {
    if (sigma == 0.0) return std::max(mu, 0.0);
    const double z = mu / sigma;
    return mu * normal_cdf(z) + sigma * normal_pdf(z);
}

Vector poly_ldr_conditional_expectation(std::span<const double> x_prefix,
                                        const PolyLdrSpec& spec, int t, int driver_dim) {
    FeatureMapSpec wrapped;
    wrapped.driver_dim = driver_dim;
    wrapped.family = spec;
    return CondExpPlan::make(wrapped, t).eval(x_prefix);
}

Vector relu_conditional_expectation(std::span<const double> x_prefix, const ReluNetSpec& spec,
                                    int t, int driver_dim) {
    FeatureMapSpec wrapped;
    wrapped.driver_dim = driver_dim;
    wrapped.family = spec;
    return CondExpPlan::make(wrapped, t).eval(x_prefix);
}

// CondExpPlan ----------------------------------------------------------------

CondExpPlan CondExpPlan::make(const FeatureMapSpec& spec, int t) {
    const int d = spec.driver_dim;
    const int dims = spec.input_dims();
    if (dims % d != 0) throw std::invalid_argument("CondExpPlan: dims not a multiple of driver_dim");
    const int horizon = dims / d;
    if (t < 0 || t > horizon) throw std::invalid_argument("CondExpPlan: horizon t out of range");
    const int dt = d * t;

    CondExpPlan plan;
    plan.spec_ = &spec;
    plan.t_ = t;
    plan.prefix_dims_ = dt;

    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, FullHermiteSpec>) {
                HermitePlan hp;
                hp.spec = &s;
                for (int i = 0; i < s.basis.size(); ++i) {
                    bool future_zero = true;
                    for (int c = dt; c < s.dims && future_zero; ++c)
                        future_zero = s.basis.indices[i][c] == 0;
                    if (future_zero) hp.alive.push_back(i);
                }
                plan.plan_ = std::move(hp);
            } else if constexpr (std::is_same_v<T, PolyLdrSpec>) {
                const int p = s.reduced_dim();
                const Matrix a_future = s.stiefel_a.bottomRows(dims - dt);
                LdrPlan lp;
                lp.spec = &s;
                lp.constant.assign(s.basis.size(), 0.0);
                lp.terms.resize(s.basis.size());
                std::vector<int> gamma(p, 0);
                for (int i = 0; i < s.basis.size(); ++i) {
                    const auto& alpha = s.basis.indices[i];
                    // Expand the Hermite product into monomials y^gamma.
                    std::vector<std::pair<std::vector<int>, double>> monos = {{std::vector<int>(p, 0), 1.0}};
                    for (int j = 0; j < p; ++j) {
                        if (alpha[j] == 0) continue;
                        const auto& coeffs = hermite_monomial_coeffs(alpha[j]);
                        std::vector<std::pair<std::vector<int>, double>> next;
                        for (const auto& [g, c] : monos) {
                            for (int deg = alpha[j] % 2; deg <= alpha[j]; deg += 2) {
                                if (coeffs[deg] == 0.0) continue;
                                auto g2 = g;
                                g2[j] = deg;
                                next.emplace_back(std::move(g2), c * coeffs[deg]);
                            }
                        }
                        monos = std::move(next);
                    }
                    for (const auto& [g, c] : monos) {
                        int total = 0;
                        for (int v : g) total += v;
                        if (total == 0) {
                            lp.constant[i] += c;
                            continue;
                        }
                        for (const auto& kan : kan_monomial_decomposition(g)) {
                            LdrMomentTerm term;
                            term.coeff = c * kan.coeff;
                            term.h_proj = kan.direction;
                            term.sigma = (a_future * kan.direction).norm();
                            term.power = kan.power;
                            lp.terms[i].push_back(std::move(term));
                        }
                    }
                }
                plan.plan_ = std::move(lp);
            } else {
                ReluPlan rp;
                rp.spec = &s;
                rp.a_prefix = s.weights.topRows(dt);
                rp.sigma = Vector(s.nodes());
                for (int i = 0; i < s.nodes(); ++i)
                    rp.sigma[i] = s.weights.col(i).tail(dims - dt).norm();
                plan.plan_ = std::move(rp);
            }
        },
        spec.family);
    return plan;
}

Vector CondExpPlan::eval(std::span<const double> x_prefix) const {
    if (static_cast<int>(x_prefix.size()) != prefix_dims_)
        throw std::invalid_argument("CondExpPlan::eval: prefix length != d*t");
    const int m = spec_->feature_count();
    Vector out(m);

    if (const auto* hp = std::get_if<HermitePlan>(&plan_)) {
        out.setZero();
        const auto& basis = hp->spec->basis;
        std::vector<double> table(static_cast<std::size_t>(prefix_dims_) * (basis.degree + 1));
        for (int c = 0; c < prefix_dims_; ++c)
            hermite_values(basis.degree, x_prefix[c], table.data() + c * (basis.degree + 1));
        for (int i : hp->alive) {
            double v = 1.0;
            const auto& alpha = basis.indices[i];
            for (int c = 0; c < prefix_dims_; ++c)
                if (alpha[c] > 0) v *= table[c * (basis.degree + 1) + alpha[c]];
            out[i] = v;
        }
        return out;
    }
    if (const auto* lp = std::get_if<LdrPlan>(&plan_)) {
        Eigen::Map<const Vector> xv(x_prefix.data(), x_prefix.size());
        const int p = lp->spec->reduced_dim();
        Vector mu_y = prefix_dims_ > 0
                          ? Vector(lp->spec->stiefel_a.topRows(prefix_dims_).transpose() * xv)
                          : Vector(Vector::Zero(p));
        for (int i = 0; i < m; ++i) {
            double acc = lp->constant[i];
            for (const auto& term : lp->terms[i])
                acc += term.coeff * normal_moment(term.power, term.h_proj.dot(mu_y), term.sigma);
            out[i] = acc;
        }
        return out;
    }
    const auto& rp = std::get<ReluPlan>(plan_);
    Eigen::Map<const Vector> xv(x_prefix.data(), x_prefix.size());
    Vector mu = rp.spec->bias;
    if (prefix_dims_ > 0) mu += rp.a_prefix.transpose() * xv;
    for (int i = 0; i < m; ++i) out[i] = expected_positive_part(mu[i], rp.sigma[i]);
    return out;
}

Matrix CondExpPlan::eval_batch(const Matrix& x_prefix) const {
    if (static_cast<int>(x_prefix.cols()) != prefix_dims_)
        throw std::invalid_argument("CondExpPlan::eval_batch: prefix dims mismatch");
    const int n = static_cast<int>(x_prefix.rows());
    const int m = spec_->feature_count();
    Matrix out(n, m);

    if (std::get_if<HermitePlan>(&plan_)) {
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
            for (std::size_t r = lo; r < hi; ++r) {
                Vector xr = x_prefix.row(static_cast<Eigen::Index>(r)).transpose();
                out.row(static_cast<Eigen::Index>(r)) =
                    eval({xr.data(), static_cast<std::size_t>(xr.size())}).transpose();
            }
        });
        return out;
    }
    if (const auto* lp = std::get_if<LdrPlan>(&plan_)) {
        const int p = lp->spec->reduced_dim();
        Matrix mu_y = prefix_dims_ > 0
                          ? Matrix(x_prefix * lp->spec->stiefel_a.topRows(prefix_dims_))
                          : Matrix(Matrix::Zero(n, p));
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
            for (std::size_t r = lo; r < hi; ++r) {
                for (int i = 0; i < m; ++i) {
                    double acc = lp->constant[i];
                    for (const auto& term : lp->terms[i]) {
                        const double mu = mu_y.row(static_cast<Eigen::Index>(r)).dot(term.h_proj);
                        acc += term.coeff * normal_moment(term.power, mu, term.sigma);
                    }
                    out(static_cast<Eigen::Index>(r), i) = acc;
                }
            }
        });
        return out;
    }
    const auto& rp = std::get<ReluPlan>(plan_);
    Matrix mu = prefix_dims_ > 0
                    ? Matrix((x_prefix * rp.a_prefix).rowwise() + rp.spec->bias.transpose())
                    : Matrix(rp.spec->bias.transpose().replicate(n, 1));
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r)
            for (int i = 0; i < m; ++i)
                out(static_cast<Eigen::Index>(r), i) = expected_positive_part(
                    mu(static_cast<Eigen::Index>(r), i), rp.sigma[i]);
    });
    return out;
}

// Serialization ----------------------------------------------------------

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    j["data"] = flat; // row-major
    return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto flat = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
        throw std::invalid_argument("matrix_from_json: size mismatch");
    Matrix m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[k++];
    return m;
}

} // namespace

std::string feature_map_to_json(const FeatureMapSpec& spec) {
    nlohmann::json j;
    j["family"] = spec.family_name();
    j["driver_dim"] = spec.driver_dim;
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, FullHermiteSpec>) {
                j["dims"] = s.dims;
                j["degree"] = s.degree;
            } else if constexpr (std::is_same_v<T, PolyLdrSpec>) {
                j["degree"] = s.degree;
                j["a"] = matrix_to_json(s.stiefel_a);
            } else {
                j["weights"] = matrix_to_json(s.weights);
                j["bias"] = std::vector<double>(s.bias.data(), s.bias.data() + s.bias.size());
            }
        },
        spec.family);
    return j.dump();
}

FeatureMapSpec feature_map_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    FeatureMapSpec spec;
    spec.driver_dim = j.at("driver_dim").get<int>();
    const std::string family = j.at("family").get<std::string>();
    if (family == "full_hermite") {
        spec.family = FullHermiteSpec::make(j.at("dims").get<int>(), j.at("degree").get<int>());
    } else if (family == "poly_ldr") {
        spec.family = PolyLdrSpec::make(matrix_from_json(j.at("a")), j.at("degree").get<int>());
    } else if (family == "relu_net") {
        Matrix w = matrix_from_json(j.at("weights"));
        const auto bv = j.at("bias").get<std::vector<double>>();
        Vector b = Eigen::Map<const Vector>(bv.data(), static_cast<Eigen::Index>(bv.size()));
        spec.family = ReluNetSpec::make(w, b);
    } else {
        throw std::invalid_argument("feature_map_from_json: unknown family " + family);
    }
    return spec;
}

} // namespace repmart
