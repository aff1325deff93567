#include "repmart/fit.hpp"

#include "repmart/errors.hpp"
#include "repmart/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <deque>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace repmart {

namespace {

constexpr std::uint64_t kLdrStartTag = 0x4c445253;
constexpr std::uint64_t kReluInitTag = 0x52454c55;

Matrix polar_orthonormalize(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m.transpose() * m);
    if (eig.eigenvalues().minCoeff() <= 0.0)
        throw NumericalError("polar_orthonormalize: rank-deficient frame");
    Matrix inv_sqrt = eig.eigenvectors() *
                      eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                      eig.eigenvectors().transpose();
    return m * inv_sqrt;
}

// Projection onto the tangent space of the Stiefel manifold at a.
Matrix tangent_project(const Matrix& a, const Matrix& z) {
    Matrix at_z = a.transpose() * z;
    return z - a * (0.5 * (at_z + at_z.transpose()));
}

double frob_dot(const Matrix& u, const Matrix& v) {
    return (u.array() * v.array()).sum();
}

// Strong-Wolfe line search (bracket and zoom). eval(alpha) must return the
// objective value and the directional derivative at alpha, caching whatever
// state the caller needs for the accepted step.
struct LineSearchResult {
    double alpha = 0.0;
    bool ok = false;
};

template <typename Eval>
LineSearchResult wolfe_line_search(const Eval& eval, double phi0, double dphi0, double c1,
                                   double c2, int max_evals) {
    LineSearchResult out;
    if (dphi0 >= 0.0) return out;

    auto zoom = [&](double lo, double phi_lo, double dphi_lo, double hi, double phi_hi,
                    int budget) -> LineSearchResult {
        for (int i = 0; i < budget; ++i) {
            // Quadratic interpolation with a bisection safeguard.
            double alpha = lo - 0.5 * dphi_lo * (hi - lo) * (hi - lo) /
                                    (phi_hi - phi_lo - dphi_lo * (hi - lo));
            const double lo_b = std::min(lo, hi), hi_b = std::max(lo, hi);
            const double width = hi_b - lo_b;
            if (!std::isfinite(alpha) || alpha <= lo_b + 0.1 * width || alpha >= hi_b - 0.1 * width)
                alpha = 0.5 * (lo + hi);
            auto [phi_a, dphi_a] = eval(alpha);
            if (phi_a > phi0 + c1 * alpha * dphi0 || phi_a >= phi_lo) {
                hi = alpha;
                phi_hi = phi_a;
            } else {
                if (std::abs(dphi_a) <= -c2 * dphi0) return {alpha, true};
                if (dphi_a * (hi - lo) >= 0.0) {
                    hi = lo;
                    phi_hi = phi_lo;
                }
                lo = alpha;
                phi_lo = phi_a;
                dphi_lo = dphi_a;
            }
        }
        // Accept the decreasing endpoint if Armijo holds there.
        if (phi_lo < phi0 + c1 * lo * dphi0 && lo > 0.0) return {lo, true};
        return {0.0, false};
    };

    double alpha_prev = 0.0, phi_prev = phi0, dphi_prev = dphi0;
    double alpha = 1.0;
    const double alpha_max = 1e6;
    for (int i = 0; i < max_evals; ++i) {
        auto [phi_a, dphi_a] = eval(alpha);
        if (phi_a > phi0 + c1 * alpha * dphi0 || (i > 0 && phi_a >= phi_prev))
            return zoom(alpha_prev, phi_prev, dphi_prev, alpha, phi_a, max_evals);
        if (std::abs(dphi_a) <= -c2 * dphi0) return {alpha, true};
        if (dphi_a >= 0.0) return zoom(alpha, phi_a, dphi_a, alpha_prev, phi_prev, max_evals);
        alpha_prev = alpha;
        phi_prev = phi_a;
        dphi_prev = dphi_a;
        alpha = std::min(2.0 * alpha, alpha_max);
        if (alpha_prev >= alpha_max) break;
    }
    return out;
}

} // namespace

void TrainingSet::validate() const {
    if (x.rows() < 1) throw std::invalid_argument("TrainingSet: empty sample");
    if (x.rows() != y.size()) throw std::invalid_argument("TrainingSet: x/y row count mismatch");
    if (!x.allFinite() || !y.allFinite())
        throw std::invalid_argument("TrainingSet: non-finite entries");
}

void FitConfig::validate() const {
    if (driver_dim < 1) throw ConfigError("FitConfig: driver_dim must be >= 1");
    if (delta < 0) throw ConfigError("FitConfig: delta must be >= 0");
    if (p < 1) throw ConfigError("FitConfig: p must be >= 1");
    if (relu_nodes < 2) throw ConfigError("FitConfig: relu_nodes must be >= 2");
    if (grad_tol <= 0.0) throw ConfigError("FitConfig: grad_tol must be positive");
    if (max_iter < 1) throw ConfigError("FitConfig: max_iter must be >= 1");
    if (basis_cap < 1) throw ConfigError("FitConfig: basis_cap must be >= 1");
}

OlsResult ols_fit(const Matrix& phi, const Vector& y) {
    const auto n = phi.rows();
    const auto m = phi.cols();
    if (n != y.size()) throw std::invalid_argument("ols_fit: row count mismatch");
    if (n < 1) throw std::invalid_argument("ols_fit: empty sample");

    Matrix gram = (phi.transpose() * phi) / static_cast<double>(n);
    Vector rhs = (phi.transpose() * y) / static_cast<double>(n);

    OlsResult out;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() == Eigen::Success) {
        out.beta = llt.solve(rhs);
    }
    if (llt.info() != Eigen::Success || !out.beta.allFinite()) {
        const double jitter = 1e-10 * gram.trace() / static_cast<double>(m);
        Matrix jittered = gram + jitter * Matrix::Identity(m, m);
        Eigen::LLT<Matrix> retry(jittered);
        if (retry.info() != Eigen::Success)
            throw SingularMatrixError(
                "ols_fit: normal equations singular beyond jitter (scale " +
                    std::to_string(jitter) + ")",
                jitter);
        out.beta = retry.solve(rhs);
        out.jitter_used = true;
        if (!out.beta.allFinite())
            throw SingularMatrixError("ols_fit: non-finite solution after jitter", jitter);
    }
    out.residual = (y - phi * out.beta).norm() / std::sqrt(static_cast<double>(n));
    return out;
}

// Riemannian L-BFGS ----------------------------------------------------------

StiefelResult riemannian_bfgs_stiefel(const StiefelObjective& objective, const Matrix& a0,
                                      const StiefelOptions& opts) {
    const int p = static_cast<int>(a0.cols());
    if ((a0.transpose() * a0 - Matrix::Identity(p, p)).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("riemannian_bfgs_stiefel: start is not orthonormal");

    StiefelResult res;
    Matrix a = polar_orthonormalize(a0);
    Matrix egrad(a.rows(), a.cols());
    double loss = objective(a, &egrad);
    Matrix grad = tangent_project(a, egrad);
    res.loss_trace.push_back(loss);

    struct Pair {
        Matrix s, y;
        double rho;
    };
    std::deque<Pair> memory;

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        if (grad.norm() <= opts.grad_tol * std::max(1.0, std::abs(loss))) {
            res.converged = true;
            break;
        }

        // Two-loop recursion for the search direction.
        Matrix q = grad;
        std::vector<double> alpha_coef(memory.size());
        for (int i = static_cast<int>(memory.size()) - 1; i >= 0; --i) {
            alpha_coef[i] = memory[i].rho * frob_dot(memory[i].s, q);
            q -= alpha_coef[i] * memory[i].y;
        }
        if (!memory.empty()) {
            const auto& last = memory.back();
            q *= frob_dot(last.s, last.y) / frob_dot(last.y, last.y);
        }
        for (std::size_t i = 0; i < memory.size(); ++i) {
            const double beta = memory[i].rho * frob_dot(memory[i].y, q);
            q += (alpha_coef[i] - beta) * memory[i].s;
        }
        Matrix dir = -q;
        double dphi0 = frob_dot(grad, dir);
        if (dphi0 >= 0.0) { // fall back to steepest descent
            dir = -grad;
            dphi0 = -grad.squaredNorm();
            memory.clear();
        }

        struct Trial {
            Matrix a, egrad, grad;
            double loss = 0.0;
        };
        Trial accepted;
        double accepted_alpha = 0.0;
        auto eval = [&](double alpha_try) {
            Trial t;
            t.a = polar_orthonormalize(a + alpha_try * dir);
            t.egrad.resize(a.rows(), a.cols());
            t.loss = objective(t.a, &t.egrad);
            t.grad = tangent_project(t.a, t.egrad);
            const double dphi = frob_dot(t.grad, tangent_project(t.a, dir));
            if (t.loss <= accepted.loss || accepted_alpha == 0.0) {
                accepted = t;
                accepted_alpha = alpha_try;
            }
            return std::pair<double, double>(t.loss, dphi);
        };
        accepted.loss = std::numeric_limits<double>::infinity();

        LineSearchResult ls = wolfe_line_search(eval, loss, dphi0, opts.wolfe_c1, opts.wolfe_c2,
                                                opts.max_line_search);
        res.iterations = iter + 1;
        if (!ls.ok) {
            if (accepted_alpha > 0.0 && accepted.loss < loss) {
                // Keep the best decreasing point found, then stop.
                a = accepted.a;
                loss = accepted.loss;
                res.loss_trace.push_back(loss);
            }
            res.line_search_warning = true;
            break;
        }
        if (ls.alpha != accepted_alpha) eval(ls.alpha);

        Matrix step = tangent_project(accepted.a, accepted_alpha * dir);
        Matrix ydiff = accepted.grad - tangent_project(accepted.a, grad);
        const double sy = frob_dot(step, ydiff);
        // Transport the stored pairs to the new tangent space.
        for (auto& pair : memory) {
            pair.s = tangent_project(accepted.a, pair.s);
            pair.y = tangent_project(accepted.a, pair.y);
            pair.rho = 1.0 / frob_dot(pair.s, pair.y);
        }
        std::erase_if(memory, [](const Pair& pr) {
            return !(pr.rho > 0.0) || !std::isfinite(pr.rho);
        });
        if (sy > 1e-12 * step.norm() * ydiff.norm()) {
            memory.push_back(Pair{std::move(step), std::move(ydiff), 1.0 / sy});
            if (static_cast<int>(memory.size()) > opts.memory) memory.pop_front();
        }

        a = std::move(accepted.a);
        grad = std::move(accepted.grad);
        loss = accepted.loss;
        res.loss_trace.push_back(loss);
    }

    if (grad.norm() <= opts.grad_tol * std::max(1.0, std::abs(loss))) res.converged = true;
    res.a = std::move(a);
    res.loss = loss;
    return res;
}

Matrix make_ldr_start(LdrStart kind, int d, int horizon, int p, std::uint64_t seed) {
    const int n = d * horizon;
    if (d < 1 || horizon < 1) throw std::invalid_argument("make_ldr_start: bad (d, T)");
    if (p < 1 || p > n) throw std::invalid_argument("make_ldr_start: need 1 <= p <= dT");

    Matrix a = Matrix::Zero(n, p);
    switch (kind) {
        case LdrStart::folding: {
            if (p < d) throw std::invalid_argument("make_ldr_start: folding needs p >= d");
            if (p == d) {
                // Sum each driver component across time.
                const double w = 1.0 / std::sqrt(static_cast<double>(horizon));
                for (int t = 0; t < horizon; ++t)
                    for (int j = 0; j < d; ++j) a(t * d + j, j) = w;
            } else if (p <= 2 * d && horizon >= 2) {
                // First-year components get their own columns; later years
                // fold per component.
                for (int j = 0; j < d; ++j) a(j, j) = 1.0;
                const double w = 1.0 / std::sqrt(static_cast<double>(horizon - 1));
                for (int k = 0; k < p - d; ++k)
                    for (int t = 1; t < horizon; ++t) a(t * d + k, d + k) = w;
            } else {
                throw std::invalid_argument(
                    "make_ldr_start: folding needs d <= p <= 2d (and T >= 2 when p > d)");
            }
            return a;
        }
        case LdrStart::diagonal: {
            for (int j = 0; j + 1 < p; ++j) a(j, j) = 1.0;
            const double w = 1.0 / std::sqrt(static_cast<double>(n - p + 1));
            for (int i = p - 1; i < n; ++i) a(i, p - 1) = w;
            return a;
        }
        case LdrStart::random: {
            Rng rng(derive_seed(seed, kLdrStartTag));
            Matrix b(n, p);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < p; ++j) b(i, j) = rng.next_normal();
            return polar_orthonormalize(b);
        }
    }
    throw std::invalid_argument("make_ldr_start: unknown kind");
}

// ReLU network training -------------------------------------------------------

namespace {

struct ReluPack {
    int dims, nodes;
    Eigen::Index size() const { return static_cast<Eigen::Index>(dims) * nodes + 2 * nodes; }

    Matrix weights(const Vector& theta) const {
        return Eigen::Map<const Matrix>(theta.data(), dims, nodes);
    }
    Vector bias(const Vector& theta) const {
        return theta.segment(static_cast<Eigen::Index>(dims) * nodes, nodes);
    }
    Vector beta(const Vector& theta) const { return theta.tail(nodes); }
};

struct LbfgsOutcome {
    Vector x;
    double loss = 0.0;
    int iterations = 0;
    bool converged = false;
    bool ls_warning = false;
    std::vector<double> trace;
};

LbfgsOutcome lbfgs_minimize(const std::function<double(const Vector&, Vector*)>& objective,
                            Vector x0, double grad_tol, int max_iter, int mem_size, double c1,
                            double c2, int max_ls) {
    LbfgsOutcome res;
    Vector x = std::move(x0);
    Vector grad(x.size());
    double loss = objective(x, &grad);
    if (!std::isfinite(loss)) throw NumericalError("lbfgs_minimize: non-finite initial loss");
    res.trace.push_back(loss);

    struct Pair {
        Vector s, y;
        double rho;
    };
    std::deque<Pair> memory;

    for (int iter = 0; iter < max_iter; ++iter) {
        if (grad.lpNorm<Eigen::Infinity>() <= grad_tol * std::max(1.0, std::abs(loss))) {
            res.converged = true;
            break;
        }
        Vector q = grad;
        std::vector<double> alpha_coef(memory.size());
        for (int i = static_cast<int>(memory.size()) - 1; i >= 0; --i) {
            alpha_coef[i] = memory[i].rho * memory[i].s.dot(q);
            q -= alpha_coef[i] * memory[i].y;
        }
        if (!memory.empty())
            q *= memory.back().s.dot(memory.back().y) / memory.back().y.squaredNorm();
        for (std::size_t i = 0; i < memory.size(); ++i) {
            const double b = memory[i].rho * memory[i].y.dot(q);
            q += (alpha_coef[i] - b) * memory[i].s;
        }
        Vector dir = -q;
        double dphi0 = grad.dot(dir);
        if (dphi0 >= 0.0) {
            dir = -grad;
            dphi0 = -grad.squaredNorm();
            memory.clear();
        }

        struct Trial {
            Vector x, grad;
            double loss = std::numeric_limits<double>::infinity();
        };
        Trial accepted;
        double accepted_alpha = 0.0;
        auto eval = [&](double alpha_try) {
            Trial t;
            t.x = x + alpha_try * dir;
            t.grad.resize(x.size());
            t.loss = objective(t.x, &t.grad);
            const double dphi = t.grad.dot(dir);
            if (t.loss <= accepted.loss || accepted_alpha == 0.0) {
                accepted = t;
                accepted_alpha = alpha_try;
            }
            return std::pair<double, double>(t.loss, dphi);
        };

        LineSearchResult ls = wolfe_line_search(eval, loss, dphi0, c1, c2, max_ls);
        res.iterations = iter + 1;
        if (!ls.ok) {
            if (accepted_alpha > 0.0 && accepted.loss < loss) {
                x = accepted.x;
                loss = accepted.loss;
                res.trace.push_back(loss);
            }
            res.ls_warning = true;
            break;
        }
        if (ls.alpha != accepted_alpha) eval(ls.alpha);

        Vector step = accepted.x - x;
        Vector ydiff = accepted.grad - grad;
        const double sy = step.dot(ydiff);
        if (sy > 1e-12 * step.norm() * ydiff.norm()) {
            memory.push_back(Pair{std::move(step), std::move(ydiff), 1.0 / sy});
            if (static_cast<int>(memory.size()) > mem_size) memory.pop_front();
        }
        x = std::move(accepted.x);
        grad = std::move(accepted.grad);
        loss = accepted.loss;
        res.trace.push_back(loss);
    }

    if (grad.lpNorm<Eigen::Infinity>() <= grad_tol * std::max(1.0, std::abs(loss)))
        res.converged = true;
    res.x = std::move(x);
    res.loss = loss;
    return res;
}

} // namespace

double relu_training_objective(const Matrix& x, const Vector& y, const Vector& theta, int nodes,
                               Vector* grad) {
    const int n = static_cast<int>(x.rows());
    const int dims = static_cast<int>(x.cols());
    const ReluPack pack{dims, nodes};
    if (theta.size() != pack.size())
        throw std::invalid_argument("relu_training_objective: parameter size mismatch");
    Eigen::Map<const Matrix> a(theta.data(), dims, nodes);
    Vector b = pack.bias(theta);
    Vector beta = pack.beta(theta);
    Matrix z = (x * a).rowwise() + b.transpose();
    Matrix h = z.cwiseMax(0.0);
    Vector err = h * beta - y;
    const double loss = err.squaredNorm() / n;
    if (grad) {
        grad->resize(theta.size());
        Eigen::Map<Matrix> ga(grad->data(), dims, nodes);
        // Subgradient 0 at the kink: the mask is z > 0 strictly.
        Matrix mask = (z.array() > 0.0).cast<double>();
        Matrix dz = (err * beta.transpose()).cwiseProduct(mask) * (2.0 / n);
        ga = x.transpose() * dz;
        grad->segment(static_cast<Eigen::Index>(dims) * nodes, nodes) = dz.colwise().sum();
        grad->tail(nodes) = (2.0 / n) * (h.transpose() * err);
    }
    return loss;
}

ReluTrainResult train_relu_net(const TrainingSet& train, const FitConfig& cfg,
                               const ReluNetSpec* warm, const Vector* warm_beta) {
    train.validate();
    cfg.validate();
    const int dims = static_cast<int>(train.x.cols());
    const int m = cfg.relu_nodes;
    const int bias_node = m - 1;
    const ReluPack pack{dims, m};

    Rng rng(derive_seed(cfg.seed, kReluInitTag));
    Vector theta = Vector::Zero(pack.size());
    if (warm) {
        if (warm->dims() != dims || warm->nodes() != m)
            throw std::invalid_argument("train_relu_net: warm start has wrong shape");
        Eigen::Map<Matrix> a(theta.data(), dims, m);
        a = warm->weights;
        theta.segment(static_cast<Eigen::Index>(dims) * m, m) = warm->bias;
        if (warm_beta && warm_beta->size() == m) {
            theta.tail(m) = *warm_beta;
        } else {
            Matrix h = ((train.x * a).rowwise() + warm->bias.transpose()).cwiseMax(0.0);
            theta.tail(m) = ols_fit(h, train.y).beta;
        }
    } else {
        Eigen::Map<Matrix> a(theta.data(), dims, m);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dims));
        for (int j = 0; j < m - 1; ++j)
            for (int i = 0; i < dims; ++i) a(i, j) = scale * rng.next_normal();
        for (int j = 0; j < m - 1; ++j)
            theta[static_cast<Eigen::Index>(dims) * m + j] = 0.5 * rng.next_normal();
        theta[static_cast<Eigen::Index>(dims) * m + bias_node] = 1.0; // frozen pure-bias node
        // Closed-form beta at the initial weights.
        Matrix h = ((train.x * a).rowwise() + pack.bias(theta).transpose()).cwiseMax(0.0);
        theta.tail(m) = ols_fit(h, train.y).beta;
    }

    auto objective = [&](const Vector& th, Vector* grad) -> double {
        const double loss = relu_training_objective(train.x, train.y, th, m, grad);
        if (grad) {
            // Frozen pure-bias node: keep (a, b) = (0, 1).
            Eigen::Map<Matrix> ga(grad->data(), dims, m);
            ga.col(bias_node).setZero();
            (*grad)[static_cast<Eigen::Index>(dims) * m + bias_node] = 0.0;
        }
        return loss;
    };

    LbfgsOutcome opt = lbfgs_minimize(objective, std::move(theta), cfg.grad_tol, cfg.max_iter,
                                      cfg.lbfgs_memory, cfg.wolfe_c1, cfg.wolfe_c2, 40);
    if (!std::isfinite(opt.loss))
        throw NumericalError("train_relu_net: non-finite loss after " +
                             std::to_string(opt.iterations) + " iterations");

    Matrix a = pack.weights(opt.x);
    Vector b = pack.bias(opt.x);
    Vector beta = pack.beta(opt.x);
    // Canonical normalization: scale each (a_i, b_i) to unit norm and fold
    // the scale into beta (positive homogeneity).
    for (int j = 0; j < m; ++j) {
        if (j == bias_node) continue;
        const double s = std::sqrt(a.col(j).squaredNorm() + b[j] * b[j]);
        if (s > 0.0) {
            a.col(j) /= s;
            b[j] /= s;
            beta[j] *= s;
        } else {
            beta[j] = 0.0;
        }
    }
    a.col(bias_node).setZero();
    b[bias_node] = 1.0;

    ReluTrainResult out{ReluNetSpec::make(a, b), std::move(beta), {}};
    out.diagnostics.residual = std::sqrt(opt.loss);
    out.diagnostics.iterations = opt.iterations;
    out.diagnostics.converged = opt.converged;
    out.diagnostics.line_search_warning = opt.ls_warning;
    out.diagnostics.loss_trace = std::move(opt.trace);
    return out;
}

// Lasso ------------------------------------------------------------------

namespace {

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

// Coordinate descent on centered data. Columns with zero variance are inert.
void lasso_cd(const Matrix& xc, const Vector& yc, const Vector& col_sq, double lambda,
              Vector& beta, const LassoOptions& opts) {
    const int n = static_cast<int>(xc.rows());
    const int m = static_cast<int>(xc.cols());
    Vector resid = yc - xc * beta;
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (int j = 0; j < m; ++j) {
            if (col_sq[j] <= 0.0) continue;
            const double old = beta[j];
            const double rho = xc.col(j).dot(resid) / n + col_sq[j] * old;
            const double updated = soft_threshold(rho, lambda) / col_sq[j];
            if (updated != old) {
                resid -= (updated - old) * xc.col(j);
                beta[j] = updated;
                max_change = std::max(max_change, std::abs(updated - old) * std::sqrt(col_sq[j]));
            }
        }
        if (max_change <= opts.tol) break;
    }
}

struct CenteredDesign {
    Matrix xc;
    Vector yc;
    Vector col_mean;
    Vector col_sq; // ||xc_j||^2 / n
    double y_mean;
};

CenteredDesign center(const Matrix& phi, const Vector& y) {
    CenteredDesign d;
    d.col_mean = phi.colwise().mean();
    d.xc = phi.rowwise() - d.col_mean.transpose();
    d.y_mean = y.mean();
    d.yc = y.array() - d.y_mean;
    d.col_sq = d.xc.colwise().squaredNorm() / static_cast<double>(phi.rows());
    return d;
}

// Map the centered solution back, folding the intercept into an exactly
// constant column when one exists.
Vector uncenter(const Matrix& phi, const CenteredDesign& d, const Vector& beta) {
    Vector out = beta;
    const double intercept = d.y_mean - d.col_mean.dot(beta);
    for (int j = 0; j < phi.cols(); ++j) {
        if (d.col_sq[j] == 0.0 && d.col_mean[j] != 0.0) {
            out[j] = intercept / d.col_mean[j];
            return out;
        }
    }
    return out; // no constant column; intercept is dropped
}

} // namespace

Vector lasso_solve(const Matrix& phi, const Vector& y, double lambda, const LassoOptions& opts) {
    if (phi.rows() != y.size()) throw std::invalid_argument("lasso_solve: row count mismatch");
    CenteredDesign d = center(phi, y);
    Vector beta = Vector::Zero(phi.cols());
    lasso_cd(d.xc, d.yc, d.col_sq, lambda, beta, opts);
    return uncenter(phi, d, beta);
}

LassoResult lasso_fit(const Matrix& phi, const Vector& y, const LassoOptions& opts) {
    if (phi.rows() != y.size()) throw std::invalid_argument("lasso_fit: row count mismatch");
    const int n = static_cast<int>(phi.rows());
    CenteredDesign d = center(phi, y);

    const double lambda_max = (d.xc.transpose() * d.yc).cwiseAbs().maxCoeff() / n;
    if (!(lambda_max > 0.0)) {
        // Constant target: intercept-only model at any lambda.
        LassoResult out;
        out.beta = uncenter(phi, d, Vector::Zero(phi.cols()));
        out.lambda = 0.0;
        out.aic = -std::numeric_limits<double>::infinity();
        return out;
    }

    LassoResult out;
    Vector beta = Vector::Zero(phi.cols());
    double best_aic = std::numeric_limits<double>::infinity();
    const double ratio = std::pow(opts.lambda_min_ratio, 1.0 / (opts.path_length - 1));
    // Dense active sets near the end of the path are never AIC-optimal and
    // make the debiased refit expensive; skip them.
    const int refit_cap = std::min(n / 2, 500);
    double lambda = lambda_max;
    for (int step = 0; step < opts.path_length; ++step, lambda *= ratio) {
        lasso_cd(d.xc, d.yc, d.col_sq, lambda, beta, opts);
        if (!beta.allFinite()) {
            std::ostringstream msg;
            msg << "lasso_fit: non-finite coefficients at lambda " << lambda << "; path so far:";
            for (double l : out.lambda_trace) msg << ' ' << l;
            throw NumericalError(msg.str());
        }
        std::vector<int> active;
        for (int j = 0; j < beta.size(); ++j)
            if (beta[j] != 0.0) active.push_back(j);
        const int k = static_cast<int>(active.size());
        // AIC on the debiased fit: the lasso selects the support, the RSS
        // comes from the OLS refit on it (df = active count).
        double aic = std::numeric_limits<double>::infinity();
        if (k == 0) {
            aic = n * std::log(std::max(d.yc.squaredNorm(), 1e-300) / n);
        } else if (k <= refit_cap) {
            Matrix sub(n, k);
            for (int c = 0; c < k; ++c) sub.col(c) = d.xc.col(active[c]);
            const OlsResult refit = ols_fit(sub, d.yc);
            const double rss = refit.residual * refit.residual * n;
            aic = n * std::log(std::max(rss, 1e-300) / n) + 2.0 * k;
        }
        out.lambda_trace.push_back(lambda);
        out.aic_trace.push_back(aic);
        out.active_trace.push_back(k);
        if (aic < best_aic) {
            best_aic = aic;
            out.beta = beta;
            out.lambda = lambda;
            out.aic = aic;
        }
    }
    out.beta = uncenter(phi, d, out.beta);
    return out;
}

// Top-level fits ----------------------------------------------------------

namespace {

FeatureMapSpec build_polynomial_spec(int dims, const FitConfig& cfg) {
    const std::int64_t m = basis_size(dims, cfg.delta);
    if (m > cfg.basis_cap) {
        std::ostringstream msg;
        msg << "full polynomial basis on " << dims << " dimensions at degree " << cfg.delta
            << " has " << m << " elements, above the configured cap " << cfg.basis_cap
            << "; raise the cap explicitly or use a reduced family";
        throw ConfigError(msg.str());
    }
    FeatureMapSpec spec;
    spec.driver_dim = cfg.driver_dim;
    spec.family = FullHermiteSpec::make(dims, cfg.delta);
    return spec;
}

} // namespace

StiefelObjective concentrated_ldr_objective(const TrainingSet& train,
                                            const MultiIndexBasis& basis) {
    return [&train, basis](const Matrix& a, Matrix* grad) -> double {
        Matrix yproj = train.x * a;
        Matrix phi = hermite_design_matrix(yproj, basis);
        OlsResult ols = ols_fit(phi, train.y);
        Vector resid = phi * ols.beta - train.y;
        if (grad) {
            Matrix w = hermite_weighted_gradient(yproj, basis, ols.beta);
            w.array().colwise() *= resid.array();
            *grad = (2.0 / train.x.rows()) * (train.x.transpose() * w);
        }
        return resid.squaredNorm() / train.x.rows();
    };
}

namespace {

ReplicatingMartingale fit_regress_later_impl(const TrainingSet& train, const FitConfig& cfg,
                                             const ReplicatingMartingale* warm) {
    train.validate();
    cfg.validate();
    const int dims = static_cast<int>(train.x.cols());
    if (dims % cfg.driver_dim != 0)
        throw std::invalid_argument("fit_regress_later: sample dims not a multiple of driver_dim");
    const int horizon = dims / cfg.driver_dim;

    ReplicatingMartingale model;
    switch (cfg.family) {
        case FitFamily::full_hermite: {
            model.spec = build_polynomial_spec(dims, cfg);
            Matrix phi = eval_features_batch(train.x, model.spec);
            OlsResult ols = ols_fit(phi, train.y);
            model.beta = std::move(ols.beta);
            model.diagnostics.residual = ols.residual;
            model.diagnostics.jitter_used = ols.jitter_used;
            break;
        }
        case FitFamily::lasso_full_poly: {
            model.spec = build_polynomial_spec(dims, cfg);
            Matrix phi = eval_features_batch(train.x, model.spec);
            LassoResult lasso = lasso_fit(phi, train.y);
            model.beta = std::move(lasso.beta);
            model.diagnostics.residual =
                (train.y - phi * model.beta).norm() / std::sqrt(static_cast<double>(phi.rows()));
            break;
        }
        case FitFamily::poly_ldr: {
            if (cfg.p > dims) throw ConfigError("fit_regress_later: p exceeds dT");
            MultiIndexBasis basis = MultiIndexBasis::build(cfg.p, cfg.delta);
            StiefelObjective objective = concentrated_ldr_objective(train, basis);
            Matrix a0 = make_ldr_start(cfg.ldr_start, cfg.driver_dim, horizon, cfg.p, cfg.seed);
            if (warm) {
                const auto* prior = std::get_if<PolyLdrSpec>(&warm->spec.family);
                if (!prior || prior->dims() != dims || prior->reduced_dim() != cfg.p)
                    throw std::invalid_argument("fit_regress_later: warm start has wrong shape");
                a0 = prior->stiefel_a;
            }
            StiefelOptions opts;
            opts.grad_tol = cfg.grad_tol;
            opts.max_iter = cfg.max_iter;
            opts.memory = cfg.lbfgs_memory;
            opts.wolfe_c1 = cfg.wolfe_c1;
            opts.wolfe_c2 = cfg.wolfe_c2;
            StiefelResult sr = riemannian_bfgs_stiefel(objective, a0, opts);
            model.spec.driver_dim = cfg.driver_dim;
            model.spec.family = PolyLdrSpec::make(sr.a, cfg.delta);
            Matrix phi = eval_features_batch(train.x, model.spec);
            OlsResult ols = ols_fit(phi, train.y);
            model.beta = std::move(ols.beta);
            model.diagnostics.residual = ols.residual;
            model.diagnostics.jitter_used = ols.jitter_used;
            model.diagnostics.iterations = sr.iterations;
            model.diagnostics.converged = sr.converged;
            model.diagnostics.line_search_warning = sr.line_search_warning;
            model.diagnostics.loss_trace = std::move(sr.loss_trace);
            break;
        }
        case FitFamily::relu_net: {
            const ReluNetSpec* warm_spec = nullptr;
            const Vector* warm_beta = nullptr;
            if (warm) {
                warm_spec = std::get_if<ReluNetSpec>(&warm->spec.family);
                if (!warm_spec)
                    throw std::invalid_argument("fit_regress_later: warm start has wrong family");
                warm_beta = &warm->beta;
            }
            ReluTrainResult relu = train_relu_net(train, cfg, warm_spec, warm_beta);
            model.spec.driver_dim = cfg.driver_dim;
            model.spec.family = std::move(relu.spec);
            Matrix phi = eval_features_batch(train.x, model.spec);
            OlsResult ols = ols_fit(phi, train.y);
            model.beta = std::move(ols.beta);
            model.diagnostics = std::move(relu.diagnostics);
            model.diagnostics.residual = ols.residual;
            model.diagnostics.jitter_used = ols.jitter_used;
            break;
        }
    }
    return model;
}

} // namespace

ReplicatingMartingale fit_regress_later(const TrainingSet& train, const FitConfig& cfg) {
    return fit_regress_later_impl(train, cfg, nullptr);
}

ReplicatingMartingale fit_regress_later_warm(const TrainingSet& train, const FitConfig& cfg,
                                             const ReplicatingMartingale& warm) {
    return fit_regress_later_impl(train, cfg, &warm);
}

Vector RegressNowModel::predict(const Matrix& x_prefix) const {
    if (horizon == 0) return Vector::Constant(x_prefix.rows(), v0);
    return eval_features_batch(x_prefix, spec) * beta;
}

RegressNowModel fit_regress_now(const TrainingSet& train, int t, const FitConfig& cfg) {
    train.validate();
    cfg.validate();
    const int dims = static_cast<int>(train.x.cols());
    const int dt = cfg.driver_dim * t;
    if (t < 0 || dt > dims) throw std::invalid_argument("fit_regress_now: horizon out of range");

    RegressNowModel model;
    model.horizon = t;
    model.v0 = train.y.mean();
    if (t == 0) {
        model.spec.driver_dim = cfg.driver_dim;
        model.spec.family = FullHermiteSpec::make(1, 0);
        model.beta = Vector::Constant(1, model.v0);
        return model;
    }

    TrainingSet prefix{train.x.leftCols(dt), train.y};
    FitConfig sub = cfg;
    sub.mode = FitMode::regress_now;
    ReplicatingMartingale fitted = fit_regress_later(prefix, sub);
    model.spec = std::move(fitted.spec);
    model.beta = std::move(fitted.beta);
    model.diagnostics = std::move(fitted.diagnostics);
    return model;
}

} // namespace repmart
