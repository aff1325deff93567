#pragma once

#include "repmart/features.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace repmart {

struct TrainingSet {
    Matrix x; // n x dT driver samples
    Vector y; // terminal values f(x^(i))

    void validate() const; // n >= 1, all entries finite
};

struct FitDiagnostics {
    double residual = 0.0; // ||y - phi beta|| / sqrt(n)
    int iterations = 0;
    bool converged = true;
    bool jitter_used = false;
    bool line_search_warning = false;
    std::vector<double> loss_trace;
};

// Fitted model: feature map plus regression coefficients. The value process
// is V_t = G_t(x_{1:t})^T beta.
struct ReplicatingMartingale {
    FeatureMapSpec spec;
    Vector beta;
    FitDiagnostics diagnostics;
};

enum class FitMode { regress_later, regress_now };
enum class FitFamily { full_hermite, poly_ldr, relu_net, lasso_full_poly };
enum class LdrStart { folding, diagonal, random };

struct FitConfig {
    FitMode mode = FitMode::regress_later;
    FitFamily family = FitFamily::full_hermite;
    int driver_dim = 3;
    int delta = 3;
    int p = 3;           // LDR reduced dimension
    int relu_nodes = 101; // incl. the pure-bias node
    LdrStart ldr_start = LdrStart::folding;

    double grad_tol = 1e-7;
    int max_iter = 500;
    int lbfgs_memory = 10;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    std::int64_t basis_cap = 20000; // refuse larger full-polynomial bases
    std::uint64_t seed = 0;

    void validate() const;
};

struct OlsResult {
    Vector beta;
    double residual; // ||y - phi beta|| / sqrt(n)
    bool jitter_used = false;
};

// beta = (Phi^T Phi / n)^{-1} (Phi^T y / n). Adds a ridge of
// 1e-10 * trace/m on factorization failure; throws SingularMatrixError if
// that still fails.
OlsResult ols_fit(const Matrix& phi, const Vector& y);

ReplicatingMartingale fit_regress_later(const TrainingSet& train, const FitConfig& cfg);

// Same fit, but the optimizers start from a previously fitted model instead
// of the configured starting point (closed-form families just refit).
ReplicatingMartingale fit_regress_later_warm(const TrainingSet& train, const FitConfig& cfg,
                                             const ReplicatingMartingale& warm);

// Direct estimator of V_t from features of the prefix x_{1:t}.
struct RegressNowModel {
    FeatureMapSpec spec; // built on R^{d*t}; unused when horizon == 0
    Vector beta;
    double v0 = 0.0; // intercept-only estimate (training-sample mean)
    int horizon = 0;
    FitDiagnostics diagnostics;

    Vector predict(const Matrix& x_prefix) const;
};

RegressNowModel fit_regress_now(const TrainingSet& train, int t, const FitConfig& cfg);

// Riemannian L-BFGS on the Stiefel manifold ---------------------------------

struct StiefelOptions {
    double grad_tol = 1e-7;
    int max_iter = 500;
    int memory = 10;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    int max_line_search = 30;
};

struct StiefelResult {
    Matrix a;
    double loss = 0.0;
    int iterations = 0;
    bool converged = false;
    bool line_search_warning = false;
    std::vector<double> loss_trace;
};

// objective(A, grad) returns the loss and, when grad != nullptr, fills the
// Euclidean gradient dL/dA. Iterates stay orthonormal (polar retraction).
using StiefelObjective = std::function<double(const Matrix&, Matrix*)>;

StiefelResult riemannian_bfgs_stiefel(const StiefelObjective& objective, const Matrix& a0,
                                      const StiefelOptions& opts);

// Starting points for the LDR optimization: "folding" sums driver components
// across time, "diagonal" groups the trailing dimensions into the last
// column, "random" is uniform on the Stiefel manifold.
Matrix make_ldr_start(LdrStart kind, int d, int horizon, int p, std::uint64_t seed);

// Concentrated least-squares objective L(A) = min_beta ||y - Phi_A beta||^2/n
// on the Stiefel manifold, with the Euclidean gradient obtained by envelope
// differentiation through the inner OLS solve. The training set must outlive
// the returned functor.
StiefelObjective concentrated_ldr_objective(const TrainingSet& train,
                                            const MultiIndexBasis& basis);

// Shallow ReLU network training ----------------------------------------------

// Mean squared error of the network over the packed parameters
// theta = [vec(A) column-major | b | beta]; fills the full analytic gradient
// (no freezing) when grad != nullptr. Subgradient at the kink is 0.
double relu_training_objective(const Matrix& x, const Vector& y, const Vector& theta, int nodes,
                               Vector* grad);

struct ReluTrainResult {
    ReluNetSpec spec;
    Vector beta;
    FitDiagnostics diagnostics;
};

// Joint quasi-Newton (L-BFGS) minimization of the mean squared error over
// (A, b, beta); the pure-bias node stays frozen at (a, b) = (0, 1). Node
// scales are folded into beta afterwards. warm, when given, replaces the
// random initialization.
ReluTrainResult train_relu_net(const TrainingSet& train, const FitConfig& cfg,
                               const ReluNetSpec* warm = nullptr,
                               const Vector* warm_beta = nullptr);

// Lasso with AIC model selection ----------------------------------------------

struct LassoOptions {
    int path_length = 100;
    double lambda_min_ratio = 1e-4;
    int max_sweeps = 1000;
    double tol = 1e-10;
};

struct LassoResult {
    Vector beta;        // over the full feature set, constant column included
    double lambda = 0.0;
    double aic = 0.0;
    std::vector<double> lambda_trace;
    std::vector<double> aic_trace;
    std::vector<int> active_trace;
};

// Coordinate descent at a fixed lambda, objective (1/2n)||y - phi b||^2 +
// lambda ||b||_1 over centered columns with an unpenalized intercept.
Vector lasso_solve(const Matrix& phi, const Vector& y, double lambda,
                   const LassoOptions& opts = {});

// Regularization path with warm starts. Lambda is picked by AIC with degrees
// of freedom equal to the active-set size; the AIC residual comes from an
// OLS refit on the active set (the lasso fit alone is shrunk, which would
// bias the criterion toward dense solutions). Returns the lasso coefficients
// at the selected lambda.
LassoResult lasso_fit(const Matrix& phi, const Vector& y, const LassoOptions& opts = {});

} // namespace repmart
