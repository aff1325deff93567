#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace repmart {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// dim Pol_delta(R^q) = binom(q + delta, q). Throws std::overflow_error past 2^63.
std::int64_t basis_size(int q, int delta);

// dim V_p(R^n) = n p - p(p+1)/2, the free parameters of an orthonormal p-frame.
std::int64_t stiefel_dim(int n, int p);

// Probabilists' Hermite polynomials He_k, normalized so E[He_k(Z)^2] = k!.
double hermite_value(int k, double x);
// Fills out[0..delta] with He_0(x)..He_delta(x) by the three-term recurrence.
void hermite_values(int delta, double x, double* out);
// Monomial coefficients of He_k: He_k(x) = sum_j coeffs[j] x^j.
const std::vector<double>& hermite_monomial_coeffs(int k);

// All multi-indices alpha in N_0^dims with |alpha| <= degree, graded
// lexicographic order (total degree first, then lexicographic).
struct MultiIndexBasis {
    int dims = 0;
    int degree = 0;
    std::vector<std::vector<int>> indices;

    static MultiIndexBasis build(int dims, int degree);
    int size() const { return static_cast<int>(indices.size()); }
};

// Feature-map families -------------------------------------------------------

// Hermite products over all dT coordinates.
struct FullHermiteSpec {
    int dims = 0; // dT
    int degree = 3;
    MultiIndexBasis basis;

    static FullHermiteSpec make(int dims, int degree);
};

// Hermite-product basis of Pol_delta(R^p) composed with A^T x, A on the
// Stiefel manifold.
struct PolyLdrSpec {
    Matrix stiefel_a; // dT x p, A^T A = I_p
    int degree = 3;
    MultiIndexBasis basis; // on R^p

    static PolyLdrSpec make(const Matrix& a, int degree);
    int dims() const { return static_cast<int>(stiefel_a.rows()); }
    int reduced_dim() const { return static_cast<int>(stiefel_a.cols()); }
};

// Shallow ReLU layer phi_i(x) = (a_i^T x + b_i)^+. The last node is the pure
// bias node (a = 0, b = 1), kept frozen during training.
struct ReluNetSpec {
    Matrix weights; // dT x m, column i = a_i
    Vector bias;    // m

    static ReluNetSpec make(const Matrix& a, const Vector& b);
    int dims() const { return static_cast<int>(weights.rows()); }
    int nodes() const { return static_cast<int>(weights.cols()); }
    int bias_node() const { return nodes() - 1; }
};

struct FeatureMapSpec {
    std::variant<FullHermiteSpec, PolyLdrSpec, ReluNetSpec> family;
    int driver_dim = 1; // d; time blocks have this size

    int input_dims() const;    // dT
    int feature_count() const; // m
    int horizon() const { return input_dims() / driver_dim; }
    const char* family_name() const;
};

// Evaluation -----------------------------------------------------------------

Vector eval_features(std::span<const double> x, const FeatureMapSpec& spec);
// Rows of x are samples in R^{dT}; returns n x m.
Matrix eval_features_batch(const Matrix& x, const FeatureMapSpec& spec);

// General polynomial map g(A^T x + b) for arbitrary full-rank A (not
// necessarily orthonormal); used by span-equivalence checks.
Vector eval_poly_map(std::span<const double> x, const Matrix& a, const Vector& b,
                     const MultiIndexBasis& basis);

// Design matrix of the Hermite-product basis on the rows of y (n x q).
Matrix hermite_design_matrix(const Matrix& y, const MultiIndexBasis& basis);

// Row r gets d/dy sum_i weights_i g_i evaluated at y.row(r); returns n x q.
Matrix hermite_weighted_gradient(const Matrix& y, const MultiIndexBasis& basis,
                                 const Vector& weights);

// Conditional expectations G_t(x_{1:t}) = E[phi(X) | X_{1:t} = x_{1:t}] -------

// Full Hermite basis: product over observed blocks times the indicator that
// all future degrees vanish.
Vector hermite_conditional_expectation(std::span<const double> x_prefix,
                                       const MultiIndexBasis& basis, int t, int driver_dim);

// One term of the monomial decomposition y^alpha = sum coeff (h^T y)^{|alpha|}.
struct KanTerm {
    double coeff = 0.0;
    Vector direction; // h
    int power = 0;    // |alpha|
};

// Decomposition with the +/-h symmetry already folded in (paired terms carry
// a doubled coefficient, the zero-direction middle term is dropped).
std::vector<KanTerm> kan_monomial_decomposition(const std::vector<int>& alpha);

// k-th moment of N(mu, sigma^2).
double normal_moment(int k, double mu, double sigma);

Vector poly_ldr_conditional_expectation(std::span<const double> x_prefix,
                                        const PolyLdrSpec& spec, int t, int driver_dim);

Vector relu_conditional_expectation(std::span<const double> x_prefix,
                                    const ReluNetSpec& spec, int t, int driver_dim);

// E[Z^+] for Z ~ N(mu, sigma^2); the sigma = 0 branch returns mu^+.
double expected_positive_part(double mu, double sigma);

// Precomputed plan for evaluating G_t across many prefixes. Holds references
// into the spec, which must outlive the plan.
class CondExpPlan {
public:
    static CondExpPlan make(const FeatureMapSpec& spec, int t);

    Vector eval(std::span<const double> x_prefix) const;
    // Rows of x_prefix are prefixes in R^{d*t}; returns n x m.
    Matrix eval_batch(const Matrix& x_prefix) const;

    int horizon_t() const { return t_; }
    int prefix_dims() const { return prefix_dims_; }

private:
    struct HermitePlan {
        const FullHermiteSpec* spec;
        std::vector<int> alive; // basis indices with zero future degrees
    };
    struct LdrMomentTerm {
        double coeff;
        Vector h_proj; // h mapped through the prefix blocks of A (d*t)
        double sigma;  // std dev of h^T Y given the prefix
        int power;
    };
    struct LdrPlan {
        const PolyLdrSpec* spec;
        // Per feature: constant part plus moment terms.
        std::vector<double> constant;
        std::vector<std::vector<LdrMomentTerm>> terms;
    };
    struct ReluPlan {
        const ReluNetSpec* spec;
        Matrix a_prefix; // d*t x m
        Vector sigma;    // per node, sqrt(sum future ||a_s||^2)
    };

    std::variant<HermitePlan, LdrPlan, ReluPlan> plan_;
    const FeatureMapSpec* spec_ = nullptr;
    int t_ = 0;
    int prefix_dims_ = 0;
};

// Serialization (JSON text, lossless doubles) --------------------------------

std::string feature_map_to_json(const FeatureMapSpec& spec);
FeatureMapSpec feature_map_from_json(const std::string& text);

} // namespace repmart
