#pragma once

#include <string>
#include <vector>

#include "nestmi/dataset.hpp"
#include "nestmi/formula.hpp"

namespace nestmi {

// ===========================================================================
// Univariate two-level linear mixed models
// ===========================================================================
//
// y_ij = x_ij' beta + z_ij' b_j + e_ij,  b_j ~ N(0, G),  e_ij ~ N(0, sigma2).
//
// Estimation profiles beta and sigma2 out of the (restricted) likelihood and
// optimizes the relative covariance factor Lambda (G = sigma2 Lambda Lambda')
// over an unconstrained log-Cholesky vector theta with a derivative-free
// simplex. Diagonal entries of Lambda below 1e-8 are boundary solutions.

enum class EstMethod { ML, REML };

struct AnalysisModel {
    ModelFormula formula;  // exactly one response
    EstMethod method = EstMethod::REML;
};

struct LmmFit {
    std::vector<std::string> coef_names;
    Vector beta;
    Matrix vcov;  // of beta
    std::vector<std::string> random_names;
    Matrix G;  // q x q random-effects covariance
    double sigma2 = 0.0;
    double loglik = 0.0;    // ML log-likelihood, or -deviance/2 for REML
    double deviance = 0.0;  // profiled (RE)ML criterion at the optimum
    EstMethod method = EstMethod::REML;
    double df_com = 0.0;  // N - p, the complete-data residual df
    int n_obs = 0;
    int n_groups = 0;
    bool converged = false;
    bool boundary = false;  // some random-effect variance pinned at zero
    int n_evals = 0;

    int p() const { return static_cast<int>(beta.size()); }
    int q() const { return static_cast<int>(G.rows()); }
};

// Requires the model variables complete in `d`, N > p and J >= 2. Throws
// ValidationError on precondition violations and NumericalError (carrying the
// best deviance seen) when the optimizer exhausts its budget.
LmmFit fit_lmm(const AnalysisModel& model, const Dataset& d);

// Var(b0) / (Var(b0) + Var(e)) from an intercept-only fit; rejects fits with
// random slopes.
double icc(const LmmFit& fit);

// Exact ML log-likelihood at the supplied parameters, no optimization. G must
// be symmetric positive semidefinite and sigma2 > 0.
double loglik_at(const AnalysisModel& model, const Dataset& d, const Vector& beta,
                 const Matrix& G, double sigma2);

}  // namespace nestmi
