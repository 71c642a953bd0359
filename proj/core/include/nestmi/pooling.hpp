#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nestmi/dataset.hpp"
#include "nestmi/lmm.hpp"
#include "nestmi/rng.hpp"

namespace nestmi {

// ===========================================================================
// Pooling repeated-imputation analyses
// ===========================================================================

// Rubin's rules for one scalar parameter estimated on each of m completed
// datasets:
//
//   Qbar = mean estimate            Ubar = mean within variance
//   B    = sample variance of the estimates
//   T    = Ubar + (1 + 1/m) B       r = (1 + 1/m) B / Ubar
//   nu   = (m - 1)(1 + 1/r)^2       fmi = (r + 2/(nu + 3)) / (r + 1)
//
// B = 0 gives r = 0, nu = +inf (printed "Inf") and fmi = 0; p-values then
// use the normal limit of the t distribution.
struct PoolSummary {
    double estimate = 0;  // Qbar
    double ubar = 0;
    double between = 0;  // B
    double total = 0;    // T
    double se = 0;       // sqrt(T)
    double tstat = 0;
    double nu = 0;  // +inf when B = 0
    double p = 1;
    double riv = 0;  // r
    double fmi = 0;
};

// pre: at least two estimates, one within variance per estimate.
PoolSummary pool_scalar(const std::vector<double>& estimates,
                        const std::vector<double>& within_variances);

// Small-sample degrees of freedom: with gamma = (1 + 1/m) B / T and
// nu_obs = ((df_com + 1)/(df_com + 3)) df_com (1 - gamma), the adjusted df
// is the harmonic combination (1/nu + 1/nu_obs)^-1, never exceeding either.
double barnard_rubin_df(int m, double between, double within, double df_com);

// Per-coefficient Rubin pooling of m mixed-model fits plus plain-mean pooled
// variance components (point estimates only, no standard errors). All fits
// must share their coefficient and random-effect names. With `small_sample`,
// the Barnard-Rubin df replaces the Rubin df for every coefficient and the
// p-values and FMIs are computed from the adjusted df.
struct PooledEstimates {
    std::vector<std::string> names;
    std::vector<PoolSummary> params;
    std::vector<std::string> component_names;  // Var(..) / Cov(..) / Var(Residual)
    std::vector<double> components;
    int m = 0;
    double df_com = 0;
    bool small_sample = false;
};

PooledEstimates pool_estimates(const std::vector<LmmFit>& fits, bool small_sample = false);

// Estimate / Std.Error / t.value / df / p.value / RIV / FMI table followed by
// the variance-component block.
void write_pooled_estimates(const PooledEstimates& e, std::ostream& out);

// ---------------------------------------------------------------------------
// Constraint expressions
// ---------------------------------------------------------------------------

// Arithmetic over named parameters: +, -, *, /, unary minus, parentheses and
// numeric literals. Parameter names are matched greedily against the supplied
// list before anything else, so names containing punctuation — "(Intercept)"
// in particular — work without quoting. ParseError carries the byte offset;
// unknown names are reported at parse time.
class Constraint {
public:
    Constraint(const std::string& text, const std::vector<std::string>& names);

    double value(const Vector& params) const;  // params aligned with `names`
    const std::string& text() const { return text_; }
    int n_params() const { return n_params_; }

private:
    enum class Kind { number, param, negate, binary };
    struct Node {
        Kind kind;
        double num = 0;
        int param = -1;
        char op = 0;
        int lhs = -1, rhs = -1;
    };
    std::vector<Node> nodes_;
    int root_ = -1;
    int n_params_ = 0;
    std::string text_;

    double eval(int node, const Vector& params) const;
};

// g(theta) and its delta-method variance grad' V grad, with the gradient by
// central differences using step 1e-6 * max(1, |theta_i|).
struct DeltaResult {
    double value = 0;
    double variance = 0;
};

DeltaResult delta_method(const Vector& estimates, const Matrix& vcov, const Constraint& g);

// ---------------------------------------------------------------------------
// Pooled multiparameter tests
// ---------------------------------------------------------------------------

struct DTestResult {
    double F = 0;
    int df1 = 0;
    double df2 = 0;  // +inf in zero-variance limits (printed "Inf")
    double p = 1;
    double r = 0;                    // procedure-specific variance-increase measure
    std::string procedure;           // "D1", "D2" or "D3"
    std::vector<std::string> notes;  // clamps, floors, unequal-FMI diagnostics
};

// D1: pooled Wald test of the k constraints being simultaneously zero.
// Per imputation the delta method yields a k-vector and its covariance;
// with Qbar, Ubar, B their pooled analogues,
//   r1 = (1 + 1/m) tr(B Ubar^-1) / k,  F = Qbar' Ubar^-1 Qbar / (k (1 + r1)),
// df2 = 4 + (k(m-1) - 4)(1 + (1 - 2/(k(m-1))) / r1)^2 when k(m-1) > 4 and
// k(m-1)(1 + 1/k)(1 + 1/r1)^2 / 2 otherwise; r1 = 0 sends df2 to +inf.
DTestResult pool_constraints(const std::vector<LmmFit>& fits,
                             const std::vector<std::string>& constraints);

// D2: pooling of m chi-square statistics with common df k:
//   r2 = (1 + 1/m) var(sqrt(stats)),
//   F  = (dbar/k - ((m+1)/(m-1)) r2) / (1 + r2), floored at zero,
//   df2 = k^(-3/m) (m-1)(1 + 1/r2)^2.
DTestResult pool_chisq_d2(const std::vector<double>& stats, int k);

// D3: pooled likelihood-ratio test of two nested ML fits over the same m
// datasets. dbar averages the per-dataset LRT statistics; dtilde averages
// the LRT re-evaluated at the across-imputation average parameters,
//   r3 = ((m+1)/(k(m-1)))(dbar - dtilde)   (clamped at 0 with a note),
//   F  = dtilde / (k (1 + r3)),
// df2 as in D1 with r3. k is the difference in total parameter count
// (p + q(q+1)/2 + 1); identical counts degenerate to F = 0, p = 1, and REML
// fits are rejected since their likelihoods are not comparable.
DTestResult pool_lrt_d3(const std::vector<LmmFit>& fits_full,
                        const std::vector<LmmFit>& fits_null,
                        const AnalysisModel& model_full, const AnalysisModel& model_null,
                        const std::vector<Dataset>& datasets);

void write_dtest(const DTestResult& t, std::ostream& out);

}  // namespace nestmi
