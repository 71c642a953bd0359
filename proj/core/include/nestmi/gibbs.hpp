#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "nestmi/chain_store.hpp"
#include "nestmi/dataset.hpp"
#include "nestmi/formula.hpp"
#include "nestmi/rng.hpp"

namespace nestmi {

// ===========================================================================
// Gibbs sampler for the multivariate linear mixed model
// ===========================================================================
//
// Model, for row i in group j:
//
//   y_ij = x_ij' beta + z_ij' b_j + e_ij,   e_ij ~ N(0, Sigma)   (r x r)
//   vec(b_j) ~ N(0, Psi)                                         (qr x qr)
//
// vec() stacks columns throughout the project; vec(b_j) therefore lists the
// q random effects of response 1, then response 2, and so on.
//
// One scan runs, in this fixed order: impute_missing, draw_b, draw_beta,
// draw_sigma, draw_psi. Everything downstream of the seed is deterministic.

// Inverse-Wishart priors on the covariances: Sigma ~ IW(nu_sigma,
// lambda_sigma) and Psi ~ IW(nu_psi, lambda_psi), so lambda acts as a prior
// sum of squares and the zero-residual posterior mean of Sigma is
// lambda_sigma / (N + nu_sigma - r - 1).
struct Prior {
    double nu_sigma = 0;  // >= r
    Matrix lambda_sigma;  // r x r, symmetric positive definite
    double nu_psi = 0;    // >= q*r
    Matrix lambda_psi;    // qr x qr, symmetric positive definite
};

// Weak data-scaled default: df equal to the matrix dimension, diagonal scales
// built from the observed-case variance of each response (replicated across
// that response's random-effect block for Psi). Zero, negative, or non-finite
// variance is rejected as degenerate.
Prior default_prior(int r, int q, const Vector& response_variances);

struct SamplerToggles {
    bool impute = true;
    bool b = true;
    bool beta = true;
    bool sigma = true;
    bool psi = true;
};

struct GibbsState {
    Matrix beta;            // p x r
    std::vector<Matrix> b;  // J matrices, each q x r
    Matrix psi;             // qr x qr
    Matrix sigma;           // r x r
    Matrix y_complete;      // N x r, observed cells fixed, missing cells current draws
    Rng rng;
    long iteration = 0;
};

// Mean-fill for missing responses, OLS for beta (ignoring grouping), zero
// random effects, prior scales for the covariances. Throws ValidationError
// for all-missing response columns and for collinear predictors.
GibbsState init_state(const DesignMatrices& design, const Prior& prior, std::uint64_t seed);

class GibbsSampler {
public:
    // Validates prior dimensions and definiteness against the design.
    GibbsSampler(const DesignMatrices& design, const Prior& prior, std::uint64_t seed);

    // Full conditionals. Each reads the current state and overwrites one
    // block; tests may call them individually. NumericalError on Cholesky
    // failures, tagged with the group or row concerned.
    void impute_missing();
    void draw_b();
    void draw_beta();
    void draw_sigma();
    void draw_psi();

    // One full scan honoring the toggles; increments the iteration counter
    // and raises NumericalError if any parameter became non-finite.
    void step();

    const GibbsState& state() const { return state_; }
    GibbsState& mutable_state() { return state_; }
    SamplerToggles& toggles() { return toggles_; }
    const DesignMatrices& design() const { return design_; }

private:
    DesignMatrices design_;
    Prior prior_;
    SamplerToggles toggles_;
    GibbsState state_;

    // Fixed for the life of the run: X and Z are complete by construction.
    Eigen::LLT<Matrix> xtx_llt_;
    std::vector<Matrix> ztz_;        // per group, q x q
    std::vector<int> group_of_row_;  // dense group code per data row

    Matrix zb_rows() const;  // N x r matrix with row i = z_i' b_{g(i)}
};

struct ImputationSpec {
    std::string formula;
    long n_burn = 0;      // >= 0
    long n_between = 1;   // >= 1, scans separating saved datasets
    int m = 1;            // >= 1, datasets to save
    std::uint64_t seed = 0;
    std::optional<Prior> prior;  // default_prior(r, q, data variances) when absent
    int trace_stride = 10;       // >= 1, store every trace_stride-th scan
    // Ignore the clustering: b stays zero and Psi is never drawn, reducing the
    // sampler to single-level joint-normal imputation. The formula keeps its
    // random block; it only stops mattering.
    bool flat = false;
};

struct ImputationResult {
    std::vector<Dataset> datasets;  // m completed copies of the input
    ChainStore chains;
    ImputationSpec spec;
    long total_iterations = 0;
    double wall_seconds = 0;
};

// Runs n_burn scans, then saves a completed dataset every n_between scans
// until m are collected. Traces cover every beta entry plus the lower
// triangles of Psi and Sigma (beta and Sigma only in flat mode), named
// Beta[i,j] / Psi[i,j] / Sigma[i,j] with 1-based indices. Saved datasets
// equal the input at observed cells. Identical spec and dataset give
// bit-identical results.
ImputationResult run_imputation(const ImputationSpec& spec, const Dataset& data);

}  // namespace nestmi
